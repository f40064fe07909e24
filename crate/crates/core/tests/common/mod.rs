#![allow(dead_code)]

pub mod geometry;
pub mod oracles;
