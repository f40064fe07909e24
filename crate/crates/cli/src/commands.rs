//! One function per subcommand. Dataset layout under `dataset_root`:
//! `drives.toml` (the planned drives), `samples/` (every sample plus `manifest.csv`)
//! and `splits/<role>.csv` (manifest subsets written by `split`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gripmap::evaluation::{
    evaluate, predict_maps, render_overlay, run_ablation, scatter_sample, track_band_means, write_ablation_table,
    write_png, write_scatter, AblationPlan, AblationRow, EvalReport, EvalSet, LabelPredictor, ModelPredictor,
    OraclePredictor, TrackBands,
};
use gripmap::model::{modalities_label, parse_modalities, read_checkpoint, write_checkpoint, ModelParams};
use gripmap::pipeline::{
    generate_dataset, geofence_split, plan_drives, read_manifest, read_sample, write_manifest, DriveSpec,
    ManifestEntry, Sample, SplitDir, SplitRole, MANIFEST,
};
use gripmap::training::{train, write_epoch_logs, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::fsutil::{atomic_dir, atomic_file};

pub const DRIVES_FILE: &str = "drives.toml";
pub const SAMPLES_DIR: &str = "samples";
pub const SPLITS_DIR: &str = "splits";
pub const CHECKPOINT_FILE: &str = "model.gmck";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const EVAL_REPORT_FILE: &str = "eval_report.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const OVERLAY_DIR: &str = "overlays";

#[derive(Serialize, Deserialize)]
struct DriveList {
    drive: Vec<DriveSpec>,
}

pub fn read_drives(root: &Path) -> Result<Vec<DriveSpec>> {
    let path = root.join(DRIVES_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let list: DriveList = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(list.drive)
}

/// Simulate every planned drive and persist the samples under `root`.
pub fn cmd_synth(cfg: &RunConfig, root: &Path) -> Result<usize> {
    let rig = cfg.rig()?;
    let s = &cfg.synth;
    let drives = plan_drives(&s.profiles, s.drives_per_profile, &s.plan, cfg.seed, "d")?;
    let samples = generate_dataset(&drives, &rig, &s.generation)?;
    atomic_dir(&root.join(SAMPLES_DIR), |tmp| Ok(SplitDir::new(tmp).write(&samples)?))?;
    let text = toml::to_string(&DriveList { drive: drives })?;
    atomic_file(&root.join(DRIVES_FILE), |tmp| Ok(fs::write(tmp, text)?))?;
    log::info!("wrote {} samples to {}", samples.len(), root.display());
    Ok(samples.len())
}

/// Assign samples to splits by geofence and write one manifest per role.
pub fn cmd_split(cfg: &RunConfig) -> Result<BTreeMap<SplitRole, usize>> {
    let root = &cfg.dataset_root;
    let entries = SplitDir::new(root.join(SAMPLES_DIR)).manifest()?;
    let positions = entries.iter().map(|e| (e.id.clone(), [e.pos_x, e.pos_y])).collect();
    let assignment = geofence_split(&positions, &cfg.split.fences, &cfg.split.config())?;
    let mut counts = BTreeMap::new();
    atomic_dir(&root.join(SPLITS_DIR), |tmp| {
        for role in SplitRole::ALL {
            let subset: Vec<ManifestEntry> = entries.iter().filter(|e| assignment[&e.id] == role).cloned().collect();
            counts.insert(role, subset.len());
            write_manifest(&tmp.join(format!("{role}.csv")), &subset)?;
        }
        Ok(())
    })?;
    for (role, n) in &counts {
        log::info!("{role}: {n} samples");
    }
    Ok(counts)
}

/// Samples of a split written by `split`; `all` reads every sample.
pub fn load_set(cfg: &RunConfig, name: &str) -> Result<Vec<Sample>> {
    let samples = cfg.dataset_root.join(SAMPLES_DIR);
    let manifest = if name == "all" {
        samples.join(MANIFEST)
    } else {
        name.parse::<SplitRole>()?;
        cfg.dataset_root.join(SPLITS_DIR).join(format!("{name}.csv"))
    };
    let entries = read_manifest(&manifest).with_context(|| format!("loading split {name:?} (run `split` first)"))?;
    entries
        .iter()
        .map(|e| Ok(read_sample(&samples.join(&e.id), e)?))
        .collect()
}

fn load_samples(cfg: &RunConfig, ids: &[String]) -> Result<Vec<Sample>> {
    let dir = cfg.dataset_root.join(SAMPLES_DIR);
    let entries = SplitDir::new(&dir).manifest()?;
    ids.iter()
        .map(|id| {
            let e = entries
                .iter()
                .find(|e| &e.id == id)
                .with_context(|| format!("no sample {id:?} in {}", dir.display()))?;
            Ok(read_sample(&dir.join(id), e)?)
        })
        .collect()
}

fn save_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    atomic_file(path, |tmp| Ok(write_checkpoint(tmp, params)?))
}

/// Train on the `train` split with validation on `val`; keeps the best checkpoint.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    let train_set = load_set(cfg, "train")?;
    let val_set = load_set(cfg, "val")?;
    let tr: Vec<&Sample> = train_set.iter().collect();
    let va: Vec<&Sample> = val_set.iter().collect();
    let checkpoint = out.join(CHECKPOINT_FILE);
    let log_path = out.join(TRAIN_LOG_FILE);
    let mut logs = Vec::new();
    let outcome = train(&tr, &va, &cfg.model, &cfg.train, |log, state| {
        logs.push(log.clone());
        atomic_file(&log_path, |tmp| Ok(write_epoch_logs(tmp, &logs)?)).map_err(|e| gripmap::Error::Input(e.to_string()))?;
        if state.best_epoch == Some(log.epoch) {
            save_checkpoint(&checkpoint, &state.best_params).map_err(|e| gripmap::Error::Input(e.to_string()))?;
        }
        Ok(())
    })?;
    log::info!(
        "best epoch {} (val loss {:.5}); checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        checkpoint.display()
    );
    Ok(outcome)
}

fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let rows: Vec<AblationRow> = reports
        .iter()
        .map(|r| AblationRow {
            report: r.clone(),
            error: None,
        })
        .collect();
    atomic_file(path, |tmp| Ok(write_ablation_table(tmp, &rows)?))
}

/// Evaluate a checkpoint (or the label oracle) on every configured set.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>, oracle: bool, out: &Path) -> Result<Vec<EvalReport>> {
    let params = if oracle {
        None
    } else {
        let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(CHECKPOINT_FILE));
        Some(read_checkpoint(&path)?)
    };
    let mut reports = Vec::new();
    for set in &cfg.eval.sets {
        let samples = load_set(cfg, set)?;
        let refs: Vec<&Sample> = samples.iter().collect();
        let predictor: Box<dyn LabelPredictor> = match &params {
            Some(p) => Box::new(ModelPredictor {
                params: p,
                batch_size: cfg.eval.batch_size,
            }),
            None => Box::new(OraclePredictor),
        };
        let r = evaluate(predictor.as_ref(), &refs, set)?;
        log::info!("{} on {set}: rmse {:.4} (grip mean {:.3}, sd {:.3}, {} samples)", r.modalities, r.rmse, r.grip_mean, r.grip_sd, r.n_samples);
        reports.push(r);
    }
    write_reports(&out.join(EVAL_REPORT_FILE), &reports)?;
    Ok(reports)
}

/// Train and evaluate one model per modality subset.
pub fn cmd_ablate(cfg: &RunConfig, subsets: Option<&str>, out: &Path) -> Result<Vec<AblationRow>> {
    let lists: Vec<String> = match subsets {
        Some(s) => vec![s.to_string()],
        None => cfg.ablate.subsets.clone(),
    };
    let plan = if lists.is_empty() {
        AblationPlan::default()
    } else {
        AblationPlan {
            subsets: lists.iter().map(|s| parse_modalities(s)).collect::<gripmap::Result<_>>()?,
        }
    };
    let train_set = load_set(cfg, "train")?;
    let val_set = load_set(cfg, "val")?;
    let eval_data: Vec<(String, Vec<Sample>)> = cfg
        .eval
        .sets
        .iter()
        .map(|s| Ok((s.clone(), load_set(cfg, s)?)))
        .collect::<Result<_>>()?;
    let eval_sets: Vec<EvalSet> = eval_data
        .iter()
        .map(|(name, samples)| EvalSet {
            name: name.clone(),
            samples: samples.iter().collect(),
        })
        .collect();
    let tr: Vec<&Sample> = train_set.iter().collect();
    let va: Vec<&Sample> = val_set.iter().collect();
    let ckpt_dir = out.join("ablation");
    let rows = run_ablation(&plan, &tr, &va, &eval_sets, &cfg.model, &cfg.train, |m, outcome| {
        let name = m.iter().map(|m| m.name()).collect::<Vec<_>>().join("+");
        save_checkpoint(&ckpt_dir.join(format!("{name}.gmck")), &outcome.best)
            .map_err(|e| gripmap::Error::Input(e.to_string()))
    })?;
    atomic_file(&out.join(ABLATION_FILE), |tmp| Ok(write_ablation_table(tmp, &rows)?))?;
    for r in &rows {
        match &r.error {
            None => log::info!("{} on {}: rmse {:.4}", r.report.modalities, r.report.set, r.report.rmse),
            Some(e) => log::error!("{} on {}: {e}", r.report.modalities, r.report.set),
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct Overlay {
    pub id: String,
    pub path: PathBuf,
    /// Present when the sample's scene has tire tracks.
    pub track_bands: Option<TrackBands>,
}

/// Ground distance limit for the track-band statistics (m).
pub const TRACK_BAND_MAX_DISTANCE: f64 = 15.0;

/// Render grip overlays for `ids` (or the configured samples, or the first sample of
/// the configured set).
pub fn cmd_visualize(cfg: &RunConfig, checkpoint: Option<&Path>, ids: &[String], out: &Path) -> Result<Vec<Overlay>> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let params = read_checkpoint(&path)?;
    let samples = if !ids.is_empty() {
        load_samples(cfg, ids)?
    } else if !cfg.visualize.samples.is_empty() {
        load_samples(cfg, &cfg.visualize.samples)?
    } else {
        let mut set = load_set(cfg, &cfg.visualize.set)?;
        set.truncate(1);
        if set.is_empty() {
            bail!("split {:?} is empty", cfg.visualize.set);
        }
        set
    };
    let refs: Vec<&Sample> = samples.iter().collect();
    let maps = predict_maps(&params, &refs, cfg.eval.batch_size)?;
    let rig = cfg.rig()?;
    let drives = read_drives(&cfg.dataset_root)?;
    let mut overlays = Vec::new();
    for (s, m) in samples.iter().zip(&maps) {
        let img = render_overlay(&s.rgb, &m.grip, &s.road_mask, &s.labels, &cfg.visualize.overlay)?;
        let path = out.join(OVERLAY_DIR).join(format!("{}.png", s.id));
        atomic_file(&path, |tmp| Ok(write_png(tmp, &img)?))?;
        let drive = s.id.rsplit_once('_').and_then(|(d, _)| drives.iter().find(|x| x.id == d));
        let mut track_bands = None;
        if let Some(d) = drive {
            let gen = &cfg.synth.generation;
            let scene = d.scene(gen)?;
            if scene.track_center.is_some() {
                let pose = d.reference_pose(&rig, &gen.sim, s.frame_time)?;
                let tb = track_band_means(&m.grip, &scene, &pose, &rig.reference.intrinsics, TRACK_BAND_MAX_DISTANCE)?;
                log::info!(
                    "{}: track band grip {:.3}, adjacent {:.3}",
                    s.id,
                    tb.track_mean,
                    tb.adjacent_mean
                );
                track_bands = Some(tb);
            }
        }
        log::info!("wrote {}", path.display());
        overlays.push(Overlay {
            id: s.id.clone(),
            path,
            track_bands,
        });
    }
    Ok(overlays)
}

/// Export sampled (truth, prediction) pairs of the configured set.
pub fn cmd_scatter(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> Result<PathBuf> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(CHECKPOINT_FILE));
    let params = read_checkpoint(&path)?;
    let samples = load_set(cfg, &cfg.scatter.set)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let predictor = ModelPredictor {
        params: &params,
        batch_size: cfg.eval.batch_size,
    };
    let predictions = predictor.predict_labels(&refs)?;
    let sc = &cfg.scatter;
    let rows = scatter_sample(&refs, &predictions, sc.n, sc.with_replacement, cfg.seed)?;
    let dest = out.join(SCATTER_FILE);
    atomic_file(&dest, |tmp| Ok(write_scatter(tmp, &rows)?))?;
    log::info!(
        "{} rows from {} ({}) to {}",
        rows.len(),
        sc.set,
        modalities_label(&params.config.modalities),
        dest.display()
    );
    Ok(dest)
}
