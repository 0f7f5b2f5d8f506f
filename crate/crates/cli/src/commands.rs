use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use mpseg::inference::{decode_labels, Ensemble, Member, SlidingWindow};
use mpseg::metrics::{evaluate_cases, summarize, Metric, Region, write_box_plot_csv, write_case_csv, write_summary_csv, HdPenalty};
use mpseg::model::{Architecture, NetworkConfig};
use mpseg::par::Exec;
use mpseg::phantom::{generate_dataset, PhantomSpec};
use mpseg::postproc::{postprocess, Connectivity, PostprocessConfig};
use mpseg::training::{make_folds, train_fold, Checkpoint, ExperimentConfig, TrainingCase};
use mpseg::volume::{find_nifti, list_cases, load_case, read_nifti, write_nifti, SegVolume};
use mpseg::Error;

use crate::manifest::RunManifest;
use crate::{Cli, Command, ConfigArgs, EvaluateArgs, PhantomArgs, PredictArgs, ScaleArgs, TrainArgs};

pub const CASES_CSV: &str = "cases.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const BOX_PLOT_CSV: &str = "boxplot.csv";

/// Bad invocation or inputs that do not fit together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// 2 for usage and configuration problems, 3 for divergence, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Diverged { .. } => 3,
                Error::Config(_)
                | Error::EpochOutOfRange { .. }
                | Error::TooFewCases { .. }
                | Error::MissingModality { .. }
                | Error::IncompatibleLabelSpace { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Config(a) => config(a),
        Command::Train(a) => train(a, exec),
        Command::Predict(a) => predict(a, exec),
        Command::Evaluate(a) => evaluate(a, exec),
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn phantom(a: PhantomArgs) -> anyhow::Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let template = PhantomSpec {
        seed: a.seed,
        dims: [a.size; 3],
        tumor_count: a.tumors,
        noise_sigma: a.noise,
        ..Default::default()
    };
    create_dir(&a.out)?;
    let ids = generate_dataset(a.n, &template, &a.out)?;
    let mut m = RunManifest::new("phantom");
    m.seed = Some(a.seed);
    m.outputs = ids.iter().map(|id| a.out.join(id)).collect();
    m.write(&a.out)?;
    println!("wrote {} cases to {}", ids.len(), a.out.display());
    Ok(())
}

fn base_config(scale: &ScaleArgs) -> ExperimentConfig {
    let arch = scale.arch.unwrap_or(Architecture::Pairing);
    if scale.desk {
        ExperimentConfig::desk_scale(NetworkConfig::desk_scale(arch))
    } else {
        ExperimentConfig::full_scale(NetworkConfig::full_scale(arch))
    }
}

fn config(a: ConfigArgs) -> anyhow::Result<()> {
    print!("{}", base_config(&a.scale).to_toml());
    Ok(())
}

fn experiment_config(a: &TrainArgs) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => base_config(&a.scale),
    };
    if let Some(arch) = a.scale.arch {
        cfg.network.architecture = arch;
    }
    let t = &mut cfg.training;
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = a.$flag { $field = v; })*
        };
    }
    set! {
        fold => t.fold,
        folds => t.num_folds,
        epochs => t.epoch_max,
        warmup => t.warmup_epochs,
        iterations => t.iterations_per_epoch,
        batch_size => t.batch_size,
        lr_min => t.lr_min,
        lr_max => t.lr_max,
        momentum => t.momentum,
        weight_decay => t.weight_decay,
        seed => t.seed,
    }
    if let Some(p) = a.patch {
        t.patch_size = [p; 3];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_training_cases(data: &Path, ids: &[String]) -> anyhow::Result<Vec<TrainingCase>> {
    ids.iter()
        .map(|id| {
            let case = load_case(data, id)?;
            if case.labels().is_none() {
                return Err(usage(format!("case {id} has no label file")));
            }
            Ok(TrainingCase::prepare(&case)?)
        })
        .collect()
}

fn train(a: TrainArgs, exec: Exec) -> anyhow::Result<()> {
    let cfg = experiment_config(&a)?;
    let t = &cfg.training;
    let ids = list_cases(&a.data)?;
    let folds = make_folds(&ids, t.num_folds, t.seed)?;
    let fold = &folds[t.fold];
    let train_cases = load_training_cases(&a.data, &fold.train)?;
    let val_cases = load_training_cases(&a.data, &fold.val)?;

    let out = a.out.join(format!("fold_{}", t.fold));
    create_dir(&out)?;
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()).with_context(|| format!("writing {}", config_path.display()))?;
    eprintln!(
        "fold {}: {} training and {} validation cases, {} epochs of {} iterations",
        t.fold,
        train_cases.len(),
        val_cases.len(),
        t.epoch_max,
        t.iterations_per_epoch
    );
    let outcome = train_fold(&train_cases, &val_cases, &cfg, &out, exec)?;

    let mut m = RunManifest::new("train");
    m.config_paths = a.config.iter().cloned().chain([config_path]).collect();
    m.inputs = fold.train.iter().chain(&fold.val).map(|id| a.data.join(id)).collect();
    m.outputs = vec![outcome.best_checkpoint.clone(), outcome.last_checkpoint.clone(), outcome.log.clone()];
    m.seed = Some(t.seed);
    m.config_fingerprint = Some(cfg.fingerprint());
    m.write(&out)?;
    match outcome.best_val_dice {
        Some(d) => println!("best validation Dice {d:.4} at epoch {}", outcome.best_epoch),
        None => println!("trained without validation cases"),
    }
    println!("checkpoints in {}", out.display());
    Ok(())
}

fn load_ensemble(paths: &[PathBuf], exec: Exec) -> anyhow::Result<Ensemble> {
    let members = paths
        .iter()
        .map(|p| {
            let ck = Checkpoint::load(p)?;
            Ok(Member {
                name: p.display().to_string(),
                network: ck.network()?.with_exec(exec),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Ensemble::new(members)?)
}

fn predict(a: PredictArgs, exec: Exec) -> anyhow::Result<()> {
    let (mut window, mut post) = match &a.config {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            (cfg.inference, cfg.postprocess)
        }
        None => (SlidingWindow::new([128; 3], 0.5)?, PostprocessConfig::default()),
    };
    if let Some(p) = a.patch {
        window.patch_size = [p; 3];
    }
    if let Some(o) = a.overlap {
        window.overlap = o;
    }
    window.validate()?;
    if let Some(v) = a.min_component {
        post.min_component_voxels = v;
    }
    if let Some(v) = a.min_enhancing {
        post.min_enhancing_voxels = v;
    }
    if let Some(c) = a.connectivity {
        post.connectivity =
            Connectivity::from_count(c).ok_or_else(|| usage(format!("connectivity must be 6, 18 or 26, not {c}")))?;
    }
    let apply_post = !a.no_postprocess;

    let ensemble = load_ensemble(&a.checkpoints, exec)?;
    let ids = list_cases(&a.data)?;
    if ids.is_empty() {
        return Err(usage(format!("no cases found in {}", a.data.display())));
    }
    create_dir(&a.out)?;
    let mut outputs = Vec::with_capacity(ids.len());
    for id in &ids {
        let case = load_case(&a.data, id)?;
        let probs = ensemble.predict(&case, &window, exec)?;
        let mut seg = decode_labels(&probs);
        if apply_post {
            seg = postprocess(&seg, &post);
        }
        let dir = a.out.join(id);
        create_dir(&dir)?;
        let path = dir.join(format!("{id}_seg.nii.gz"));
        write_nifti(seg.volume(), &path)?;
        eprintln!("{id}: {} tumor voxels", seg.labels().iter().filter(|&&l| l > 0).count());
        outputs.push(path);
    }
    let mut m = RunManifest::new("predict");
    m.config_paths = a.config.iter().cloned().collect();
    m.inputs = a.checkpoints.iter().cloned().chain([a.data.clone()]).collect();
    m.outputs = outputs;
    m.write(&a.out)?;
    println!(
        "segmented {} cases with {} model(s) into {}",
        ids.len(),
        ensemble.len(),
        a.out.display()
    );
    Ok(())
}

/// Case ids under `dir` that have a `<id>/<id>_seg` file.
fn labeled_ids(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    let mut ids = BTreeSet::new();
    for entry in entries {
        let entry = entry?;
        let id = entry.file_name().to_string_lossy().into_owned();
        if entry.path().is_dir() && find_nifti(&entry.path(), &format!("{id}_seg")).is_some() {
            ids.insert(id);
        }
    }
    Ok(ids)
}

fn read_seg(dir: &Path, id: &str) -> anyhow::Result<SegVolume> {
    let path = find_nifti(&dir.join(id), &format!("{id}_seg")).expect("listed ids have a label file");
    let vol = read_nifti(&path)?;
    SegVolume::try_from(vol).with_context(|| format!("reading labels from {}", path.display()))
}

fn parse_penalty(s: &str) -> anyhow::Result<HdPenalty> {
    if s == "diagonal" {
        return Ok(HdPenalty::Diagonal);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(HdPenalty::Fixed(v)),
        _ => Err(usage(format!("--hd-penalty must be `diagonal` or a distance, not {s:?}"))),
    }
}

fn evaluate(a: EvaluateArgs, exec: Exec) -> anyhow::Result<()> {
    let penalty = parse_penalty(&a.hd_penalty)?;
    let pred_ids = labeled_ids(&a.pred)?;
    let ref_ids = labeled_ids(&a.reference)?;
    let missing: Vec<&String> = ref_ids.difference(&pred_ids).collect();
    if !missing.is_empty() {
        return Err(usage(format!("no prediction for case(s): {}", join(&missing))));
    }
    let extra: Vec<&String> = pred_ids.difference(&ref_ids).collect();
    if !extra.is_empty() {
        return Err(usage(format!("no reference for case(s): {}", join(&extra))));
    }
    if ref_ids.is_empty() {
        return Err(usage(format!("no labeled cases in {}", a.reference.display())));
    }
    let triples = ref_ids
        .iter()
        .map(|id| Ok((id.clone(), read_seg(&a.pred, id)?, read_seg(&a.reference, id)?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let rows = evaluate_cases(&triples, penalty, exec)?;
    let summary = summarize(&rows)?;
    create_dir(&a.out)?;
    let outputs = [a.out.join(CASES_CSV), a.out.join(SUMMARY_CSV), a.out.join(BOX_PLOT_CSV)];
    write_case_csv(&outputs[0], &rows)?;
    write_summary_csv(&outputs[1], &summary)?;
    write_box_plot_csv(&outputs[2], &rows)?;
    let mut m = RunManifest::new("evaluate");
    m.inputs = vec![a.pred.clone(), a.reference.clone()];
    m.outputs = outputs.to_vec();
    m.write(&a.out)?;
    for r in Region::ALL {
        println!("mean Dice {}: {:.4}", r.name(), summary.get(Metric::Dice, r).mean);
    }
    Ok(())
}

fn join(ids: &[&String]) -> String {
    ids.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
}
