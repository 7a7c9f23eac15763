use std::path::{Path, PathBuf};
use std::time::Instant;

use sdfa::config::{digest_of, RunConfig};
use sdfa::model::{build_model, checkpoint, count_flops, count_params, SdfaModel};
use sdfa::skeleton::{
    read_openpose_dir, read_sequences, select_primary_skeleton, write_sequences, SequenceMeta, SkeletonSequence,
};
use sdfa::synth::{generate_synthetic_dataset, SynthSpec};
use sdfa::train::report::write_text;
use sdfa::train::{
    evaluate, fit, history_table, make_split, prepare, results_table, ResultRecord, SplitSpec,
};
use sdfa::{Error, Result};
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{EvalArgs, FlopsArgs, InferArgs, PreprocessArgs, SynthArgs, TrainArgs};

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

/// Explicit `--config`, else the configuration recorded at training time,
/// else defaults.
fn config_for_checkpoint(explicit: Option<&Path>, ckpt: &Path) -> Result<RunConfig> {
    if explicit.is_some() {
        return load_config(explicit);
    }
    Ok(RunManifest::read_next_to(ckpt)?
        .and_then(|m| m.config)
        .unwrap_or_default())
}

fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<SdfaModel> {
    let model = checkpoint::load(path)?;
    if model.config.in_channels != cfg.input.count() {
        return Err(Error::Config(format!(
            "checkpoint expects {} input channels, configuration provides {}",
            model.config.in_channels,
            cfg.input.count()
        )));
    }
    Ok(model)
}

/// A split string without an explicit `@seed` takes the run seed.
fn parse_split(text: &str, seed: u64) -> Result<SplitSpec> {
    let spec: SplitSpec = text.parse()?;
    Ok(if text.contains('@') { spec } else { spec.with_seed(seed) })
}

fn clip_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    let has_frames = entries
        .iter()
        .any(|p| p.is_file() && p.extension().is_some_and(|e| e == "json") && !p.ends_with("meta.json"));
    if has_frames {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = entries.into_iter().filter(|p| p.is_dir()).collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!("no keypoint files under {}", dir.display())));
    }
    Ok(dirs)
}

pub fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let start = Instant::now();
    let mut seqs = Vec::new();
    for clip in clip_dirs(&a.in_dir)? {
        let candidates = read_openpose_dir(&clip)?;
        let frames = select_primary_skeleton(&candidates)?;
        let meta_path = clip.join("meta.json");
        let meta = if meta_path.exists() {
            serde_json::from_str::<SequenceMeta>(&std::fs::read_to_string(&meta_path)?)?
        } else if a.fall || a.adl {
            SequenceMeta {
                is_fall: a.fall,
                action_label: if a.fall { "fall" } else { "adl" }.into(),
                ..Default::default()
            }
        } else {
            return Err(Error::Data(format!(
                "{} has no meta.json; pass --fall or --adl",
                clip.display()
            )));
        };
        seqs.push(SkeletonSequence::new(frames, a.fps, meta));
    }
    write_sequences(&a.out_file, &seqs)?;
    RunManifest {
        command: "preprocess".into(),
        config_digest: digest_of(&json!({ "fps": a.fps, "fall": a.fall, "adl": a.adl })),
        seed: 0,
        inputs: vec![a.in_dir.clone()],
        outputs: vec![a.out_file.clone()],
        wall_time_s: start.elapsed().as_secs_f64(),
        args: json!({ "fps": a.fps, "fall": a.fall, "adl": a.adl }).as_object().cloned().unwrap_or_default(),
        config: None,
    }
    .write_next_to(&a.out_file)?;
    println!("sequences={} out={}", seqs.len(), a.out_file.display());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let start = Instant::now();
    let mut spec = match &a.spec {
        Some(p) => toml::from_str::<SynthSpec>(&std::fs::read_to_string(p)?)
            .map_err(|e| Error::Config(format!("synthetic spec: {}", e.message())))?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let data = generate_synthetic_dataset(&spec)?;
    write_sequences(&a.out, &data)?;
    RunManifest {
        command: "synth".into(),
        config_digest: digest_of(&spec),
        seed: spec.seed,
        inputs: a.spec.iter().cloned().collect(),
        outputs: vec![a.out.clone()],
        wall_time_s: start.elapsed().as_secs_f64(),
        args: serde_json::to_value(&spec)?.as_object().cloned().unwrap_or_default(),
        config: None,
    }
    .write_next_to(&a.out)?;
    let falls = data.iter().filter(|s| s.meta.is_fall).count();
    println!("sequences={} falls={falls} adl={} out={}", data.len(), data.len() - falls, a.out.display());
    Ok(())
}

fn history_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".history.txt");
    ckpt.with_file_name(name)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let start = Instant::now();
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    let seed = cfg.train.seed;
    let data = read_sequences(&a.data)?;
    let split = make_split(&data, &parse_split(&a.split, seed)?)?;
    let prepared = prepare(&data, &cfg.preprocess, cfg.input)?;
    let mut model = build_model(&cfg.model, seed)?;
    let history = fit(&mut model, &prepared, &split.train, &cfg.train)?;
    checkpoint::save(&model, &a.out_checkpoint)?;
    let hist = history_path(&a.out_checkpoint);
    write_text(&hist, &history_table(&history))?;
    RunManifest {
        command: "train".into(),
        config_digest: cfg.digest(),
        seed,
        inputs: [Some(a.data.clone()), a.config.clone()].into_iter().flatten().collect(),
        outputs: vec![a.out_checkpoint.clone(), hist],
        wall_time_s: start.elapsed().as_secs_f64(),
        args: json!({ "split": a.split }).as_object().cloned().unwrap_or_default(),
        config: Some(cfg),
    }
    .write_next_to(&a.out_checkpoint)?;
    let last = history.last().expect("at least one epoch");
    println!(
        "epochs={} train_loss={:.6} train_acc={:.4} train={} test={} checkpoint={}",
        history.len(),
        last.train_loss,
        last.train_acc,
        split.train.len(),
        split.test.len(),
        a.out_checkpoint.display()
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let start = Instant::now();
    let cfg = config_for_checkpoint(a.config.as_deref(), &a.checkpoint)?;
    let seed = a.seed.unwrap_or(cfg.train.seed);
    let model = load_checkpoint(&a.checkpoint, &cfg)?;
    let data = read_sequences(&a.data)?;
    let spec = parse_split(&a.split, seed)?;
    let split = make_split(&data, &spec)?;
    let prepared = prepare(&data, &cfg.preprocess, cfg.input)?;
    let metrics = evaluate(&model, &prepared, &split.test)?;
    let record = ResultRecord {
        protocol: spec.protocol().to_string(),
        fold: spec.fold(),
        metrics,
        config_digest: cfg.digest(),
        seed,
    };
    write_text(&a.report, &results_table(std::slice::from_ref(&record)))?;
    RunManifest {
        command: "eval".into(),
        config_digest: cfg.digest(),
        seed,
        inputs: [Some(a.checkpoint.clone()), Some(a.data.clone()), a.config.clone()]
            .into_iter()
            .flatten()
            .collect(),
        outputs: vec![a.report.clone()],
        wall_time_s: start.elapsed().as_secs_f64(),
        args: json!({ "split": a.split }).as_object().cloned().unwrap_or_default(),
        config: Some(cfg),
    }
    .write_next_to(&a.report)?;
    let m = &record.metrics;
    println!(
        "protocol={} fold={} accuracy={:.4} auc={:.4} recall={:.4} specificity={:.4} precision={:.4} f1={:.4} n={}",
        record.protocol,
        record.fold,
        m.accuracy,
        m.auc,
        m.recall,
        m.specificity,
        m.precision,
        m.f1,
        m.total()
    );
    if !m.degenerate.is_empty() {
        eprintln!("warning: undefined metrics reported as 0: {}", m.degenerate.join(","));
    }
    Ok(())
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let cfg = config_for_checkpoint(a.config.as_deref(), &a.checkpoint)?;
    let model = load_checkpoint(&a.checkpoint, &cfg)?;
    let data = read_sequences(&a.sequence)?;
    let prepared = prepare(&data, &cfg.preprocess, cfg.input)?;
    let probs = model.fall_probabilities(&prepared.x)?;
    for (i, p) in probs.iter().enumerate() {
        println!("sequence={i} p_fall={p}");
    }
    Ok(())
}

pub fn flops(a: &FlopsArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let model = build_model(&cfg.model, 0)?;
    let params = count_params(&model);
    let macs = count_flops(&model, [cfg.model.in_channels, a.frames, model.graph.num_joints]);
    println!(
        "params={params} mparams={:.4} macs={macs} gmacs={:.4} input=({},{},{})",
        params as f64 / 1e6,
        macs as f64 / 1e9,
        cfg.model.in_channels,
        a.frames,
        model.graph.num_joints
    );
    Ok(())
}
