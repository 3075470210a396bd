use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use phnet_core::checkpoint::{AnyModel, Checkpoint};
use phnet_core::data::manifest::load_record;
use phnet_core::data::{self, image_io, load_samples, AugmentedSample, Manifest, Split, SyntheticConfig};
use phnet_core::error::{Error, Result};
use phnet_core::models::{AttentionPoolModel, AttentionPoolSpec, Depth, Model, ModelSpec};

use phnet_core::train::{self, evaluate, make_batch, EpochLog, Monitor, TrainConfig};
use phnet_core::{rng, verify};
use serde_json::json;

use crate::args::*;
use crate::config::{DataSource, MapPolicy, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.phck";
pub const LOG_FILE: &str = "log.csv";

/// Verification failures are not errors; they only change the exit code.
pub enum Outcome {
    Done,
    ChecksFailed,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::MakeMaps(a) => make_maps(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Params(a) => params(a),
        Command::Verify(a) => verify_cmd(a),
    }
    .map(|ok| if ok { Outcome::Done } else { Outcome::ChecksFailed })
}

/// Creates `dir`, refusing to reuse a non-empty one unless forced.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::Config(format!("output directory {} is not empty (pass --force to reuse it)", dir.display())));
        }
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn summarize(manifest: &Manifest) {
    println!("{:<8}{:>10}{:>10}{:>10}", "split", "negative", "positive", "total");
    let mut splits: Vec<Option<Split>> = Split::ALL.iter().copied().map(Some).collect();
    splits.push(None);
    for s in splits {
        let (neg, pos) = (manifest.count(s, 0), manifest.count(s, 1));
        if s.is_none() && neg + pos == 0 {
            continue;
        }
        let name = s.map_or("none", Split::as_str);
        println!("{name:<8}{neg:>10}{pos:>10}{:>10}", neg + pos);
    }
}

fn gen_data(a: GenDataArgs) -> Result<bool> {
    let base = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = match base.data {
        DataSource::Synthetic(s) => s,
        DataSource::Manifest(_) => SyntheticConfig::default(),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { cfg.$field = v; })* };
    }
    set!(size => size, count => count, seed => seed, fidelity => fidelity, contrast => contrast, noise => noise,
         positive_fraction => positive_fraction);
    if let Some(r) = a.radius_min {
        cfg.radius[0] = r;
    }
    if let Some(r) = a.radius_max {
        cfg.radius[1] = r;
    }
    cfg.validate()?;
    let out = a.output.or(base.output).ok_or_else(|| Error::Config("gen-data needs --output".into()))?;
    prepare_output(&out, a.force)?;
    let manifest = data::generate_synthetic(&cfg, &out)?;
    fs::write(out.join("synthetic.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    println!("wrote {} samples to {}", manifest.records.len(), out.display());
    summarize(&manifest);
    Ok(true)
}

/// Fills every sample's map from an attention-pool producer.
pub fn producer_maps(producer: &mut AnyModel<f32>, samples: &mut [AugmentedSample]) -> Result<()> {
    let AnyModel::AttentionPool(model) = producer else {
        return Err(Error::Config("the producer checkpoint is not an attention-pool model".into()));
    };
    for chunk in samples.chunks_mut(16) {
        let zeroed: Vec<AugmentedSample> = chunk.iter().map(AugmentedSample::with_zero_map).collect();
        let refs: Vec<&AugmentedSample> = zeroed.iter().collect();
        let (_, maps) = model.attend(&make_batch::<f32>(&refs, None)?)?;
        for (i, s) in chunk.iter_mut().enumerate() {
            s.attn_map = maps.batch_slice(i..i + 1)?;
        }
    }
    Ok(())
}

fn load_producer(path: &Path) -> Result<(AnyModel<f32>, Option<usize>)> {
    let ck = Checkpoint::<f32>::load(path)?;
    let size = ck.meta.get("image_size").and_then(|v| v.as_u64()).map(|v| v as usize);
    Ok((ck.model, size))
}

/// Loads one split under a map policy.
pub fn load_split(
    manifest_path: &Path,
    split: Split,
    size: usize,
    policy: MapPolicy,
    producer: Option<&mut AnyModel<f32>>,
) -> Result<Vec<AugmentedSample>> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut samples = load_samples(manifest.split(split), base, size, policy == MapPolicy::FromManifest)?;
    if policy == MapPolicy::AttentionPool {
        let producer = producer.ok_or_else(|| Error::Config("attention_pool maps need a producer".into()))?;
        producer_maps(producer, &mut samples)?;
    }
    Ok(samples)
}

fn make_maps(a: MakeMapsArgs) -> Result<bool> {
    let mut manifest = Manifest::read(&a.manifest)?;
    let base = a.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let maps_dir = base.join(&a.maps_dir);
    prepare_output(&maps_dir, a.force)?;
    let out_manifest = a.output_manifest.clone().unwrap_or_else(|| base.join("manifest.maps.csv"));

    let (mut producer, trained_size) = match (&a.producer, a.train_producer) {
        (Some(p), _) => load_producer(p)?,
        (None, true) => {
            let size = a.image_size.unwrap_or(data::DEFAULT_SIZE);
            let (model, path) = train_producer(&a, &base, size, &maps_dir)?;
            println!("producer checkpoint: {}", path.display());
            (model, Some(size))
        }
        (None, false) => return Err(Error::Config("make-maps needs --producer or --train-producer".into())),
    };
    let size = a.image_size.or(trained_size).unwrap_or(data::DEFAULT_SIZE);

    let mut errors = Vec::new();
    let mut written = 0;
    for r in &mut manifest.records {
        let result = (|| -> Result<String> {
            let mut s = [load_record(r, &base, size, false)?];
            producer_maps(&mut producer, &mut s)?;
            let ext = match a.format {
                MapFormat::Png => "png",
                MapFormat::Pht => "pht",
            };
            let rel = a.maps_dir.join(format!("{}.{ext}", r.id));
            image_io::write_image(&base.join(&rel), &s[0].attn_map)?;
            Ok(rel.to_string_lossy().into_owned())
        })();
        match result {
            Ok(rel) => {
                r.map = Some(rel);
                written += 1;
            }
            Err(e) => errors.push(format!("{}: {e}", r.id)),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Input(format!("{} record(s) failed:\n  {}", errors.len(), errors.join("\n  "))));
    }
    manifest.write(&out_manifest)?;
    println!("wrote {written} maps to {} and manifest {}", maps_dir.display(), out_manifest.display());
    Ok(true)
}

fn train_producer(a: &MakeMapsArgs, base: &Path, size: usize, dir: &Path) -> Result<(AnyModel<f32>, PathBuf)> {
    let manifest = Manifest::read(&a.manifest)?;
    let train_set = load_samples(manifest.split(Split::Train), base, size, false)?;
    let val_set = load_samples(manifest.split(Split::Val), base, size, false)?;
    let channels = train_set.first().map_or(1, |s| s.image.shape().c()) + 1;
    let spec = AttentionPoolSpec { in_channels: channels, ..AttentionPoolSpec::default() };
    let mut model = AttentionPoolModel::<f32>::build(&spec, &mut rng::stream(a.seed, "producer.init", 0))?;
    let cfg = TrainConfig {
        lr: a.lr,
        max_epochs: a.epochs,
        patience: a.epochs,
        seed: a.seed,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let outcome = train::train(&mut model, &train_set, &val_set, &cfg, |l| {
        println!("producer epoch {:>3}  loss {:.4}  val auc {}", l.epoch, l.train_loss, fmt_opt(l.val_auc));
        Ok(())
    })?;
    let path = dir.join("producer.phck");
    let meta = json!({ "image_size": size, "train": cfg, "best_epoch": outcome.best_epoch });
    let ck = Checkpoint { model: AnyModel::AttentionPool(model), optimizer: Some(outcome.optimizer), meta };
    ck.save(&path)?;
    Ok((ck.model, path))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.4}"))
}

/// Config file (if any) with flags applied on top.
pub fn resolve_run_config(path: Option<&Path>, o: &RunOverrides) -> Result<RunConfig> {
    let mut c = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = &o.output {
        c.output = Some(v.clone());
    }
    if let Some(v) = &o.manifest {
        c.data = DataSource::Manifest(v.clone());
    }
    if let DataSource::Synthetic(s) = &mut c.data {
        if let Some(v) = o.fidelity {
            s.fidelity = v;
        }
        if let Some(v) = o.count {
            s.count = v;
        }
        if let Some(v) = o.data_seed {
            s.seed = v;
        }
    }
    if let Some(v) = o.maps {
        c.maps = v;
    }
    if let Some(v) = &o.producer {
        c.producer = Some(v.clone());
    }
    if let Some(v) = o.image_size {
        c.image_size = Some(v);
    }
    if let Some(v) = o.depth {
        c.model.depth = v;
        c.model.stage_widths.clear();
        c.model.blocks_per_stage.clear();
    }
    if let Some(v) = o.n {
        // default widths depend on n, so let them follow the new value
        if c.model.stage_widths == c.model.depth.default_widths(c.model.n) {
            c.model.stage_widths.clear();
        }
        c.model.n = v;
    }
    if let Some(v) = o.in_channels {
        c.model.in_channels = v;
    }
    let t = &mut c.train;
    if let Some(v) = o.lr {
        t.lr = v;
    }
    if let Some(v) = o.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = o.max_epochs {
        t.max_epochs = v;
    }
    if let Some(v) = o.patience {
        t.patience = v;
    }
    if let Some(v) = o.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = o.monitor {
        t.monitor = v;
    }
    if o.no_augment {
        t.augment = false;
    }
    // one root seed drives training
    t.seed = c.seed;
    c.model = c.model.resolved();
    c.validate()?;
    Ok(c)
}

fn check_channels(samples: &[AugmentedSample], spec: &ModelSpec) -> Result<()> {
    if let Some(s) = samples.first() {
        let c = s.image.shape().c() + 1;
        if c != spec.in_channels {
            return Err(Error::Config(format!(
                "stacked inputs have {c} channels but the model expects in_channels = {}",
                spec.in_channels
            )));
        }
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<bool> {
    let cfg = resolve_run_config(a.config.as_deref(), &a.overrides)?;
    let out = cfg.output.clone().ok_or_else(|| Error::Config("train needs an output directory (--output)".into()))?;
    prepare_output(&out, a.force)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    let report = run_training(&cfg, &out, true)?;
    if let Some(r) = report {
        println!("test auc {}  accuracy {:.4}  (n = {})", fmt_opt(r.auc), r.accuracy, r.samples);
    }
    Ok(true)
}

/// The whole train pipeline into `out`; returns the test-split report when
/// the corpus has a test split. `verbose` echoes progress to stdout.
pub fn run_training(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<Option<phnet_core::metrics::MetricsReport>> {
    let manifest_path = match &cfg.data {
        DataSource::Manifest(p) => p.clone(),
        DataSource::Synthetic(s) => {
            let dir = out.join("corpus");
            data::generate_synthetic(s, &dir)?;
            dir.join("manifest.csv")
        }
    };
    let size = cfg.image_size();
    let mut producer = match (&cfg.maps, &cfg.producer) {
        (MapPolicy::AttentionPool, Some(p)) => Some(load_producer(p)?.0),
        _ => None,
    };
    let train_set = load_split(&manifest_path, Split::Train, size, cfg.maps, producer.as_mut())?;
    let val_set = load_split(&manifest_path, Split::Val, size, cfg.maps, producer.as_mut())?;
    check_channels(&train_set, &cfg.model)?;

    let mut model = Model::<f32>::build(&cfg.model, &mut rng::stream(cfg.seed, "init", 0))?;
    let say = |line: String| {
        if verbose {
            println!("{line}");
        }
    };
    say(format!(
        "training {} n={} ({} parameters) on {} train / {} val samples",
        cfg.model.depth,
        cfg.model.n,
        model.count_params(),
        train_set.len(),
        val_set.len()
    ));
    let mut log = fs::File::create(out.join(LOG_FILE))?;
    writeln!(log, "{}", EpochLog::HEADER)?;
    let outcome = train::train(&mut model, &train_set, &val_set, &cfg.train, |l| {
        writeln!(log, "{}", l.csv_row())?;
        log.flush()?;
        say(format!(
            "epoch {:>3}  loss {:.4}  val auc {}  val acc {:.4}  {:.1}s",
            l.epoch,
            l.train_loss,
            fmt_opt(l.val_auc),
            l.val_accuracy,
            l.elapsed_s
        ));
        Ok(())
    })?;
    say(format!(
        "best epoch {} ({} {:.6}){}",
        outcome.best_epoch,
        monitor_name(cfg.train.monitor),
        outcome.best_metric,
        if outcome.stopped_early { ", stopped early" } else { "" }
    ));
    let meta = json!({
        "image_size": size,
        "maps": cfg.maps,
        "seed": cfg.seed,
        "train": cfg.train,
        "best_epoch": outcome.best_epoch,
        "best_metric": outcome.best_metric,
        "manifest": manifest_path,
    });
    let ck = Checkpoint { model: AnyModel::Resnet(model), optimizer: Some(outcome.optimizer), meta };
    ck.save(&out.join(CHECKPOINT_FILE))?;
    let mut model = ck.model;

    let test_set = load_split(&manifest_path, Split::Test, size, cfg.maps, producer.as_mut())?;
    if test_set.is_empty() {
        return Ok(None);
    }
    let report = evaluate(&mut model, &test_set, cfg.train.batch_size)?;
    report.write(&out.join("test"))?;
    Ok(Some(report))
}

fn monitor_name(m: Monitor) -> &'static str {
    match m {
        Monitor::Auc => "val auc",
        Monitor::Accuracy => "val accuracy",
    }
}

fn eval_cmd(a: EvalArgs) -> Result<bool> {
    let split: Split = a.split.parse()?;
    let ck = Checkpoint::<f32>::load(&a.checkpoint)?;
    let dir = a.checkpoint.parent().unwrap_or(Path::new(".")).to_path_buf();
    let manifest = match &a.manifest {
        Some(m) => m.clone(),
        None => {
            let recorded = ck.meta.get("manifest").and_then(|v| v.as_str()).map(PathBuf::from);
            match recorded.filter(|p| p.is_file()) {
                Some(p) => p,
                None => dir.join("corpus").join("manifest.csv"),
            }
        }
    };
    if !manifest.is_file() {
        return Err(Error::Config(format!("manifest {} does not exist (pass --manifest)", manifest.display())));
    }
    let policy = match a.maps {
        Some(p) => p,
        None => ck
            .meta
            .get("maps")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or(MapPolicy::FromManifest),
    };
    let size = ck.meta.get("image_size").and_then(|v| v.as_u64()).map_or(data::DEFAULT_SIZE, |v| v as usize);
    let batch = ck.meta.pointer("/train/batch_size").and_then(|v| v.as_u64()).map_or(16, |v| v as usize);
    let mut producer = match (policy, &a.producer) {
        (MapPolicy::AttentionPool, Some(p)) => Some(load_producer(p)?.0),
        (MapPolicy::AttentionPool, None) => {
            return Err(Error::Config("the attention_pool map policy needs --producer".into()))
        }
        _ => None,
    };
    let samples = load_split(&manifest, split, size, policy, producer.as_mut())?;
    if samples.is_empty() {
        return Err(Error::Input(format!("split {split} of {} is empty", manifest.display())));
    }
    let mut model = ck.model;
    if samples[0].image.shape().c() + 1 != model.in_channels() {
        return Err(Error::Config("manifest images do not match the checkpoint's input channels".into()));
    }
    let report = evaluate(&mut model, &samples, batch)?;
    let out = a.output.unwrap_or_else(|| dir.join(format!("eval_{split}")));
    report.write(&out)?;
    let c = report.confusion;
    println!("split {split}: {} samples", report.samples);
    println!("auc       {}", report.auc.map_or("undefined (single class)".into(), |v| format!("{v:.6}")));
    println!("accuracy  {:.6}", report.accuracy);
    println!("confusion [[TN {} FP {}] [FN {} TP {}]]", c.tn, c.fp, c.fn_, c.tp);
    println!("report written to {}", out.display());
    Ok(true)
}

fn default_in_channels(n: usize) -> usize {
    match n {
        3 => 3,
        4 => 4,
        _ => 2,
    }
}

fn params(a: ParamsArgs) -> Result<bool> {
    let specs: Vec<ModelSpec> = if a.table {
        vec![
            ModelSpec::resnet18(1, 2),
            ModelSpec::resnet18(2, 2),
            ModelSpec::resnet50(1, 3),
            ModelSpec::resnet50(3, 3),
            ModelSpec::resnet50(4, 4),
        ]
    } else {
        let mut spec = match &a.config {
            Some(p) => RunConfig::load(p)?.model,
            None => ModelSpec::resnet18(2, 2),
        };
        if let Some(d) = a.depth {
            spec = ModelSpec::new(d, spec.n, spec.in_channels);
        }
        if let Some(n) = a.n {
            let inc = if a.config.is_some() { spec.in_channels } else { default_in_channels(n) };
            spec = ModelSpec::new(spec.depth, n, inc);
        }
        if let Some(c) = a.in_channels {
            spec.in_channels = c;
        }
        vec![spec.resolved()]
    };
    println!("{:<10}{:>3}{:>5}{:>14}{:>9}", "depth", "n", "in", "params", "rounded");
    for spec in specs {
        spec.validate()?;
        let count = phnet_core::models::count_params(&Model::<f32>::build(&spec, &mut rng::stream(0, "init", 0))?);
        let depth = match spec.depth {
            Depth::Resnet18 => "resnet18",
            Depth::Resnet50 => "resnet50",
            Depth::Mini => "mini",
        };
        let rounded = (count as f64 / 1e6).round();
        println!("{depth:<10}{:>3}{:>5}{count:>14}{:>8}M", spec.n, spec.in_channels, rounded);
    }
    Ok(true)
}

fn verify_cmd(a: VerifyArgs) -> Result<bool> {
    let results = verify::run_all(a.seed, |o| {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag}  {:<38} {}  [{:.1}s]", o.name, o.detail, o.seconds);
    });
    let failed = results.iter().filter(|o| !o.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    Ok(failed == 0)
}

