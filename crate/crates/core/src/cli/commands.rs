use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use super::*;
use crate::adaptation::{adapt, split_sequential, AdaptationPlan};
use crate::cosim::{run_cosim, serve_stream, serve_tcp, BoundarySeries, ModelPolicy, ProtocolSession, ZoneParams, ZoneState};
use crate::error::{Error, Result};
use crate::hypersearch::{
    grid_search, random_search, seed_study, write_roc_points_csv, write_seed_study_csv, write_summary_rows,
    write_trials_csv, SearchSpace, TrialConfig,
};
use crate::metrics::{self, duration_stats, roc, ActionCount, Quartiles, SequenceKind};
use crate::nn::{
    self, init_network, load_checkpoint, save_checkpoint, train, Activation, Checkpoint, NetworkConfig, TrainConfig,
    DEFAULT_HIDDEN,
};
use crate::segmentation::{
    cluster_offices, select_training_offices, tsne_project, write_profiles, write_tsne_csv, ClusterCriterion,
    TsneParams,
};
use crate::synth::{gen_population, write_ground_truth, SynthConfig};
use crate::timeseries::{
    ingest_csv, join_weather, office_stats, prepare_samples, resample_linear, write_csv, FeatureSchema,
    ImputationRules, ResamplePlan, SampleSet, TableKind, TimeSeriesTable, DEFAULT_COLD_THRESHOLD_C,
};
use crate::util;

pub(super) fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => ingest(a),
        Command::Segment(a) => segment(a),
        Command::Train(a) => train_cmd(a),
        Command::Search(a) => search(a),
        Command::SeedStudy(a) => seed_study_cmd(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Adapt(a) => adapt_cmd(a),
        Command::Cosim(a) => cosim(a),
        Command::Serve(a) => serve(a),
    }
}

fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn read_text(path: &Path, manifest: &mut RunManifest) -> Result<String> {
    manifest.input(path)?;
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>, manifest: &mut RunManifest) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = read_text(p, manifest)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn load_schema(path: Option<&Path>, manifest: &mut RunManifest) -> Result<FeatureSchema> {
    match path {
        None => Ok(FeatureSchema::canonical()),
        Some(p) => FeatureSchema::from_toml(&read_text(p, manifest)?),
    }
}

fn load_rules(path: Option<&Path>, fallback: ImputationRules, manifest: &mut RunManifest) -> Result<ImputationRules> {
    match path {
        None => Ok(fallback),
        Some(p) => ImputationRules::from_toml(&read_text(p, manifest)?),
    }
}

fn load_samples(path: &Path, manifest: &mut RunManifest) -> Result<SampleSet> {
    manifest.input(path)?;
    SampleSet::read_csv(path)
}

fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<Checkpoint> {
    manifest.input(path)?;
    load_checkpoint(path)
}

fn ingest_table(path: &Path, kind: TableKind, manifest: &mut RunManifest) -> Result<TimeSeriesTable> {
    manifest.input(path)?;
    ingest_csv(path, kind)
}

/// Fails unless the samples carry exactly the schema's feature keys in order.
fn check_features(samples: &SampleSet, schema: &FeatureSchema) -> Result<()> {
    let keys = schema.keys();
    if samples.feature_names == keys {
        return Ok(());
    }
    let missing: Vec<String> = keys.iter().filter(|k| !samples.feature_names.contains(k)).cloned().collect();
    if missing.is_empty() {
        Err(Error::Dimension(format!(
            "sample columns {:?} do not match schema features {keys:?}",
            samples.feature_names
        )))
    } else {
        Err(Error::IncompatibleSchema { missing })
    }
}

/// Checkpoint creation time, taken only from `SOURCE_DATE_EPOCH` so that
/// default runs stay byte-reproducible.
fn created_at() -> Option<i64> {
    std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()
}

fn save_model(path: &Path, checkpoint: Checkpoint, manifest: &mut RunManifest) -> Result<()> {
    let checkpoint = Checkpoint {
        created_at: created_at(),
        ..checkpoint
    };
    save_checkpoint(path, &checkpoint)?;
    manifest.output(path)
}

fn finish(manifest: &RunManifest, path: &Path) -> Result<()> {
    manifest.write(path)?;
    log::info!("{} done, manifest at {}", manifest.subcommand, path.display());
    Ok(())
}

fn write_file(path: &Path, manifest: &mut RunManifest, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    f(path)?;
    manifest.output(path)
}

fn csv_file(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(file)))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, e.into())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::new("synth", None, serde_json::Value::Null);
    let mut cfg: SynthConfig = load_config(args.config.as_deref(), &mut manifest)?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.offices {
        cfg.offices = v;
    }
    if let Some(v) = args.days {
        cfg.days = v;
    }
    if let Some(v) = args.cadence {
        cfg.cadence_min = v;
    }
    if let Some(v) = args.noise {
        cfg.noise = v;
    }
    cfg.validate()?;
    manifest.seed = Some(cfg.seed);
    manifest.config = to_json(&cfg);
    create_dir(&args.out)?;
    let pop = gen_population(&cfg)?;
    write_file(&args.out.join("indoor.csv"), &mut manifest, |p| write_csv(&pop.indoor, p, TableKind::Indoor))?;
    write_file(&args.out.join("weather.csv"), &mut manifest, |p| write_csv(&pop.weather, p, TableKind::Weather))?;
    write_file(&args.out.join("ground_truth.csv"), &mut manifest, |p| write_ground_truth(p, &pop))?;
    finish(&manifest, &args.out.join("manifest.json"))
}

#[derive(Serialize)]
struct IngestSettings {
    schema_hash: String,
    rules: ImputationRules,
    offices: Vec<String>,
    exclude: Vec<String>,
    resample: Option<(u32, u32)>,
}

fn ingest(args: IngestArgs) -> Result<()> {
    let mut manifest = RunManifest::new("ingest", None, serde_json::Value::Null);
    let schema = load_schema(args.schema.as_deref(), &mut manifest)?;
    let fallback = if args.sparse_defaults {
        ImputationRules::sparse_building_defaults()
    } else {
        ImputationRules::default()
    };
    let rules = load_rules(args.impute.as_deref(), fallback, &mut manifest)?;
    let mut indoor = ingest_table(&args.indoor, TableKind::Indoor, &mut manifest)?;
    if !args.offices.is_empty() {
        indoor = indoor.filter_offices(&args.offices);
    } else if !args.exclude.is_empty() {
        let keep: Vec<String> = indoor.offices().into_iter().filter(|o| !args.exclude.contains(o)).collect();
        indoor = indoor.filter_offices(&keep);
    }
    if indoor.is_empty() {
        return Err(Error::Invalid("no indoor records left after office selection".into()));
    }
    let mut resample = None;
    if let Some(to) = args.resample_to {
        let from = match args.source_cadence {
            Some(c) => c,
            None => u32::try_from(indoor.cadence() / 60).map_err(|_| Error::Invalid("cannot infer cadence".into()))?,
        };
        indoor = resample_linear(&indoor, &ResamplePlan::for_table(&indoor, from, to))?;
        resample = Some((from, to));
    }
    let weather = match &args.weather {
        Some(p) => Some(ingest_table(p, TableKind::Weather, &mut manifest)?),
        None => None,
    };
    manifest.config = to_json(&IngestSettings {
        schema_hash: schema.hash(),
        rules: rules.clone(),
        offices: args.offices.clone(),
        exclude: args.exclude.clone(),
        resample,
    });
    let samples = prepare_samples(&indoor, weather.as_ref(), &rules, &schema)?;
    log::info!(
        "{} samples, {} unlabeled and {} incomplete records skipped",
        samples.len(),
        samples.unlabeled,
        samples.incomplete
    );
    create_dir(&args.out)?;
    write_file(&args.out.join("samples.csv"), &mut manifest, |p| samples.write_csv(p))?;
    finish(&manifest, &args.out.join("manifest.json"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SegmentSettings {
    cold_threshold: f64,
    /// Exact cluster count; takes precedence over the other cut rules.
    clusters: Option<usize>,
    cutoff: Option<f64>,
    top: usize,
    coverage: f64,
    /// Training offices drawn per selected cluster.
    per_cluster: usize,
    /// Number of largest clusters to draw training offices from.
    training_clusters: usize,
    tsne: TsneParams,
}

impl Default for SegmentSettings {
    fn default() -> Self {
        Self {
            cold_threshold: DEFAULT_COLD_THRESHOLD_C,
            clusters: None,
            cutoff: None,
            top: 3,
            coverage: 0.7,
            per_cluster: 1,
            training_clusters: 3,
            tsne: TsneParams::default(),
        }
    }
}

impl SegmentSettings {
    fn criterion(&self) -> ClusterCriterion {
        match (self.clusters, self.cutoff) {
            (Some(k), _) => ClusterCriterion::Count(k),
            (None, Some(d)) => ClusterCriterion::Distance(d),
            (None, None) => ClusterCriterion::TopCoverage {
                top: self.top,
                fraction: self.coverage,
            },
        }
    }
}

fn segment(args: SegmentArgs) -> Result<()> {
    let mut manifest = RunManifest::new("segment", None, serde_json::Value::Null);
    let mut cfg: SegmentSettings = load_config(args.config.as_deref(), &mut manifest)?;
    if args.clusters.is_some() {
        cfg.clusters = args.clusters;
        cfg.cutoff = None;
    }
    if args.cutoff.is_some() {
        cfg.clusters = None;
        cfg.cutoff = args.cutoff;
    }
    if let Some(c) = args.coverage {
        cfg.clusters = None;
        cfg.cutoff = None;
        cfg.coverage = c;
    }
    let seed = args.seed.unwrap_or(cfg.tsne.seed);
    cfg.tsne.seed = seed;
    manifest.seed = Some(seed);
    manifest.config = to_json(&cfg);

    let mut table = ingest_table(&args.indoor, TableKind::Indoor, &mut manifest)?;
    if let Some(p) = &args.weather {
        let weather = ingest_table(p, TableKind::Weather, &mut manifest)?;
        table = join_weather(&table, &weather)?.table;
    }
    let profiles = table
        .offices()
        .iter()
        .map(|o| office_stats(&table, o, cfg.cold_threshold))
        .collect::<Result<Vec<_>>>()?;
    let assignment = cluster_offices(&profiles, cfg.criterion())?;
    log::info!(
        "{} offices in {} clusters, top-{} coverage {:.3}",
        profiles.len(),
        assignment.cluster_count(),
        cfg.top,
        assignment.top_coverage(cfg.top)
    );
    create_dir(&args.out)?;
    write_file(&args.out.join("profiles.csv"), &mut manifest, |p| write_profiles(p, &profiles))?;

    let ranked = assignment.ranked();
    write_file(&args.out.join("clusters.csv"), &mut manifest, |p| {
        let mut w = csv_file(p)?;
        let err = csv_err(p);
        w.write_record(["office_id", "cluster", "cluster_size", "cluster_rank"]).map_err(&err)?;
        for (id, &c) in assignment.office_ids.iter().zip(&assignment.labels) {
            let rank = ranked.iter().position(|&r| r == c).unwrap_or(0);
            w.write_record([id.clone(), c.to_string(), assignment.sizes[c].to_string(), rank.to_string()])
                .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    })?;

    let mut tsne = cfg.tsne.clone();
    let feasible = (profiles.len() as f64 - 1.0) / 3.0;
    if tsne.perplexity >= feasible {
        tsne.perplexity = 0.9 * feasible;
        log::warn!("perplexity lowered to {:.3} for {} offices", tsne.perplexity, profiles.len());
    }
    let projection = tsne_project(&profiles, &tsne)?;
    write_file(&args.out.join("tsne.csv"), &mut manifest, |p| {
        write_tsne_csv(p, &assignment.office_ids, &projection.embedding, &assignment.labels)
    })?;

    let n_clusters = cfg.training_clusters.min(assignment.cluster_count());
    let picks = select_training_offices(&assignment, cfg.per_cluster, n_clusters, seed)?;
    write_file(&args.out.join("training_offices.txt"), &mut manifest, |p| {
        let mut text = picks.join("\n");
        text.push('\n');
        std::fs::write(p, text).map_err(|e| Error::io(p, e))
    })?;
    finish(&manifest, &args.out.join("manifest.json"))
}

/// Network and optimizer settings shared by `train` and `seed-study`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSettings {
    hidden: Vec<usize>,
    activation: Activation,
    init_scale: f64,
    learning_rate: f64,
    l1: f64,
    batch_size: usize,
    iterations: u64,
    g0: f64,
    history_every: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Relu,
            init_scale: 1.0,
            learning_rate: t.learning_rate,
            l1: t.l1,
            batch_size: t.batch_size,
            iterations: t.iterations,
            g0: t.g0,
            history_every: t.history_every,
        }
    }
}

impl ModelSettings {
    fn apply(&mut self, flags: &ModelFlags) {
        if !flags.hidden.is_empty() {
            self.hidden = flags.hidden.clone();
        }
        if let Some(a) = flags.activation {
            self.activation = match a {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::Tanh => Activation::Tanh,
            };
        }
        if let Some(v) = flags.learning_rate {
            self.learning_rate = v;
        }
        if let Some(v) = flags.l1 {
            self.l1 = v;
        }
        if let Some(v) = flags.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = flags.iterations {
            self.iterations = v;
        }
    }

    fn network(&self, input_width: usize, seed: u64) -> NetworkConfig {
        NetworkConfig {
            init_scale: self.init_scale,
            ..NetworkConfig::new(input_width)
                .with_hidden(&self.hidden)
                .with_activation(self.activation)
                .with_seed(seed)
        }
    }

    fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            l1: self.l1,
            batch_size: self.batch_size,
            iterations: self.iterations,
            g0: self.g0,
            shuffle_seed: seed,
            history_every: self.history_every,
        }
    }

    fn trial(&self) -> TrialConfig {
        TrialConfig {
            hidden: self.hidden.clone(),
            activation: self.activation,
            learning_rate: self.learning_rate,
            l1: self.l1,
            batch_size: self.batch_size,
        }
    }
}

/// Directory and file names for a command whose `--out` is either a
/// directory or a checkpoint path.
struct ModelOutputs {
    dir: PathBuf,
    checkpoint: PathBuf,
    manifest: PathBuf,
    sidecar: Box<dyn Fn(&str) -> PathBuf>,
}

fn model_outputs(out: &Path, default_name: &str) -> ModelOutputs {
    let is_file = matches!(out.extension().and_then(|e| e.to_str()), Some("ckpt" | "json"));
    if is_file {
        let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        let d = dir.clone();
        ModelOutputs {
            manifest: dir.join(format!("{stem}.manifest.json")),
            checkpoint: out.to_path_buf(),
            dir,
            sidecar: Box::new(move |name| d.join(format!("{stem}.{name}"))),
        }
    } else {
        let d = out.to_path_buf();
        ModelOutputs {
            dir: out.to_path_buf(),
            checkpoint: out.join(default_name),
            manifest: out.join("manifest.json"),
            sidecar: Box::new(move |name| d.join(name)),
        }
    }
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train", None, serde_json::Value::Null);
    let schema = load_schema(args.schema.as_deref(), &mut manifest)?;
    let mut cfg: ModelSettings = load_config(args.config.as_deref(), &mut manifest)?;
    cfg.apply(&args.model);
    let seed = args.seed.unwrap_or(0);
    manifest.seed = Some(seed);
    manifest.config = serde_json::json!({ "model": to_json(&cfg), "schema_hash": schema.hash() });
    let samples = load_samples(&args.data, &mut manifest)?;
    check_features(&samples, &schema)?;
    let net_cfg = cfg.network(schema.width(), seed);
    let train_cfg = cfg.train(seed);
    net_cfg.validate()?;
    train_cfg.validate()?;
    let (net, state, history) = train(init_network(&net_cfg)?, &samples, &train_cfg)?;
    let outputs = model_outputs(&args.out, "model.ckpt");
    create_dir(&outputs.dir)?;
    save_model(&outputs.checkpoint, Checkpoint::new(net, schema).with_optimizer(state), &mut manifest)?;
    write_file(&(outputs.sidecar)("history.csv"), &mut manifest, |p| history.write_csv(p))?;
    finish(&manifest, &outputs.manifest)
}

fn search(args: SearchArgs) -> Result<()> {
    let mut manifest = RunManifest::new("search", None, serde_json::Value::Null);
    let schema = load_schema(args.schema.as_deref(), &mut manifest)?;
    let mut space: SearchSpace = match args.config.as_deref() {
        None => SearchSpace::default(),
        Some(p) => SearchSpace::from_toml(&read_text(p, &mut manifest)?)?,
    };
    if let Some(t) = args.trials {
        space.trials = t;
    }
    if let Some(i) = args.iterations {
        space.iterations = i;
    }
    space.validate()?;
    let seed = args.seed.unwrap_or(0);
    manifest.seed = Some(seed);
    manifest.config = serde_json::json!({
        "space": to_json(&space),
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "retrain": !args.no_retrain,
        "schema_hash": schema.hash(),
    });
    let train_set = load_samples(&args.train, &mut manifest)?;
    let valid = load_samples(&args.valid, &mut manifest)?;
    check_features(&train_set, &schema)?;
    check_features(&valid, &schema)?;
    let base = TrainConfig {
        iterations: space.iterations,
        shuffle_seed: seed,
        ..TrainConfig::default()
    };
    let report = match args.mode {
        SearchMode::Grid => grid_search(&space.grid, &base, seed, &train_set, &valid, args.workers)?,
        SearchMode::Random => random_search(&space, space.trials, &base, seed, &train_set, &valid, args.workers)?,
    };
    log::info!("{} trials, {} failed", report.results.len(), report.failures);
    create_dir(&args.out)?;
    write_file(&args.out.join("trials.csv"), &mut manifest, |p| write_trials_csv(p, &report))?;
    if !args.no_retrain {
        let best = report
            .best()
            .ok_or_else(|| Error::Invalid("every trial failed; nothing to retrain".into()))?;
        log::info!("retraining {} for {} iterations", best.config.hidden_label(), space.final_iterations);
        let train_cfg = TrainConfig {
            iterations: space.final_iterations,
            ..best.config.train_config(&base)
        };
        let net = init_network(&best.config.network_config(schema.width(), seed))?;
        let (net, state, _) = train(net, &train_set, &train_cfg)?;
        save_model(&args.out.join("best.ckpt"), Checkpoint::new(net, schema).with_optimizer(state), &mut manifest)?;
    }
    finish(&manifest, &args.out.join("manifest.json"))
}

fn seed_study_cmd(args: SeedStudyArgs) -> Result<()> {
    let mut manifest = RunManifest::new("seed-study", None, serde_json::Value::Null);
    let mut cfg: ModelSettings = load_config(args.config.as_deref(), &mut manifest)?;
    cfg.apply(&args.model);
    let base_seed = args.seed.unwrap_or(0);
    manifest.seed = Some(base_seed);
    manifest.config = serde_json::json!({ "model": to_json(&cfg), "seeds": args.seeds });
    let train_set = load_samples(&args.train, &mut manifest)?;
    let eval = load_samples(&args.eval, &mut manifest)?;
    let base = cfg.train(base_seed);
    base.validate()?;
    let report = seed_study(&cfg.trial(), args.seeds, base_seed, &base, &train_set, &eval, args.workers)?;
    create_dir(&args.out)?;
    write_file(&args.out.join("seed_study.csv"), &mut manifest, |p| write_seed_study_csv(p, &report))?;
    write_file(&args.out.join("seed_study_summary.csv"), &mut manifest, |p| {
        let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        write_summary_rows(std::io::BufWriter::new(file), &report).map_err(|e| Error::io(p, e))
    })?;
    write_file(&args.out.join("roc_points.csv"), &mut manifest, |p| write_roc_points_csv(p, &report))?;
    finish(&manifest, &args.out.join("manifest.json"))
}

/// Smallest positive timestamp step inside any office, in seconds.
fn infer_cadence(samples: &SampleSet) -> Option<i64> {
    let mut best: Option<i64> = None;
    for w in 1..samples.len() {
        if samples.office_ids[w] == samples.office_ids[w - 1] {
            let d = samples.timestamps[w] - samples.timestamps[w - 1];
            if d > 0 {
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
    }
    best
}

fn quartile_fields(q: Option<Quartiles>) -> [String; 4] {
    match q {
        Some(q) => [q.q25.to_string(), q.median.to_string(), q.q75.to_string(), q.iqr.to_string()],
        None => Default::default(),
    }
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("evaluate", None, serde_json::Value::Null);
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Error::Config("threshold must be in [0, 1]".into()));
    }
    let ckpt = load_model(&args.model, &mut manifest)?;
    let samples = load_samples(&args.data, &mut manifest)?;
    check_features(&samples, &ckpt.schema)?;
    if samples.is_empty() {
        return Err(Error::Invalid("no samples to evaluate".into()));
    }
    let cadence_s = match args.cadence {
        Some(c) if c > 0 => c as i64 * 60,
        Some(_) => return Err(Error::Config("cadence must be positive".into())),
        None => infer_cadence(&samples).unwrap_or(600),
    };
    manifest.config = serde_json::json!({ "threshold": args.threshold, "cadence_s": cadence_s });
    let (ev, probs) = nn::evaluate(&ckpt.network, &samples, args.threshold)?;
    let predicted: Vec<bool> = probs.iter().map(|&p| p >= args.threshold).collect();
    let curve = roc(&probs, &samples.labels)?;
    create_dir(&args.out)?;

    write_file(&args.out.join("metrics.csv"), &mut manifest, |p| {
        let mut w = csv_file(p)?;
        let err = csv_err(p);
        let (cm, r) = (ev.confusion, ev.rates);
        w.write_record(["samples", "tp", "fp", "tn", "fn", "acc", "tpr", "tnr", "fpr", "fnr", "f1", "auc"])
            .map_err(&err)?;
        w.write_record([
            cm.total().to_string(),
            cm.tp.to_string(),
            cm.fp.to_string(),
            cm.tn.to_string(),
            cm.fn_.to_string(),
            opt(r.acc),
            opt(r.tpr),
            opt(r.tnr),
            opt(r.fpr),
            opt(r.fnr),
            opt(r.f1),
            opt(ev.auc),
        ])
        .map_err(&err)?;
        w.flush().map_err(|e| Error::io(p, e))
    })?;

    write_file(&args.out.join("roc_points.csv"), &mut manifest, |p| {
        let mut w = csv_file(p)?;
        let err = csv_err(p);
        w.write_record(["fpr", "tpr"]).map_err(&err)?;
        for (fpr, tpr) in &curve.points {
            w.write_record([fpr.to_string(), tpr.to_string()]).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    })?;

    let offices = samples.offices();
    let mut durations: [[Vec<f64>; 2]; 2] = Default::default();
    let mut summary = Vec::with_capacity(offices.len());
    for office in &offices {
        let idx = samples.office_indices(office);
        let stamps: Vec<i64> = idx.iter().map(|&i| samples.timestamps[i]).collect();
        let observed: Vec<bool> = idx.iter().map(|&i| samples.labels[i]).collect();
        let pred: Vec<bool> = idx.iter().map(|&i| predicted[i]).collect();
        let mut row = vec![office.clone(), idx.len().to_string()];
        for (source, states) in [&observed, &pred].into_iter().enumerate() {
            let stats = duration_stats(states, &stamps, cadence_s)?;
            for s in &stats.sequences {
                let kind = usize::from(s.kind == SequenceKind::Closed);
                durations[source][kind].push(s.hours);
            }
            let b = metrics::behavior_summary(states, &stamps, cadence_s, ActionCount::Opening)?;
            row.push(b.fraction_open.to_string());
            row.push(b.actions_per_day.to_string());
        }
        summary.push(row);
    }

    write_file(&args.out.join("durations.csv"), &mut manifest, |p| {
        let mut w = csv_file(p)?;
        let err = csv_err(p);
        w.write_record(["source", "state", "count", "q25", "median", "q75", "iqr"]).map_err(&err)?;
        for (s, source) in ["observed", "predicted"].iter().enumerate() {
            for (k, state) in ["open", "closed"].iter().enumerate() {
                let hours = &durations[s][k];
                let [q25, median, q75, iqr] = quartile_fields(Quartiles::of(hours));
                w.write_record([source.to_string(), state.to_string(), hours.len().to_string(), q25, median, q75, iqr])
                    .map_err(&err)?;
            }
        }
        w.flush().map_err(|e| Error::io(p, e))
    })?;

    write_file(&args.out.join("summary.csv"), &mut manifest, |p| {
        let mut w = csv_file(p)?;
        let err = csv_err(p);
        w.write_record([
            "office_id",
            "samples",
            "fraction_open_observed",
            "actions_per_day_observed",
            "fraction_open_predicted",
            "actions_per_day_predicted",
        ])
        .map_err(&err)?;
        for row in &summary {
            w.write_record(row).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    })?;
    finish(&manifest, &args.out.join("manifest.json"))
}

fn adapt_cmd(args: AdaptArgs) -> Result<()> {
    let mut manifest = RunManifest::new("adapt", None, serde_json::Value::Null);
    let mut plan: AdaptationPlan = load_config(args.config.as_deref(), &mut manifest)?;
    if let Some(s) = args.seed {
        plan.train.shuffle_seed = s;
    }
    if let Some(v) = args.step_iterations {
        plan.step_iterations = v;
    }
    if let Some(v) = args.max_steps {
        plan.max_steps = v;
    }
    if args.carry_optimizer {
        plan.carry_optimizer = true;
    }
    plan.validate()?;
    manifest.seed = Some(plan.train.shuffle_seed);
    manifest.config = serde_json::json!({ "plan": to_json(&plan), "n_adapt": args.n_adapt });
    let ckpt = load_model(&args.model, &mut manifest)?;
    let samples = load_samples(&args.data, &mut manifest)?;
    check_features(&samples, &ckpt.schema)?;
    let (adapt_set, eval_set) = split_sequential(&samples, args.n_adapt)?;
    let outcome = adapt(
        &ckpt.network,
        ckpt.optimizer.as_ref(),
        &ckpt.schema,
        &plan,
        &adapt_set,
        &eval_set,
    )?;
    let outputs = model_outputs(&args.out, "adapted.ckpt");
    create_dir(&outputs.dir)?;
    save_model(
        &outputs.checkpoint,
        Checkpoint::new(outcome.network, ckpt.schema).with_optimizer(outcome.optimizer),
        &mut manifest,
    )?;
    write_file(&(outputs.sidecar)("adaptation_trace.csv"), &mut manifest, |p| outcome.trace.write_csv(p))?;
    finish(&manifest, &outputs.manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CosimSettings {
    zone: ZoneParams,
    /// Persons present during office hours.
    occupants: f64,
    /// Local arrival and departure, hours.
    arrival_h: f64,
    departure_h: f64,
    weekdays_only: bool,
    threshold: f64,
    utc_offset_minutes: i32,
    initial_temp: f64,
    initial_co2: f64,
}

impl Default for CosimSettings {
    fn default() -> Self {
        Self {
            zone: ZoneParams::default(),
            occupants: 1.0,
            arrival_h: 8.0,
            departure_h: 17.0,
            weekdays_only: true,
            threshold: 0.5,
            utc_offset_minutes: 60,
            initial_temp: 21.0,
            initial_co2: 420.0,
        }
    }
}

impl CosimSettings {
    fn occupants_at(&self, t: i64) -> f64 {
        let local = t + self.utc_offset_minutes as i64 * 60;
        let hour = local.rem_euclid(util::SECONDS_PER_DAY) as f64 / 3600.0;
        let weekday = util::local_day_of_week(t, self.utc_offset_minutes) < 5;
        if (weekday || !self.weekdays_only) && hour >= self.arrival_h && hour < self.departure_h {
            self.occupants
        } else {
            0.0
        }
    }
}

fn cosim(args: CosimArgs) -> Result<()> {
    let mut manifest = RunManifest::new("cosim", None, serde_json::Value::Null);
    let cfg: CosimSettings = load_config(args.config.as_deref(), &mut manifest)?;
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(Error::Config("threshold must be in [0, 1]".into()));
    }
    let rules = load_rules(args.impute.as_deref(), ImputationRules::sparse_building_defaults(), &mut manifest)?;
    manifest.config = serde_json::json!({ "settings": to_json(&cfg), "rules": to_json(&rules), "days": args.days });
    let ckpt = load_model(&args.model, &mut manifest)?;
    let mut weather = ingest_table(&args.weather, TableKind::Weather, &mut manifest)?;
    if let (Some(days), Some((start, _))) = (args.days, weather.time_range()) {
        let end = start + days as i64 * util::SECONDS_PER_DAY;
        let cadence = weather.cadence();
        let rows = weather.rows().iter().filter(|r| r.timestamp < end).cloned().collect();
        weather = TimeSeriesTable::new(weather.columns().to_vec(), rows).with_cadence(cadence);
    }
    let boundary = BoundarySeries::from_weather(&weather, |t| cfg.occupants_at(t))?;
    let initial = ZoneState {
        temp: cfg.initial_temp,
        co2: cfg.initial_co2,
        window_open: false,
        timestamp: boundary.timestamps[0],
    };
    let mut policy = ModelPolicy {
        network: &ckpt.network,
        threshold: cfg.threshold,
    };
    let run = run_cosim(
        &mut policy,
        &cfg.zone,
        &boundary,
        &ckpt.schema,
        &rules,
        initial,
        cfg.utc_offset_minutes,
    )?;
    create_dir(&args.out)?;
    write_file(&args.out.join("trajectory.csv"), &mut manifest, |p| run.write_csv(p))?;
    write_file(&args.out.join("behavior.csv"), &mut manifest, |p| {
        let mut w = csv_file(p)?;
        let err = csv_err(p);
        w.write_record(["metric", "value"]).map_err(&err)?;
        let b = &run.behavior;
        let d = &run.durations;
        let mut rows = vec![
            ("fraction_open", b.fraction_open.to_string()),
            ("actions_per_day", b.actions_per_day.to_string()),
            ("actions", b.actions.to_string()),
            ("monitored_days", b.monitored_days.to_string()),
            ("open_sequences", d.open_count.to_string()),
            ("closed_sequences", d.closed_count.to_string()),
        ];
        for (name, q) in [("open", d.open), ("closed", d.closed)] {
            let [q25, median, q75, iqr] = quartile_fields(q);
            rows.push((if name == "open" { "open_q25_h" } else { "closed_q25_h" }, q25));
            rows.push((if name == "open" { "open_median_h" } else { "closed_median_h" }, median));
            rows.push((if name == "open" { "open_q75_h" } else { "closed_q75_h" }, q75));
            rows.push((if name == "open" { "open_iqr_h" } else { "closed_iqr_h" }, iqr));
        }
        for (k, v) in rows {
            w.write_record([k.to_string(), v]).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(p, e))
    })?;
    finish(&manifest, &args.out.join("manifest.json"))
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut manifest = RunManifest::new("serve", None, serde_json::Value::Null);
    let rules = load_rules(args.impute.as_deref(), ImputationRules::sparse_building_defaults(), &mut manifest)?;
    manifest.config = serde_json::json!({
        "rules": to_json(&rules),
        "utc_offset_minutes": args.utc_offset,
        "tcp": args.tcp,
    });
    let ckpt = load_model(&args.model, &mut manifest)?;
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        finish(&manifest, &dir.join("manifest.json"))?;
    }
    log::info!("schema hash {}", ckpt.schema.hash());
    let network = Arc::new(ckpt.network);
    match &args.tcp {
        Some(addr) => serve_tcp(addr.as_str(), network, ckpt.schema, rules, args.utc_offset),
        None => {
            let mut session = ProtocolSession::new(network, ckpt.schema, rules, args.utc_offset)?;
            let stdin = std::io::stdin();
            let mut stdout = std::io::stdout().lock();
            serve_stream(&mut session, stdin.lock(), &mut stdout).map_err(|e| Error::io("<stdio>", e))?;
            stdout.flush().map_err(|e| Error::io("<stdio>", e))
        }
    }
}
