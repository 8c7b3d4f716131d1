//! Command implementations behind the `pranc` binary.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pranc::baselines::{
    regress_span, span_accuracy, train_full, BaselineRow, FullTrainConfig, RegressionConfig,
};
use pranc::basis::{BasisSpec, StreamConfig, DEFAULT_CHUNK};
use pranc::codec::{
    estimate_transfer, packet_len, param_budget, unpack_for, Checkpoint, PrancPacket,
};
use pranc::data::{DataSpec, Dataset, Split};
use pranc::nn::{evaluate, evaluate_with, Model, ModelDef};
use pranc::reconstruct::{
    alpha_histogram, infer_on_demand, parallel_partial_sums, partial_reconstruct,
    reconstruct_full, reconstruct_slice, Ordering, ReconstructionPlan,
};
use pranc::trainer::{
    init_state, train, LrSchedule, OptimizerKind, Resample, TrainConfig, TrainState,
};
use pranc::PrancError;

pub const CHUNK_ENV: &str = "PRANC_CHUNK";
const EVAL_BATCH: usize = 256;

#[derive(Debug, Parser)]
#[command(name = "pranc", version, about = "Train, pack and rebuild models as seeded random-basis mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train mixture coefficients and write a .pranc packet
    Train(TrainArgs),
    /// Turn a training checkpoint into a plain packet
    Pack(PackArgs),
    /// Rebuild theta from a packet and write it as raw little-endian f32
    Reconstruct(ReconstructArgs),
    /// Evaluate a packet on the test split
    Infer(InferArgs),
    /// Transfer time of a packet or a raw model at a given bitrate
    Cost(CostArgs),
    /// Print the communicated parameter budget of a model
    Budget(BudgetArgs),
    /// Compare full training, span regression and coefficient training
    Regress(RegressArgs),
    /// Train once per k and report test accuracy
    AblateK(AblateArgs),
    /// Accuracy of partial reconstructions over prefixes of the bases
    PartialCurve(PartialArgs),
    /// Accuracy after perturbing the master seed
    SeedSensitivity(SeedArgs),
    /// Histogram of the coefficients in a packet
    AlphaHist(HistArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model definition file
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset, e.g. `blobs:train=200,test=100,seed=0` or `mnist:dir=PATH`
    #[arg(long, default_value = "blobs")]
    pub data: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResampleArg {
    Epoch,
    Iteration,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    /// Master seed of the basis family
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Coefficients updated per epoch; defaults to min(500, k)
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Fraction of epochs before the learning rate drops
    #[arg(long, default_value_t = 0.8)]
    pub lr_drop_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr_drop_factor: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    /// Seed of subset sampling and shuffling; defaults to --seed
    #[arg(long)]
    pub subset_seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ResampleArg::Epoch)]
    pub resample: ResampleArg,
    /// Rebuild theta from alpha every this many epochs (0 = never)
    #[arg(long, default_value_t = 50)]
    pub rebuild_every: usize,
}

impl TrainOpts {
    pub fn config(&self, stream: StreamConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: LrSchedule {
                base: self.lr,
                drop_frac: self.lr_drop_frac,
                drop_factor: self.lr_drop_factor,
            },
            m: self.m.unwrap_or(500).min(self.k),
            batch_size: self.batch_size,
            optimizer: match self.optimizer {
                OptimizerArg::Sgd => OptimizerKind::default(),
                OptimizerArg::Adam => OptimizerKind::adam(),
            },
            subset_seed: self.subset_seed.unwrap_or(self.seed),
            resample: match self.resample {
                ResampleArg::Epoch => Resample::PerEpoch,
                ResampleArg::Iteration => Resample::PerIteration,
            },
            rebuild_every: self.rebuild_every,
            stream,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Output packet
    #[arg(long)]
    pub out: PathBuf,
    /// Omit the master seed from the packet
    #[arg(long)]
    pub detached_seed: bool,
    /// Also write a resumable checkpoint here
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Resume from a checkpoint
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Per-epoch CSV log (epoch, lr, loss)
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// JSON summary of the run
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub detached_seed: bool,
}

#[derive(Debug, Args)]
pub struct PacketArgs {
    /// Packet file
    #[arg(long)]
    pub packet: PathBuf,
    /// Master seed, required for packets written with a detached seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sum the bases in this many contiguous worker blocks
    #[arg(long)]
    pub workers: Option<usize>,
    /// Only entries START..END of theta
    #[arg(long, value_parser = parse_range)]
    pub range: Option<std::ops::Range<usize>>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "blobs")]
    pub data: String,
    /// Regenerate weights block by block with at most this many floats resident
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Packet file whose size is costed
    #[arg(long, conflicts_with_all = ["params", "k"])]
    pub packet: Option<PathBuf>,
    /// Raw f32 model with this many parameters
    #[arg(long, conflicts_with = "k")]
    pub params: Option<u64>,
    /// Packet with this many coefficients
    #[arg(long)]
    pub k: Option<usize>,
    /// Batchnorm statistics carried with --k
    #[arg(long, default_value_t = 0, requires = "k")]
    pub bn: usize,
    #[arg(long, default_value_t = 100.0)]
    pub bitrate: f64,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct RegressArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    #[arg(long, default_value_t = 30)]
    pub full_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub full_lr: f64,
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Also train coefficients for this many epochs (0 = skip)
    #[arg(long, default_value_t = 0)]
    pub pranc_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Comma-separated k values
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PartialArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "blobs")]
    pub data: String,
    /// Comma-separated prefix lengths; defaults to every prefix for k <= 256
    /// and 65 evenly spaced ones otherwise
    #[arg(long, value_delimiter = ',')]
    pub prefixes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "natural,sorted")]
    pub orderings: Vec<String>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[command(flatten)]
    pub packet: PacketArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "blobs")]
    pub data: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,1")]
    pub deltas: Vec<i64>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HistArgs {
    #[arg(long)]
    pub packet: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<std::ops::Range<usize>, String> {
    let (a, b) = s.split_once("..").ok_or("expected START..END")?;
    let a = a.parse().map_err(|_| format!("bad start {a:?}"))?;
    let b = b.parse().map_err(|_| format!("bad end {b:?}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(a..b)
}

/// Streaming configuration, honoring `PRANC_CHUNK`.
pub fn stream_config() -> anyhow::Result<StreamConfig> {
    let chunk = match std::env::var(CHUNK_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(c) if c > 0 => c,
            _ => bail!(PrancError::InvalidConfig(format!("{CHUNK_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => DEFAULT_CHUNK,
    };
    Ok(StreamConfig::default().with_chunk(chunk))
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_model(path: &Path) -> anyhow::Result<Model> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let def: ModelDef = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    Ok(Model::new(def)?)
}

pub fn load_data(spec: &str) -> anyhow::Result<Split> {
    let spec: DataSpec = spec.parse()?;
    spec.load().with_context(|| format!("loading dataset {:?}", spec.kind))
}

pub fn load_packet(path: &Path, model: &Model) -> anyhow::Result<PrancPacket> {
    let bytes = read(path)?;
    unpack_for(&bytes, model.schema()).with_context(|| format!("decoding {}", path.display()))
}

fn emit(csv: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match csv {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Test accuracy of the packet's reconstruction with an optional seed.
pub fn packet_accuracy(model: &Model, packet: &PrancPacket, data: &Dataset, seed: Option<u64>, stream: &StreamConfig) -> anyhow::Result<f64> {
    let spec = packet.basis_spec(seed)?;
    let theta = reconstruct_full(&spec, model.schema(), &packet.alpha, stream)?;
    Ok(evaluate(model, &theta, &packet.bn_stats, data, EVAL_BATCH)?)
}

pub struct TrainOutcome {
    pub state: TrainState,
    pub test_accuracy: f64,
    pub losses: Vec<f64>,
}

/// Trains coefficients from scratch on `split.train`.
pub fn train_pranc(model: &Model, split: &Split, seed: u64, k: usize, config: &TrainConfig) -> anyhow::Result<TrainOutcome> {
    let spec = BasisSpec::new(seed, k)?;
    let mut state = init_state(&spec, model, config)?;
    let mut losses = Vec::new();
    train(model, &mut state, &split.train, config, |r, _| losses.push(r.loss))?;
    let test_accuracy = evaluate(model, &state.theta, &state.bn_stats, &split.test, EVAL_BATCH)?;
    Ok(TrainOutcome {
        state,
        test_accuracy,
        losses,
    })
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model: String,
    data: String,
    d: usize,
    k: usize,
    bn_stats: usize,
    master_seed: u64,
    epochs: usize,
    final_loss: Option<f64>,
    test_accuracy: f64,
    packet_bytes: usize,
    budget: String,
}

fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model.model)?;
    let split = load_data(&args.model.data)?;
    let stream = stream_config()?;
    let config = args.opts.config(stream);
    let mut state = match &args.resume {
        Some(p) => {
            let ck = Checkpoint::from_bytes(&read(p)?).with_context(|| format!("decoding {}", p.display()))?;
            TrainState::resume(ck, &model, &config, None)?
        }
        None => init_state(&BasisSpec::new(args.opts.seed, args.opts.k)?, &model, &config)?,
    };
    let mut log = String::from("epoch,lr,loss\n");
    let mut last_loss = None;
    train(&model, &mut state, &split.train, &config, |r, _| {
        let _ = writeln!(log, "{},{:e},{:.6}", r.epoch, r.lr, r.loss);
        last_loss = Some(r.loss);
    })?;
    if let Some(p) = &args.log {
        fs::write(p, &log).with_context(|| format!("writing {}", p.display()))?;
    }
    let schema = model.schema();
    if let Some(p) = &args.checkpoint {
        fs::write(p, state.checkpoint(schema).to_bytes()).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut packet = state.packet(schema);
    if args.detached_seed {
        packet = packet.detached();
    }
    let bytes = packet.to_bytes();
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    let accuracy = evaluate(&model, &state.theta, &state.bn_stats, &split.test, EVAL_BATCH)?;
    println!("test_accuracy={accuracy:.4} packet_bytes={} k={} d={}", bytes.len(), state.spec.k(), schema.d());
    if let Some(p) = &args.summary {
        let summary = TrainSummary {
            model: args.model.model.display().to_string(),
            data: args.model.data.clone(),
            d: schema.d(),
            k: state.spec.k(),
            bn_stats: schema.bn_total(),
            master_seed: state.spec.master_seed(),
            epochs: state.epoch,
            final_loss: last_loss,
            test_accuracy: accuracy,
            packet_bytes: bytes.len(),
            budget: param_budget(schema, state.spec.k()).to_string(),
        };
        fs::write(p, serde_json::to_string_pretty(&summary)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_pack(args: &PackArgs) -> anyhow::Result<()> {
    let ck = Checkpoint::from_bytes(&read(&args.checkpoint)?)
        .with_context(|| format!("decoding {}", args.checkpoint.display()))?;
    let mut packet = ck.packet;
    if args.detached_seed {
        packet = packet.detached();
    }
    let bytes = packet.to_bytes();
    fs::write(&args.out, &bytes).with_context(|| format!("writing {}", args.out.display()))?;
    println!("packet_bytes={}", bytes.len());
    Ok(())
}

fn cmd_reconstruct(args: &ReconstructArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let packet = load_packet(&args.packet.packet, &model)?;
    let spec = packet.basis_spec(args.packet.seed)?;
    let stream = stream_config()?;
    let schema = model.schema();
    let theta = match (&args.range, args.workers) {
        (Some(_), Some(_)) => bail!(PrancError::InvalidConfig("--range and --workers are exclusive".into())),
        (Some(r), None) => reconstruct_slice(&spec, schema, &packet.alpha, r.clone(), &stream)?,
        (None, Some(g)) => parallel_partial_sums(&spec, schema, &packet.alpha, g, &stream)?,
        (None, None) => reconstruct_full(&spec, schema, &packet.alpha, &stream)?,
    };
    let bytes: Vec<u8> = theta.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&args.out, bytes).with_context(|| format!("writing {}", args.out.display()))?;
    println!("entries={}", theta.len());
    Ok(())
}

fn cmd_infer(args: &InferArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let packet = load_packet(&args.packet.packet, &model)?;
    let split = load_data(&args.data)?;
    let stream = stream_config()?;
    match args.budget {
        None => {
            let acc = packet_accuracy(&model, &packet, &split.test, args.packet.seed, &stream)?;
            println!("test_accuracy={acc:.4} samples={}", split.test.len());
        }
        Some(budget) => {
            let mut peak = 0;
            let acc = evaluate_with(&model, &split.test, EVAL_BATCH, |x| {
                let (logits, report) = infer_on_demand(&packet, &model, x, budget, args.packet.seed)?;
                peak = peak.max(report.peak_resident);
                Ok(logits)
            })?;
            println!("test_accuracy={acc:.4} samples={} peak_resident={peak}", split.test.len());
        }
    }
    Ok(())
}

/// `3d 2h 5m 7.0s` style rendering.
pub fn human_duration(seconds: f64) -> String {
    let mut rest = seconds;
    let mut out = String::new();
    for (unit, len) in [("d", 86_400.0), ("h", 3_600.0), ("m", 60.0)] {
        if rest >= len {
            let n = (rest / len).floor();
            let _ = write!(out, "{n}{unit} ");
            rest -= n * len;
        }
    }
    let _ = write!(out, "{rest:.1}s");
    out
}

fn cmd_cost(args: &CostArgs) -> anyhow::Result<()> {
    let bytes = match (&args.packet, args.params, args.k) {
        (Some(p), None, None) => fs::metadata(p).with_context(|| format!("reading {}", p.display()))?.len(),
        (None, Some(n), None) => n * 4,
        (None, None, Some(k)) => packet_len(k, args.bn, false) as u64,
        _ => bail!(PrancError::InvalidConfig("give exactly one of --packet, --params or --k".into())),
    };
    let seconds = estimate_transfer(bytes, args.bitrate)?;
    println!("bytes={bytes} bitrate={} seconds={seconds:.2} ({})", args.bitrate, human_duration(seconds));
    Ok(())
}

fn cmd_budget(args: &BudgetArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let b = param_budget(model.schema(), args.k);
    println!("{b}");
    println!("d={} communicated={} compression={:.2}x", b.d, b.communicated(), b.compression_ratio());
    Ok(())
}

/// Rows `full`, `regress_span` and optionally `pranc`.
pub fn regress_rows(model: &Model, split: &Split, args: &RegressArgs, stream: &StreamConfig) -> anyhow::Result<Vec<BaselineRow>> {
    let full = train_full(
        model,
        &split.train,
        &FullTrainConfig {
            epochs: args.full_epochs,
            lr: LrSchedule {
                base: args.full_lr,
                ..LrSchedule::default()
            },
            init_seed: args.seed,
            shuffle_seed: args.seed,
            ..FullTrainConfig::default()
        },
    )?;
    let d = model.schema().d();
    let mut rows = vec![BaselineRow {
        method: "full".into(),
        k: d,
        residual: None,
        accuracy: evaluate(model, &full.theta, &full.bn_stats, &split.test, EVAL_BATCH)?,
    }];
    let spec = BasisSpec::new(args.seed, args.k)?;
    let fit = regress_span(
        &full.theta,
        &spec,
        model.schema(),
        &RegressionConfig {
            max_iters: args.iters,
            stream: *stream,
            ..RegressionConfig::default()
        },
    )?;
    rows.push(BaselineRow {
        method: "regress_span".into(),
        k: args.k,
        residual: Some(fit.residual),
        accuracy: span_accuracy(model, &spec, &fit.alpha, &full.bn_stats, &split.test, stream)?,
    });
    if args.pranc_epochs > 0 {
        let config = TrainConfig {
            epochs: args.pranc_epochs,
            lr: LrSchedule {
                base: args.lr,
                ..LrSchedule::default()
            },
            m: args.k,
            batch_size: args.batch_size,
            subset_seed: args.seed,
            stream: *stream,
            ..TrainConfig::default()
        };
        let out = train_pranc(model, split, args.seed, args.k, &config)?;
        rows.push(BaselineRow {
            method: "pranc".into(),
            k: args.k,
            residual: None,
            accuracy: out.test_accuracy,
        });
    }
    Ok(rows)
}

fn cmd_regress(args: &RegressArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model.model)?;
    let split = load_data(&args.model.data)?;
    let rows = regress_rows(&model, &split, args, &stream_config()?)?;
    let mut out = format!("{}\n", BaselineRow::HEADER);
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    emit(&args.csv, &out)
}

/// `(k, test accuracy)` per requested k, in the given order.
pub fn ablate_k(model: &Model, split: &Split, ks: &[usize], opts: &TrainOpts, stream: StreamConfig) -> anyhow::Result<Vec<(usize, f64)>> {
    let mut seen = BTreeSet::new();
    for &k in ks {
        if k == 0 {
            bail!(PrancError::InvalidConfig("k must be positive".into()));
        }
        if !seen.insert(k) {
            bail!(PrancError::InvalidConfig(format!("k = {k} listed twice")));
        }
    }
    ks.iter()
        .map(|&k| {
            let opts = TrainOpts { k, ..opts.clone() };
            let out = train_pranc(model, split, opts.seed, k, &opts.config(stream))?;
            Ok((k, out.test_accuracy))
        })
        .collect()
}

fn cmd_ablate_k(args: &AblateArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model.model)?;
    let split = load_data(&args.model.data)?;
    let rows = ablate_k(&model, &split, &args.ks, &args.opts, stream_config()?)?;
    let mut out = String::from("k,accuracy\n");
    for (k, acc) in rows {
        let _ = writeln!(out, "{k},{acc:.4}");
    }
    emit(&args.csv, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialRow {
    pub ordering: Ordering,
    pub prefix: usize,
    pub accuracy: f64,
}

/// Default prefix grid: every prefix for small k, else 65 evenly spaced.
pub fn default_prefixes(k: usize) -> Vec<usize> {
    if k <= 256 {
        (0..=k).collect()
    } else {
        let mut v: Vec<usize> = (0..=64).map(|i| i * k / 64).collect();
        v.dedup();
        v
    }
}

pub fn partial_curve(
    model: &Model,
    packet: &PrancPacket,
    data: &Dataset,
    orderings: &[Ordering],
    prefixes: &[usize],
    seed: Option<u64>,
    stream: &StreamConfig,
) -> anyhow::Result<Vec<PartialRow>> {
    let spec = packet.basis_spec(seed)?;
    let mut rows = Vec::with_capacity(orderings.len() * prefixes.len());
    for &ordering in orderings {
        for &prefix in prefixes {
            let plan = ReconstructionPlan {
                ordering,
                prefix,
                stream: *stream,
            };
            let theta = partial_reconstruct(&spec, model.schema(), &packet.alpha, &plan)?;
            rows.push(PartialRow {
                ordering,
                prefix,
                accuracy: evaluate(model, &theta, &packet.bn_stats, data, EVAL_BATCH)?,
            });
        }
    }
    Ok(rows)
}

fn cmd_partial_curve(args: &PartialArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let packet = load_packet(&args.packet.packet, &model)?;
    let split = load_data(&args.data)?;
    let orderings = args
        .orderings
        .iter()
        .map(|s| s.parse::<Ordering>())
        .collect::<Result<Vec<_>, _>>()?;
    let prefixes = if args.prefixes.is_empty() {
        default_prefixes(packet.k())
    } else {
        args.prefixes.clone()
    };
    let rows = partial_curve(&model, &packet, &split.test, &orderings, &prefixes, args.packet.seed, &stream_config()?)?;
    let mut out = String::from("ordering,prefix,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.4}", r.ordering.name(), r.prefix, r.accuracy);
    }
    emit(&args.csv, &out)
}

/// `(delta, accuracy)` after reconstructing with `master_seed + delta`.
pub fn seed_sensitivity(
    model: &Model,
    packet: &PrancPacket,
    data: &Dataset,
    deltas: &[i64],
    seed: Option<u64>,
    stream: &StreamConfig,
) -> anyhow::Result<Vec<(i64, f64)>> {
    let base = packet.basis_spec(seed)?.master_seed();
    deltas
        .iter()
        .map(|&delta| {
            let shifted = base.wrapping_add_signed(delta);
            Ok((delta, packet_accuracy(model, packet, data, Some(shifted), stream)?))
        })
        .collect()
}

fn cmd_seed_sensitivity(args: &SeedArgs) -> anyhow::Result<()> {
    let model = load_model(&args.model)?;
    let packet = load_packet(&args.packet.packet, &model)?;
    let split = load_data(&args.data)?;
    let rows = seed_sensitivity(&model, &packet, &split.test, &args.deltas, args.packet.seed, &stream_config()?)?;
    let mut out = String::from("seed_delta,accuracy\n");
    for (delta, acc) in rows {
        let _ = writeln!(out, "{delta},{acc:.4}");
    }
    emit(&args.csv, &out)
}

fn cmd_alpha_hist(args: &HistArgs) -> anyhow::Result<()> {
    let packet = pranc::codec::unpack(&read(&args.packet)?)
        .with_context(|| format!("decoding {}", args.packet.display()))?;
    let h = alpha_histogram(&packet.alpha, args.bins)?;
    let mut out = String::from("lo,hi,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let (lo, hi) = h.bin_edges(i);
        let _ = writeln!(out, "{lo:.6},{hi:.6},{c}");
    }
    emit(&args.csv, &out)
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Pack(a) => cmd_pack(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Cost(a) => cmd_cost(a),
        Command::Budget(a) => cmd_budget(a),
        Command::Regress(a) => cmd_regress(a),
        Command::AblateK(a) => cmd_ablate_k(a),
        Command::PartialCurve(a) => cmd_partial_curve(a),
        Command::SeedSensitivity(a) => cmd_seed_sensitivity(a),
        Command::AlphaHist(a) => cmd_alpha_hist(a),
    }
}

/// 2 for usage problems (bad configuration, missing inputs or seed), 1
/// otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 2;
            }
        }
        if let Some(e) = cause.downcast_ref::<PrancError>() {
            match e {
                PrancError::InvalidConfig(_) | PrancError::MissingSeed => return 2,
                PrancError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => return 2,
                _ => {}
            }
        }
    }
    1
}
