use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use ofdm_chest::bench::files::{
    load_stats, parse_key_values, save_stats, write_metrics_csv, write_sidecar, write_wordlength_csv,
};
use ofdm_chest::bench::sweeps::{dl_mse_at, ls_mse_at};
use ofdm_chest::bench::{
    eval_frames, gen_dataset, sweep_dataset_size, sweep_doppler, sweep_snr, sweep_wordlength, Dataset, DlEstimator,
    DlKind, Estimator, Lmmse, LsBilinear, MetricsRecord, PerfectCsi, RunConfig, SnrPolicy,
};
use ofdm_chest::channel::{realize_channel, true_channel, ChannelProfile};
use ofdm_chest::classical::{learn_statistics, LmmseStatistics};
use ofdm_chest::dlmodels::{build_iresnet, build_lsidnn, train, IresnetConfig, LsidnnConfig, TrainSpec};
use ofdm_chest::fxp::{quantize_model, FixedFormat, Precision};
use ofdm_chest::neural::{count_complexity, read_model_file, write_model_file, NetModel};
use ofdm_chest::{seeds, Error, PhyConfig, Result};

#[derive(Parser)]
#[command(name = "ofdm-chest", version, about = "OFDM pilot channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training dataset of LS pilot estimates and true channels.
    GenDataset(Common),
    /// Train an LSiDNN or iResNet model.
    Train(Common),
    /// Evaluate estimators at the given SNR points.
    Eval(Common),
    /// NMSE/MSE/BER over an SNR grid.
    SweepSnr(Common),
    /// NMSE/MSE/BER over Doppler values with fixed models and statistics.
    SweepDoppler(Common),
    /// Train LSiDNN on growing dataset prefixes and evaluate each.
    SweepDatasetSize(Common),
    /// Fixed-point word-length analysis for one estimator.
    SweepWordlength(Common),
    /// Learnable parameters and MACs of the network architectures.
    Complexity(Common),
}

/// Every option may also come from `--config` as `name = value`; flags win.
#[derive(Args, Default)]
struct Common {
    /// Plain-text key=value file overriding defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// epa, eva, etu or a profile file.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    doppler_hz: Option<String>,
    /// Comma-separated SNR values in dB.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    frames: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Fixed-point format `W,I`.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated: perfect, ls, lmmse, lsidnn, iresnet.
    #[arg(long)]
    estimators: Option<String>,
    /// lsidnn or iresnet.
    #[arg(long)]
    arch: Option<String>,
    /// Comma-separated LSiDNN hidden layer sizes.
    #[arg(long)]
    hidden: Option<String>,
    /// Neural blocks of iResNet.
    #[arg(long)]
    blocks: Option<String>,
    /// Comma-separated Doppler values for sweep-doppler.
    #[arg(long)]
    dopplers: Option<String>,
    /// Doppler at which statistics and models were trained.
    #[arg(long)]
    train_doppler_hz: Option<String>,
    /// Comma-separated dataset sizes for sweep-dataset-size.
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated `W,I` formats separated by `;`, or `auto`.
    #[arg(long)]
    formats: Option<String>,
    #[arg(long)]
    w_probe: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// LMMSE statistics file; learned and written there when missing.
    #[arg(long)]
    stats: Option<String>,
    /// Channel realizations used to learn LMMSE statistics.
    #[arg(long)]
    stats_frames: Option<String>,
    /// Frames per training dataset when no `--dataset` is given.
    #[arg(long)]
    train_frames: Option<String>,
}

struct Settings {
    cli: BTreeMap<&'static str, String>,
    file: BTreeMap<String, String>,
}

impl Settings {
    fn new(c: Common) -> Result<Self> {
        let file = match &c.config {
            Some(p) => parse_key_values(&std::fs::read_to_string(p)?)?
                .into_iter()
                .map(|(k, v)| (k.replace('-', "_"), v))
                .collect(),
            None => BTreeMap::new(),
        };
        let pairs = [
            ("profile", c.profile),
            ("doppler_hz", c.doppler_hz),
            ("snr", c.snr),
            ("frames", c.frames),
            ("epochs", c.epochs),
            ("batch", c.batch),
            ("lr", c.lr),
            ("seed", c.seed),
            ("format", c.format),
            ("model", c.model),
            ("dataset", c.dataset),
            ("out", c.out),
            ("estimators", c.estimators),
            ("arch", c.arch),
            ("hidden", c.hidden),
            ("blocks", c.blocks),
            ("dopplers", c.dopplers),
            ("train_doppler_hz", c.train_doppler_hz),
            ("sizes", c.sizes),
            ("formats", c.formats),
            ("w_probe", c.w_probe),
            ("tol", c.tol),
            ("stats", c.stats),
            ("stats_frames", c.stats_frames),
            ("train_frames", c.train_frames),
        ];
        let known: Vec<&str> = pairs.iter().map(|(k, _)| *k).collect();
        if let Some(k) = file.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown config key `{k}`")));
        }
        let cli = pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect();
        Ok(Self { cli, file })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.cli.get(key).or_else(|| self.file.get(key)).map(|s| s.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|_| Error::InvalidConfig(format!("cannot parse --{} `{v}`", key.replace('_', "-"))))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list<T: FromStr + Clone>(&self, key: &str, default: &[T]) -> Result<Vec<T>> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|_| Error::InvalidConfig(format!("bad entry `{s}` in --{}", key.replace('_', "-"))))
                })
                .collect(),
        }
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::InvalidConfig(format!("--{} is required", key.replace('_', "-"))))
    }
}

const DEFAULT_SNRS: [f64; 6] = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
const NOMINAL_DOPPLER_HZ: f64 = 97.0;

fn profile(s: &Settings) -> Result<ChannelProfile> {
    ChannelProfile::resolve(s.raw("profile").unwrap_or("epa"))
}

fn train_spec(s: &Settings) -> Result<TrainSpec> {
    let d = TrainSpec::default();
    Ok(TrainSpec {
        epochs: s.or("epochs", 50)?,
        batch_size: s.or("batch", d.batch_size)?,
        learning_rate: s.or("lr", d.learning_rate)?,
        train_fraction: d.train_fraction,
        seed: s.or("seed", d.seed)?,
    })
}

fn run_config(s: &Settings, default_snrs: &[f64]) -> Result<RunConfig> {
    Ok(RunConfig {
        profile: profile(s)?,
        doppler_hz: s.or("doppler_hz", NOMINAL_DOPPLER_HZ)?,
        snr_grid: s.list("snr", default_snrs)?,
        n_frames: s.or("frames", 500)?,
        seed: s.or("seed", 0)?,
        phy: PhyConfig::default(),
    })
}

fn output(s: &Settings) -> Result<Box<dyn Write>> {
    Ok(match s.raw("out") {
        Some(p) if p != "-" => Box::new(BufWriter::new(File::create(p)?)),
        _ => Box::new(BufWriter::new(io::stdout())),
    })
}

fn format(s: &Settings) -> Result<Option<FixedFormat>> {
    s.get::<FixedFormat>("format")
}

fn load_model(s: &Settings) -> Result<NetModel> {
    let model = read_model_file(s.require("model")?)?;
    Ok(match format(s)? {
        Some(f) => quantize_model(&model, f),
        None => model,
    })
}

fn model_kind(model: &NetModel) -> DlKind {
    if model.input_shape.h > 1 || model.input_shape.w > 1 {
        DlKind::Iresnet
    } else {
        DlKind::Lsidnn
    }
}

fn statistics(s: &Settings, profile: &ChannelProfile, doppler_hz: f64, phy: &PhyConfig) -> Result<LmmseStatistics> {
    let cache = s.raw("stats");
    if let Some(p) = cache.filter(|p| Path::new(p).exists()) {
        return load_stats(p);
    }
    let n: u64 = s.or("stats_frames", 1000)?;
    let seed = seeds::mix(s.or("seed", 0)?, 0x5747);
    let channels = (0..n)
        .map(|i| Ok(true_channel(&realize_channel(profile, doppler_hz, seeds::mix(seed, i), phy)?, phy)))
        .collect::<Result<Vec<_>>>()?;
    let stats = learn_statistics(channels.iter(), phy)?;
    if let Some(p) = cache {
        save_stats(p, &stats)?;
    }
    Ok(stats)
}

fn estimators(s: &Settings, default: &str, stats_doppler_hz: f64) -> Result<Vec<Box<dyn Estimator>>> {
    let names = s.raw("estimators").unwrap_or(default);
    let phy = PhyConfig::default();
    let precision = format(s)?.map_or(Precision::Double, Precision::Fixed);
    names
        .split(',')
        .map(|n| -> Result<Box<dyn Estimator>> {
            Ok(match n.trim().to_ascii_lowercase().as_str() {
                "perfect" => Box::new(PerfectCsi),
                "ls" => Box::new(LsBilinear { precision }),
                "lmmse" => Box::new(Lmmse {
                    stats: statistics(s, &profile(s)?, stats_doppler_hz, &phy)?,
                }),
                "lsidnn" | "iresnet" | "dl" => {
                    let model = load_model(s)?;
                    Box::new(DlEstimator::new(model_kind(&model), model))
                }
                other => return Err(Error::InvalidConfig(format!("unknown estimator `{other}`"))),
            })
        })
        .collect()
}

fn emit_metrics(s: &Settings, records: &[MetricsRecord]) -> Result<()> {
    let floored: usize = records.iter().map(|r| r.zf_floor_hits).sum();
    if floored > 0 {
        eprintln!("warning: {floored} zero channel estimates replaced by the equalizer floor");
    }
    let mut w = output(s)?;
    write_metrics_csv(&mut w, records)?;
    w.flush()?;
    Ok(())
}

fn training_set(s: &Settings) -> Result<Dataset> {
    if let Some(p) = s.raw("dataset") {
        return Dataset::load(p);
    }
    gen_dataset(
        &profile(s)?,
        s.or("doppler_hz", NOMINAL_DOPPLER_HZ)?,
        s.or("train_frames", 2000)?,
        SnrPolicy::default(),
        seeds::mix(s.or("seed", 0)?, 0xDA7A),
        &PhyConfig::default(),
    )
}

fn cmd_gen_dataset(s: &Settings) -> Result<()> {
    let snrs: Vec<f64> = s.list("snr", &[])?;
    let policy = match snrs.len() {
        0 => SnrPolicy::default(),
        1 if snrs[0].is_infinite() => SnrPolicy::Noiseless,
        1 => SnrPolicy::Fixed(snrs[0]),
        _ => SnrPolicy::Uniform(snrs),
    };
    let data = gen_dataset(
        &profile(s)?,
        s.or("doppler_hz", NOMINAL_DOPPLER_HZ)?,
        s.or("frames", 2000)?,
        policy,
        s.or("seed", 0)?,
        &PhyConfig::default(),
    )?;
    let out = s.require("out")?;
    data.save(out)?;
    println!("{} records written to {out}, sha256 {}", data.len(), data.hash()?);
    Ok(())
}

fn cmd_train(s: &Settings) -> Result<()> {
    let phy = PhyConfig::default();
    let spec = train_spec(s)?;
    let arch = s.raw("arch").unwrap_or("lsidnn").to_ascii_lowercase();
    let init = match arch.as_str() {
        "lsidnn" => build_lsidnn(
            &LsidnnConfig::for_phy(&phy).with_hidden(&s.list("hidden", &[48])?),
            spec.seed,
        )?,
        "iresnet" => build_iresnet(
            &IresnetConfig {
                n_neural_blocks: s.or("blocks", 4)?,
                ..Default::default()
            },
            &phy,
            spec.seed,
        )?,
        other => return Err(Error::InvalidConfig(format!("unknown architecture `{other}`"))),
    };
    let data = training_set(s)?;
    let (model, report) = train(&init, &data, &spec)?;
    for (e, (t, v)) in report.train_loss.iter().zip(&report.val_loss).enumerate() {
        eprintln!("epoch {:>4}  train {t:.6e}  val {v:.6e}", e + 1);
    }
    let out = s.require("out")?;
    write_model_file(out, &model)?;
    let first = &data.records[0];
    write_sidecar(
        format!("{out}.meta"),
        &[
            ("architecture", arch),
            ("profile", first.profile.clone()),
            ("doppler_hz", first.doppler_hz.to_string()),
            ("dataset_sha256", data.hash()?),
            ("records", data.len().to_string()),
            ("epochs", spec.epochs.to_string()),
            ("batch", spec.batch_size.to_string()),
            ("lr", spec.learning_rate.to_string()),
            ("train_fraction", spec.train_fraction.to_string()),
            ("seed", spec.seed.to_string()),
            ("final_val_loss", report.val_loss.last().unwrap().to_string()),
        ],
    )?;
    println!("model written to {out}");
    Ok(())
}

fn cmd_eval(s: &Settings, default_snrs: &[f64], default_estimators: &str) -> Result<()> {
    let cfg = run_config(s, default_snrs)?;
    let train_doppler = s.or("train_doppler_hz", cfg.doppler_hz)?;
    let boxed = estimators(s, default_estimators, train_doppler)?;
    let refs: Vec<&dyn Estimator> = boxed.iter().map(|b| b.as_ref()).collect();
    emit_metrics(s, &sweep_snr(&cfg, &refs)?)
}

fn cmd_sweep_doppler(s: &Settings) -> Result<()> {
    let cfg = run_config(s, &[10.0])?;
    let train_doppler = s.or("train_doppler_hz", NOMINAL_DOPPLER_HZ)?;
    let boxed = estimators(s, "ls,lmmse", train_doppler)?;
    let refs: Vec<&dyn Estimator> = boxed.iter().map(|b| b.as_ref()).collect();
    let dopplers = s.list("dopplers", &[0.0, 50.0, 97.0, 200.0, 300.0])?;
    emit_metrics(s, &sweep_doppler(&cfg, &refs, &dopplers)?)
}

fn cmd_sweep_dataset_size(s: &Settings) -> Result<()> {
    let cfg = run_config(s, &[10.0])?;
    let sizes: Vec<usize> = s.list("sizes", &[5, 50, 500, 2000])?;
    let largest = *sizes.iter().max().ok_or_else(|| Error::InvalidConfig("empty --sizes".into()))?;
    let pool = match s.raw("dataset") {
        Some(p) => Dataset::load(p)?,
        None => gen_dataset(
            &cfg.profile,
            cfg.doppler_hz,
            largest,
            SnrPolicy::default(),
            seeds::mix(cfg.seed, 0xDA7A),
            &cfg.phy,
        )?,
    };
    let arch = LsidnnConfig::for_phy(&cfg.phy).with_hidden(&s.list("hidden", &[48])?);
    emit_metrics(s, &sweep_dataset_size(&sizes, &train_spec(s)?, &arch, &pool, &cfg)?)
}

fn cmd_sweep_wordlength(s: &Settings) -> Result<()> {
    let cfg = run_config(s, &[10.0])?;
    let frames = eval_frames(&RunConfig {
        n_frames: s.or("frames", 200)?,
        ..cfg.clone()
    })?;
    let formats: Option<Vec<FixedFormat>> = match s.raw("formats") {
        None | Some("auto") => None,
        Some(list) => Some(list.split(';').map(FixedFormat::from_str).collect::<Result<_>>()?),
    };
    let w_probe = s.or("w_probe", 32)?;
    let tol = s.or("tol", 0.01)?;
    let which = s.raw("estimators").unwrap_or("ls").to_ascii_lowercase();
    let (name, sweep) = if which == "ls" {
        let eval = ls_mse_at(&frames, &cfg.phy);
        ("LS".to_string(), sweep_wordlength(&eval, formats.as_deref(), w_probe, tol)?)
    } else {
        let model = read_model_file(s.require("model")?)?;
        let kind = model_kind(&model);
        let eval = dl_mse_at(kind, &model, &frames, &cfg.phy);
        let name = DlEstimator::new(kind, model.clone()).name();
        (name, sweep_wordlength(&eval, formats.as_deref(), w_probe, tol)?)
    };
    match sweep.selected {
        Some(f) => eprintln!("{name}: selected {f}"),
        None => eprintln!("{name}: no probed format matches single precision"),
    }
    let mut w = output(s)?;
    write_wordlength_csv(&mut w, &name, &sweep)?;
    w.flush()?;
    Ok(())
}

fn cmd_complexity(s: &Settings) -> Result<()> {
    let phy = PhyConfig::default();
    let mut w = output(s)?;
    writeln!(w, "model,params,macs")?;
    if let Some(p) = s.raw("model") {
        let c = count_complexity(&read_model_file(p)?);
        writeln!(w, "{},{},{}", Path::new(p).display(), c.params, c.macs)?;
        return Ok(w.flush()?);
    }
    let base = LsidnnConfig::for_phy(&phy);
    for hidden in [&[48][..], &[1024], &[48, 48], &[1056], &[1024, 1024]] {
        let c = count_complexity(&build_lsidnn(&base.clone().with_hidden(hidden), 0)?);
        let label: Vec<String> = hidden.iter().map(|h| h.to_string()).collect();
        writeln!(w, "LSiDNN {},{},{}", label.join("-"), c.params, c.macs)?;
    }
    for blocks in [2, 3, 4] {
        let cfg = IresnetConfig {
            n_neural_blocks: blocks,
            ..Default::default()
        };
        let c = count_complexity(&build_iresnet(&cfg, &phy, 0)?);
        writeln!(w, "iResNet_{blocks},{},{}", c.params, c.macs)?;
    }
    Ok(w.flush()?)
}

fn run(cli: Cli) -> Result<()> {
    let (command, common) = match cli.command {
        Command::GenDataset(c) => ("gen-dataset", c),
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::SweepSnr(c) => ("sweep-snr", c),
        Command::SweepDoppler(c) => ("sweep-doppler", c),
        Command::SweepDatasetSize(c) => ("sweep-dataset-size", c),
        Command::SweepWordlength(c) => ("sweep-wordlength", c),
        Command::Complexity(c) => ("complexity", c),
    };
    let s = Settings::new(common)?;
    match command {
        "gen-dataset" => cmd_gen_dataset(&s),
        "train" => cmd_train(&s),
        "eval" => cmd_eval(&s, &[10.0], "ls"),
        "sweep-snr" => cmd_eval(&s, &DEFAULT_SNRS, "perfect,ls,lmmse"),
        "sweep-doppler" => cmd_sweep_doppler(&s),
        "sweep-dataset-size" => cmd_sweep_dataset_size(&s),
        "sweep-wordlength" => cmd_sweep_wordlength(&s),
        _ => cmd_complexity(&s),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
