//! Subcommand implementations. Every command is a pure function of
//! (inputs, config, seed) to output bytes; artifact-producing commands write
//! a manifest naming input hashes and the seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use prefbench_core::characterize::DatasetProfile;
use prefbench_core::data::{split_dataset, PreferenceDataset, SplitMode, UserId};
use prefbench_core::engine::{OptimConfig, OptimMethod};
use prefbench_core::eval::{
    adaptation_protocol, build_probe_set, evaluate, per_user_table, personalization_tax,
    sample_efficiency_sweep, AdaptMethod, AdaptationConfig, EvalReport, MethodSpec, SweepCell,
    DEFAULT_PROBE_COUNT, DEFAULT_PROBE_MARGIN,
};
use prefbench_core::models::{
    train_gpo_lite, FallbackPolicy, GpoConfig, PreferenceModel, VplConfig, DEFAULT_ALPHA,
    DEFAULT_K,
};
use prefbench_core::rng::substream;
use prefbench_core::synthgen::{
    archetypes_for, effective_utilities, generate_dataset, GenMode, GeneratorConfig,
};

use crate::error::CmdError;
use crate::io::dataset::{load_dataset, parse_mode, save_dataset};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint};
use crate::io::profiles::{load_profiles, save_profiles, sidecar_path};
use crate::io::report;
use crate::io::write_atomic;
use crate::manifest::Manifest;

mod config;
mod sweep_pool;

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "prefbench",
    version,
    about = "Synthetic preference populations, disagreement metrics, and personalized preference-learning experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic preference dataset plus its ground-truth profile sidecar
    Gen(GenArgs),
    /// Characterize a dataset: divergence, MV-ACC, minority users, consistency, room
    Profile(ProfileArgs),
    /// Train one method and write a checkpoint
    Train(TrainArgs),
    /// Evaluate checkpoints on a dataset
    Eval(EvalArgs),
    /// New-user adaptation protocol over budgets of few-shot pairs
    Adapt(AdaptArgs),
    /// Personalization-tax probe: fine-tune a probe-trained model toward one user
    Tax(TaxArgs),
    /// Sample-efficiency sweep over nested training prefixes
    Sweep(SweepArgs),
    /// Export response embeddings as CSV for external projection/plotting
    ExportEmbeddings(ExportArgs),
}

/// Applies PREFBENCH_OUT_DIR to relative output paths.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("PREFBENCH_OUT_DIR") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn parse_usize_list(s: &str, what: &str) -> Result<Vec<usize>, CmdError> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| CmdError::usage(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Adapt(args) => cmd_adapt(args),
        Command::Tax(args) => cmd_tax(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::ExportEmbeddings(args) => cmd_export(args),
    }
}

// ---------------------------------------------------------------------------
// gen

#[derive(Args)]
pub struct GenArgs {
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// soups | personalllm | tldr
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub triples: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Adversarial minority users (personalllm mode)
    #[arg(long)]
    pub minority: Option<usize>,
    /// Fraction of triples re-annotated once per user
    #[arg(long)]
    pub dup_frac: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn default_tau_for(mode: GenMode) -> f64 {
    match mode {
        GenMode::SoupsLike => 0.0,
        GenMode::PersonalLlmLike => 0.0,
        GenMode::TldrLike => 0.05,
    }
}

fn default_users_for(mode: GenMode) -> usize {
    match mode {
        GenMode::SoupsLike => 6,
        GenMode::PersonalLlmLike => 8,
        GenMode::TldrLike => 5,
    }
}

pub fn cmd_gen(args: GenArgs) -> Result<(), CmdError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mode = match args.mode.as_deref().or(file.str("mode")) {
        Some(m) => parse_mode(m)?,
        None => return Err(CmdError::usage("--mode is required (soups | personalllm | tldr)")),
    };
    let config = GeneratorConfig {
        mode,
        n_users: args
            .users
            .or(file.usize("users"))
            .unwrap_or_else(|| default_users_for(mode)),
        n_triples: args.triples.or(file.usize("triples")).unwrap_or(1000),
        dimension: args.dim.or(file.usize("dim")).unwrap_or(16),
        tau: args
            .tau
            .or(file.f64("tau"))
            .unwrap_or_else(|| default_tau_for(mode)),
        minority_count: args.minority.or(file.usize("minority")).unwrap_or(0),
        duplicate_fraction: args.dup_frac.or(file.f64("dup_frac")).unwrap_or(0.1),
        seed: args.seed.or(file.u64("seed")).unwrap_or(0),
    };
    config.validate()?;

    let (dataset, profiles) = generate_dataset(&config)?;
    let archetypes = archetypes_for(&config, dataset.metadata.calibration)?;

    let out = resolve_out(&args.out);
    save_dataset(&dataset, &out)?;
    let sidecar = sidecar_path(&out);
    save_profiles(&profiles, &archetypes, config.dimension, &sidecar)?;

    let mut manifest = Manifest::new("gen", config.seed);
    manifest
        .output(&out)
        .output(&sidecar)
        .config_json(crate::io::dataset::generator_json(&config));
    manifest.write(&out)?;

    println!(
        "wrote {} ({} records, {} users) and {}",
        out.display(),
        dataset.len(),
        dataset.users().len(),
        sidecar.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// profile

#[derive(Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Optional JSON report path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_profile(args: ProfileArgs) -> Result<(), CmdError> {
    let dataset = load_dataset(&args.data)?;
    let profile = DatasetProfile::compute(&dataset);
    print!(
        "{}",
        report::profile_table(&profile, dataset.users().len(), dataset.len())
    );
    if let Some(out) = args.out {
        let out = resolve_out(&out);
        report::save_profile(&profile, &out)?;
        let mut manifest = Manifest::new("profile", dataset.metadata.seed);
        manifest.input(&args.data)?.output(&out);
        manifest.write(&out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// vanilla | conditional | individual | prm | vpl | gpo | knn
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// adam | sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// PRM dual-objective weight
    #[arg(long)]
    pub alpha: Option<f64>,
    /// VPL latent dimension
    #[arg(long)]
    pub latent: Option<usize>,
    /// VPL KL weight
    #[arg(long)]
    pub beta: Option<f64>,
    /// Context size (VPL pairs per episode / GPO few-shot examples)
    #[arg(long)]
    pub context: Option<usize>,
    /// GPO meta-training episodes per epoch
    #[arg(long)]
    pub episodes: Option<usize>,
    /// GPO held-out user fraction for its internal by-user split
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    /// Retrieval vote neighbor count
    #[arg(long)]
    pub k: Option<usize>,
}

pub(crate) fn optim_from(
    file: &FileConfig,
    lr: Option<f64>,
    epochs: Option<usize>,
    batch: Option<usize>,
    optimizer: Option<&str>,
    patience: Option<usize>,
    seed: Option<u64>,
) -> Result<OptimConfig, CmdError> {
    let method = match optimizer.or(file.str("optimizer")).unwrap_or("adam") {
        "adam" => OptimMethod::default(),
        "sgd" => OptimMethod::Sgd,
        other => return Err(CmdError::usage(format!("unknown optimizer {other:?}"))),
    };
    let defaults = OptimConfig::default();
    Ok(OptimConfig {
        learning_rate: lr.or(file.f64("lr")).unwrap_or(defaults.learning_rate),
        batch_size: batch.or(file.usize("batch")).unwrap_or(defaults.batch_size),
        epochs: epochs.or(file.usize("epochs")).unwrap_or(defaults.epochs),
        method,
        seed: seed.or(file.u64("seed")).unwrap_or(0),
        patience: patience.or(file.usize("patience")).or(defaults.patience),
    })
}

pub fn cmd_train(args: TrainArgs) -> Result<(), CmdError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let optim = optim_from(
        &file,
        args.lr,
        args.epochs,
        args.batch,
        args.optimizer.as_deref(),
        args.patience,
        args.seed,
    )?;
    let dataset = load_dataset(&args.data)?;

    let model = match args.method.as_str() {
        "gpo" => {
            let holdout = args
                .holdout_frac
                .or(file.f64("holdout_frac"))
                .unwrap_or(0.25);
            if !(0.0..1.0).contains(&holdout) {
                return Err(CmdError::usage("--holdout-frac must be in [0, 1)"));
            }
            let split = split_dataset(
                &dataset,
                SplitMode::ByUser,
                (1.0 - holdout, 0.0, holdout),
                substream(optim.seed, &[0x6b0]),
            )?;
            let config = GpoConfig {
                context_n: args.context.or(file.usize("context")).unwrap_or(30),
                episodes_per_epoch: args.episodes.or(file.usize("episodes")).unwrap_or(256),
            };
            PreferenceModel::GpoLite(train_gpo_lite(&split, &config, &optim)?)
        }
        "knn" => MethodSpec::Knn {
            k: args.k.or(file.usize("k")).unwrap_or(DEFAULT_K),
        }
        .train(&dataset, &optim)?,
        other => method_spec(other, &args, &file)?.train(&dataset, &optim)?,
    };

    let out = resolve_out(&args.out);
    save_checkpoint(&model, &out)?;
    let mut manifest = Manifest::new("train", optim.seed);
    manifest.input(&args.data)?.output(&out);
    manifest.write(&out)?;
    println!("wrote {} ({} checkpoint)", out.display(), model.kind());
    Ok(())
}

fn method_spec(name: &str, args: &TrainArgs, file: &FileConfig) -> Result<MethodSpec, CmdError> {
    Ok(match name {
        "vanilla" => MethodSpec::Vanilla,
        "conditional" => MethodSpec::Conditional,
        "individual" => MethodSpec::Individual,
        "prm" => MethodSpec::Prm {
            alpha: args.alpha.or(file.f64("alpha")).unwrap_or(DEFAULT_ALPHA),
        },
        "vpl" => MethodSpec::Vpl(VplConfig {
            latent_dim: args.latent.or(file.usize("latent")).unwrap_or(8),
            beta: args.beta.or(file.f64("beta")).unwrap_or(0.1),
            context_size: args.context.or(file.usize("context")).unwrap_or(8),
        }),
        "knn" => MethodSpec::Knn {
            k: args.k.or(file.usize("k")).unwrap_or(DEFAULT_K),
        },
        other => {
            return Err(CmdError::usage(format!(
                "unknown method {other:?}; expected vanilla, conditional, individual, prm, vpl, gpo, or knn"
            )))
        }
    })
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint path(s); repeat for a multi-method table
    #[arg(long = "ckpt", required = true)]
    pub ckpts: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Render the method x user table with below-chance flags
    #[arg(long)]
    pub per_user: bool,
    /// strict | shared
    #[arg(long, default_value = "strict")]
    pub fallback: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path (one line per checkpoint)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat CSV path
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_policy(s: &str) -> Result<FallbackPolicy, CmdError> {
    match s {
        "strict" => Ok(FallbackPolicy::Strict),
        "shared" => Ok(FallbackPolicy::Shared),
        other => Err(CmdError::usage(format!(
            "unknown fallback policy {other:?}; expected strict or shared"
        ))),
    }
}

pub fn cmd_eval(args: EvalArgs) -> Result<(), CmdError> {
    let policy = parse_policy(&args.fallback)?;
    let dataset = load_dataset(&args.data)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    for ckpt in &args.ckpts {
        let model = load_checkpoint(ckpt)?;
        let report = evaluate(&model, &dataset, policy, args.seed)?;
        println!(
            "{:>12}  overall {:.4}  ({} records, seed {})",
            report.method, report.overall, report.n_test, report.seed
        );
        reports.push(report);
    }
    if args.per_user {
        let table = per_user_table(&reports, 0.5)?;
        print!("{}", report::per_user_table_text(&table));
    }
    if let Some(out) = &args.out {
        let out = resolve_out(out);
        report::save_eval_reports(&reports, &out)?;
        let mut manifest = Manifest::new("eval", args.seed);
        for ckpt in &args.ckpts {
            manifest.input(ckpt)?;
        }
        manifest.input(&args.data)?.output(&out);
        manifest.write(&out)?;
        println!("wrote {}", out.display());
    }
    if let Some(csv) = &args.csv {
        let csv = resolve_out(csv);
        write_atomic(&csv, report::eval_reports_csv(&reports).as_bytes())?;
        println!("wrote {}", csv.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// adapt

#[derive(Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma list of gpo, similar, finetune
    #[arg(long, default_value = "gpo,similar,finetune")]
    pub methods: String,
    #[arg(long, default_value = "30,100,300")]
    pub budgets: String,
    /// Held-out test pairs per user
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Fraction of users held out as new users
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// GPO context size
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// One-epoch fine-tune learning rate
    #[arg(long)]
    pub finetune_lr: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn cmd_adapt(args: AdaptArgs) -> Result<(), CmdError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let methods: Vec<AdaptMethod> = args
        .methods
        .split(',')
        .filter(|p| !p.is_empty())
        .map(|m| match m.trim() {
            "gpo" => Ok(AdaptMethod::GpoLite),
            "similar" | "similar-user" => Ok(AdaptMethod::SimilarUser),
            "finetune" => Ok(AdaptMethod::FineTune),
            other => Err(CmdError::usage(format!("unknown adaptation method {other:?}"))),
        })
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(CmdError::usage("no adaptation methods selected"));
    }
    let budgets = parse_usize_list(&args.budgets, "budget")?;
    let seed = args.seed.or(file.u64("seed")).unwrap_or(0);
    let holdout = args
        .holdout_frac
        .or(file.f64("holdout_frac"))
        .unwrap_or(0.25);
    if !(0.0..1.0).contains(&holdout) {
        return Err(CmdError::usage("--holdout-frac must be in [0, 1)"));
    }

    let dataset = load_dataset(&args.data)?;
    let split = split_dataset(
        &dataset,
        SplitMode::ByUser,
        (1.0 - holdout, 0.0, holdout),
        substream(seed, &[0xADA]),
    )?;

    let optim = optim_from(&file, args.lr, args.epochs, None, None, None, Some(seed))?;
    let finetune = OptimConfig {
        learning_rate: args.finetune_lr.or(file.f64("finetune_lr")).unwrap_or(0.05),
        ..optim.clone()
    };
    let cfg = AdaptationConfig {
        budgets,
        n_test: args
            .n_test
            .or(file.usize("n_test"))
            .unwrap_or(prefbench_core::eval::DEFAULT_ADAPT_TEST),
        gpo: GpoConfig {
            context_n: args.context.or(file.usize("context")).unwrap_or(30),
            episodes_per_epoch: args.episodes.or(file.usize("episodes")).unwrap_or(256),
        },
        optim,
        finetune,
        seed,
    };
    let curve = adaptation_protocol(&split, &methods, &cfg)?;

    for (name, accs) in &curve.methods {
        let cells: Vec<String> = curve
            .budgets
            .iter()
            .zip(accs)
            .map(|(b, a)| format!("{b}:{a:.4}"))
            .collect();
        println!("{name:>12}  {}", cells.join("  "));
    }
    println!("{:>12}  {:.4}", "upper", curve.upper_bound);

    let out = resolve_out(&args.out);
    write_atomic(&out, report::adaptation_json(&curve, seed).as_bytes())?;
    if let Some(csv) = &args.csv {
        let csv = resolve_out(csv);
        write_atomic(&csv, report::adaptation_csv(&curve).as_bytes())?;
    }
    let mut manifest = Manifest::new("adapt", seed);
    manifest.input(&args.data)?.output(&out);
    manifest.write(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// tax

#[derive(Args)]
pub struct TaxArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Profiles sidecar defining the universal-agreement archetype family
    #[arg(long)]
    pub probe_profiles: PathBuf,
    /// Dataset holding the target user's preference data
    #[arg(long)]
    pub user_data: PathBuf,
    /// Target user id; defaults to the first user in the data
    #[arg(long)]
    pub user: Option<String>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Fine-tune epochs; zero leaves deltas at exactly zero
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_tax(args: TaxArgs) -> Result<(), CmdError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = args.seed.or(file.u64("seed")).unwrap_or(0);
    let (profiles, archetypes) = load_profiles(&args.probe_profiles)?;
    let utilities = effective_utilities(&profiles, &archetypes);
    let user_data = load_dataset(&args.user_data)?;

    let user = match args.user.as_deref().or(file.str("user")) {
        Some(u) => UserId::from(u),
        None => user_data
            .users()
            .iter()
            .next()
            .cloned()
            .ok_or_else(|| CmdError::data("user data has no users"))?,
    };
    let user_records: Vec<_> = user_data.records_of(&user).into_iter().cloned().collect();
    if user_records.is_empty() {
        return Err(CmdError::data(format!("no records for user {user}")));
    }
    let user_subset = PreferenceDataset::new(
        user_data.dimension(),
        user_records,
        user_data.metadata.clone(),
    )?;

    let probe = build_probe_set(
        &utilities,
        user_data.dimension(),
        args.probes.or(file.usize("probes")).unwrap_or(DEFAULT_PROBE_COUNT),
        args.margin.or(file.f64("margin")).unwrap_or(DEFAULT_PROBE_MARGIN),
        substream(seed, &[0x9906]),
    )?;

    // pretrained = shared model fit on the probe distribution itself
    let pretrain_optim = OptimConfig {
        epochs: 60,
        seed: substream(seed, &[0x93e]),
        ..OptimConfig::default()
    };
    let pretrained = PreferenceModel::Vanilla(prefbench_core::models::train_vanilla(
        &probe.dataset,
        &pretrain_optim,
    )?);

    let finetune_optim = OptimConfig {
        learning_rate: args.lr.or(file.f64("lr")).unwrap_or(0.05),
        epochs: args.epochs.or(file.usize("epochs")).unwrap_or(30),
        seed: substream(seed, &[0x93f]),
        patience: None,
        ..OptimConfig::default()
    };
    let tax = personalization_tax(&pretrained, &user_subset, &probe, &finetune_optim, seed)?;

    println!(
        "probe {:.4} -> {:.4} (delta {:+.4}); user {} {:.4} -> {:.4} (delta {:+.4})",
        tax.probe_before,
        tax.probe_after,
        tax.probe_delta,
        user,
        tax.user_before,
        tax.user_after,
        tax.user_delta
    );
    let out = resolve_out(&args.out);
    write_atomic(&out, report::tax_json(&tax, seed).as_bytes())?;
    let mut manifest = Manifest::new("tax", seed);
    manifest
        .input(&args.probe_profiles)?
        .input(&args.user_data)?
        .output(&out);
    manifest.write(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma list of vanilla, conditional, individual, prm, vpl, knn
    #[arg(long, default_value = "vanilla,conditional,individual,prm")]
    pub methods: String,
    /// Comma list of training-prefix sizes
    #[arg(long)]
    pub sizes: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub context: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Worker threads (or PREFBENCH_WORKERS)
    #[arg(long)]
    pub workers: Option<usize>,
    /// CSV output
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn sweep_method_spec(name: &str, args: &SweepArgs, file: &FileConfig) -> Result<MethodSpec, CmdError> {
    Ok(match name {
        "vanilla" => MethodSpec::Vanilla,
        "conditional" => MethodSpec::Conditional,
        "individual" => MethodSpec::Individual,
        "prm" => MethodSpec::Prm {
            alpha: args.alpha.or(file.f64("alpha")).unwrap_or(DEFAULT_ALPHA),
        },
        "vpl" => MethodSpec::Vpl(VplConfig {
            latent_dim: args.latent.or(file.usize("latent")).unwrap_or(8),
            beta: args.beta.or(file.f64("beta")).unwrap_or(0.1),
            context_size: args.context.or(file.usize("context")).unwrap_or(8),
        }),
        "knn" => MethodSpec::Knn {
            k: args.k.or(file.usize("k")).unwrap_or(DEFAULT_K),
        },
        other => {
            return Err(CmdError::usage(format!(
                "unknown sweep method {other:?} (gpo runs through the adapt protocol)"
            )))
        }
    })
}

pub fn cmd_sweep(args: SweepArgs) -> Result<(), CmdError> {
    let file = FileConfig::load(args.config.as_deref())?;
    let methods: Vec<MethodSpec> = args
        .methods
        .split(',')
        .filter(|p| !p.is_empty())
        .map(|m| sweep_method_spec(m.trim(), &args, &file))
        .collect::<Result<_, _>>()?;
    let sizes = parse_usize_list(&args.sizes, "size")?;
    if methods.is_empty() || sizes.is_empty() {
        return Err(CmdError::usage("sweep needs at least one method and one size"));
    }
    let seed = args.seed.or(file.u64("seed")).unwrap_or(0);
    let optim = optim_from(&file, args.lr, args.epochs, None, None, None, Some(seed))?;
    let workers = args
        .workers
        .or_else(|| {
            std::env::var("PREFBENCH_WORKERS")
                .ok()
                .and_then(|w| w.parse().ok())
        })
        .unwrap_or(1)
        .max(1);

    let dataset = load_dataset(&args.data)?;
    let cells = sweep_pool::run_cells(&methods, &dataset, &sizes, &optim, seed, workers)?;

    for cell in &cells {
        println!("{:>12} {:>8} {:.4}", cell.method, cell.size, cell.accuracy);
    }
    let out = resolve_out(&args.out);
    write_atomic(&out, report::sweep_csv(&cells).as_bytes())?;
    if let Some(json) = &args.json {
        let json = resolve_out(json);
        write_atomic(&json, report::sweep_json(&cells, seed).as_bytes())?;
    }
    let mut manifest = Manifest::new("sweep", seed);
    manifest.input(&args.data)?.output(&out);
    manifest.write(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Serial fallback used by tests; the pooled version lives in sweep_pool.
pub fn sweep_serial(
    methods: &[MethodSpec],
    dataset: &PreferenceDataset,
    sizes: &[usize],
    optim: &OptimConfig,
    seed: u64,
) -> Result<Vec<SweepCell>, CmdError> {
    sample_efficiency_sweep(methods, dataset, sizes, optim, seed).map_err(CmdError::from)
}

// ---------------------------------------------------------------------------
// export-embeddings

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// One row per record: the annotator, triple, label, and the preferred
/// response embedding (for external PCA-style projection).
pub fn cmd_export(args: ExportArgs) -> Result<(), CmdError> {
    let dataset = load_dataset(&args.data)?;
    let mut out = String::from("user_id,triple_id,label");
    for i in 0..dataset.dimension() {
        out.push_str(&format!(",y{i}"));
    }
    out.push('\n');
    for rec in dataset.records() {
        let chosen = if rec.label == 1 { &rec.y1 } else { &rec.y2 };
        out.push_str(rec.user_id.as_str());
        out.push(',');
        out.push_str(rec.triple_id.as_str());
        out.push(',');
        out.push_str(&rec.label.to_string());
        for v in chosen.values() {
            out.push(',');
            out.push_str(&prefbench_core::num::fmt_sig9(*v));
        }
        out.push('\n');
    }
    let out_path = resolve_out(&args.out);
    write_atomic(&out_path, out.as_bytes())?;
    let mut manifest = Manifest::new("export-embeddings", dataset.metadata.seed);
    manifest.input(&args.data)?.output(&out_path);
    manifest.write(&out_path)?;
    println!("wrote {}", out_path.display());
    Ok(())
}
