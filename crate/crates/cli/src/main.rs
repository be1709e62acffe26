use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Args, Parser, Subcommand};

use bitrade_core::harness::{
    check_lemma_bounds, check_reduce_regret, emit_results, fit_tail_slope, read_results,
    run_experiment, validate_markov_variant, write_meta, ChainVariant, CheckpointMode, EnvSpec,
    ExperimentResult, PolicyKind, RunConfig, RunOptions,
};

#[derive(Parser)]
#[command(
    name = "bitrade",
    version,
    about = "Regret experiments for contextual bilateral trade"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its results file.
    Run(RunArgs),
    /// Run every combination of policies, dimensions and horizons.
    Sweep(SweepArgs),
    /// Known-L policy on sampled lower-bound instances.
    Lowerbound(LowerboundArgs),
    /// Post-reduce GFT caps, reduce regret and the Markov hitting-time bound.
    Validate(ValidateArgs),
    /// Fit the tail slope of an existing results file.
    Slope(SlopeArgs),
}

#[derive(Args)]
struct Overrides {
    /// TOML configuration file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["known-l", "unknown-l"])]
    policy: Option<String>,
    /// quadratic, constant or hard
    #[arg(long, value_parser = ["quadratic", "constant", "hard"])]
    env: Option<String>,
    #[arg(short)]
    d: Option<usize>,
    #[arg(short = 'T', long = "horizon")]
    horizon: Option<u64>,
    #[arg(short = 'L', long = "lipschitz")]
    lipschitz: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long, value_parser = ["auto", "all", "geometric"])]
    checkpoints: Option<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::new(PolicyKind::KnownL, EnvSpec::quadratic(), 2, 10_000, 1.0),
        };
        if let Some(p) = &self.policy {
            cfg.policy = p.parse()?;
        }
        if let Some(kind) = &self.env {
            cfg.env = match kind.as_str() {
                "quadratic" => EnvSpec::quadratic(),
                "constant" => EnvSpec::Constant {
                    seller: 0.3,
                    buyer: 0.7,
                    contexts: None,
                },
                _ => EnvSpec::Hard { shuffle: false },
            };
        }
        if let Some(d) = self.d {
            cfg.d = d;
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if let Some(l) = self.lipschitz {
            cfg.lipschitz = l;
        }
        if self.eps.is_some() {
            cfg.eps = self.eps;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.reps {
            cfg.repetitions = r;
        }
        if let Some(c) = &self.checkpoints {
            cfg.checkpoints = match c.as_str() {
                "all" => CheckpointMode::All,
                "geometric" => CheckpointMode::Geometric,
                _ => CheckpointMode::Auto,
            };
        }
        cfg.validate()?;
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: Overrides,
    /// Results file; defaults to `out_path` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the final tree of repetition 0 as JSON.
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: Overrides,
    #[arg(long, value_delimiter = ',', default_value = "known-l,unknown-l")]
    policies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "100000")]
    horizons: Vec<u64>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct LowerboundArgs {
    #[arg(short = 'L', long = "lipschitz", default_value_t = 1.0)]
    lipschitz: f64,
    #[arg(short, default_value_t = 2)]
    d: usize,
    #[arg(short = 'T', long = "horizon", default_value_t = 10_000)]
    horizon: u64,
    /// Number of sampled assignment vectors.
    #[arg(long, default_value_t = 50)]
    instances: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    shuffle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 20)]
    runs: u32,
    #[arg(short = 'T', long = "horizon", default_value_t = 10_000)]
    horizon: u64,
    #[arg(short, default_value_t = 2)]
    d: usize,
    /// Region samples per reduce-completed node.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 100_000)]
    markov_trials: u64,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
    markov_n: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SlopeArgs {
    file: PathBuf,
    /// Window length in rounds; defaults to min(10^4, T/10).
    #[arg(long)]
    tail: Option<usize>,
}

fn write_experiment(exp: &ExperimentResult, out: &Path) -> Result<()> {
    let agg = exp.aggregate()?;
    emit_results(&agg, out)?;
    write_meta(out, &exp.metadata(&agg))?;
    let last = agg.rows.last().expect("aggregate has rows");
    let slope = agg
        .tail_slope
        .map_or_else(|| "undefined".to_string(), |s| format!("{s:.4}"));
    println!(
        "{}: T={} reps={} final regret {:.3} ± {:.3}, tail slope {slope}",
        out.display(),
        last.t,
        last.n_reps,
        last.mean_cum_regret,
        last.ci_halfwidth
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = args.cfg.resolve()?;
    let out = args
        .out
        .or_else(|| cfg.out_path.clone())
        .context("no output path: pass --out or set out_path")?;
    cfg.out_path = Some(out.clone());
    let exp = run_experiment(&cfg, RunOptions::default())?;
    write_experiment(&exp, &out)?;
    if let Some(path) = args.dump_tree {
        let dump = exp.repetitions[0].tree.dump();
        fs::write(&path, serde_json::to_string_pretty(&dump)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let base = args.cfg.resolve()?;
    for policy in &args.policies {
        for &d in &args.dims {
            for &horizon in &args.horizons {
                let mut cfg = base.clone();
                cfg.policy = policy.parse()?;
                cfg.d = d;
                cfg.horizon = horizon;
                let out = args.out_dir.join(format!(
                    "{}-{}-d{d}-T{horizon}.csv",
                    cfg.env.kind(),
                    cfg.policy.as_str()
                ));
                cfg.out_path = Some(out.clone());
                cfg.validate()?;
                write_experiment(&run_experiment(&cfg, RunOptions::default())?, &out)?;
            }
        }
    }
    Ok(())
}

fn lowerbound(args: LowerboundArgs) -> Result<()> {
    let mut cfg = RunConfig::new(
        PolicyKind::KnownL,
        EnvSpec::Hard {
            shuffle: args.shuffle,
        },
        args.d,
        args.horizon,
        args.lipschitz,
    );
    cfg.seed = args.seed;
    cfg.repetitions = args.instances;
    cfg.out_path = args.out.clone();
    cfg.validate()?;
    let exp = run_experiment(&cfg, RunOptions::default())?;
    let p = cfg.hard_params();
    let finals: Vec<f64> = exp.repetitions.iter().map(|r| r.final_regret).collect();
    let (mean, hw) = bitrade_core::harness::mean_ci(&finals);
    let rounds = cfg.run_length() as f64;
    let target = args.lipschitz / 2.0 * rounds.powf((args.d as f64 - 1.0) / args.d as f64);
    println!(
        "delta={} gamma={} eps_lb={} rounds={rounds}",
        p.delta(),
        p.gamma(),
        p.eps_lb()
    );
    println!(
        "mean regret {mean:.3} ± {hw:.3} over {} instances; (L/2) T^((d-1)/d) = {target:.3}",
        finals.len()
    );
    if let Some(out) = &args.out {
        write_experiment(&exp, out)?;
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<bool> {
    let mut ok = true;
    for policy in [PolicyKind::KnownL, PolicyKind::UnknownL] {
        let mut cfg = RunConfig::new(policy, EnvSpec::quadratic(), args.d, args.horizon, 1.0);
        cfg.seed = args.seed;
        cfg.repetitions = args.runs;
        let opts = RunOptions {
            keep_records: false,
            check_guess_feasibility: policy == PolicyKind::KnownL,
        };
        let exp = run_experiment(&cfg, opts)?;
        let lemma = check_lemma_bounds(&exp, args.samples)?;
        println!(
            "{}: post-reduce GFT cap: {} nodes, max ratio {:.3}, {} violations",
            policy.as_str(),
            lemma.nodes_checked,
            lemma.max_ratio,
            lemma.violations.len()
        );
        ok &= lemma.passes();
        if policy == PolicyKind::KnownL {
            let rr = check_reduce_regret(&exp);
            println!(
                "known-l: reduce regret: {} nodes, max ratio {:.3}, {} violations",
                rr.nodes_checked,
                rr.max_ratio,
                rr.violations.len()
            );
            let (checks, bad): (u64, u64) = exp.repetitions.iter().fold((0, 0), |a, r| {
                (a.0 + r.guess_checks, a.1 + r.guess_violations)
            });
            println!("known-l: guess feasibility: {checks} rounds checked, {bad} violations");
            ok &= rr.violations.is_empty() && bad == 0;
        }
    }
    for variant in [ChainVariant::Stated, ChainVariant::Swapped] {
        for &n in &args.markov_n {
            let r = validate_markov_variant(n, args.markov_trials, args.seed, variant)?;
            println!(
                "markov ({variant:?}) N={n}: mean {:.4} ± {:.4} (stderr), bound {}",
                r.mean, r.stderr, r.bound
            );
            ok &= r.passes();
        }
    }
    Ok(ok)
}

fn slope(args: SlopeArgs) -> Result<()> {
    let rows = read_results(&args.file)?;
    let series: Vec<(u64, f64)> = rows.iter().map(|r| (r.t, r.mean_cum_regret)).collect();
    let last = series.last().map_or(0, |p| p.0);
    let tail = args
        .tail
        .unwrap_or_else(|| bitrade_core::harness::default_tail_len(last));
    match fit_tail_slope(&series, tail) {
        Ok(s) => println!("{s}"),
        Err(e) => bail!("{}: {e}", args.file.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Lowerbound(a) => lowerbound(a).map(|_| true),
        Command::Validate(a) => validate(a),
        Command::Slope(a) => slope(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("validation failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
