use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use aris_core::beamcontrol::build_codebook;
use aris_core::channel::{sample_user, Regime};
use aris_core::exec::Execution;
use aris_core::harness::{
    emit_results, model_mismatch_report, run_cell, run_experiment, ConfigError, EmitFormat, ExperimentConfig,
    ModelAssets, RunOptions, user_seed,
};
use aris_core::protocol::RisMode;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "aris", version, about = "Active-RIS parametric channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo experiment and write result tables.
    Run(RunArgs),
    /// Export the pilot codebook as text.
    Codebook(CodebookArgs),
    /// Run one trial and print its per-round trace.
    Single(SingleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Near,
    Far,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Active,
    Passive,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Near,
    Far,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Run trials on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct CodebookArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "far")]
    model: RegimeArg,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SingleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "near")]
    regime: RegimeArg,
    #[arg(long, value_enum, default_value = "active")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "near")]
    model: ModelArg,
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

fn regimes(arg: RegimeArg) -> Vec<Regime> {
    match arg {
        RegimeArg::Near => vec![Regime::Near],
        RegimeArg::Far => vec![Regime::Far],
        RegimeArg::Both => vec![Regime::Near, Regime::Far],
    }
}

fn models(arg: ModelArg) -> Vec<Regime> {
    match arg {
        ModelArg::Near => vec![Regime::Near],
        ModelArg::Far => vec![Regime::Far],
        ModelArg::Both => vec![Regime::Near, Regime::Far],
    }
}

fn modes(arg: ModeArg) -> Vec<RisMode> {
    match arg {
        ModeArg::Active => vec![RisMode::Active],
        ModeArg::Passive => vec![RisMode::Passive],
        ModeArg::Both => vec![RisMode::Active, RisMode::Passive],
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn config_failure(e: &ConfigError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(2)
}

fn failure(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": "runtime", "message": msg.to_string() }));
    ExitCode::from(1)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let mut cfg = match load(&args.common) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(r) = args.regime {
        cfg.regimes = regimes(r);
    }
    if let Some(m) = args.mode {
        cfg.modes = modes(m);
    }
    if let Some(m) = args.model {
        cfg.models = models(m);
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Err(e) = cfg.validate() {
        return config_failure(&e);
    }

    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = Arc::clone(&stop);
        // a second Ctrl-C falls through to the default handler's behaviour
        let _ = ctrlc::set_handler(move || {
            if stop.swap(true, Ordering::SeqCst) {
                std::process::exit(130);
            }
        });
    }
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let table = match run_experiment(&cfg, RunOptions { exec, workers: None, interrupt: Some(&stop) }) {
        Ok(t) => t,
        Err(e) => return failure(e),
    };
    if table.trials.is_empty() {
        return failure("no trials completed");
    }
    let format = match args.format {
        FormatArg::Csv => EmitFormat::Csv,
        FormatArg::Json => EmitFormat::Json,
    };
    match emit_results(&table, &cfg, &args.out, format) {
        Ok(files) => {
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Err(e) => return failure(e),
    }
    if let Ok(mm) = model_mismatch_report(&table) {
        for m in mm.iter().filter(|m| m.pilots == cfg.max_budget()) {
            eprintln!("gap {}/{} L={}: {:.4} bps/Hz", m.regime, m.mode, m.pilots, m.gap_bps_hz);
        }
    }
    if table.estimation_failures > 0 {
        eprintln!("{} estimation passes failed and re-used the previous pilot", table.estimation_failures);
    }
    if table.interrupted {
        eprintln!("interrupted: partial results written");
        return ExitCode::from(130);
    }
    ExitCode::SUCCESS
}

fn cmd_codebook(args: CodebookArgs) -> ExitCode {
    let cfg = match load(&args.common) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    let model = match args.model {
        RegimeArg::Near => Regime::Near,
        RegimeArg::Far => Regime::Far,
        RegimeArg::Both => return failure("codebook export takes a single model"),
    };
    let cb = match build_codebook(&cfg.geometry(), model, cfg.codebook.near_rings) {
        Ok(c) => c,
        Err(e) => return failure(e),
    };
    let result = match &args.out {
        Some(p) => std::fs::File::create(p).and_then(|f| cb.export(std::io::BufWriter::new(f))),
        None => cb.export(std::io::stdout().lock()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => failure(e),
    }
}

fn cmd_single(args: SingleArgs) -> ExitCode {
    let cfg = match load(&args.common) {
        Ok(c) => c,
        Err(e) => return config_failure(&e),
    };
    let pick = |v: Vec<Regime>| v[0];
    let (regime, model) = match (args.regime, args.model) {
        (RegimeArg::Both, _) | (_, ModelArg::Both) => return failure("single takes one regime and one model"),
        (r, m) => (pick(regimes(r)), pick(models(m))),
    };
    let mode = match args.mode {
        ModeArg::Both => return failure("single takes one mode"),
        m => modes(m)[0],
    };
    let assets = match ModelAssets::build(&cfg, model) {
        Ok(a) => a,
        Err(e) => return failure(e),
    };
    let (scenario, run) = match run_cell(&cfg, &assets, regime, mode, model, args.trial, Execution::Parallel) {
        Ok(x) => x,
        Err(e) => return failure(e),
    };
    println!("regime={regime} mode={mode} model={model} trial={} capacity={:.6} bps/Hz", args.trial, run.capacity);
    println!("{:>6} {:>9} {:>13} {:>10} {:>9} {:>9} {:>10}", "pilots", "codeword", "nmse", "rate", "az", "el", "dist");
    for r in &run.rounds {
        let (az, el, dist) = r
            .estimate
            .as_ref()
            .map(|e| (e.psi_hat.azimuth, e.psi_hat.elevation, e.psi_hat.distance))
            .unwrap_or((f64::NAN, f64::NAN, None));
        println!(
            "{:>6} {:>9} {:>13.6e} {:>10.4} {:>9.4} {:>9.4} {:>10}",
            r.pilots,
            r.codeword.map_or("-".to_string(), |c| c.to_string()),
            r.nmse,
            r.rate,
            az,
            el,
            dist.map_or("-".to_string(), |d| format!("{d:.4}")),
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed(cfg.seed, args.trial, regime));
    let user = sample_user(&cfg.geometry(), regime, &mut rng);
    println!(
        "{:>6} {:>9} {:>13} {:>10} {:>9.4} {:>9.4} {:>10}",
        "true",
        "-",
        "-",
        format!("{:.4}", run.capacity),
        user.dir.azimuth,
        user.dir.elevation,
        user.dir.distance.map_or("-".to_string(), |d| format!("{d:.4}")),
    );
    println!("|g_1|^2={:.6e} arg(g_1)={:.4}", scenario.g[0].norm_sqr(), scenario.g[0].arg());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Codebook(a) => cmd_codebook(a),
        Command::Single(a) => cmd_single(a),
    }
}
