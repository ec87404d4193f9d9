//! Command-line entry point: train policies on preset or config-defined
//! games, simulate and plot trajectories, audit the potential inequality,
//! and emit bound and graph-asymmetry reports.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use apg_cli::{emit_scenario, parse_scenario, preset, ConfigError, Scenario, PRESET_NAMES};
use apg_core::*;
use std::result::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_UNKNOWN_PRESET: u8 = 2;
const EXIT_BAD_CONFIG: u8 = 3;
const EXIT_UNWRITABLE: u8 = 4;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("unknown preset `{0}` (available: {names})", names = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot write to `{path}`: {source}")]
    Unwritable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::UnknownPreset(_) => EXIT_UNKNOWN_PRESET,
            CliError::Config(_) => EXIT_BAD_CONFIG,
            CliError::Unwritable { .. } => EXIT_UNWRITABLE,
            CliError::Other(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "apg",
    about = "Distributed-game potential training, audits and bound reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Named preset experiment.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the training iteration budget.
    #[arg(long)]
    iterations: Option<usize>,
    /// Override the scaling-integral quadrature node count.
    #[arg(long)]
    quadrature_nodes: Option<usize>,
    /// Reuse one noise bundle for every iteration.
    #[arg(long)]
    fixed_noise: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a joint policy by gradient descent on the empirical potential.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Checkpoint interval in iterations.
        #[arg(long, default_value_t = 100)]
        checkpoint_every: usize,
    },
    /// Simulate a batch under a policy and export paths, means and a plot.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Policy checkpoint; the freshly initialized (zero) policy if absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluation batch size.
        #[arg(long, default_value_t = 500)]
        eval_batch: usize,
    },
    /// Audit the potential inequality on sampled unilateral deviations.
    Audit {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of sampled deviations.
        #[arg(long, default_value_t = 100)]
        deviations: usize,
        /// Evaluation batch size.
        #[arg(long, default_value_t = 256)]
        eval_batch: usize,
        /// Which potential to compare against.
        #[arg(long, value_enum, default_value_t = AuditKind::Auto)]
        potential: AuditKind,
    },
    /// Compute the potential-gap bound of the game.
    Bounds {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Analyze interaction asymmetry on a graph.
    Zeta {
        /// Whitespace-separated edge list file (`u v` per line, 0-based).
        #[arg(long)]
        graph: PathBuf,
        /// Vertex count (default: largest endpoint + 1).
        #[arg(long)]
        vertices: Option<usize>,
        #[arg(long, value_enum)]
        decay: DecayKind,
        /// Exponential decay rate in (0, 1).
        #[arg(long)]
        rho: Option<f64>,
        /// Power-law decay exponent.
        #[arg(long)]
        beta: Option<f64>,
        /// Uniform bound on asymmetry amplitudes.
        #[arg(long, default_value_t = 1.0)]
        w_max: f64,
        /// Optional row-major interaction table to score exactly.
        #[arg(long)]
        q_table: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AuditKind {
    Auto,
    Standard,
    Symmetric,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecayKind {
    Exponential,
    Power,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("APG_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn resolve_scenario(args: &ScenarioArgs) -> Result<Scenario, CliError> {
    let mut scenario = match (&args.preset, &args.config) {
        (Some(name), None) => {
            preset(name).ok_or_else(|| CliError::UnknownPreset(name.clone()))?
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Config(ConfigError::Invalid(format!(
                    "cannot read `{}`: {e}",
                    path.display()
                )))
            })?;
            parse_scenario(&text)?
        }
        _ => {
            return Err(CliError::Other(
                "exactly one of --preset or --config is required".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        scenario.train.seed = seed;
    }
    if let Some(iters) = args.iterations {
        scenario.train.iterations = iters;
    }
    if let Some(nodes) = args.quadrature_nodes {
        scenario.train.quadrature_nodes = nodes;
    }
    if args.fixed_noise {
        scenario.train.resample = Resample::Fixed;
    }
    Ok(scenario)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Unwritable {
        path: dir.to_path_buf(),
        source: e,
    })?;
    // probe writability up front for a clean error
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"")
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| CliError::Unwritable {
            path: dir.to_path_buf(),
            source: e,
        })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Unwritable {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train {
            scenario,
            checkpoint_every,
        } => cmd_train(&scenario, checkpoint_every),
        Command::Simulate {
            scenario,
            checkpoint,
            eval_batch,
        } => cmd_simulate(&scenario, checkpoint.as_deref(), eval_batch),
        Command::Audit {
            scenario,
            checkpoint,
            deviations,
            eval_batch,
            potential,
        } => cmd_audit(
            &scenario,
            checkpoint.as_deref(),
            deviations,
            eval_batch,
            potential,
        ),
        Command::Bounds { scenario } => cmd_bounds(&scenario),
        Command::Zeta {
            graph,
            vertices,
            decay,
            rho,
            beta,
            w_max,
            q_table,
            out,
        } => cmd_zeta(
            &graph, vertices, decay, rho, beta, w_max, q_table.as_deref(), &out,
        ),
    }
}

fn cmd_train(args: &ScenarioArgs, checkpoint_every: usize) -> Result<(), CliError> {
    let scenario = resolve_scenario(args)?;
    prepare_out(&args.out)?;
    write_file(
        &args.out.join("scenario.cfg"),
        emit_scenario(&scenario)?.as_bytes(),
    )?;
    let log_path = args.out.join("train_log.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| CliError::Unwritable {
        path: log_path.clone(),
        source: e,
    })?;
    let out_dir = args.out.clone();
    let result = train_with(&scenario.game, &scenario.train, |record, params| {
        let line = serde_json::to_string(record).expect("record serialization");
        let _ = writeln!(log_file, "{line}");
        if record.iteration % 50 == 0 {
            println!(
                "iter {:>5}  potential {:+.6e}  grad {:.3e}  lr {:.2e}",
                record.iteration, record.potential, record.grad_norm, record.learning_rate
            );
        }
        if checkpoint_every > 0
            && record.iteration > 0
            && record.iteration % checkpoint_every == 0
        {
            let mut buf = Vec::new();
            if params.write_binary(&mut buf).is_ok() {
                let name = format!("checkpoint_{:06}.bin", record.iteration);
                let _ = fs::write(out_dir.join(name), &buf);
            }
        }
    });
    match result {
        Ok((params, log)) => {
            let mut buf = Vec::new();
            params.write_binary(&mut buf)?;
            write_file(&args.out.join("checkpoint.bin"), &buf)?;
            if let Some(last) = log.records.last() {
                println!(
                    "done: {} iterations, final potential {:+.6e}",
                    log.records.len(),
                    last.potential
                );
            }
            Ok(())
        }
        Err(TrainError::NonFiniteLoss {
            iteration,
            params,
            log,
        }) => {
            let mut buf = Vec::new();
            params.write_binary(&mut buf)?;
            write_file(&args.out.join("checkpoint_abort.bin"), &buf)?;
            Err(CliError::Other(format!(
                "non-finite loss at iteration {iteration} after {} records; \
                 last parameters saved to checkpoint_abort.bin",
                log.records.len()
            )))
        }
        Err(TrainError::Core(e)) => Err(e.into()),
    }
}

fn load_policy(
    scenario: &Scenario,
    checkpoint: Option<&Path>,
) -> Result<PolicyParams, CliError> {
    match checkpoint {
        Some(path) => {
            let bytes = fs::read(path)
                .map_err(|e| CliError::Other(format!("cannot read `{}`: {e}", path.display())))?;
            Ok(PolicyParams::read_binary(&mut bytes.as_slice())?)
        }
        None => Ok(PolicyParams::init(
            PolicyConfig::for_game(
                scenario.game.players,
                scenario.game.state_dim,
                scenario.game.action_dim,
            ),
            scenario.train.seed,
        )),
    }
}

fn cmd_simulate(
    args: &ScenarioArgs,
    checkpoint: Option<&Path>,
    eval_batch: usize,
) -> Result<(), CliError> {
    let scenario = resolve_scenario(args)?;
    prepare_out(&args.out)?;
    let params = load_policy(&scenario, checkpoint)?;
    let noise = sample_noise(
        &scenario.game,
        &scenario.train.grid,
        eval_batch,
        scenario.train.seed,
    )?;
    let policy = NeuralPolicy {
        params: &params,
        horizon: scenario.train.grid.horizon(),
    };
    let paths = simulate(&scenario.game, &policy, &noise)?;

    let mut csv = Vec::new();
    paths.to_csv(&mut csv)?;
    write_file(&args.out.join("paths.csv"), &csv)?;
    let mut bin = Vec::new();
    paths.write_binary(&mut bin)?;
    write_file(&args.out.join("paths.bin"), &bin)?;
    write_file(
        &args.out.join("mean_trajectory.csv"),
        apg_cli::svg::mean_trajectory_csv(&paths).as_bytes(),
    )?;
    let targets = scenario
        .game
        .cost
        .as_crowd()
        .map(|c| c.targets.clone());
    write_file(
        &args.out.join("trajectories.svg"),
        apg_cli::svg::trajectory_svg(&paths, targets.as_deref()).as_bytes(),
    )?;
    println!(
        "simulated {eval_batch} trajectories over {} steps into {}",
        scenario.train.grid.steps(),
        args.out.display()
    );
    Ok(())
}

fn cmd_audit(
    args: &ScenarioArgs,
    checkpoint: Option<&Path>,
    deviations: usize,
    eval_batch: usize,
    kind: AuditKind,
) -> Result<(), CliError> {
    let scenario = resolve_scenario(args)?;
    prepare_out(&args.out)?;
    let params = load_policy(&scenario, checkpoint)?;
    let noise = sample_noise(
        &scenario.game,
        &scenario.train.grid,
        eval_batch,
        scenario.train.seed,
    )?;
    let policy = NeuralPolicy {
        params: &params,
        horizon: scenario.train.grid.horizon(),
    };
    let base = simulate(&scenario.game, &policy, &noise)?.actions_array();
    let which = match kind {
        AuditKind::Standard => AuditPotential::Standard,
        AuditKind::Symmetric => AuditPotential::Symmetric,
        AuditKind::Auto => {
            let symmetric = scenario
                .game
                .cost
                .as_crowd()
                .map(|c| c.symmetry_violation(scenario.game.players).is_none())
                .unwrap_or(false);
            if symmetric {
                AuditPotential::Symmetric
            } else {
                AuditPotential::Standard
            }
        }
    };
    let rule = QuadratureRule::gauss_legendre(scenario.train.quadrature_nodes)?;
    let report =
        potential_inequality_audit(&scenario.game, &base, deviations, &noise, &rule, which)?;
    write_file(&args.out.join("audit.json"), report.to_json().as_bytes())?;
    println!(
        "audit: bound {:.6e}, max gap {:.6e} over {} deviations, pass = {}",
        report.bound, report.max_gap, report.samples, report.pass
    );
    Ok(())
}

fn cmd_bounds(args: &ScenarioArgs) -> Result<(), CliError> {
    let scenario = resolve_scenario(args)?;
    prepare_out(&args.out)?;
    let crowd = scenario
        .game
        .cost
        .as_crowd()
        .ok_or_else(|| CliError::Other("bound reports need the crowd cost".into()))?;
    let report = crowd_alpha(
        crowd,
        scenario.game.dims(),
        scenario.game.max_drift_l2_norm(&scenario.train.grid),
        scenario.game.control_cap,
        scenario.train.grid.horizon(),
    )?;
    write_file(
        &args.out.join("alpha_report.json"),
        report.to_json().as_bytes(),
    )?;
    println!("{}", report.to_json());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_zeta(
    graph_path: &Path,
    vertices: Option<usize>,
    decay: DecayKind,
    rho: Option<f64>,
    beta: Option<f64>,
    w_max: f64,
    q_table: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    prepare_out(out)?;
    let text = fs::read_to_string(graph_path)
        .map_err(|e| CliError::Other(format!("cannot read `{}`: {e}", graph_path.display())))?;
    let mut edges = Vec::new();
    let mut max_vertex = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize, CliError> {
            tok.ok_or_else(|| {
                CliError::Other(format!("graph line {}: expected `u v`", idx + 1))
            })?
            .parse()
            .map_err(|_| CliError::Other(format!("graph line {}: bad vertex id", idx + 1)))
        };
        let u = parse(it.next())?;
        let v = parse(it.next())?;
        max_vertex = max_vertex.max(u).max(v);
        edges.push((u, v));
    }
    let decay = match decay {
        DecayKind::Exponential => DecayLaw::Exponential {
            rho: rho.ok_or_else(|| CliError::Other("--rho required for exponential decay".into()))?,
        },
        DecayKind::Power => DecayLaw::Power {
            beta: beta.ok_or_else(|| CliError::Other("--beta required for power decay".into()))?,
        },
    };
    let graph = GraphSpec {
        vertices: vertices.unwrap_or(max_vertex + 1),
        edges,
        decay,
        amplitude_max: w_max,
    };
    let z = zeta_asymptotic_bound(&graph)?;
    let exact = match q_table {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Other(format!("cannot read `{}`: {e}", path.display())))?;
            let vals: Result<Vec<f64>, _> =
                text.split_whitespace().map(str::parse::<f64>).collect();
            let vals =
                vals.map_err(|_| CliError::Other("q table: cannot parse numbers".into()))?;
            if vals.len() != graph.vertices * graph.vertices {
                return Err(CliError::Other(format!(
                    "q table needs {} entries, got {}",
                    graph.vertices * graph.vertices,
                    vals.len()
                )));
            }
            Some(zeta_exact(&vals, graph.vertices))
        }
        None => None,
    };
    let json = serde_json::json!({
        "vertices": graph.vertices,
        "max_degree": z.max_degree,
        "levels": z.levels,
        "regime": z.label,
        "bound": z.bound,
        "rate_exponent": z.rate_exponent,
        "zeta_exact": exact,
        "dominated": exact.map(|e| e <= z.bound + 1e-12),
    });
    let pretty = serde_json::to_string_pretty(&json).expect("json");
    write_file(&out.join("zeta.json"), pretty.as_bytes())?;
    println!("{pretty}");
    Ok(())
}
