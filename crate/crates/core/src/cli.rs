//! The `fockconv` command line.
//!
//! Parameters come from flags, then from an optional JSON file given with
//! `--config`, then from built-in defaults. Config keys use the long flag
//! names with `_` for `-` (`eta_o`, `k_max`, `loss_aux1`, ...).
//!
//! Exit codes: 0 success, 2 usage or input error, 3 infeasible target,
//! 4 numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coincidence::{self, EmulationConfig, PortLosses, SourceModel, DEFAULT_MEAN_PHOTONS};
use crate::error::{Error, Result};
use crate::fock::DetectorModel;
use crate::montecarlo::{estimate_success, write_trajectories};
use crate::output::{format_sig, round_json};
use crate::planner::{build_policy, evaluate_policy_lossy, PmaxTable, Policy};
use crate::tradeoff::{self, Settings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

const DEFAULT_ETA: f64 = 0.85;
const DEFAULT_ETA_O: f64 = 0.95;
const DEFAULT_POINTS: usize = 21;
const DEFAULT_TRIALS: u64 = 1_000_000;
const DEFAULT_PULSES: u64 = 1_000_000;
const CALIBRATION_PULSES: u64 = 1_000_000;

#[derive(Parser, Debug)]
#[command(
    name = "fockconv",
    version,
    about = "Plan and verify feedforward photon-subtraction schemes"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// JSON file with default parameters
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write results here instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Random seed; drawn and reported on stderr when omitted
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Fock,
    Coherent,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimal policy converting |m> into |n> with k stages
    Plan {
        #[arg(short)]
        m: Option<usize>,
        #[arg(short)]
        n: Option<usize>,
        #[arg(short)]
        k: Option<usize>,
    },
    /// Maximum success probability for k = 1..K
    Curve {
        #[arg(short)]
        m: Option<usize>,
        #[arg(short)]
        n: Option<usize>,
        #[arg(short = 'K', long = "k-max")]
        k_max: Option<usize>,
    },
    /// Success probability vs single-photon fraction of the |2> -> |1> schemes
    Tradeoff {
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long = "eta-o")]
        eta_o: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Optimize both schemes at this success probability only
        #[arg(long)]
        target: Option<f64>,
    },
    /// Monte Carlo estimate of a policy's success probability
    Simulate {
        /// Policy JSON; otherwise the optimal policy for -m, -n, -k
        #[arg(long, value_name = "PATH")]
        policy: Option<PathBuf>,
        #[arg(short)]
        m: Option<usize>,
        #[arg(short)]
        n: Option<usize>,
        #[arg(short)]
        k: Option<usize>,
        /// ideal | pnr:<eta> | clicks:<eta>
        #[arg(long)]
        detector: Option<DetectorModel>,
        /// Shorthand for --detector pnr:<eta>
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long = "eta-o")]
        eta_o: Option<f64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Also write every trajectory to this file as JSON lines
        #[arg(long, value_name = "PATH")]
        trajectories: Option<PathBuf>,
    },
    /// Emulate the six-detector coincidence experiment
    Emulate {
        #[arg(long, value_enum)]
        source: Option<SourceKind>,
        /// Photon number of the Fock source
        #[arg(long)]
        photons: Option<usize>,
        /// Mean photon number of the coherent source
        #[arg(long)]
        mu: Option<f64>,
        /// First splitter transmittance
        #[arg(long)]
        t1: Option<f64>,
        /// Second splitter transmittance, switched to 1 on an AUX1 click
        #[arg(long)]
        t2: Option<f64>,
        /// Tune T1 until the singles give this effective transmittance
        #[arg(long = "target-teff")]
        target_teff: Option<f64>,
        /// Transmittance of the AUX1 path, 1 is lossless
        #[arg(long = "loss-aux1")]
        loss_aux1: Option<f64>,
        /// Transmittance of the AUX2 path
        #[arg(long = "loss-aux2")]
        loss_aux2: Option<f64>,
        /// Transmittance of the OUT path
        #[arg(long = "loss-out")]
        loss_out: Option<f64>,
        /// Detector efficiency
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        pulses: Option<u64>,
        #[arg(long = "no-feedforward")]
        no_feedforward: bool,
        /// Comma-separated T1 values to sweep (CSV output)
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
}

/// Values read from a `--config` file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub k_max: Option<usize>,
    pub eta: Option<f64>,
    pub eta_o: Option<f64>,
    pub points: Option<usize>,
    pub target: Option<f64>,
    pub policy: Option<PathBuf>,
    pub detector: Option<String>,
    pub trials: Option<u64>,
    pub source: Option<SourceKind>,
    pub photons: Option<usize>,
    pub mu: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub target_teff: Option<f64>,
    pub loss_aux1: Option<f64>,
    pub loss_aux2: Option<f64>,
    pub loss_out: Option<f64>,
    pub pulses: Option<u64>,
    pub feedforward: Option<bool>,
    pub sweep: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn required<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T> {
    flag.or(config)
        .ok_or_else(|| Error::Domain(format!("missing required parameter {name}")))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let threads = cli.common.threads.or(config.threads);
    let mut notes = Vec::new();
    let result = match threads {
        Some(0) => return Err(Error::Domain("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?
            .install(|| dispatch(cli, &config, &mut notes)),
        None => dispatch(cli, &config, &mut notes),
    };
    err.write_all(&notes)?;
    let text = result?;
    match &cli.common.out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(text.as_bytes())?;
            f.flush()?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn seed_or_draw(cli: &Cli, config: &RunConfig, err: &mut Vec<u8>) -> Result<u64> {
    match cli.common.seed.or(config.seed) {
        Some(s) => Ok(s),
        None => {
            let s: u64 = rand::random();
            writeln!(err, "seed={s}")?;
            Ok(s)
        }
    }
}

fn pretty(mut v: Value) -> Result<String> {
    round_json(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn dispatch(cli: &Cli, config: &RunConfig, err: &mut Vec<u8>) -> Result<String> {
    let format = cli.common.format.or(config.format);
    match &cli.command {
        Command::Plan { m, n, k } => {
            let m = required(*m, config.m, "-m")?;
            let n = required(*n, config.n, "-n")?;
            let k = required(*k, config.k, "-k")?;
            plan(m, n, k, format)
        }
        Command::Curve { m, n, k_max } => {
            let m = required(*m, config.m, "-m")?;
            let n = required(*n, config.n, "-n")?;
            let k_max = required(*k_max, config.k_max, "-K")?;
            curve(m, n, k_max, format)
        }
        Command::Tradeoff {
            eta,
            eta_o,
            points,
            target,
        } => {
            let eta = eta.or(config.eta).unwrap_or(DEFAULT_ETA);
            let eta_o = eta_o.or(config.eta_o).unwrap_or(DEFAULT_ETA_O);
            match target.or(config.target) {
                Some(t) => tradeoff_at(eta, eta_o, t, format),
                None => {
                    let points = points.or(config.points).unwrap_or(DEFAULT_POINTS);
                    tradeoff_curve(eta, eta_o, points, format)
                }
            }
        }
        Command::Simulate {
            policy,
            m,
            n,
            k,
            detector,
            eta,
            eta_o,
            trials,
            trajectories,
        } => {
            let policy = match policy.as_ref().or(config.policy.as_ref()) {
                Some(path) => Policy::from_json(&std::fs::read_to_string(path)?)?,
                None => build_policy(
                    required(*m, config.m, "-m")?,
                    required(*n, config.n, "-n")?,
                    required(*k, config.k, "-k")?,
                )?,
            };
            let m = m.or(config.m).unwrap_or(policy.m);
            let det = match (detector, eta.or(config.eta)) {
                (Some(d), _) => *d,
                (None, Some(e)) if config.detector.is_none() || eta.is_some() => DetectorModel::inefficient_pnr(e)?,
                _ => match &config.detector {
                    Some(s) => s.parse()?,
                    None => DetectorModel::ideal(),
                },
            };
            let eta_o = eta_o.or(config.eta_o).unwrap_or(1.0);
            let trials = trials.or(config.trials).unwrap_or(DEFAULT_TRIALS);
            let seed = seed_or_draw(cli, config, err)?;
            if let Some(path) = trajectories {
                let mut f = BufWriter::new(File::create(path)?);
                write_trajectories(&mut f, &policy, m, &det, eta_o, trials, seed)?;
                f.flush()?;
            }
            simulate(&policy, m, &det, eta_o, trials, seed, format)
        }
        Command::Emulate {
            source,
            photons,
            mu,
            t1,
            t2,
            target_teff,
            loss_aux1,
            loss_aux2,
            loss_out,
            eta,
            pulses,
            no_feedforward,
            sweep,
        } => {
            let defaults = EmulationConfig::default();
            let source = match source.or(config.source).unwrap_or(SourceKind::Coherent) {
                SourceKind::Fock => SourceModel::fock(photons.or(config.photons).unwrap_or(2))?,
                SourceKind::Coherent => SourceModel::coherent(mu.or(config.mu).unwrap_or(DEFAULT_MEAN_PHOTONS))?,
            };
            let mut cfg = EmulationConfig {
                source,
                t1: t1.or(config.t1).unwrap_or(defaults.t1),
                t2: t2.or(config.t2).unwrap_or(defaults.t2),
                feedforward: !*no_feedforward && config.feedforward.unwrap_or(true),
                losses: PortLosses::new(
                    loss_aux1.or(config.loss_aux1).unwrap_or(1.0),
                    loss_aux2.or(config.loss_aux2).unwrap_or(1.0),
                    loss_out.or(config.loss_out).unwrap_or(1.0),
                )?,
                detector_efficiency: eta.or(config.eta).unwrap_or(1.0),
                pulses: pulses.or(config.pulses).unwrap_or(DEFAULT_PULSES),
                seed: 0,
            };
            cfg.validate()?;
            cfg.seed = seed_or_draw(cli, config, err)?;
            if let Some(target) = target_teff.or(config.target_teff) {
                cfg.t1 = coincidence::calibrate_t1(&cfg, target, cfg.pulses.min(CALIBRATION_PULSES))?;
            }
            match sweep.clone().or_else(|| config.sweep.clone()) {
                Some(values) => emulate_sweep(&cfg, &values, format),
                None => emulate(&cfg, format),
            }
        }
    }
}

fn plan(m: usize, n: usize, k: usize, format: Option<Format>) -> Result<String> {
    let policy = build_policy(m, n, k)?;
    let p_max = evaluate_policy_lossy(&policy, m, &DetectorModel::ideal(), 1.0)?.success_probability;
    let tree = serde_json::to_value(&policy)?;
    match format {
        Some(Format::Json) => pretty(json!({ "m": m, "n": n, "k": k, "P_max": p_max, "policy": tree })),
        Some(Format::Csv) => Ok(format!(
            "m,n,k,T1_opt,P_max\n{m},{n},{k},{},{}\n",
            format_sig(policy.root.transmittance),
            format_sig(p_max)
        )),
        None => Ok(format!("P_max={}\n{}", format_sig(p_max), pretty(tree)?)),
    }
}

fn curve(m: usize, n: usize, k_max: usize, format: Option<Format>) -> Result<String> {
    if m <= n {
        return Err(Error::Domain(format!("curve needs m > n, got m={m}, n={n}")));
    }
    let table = PmaxTable::build(m, n, k_max)?;
    match format {
        Some(Format::Json) => {
            let rows: Vec<Value> = (1..=k_max)
                .map(|k| {
                    json!({
                        "m": m, "n": n, "k": k,
                        "T1_opt": table.first_transmittance(m, k),
                        "P_max": table.probability(m, k),
                    })
                })
                .collect();
            pretty(Value::Array(rows))
        }
        _ => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf, Some(m))?;
            Ok(String::from_utf8_lossy(&buf).into_owned())
        }
    }
}

fn tradeoff_curve(eta: f64, eta_o: f64, points: usize, format: Option<Format>) -> Result<String> {
    let curve = tradeoff::tradeoff_curve(eta, eta_o, points)?;
    match format {
        Some(Format::Json) => pretty(serde_json::to_value(&curve)?),
        _ => {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            Ok(String::from_utf8_lossy(&buf).into_owned())
        }
    }
}

fn tradeoff_at(eta: f64, eta_o: f64, target: f64, format: Option<Format>) -> Result<String> {
    let ff = tradeoff::optimize_feedforward(eta, eta_o, target)?;
    let elementary = match tradeoff::optimize_elementary(eta, target) {
        Ok(p) => Some(p),
        Err(Error::Infeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    let curve = tradeoff::TradeoffCurve {
        elementary: elementary.into_iter().collect(),
        feedforward: vec![tradeoff::TradeoffPoint {
            probability: ff.probability,
            p1: ff.p1,
            settings: Settings::Feedforward { t1: ff.t1, t2: ff.t2 },
            eta,
            eta_o,
        }],
    };
    match format {
        Some(Format::Json) => pretty(serde_json::to_value(&curve)?),
        _ => {
            let mut buf = Vec::new();
            curve.write_csv(&mut buf)?;
            Ok(String::from_utf8_lossy(&buf).into_owned())
        }
    }
}

fn simulate(
    policy: &Policy,
    m: usize,
    det: &DetectorModel,
    eta_o: f64,
    trials: u64,
    seed: u64,
    format: Option<Format>,
) -> Result<String> {
    let analytic = evaluate_policy_lossy(policy, m, det, eta_o)?.success_probability;
    let est = estimate_success(policy, m, det, eta_o, trials, seed)?;
    let z = est.estimate.z_score(analytic);
    match format {
        Some(Format::Csv) => Ok(format!(
            "estimate,std_error,trials,successes,seed,analytic\n{},{},{},{},{},{}\n",
            format_sig(est.estimate.value),
            format_sig(est.estimate.std_error),
            est.estimate.trials,
            est.estimate.successes,
            seed,
            format_sig(analytic)
        )),
        _ => {
            let mut v = serde_json::to_value(&est)?;
            v["detector"] = json!(det.to_string());
            v["eta_O"] = json!(eta_o);
            v["analytic"] = json!(analytic);
            v["z_score"] = if z.is_finite() { json!(z) } else { Value::Null };
            pretty(v)
        }
    }
}

#[derive(Serialize)]
struct EmulateOutput<'a> {
    config: &'a EmulationConfig,
    #[serde(flatten)]
    report: coincidence::EmulationReport,
}

fn emulate(cfg: &EmulationConfig, format: Option<Format>) -> Result<String> {
    let report = coincidence::emulate(cfg)?;
    match format {
        Some(Format::Csv) => {
            let point = coincidence::SweepPoint {
                t1: cfg.t1,
                t_eff: report.t_eff,
                p_exp: report.p_exp,
                se: report.p_exp_se,
                feedforward: cfg.feedforward,
            };
            sweep_csv(&[point])
        }
        _ => pretty(serde_json::to_value(EmulateOutput { config: cfg, report })?),
    }
}

fn emulate_sweep(cfg: &EmulationConfig, values: &[f64], format: Option<Format>) -> Result<String> {
    let points = coincidence::sweep(cfg, values)?;
    match format {
        Some(Format::Json) => pretty(serde_json::to_value(&points)?),
        _ => sweep_csv(&points),
    }
}

fn sweep_csv(points: &[coincidence::SweepPoint]) -> Result<String> {
    let mut buf = Vec::new();
    coincidence::write_sweep_csv(&mut buf, points)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Entry point of the binary.
pub fn main_with_std() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
