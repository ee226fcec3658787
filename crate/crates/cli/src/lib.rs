//! Command-line front end for `gdimbalance`.
//!
//! Every subcommand prints its resolved configuration as one JSON line on
//! stderr before running, so stdout carries only results.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gdimbalance::experiments::sweep::{lin_space, log_space};
use gdimbalance::experiments::{
    random_init, reduce_dataset, sweep, sweep_stats, with_worker_pool, write_sweep_csv, write_trajectory_json, Dataset,
    EtaGrid, InitLaw, SweepConfig, SweepRow,
};
use gdimbalance::verify::{record_trajectory, run_suite, Suite, TrajectoryRecord, DEFAULT_DELTA, DEFAULT_MAX_STEPS};
use gdimbalance::{gf_limit_prediction, integrate, regime, summarize, thresholds, HyperParams, ParamState, SummaryState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or values; exit 2.
    Usage(String),
    /// A runtime failure (I/O, numerics); exit 1.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_FAILURE,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "gdbal", version, about = "GD and gradient flow on the product loss 1/2 (a.b - phi)^2")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one GD trajectory and write it as JSON.
    Simulate(SimulateArgs),
    /// Integrate gradient flow and compare with the conserved-quantity prediction.
    Flow(FlowArgs),
    /// Run a step size x initial scale grid and write a CSV table.
    Sweep(SweepArgs),
    /// Run the verification campaigns; exits 1 if an undocumented check fails.
    Verify(VerifyArgs),
    /// Print the critical step sizes for (scale, residual, phi).
    Thresholds(ThresholdArgs),
    /// Reduce a two-column (x, y) CSV dataset to the product loss.
    Reduce(ReduceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Law {
    GaussianBalancedFree,
    RegionCForced,
}

impl From<Law> for InitLaw {
    fn from(l: Law) -> Self {
        match l {
            Law::GaussianBalancedFree => InitLaw::GaussianBalancedFree,
            Law::RegionCForced => InitLaw::RegionCForced,
        }
    }
}

/// Explicit `--a/--b`, or a random start from `--dim/--scale0/--seed`.
#[derive(Debug, Args)]
struct InitArgs {
    /// Comma-separated first-layer weights.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "b")]
    a: Option<Vec<f64>>,
    /// Comma-separated second-layer weights.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, requires = "a")]
    b: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2, conflicts_with = "a")]
    dim: usize,
    /// Initial scale of a random start.
    #[arg(long, default_value_t = 5.0, conflicts_with = "a")]
    scale0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gaussian-balanced-free", conflicts_with = "a")]
    law: Law,
}

impl InitArgs {
    fn state(&self) -> Result<ParamState<f64>, CliError> {
        match (&self.a, &self.b) {
            (Some(a), Some(b)) => ParamState::new(a.clone(), b.clone()).map_err(|e| CliError::Usage(e.to_string())),
            _ => random_init(self.dim, self.scale0, self.law.into(), self.seed).map_err(|e| CliError::Usage(e.to_string())),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    init: InitArgs,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    #[arg(long)]
    eta: f64,
    /// Stop once the loss is at most this.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
    /// `.json` output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[command(flatten)]
    init: InitArgs,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    /// Loss at which integration stops.
    #[arg(long, default_value_t = 1e-16)]
    delta: f64,
    /// Largest integration time.
    #[arg(long, default_value_t = 1e6)]
    horizon: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// `x,y,...`, `log:lo:hi:n`, or `inv:lo:c:n` (log-spaced from lo to c/lambda0).
    #[arg(long, value_parser = parse_eta_grid)]
    eta_grid: Option<EtaGrid>,
    /// `x,y,...`, `lin:lo:hi:n` or `log:lo:hi:n`.
    #[arg(long, value_parser = parse_grid)]
    scale_grid: Option<Grid>,
    /// `N` for seeds 0..N, `lo..hi`, or `s1,s2,...`.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    #[arg(long, default_value_t = 1e-8)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: usize,
    #[arg(long, value_enum, default_value = "gaussian-balanced-free")]
    law: Law,
    /// `.csv` or `.json` output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(Suite::NAMES))]
    suite: String,
    /// Instances per randomized campaign.
    #[arg(long, default_value_t = 50)]
    seeds: usize,
    /// Campaign seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional `.json` report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// lambda = |a|^2 + |b|^2.
    #[arg(long)]
    scale: f64,
    /// eps = a.b - phi.
    #[arg(long, allow_negative_numbers = true)]
    residual: f64,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    /// Initial scale entering lambda_bar; defaults to --scale.
    #[arg(long)]
    scale0: Option<f64>,
    /// Also classify this step size.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    /// Two-column CSV of (x, y) samples; a non-numeric first row is a header.
    #[arg(long)]
    data: PathBuf,
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

fn parse_spec(s: &str) -> Result<Option<(String, f64, f64, usize)>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 1 {
        return Ok(None);
    }
    let [kind, lo, hi, n] = parts[..] else {
        return Err(format!("expected kind:lo:hi:n, got {s:?}"));
    };
    let num = |t: &str| t.parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let n = n.parse::<usize>().map_err(|e| format!("{n:?}: {e}"))?;
    if n == 0 {
        return Err("grid needs at least one point".into());
    }
    Ok(Some((kind.to_string(), num(lo)?, num(hi)?, n)))
}

/// A parsed value list; wrapped so clap treats it as one flag value.
#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let v = match parse_spec(s)? {
        None => parse_list(s)?,
        Some((k, lo, hi, n)) if k == "lin" => lin_space(lo, hi, n),
        Some((k, lo, hi, n)) if k == "log" => {
            if !(lo > 0.0 && hi > 0.0) {
                return Err("log grid needs positive ends".into());
            }
            log_space(lo, hi, n)
        }
        Some((k, ..)) => return Err(format!("unknown grid kind {k:?}")),
    };
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err("grid values must be positive and finite".into());
    }
    Ok(Grid(v))
}

fn parse_eta_grid(s: &str) -> Result<EtaGrid, String> {
    match parse_spec(s)? {
        Some((k, lo, c, n)) if k == "inv" => {
            if !(lo > 0.0 && c > 0.0) {
                return Err("inv grid needs positive lo and c".into());
            }
            Ok(EtaGrid::LogToInverseScale { lo, c, n })
        }
        _ => parse_grid(s).map(|g| EtaGrid::Fixed(g.0)),
    }
}

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let int = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}"));
    let v: Vec<u64> = if let Some((lo, hi)) = s.split_once("..") {
        (int(lo)?..int(hi)?).collect()
    } else if s.contains(',') {
        s.split(',').map(int).collect::<Result<_, _>>()?
    } else {
        (0..int(s)?).collect()
    };
    if v.is_empty() {
        return Err("no seeds".into());
    }
    Ok(Seeds(v))
}

/// What [`write_records`] can persist.
pub enum Records<'a> {
    Sweep(&'a [SweepRow]),
    Trajectory(&'a TrajectoryRecord),
}

/// Writes `records` to `path` through a temporary file in the same directory,
/// renamed into place once complete. The format follows the extension:
/// sweeps as `.csv` or `.json`, trajectories as `.json`.
pub fn write_records(path: &Path, records: Records<'_>) -> Result<(), CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match (&records, ext) {
        (Records::Sweep(_), "csv" | "json") | (Records::Trajectory(_), "json") => {}
        _ => {
            return Err(CliError::Usage(format!(
                "{}: unsupported extension {ext:?} for this output",
                path.display()
            )))
        }
    }
    let ctx = |e: &dyn std::fmt::Display| CliError::Runtime(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ctx(&e))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        match (records, ext) {
            (Records::Sweep(rows), "csv") => write_sweep_csv(&mut w, rows).map_err(|e| ctx(&e))?,
            (Records::Sweep(rows), _) => {
                serde_json::to_writer(&mut w, rows).map_err(|e| ctx(&e))?;
                w.write_all(b"\n").map_err(|e| ctx(&e))?;
            }
            (Records::Trajectory(tr), _) => write_trajectory_json(&mut w, tr).map_err(|e| ctx(&e))?,
        }
        w.flush().map_err(|e| ctx(&e))?;
    }
    tmp.persist(path).map_err(|e| ctx(&e.error))?;
    Ok(())
}

fn print_config(command: &str, config: serde_json::Value) {
    eprintln!("{}", json!({ "command": command, "config": config }));
}

fn hyper(phi: f64, eta: f64) -> Result<HyperParams<f64>, CliError> {
    HyperParams::new(phi, eta).map_err(|e| CliError::Usage(e.to_string()))
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--{name} must be positive and finite, got {x}")))
    }
}

fn cmd_simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let init = args.init.state()?;
    let hp = hyper(args.phi, args.eta)?;
    positive("delta", args.delta)?;
    if let Some(p) = &args.out {
        if p.extension().and_then(|e| e.to_str()) != Some("json") {
            return Err(CliError::Usage(format!("{}: trajectories are written as .json", p.display())));
        }
    }
    print_config(
        "simulate",
        json!({ "a": init.a(), "b": init.b(), "phi": hp.phi, "eta": hp.eta, "delta": args.delta,
                "max_steps": args.max_steps, "seed": args.init.seed, "out": args.out }),
    );
    let mut tr = record_trajectory(&init, &hp, args.delta, args.max_steps);
    tr.seed = args.init.seed;
    eprintln!(
        "status={} T={} final_loss={:e} final_scale={}",
        tr.status,
        tr.steps.len() - 1,
        tr.last().loss,
        tr.last().scale()
    );
    match &args.out {
        Some(p) => write_records(p, Records::Trajectory(&tr))?,
        None => write_trajectory_json(&mut *out, &tr).map_err(runtime)?,
    }
    Ok(EXIT_OK)
}

fn cmd_flow(args: FlowArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let init = args.init.state()?;
    positive("delta", args.delta)?;
    positive("horizon", args.horizon)?;
    if !(args.phi.is_finite() && args.phi >= 0.0) {
        return Err(CliError::Usage(format!("--phi must be finite and >= 0, got {}", args.phi)));
    }
    print_config(
        "flow",
        json!({ "a": init.a(), "b": init.b(), "phi": args.phi, "loss_tol": args.delta, "horizon": args.horizon }),
    );
    let s0 = summarize(&init, args.phi);
    let res = integrate(&init, args.phi, args.delta, args.horizon).map_err(runtime)?;
    let sf = summarize(&res.final_state, args.phi);
    let prediction = gf_limit_prediction(&s0, args.phi).ok();
    let report = json!({
        "status": res.status,
        "time": res.time_horizon,
        "final_state": { "a": res.final_state.a(), "b": res.final_state.b() },
        "final_residual": sf.residual(),
        "final_scale": sf.scale(),
        "final_imbalances": sf.imbalances(),
        "max_q_drift": res.max_q_drift,
        "max_alpha_drift": res.max_alpha_drift,
        "steps_accepted": res.steps_accepted,
        "steps_rejected": res.steps_rejected,
        "predicted_lambda_inf": prediction.as_ref().map(|p| p.lambda_inf),
        "predicted_q_signs": prediction.as_ref().map(|p| p.q_signs.clone()),
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(runtime)?).map_err(runtime)?;
    Ok(EXIT_OK)
}

fn cmd_sweep(args: SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if args.dim == 0 {
        return Err(CliError::Usage("--dim must be at least 1".into()));
    }
    positive("delta", args.delta)?;
    let mut cfg = SweepConfig::default_grid(args.phi, args.dim);
    if let Some(g) = args.eta_grid {
        cfg.eta_grid = g;
    }
    if let Some(g) = args.scale_grid {
        cfg.scale_grid = g.0;
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s.0;
    }
    cfg.delta = args.delta;
    cfg.max_steps = args.max_steps;
    cfg.law = args.law.into();
    if cfg.scale_grid.is_empty() {
        return Err(CliError::Usage(format!("--scale-grid is empty for phi = {}", args.phi)));
    }
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("csv" | "json") => {}
        _ => return Err(CliError::Usage(format!("{}: sweeps are written as .csv or .json", args.out.display()))),
    }
    print_config("sweep", json!({ "sweep": cfg, "out": args.out }));
    let rows = sweep(&cfg).map_err(runtime)?;
    write_records(&args.out, Records::Sweep(&rows))?;
    let stats = sweep_stats(&cfg, &rows);
    writeln!(
        out,
        "rows={} stable={} chaotic={} monotone_violations={} spearman_T_Qratio={}",
        rows.len(),
        stats.stable_rows,
        stats.chaotic_rows,
        stats.total_violations(),
        stats.spearman_t_qratio.map_or("n/a".into(), |r| format!("{r:.4}"))
    )
    .map_err(runtime)?;
    Ok(EXIT_OK)
}

fn cmd_verify(args: VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let suite = Suite::parse(&args.suite).ok_or_else(|| CliError::Usage(format!("unknown suite {:?}", args.suite)))?;
    if let Some(p) = &args.out {
        if p.extension().and_then(|e| e.to_str()) != Some("json") {
            return Err(CliError::Usage(format!("{}: reports are written as .json", p.display())));
        }
    }
    print_config("verify", json!({ "suite": args.suite, "instances": args.seeds, "seed": args.seed, "out": args.out }));
    let summaries = with_worker_pool(|| run_suite(suite, args.seeds, args.seed)).map_err(runtime)?;
    let mut failed = false;
    for s in &summaries {
        let tag = if s.all_passed() {
            "PASS"
        } else if s.documented_discrepancy.is_some() {
            "KNOWN"
        } else {
            failed = true;
            "FAIL"
        };
        let margin = s.worst_margin.map_or("-".into(), |m| format!("{m:.3e}"));
        writeln!(
            out,
            "{tag:5} {:22} {:>5}/{:<5} applicable of {:<5} worst_margin={margin}  [{}]",
            s.check, s.passed, s.applicable, s.instances, s.claim
        )
        .map_err(runtime)?;
        if let Some(note) = &s.documented_discrepancy {
            if !s.all_passed() {
                writeln!(out, "      note: {note}").map_err(runtime)?;
            }
        }
    }
    if let Some(p) = &args.out {
        let dir = match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let ctx = |e: &dyn std::fmt::Display| CliError::Runtime(format!("{}: {e}", p.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ctx(&e))?;
        serde_json::to_writer_pretty(tmp.as_file_mut(), &summaries).map_err(|e| ctx(&e))?;
        tmp.persist(p).map_err(|e| ctx(&e.error))?;
    }
    Ok(if failed { EXIT_FAILURE } else { EXIT_OK })
}

fn cmd_thresholds(args: ThresholdArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let lambda0 = args.scale0.unwrap_or(args.scale);
    let s = SummaryState::synthetic(args.residual, args.scale, Vec::new(), args.phi)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if !(args.phi.is_finite() && args.phi >= 0.0) {
        return Err(CliError::Usage(format!("--phi must be finite and >= 0, got {}", args.phi)));
    }
    print_config(
        "thresholds",
        json!({ "scale": args.scale, "residual": args.residual, "phi": args.phi, "scale0": lambda0, "eta": args.eta }),
    );
    let th = thresholds(&s, lambda0, args.phi);
    let mut report = serde_json::to_value(th).map_err(runtime)?;
    report["realizable"] = s.is_realizable().into();
    if let Some(eta) = args.eta {
        positive("eta", eta)?;
        report["eta"] = eta.into();
        report["regime"] = regime(eta, &th).as_str().into();
        report["eta_bar"] = th.eta_bar(eta).into();
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(runtime)?).map_err(runtime)?;
    Ok(EXIT_OK)
}

fn cmd_reduce(args: ReduceArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    print_config("reduce", json!({ "data": args.data }));
    let file = File::open(&args.data).map_err(|e| CliError::Runtime(format!("{}: {e}", args.data.display())))?;
    let ds = Dataset::from_csv(BufReader::new(file)).map_err(|e| CliError::Runtime(format!("{}: {e}", args.data.display())))?;
    let r = reduce_dataset(&ds).map_err(runtime)?;
    let mut report = serde_json::to_value(r).map_err(runtime)?;
    report["target"] = r.target().into();
    report["samples"] = ds.len().into();
    writeln!(out, "{}", serde_json::to_string_pretty(&report).map_err(runtime)?).map_err(runtime)?;
    Ok(EXIT_OK)
}

/// Parses `argv` (program name first) and runs the command, writing results to `out`.
pub fn run<I, S>(argv: I, out: &mut dyn Write) -> Result<i32, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    write!(out, "{e}").map_err(runtime)?;
                    Ok(EXIT_OK)
                }
                _ => Err(CliError::Usage(e.render().to_string().trim_start_matches("error: ").trim_end().to_string())),
            };
        }
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Flow(a) => cmd_flow(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::Thresholds(a) => cmd_thresholds(a, out),
        Command::Reduce(a) => cmd_reduce(a, out),
    }
}

/// Runs the command with stdout as the result stream; returns the exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(argv, &mut lock) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
