//! `polsqueeze` command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use polsqueeze::oracle::{oracle_check, OracleReport, ORACLE_TAUS, ORACLE_TOLERANCE};
use polsqueeze::sweep::{
    dilution_probe, eval_point, find_optimum, fmt_f64, run_sweep, Axis, Bound, DilutionReport,
    EvalOptions, Objective, OptimizeSpec, Optimum, Output, ParamName, PointReport, Provenance,
    SweepSpec,
};
use polsqueeze::{Error, OpoParams, QuadConfig, Result, VvvvForm};

const EXIT_PARTIAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "polsqueeze", version, about = "Polarization entanglement from squeezed light mixed with a coherent beam")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full report at one operating point.
    Point(PointArgs),
    /// Evaluate outputs on a 1- to 3-axis grid.
    Sweep(SweepArgs),
    /// Maximize concurrence, W2 or beta inside box bounds.
    Optimize(OptimizeArgs),
    /// Bell figure of merit versus coherent flux at fixed squeezed flux.
    Dilution(DilutionArgs),
    /// Compare closed-form correlations against numerical Fourier quadrature.
    OracleCheck(OracleArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// JSON file with default values for any flag.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Cavity bandwidth as a rate, 1/s (no 2π).
    #[arg(long)]
    delta_nu: Option<f64>,
    /// Cavity escape coefficient.
    #[arg(long)]
    eta: Option<f64>,
    /// Square root of the pump power as a fraction of threshold.
    #[arg(long, conflicts_with = "phi_s")]
    mu: Option<f64>,
    /// Squeezed-vacuum photon flux, 1/s.
    #[arg(long)]
    phi_s: Option<f64>,
    /// Coherent-beam photon flux, 1/s.
    #[arg(long)]
    phi_c: Option<f64>,
    /// Delay between the two detections, s.
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// Coincidence window, s.
    #[arg(long)]
    delta_tau: Option<f64>,
    /// Delay at which the Bell violation entering beta is evaluated, s.
    #[arg(long)]
    beta_tau: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Relative tolerance of every quadrature.
    #[arg(long)]
    quad_rel_tol: Option<f64>,
    /// Closed form used for the VV,VV correlation: gaussian or printed.
    #[arg(long)]
    vvvv_form: Option<VvvvForm>,
    /// Omit the wall-clock timestamp so reruns are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Debug)]
struct PointArgs {
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    shared: Shared,
    /// Grid axis as name:scale:min:max:count, e.g. phi_c:log:1e5:1e8:40. Repeatable.
    #[arg(long = "axis", value_name = "AXIS")]
    axes: Vec<Axis>,
    /// Comma-separated outputs: odm_entries, concurrence, s_max, beta, w2, r_ps, nonclassicality.
    #[arg(long, value_delimiter = ',')]
    outputs: Vec<Output>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[command(flatten)]
    shared: Shared,
    /// concurrence, w2 or beta.
    #[arg(long)]
    objective: Option<Objective>,
    /// Free parameter as name:min:max (log) or name:scale:min:max. Repeatable.
    #[arg(long = "bound", value_name = "BOUND")]
    bounds: Vec<Bound>,
    /// Coarse-scan points per free parameter.
    #[arg(long)]
    grid: Option<usize>,
    /// Feasibility constraint on the concurrence at --tau.
    #[arg(long)]
    min_concurrence: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Debug)]
struct DilutionArgs {
    #[command(flatten)]
    shared: Shared,
    /// Coherent-flux samples as min:max:count (log-spaced).
    #[arg(long, value_name = "RANGE")]
    phi_c_range: Option<String>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    shared: Shared,
    /// Comma-separated delays, s.
    #[arg(long, value_delimiter = ',')]
    taus: Vec<f64>,
    /// Relative tolerance on the asserted elements.
    #[arg(long)]
    tolerance: Option<f64>,
}

/// Contents of a `--config` file. Every key is optional; flags win.
#[derive(Deserialize, Default, Debug)]
#[serde(default, deny_unknown_fields)]
struct Config {
    delta_nu: Option<f64>,
    eta: Option<f64>,
    mu: Option<f64>,
    phi_s: Option<f64>,
    phi_c: Option<f64>,
    tau: Option<f64>,
    delta_tau: Option<f64>,
    beta_tau: Option<f64>,
    format: Option<Format>,
    jobs: Option<usize>,
    quad_rel_tol: Option<f64>,
    vvvv_form: Option<VvvvForm>,
    axes: Vec<String>,
    outputs: Vec<Output>,
    objective: Option<Objective>,
    bounds: Vec<String>,
    grid: Option<usize>,
    min_concurrence: Option<f64>,
    max_iterations: Option<usize>,
    phi_c_range: Option<String>,
    taus: Vec<f64>,
    tolerance: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Validation(format!("config {}: {e}", p.display())))
        }
    }
}

/// Shared settings after merging flags, config and defaults.
struct Resolved {
    values: BTreeMap<ParamName, f64>,
    explicit: BTreeSet<ParamName>,
    options: EvalOptions,
    format: Option<Format>,
    jobs: usize,
    out: Option<PathBuf>,
    timestamp: bool,
}

impl Resolved {
    fn new(shared: &Shared, cfg: &Config) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut explicit = BTreeSet::new();
        // Only command-line values count as explicit; config values act as
        // defaults that a sweep axis or bound may replace.
        let mut put = |name, flag: Option<f64>, conf: Option<f64>, default: f64| {
            if flag.is_some() {
                explicit.insert(name);
            }
            values.insert(name, flag.or(conf).unwrap_or(default));
        };
        put(ParamName::DeltaNu, shared.delta_nu, cfg.delta_nu, 8e6);
        put(ParamName::Eta, shared.eta, cfg.eta, 0.93);
        put(ParamName::PhiC, shared.phi_c, cfg.phi_c, 2e6);
        put(ParamName::Tau, shared.tau, cfg.tau, 1e-9);
        // A pump flag on the command line beats either pump key in the config.
        if cfg.mu.is_some() && cfg.phi_s.is_some() {
            return Err(Error::Validation("config sets both mu and phi_s".into()));
        }
        let (name, v) = match (shared.mu, shared.phi_s, cfg.mu, cfg.phi_s) {
            (Some(mu), _, _, _) => (ParamName::Mu, mu),
            (None, Some(ps), _, _) => (ParamName::PhiS, ps),
            (None, None, Some(mu), _) => (ParamName::Mu, mu),
            (None, None, None, ps) => (ParamName::PhiS, ps.unwrap_or(2e5)),
        };
        if shared.mu.is_some() || shared.phi_s.is_some() {
            explicit.insert(name);
        }
        values.insert(name, v);

        let mut quad = QuadConfig::default();
        if let Some(tol) = shared.quad_rel_tol.or(cfg.quad_rel_tol) {
            quad = quad.with_rel_tol(tol);
        }
        quad.validate()?;
        let defaults = EvalOptions::default();
        let options = EvalOptions {
            delta_tau: shared.delta_tau.or(cfg.delta_tau).unwrap_or(defaults.delta_tau),
            beta_tau: shared.beta_tau.or(cfg.beta_tau).unwrap_or(defaults.beta_tau),
            quad,
            vvvv_form: shared.vvvv_form.or(cfg.vvvv_form).unwrap_or_default(),
        };
        if !(options.delta_tau >= 0.0 && options.delta_tau.is_finite()) {
            return Err(Error::Validation(format!("delta_tau must be >= 0, got {}", options.delta_tau)));
        }
        let jobs = shared
            .jobs
            .or(cfg.jobs)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs == 0 {
            return Err(Error::Validation("--jobs must be >= 1".into()));
        }
        Ok(Resolved {
            values,
            explicit,
            options,
            format: shared.format.or(cfg.format),
            jobs,
            out: shared.out.clone(),
            timestamp: !shared.no_timestamp,
        })
    }

    fn params(&self) -> Result<(OpoParams, f64)> {
        polsqueeze::sweep::params_from_values(&self.values)
    }

    /// Model values not covered by `free`; an explicit value on a free slot is an error.
    fn fixed_except(&self, free: &[ParamName]) -> Result<BTreeMap<ParamName, f64>> {
        for n in &self.explicit {
            if let Some(f) = free.iter().find(|f| f.slot() == n.slot()) {
                return Err(Error::Validation(format!(
                    "{n} is given as a fixed value but {f} is also varied"
                )));
            }
        }
        Ok(self
            .values
            .iter()
            .filter(|(n, _)| free.iter().all(|f| f.slot() != n.slot()))
            .map(|(n, v)| (*n, *v))
            .collect())
    }

    fn echo(&self, command: &str, extra: &[(String, String)]) {
        let mut e = io::stderr().lock();
        let _ = writeln!(e, "# polsqueeze {} {command}", env!("CARGO_PKG_VERSION"));
        for (n, v) in &self.values {
            let unit = match n {
                ParamName::DeltaNu => " Hz",
                ParamName::PhiC | ParamName::PhiS => " 1/s",
                ParamName::Tau => " s",
                _ => "",
            };
            let _ = writeln!(e, "#   {:<16} {:e}{unit}", n.as_str(), v);
        }
        let o = &self.options;
        let _ = writeln!(e, "#   {:<16} {:e} s", "delta_tau", o.delta_tau);
        let _ = writeln!(e, "#   {:<16} {:e} s", "beta_tau", o.beta_tau);
        let _ = writeln!(e, "#   {:<16} {:e}", "quad_rel_tol", o.quad.rel_tol);
        let _ = writeln!(e, "#   {:<16} {}", "vvvv_form", o.vvvv_form.label());
        let _ = writeln!(e, "#   {:<16} {}", "jobs", self.jobs);
        for (k, v) in extra {
            let _ = writeln!(e, "#   {k:<16} {v}");
        }
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance::new(self.options.vvvv_form, self.timestamp)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: Provenance,
    result: &'a T,
}

fn write_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_table(mut w: impl Write, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        let line: Vec<String> = r.iter().map(|&x| fmt_f64(x)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn run_point(args: &PointArgs) -> Result<u8> {
    let cfg = load_config(args.shared.config.as_deref())?;
    let r = Resolved::new(&args.shared, &cfg)?;
    r.echo("point", &[]);
    let (params, tau) = r.params()?;
    let report: PointReport = eval_point(&params, tau, &r.options)?;
    match r.format.unwrap_or(Format::Json) {
        Format::Json => write_json(r.sink()?, &Envelope { provenance: r.provenance(), result: &report })?,
        Format::Csv => {
            let mut header: Vec<String> = r.values.keys().map(|k| k.as_str().to_string()).collect();
            header.extend(Output::ALL.iter().flat_map(|o| o.columns().iter().map(|c| c.to_string())));
            let mut row: Vec<f64> = r.values.values().copied().collect();
            row.extend(report.output_values(&Output::ALL));
            write_table(r.sink()?, &header, &[row])?;
        }
    }
    Ok(0)
}

fn run_sweep_cmd(args: &SweepArgs) -> Result<u8> {
    let cfg = load_config(args.shared.config.as_deref())?;
    let r = Resolved::new(&args.shared, &cfg)?;
    let axes = if args.axes.is_empty() {
        cfg.axes.iter().map(|a| a.parse()).collect::<Result<Vec<Axis>>>()?
    } else {
        args.axes.clone()
    };
    let outputs = if !args.outputs.is_empty() {
        args.outputs.clone()
    } else if !cfg.outputs.is_empty() {
        cfg.outputs.clone()
    } else {
        vec![Output::Concurrence]
    };
    let free: Vec<ParamName> = axes.iter().map(|a| a.name).collect();
    let spec = SweepSpec { fixed: r.fixed_except(&free)?, axes, outputs, options: r.options };
    spec.validate()?;
    let axis_desc: Vec<(String, String)> = spec
        .axes
        .iter()
        .map(|a| {
            (
                format!("axis {}", a.name),
                format!("{:?} [{:e}, {:e}] x {}", a.scale, a.min, a.max, a.count).to_lowercase(),
            )
        })
        .chain(std::iter::once((
            "outputs".to_string(),
            spec.outputs.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(","),
        )))
        .collect();
    r.echo("sweep", &axis_desc);
    let result = run_sweep(&spec, r.jobs, r.timestamp)?;
    match r.format.unwrap_or(Format::Csv) {
        Format::Csv => result.write_csv(r.sink()?)?,
        Format::Json => write_json(r.sink()?, &result)?,
    }
    let failed = result.failed_rows();
    if failed > 0 {
        let first = result.rows.iter().find_map(|row| row.error.as_deref()).unwrap_or("");
        eprintln!("warning: {failed} of {} rows failed; first error: {first}", result.rows.len());
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn run_optimize(args: &OptimizeArgs) -> Result<u8> {
    let cfg = load_config(args.shared.config.as_deref())?;
    let r = Resolved::new(&args.shared, &cfg)?;
    let bounds = if args.bounds.is_empty() {
        cfg.bounds.iter().map(|b| b.parse()).collect::<Result<Vec<Bound>>>()?
    } else {
        args.bounds.clone()
    };
    let objective = args
        .objective
        .or(cfg.objective)
        .ok_or_else(|| Error::Validation("--objective is required".into()))?;
    let free: Vec<ParamName> = bounds.iter().map(|b| b.name).collect();
    let mut spec = OptimizeSpec::new(objective, bounds, r.fixed_except(&free)?);
    spec.options = r.options;
    if let Some(g) = args.grid.or(cfg.grid) {
        spec.grid_count = g;
    }
    if let Some(it) = args.max_iterations.or(cfg.max_iterations) {
        spec.max_iterations = it;
    }
    spec.min_concurrence = args.min_concurrence.or(cfg.min_concurrence);
    spec.validate()?;
    let mut extra = vec![
        ("objective".to_string(), format!("{objective:?}").to_lowercase()),
        ("grid".to_string(), spec.grid_count.to_string()),
    ];
    for b in &spec.bounds {
        extra.push((format!("bound {}", b.name), format!("[{:e}, {:e}] {:?}", b.min, b.max, b.scale).to_lowercase()));
    }
    if let Some(c) = spec.min_concurrence {
        extra.push(("min_concurrence".to_string(), c.to_string()));
    }
    r.echo("optimize", &extra);
    let opt: Optimum = find_optimum(&spec, r.jobs)?;
    match r.format.unwrap_or(Format::Json) {
        Format::Json => write_json(r.sink()?, &Envelope { provenance: r.provenance(), result: &opt })?,
        Format::Csv => {
            let mut header: Vec<String> = opt.point.keys().map(|k| k.as_str().to_string()).collect();
            header.extend(["objective_value".to_string(), "concurrence".to_string()]);
            let mut row: Vec<f64> = opt.point.values().copied().collect();
            row.extend([opt.value, opt.report.entanglement.concurrence]);
            write_table(r.sink()?, &header, &[row])?;
        }
    }
    Ok(0)
}

fn parse_range(s: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Validation(format!("range `{s}` must look like min:max:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    Ok((
        parts[0].parse().map_err(|_| bad())?,
        parts[1].parse().map_err(|_| bad())?,
        parts[2].parse().map_err(|_| bad())?,
    ))
}

fn run_dilution(args: &DilutionArgs) -> Result<u8> {
    let cfg = load_config(args.shared.config.as_deref())?;
    let r = Resolved::new(&args.shared, &cfg)?;
    let range = args.phi_c_range.as_deref().or(cfg.phi_c_range.as_deref()).unwrap_or("1e5:1e8:40");
    let (lo, hi, count) = parse_range(range)?;
    r.echo("dilution", &[("phi_c_range".to_string(), range.to_string())]);
    let (params, _) = r.params()?;
    let report: DilutionReport = dilution_probe(&params, lo, hi, count, &r.options)?;
    match r.format.unwrap_or(Format::Json) {
        Format::Json => write_json(r.sink()?, &Envelope { provenance: r.provenance(), result: &report })?,
        Format::Csv => {
            let rows: Vec<Vec<f64>> =
                report.phi_c.iter().zip(&report.beta).map(|(&c, &b)| vec![c, b]).collect();
            write_table(r.sink()?, &["phi_c".to_string(), "beta".to_string()], &rows)?;
        }
    }
    Ok(0)
}

fn run_oracle(args: &OracleArgs) -> Result<u8> {
    let cfg = load_config(args.shared.config.as_deref())?;
    let r = Resolved::new(&args.shared, &cfg)?;
    let taus = if !args.taus.is_empty() {
        args.taus.clone()
    } else if !cfg.taus.is_empty() {
        cfg.taus.clone()
    } else {
        ORACLE_TAUS.to_vec()
    };
    let tolerance = args.tolerance.or(cfg.tolerance).unwrap_or(ORACLE_TOLERANCE);
    let tau_list: Vec<String> = taus.iter().map(|t| format!("{t:e}")).collect();
    r.echo(
        "oracle-check",
        &[("taus".to_string(), tau_list.join(",")), ("tolerance".to_string(), format!("{tolerance:e}"))],
    );
    let (params, _) = r.params()?;
    let pool = rayon_pool(r.jobs)?;
    let report: OracleReport = pool.install(|| oracle_check(&params, &taus, &r.options.quad, tolerance))?;
    match r.format.unwrap_or(Format::Json) {
        Format::Json => write_json(r.sink()?, &Envelope { provenance: r.provenance(), result: &report })?,
        Format::Csv => {
            let mut header = vec!["tau".to_string()];
            for e in &report.checks[0].elements {
                header.push(format!("{}_rel_dev", e.element));
                header.push(format!("{}_quad_err", e.element));
            }
            header.extend(
                ["r_vvvv_rel_dev_gaussian", "r_vvvv_rel_dev_printed", "pass"].map(String::from),
            );
            let rows: Vec<Vec<f64>> = report
                .checks
                .iter()
                .map(|c| {
                    let mut row = vec![c.tau];
                    for e in &c.elements {
                        row.push(e.rel_dev);
                        row.push(e.quad_err);
                    }
                    row.extend([c.r_vvvv.rel_dev_gaussian, c.r_vvvv.rel_dev_printed, c.pass as u8 as f64]);
                    row
                })
                .collect();
            write_table(r.sink()?, &header, &rows)?;
        }
    }
    let (g, p) = report.max_vvvv_deviation();
    eprintln!("r_vvvv max relative deviation: gaussian {g:e}, printed {p:e}");
    if report.pass {
        Ok(0)
    } else {
        eprintln!("error: oracle disagrees with the closed forms beyond {tolerance:e}");
        Ok(Error::Accuracy(String::new()).exit_code() as u8)
    }
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Point(a) => run_point(a),
        Command::Sweep(a) => run_sweep_cmd(a),
        Command::Optimize(a) => run_optimize(a),
        Command::Dilution(a) => run_dilution(a),
        Command::OracleCheck(a) => run_oracle(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
