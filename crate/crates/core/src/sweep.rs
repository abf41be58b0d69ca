//! Single-point evaluation, grid sweeps, optimization and the dilution
//! probe. Everything here is deterministic: grid order is row-major over
//! the axes as listed, and parallel evaluation never changes the output.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{bell_fom, concurrence_flux, flux_metrics, pair_rate, FluxMetrics};
use crate::opo::{first_order, pair_correlations, OpoParams, PairCorrelations, ParamsRecord, VvvvForm};
use crate::quad::QuadConfig;
use crate::two_photon::{
    build_odm, entanglement_metrics, nonclassicality_test, EntanglementMetrics,
    NonclassicalityReport, TwoPhotonOdm,
};

/// Model inputs that a sweep can vary or fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    PhiC,
    PhiS,
    Tau,
    Mu,
    Eta,
    DeltaNu,
}

impl ParamName {
    pub const ALL: [ParamName; 6] = [
        ParamName::PhiC,
        ParamName::PhiS,
        ParamName::Tau,
        ParamName::Mu,
        ParamName::Eta,
        ParamName::DeltaNu,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::PhiC => "phi_c",
            ParamName::PhiS => "phi_s",
            ParamName::Tau => "tau",
            ParamName::Mu => "mu",
            ParamName::Eta => "eta",
            ParamName::DeltaNu => "delta_nu",
        }
    }

    /// Model slot filled by this name; μ and Φ_S share one.
    pub fn slot(self) -> usize {
        match self {
            ParamName::PhiC => 0,
            ParamName::PhiS | ParamName::Mu => 1,
            ParamName::Tau => 2,
            ParamName::Eta => 3,
            ParamName::DeltaNu => 4,
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown parameter `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "lin" => Ok(Scale::Linear),
            "log" => Ok(Scale::Log),
            _ => Err(Error::Validation(format!("unknown scale `{s}`"))),
        }
    }
}

impl Scale {
    fn to_unit(self, x: f64) -> f64 {
        match self {
            Scale::Linear => x,
            Scale::Log => x.log10(),
        }
    }
    fn value_at(self, y: f64) -> f64 {
        match self {
            Scale::Linear => y,
            Scale::Log => 10f64.powf(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: ParamName,
    pub scale: Scale,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(name: ParamName, scale: Scale, min: f64, max: f64, count: usize) -> Self {
        Axis { name, scale, min, max, count }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::Validation(format!("axis {} needs count >= 2", self.name)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::Validation(format!(
                "axis {} needs finite min < max, got [{}, {}]",
                self.name, self.min, self.max
            )));
        }
        if self.scale == Scale::Log && self.min <= 0.0 {
            return Err(Error::Validation(format!("log axis {} needs min > 0", self.name)));
        }
        Ok(())
    }

    /// Grid values; the end points are exactly `min` and `max`.
    pub fn values(&self) -> Vec<f64> {
        let (lo, hi) = (self.scale.to_unit(self.min), self.scale.to_unit(self.max));
        let last = self.count - 1;
        (0..self.count)
            .map(|i| match i {
                0 => self.min,
                i if i == last => self.max,
                i => self.scale.value_at(lo + (hi - lo) * i as f64 / last as f64),
            })
            .collect()
    }
}

/// Parses `name:scale:min:max:count`, e.g. `phi_c:log:1e5:1e8:40`.
impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 5 {
            return Err(Error::Validation(format!(
                "axis `{s}` must look like name:scale:min:max:count"
            )));
        }
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad number `{t}` in axis `{s}`")))
        };
        Ok(Axis {
            name: parts[0].parse()?,
            scale: parts[1].parse()?,
            min: num(parts[2])?,
            max: num(parts[3])?,
            count: parts[4]
                .parse()
                .map_err(|_| Error::Validation(format!("bad count in axis `{s}`")))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    OdmEntries,
    Concurrence,
    SMax,
    Beta,
    W2,
    RPs,
    Nonclassicality,
}

impl Output {
    pub const ALL: [Output; 7] = [
        Output::OdmEntries,
        Output::Concurrence,
        Output::SMax,
        Output::Beta,
        Output::W2,
        Output::RPs,
        Output::Nonclassicality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Output::OdmEntries => "odm_entries",
            Output::Concurrence => "concurrence",
            Output::SMax => "s_max",
            Output::Beta => "beta",
            Output::W2 => "w2",
            Output::RPs => "r_ps",
            Output::Nonclassicality => "nonclassicality",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Output::OdmEntries => &["rho_hhhh", "rho_hvhv", "rho_vhvh", "rho_vvvv", "rho_hhvv", "rho_hvvh"],
            Output::Concurrence => &["concurrence"],
            Output::SMax => &["s_max"],
            Output::Beta => &["beta"],
            Output::W2 => &["w2"],
            Output::RPs => &["r_ps"],
            Output::Nonclassicality => &["ineq_hhvv_ratio", "ineq_hvvh_ratio", "nonclassical"],
        }
    }

    fn needs_flux(self) -> bool {
        matches!(self, Output::W2 | Output::RPs)
    }
}

impl FromStr for Output {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Output::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown output `{s}`")))
    }
}

/// Evaluation settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Coincidence window Δτ, seconds.
    pub delta_tau: f64,
    /// Delay at which ΔS is evaluated for the Bell figure of merit.
    pub beta_tau: f64,
    pub quad: QuadConfig,
    pub vvvv_form: VvvvForm,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            delta_tau: 1e-9,
            beta_tau: 0.0,
            quad: QuadConfig::default(),
            vvvv_form: VvvvForm::Gaussian,
        }
    }
}

/// Everything known about one operating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointReport {
    pub params: ParamsRecord,
    pub phi_s: f64,
    pub pump_fraction: f64,
    pub tau: f64,
    pub delta_tau: f64,
    pub vvvv_form: VvvvForm,
    pub first_order: [[f64; 2]; 2],
    pub correlations: PairCorrelations,
    pub odm: TwoPhotonOdm,
    pub nonclassicality: NonclassicalityReport,
    pub entanglement: EntanglementMetrics,
    pub pair_rate: f64,
    pub beta_fom: f64,
    pub flux: Option<FluxMetrics>,
}

impl PointReport {
    /// Row values for the requested outputs, in column order.
    pub fn output_values(&self, outputs: &[Output]) -> Vec<f64> {
        let mut v = Vec::new();
        for o in outputs {
            match o {
                Output::OdmEntries => {
                    let m = self.odm.matrix();
                    for (i, j) in [(0, 0), (1, 1), (2, 2), (3, 3), (0, 3), (1, 2)] {
                        v.push(m[(i, j)].re);
                    }
                }
                Output::Concurrence => v.push(self.entanglement.concurrence),
                Output::SMax => v.push(self.entanglement.s_max),
                Output::Beta => v.push(self.beta_fom),
                Output::W2 => v.push(self.flux.map_or(f64::NAN, |f| f.w2)),
                Output::RPs => v.push(self.flux.map_or(f64::NAN, |f| f.r_ps)),
                Output::Nonclassicality => {
                    let n = &self.nonclassicality;
                    v.push(n.hhvv.ratio.unwrap_or(f64::NAN));
                    v.push(n.hvvh.ratio.unwrap_or(f64::NAN));
                    v.push(if n.nonclassical { 1.0 } else { 0.0 });
                }
            }
        }
        v
    }
}

/// Full pipeline at one point, including the concurrence-flux integral.
pub fn eval_point(params: &OpoParams, tau: f64, opts: &EvalOptions) -> Result<PointReport> {
    eval_point_with(params, tau, opts, true)
}

/// As [`eval_point`]; `with_flux = false` skips the W⁽²⁾ quadrature.
pub fn eval_point_with(
    params: &OpoParams,
    tau: f64,
    opts: &EvalOptions,
    with_flux: bool,
) -> Result<PointReport> {
    if !tau.is_finite() {
        return Err(Error::Domain(format!("delay must be finite, got {tau}")));
    }
    let form = opts.vvvv_form;
    let correlations = pair_correlations(tau, params, form);
    let odm = build_odm(&correlations).map_err(|e| e.in_stage("odm"))?;
    let nonclassicality = nonclassicality_test(&correlations);
    let entanglement = entanglement_metrics(&odm).map_err(|e| e.in_stage("entanglement"))?;
    let rate = pair_rate(params, opts.delta_tau, form).map_err(|e| e.in_stage("pair rate"))?;
    let beta_fom = bell_fom(params, opts.delta_tau, opts.beta_tau, form)
        .map_err(|e| e.in_stage("bell figure of merit"))?;
    let flux = if with_flux {
        Some(
            flux_metrics(params, opts.delta_tau, opts.beta_tau, &opts.quad, form)
                .map_err(|e| e.in_stage("concurrence flux"))?,
        )
    } else {
        None
    };
    Ok(PointReport {
        params: params.to_record(),
        phi_s: params.phi_s(),
        pump_fraction: params.pump_fraction(),
        tau,
        delta_tau: opts.delta_tau,
        vvvv_form: form,
        first_order: first_order(params),
        correlations,
        odm,
        nonclassicality,
        entanglement,
        pair_rate: rate,
        beta_fom,
        flux,
    })
}

/// Builds parameters from a complete name → value assignment.
pub fn params_from_values(values: &BTreeMap<ParamName, f64>) -> Result<(OpoParams, f64)> {
    let get = |n: ParamName| {
        values
            .get(&n)
            .copied()
            .ok_or_else(|| Error::Validation(format!("missing parameter {n}")))
    };
    let (dn, eta, phi_c, tau) = (
        get(ParamName::DeltaNu)?,
        get(ParamName::Eta)?,
        get(ParamName::PhiC)?,
        get(ParamName::Tau)?,
    );
    let params = match (values.get(&ParamName::Mu), values.get(&ParamName::PhiS)) {
        (Some(&mu), None) => OpoParams::new(dn, eta, mu, phi_c)?,
        (None, Some(&phi_s)) => OpoParams::from_flux(dn, eta, phi_s, phi_c)?,
        _ => return Err(Error::Validation("exactly one of mu and phi_s must be set".into())),
    };
    Ok((params, tau))
}

fn check_assignment(free: &[ParamName], fixed: &BTreeMap<ParamName, f64>) -> Result<()> {
    let mut seen = [0usize; 5];
    for n in free.iter().chain(fixed.keys()) {
        seen[n.slot()] += 1;
    }
    for (slot, count) in seen.iter().enumerate() {
        if *count != 1 {
            let names = match slot {
                0 => "phi_c",
                1 => "mu/phi_s",
                2 => "tau",
                3 => "eta",
                _ => "delta_nu",
            };
            return Err(Error::Validation(format!(
                "parameter {names} must appear exactly once across axes and fixed values (found {count})"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axes: Vec<Axis>,
    pub fixed: BTreeMap<ParamName, f64>,
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub options: EvalOptions,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 3 {
            return Err(Error::Validation(format!(
                "a sweep takes 1 to 3 axes, got {}",
                self.axes.len()
            )));
        }
        for a in &self.axes {
            a.validate()?;
        }
        let free: Vec<ParamName> = self.axes.iter().map(|a| a.name).collect();
        check_assignment(&free, &self.fixed)?;
        if self.outputs.is_empty() {
            return Err(Error::Validation("no outputs requested".into()));
        }
        for (i, o) in self.outputs.iter().enumerate() {
            if self.outputs[..i].contains(o) {
                return Err(Error::Validation(format!("output {} requested twice", o.as_str())));
            }
        }
        self.options.quad.validate()?;
        if !(self.options.delta_tau >= 0.0) {
            return Err(Error::Validation("delta_tau must be >= 0".into()));
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Column names: axis names, then the requested outputs.
    pub fn columns(&self) -> Vec<String> {
        self.axes
            .iter()
            .map(|a| a.name.as_str().to_string())
            .chain(self.outputs.iter().flat_map(|o| o.columns().iter().map(|c| c.to_string())))
            .collect()
    }

    /// Grid coordinates in row-major order over the axes as listed.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![Vec::new()];
        for axis in &values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn point_at(&self, coords: &[f64]) -> Result<(OpoParams, f64)> {
        let mut values = self.fixed.clone();
        for (a, &v) in self.axes.iter().zip(coords) {
            values.insert(a.name, v);
        }
        params_from_values(&values)
    }

    fn evaluate(&self, coords: &[f64]) -> Row {
        let with_flux = self.outputs.iter().any(|o| o.needs_flux());
        let result = self
            .point_at(coords)
            .and_then(|(p, tau)| eval_point_with(&p, tau, &self.options, with_flux));
        match result {
            Ok(report) => Row {
                coords: coords.to_vec(),
                values: report.output_values(&self.outputs),
                error: None,
            },
            Err(e) => Row {
                coords: coords.to_vec(),
                values: vec![f64::NAN; self.columns().len() - self.axes.len()],
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coords: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub engine: String,
    pub version: String,
    /// SHA-256 of the model conventions in force.
    pub conventions_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_unix: Option<u64>,
}

const CONVENTIONS: &str = "delta_nu:rate_s^-1,no_2pi;omega:angular,u=omega/delta_nu;\
pump_phase:0;basis:HH,HV,VH,VV;r_vhvh=r_hvhv;beta_tau_default:0;\
w2:2x_half_line,cutoff_tau=k/(delta_nu(1-mu))";

impl Provenance {
    pub fn new(form: VvvvForm, timestamp: bool) -> Self {
        let digest = Sha256::digest(format!("{CONVENTIONS};r_vvvv:{}", form.label()).as_bytes());
        let conventions_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        let timestamp_unix = timestamp.then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Provenance {
            engine: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            conventions_sha256,
            timestamp_unix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub provenance: Provenance,
}

impl SweepResult {
    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Value of a named output column for every row.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| {
                    if idx < r.coords.len() {
                        r.coords[idx]
                    } else {
                        r.values[idx - r.coords.len()]
                    }
                })
                .collect(),
        )
    }

    /// CSV with one header row, LF line endings and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let line: Vec<String> = row.coords.iter().chain(&row.values).map(|&x| fmt_f64(x)).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
}

/// Evaluates every grid point on `jobs` workers. Per-point failures are
/// recorded in the row; only an invalid spec aborts.
pub fn run_sweep(spec: &SweepSpec, jobs: usize, timestamp: bool) -> Result<SweepResult> {
    spec.validate()?;
    let grid = spec.grid();
    let rows = thread_pool(jobs)?.install(|| grid.par_iter().map(|c| spec.evaluate(c)).collect());
    Ok(SweepResult {
        spec: spec.clone(),
        columns: spec.columns(),
        rows,
        provenance: Provenance::new(spec.options.vvvv_form, timestamp),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Concurrence,
    W2,
    Beta,
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concurrence" => Ok(Objective::Concurrence),
            "w2" => Ok(Objective::W2),
            "beta" => Ok(Objective::Beta),
            _ => Err(Error::Validation(format!("unknown objective `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub name: ParamName,
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_scale")]
    pub scale: Scale,
}

fn default_scale() -> Scale {
    Scale::Log
}

/// Parses `name:min:max` (log scale) or `name:scale:min:max`.
impl FromStr for Bound {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Validation(format!("bad number `{t}` in bound `{s}`")))
        };
        match parts.as_slice() {
            [n, lo, hi] => Ok(Bound { name: n.parse()?, min: num(lo)?, max: num(hi)?, scale: Scale::Log }),
            [n, sc, lo, hi] => Ok(Bound { name: n.parse()?, min: num(lo)?, max: num(hi)?, scale: sc.parse()? }),
            _ => Err(Error::Validation(format!("bound `{s}` must look like name[:scale]:min:max"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSpec {
    pub objective: Objective,
    pub bounds: Vec<Bound>,
    pub fixed: BTreeMap<ParamName, f64>,
    #[serde(default)]
    pub options: EvalOptions,
    /// Points per free dimension in the coarse scan.
    #[serde(default = "default_grid_count")]
    pub grid_count: usize,
    /// Only points whose concurrence at the fixed delay reaches this value
    /// are feasible.
    #[serde(default)]
    pub min_concurrence: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_grid_count() -> usize {
    12
}
fn default_max_iterations() -> usize {
    300
}

impl OptimizeSpec {
    pub fn new(objective: Objective, bounds: Vec<Bound>, fixed: BTreeMap<ParamName, f64>) -> Self {
        OptimizeSpec {
            objective,
            bounds,
            fixed,
            options: EvalOptions::default(),
            grid_count: default_grid_count(),
            min_concurrence: None,
            max_iterations: default_max_iterations(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() || self.bounds.len() > 3 {
            return Err(Error::Validation(format!(
                "optimization takes 1 to 3 bounded parameters, got {}",
                self.bounds.len()
            )));
        }
        for b in &self.bounds {
            if !(b.min.is_finite() && b.max.is_finite() && b.min <= b.max) {
                return Err(Error::Validation(format!("bound on {} needs min <= max", b.name)));
            }
            if b.scale == Scale::Log && b.min <= 0.0 {
                return Err(Error::Validation(format!("log bound on {} needs min > 0", b.name)));
            }
        }
        let free: Vec<ParamName> = self.bounds.iter().map(|b| b.name).collect();
        check_assignment(&free, &self.fixed)?;
        if self.grid_count < 2 {
            return Err(Error::Validation("grid_count must be >= 2".into()));
        }
        self.options.quad.validate()
    }

    fn assign(&self, unit: &[f64]) -> BTreeMap<ParamName, f64> {
        let mut values = self.fixed.clone();
        for (b, &y) in self.bounds.iter().zip(unit) {
            let x = if b.min == b.max { b.min } else { b.scale.value_at(y).clamp(b.min, b.max) };
            values.insert(b.name, x);
        }
        values
    }

    /// Objective value; `Ok(None)` marks a point excluded by the constraint.
    fn objective_at(&self, unit: &[f64]) -> Result<Option<f64>> {
        let (params, tau) = params_from_values(&self.assign(unit))?;
        let opts = &self.options;
        let conc = || -> Result<f64> {
            let corr = pair_correlations(tau, &params, opts.vvvv_form);
            if corr.trace() == 0.0 {
                return Ok(0.0);
            }
            Ok(entanglement_metrics(&build_odm(&corr)?)?.concurrence)
        };
        if let Some(min_c) = self.min_concurrence {
            if conc()? < min_c {
                return Ok(None);
            }
        }
        let v = match self.objective {
            Objective::Concurrence => conc()?,
            Objective::W2 => concurrence_flux(&params, &opts.quad, opts.vvvv_form)?.value,
            Objective::Beta => bell_fom(&params, opts.delta_tau, opts.beta_tau, opts.vvvv_form)?,
        };
        Ok(Some(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub point: BTreeMap<ParamName, f64>,
    /// Absent for infeasible or failed points.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub objective: Objective,
    pub point: BTreeMap<ParamName, f64>,
    pub value: f64,
    pub grid_best: f64,
    pub simplex_iterations: usize,
    pub scan: Vec<TracePoint>,
    pub report: PointReport,
}

/// Coarse grid scan (log-spaced on log bounds) followed by a Nelder–Mead
/// simplex seeded at the best grid cell, maximizing the objective.
pub fn find_optimum(spec: &OptimizeSpec, jobs: usize) -> Result<Optimum> {
    spec.validate()?;
    let dims: Vec<(f64, f64)> = spec
        .bounds
        .iter()
        .map(|b| (b.scale.to_unit(b.min), b.scale.to_unit(b.max)))
        .collect();
    let free: Vec<usize> = (0..dims.len()).filter(|&i| dims[i].0 < dims[i].1).collect();

    let mut grid = vec![Vec::new()];
    for &(lo, hi) in &dims {
        let n = if lo < hi { spec.grid_count } else { 1 };
        grid = grid
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                (0..n).map(move |i| {
                    let mut p = prefix.clone();
                    p.push(if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 });
                    p
                })
            })
            .collect();
    }
    let scanned: Vec<Result<Option<f64>>> =
        thread_pool(jobs)?.install(|| grid.par_iter().map(|u| spec.objective_at(u)).collect());

    let failures: Vec<String> = scanned
        .iter()
        .filter_map(|r| r.as_ref().err().map(|e| e.to_string()))
        .collect();
    if 2 * failures.len() > scanned.len() {
        return Err(Error::Accuracy(format!(
            "objective failed at {} of {} scan points; first: {}",
            failures.len(),
            scanned.len(),
            failures[0]
        )));
    }
    let scan: Vec<TracePoint> = grid
        .iter()
        .zip(&scanned)
        .map(|(u, r)| TracePoint {
            point: spec.assign(u),
            value: r.as_ref().ok().copied().flatten(),
        })
        .collect();
    let (best_idx, grid_best) = scan
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.value.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::Validation("no feasible point in the scan".into()))?;

    let mut best_unit = grid[best_idx].clone();
    let mut best_value = grid_best;
    let mut iterations = 0;
    if !free.is_empty() {
        let cost = |y: &[f64]| -> f64 {
            let mut unit = best_unit.clone();
            for (k, &i) in free.iter().enumerate() {
                unit[i] = y[k].clamp(dims[i].0, dims[i].1);
            }
            match spec.objective_at(&unit) {
                Ok(Some(v)) => -v,
                _ => f64::INFINITY,
            }
        };
        let start: Vec<f64> = free.iter().map(|&i| best_unit[i]).collect();
        let steps: Vec<f64> = free
            .iter()
            .map(|&i| {
                let cell = (dims[i].1 - dims[i].0) / (spec.grid_count - 1) as f64;
                // Step toward the interior so the first simplex stays inside.
                if best_unit[i] + cell > dims[i].1 {
                    -cell
                } else {
                    cell
                }
            })
            .collect();
        let (y, f, it) = nelder_mead(cost, &start, &steps, spec.max_iterations);
        iterations = it;
        if -f > best_value {
            best_value = -f;
            for (k, &i) in free.iter().enumerate() {
                best_unit[i] = y[k].clamp(dims[i].0, dims[i].1);
            }
        }
    }
    let point = spec.assign(&best_unit);
    let (params, tau) = params_from_values(&point)?;
    let report = eval_point_with(&params, tau, &spec.options, spec.objective == Objective::W2)?;
    Ok(Optimum {
        objective: spec.objective,
        point,
        value: best_value,
        grid_best,
        simplex_iterations: iterations,
        scan,
        report,
    })
}

/// Minimizes `f` from `start` with initial edge lengths `steps`.
/// Returns (argmin, min, iterations).
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    start: &[f64],
    steps: &[f64],
    max_iterations: usize,
) -> (Vec<f64>, f64, usize) {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut it = 0;
    while it < max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let size = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (values[0].is_finite() && spread <= 1e-12 * values[0].abs().max(1e-300)) || size < 1e-9 {
            break;
        }
        it += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = along(-0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> =
                        simplex[0].iter().zip(&simplex[i]).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best].clone(), values[best], it)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DilutionReport {
    pub phi_s: f64,
    pub delta_tau: f64,
    pub phi_c: Vec<f64>,
    pub beta: Vec<f64>,
    /// Index ranges `[start, end]` over which β strictly increases.
    pub rising_ranges: Vec<[usize; 2]>,
    pub has_rising_range: bool,
    pub peak_index: usize,
    /// β drops somewhere after its maximum within the sampled range.
    pub falls_after_peak: bool,
}

/// β as a function of Φ_C at fixed Φ_S (log-spaced Φ_C samples).
pub fn dilution_probe(
    base: &OpoParams,
    phi_c_min: f64,
    phi_c_max: f64,
    count: usize,
    opts: &EvalOptions,
) -> Result<DilutionReport> {
    if count < 8 {
        return Err(Error::Validation(format!("dilution probe needs >= 8 samples, got {count}")));
    }
    let axis = Axis::new(ParamName::PhiC, Scale::Log, phi_c_min, phi_c_max, count);
    axis.validate()?;
    let phi_c = axis.values();
    let beta = phi_c
        .iter()
        .map(|&pc| {
            let p = base.with_phi_c(pc)?;
            bell_fom(&p, opts.delta_tau, opts.beta_tau, opts.vvvv_form)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rising_ranges = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..beta.len() - 1 {
        if beta[i + 1] > beta[i] {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            rising_ranges.push([s, i]);
        }
    }
    if let Some(s) = start {
        rising_ranges.push([s, beta.len() - 1]);
    }
    let peak_index = (0..beta.len())
        .fold(0, |best, i| if beta[i] > beta[best] { i } else { best });
    let falls_after_peak = beta[peak_index..].windows(2).any(|w| w[1] < w[0]);
    Ok(DilutionReport {
        phi_s: base.phi_s(),
        delta_tau: opts.delta_tau,
        phi_c,
        beta,
        has_rising_range: !rising_ranges.is_empty(),
        rising_ranges,
        peak_index,
        falls_after_peak,
    })
}
