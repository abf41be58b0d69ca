//! Adaptive Gauss–Kronrod quadrature.
//!
//! Three entry points share one globally adaptive 21-point Gauss–Kronrod
//! driver:
//!
//! - [`integrate`] / [`integrate_with_breaks`] for finite intervals,
//! - [`integrate_semi_infinite`] for `[a, ∞)` via `x = a + s·(1 − t)/t`,
//! - [`fourier_cos`] for `∫₀^∞ g(x) cos(kx) dx`, which integrates a head
//!   interval adaptively and then sums half-period cycles of the tail,
//!   accelerating the alternating partial sums with Wynn's ε-algorithm.
//!
//! Every result carries an absolute error estimate. Failure to reach the
//! requested tolerance is reported as [`Error::Accuracy`], never silently.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

// Nodes and weights are kept at the published 30-digit precision.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_929_536_815,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and limits shared by every integral in the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Maximum number of subintervals per adaptive integral.
    pub max_intervals: usize,
    /// Frequency cutoff Ωc in units of δν: the adaptive head of a Fourier
    /// integral spans `[0, Ωc]`; beyond it the tail is summed cycle by cycle.
    pub omega_cutoff: f64,
    /// Delay cutoff in units of `1/(δν(1 − μ))` for the concurrence flux.
    pub tau_cutoff: f64,
    /// Maximum number of tail half-periods summed by [`fourier_cos`].
    pub max_tail_cycles: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            abs_tol: 0.0,
            rel_tol: 1e-8,
            max_intervals: 20_000,
            omega_cutoff: 1e3,
            tau_cutoff: 20.0,
            max_tail_cycles: 400,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.abs_tol >= 0.0
            && self.rel_tol > 0.0
            && self.rel_tol < 1.0
            && self.max_intervals >= 1
            && self.omega_cutoff > 0.0
            && self.tau_cutoff > 0.0
            && self.max_tail_cycles >= 3;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid quadrature config {self:?}")))
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Integral value with its absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub abs_err: f64,
}

impl Estimate {
    pub const ZERO: Estimate = Estimate { value: 0.0, abs_err: 0.0 };

    pub fn scale(self, factor: f64) -> Estimate {
        Estimate {
            value: self.value * factor,
            abs_err: self.abs_err * factor.abs(),
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, rhs: Estimate) -> Estimate {
        Estimate {
            value: self.value + rhs.value,
            abs_err: self.abs_err + rhs.abs_err,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        // Ties broken on position so the refinement order is deterministic.
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = f_center * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    if !value.is_finite() || !err.is_finite() {
        return Err(Error::Accuracy(format!(
            "non-finite integrand on [{a:e}, {b:e}]"
        )));
    }
    Ok((value, err))
}

/// Globally adaptive integration over the union of consecutive intervals
/// `[breaks[0], breaks[1]], [breaks[1], breaks[2]], …`.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    cfg: &QuadConfig,
) -> Result<Estimate> {
    if breaks.len() < 2 {
        return Err(Error::Validation("need at least two break points".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == b {
            continue;
        }
        let (value, err) = gk21(&f, a, b)?;
        total += value;
        total_err += err;
        heap.push(Segment { a, b, value, err });
    }
    let mut count = heap.len();
    while total_err > cfg.target(total) {
        if count >= cfg.max_intervals {
            return Err(Error::Accuracy(format!(
                "adaptive quadrature hit {} intervals with error {:e} on value {:e}",
                cfg.max_intervals, total_err, total
            )));
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Accuracy(format!(
                "interval [{:e}, {:e}] cannot be bisected further (error {:e})",
                worst.a, worst.b, total_err
            )));
        }
        let (v1, e1) = gk21(&f, worst.a, mid)?;
        let (v2, e2) = gk21(&f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Segment { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, err: e2 });
        count += 1;
    }
    // Re-sum to shed the drift accumulated by incremental updates.
    let (value, abs_err) = heap
        .into_iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.err));
    Ok(Estimate { value, abs_err })
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Estimate> {
    integrate_with_breaks(f, &[a, b], cfg)
}

/// `∫_a^∞ f(x) dx` through `x = a + scale·(1 − t)/t`, `t ∈ (0, 1]`.
///
/// `scale` should be the width over which `f` varies near `a`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let g = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let x = a + scale * (1.0 - t) / t;
        scale * f(x) / (t * t)
    };
    let breaks = [0.0, 1.0 / 64.0, 1.0 / 16.0, 0.25, 0.5, 0.75, 1.0];
    integrate_with_breaks(g, &breaks, cfg)
}

/// Break points `0, s, 2s, 4s, … , end`: resolves features of width `s`
/// near the origin without relying on the first Kronrod panel to see them.
pub fn geometric_breaks(scale: f64, end: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    let mut x = scale;
    while x < end {
        breaks.push(x);
        x *= 2.0;
    }
    breaks.push(end);
    breaks
}

/// `∫₀^∞ g(x) cos(kx) dx` for `g` decaying at least like `1/x` and
/// eventually monotone.
///
/// `scale` is the width of the main feature of `g`; the head interval runs
/// to the first zero of the cosine beyond `cfg.omega_cutoff · scale`.
pub fn fourier_cos<G: Fn(f64) -> f64>(
    g: G,
    k: f64,
    scale: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let k = k.abs();
    if k == 0.0 {
        return integrate_semi_infinite(g, 0.0, scale, cfg);
    }
    let cutoff = cfg.omega_cutoff * scale;
    let half_period = PI / k;
    let first = ((cutoff * k / PI) - 0.5).ceil().max(0.0);
    let head_end = (first + 0.5) * half_period;
    let integrand = |x: f64| g(x) * (k * x).cos();

    let mut head_breaks = geometric_breaks(scale, cutoff.min(head_end));
    if head_end > cutoff {
        // cos(kx) has no zero in (cutoff, head_end); g decays geometrically.
        let mut x = cutoff * 2.0;
        while x < head_end {
            head_breaks.push(x);
            x *= 2.0;
        }
        head_breaks.push(head_end);
    }
    let head = integrate_with_breaks(integrand, &head_breaks, cfg)?;

    let mut sums: Vec<f64> = Vec::new();
    let mut running = 0.0;
    let mut cycle_err = 0.0;
    let mut prev_ext: Option<f64> = None;
    for j in 0..cfg.max_tail_cycles {
        let lo = head_end + j as f64 * half_period;
        let hi = lo + half_period;
        let target = 0.25 * cfg.target(head.value + running).max(f64::MIN_POSITIVE);
        let inner = QuadConfig {
            abs_tol: 0.1 * target,
            ..*cfg
        };
        let c = integrate(integrand, lo, hi, &inner)?;
        running += c.value;
        cycle_err += c.abs_err;
        sums.push(running);

        // Alternating tail: the remainder is bounded by the latest term.
        if c.value.abs() <= target {
            return Ok(Estimate {
                value: head.value + running,
                abs_err: head.abs_err + cycle_err + c.value.abs(),
            });
        }
        if sums.len() >= 4 {
            let window = &sums[sums.len().saturating_sub(16)..];
            let ext = wynn_epsilon(window);
            if let Some(prev) = prev_ext {
                let diff = (ext - prev).abs();
                if diff <= target {
                    return Ok(Estimate {
                        value: head.value + ext,
                        abs_err: head.abs_err + cycle_err + diff,
                    });
                }
            }
            prev_ext = Some(ext);
        }
    }
    Err(Error::Accuracy(format!(
        "Fourier tail did not converge after {} half-periods (k = {k:e})",
        cfg.max_tail_cycles
    )))
}

/// Wynn's ε-algorithm on a sequence of partial sums; returns the deepest
/// even-column entry.
pub fn wynn_epsilon(sums: &[f64]) -> f64 {
    let Some(&last) = sums.last() else {
        return 0.0;
    };
    let mut best = last;
    let mut prev = vec![0.0; sums.len() + 1];
    let mut cur = sums.to_vec();
    let mut column = 0usize;
    while cur.len() >= 2 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            if d == 0.0 || !d.is_finite() {
                return if column.is_multiple_of(2) { cur[i + 1] } else { best };
            }
            next.push(prev[i + 1] + 1.0 / d);
        }
        column += 1;
        if column.is_multiple_of(2) {
            best = *next.last().expect("non-empty column");
        }
        prev = cur;
        cur = next;
    }
    best
}
