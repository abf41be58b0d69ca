//! Shared generators and reference implementations for integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;
use polsqueeze::opo::PairCorrelations;
use polsqueeze::two_photon::{Mat4, TwoPhotonOdm};
use polsqueeze::OpoParams;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    10f64.powf(rng.gen_range(lo.log10()..hi.log10()))
}

/// Source parameters from the box δν ∈ [1e6, 3e7], η ∈ [0.5, 1],
/// Φ_C ∈ [1e4, 1e8] (log) and μ ∈ [0, mu_max].
pub fn random_params<R: Rng>(rng: &mut R, mu_max: f64) -> OpoParams {
    let delta_nu = log_uniform(rng, 1e6, 3e7);
    let eta = rng.gen_range(0.5..=1.0);
    let phi_c = log_uniform(rng, 1e4, 1e8);
    let mu = rng.gen_range(0.0..mu_max);
    OpoParams::new(delta_nu, eta, mu, phi_c).unwrap()
}

/// Random normalized X-state with complex coherences.
pub fn random_x_state<R: Rng>(rng: &mut R) -> Mat4 {
    let mut p: [f64; 4] = std::array::from_fn(|_| -rng.gen::<f64>().max(1e-300).ln());
    let sum: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= sum);
    let mut m = Mat4::zeros();
    for i in 0..4 {
        m[(i, i)] = c(p[i]);
    }
    let outer = (p[0] * p[3]).sqrt() * rng.gen::<f64>();
    let inner = (p[1] * p[2]).sqrt() * rng.gen::<f64>();
    let (a, b) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
    m[(0, 3)] = Complex64::from_polar(outer, a);
    m[(3, 0)] = m[(0, 3)].conj();
    m[(1, 2)] = Complex64::from_polar(inner, b);
    m[(2, 1)] = m[(1, 2)].conj();
    m
}

/// Random correlation record with X structure. Corner amplitudes go up to
/// 1.5 times their positivity bound, so unphysical records are included.
pub fn random_x_correlations<R: Rng>(rng: &mut R) -> PairCorrelations {
    let mut d = [0.0; 4];
    for x in d.iter_mut() {
        *x = log_uniform(rng, 1e-3, 1e3);
    }
    let r_hhvv = (d[1] * d[2]).sqrt() * rng.gen_range(0.0..1.5);
    let r_hvvh = (d[0] * d[3]).sqrt() * rng.gen_range(0.0..1.5);
    PairCorrelations {
        tau: 0.0,
        r_hhhh: d[0],
        r_hvhv: d[1],
        r_vhvh: d[2],
        r_vvvv: d[3],
        r_hhvv,
        r_hvvh,
    }
}

/// ρ = GG†/tr(GG†) with G a complex Ginibre matrix.
pub fn ginibre_state<R: Rng>(rng: &mut R) -> TwoPhotonOdm {
    let mut gauss = || {
        // Box–Muller.
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let g = Mat4::from_fn(|_, _| Complex64::new(gauss(), gauss()));
    let mut rho = g * g.adjoint();
    let tr = rho.trace().re;
    rho.unscale_mut(tr);
    rho = (rho + rho.adjoint()).scale(0.5);
    let tr = rho.trace().re;
    rho.unscale_mut(tr);
    TwoPhotonOdm::from_matrix(rho, 0.0).unwrap()
}

fn kron(a: &Matrix2<Complex64>, b: &Matrix2<Complex64>) -> Mat4 {
    Mat4::from_fn(|r, s| a[(r / 2, s / 2)] * b[(r % 2, s % 2)])
}

fn spin_observable(n: &Vector3<f64>) -> Matrix2<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    Matrix2::new(c(n.z), c(n.x) - i * n.y, c(n.x) + i * n.y, c(-n.z))
}

/// E(a, b) = Tr[ρ (a·σ ⊗ b·σ)].
pub fn expectation(rho: &Mat4, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (rho * kron(&spin_observable(a), &spin_observable(b))).trace().re
}

fn direction(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

/// Brute-force CHSH maximum. Alice's settings a, a′ are searched on a
/// sphere grid and then refined by pattern search. For each pair the best
/// Bob settings are exact: with E(a,b) = aᵀTb,
/// max over b, b′ of S is |Tᵀ(a+a′)| + |Tᵀ(a−a′)|. T is formed from direct
/// expectation values, not from the library.
pub fn brute_force_chsh(rho: &Mat4) -> f64 {
    let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
    let t = Matrix3::from_fn(|i, j| expectation(rho, &axes[i], &axes[j]));
    let tt = t.transpose();
    let s_of = |x: &[f64; 4]| {
        let a = direction(x[0], x[1]);
        let a2 = direction(x[2], x[3]);
        (tt * (a + a2)).norm() + (tt * (a - a2)).norm()
    };
    // Fibonacci sphere grid.
    let n = 300;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let grid: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            (z.acos(), golden * k as f64)
        })
        .collect();
    let dirs: Vec<Vector3<f64>> = grid.iter().map(|&(t, p)| tt * direction(t, p)).collect();
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for i in 0..n {
        for j in i + 1..n {
            let s = (dirs[i] + dirs[j]).norm() + (dirs[i] - dirs[j]).norm();
            if s > best.0 {
                best = (s, i, j);
            }
        }
    }
    let mut x = [grid[best.1].0, grid[best.1].1, grid[best.2].0, grid[best.2].1];
    let mut f = s_of(&x);
    let mut step = 0.1;
    while step > 1e-7 {
        let mut improved = false;
        for k in 0..4 {
            for sign in [1.0, -1.0] {
                let mut y = x;
                y[k] += sign * step;
                let fy = s_of(&y);
                if fy > f {
                    x = y;
                    f = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    f
}

/// Smallest eigenvalue of the partial transpose of a real X-pattern
/// matrix, from a hand-built transpose and a dense eigen-solve.
pub fn x_partial_transpose_min_eigenvalue(corr: &PairCorrelations) -> f64 {
    let tr = corr.trace();
    let mut pt = nalgebra::Matrix4::<f64>::zeros();
    pt[(0, 0)] = corr.r_hhhh / tr;
    pt[(1, 1)] = corr.r_hvhv / tr;
    pt[(2, 2)] = corr.r_vhvh / tr;
    pt[(3, 3)] = corr.r_vvvv / tr;
    // Transposing the second qubit swaps the two coherences' positions.
    pt[(1, 2)] = corr.r_hhvv / tr;
    pt[(2, 1)] = corr.r_hhvv / tr;
    pt[(0, 3)] = corr.r_hvvh / tr;
    pt[(3, 0)] = corr.r_hvvh / tr;
    pt.symmetric_eigen().eigenvalues.min()
}
