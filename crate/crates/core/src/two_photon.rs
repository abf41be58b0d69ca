//! The two-photon observable density matrix (ODM) and its discrete-variable
//! properties.
//!
//! Basis order is fixed as (HH, HV, VH, VV). A correlation record maps onto
//! the matrix
//!
//! ```text
//! ⎡ R_HHHH    0       0     R_HHVV ⎤
//! ⎢   0     R_HVHV  R_HVVH    0    ⎥
//! ⎢   0     R_VHHV  R_VHVH    0    ⎥
//! ⎣ R_VVHH    0       0     R_VVVV ⎦
//! ```
//!
//! divided by its trace, so that detection probabilities follow from the
//! Born rule `P(r) = r†ρr` for a pair polarization `r = p ⊗ q`.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opo::PairCorrelations;

pub type Mat4 = Matrix4<Complex64>;

pub const BASIS: [&str; 4] = ["HH", "HV", "VH", "VV"];

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues in `[−PSD_CLIP_TOL, 0)` are clipped to zero; anything lower
/// is rejected.
pub const PSD_CLIP_TOL: f64 = 1e-10;
/// Required agreement between the two concurrence routes on X-states.
pub const CONCURRENCE_AGREEMENT_TOL: f64 = 1e-10;
/// Relative slack on the classical inequalities, absorbing rounding at the
/// Cauchy–Schwarz boundary.
pub const INEQUALITY_REL_TOL: f64 = 1e-12;
/// A partial transpose counts as non-positive below this eigenvalue.
pub const PPT_TOL: f64 = 1e-14;

/// Positions that vanish in an X-structured matrix.
const OFF_X: [(usize, usize); 8] = [
    (0, 1),
    (0, 2),
    (1, 0),
    (1, 3),
    (2, 0),
    (2, 3),
    (3, 1),
    (3, 2),
];

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Trace-normalized two-photon polarization state.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonOdm {
    matrix: Mat4,
    tau: f64,
}

impl TwoPhotonOdm {
    /// Validates a candidate density matrix: Hermitian and unit trace to
    /// 1e−12, eigenvalues no lower than −1e−10. Small negative eigenvalues
    /// are clipped and the matrix renormalized.
    pub fn from_matrix(matrix: Mat4, tau: f64) -> Result<Self> {
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm_dev = (matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_dev > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm_dev:e})")));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {trace}, expected 1")));
        }
        let matrix = (matrix + matrix.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(matrix);
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_CLIP_TOL {
            return Err(Error::InvalidState(format!(
                "not positive semi-definite (min eigenvalue {min:e})"
            )));
        }
        // Round-off-level negatives are left alone so re-validation is exact.
        let matrix = if min < -16.0 * f64::EPSILON {
            let was_x = is_x_structured(&matrix);
            let clipped = eig.eigenvalues.map(|l| c(l.max(0.0)));
            let v = &eig.eigenvectors;
            let mut rebuilt = v * Mat4::from_diagonal(&clipped) * v.adjoint();
            let tr = rebuilt.trace().re;
            rebuilt.unscale_mut(tr);
            if was_x {
                for (i, j) in OFF_X {
                    rebuilt[(i, j)] = c(0.0);
                }
            }
            rebuilt
        } else {
            matrix
        };
        Ok(TwoPhotonOdm { matrix, tau })
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.matrix
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    /// Diagonal populations in basis order.
    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.matrix[(i, i)].re)
    }

    pub fn is_x_structured(&self) -> bool {
        is_x_structured(&self.matrix)
    }

    /// Born-rule probability of detecting the pair polarization `p ⊗ q`
    /// (unit vectors in the (H, V) basis).
    pub fn pair_probability(&self, p: [Complex64; 2], q: [Complex64; 2]) -> f64 {
        let r = nalgebra::Vector4::new(p[0] * q[0], p[0] * q[1], p[1] * q[0], p[1] * q[1]);
        (r.adjoint() * self.matrix * r)[(0, 0)].re
    }

    /// The maximally entangled state (|HH⟩ + |VV⟩)/√2.
    pub fn bell_phi_plus() -> Self {
        let mut m = Mat4::zeros();
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(i, j)] = c(0.5);
        }
        TwoPhotonOdm { matrix: m, tau: 0.0 }
    }

    pub fn maximally_mixed() -> Self {
        TwoPhotonOdm {
            matrix: Mat4::identity().scale(0.25),
            tau: 0.0,
        }
    }

    /// A computational-basis projector, index in basis order.
    pub fn basis_state(index: usize) -> Self {
        let mut m = Mat4::zeros();
        m[(index, index)] = c(1.0);
        TwoPhotonOdm { matrix: m, tau: 0.0 }
    }

    pub fn to_record(&self) -> OdmRecord {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = self.matrix[(i, j)].re;
                im[i][j] = self.matrix[(i, j)].im;
            }
        }
        OdmRecord {
            basis: BASIS.iter().map(|s| s.to_string()).collect(),
            re,
            im,
            tau_s: self.tau,
        }
    }
}

pub fn is_x_structured(m: &Mat4) -> bool {
    OFF_X.iter().all(|&(i, j)| m[(i, j)] == c(0.0))
}

/// JSON form of an ODM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmRecord {
    pub basis: Vec<String>,
    pub re: [[f64; 4]; 4],
    pub im: [[f64; 4]; 4],
    pub tau_s: f64,
}

impl TryFrom<OdmRecord> for TwoPhotonOdm {
    type Error = Error;
    fn try_from(r: OdmRecord) -> Result<Self> {
        if r.basis.len() != 4 || r.basis.iter().zip(BASIS).any(|(a, b)| a != b) {
            return Err(Error::Validation(format!(
                "basis must be {BASIS:?}, got {:?}",
                r.basis
            )));
        }
        let m = Mat4::from_fn(|i, j| Complex64::new(r.re[i][j], r.im[i][j]));
        TwoPhotonOdm::from_matrix(m, r.tau_s)
    }
}

impl Serialize for TwoPhotonOdm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TwoPhotonOdm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = OdmRecord::deserialize(d)?;
        TwoPhotonOdm::try_from(r).map_err(serde::de::Error::custom)
    }
}

/// Unnormalized correlation matrix in the X pattern.
pub fn correlation_matrix(corr: &PairCorrelations) -> Mat4 {
    let mut m = Mat4::zeros();
    m[(0, 0)] = c(corr.r_hhhh);
    m[(1, 1)] = c(corr.r_hvhv);
    m[(2, 2)] = c(corr.r_vhvh);
    m[(3, 3)] = c(corr.r_vvvv);
    m[(0, 3)] = c(corr.r_hhvv);
    m[(3, 0)] = c(corr.r_vvhh());
    m[(1, 2)] = c(corr.r_hvvh);
    m[(2, 1)] = c(corr.r_vhhv());
    m
}

/// Normalizes a correlation record into a validated ODM.
pub fn build_odm(corr: &PairCorrelations) -> Result<TwoPhotonOdm> {
    let trace = corr.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::Degenerate(format!(
            "correlation trace must be positive, got {trace:e}"
        )));
    }
    let m = correlation_matrix(corr).unscale(trace);
    TwoPhotonOdm::from_matrix(m, corr.tau)
}

/// Eigenvalues of a Hermitian 4×4 matrix in ascending order.
pub fn hermitian_eigenvalues(m: &Mat4) -> [f64; 4] {
    let h = (m + m.adjoint()).scale(0.5);
    let ev = SymmetricEigen::new(h).eigenvalues;
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(f64::total_cmp);
    out
}

/// Transposes the second tensor factor: `ρ^{T_B}_{(ij),(kl)} = ρ_{(il),(kj)}`.
pub fn partial_transpose_matrix(m: &Mat4) -> Mat4 {
    Mat4::from_fn(|row, col| {
        let (i, j) = (row / 2, row % 2);
        let (k, l) = (col / 2, col % 2);
        m[(2 * i + l, 2 * k + j)]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialTranspose {
    #[serde(skip)]
    pub matrix: Mat4,
    /// Ascending.
    pub eigenvalues: [f64; 4],
}

impl PartialTranspose {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn is_positive(&self) -> bool {
        self.min_eigenvalue() >= -PPT_TOL
    }
}

pub fn partial_transpose(odm: &TwoPhotonOdm) -> PartialTranspose {
    let matrix = partial_transpose_matrix(&odm.matrix);
    let eigenvalues = hermitian_eigenvalues(&matrix);
    PartialTranspose { matrix, eigenvalues }
}

/// One classical Cauchy–Schwarz bound `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub violated: bool,
    /// `lhs/rhs`; absent when `rhs = 0`.
    pub ratio: Option<f64>,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        InequalityCheck {
            lhs,
            rhs,
            violated: lhs > rhs * (1.0 + INEQUALITY_REL_TOL),
            ratio: (rhs > 0.0).then(|| lhs / rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonclassicalityReport {
    /// |R_HHVV|² ≤ R_HVHV · R_VHVH
    pub hhvv: InequalityCheck,
    /// |R_HVVH|² ≤ R_HHHH · R_VVVV
    pub hvvh: InequalityCheck,
    pub nonclassical: bool,
    pub ppt_min_eigenvalue: f64,
    /// Partial transpose has a negative eigenvalue.
    pub npt: bool,
    /// The inequality verdict and the partial-transpose verdict coincide.
    pub verdicts_agree: bool,
}

/// Classical-field inequalities and the partial-transpose verdict of the
/// assembled matrix.
///
/// The matrix is only normalized, not validated, so records outside the
/// physical cone are still classified.
pub fn nonclassicality_test(corr: &PairCorrelations) -> NonclassicalityReport {
    let hhvv = InequalityCheck::new(corr.r_hhvv * corr.r_hhvv, corr.r_hvhv * corr.r_vhvh);
    let hvvh = InequalityCheck::new(corr.r_hvvh * corr.r_hvvh, corr.r_hhhh * corr.r_vvvv);
    let trace = corr.trace();
    let mut m = correlation_matrix(corr);
    if trace > 0.0 {
        m.unscale_mut(trace);
    }
    let ppt_min_eigenvalue = hermitian_eigenvalues(&partial_transpose_matrix(&m))[0];
    let nonclassical = hhvv.violated || hvvh.violated;
    let npt = ppt_min_eigenvalue < -PPT_TOL;
    NonclassicalityReport {
        hhvv,
        hvvh,
        nonclassical,
        ppt_min_eigenvalue,
        npt,
        verdicts_agree: nonclassical == npt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcurrenceMethod {
    /// Spectrum of ρ(σ_y⊗σ_y)ρ*(σ_y⊗σ_y).
    SpinFlipSpectrum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concurrence {
    pub value: f64,
    pub method: ConcurrenceMethod,
    /// λ₁ ≥ λ₂ ≥ λ₃ ≥ λ₄ ≥ 0.
    pub lambdas: [f64; 4],
    /// Closed form for X-states, present when the matrix is X-structured.
    pub x_state: Option<f64>,
}

fn spin_flip() -> Mat4 {
    let mut s = Mat4::zeros();
    s[(0, 3)] = c(-1.0);
    s[(1, 2)] = c(1.0);
    s[(2, 1)] = c(1.0);
    s[(3, 0)] = c(-1.0);
    s
}

/// `C = 2·max(0, |ρ₁₄| − √(ρ₂₂ρ₃₃), |ρ₂₃| − √(ρ₁₁ρ₄₄))`, valid for X-states.
pub fn x_state_concurrence(m: &Mat4) -> f64 {
    let d = |i: usize| m[(i, i)].re.max(0.0);
    let outer = m[(0, 3)].norm() - (d(1) * d(2)).sqrt();
    let inner = m[(1, 2)].norm() - (d(0) * d(3)).sqrt();
    2.0 * outer.max(inner).max(0.0)
}

/// Concurrence `max(0, √λ₁ − √λ₂ − √λ₃ − √λ₄)`.
///
/// The `√λᵢ` are obtained as singular values of `√ρ Σ √ρ*` with
/// `Σ = σ_y⊗σ_y`: that matrix times its adjoint is similar to `ρΣρ*Σ`, and
/// the singular values avoid taking square roots of rounding noise.
pub fn concurrence(odm: &TwoPhotonOdm) -> Result<Concurrence> {
    let eig = SymmetricEigen::new(odm.matrix);
    let roots = eig.eigenvalues.map(|l| c(l.max(0.0).sqrt()));
    let v = &eig.eigenvectors;
    let sqrt_rho = v * Mat4::from_diagonal(&roots) * v.adjoint();
    let k = sqrt_rho * spin_flip() * sqrt_rho.conjugate();
    let sv = k.singular_values();
    let mut s = [sv[0], sv[1], sv[2], sv[3]];
    s.sort_by(|a, b| b.total_cmp(a));
    let value = (s[0] - s[1] - s[2] - s[3]).max(0.0);
    let lambdas = s.map(|x| x * x);
    let x_state = odm.is_x_structured().then(|| x_state_concurrence(&odm.matrix));
    if let Some(cx) = x_state {
        if (cx - value).abs() > CONCURRENCE_AGREEMENT_TOL {
            return Err(Error::Accuracy(format!(
                "concurrence routes disagree: spectrum {value:.15} vs X-state {cx:.15}"
            )));
        }
    }
    Ok(Concurrence {
        value,
        method: ConcurrenceMethod::SpinFlipSpectrum,
        lambdas,
        x_state,
    })
}

fn pauli() -> [nalgebra::Matrix2<Complex64>; 3] {
    let z = c(0.0);
    let one = c(1.0);
    let i = Complex64::new(0.0, 1.0);
    [
        nalgebra::Matrix2::new(z, one, one, z),
        nalgebra::Matrix2::new(z, -i, i, z),
        nalgebra::Matrix2::new(one, z, z, -one),
    ]
}

/// `T_ij = Tr[ρ σ_i⊗σ_j]` for i, j ∈ {x, y, z}.
pub fn correlation_tensor(odm: &TwoPhotonOdm) -> Matrix3<f64> {
    let p = pauli();
    Matrix3::from_fn(|i, j| (odm.matrix * p[i].kronecker(&p[j])).trace().re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chsh {
    pub s_max: f64,
    /// `s_max − 2`, unclamped.
    pub delta_s: f64,
}

/// Maximal CHSH value over all analyzer settings: `2√(m₁ + m₂)` with m₁, m₂
/// the two largest eigenvalues of TᵀT.
pub fn chsh_max(odm: &TwoPhotonOdm) -> Chsh {
    let t = correlation_tensor(odm);
    let mut m = SymmetricEigen::new(t.transpose() * t).eigenvalues;
    m.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    let s_max = 2.0 * (m[0] + m[1]).max(0.0).sqrt();
    Chsh { s_max, delta_s: s_max - 2.0 }
}

/// Concurrence and Bell-violation summary for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementMetrics {
    pub concurrence: f64,
    pub concurrence_x_state: Option<f64>,
    pub lambdas: [f64; 4],
    pub s_max: f64,
    pub delta_s: f64,
}

pub fn entanglement_metrics(odm: &TwoPhotonOdm) -> Result<EntanglementMetrics> {
    let cc = concurrence(odm)?;
    let chsh = chsh_max(odm);
    Ok(EntanglementMetrics {
        concurrence: cc.value,
        concurrence_x_state: cc.x_state,
        lambdas: cc.lambdas,
        s_max: chsh.s_max,
        delta_s: chsh.delta_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Reference state for Φ_S = 2·10⁵, Φ_C = 2·10⁶, τ = 1 ns, to three decimals.
    fn reference_state() -> TwoPhotonOdm {
        let mut m = Mat4::zeros();
        for (i, j, v) in [
            (0, 0, 0.601),
            (1, 1, 0.067),
            (2, 2, 0.067),
            (3, 3, 0.264),
            (0, 3, 0.388),
            (3, 0, 0.388),
            (1, 2, 0.067),
            (2, 1, 0.067),
        ] {
            m[(i, j)] = c(v);
        }
        // The three-decimal entries sum to 0.999.
        let tr = m.trace().re;
        TwoPhotonOdm::from_matrix(m.unscale(tr), 1e-9).unwrap()
    }

    #[test]
    fn concurrence_of_reference_state() {
        let cc = concurrence(&reference_state()).unwrap();
        assert!((cc.value - 0.642).abs() < 0.005, "{}", cc.value);
        assert!(cc.lambdas.windows(2).all(|w| w[0] >= w[1]));
        assert!(cc.lambdas[3] >= 0.0);
    }

    #[test]
    fn concurrence_reference_states() {
        let bell = concurrence(&TwoPhotonOdm::bell_phi_plus()).unwrap();
        assert_relative_eq!(bell.value, 1.0, epsilon = 1e-12);
        let mixed = concurrence(&TwoPhotonOdm::maximally_mixed()).unwrap();
        assert_eq!(mixed.value, 0.0);
        assert_eq!(mixed.x_state, Some(0.0));
    }

    #[test]
    fn chsh_reference_states() {
        let bell = chsh_max(&TwoPhotonOdm::bell_phi_plus());
        assert_relative_eq!(bell.s_max, 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        let hh = chsh_max(&TwoPhotonOdm::basis_state(0));
        assert_relative_eq!(hh.s_max, 2.0, epsilon = 1e-12);
        let mixed = chsh_max(&TwoPhotonOdm::maximally_mixed());
        assert_eq!(mixed.s_max, 0.0);
        assert_eq!(mixed.delta_s, -2.0);
    }

    #[test]
    fn partial_transpose_reference_states() {
        let pt = partial_transpose(&TwoPhotonOdm::bell_phi_plus());
        assert_relative_eq!(pt.min_eigenvalue(), -0.5, epsilon = 1e-12);
        let mut diag = Mat4::zeros();
        for (i, p) in [0.4, 0.1, 0.2, 0.3].iter().enumerate() {
            diag[(i, i)] = c(*p);
        }
        let sep = TwoPhotonOdm::from_matrix(diag, 0.0).unwrap();
        assert!(partial_transpose(&sep).min_eigenvalue() >= 0.0);
        let q = partial_transpose(&reference_state());
        assert!(q.min_eigenvalue() < 0.0);
        assert!(concurrence(&reference_state()).unwrap().value > 0.0);
    }

    #[test]
    fn partial_transpose_is_an_involution() {
        let m = *reference_state().matrix();
        let twice = partial_transpose_matrix(&partial_transpose_matrix(&m));
        assert_eq!(twice, m);
    }

    #[test]
    fn build_odm_normalizes_and_rejects_zero_trace() {
        let corr = PairCorrelations {
            tau: 0.0,
            r_hhhh: 4.0,
            r_hvhv: 1.0,
            r_vhvh: 1.0,
            r_hhvv: 2.0,
            r_hvvh: 0.5,
            r_vvvv: 2.0,
        };
        let odm = build_odm(&corr).unwrap();
        assert_relative_eq!(odm.matrix().trace().re, 1.0, epsilon = 1e-15);
        assert!(odm.is_x_structured());
        let zero = PairCorrelations { r_hhhh: 0.0, r_hvhv: 0.0, r_vhvh: 0.0, r_vvvv: 0.0, ..corr };
        assert!(matches!(build_odm(&zero), Err(Error::Degenerate(_))));
    }

    #[test]
    fn unpumped_odm_is_hh_projector() {
        let corr = PairCorrelations {
            tau: 1e-9,
            r_hhhh: 4e12,
            r_hvhv: 0.0,
            r_vhvh: 0.0,
            r_hhvv: 0.0,
            r_hvvh: 0.0,
            r_vvvv: 0.0,
        };
        let odm = build_odm(&corr).unwrap();
        assert_eq!(odm, TwoPhotonOdm { tau: 1e-9, ..TwoPhotonOdm::basis_state(0) });
        let report = nonclassicality_test(&corr);
        assert!(!report.nonclassical && !report.npt && report.verdicts_agree);
    }

    #[test]
    fn coherent_fields_sit_on_the_boundary() {
        // Fixed amplitudes a_H = 1.3, a_V = 0.4: every element is a product.
        let (h, v) = (1.3f64, 0.4f64);
        let corr = PairCorrelations {
            tau: 0.0,
            r_hhhh: h.powi(4),
            r_hvhv: h * h * v * v,
            r_vhvh: h * h * v * v,
            r_hhvv: h * h * v * v,
            r_hvvh: h * h * v * v,
            r_vvvv: v.powi(4),
        };
        let report = nonclassicality_test(&corr);
        assert!(!report.hhvv.violated && !report.hvvh.violated);
        assert_relative_eq!(report.hhvv.ratio.unwrap(), 1.0, epsilon = 1e-14);
        assert!(report.verdicts_agree);
    }

    #[test]
    fn validation_rejects_bad_matrices() {
        let mut m = Mat4::identity().scale(0.25);
        m[(0, 1)] = c(0.1);
        assert!(TwoPhotonOdm::from_matrix(m, 0.0).is_err());
        let m = Mat4::identity().scale(0.3);
        assert!(TwoPhotonOdm::from_matrix(m, 0.0).is_err());
        let mut m = Mat4::zeros();
        m[(0, 0)] = c(1.2);
        m[(1, 1)] = c(-0.2);
        assert!(matches!(TwoPhotonOdm::from_matrix(m, 0.0), Err(Error::InvalidState(_))));
    }

    #[test]
    fn tiny_negative_eigenvalues_are_clipped() {
        let mut m = Mat4::zeros();
        m[(0, 0)] = c(0.5 + 1e-11);
        m[(3, 3)] = c(0.5 - 1e-11);
        m[(0, 3)] = c(0.5);
        m[(3, 0)] = c(0.5);
        let odm = TwoPhotonOdm::from_matrix(m, 0.0).unwrap();
        assert!(hermitian_eigenvalues(odm.matrix())[0] >= -1e-15);
        assert!(odm.is_x_structured());
        assert_relative_eq!(odm.matrix().trace().re, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn born_rule_probabilities() {
        let bell = TwoPhotonOdm::bell_phi_plus();
        let h = [c(1.0), c(0.0)];
        let v = [c(0.0), c(1.0)];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = [c(s), c(s)];
        assert_relative_eq!(bell.pair_probability(h, h), 0.5, epsilon = 1e-15);
        assert_relative_eq!(bell.pair_probability(h, v), 0.0, epsilon = 1e-15);
        assert_relative_eq!(bell.pair_probability(d, d), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn record_round_trip_and_validation() {
        let odm = reference_state();
        let json = serde_json::to_string(&odm).unwrap();
        let back: TwoPhotonOdm = serde_json::from_str(&json).unwrap();
        assert_eq!(back, odm);
        let mut rec = odm.to_record();
        rec.basis.swap(1, 2);
        assert!(TwoPhotonOdm::try_from(rec).is_err());
        let mut rec = odm.to_record();
        rec.re[0][0] += 0.1;
        assert!(TwoPhotonOdm::try_from(rec).is_err());
    }
}
