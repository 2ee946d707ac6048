//! The reduced two-level model: effective non-Hermitian Hamiltonian, its
//! discriminant and the adiabatic (eigen) frame.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::averaging::MicroscopicParams;
use crate::{Error, Result, Vec2};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative threshold on |δ| / scale² below which a frame is treated as an EP.
pub const COALESCENCE_THRESHOLD: f64 = 1e-20;

/// Molecular handedness. Swapping it negates the Rabi frequency Ω₁₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

impl Handedness {
    pub const BOTH: [Handedness; 2] = [Handedness::Right, Handedness::Left];

    /// +1 for Right, -1 for Left.
    pub fn sign(self) -> f64 {
        match self {
            Handedness::Right => 1.0,
            Handedness::Left => -1.0,
        }
    }

    pub fn mirror(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Handedness::Right => "right",
            Handedness::Left => "left",
        }
    }
}

impl fmt::Display for Handedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Handedness {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "right" | "r" => Ok(Handedness::Right),
            "left" | "l" => Ok(Handedness::Left),
            other => Err(format!(
                "unknown enantiomer '{other}' (expected right|left)"
            )),
        }
    }
}

/// Knobs of the reduced model, in atomic units.
///
/// `omega12` is the Rabi frequency of the Right enantiomer; the Hamiltonian
/// uses `handedness.sign() * omega12`. `raman` is the two-photon coupling
/// π(d₁·F₁)(d₂·F₂)*, which does not change sign between enantiomers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta: f64,
    pub omega12: f64,
    pub raman: Complex64,
    pub handedness: Handedness,
}

impl EffectiveParams {
    /// Right enantiomer with the canonical real Raman coupling √(Γ₁Γ₂).
    pub fn new(gamma1: f64, gamma2: f64, delta: f64, omega12: f64) -> Self {
        EffectiveParams {
            gamma1,
            gamma2,
            delta,
            omega12,
            raman: Complex64::new(canonical_raman(gamma1, gamma2), 0.0),
            handedness: Handedness::Right,
        }
    }

    pub fn with_raman(mut self, raman: Complex64) -> Self {
        self.raman = raman;
        self
    }

    pub fn with_handedness(mut self, handedness: Handedness) -> Self {
        self.handedness = handedness;
        self
    }

    /// Same model at another point of the (Δ, Ω₁₂) plane.
    pub fn at(mut self, delta: f64, omega12: f64) -> Self {
        self.delta = delta;
        self.omega12 = omega12;
        self
    }

    /// Mean decay Γ = (Γ₁+Γ₂)/2.
    pub fn mean_decay(&self) -> f64 {
        0.5 * (self.gamma1 + self.gamma2)
    }

    /// Half-difference γ = (Γ₁−Γ₂)/2.
    pub fn half_difference(&self) -> f64 {
        0.5 * (self.gamma1 - self.gamma2)
    }

    /// Rabi frequency seen by this enantiomer.
    pub fn signed_omega12(&self) -> f64 {
        self.handedness.sign() * self.omega12
    }

    /// Cyclic three-photon element Ω₁₂₃ = (d₁·F₁)*(d₂·F₂)(d₁₂·F₃).
    ///
    /// With raman = π(d₁·F₁)(d₂·F₂)* and Ω₁₂ = −(d₁₂·F₃)/2 this is
    /// −2·Ω₁₂·conj(raman)/π; it flips sign with the handedness.
    pub fn omega123(&self) -> Complex64 {
        -2.0 * self.signed_omega12() * self.raman.conj() / std::f64::consts::PI
    }

    /// Γ₁ + Γ₂ + |Δ| + |Ω₁₂|, the natural magnitude of the matrix entries.
    pub fn scale(&self) -> f64 {
        self.gamma1 + self.gamma2 + self.delta.abs() + self.omega12.abs()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.gamma1.is_finite()
            && self.gamma2.is_finite()
            && self.delta.is_finite()
            && self.omega12.is_finite()
            && self.raman.re.is_finite()
            && self.raman.im.is_finite();
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(Error::InvalidParams(format!(
                "decay rates must be non-negative (gamma1 = {}, gamma2 = {})",
                self.gamma1, self.gamma2
            )));
        }
        let bound = self.gamma1 * self.gamma2;
        let slack = 1e-12 * bound + 1e-300;
        if self.raman.norm_sqr() > bound + slack {
            return Err(Error::InvalidParams(format!(
                "|raman|^2 = {:e} exceeds gamma1*gamma2 = {:e}",
                self.raman.norm_sqr(),
                bound
            )));
        }
        Ok(())
    }
}

/// √(Γ₁Γ₂), the Raman coupling when all dipole-field products are real.
pub fn canonical_raman(gamma1: f64, gamma2: f64) -> f64 {
    (gamma1 * gamma2).max(0.0).sqrt()
}

/// Dense complex 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix2 {
    pub h11: Complex64,
    pub h12: Complex64,
    pub h21: Complex64,
    pub h22: Complex64,
}

impl ComplexMatrix2 {
    pub fn new(h11: Complex64, h12: Complex64, h21: Complex64, h22: Complex64) -> Self {
        ComplexMatrix2 { h11, h12, h21, h22 }
    }

    pub fn trace(&self) -> Complex64 {
        self.h11 + self.h22
    }

    pub fn det(&self) -> Complex64 {
        self.h11 * self.h22 - self.h12 * self.h21
    }

    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        [
            self.h11 * v[0] + self.h12 * v[1],
            self.h21 * v[0] + self.h22 * v[1],
        ]
    }

    /// Row vector times matrix.
    pub fn vec_mul(&self, v: &Vec2) -> Vec2 {
        [
            v[0] * self.h11 + v[1] * self.h21,
            v[0] * self.h12 + v[1] * self.h22,
        ]
    }

    /// Largest entry modulus.
    pub fn max_norm(&self) -> f64 {
        [self.h11, self.h12, self.h21, self.h22]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        [self.h11, self.h12, self.h21, self.h22]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// (h11 − h22)² + 4·h12·h21 = (γ₊ − γ₋)².
    pub fn discriminant(&self) -> Complex64 {
        let d = self.h11 - self.h22;
        d * d + 4.0 * self.h12 * self.h21
    }
}

/// H = [[−iΓ₁/2, V₁₂], [V₂₁, Δ − iΓ₂/2]] with
/// V₁₂ = −(i/2)·raman + s·Ω₁₂ and V₂₁ = −(i/2)·conj(raman) + s·Ω₁₂.
pub fn build_hamiltonian(params: &EffectiveParams) -> Result<ComplexMatrix2> {
    params.validate()?;
    Ok(hamiltonian_unchecked(params))
}

/// [`build_hamiltonian`] without input validation, for hot loops over
/// parameters that were validated once.
pub(crate) fn hamiltonian_unchecked(p: &EffectiveParams) -> ComplexMatrix2 {
    let rabi = Complex64::new(p.signed_omega12(), 0.0);
    ComplexMatrix2 {
        h11: Complex64::new(0.0, -0.5 * p.gamma1),
        h12: -0.5 * I * p.raman + rabi,
        h21: -0.5 * I * p.raman.conj() + rabi,
        h22: Complex64::new(p.delta, -0.5 * p.gamma2),
    }
}

/// Discriminant δ of the effective Hamiltonian; EPs are its zeros.
pub fn discriminant(params: &EffectiveParams) -> Result<Complex64> {
    Ok(build_hamiltonian(params)?.discriminant())
}

/// Map microscopic dipoles and fields onto the reduced model.
///
/// Γᵢ = π|dᵢ·Fᵢ|², raman = π(d₁·F₁)(d₂·F₂)*, Ω₁₂ = −(d₁₂·F₃)/2. When d₁₂·F₃ is
/// complex, state |2⟩ is rephased so that Ω₁₂ becomes real (with its sign
/// kept) and the phase moves onto the Raman term; the spectrum and Ω₁₂₃ are
/// unchanged. The result carries `Handedness::Right`: it describes the given
/// molecule, whose mirror image is obtained by negating all dipoles.
pub fn effective_from_microscopic(micro: &MicroscopicParams) -> Result<EffectiveParams> {
    micro.validate()?;
    let p1 = micro.coupling1();
    let p2 = micro.coupling2();
    let p3 = micro.coupling3();
    let pi = std::f64::consts::PI;

    let rabi = -0.5 * p3;
    // Rotate by e^{iα}, α ∈ (−π/2, π/2], so that rabi·e^{iα} is real.
    let mut alpha = -rabi.arg();
    if alpha > std::f64::consts::FRAC_PI_2 {
        alpha -= pi;
    } else if alpha <= -std::f64::consts::FRAC_PI_2 {
        alpha += pi;
    }
    if rabi.norm() == 0.0 {
        alpha = 0.0;
    }
    let phase = Complex64::from_polar(1.0, alpha);
    let omega12 = (rabi * phase).re;
    let raman = pi * p1 * p2.conj() * phase;

    let params = EffectiveParams {
        gamma1: pi * p1.norm_sqr(),
        gamma2: pi * p2.norm_sqr(),
        delta: micro.e2 - micro.e1 - micro.omega3,
        omega12,
        raman,
        handedness: Handedness::Right,
    };
    params.validate()?;
    Ok(params)
}

/// c-product (u|v) = u₁v₁ + u₂v₂, without complex conjugation.
pub fn c_product(u: &Vec2, v: &Vec2) -> Complex64 {
    u[0] * v[0] + u[1] * v[1]
}

/// Eigenvalues and biorthonormal eigenvectors at one parameter point.
///
/// `phi_*` are right eigenvectors, `left_*` the matching left eigenvectors
/// (row vectors), normalized so that `left_± · phi_± = 1`. For complex
/// symmetric matrices the left vectors equal the right ones and the pair is
/// the parallel-transport basis φ₊ = (cos θ/2, sin θ/2), φ₋ = (−sin θ/2, cos θ/2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdiabaticFrame {
    pub gamma_plus: Complex64,
    pub gamma_minus: Complex64,
    pub phi_plus: Vec2,
    pub phi_minus: Vec2,
    pub left_plus: Vec2,
    pub left_minus: Vec2,
    /// Mixing angle, only for complex symmetric matrices.
    pub theta: Option<Complex64>,
    /// γ₊ − γ₋, the branch of √δ used for the labels.
    pub root: Complex64,
    pub at_ep: bool,
}

impl AdiabaticFrame {
    /// Swap the ± labels.
    pub fn swapped(&self) -> Self {
        AdiabaticFrame {
            gamma_plus: self.gamma_minus,
            gamma_minus: self.gamma_plus,
            phi_plus: self.phi_minus,
            phi_minus: self.phi_plus,
            left_plus: self.left_minus,
            left_minus: self.left_plus,
            theta: self.theta.map(|t| t + std::f64::consts::PI),
            root: -self.root,
            at_ep: self.at_ep,
        }
    }
}

/// Eigensystem with the principal branch of √δ: γ± = tr/2 ± √δ/2.
pub fn eigensystem(matrix: &ComplexMatrix2) -> Result<AdiabaticFrame> {
    eigensystem_with_reference(matrix, None)
}

/// Eigensystem with the √δ branch closest to `reference` (principal branch
/// when `None`). Path-following callers pass the previous root to keep labels
/// continuous.
pub fn eigensystem_with_reference(
    matrix: &ComplexMatrix2,
    reference: Option<Complex64>,
) -> Result<AdiabaticFrame> {
    if !matrix.is_finite() {
        return Err(Error::InvalidParams("non-finite matrix entry".into()));
    }
    let delta = matrix.discriminant();
    let mut root = delta.sqrt();
    if let Some(r) = reference {
        if (root - r).norm() > (root + r).norm() {
            root = -root;
        }
    }
    let half_tr = 0.5 * matrix.trace();
    let gamma_plus = half_tr + 0.5 * root;
    let gamma_minus = half_tr - 0.5 * root;

    let scale = matrix.h11.norm() + matrix.h12.norm() + matrix.h21.norm() + matrix.h22.norm();
    let at_ep = scale == 0.0 || delta.norm() < COALESCENCE_THRESHOLD * scale * scale;

    if at_ep {
        let v = right_vector(matrix, gamma_plus);
        let l = left_vector(matrix, gamma_plus);
        return Ok(AdiabaticFrame {
            gamma_plus,
            gamma_minus,
            phi_plus: v,
            phi_minus: v,
            left_plus: l,
            left_minus: l,
            theta: None,
            root,
            at_ep,
        });
    }

    if matrix.h12 == matrix.h21 {
        let (phi_plus, phi_minus, theta) = parallel_transport_pair(matrix, root);
        return Ok(AdiabaticFrame {
            gamma_plus,
            gamma_minus,
            phi_plus,
            phi_minus,
            left_plus: phi_plus,
            left_minus: phi_minus,
            theta: Some(theta),
            root,
            at_ep,
        });
    }

    let (phi_plus, left_plus) = biorthonormal_pair(matrix, gamma_plus);
    let (phi_minus, left_minus) = biorthonormal_pair(matrix, gamma_minus);
    Ok(AdiabaticFrame {
        gamma_plus,
        gamma_minus,
        phi_plus,
        phi_minus,
        left_plus,
        left_minus,
        theta: None,
        root,
        at_ep,
    })
}

/// Parallel-transport pair for a complex symmetric matrix.
///
/// With M = H − tr/2 = [[−a, V], [V, a]] = λ[[−cos θ, −sin θ], [−sin θ, cos θ]],
/// φ₊ = (cos θ/2, sin θ/2) has eigenvalue −λ. Choosing λ = −root/2 ties φ₊ to
/// γ₊ = tr/2 + root/2, which fixes θ up to 2π (tan θ = −2V/(h22 − h11)).
fn parallel_transport_pair(m: &ComplexMatrix2, root: Complex64) -> (Vec2, Vec2, Complex64) {
    let a = 0.5 * (m.h22 - m.h11);
    let v = m.h12;
    let lambda = -0.5 * root;
    let cos_t = a / lambda;
    let sin_t = -v / lambda;

    let plus = (0.5 * (1.0 + cos_t)).sqrt();
    let minus = (0.5 * (1.0 - cos_t)).sqrt();
    let (c, s) = if plus.norm() >= minus.norm() {
        (plus, sin_t / (2.0 * plus))
    } else {
        (sin_t / (2.0 * minus), minus)
    };
    // θ/2 = −i·ln(cos θ/2 + i sin θ/2)
    let theta = 2.0 * (-I * (c + I * s).ln());
    ([c, s], [-s, c], theta)
}

fn right_vector(m: &ComplexMatrix2, g: Complex64) -> Vec2 {
    let a = [m.h12, g - m.h11];
    let b = [g - m.h22, m.h21];
    if norm2(&a) >= norm2(&b) {
        a
    } else {
        b
    }
}

fn left_vector(m: &ComplexMatrix2, g: Complex64) -> Vec2 {
    let a = [m.h21, g - m.h11];
    let b = [g - m.h22, m.h12];
    if norm2(&a) >= norm2(&b) {
        a
    } else {
        b
    }
}

fn biorthonormal_pair(m: &ComplexMatrix2, g: Complex64) -> (Vec2, Vec2) {
    let mut r = right_vector(m, g);
    let mut l = left_vector(m, g);
    if norm2(&r) == 0.0 {
        // Diagonal matrix with this eigenvalue in the other slot.
        r = if (m.h11 - g).norm() <= (m.h22 - g).norm() {
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        };
    }
    if norm2(&l) == 0.0 {
        l = r;
    }
    let n = c_product(&l, &r).sqrt();
    ([r[0] / n, r[1] / n], [l[0] / n, l[1] / n])
}

pub(crate) fn norm2(v: &Vec2) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}
