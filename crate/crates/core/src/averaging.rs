//! Molecular and field pseudoscalars and the isotropic orientation average of
//! the cyclic three-photon element.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Complex 3-vector (dipole matrix element or field amplitude).
pub type CVec3 = [Complex64; 3];

/// Isotropic average of a rank-3 pseudoscalar contraction,
/// ⟨R_ia R_jb R_kc⟩ = ε_ijk ε_abc / 6. Confirmed against
/// [`mc_orientation_average`] (see the oracle tests).
pub const ISOTROPIC_KAPPA: f64 = 1.0 / 6.0;

/// Number of independent RNG streams used by the Monte Carlo average.
pub const MC_SHARDS: u64 = 16;

/// Dipoles, fields, colors and bound-state energies of the three-level system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroscopicParams {
    /// Bound-free dipole ⟨1|d|E_C⟩.
    pub d1e: CVec3,
    /// Bound-free dipole ⟨2|d|E_C⟩.
    pub d2e: CVec3,
    /// Bound-bound dipole ⟨1|d|2⟩.
    pub d12: CVec3,
    pub f1: CVec3,
    pub f2: CVec3,
    pub f3: CVec3,
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
    pub e1: f64,
    pub e2: f64,
}

impl MicroscopicParams {
    pub fn validate(&self) -> Result<()> {
        let vecs = [self.d1e, self.d2e, self.d12, self.f1, self.f2, self.f3];
        let finite_vecs = vecs
            .iter()
            .flatten()
            .all(|z| z.re.is_finite() && z.im.is_finite());
        let scalars = [self.omega1, self.omega2, self.omega3, self.e1, self.e2];
        if !finite_vecs || !scalars.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParams(
                "non-finite microscopic parameter".into(),
            ));
        }
        if self.omega1 <= 0.0 || self.omega2 <= 0.0 || self.omega3 <= 0.0 {
            return Err(Error::InvalidParams(
                "field frequencies must be positive".into(),
            ));
        }
        let mismatch = (self.omega1 - self.omega2 - self.omega3).abs();
        let allowed = 1e-12 * self.omega1;
        if mismatch > allowed {
            return Err(Error::Resonance { mismatch, allowed });
        }
        Ok(())
    }

    /// d₁,E·F₁
    pub fn coupling1(&self) -> Complex64 {
        dot(&self.d1e, &self.f1)
    }

    /// d₂,E·F₂
    pub fn coupling2(&self) -> Complex64 {
        dot(&self.d2e, &self.f2)
    }

    /// d₁₂·F₃
    pub fn coupling3(&self) -> Complex64 {
        dot(&self.d12, &self.f3)
    }

    /// (d₁·F₁)*(d₂·F₂)(d₁₂·F₃) in this orientation.
    pub fn omega123(&self) -> Complex64 {
        self.coupling1().conj() * self.coupling2() * self.coupling3()
    }

    /// False when any of the three couplings vanishes: the transition loop is
    /// open and the enantiosensitivity is lost.
    pub fn loop_closed(&self) -> bool {
        self.coupling1() != Complex64::new(0.0, 0.0)
            && self.coupling2() != Complex64::new(0.0, 0.0)
            && self.coupling3() != Complex64::new(0.0, 0.0)
    }

    /// The opposite enantiomer: all dipoles negated.
    pub fn mirrored(&self) -> Self {
        MicroscopicParams {
            d1e: scale(&self.d1e, -1.0),
            d2e: scale(&self.d2e, -1.0),
            d12: scale(&self.d12, -1.0),
            ..*self
        }
    }

    /// All three dipoles rotated by the same real rotation matrix.
    pub fn rotate_dipoles(&self, r: &[[f64; 3]; 3]) -> Self {
        MicroscopicParams {
            d1e: rotate(r, &self.d1e),
            d2e: rotate(r, &self.d2e),
            d12: rotate(r, &self.d12),
            ..*self
        }
    }
}

/// Bilinear dot product (no conjugation).
pub fn dot(a: &CVec3, b: &CVec3) -> Complex64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &CVec3, b: &CVec3) -> CVec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(a: &CVec3, s: f64) -> CVec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn rotate(r: &[[f64; 3]; 3], v: &CVec3) -> CVec3 {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (i, row) in r.iter().enumerate() {
        out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

/// a·(b×c), with `a` conjugated when `conjugate_first` is set.
pub fn triple_product(a: &CVec3, b: &CVec3, c: &CVec3, conjugate_first: bool) -> Complex64 {
    let a = if conjugate_first {
        [a[0].conj(), a[1].conj(), a[2].conj()]
    } else {
        *a
    };
    dot(&a, &cross(b, c))
}

/// Factorization of the orientation-averaged three-photon element into a
/// molecular pseudoscalar χ_M and a field pseudoscalar h⁽³⁾.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoscalarDecomposition {
    /// χ_M = d₁,E*·(d₂,E × d₁₂)
    pub chi_m: Complex64,
    /// h⁽³⁾ = F₁*·(F₂ × F₃)
    pub h3: Complex64,
    /// φ_M = arg χ_M
    pub phi_m: f64,
    /// Laser phase φ_L = φ₂ + φ₃ − φ₁ for fields Fᵢ = |Fᵢ|e^{−iφᵢ}êᵢ, i.e. −arg h⁽³⁾.
    pub phi_l: f64,
    /// ⟨Re Ω₁₂₃⟩ over orientations = κ|χ_M||h⁽³⁾|cos(φ_M − φ_L).
    pub averaged_value: f64,
}

/// Molecular and field pseudoscalars and the averaged cyclic element.
///
/// The orientation average of (d₁·F₁)*(d₂·F₂)(d₁₂·F₃) is κ·χ_M·h⁽³⁾; its real
/// part is κ|χ_M||h⁽³⁾|cos(φ_M − φ_L) with φ_L = −arg h⁽³⁾.
pub fn decompose(micro: &MicroscopicParams) -> PseudoscalarDecomposition {
    let chi_m = triple_product(&micro.d1e, &micro.d2e, &micro.d12, true);
    let h3 = triple_product(&micro.f1, &micro.f2, &micro.f3, true);
    PseudoscalarDecomposition {
        chi_m,
        h3,
        phi_m: chi_m.arg(),
        phi_l: -h3.arg(),
        averaged_value: ISOTROPIC_KAPPA * (chi_m * h3).re,
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Rotation matrix of a unit quaternion (w, x, y, z).
pub fn quaternion_to_matrix(q: [f64; 4]) -> [[f64; 3]; 3] {
    let [w, x, y, z] = q;
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Haar-uniform rotation from three uniforms (Shoemake's subgroup algorithm).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> [[f64; 3]; 3] {
    let tau = std::f64::consts::TAU;
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    quaternion_to_matrix([
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
        b * (tau * u3).cos(),
    ])
}

/// Average of Re[(d₁·F₁)*(d₂·F₂)(d₁₂·F₃)] over uniformly random molecular
/// orientations. The dipoles are rotated jointly; fields stay in the lab frame.
///
/// Samples are split over [`MC_SHARDS`] ChaCha streams derived from `seed`,
/// so the result is reproducible and independent of thread scheduling.
pub fn mc_orientation_average(
    micro: &MicroscopicParams,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParams(format!(
            "Monte Carlo average needs at least 1000 samples, got {samples}"
        )));
    }
    let shards = MC_SHARDS as usize;
    let partial: Vec<(usize, f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let n = samples / shards + usize::from(k < samples % shards);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            // Welford accumulation within the shard.
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for i in 0..n {
                let r = random_rotation(&mut rng);
                let x = micro.rotate_dipoles(&r).omega123().re;
                let d = x - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (x - mean);
            }
            (n, mean, m2)
        })
        .collect();

    // Chan et al. pairwise merge, in shard order.
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    for (nb, mb, m2b) in partial {
        if nb == 0 {
            continue;
        }
        let total = n + nb;
        let d = mb - mean;
        mean += d * nb as f64 / total as f64;
        m2 += m2b + d * d * (n as f64) * (nb as f64) / total as f64;
        n = total;
    }
    let var = m2 / (n - 1) as f64;
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / n as f64).sqrt(),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn triad() -> [CVec3; 3] {
        let z = c(0.0);
        let o = c(1.0);
        [[o, z, z], [z, o, z], [z, z, o]]
    }

    pub(crate) fn triad_micro() -> MicroscopicParams {
        let [x, y, z] = triad();
        MicroscopicParams {
            d1e: x,
            d2e: y,
            d12: z,
            f1: x,
            f2: y,
            f3: z,
            omega1: 0.3,
            omega2: 0.2,
            omega3: 0.1,
            e1: 0.0,
            e2: 0.1,
        }
    }

    #[test]
    fn triple_product_examples() {
        let [x, y, z] = triad();
        assert_eq!(triple_product(&x, &y, &z, false), c(1.0));
        let w = [c(1.0), c(1.0), c(0.0)];
        assert_eq!(triple_product(&x, &y, &w, false), c(0.0));
        let a = [Complex64::new(0.3, 0.1), c(0.2), Complex64::new(0.0, -1.0)];
        let b = [c(1.0), Complex64::new(0.5, 0.5), c(-0.2)];
        let d = [c(0.1), c(0.9), Complex64::new(0.4, 0.3)];
        let p = triple_product(&a, &b, &d, true);
        let q = triple_product(&a, &d, &b, true);
        assert!((p + q).norm() < 1e-15);
    }

    #[test]
    fn decompose_triad() {
        let d = decompose(&triad_micro());
        assert!((d.chi_m.norm() - 1.0).abs() < 1e-15);
        assert!((d.h3.norm() - 1.0).abs() < 1e-15);
        assert_eq!(d.phi_m, 0.0);
        assert_eq!(d.phi_l, 0.0);
        assert!((d.averaged_value - ISOTROPIC_KAPPA).abs() < 1e-15);
    }

    #[test]
    fn decompose_enantiomer_and_coplanar_field() {
        let m = triad_micro();
        let a = decompose(&m).averaged_value;
        let b = decompose(&m.mirrored()).averaged_value;
        assert_eq!(a, -b);

        let coplanar = MicroscopicParams { f3: m.f2, ..m };
        let d = decompose(&coplanar);
        assert_eq!(d.h3, c(0.0));
        assert_eq!(d.averaged_value, 0.0);
    }

    #[test]
    fn phase_convention_matches_cosine_form() {
        // Fields F_i = e^{-i φ_i} ê_i with φ_L = φ2 + φ3 − φ1.
        let [x, y, z] = triad();
        let (p1, p2, p3) = (0.4, -1.1, 0.7);
        let e = |phi: f64, v: CVec3| -> CVec3 {
            let f = Complex64::from_polar(1.0, -phi);
            [v[0] * f, v[1] * f, v[2] * f]
        };
        let m = MicroscopicParams {
            f1: e(p1, x),
            f2: e(p2, y),
            f3: e(p3, z),
            d12: [c(0.0), c(0.0), Complex64::from_polar(2.0, 0.3)],
            ..triad_micro()
        };
        let d = decompose(&m);
        let phi_l = p2 + p3 - p1;
        assert!((d.phi_l - phi_l).abs() < 1e-14);
        let expected = ISOTROPIC_KAPPA * d.chi_m.norm() * d.h3.norm() * (d.phi_m - d.phi_l).cos();
        assert!((d.averaged_value - expected).abs() < 1e-15);
    }

    #[test]
    fn quaternion_matrix_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-14);
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
                - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            assert!((det - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mc_rejects_small_sample_counts() {
        assert!(mc_orientation_average(&triad_micro(), 999, 1).is_err());
    }

    #[test]
    fn mc_is_deterministic() {
        let a = mc_orientation_average(&triad_micro(), 5000, 42).unwrap();
        let b = mc_orientation_average(&triad_micro(), 5000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples, 5000);
    }

    #[test]
    fn mc_achiral_dipoles_average_to_zero() {
        let m = MicroscopicParams {
            d12: [c(1.0), c(1.0), c(0.0)],
            ..triad_micro()
        };
        assert_eq!(decompose(&m).chi_m, c(0.0));
        let e = mc_orientation_average(&m, 20_000, 9).unwrap();
        assert!(e.estimate.abs() <= 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn mc_fixes_kappa() {
        // The triad case: decompose gives exactly κ, so the MC mean pins κ.
        let e = mc_orientation_average(&triad_micro(), 200_000, 11).unwrap();
        assert!((e.estimate - 1.0 / 6.0).abs() <= 3.0 * e.std_error, "{e:?}");
        assert!((e.estimate - 1.0 / 4.0).abs() > 3.0 * e.std_error);
    }

    #[test]
    fn mc_std_error_scaling() {
        let m = triad_micro();
        let a = mc_orientation_average(&m, 10_000, 5).unwrap();
        let b = mc_orientation_average(&m, 40_000, 5).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn cvec() -> impl Strategy<Value = CVec3> {
        prop::array::uniform6(-1.0..1.0f64).prop_map(|v| {
            [
                Complex64::new(v[0], v[1]),
                Complex64::new(v[2], v[3]),
                Complex64::new(v[4], v[5]),
            ]
        })
    }

    fn micro() -> impl Strategy<Value = MicroscopicParams> {
        (cvec(), cvec(), cvec(), cvec(), cvec(), cvec()).prop_map(|(d1e, d2e, d12, f1, f2, f3)| {
            MicroscopicParams {
                d1e,
                d2e,
                d12,
                f1,
                f2,
                f3,
                omega1: 0.5,
                omega2: 0.3,
                omega3: 0.2,
                e1: -0.5,
                e2: -0.3,
            }
        })
    }

    fn close(a: Complex64, b: Complex64, rel: f64) -> bool {
        (a - b).norm() <= rel * a.norm().max(b.norm()) + 1e-300
    }

    proptest! {
        #[test]
        fn rotation_invariance(m in micro(), seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = random_rotation(&mut rng);
            let d0 = decompose(&m);
            let rotated = MicroscopicParams {
                f1: rotate(&r, &m.f1),
                f2: rotate(&r, &m.f2),
                f3: rotate(&r, &m.f3),
                ..m.rotate_dipoles(&r)
            };
            let d1 = decompose(&rotated);
            prop_assert!(close(d0.chi_m, d1.chi_m, 1e-12));
            prop_assert!(close(d0.h3, d1.h3, 1e-12));
        }

        #[test]
        fn parity_antisymmetry(m in micro(), n in prop::array::uniform3(-1.0..1.0f64)) {
            let a = decompose(&m).averaged_value;
            prop_assert_eq!(decompose(&m.mirrored()).averaged_value, -a);

            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            prop_assume!(len > 1e-3);
            let u = [n[0] / len, n[1] / len, n[2] / len];
            let mut refl = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    refl[i][j] = if i == j { 1.0 } else { 0.0 } - 2.0 * u[i] * u[j];
                }
            }
            let reflected = MicroscopicParams {
                f1: rotate(&refl, &m.f1),
                f2: rotate(&refl, &m.f2),
                f3: rotate(&refl, &m.f3),
                ..m
            };
            let d = decompose(&m);
            let b = decompose(&reflected).averaged_value;
            prop_assert!((a + b).abs() <= 1e-12 * (d.chi_m.norm() * d.h3.norm()).max(1e-12));
        }

        #[test]
        fn field_handedness_swap(m in micro()) {
            let a = decompose(&m);
            let swapped = MicroscopicParams { f3: scale(&m.f3, -1.0), ..m };
            let b = decompose(&swapped);
            prop_assert_eq!(b.averaged_value, -a.averaged_value);
        }

        #[test]
        fn orthogonal_phases_cancel(m in micro(), k in 0..4i32) {
            // Rephase F₁ so that φ_L = φ_M + π/2 + kπ.
            let d = decompose(&m);
            prop_assume!(d.chi_m.norm() > 1e-6 && d.h3.norm() > 1e-6);
            let target = d.phi_m + std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI;
            // h3 ∝ conj(F₁): multiplying F₁ by e^{iψ} multiplies h3 by e^{−iψ}, i.e. φ_L → φ_L + ψ.
            let psi = target - d.phi_l;
            let rot = Complex64::from_polar(1.0, psi);
            let shifted = MicroscopicParams { f1: [m.f1[0] * rot, m.f1[1] * rot, m.f1[2] * rot], ..m };
            let e = decompose(&shifted);
            let bound = ISOTROPIC_KAPPA * d.chi_m.norm() * d.h3.norm();
            prop_assert!(e.averaged_value.abs() <= 1e-12 * bound);
            // And the magnitude is maximal when the phases agree.
            let aligned = MicroscopicParams {
                f1: {
                    let r = Complex64::from_polar(1.0, d.phi_m - d.phi_l);
                    [m.f1[0] * r, m.f1[1] * r, m.f1[2] * r]
                },
                ..m
            };
            prop_assert!((decompose(&aligned).averaged_value - bound).abs() <= 1e-12 * bound);
        }
    }
}
