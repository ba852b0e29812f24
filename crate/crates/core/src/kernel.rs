//! Fundamental solution of the steady hyperviscous Stokes operator
//! `∇p − μΔu + μℓ²ΔΔu = f δ`, `div u = 0`.
//!
//! In wavenumber space the velocity response is
//! `(𝟙 − k̂k̂) / (μ k² (1 + ℓ²k²))`, and the partial fraction
//! `1/(k²(1+ℓ²k²)) = 1/k² − 1/(k² + ℓ⁻²)` splits the tensor into a
//! Stokeslet minus a Brinkman (screened) Stokeslet with screening length
//! `ℓ`. With `R = r/ℓ`, `e = exp(−R)` and `p₂ = 1 − e − R e`:
//!
//! ```text
//! A(r) = [1 − 2e + 2 p₂/R²] / (8πμr)
//! B(r) = [1 + 2e − 6 p₂/R²] / (8πμr)
//! ```
//!
//! and `G(x) = A(|x|) 𝟙 + B(|x|) x̂⊗x̂`. Both brackets vanish at `R = 0`,
//! so `A(0) = 1/(6πμℓ)` and `B(0) = 0`. Below the switch radius the
//! brackets are replaced by their Taylor series.
//!
//! The Brinkman part carries an algebraic potential-dipole tail, so for
//! `r ≫ ℓ` the kernel approaches the Stokeslet as
//! `A ≈ (1 + 2ℓ²/r²)/(8πμr)`, `B ≈ (1 − 6ℓ²/r²)/(8πμr)`, with only the
//! remainder beyond that decaying like `e^(−r/ℓ)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, mapped};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Effective thickness `ℓ`.
    pub ell: f64,
    pub mu: f64,
    /// Distance below which the Taylor branch is used.
    pub switch_radius: f64,
    /// Number of Taylor terms kept.
    pub series_order: usize,
}

impl KernelParams {
    pub fn new(ell: f64) -> Self {
        Self {
            ell,
            mu: 1.0,
            switch_radius: 1e-2 * ell,
            series_order: 8,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let op = "kernel::kernel_params";
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::Domain {
                op,
                msg: format!("ℓ must be positive, got {}", self.ell),
            });
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Domain {
                op,
                msg: format!("μ must be positive, got {}", self.mu),
            });
        }
        if !(self.switch_radius > 0.0 && self.switch_radius < self.ell) {
            return Err(Error::Domain {
                op,
                msg: "switch radius must lie in (0, ℓ)".into(),
            });
        }
        if self.series_order < 2 {
            return Err(Error::Domain {
                op,
                msg: "series order must be at least 2".into(),
            });
        }
        Ok(())
    }
}

/// Isotropic and dyadic parts of the velocity Green tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelScalars {
    pub a: f64,
    pub b: f64,
}

/// Coefficients `c_n = (−1)ⁿ/n!` of `e^(−R)`.
fn exp_coefficient(n: usize) -> f64 {
    let mut c = 1.0;
    for k in 1..=n {
        c /= -(k as f64);
    }
    c
}

/// Taylor branch, `R = r/ℓ`. Returns the values of the brackets divided by `R`.
fn series_brackets(big_r: f64, order: usize) -> (f64, f64) {
    // 1 − A_B = Σ_{k≥1} −2(c_k + c_{k+1} + c_{k+2}) R^k
    // 1 − B_B = Σ_{k≥2}  2(c_k + 3c_{k+1} + 3c_{k+2}) R^k
    let mut a = 0.0;
    let mut b = 0.0;
    for k in (1..=order).rev() {
        let ck = exp_coefficient(k);
        let ck1 = exp_coefficient(k + 1);
        let ck2 = exp_coefficient(k + 2);
        a = a * big_r - 2.0 * (ck + ck1 + ck2);
    }
    for k in (2..=order + 1).rev() {
        let ck = exp_coefficient(k);
        let ck1 = exp_coefficient(k + 1);
        let ck2 = exp_coefficient(k + 2);
        b = b * big_r + 2.0 * (ck + 3.0 * ck1 + 3.0 * ck2);
    }
    (a, b * big_r)
}

fn closed_brackets(big_r: f64) -> (f64, f64) {
    let e = (-big_r).exp();
    let p2 = -(-big_r).exp_m1() - big_r * e;
    let r2 = big_r * big_r;
    (1.0 - 2.0 * e + 2.0 * p2 / r2, 1.0 + 2.0 * e - 6.0 * p2 / r2)
}

/// Closed-form branch at `r` (valid for `r > 0`; loses accuracy near 0).
pub fn closed_form_scalars(r: f64, params: &KernelParams) -> KernelScalars {
    let (ba, bb) = closed_brackets(r / params.ell);
    let scale = 8.0 * PI * params.mu * r;
    KernelScalars {
        a: ba / scale,
        b: bb / scale,
    }
}

/// Taylor branch at `r`.
pub fn series_scalars(r: f64, params: &KernelParams) -> KernelScalars {
    let (ba, bb) = series_brackets(r / params.ell, params.series_order);
    let scale = 8.0 * PI * params.mu * params.ell;
    KernelScalars {
        a: ba / scale,
        b: bb / scale,
    }
}

#[inline]
pub(crate) fn scalars_unchecked(r: f64, params: &KernelParams) -> KernelScalars {
    if r < params.switch_radius {
        series_scalars(r, params)
    } else {
        closed_form_scalars(r, params)
    }
}

pub fn kernel_scalars(r: f64, params: &KernelParams) -> Result<KernelScalars> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain {
            op: "kernel::kernel_scalars",
            msg: format!("distance must be finite and non-negative, got {r}"),
        });
    }
    Ok(scalars_unchecked(r, params))
}

/// Velocity Green tensor `G(x) = A 𝟙 + B x̂⊗x̂`.
pub fn oseen_hyper(x: &Vector3<f64>, params: &KernelParams) -> Matrix3<f64> {
    let r = x.norm();
    let s = scalars_unchecked(r, params);
    if r == 0.0 {
        return Matrix3::identity() * s.a;
    }
    let xh = x / r;
    Matrix3::identity() * s.a + xh * xh.transpose() * s.b
}

/// Pressure response `x / (4π|x|³)` to a unit point force.
pub fn pressure_kernel(x: &Vector3<f64>) -> Result<Vector3<f64>> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::Singular {
            op: "kernel::pressure_kernel",
            msg: "pressure kernel is singular at the source point".into(),
        });
    }
    Ok(x / (4.0 * PI * r * r * r))
}

// Spherical Bessel combinations used by the oracle.

fn odd_double_factorial(n: usize) -> f64 {
    (1..=n).step_by(2).map(|k| k as f64).product()
}

/// `Σ_k (−z²/2)^k / (k! (2n+2k+1)!!)`, so that `j_n(z) = zⁿ · series`.
fn bessel_series(n: usize, z: f64) -> f64 {
    let q = -0.5 * z * z;
    let mut term = 1.0 / odd_double_factorial(2 * n + 1);
    let mut sum = term;
    for k in 1..30 {
        term *= q / (k as f64 * (2 * n + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `j₀(z) − j₁(z)/z`, the angular average of the transverse projector.
fn transverse_weight(z: f64) -> f64 {
    if z < 1.0 {
        bessel_series(0, z) - bessel_series(1, z)
    } else {
        let (s, c) = z.sin_cos();
        s / z - s / (z * z * z) + c / (z * z)
    }
}

/// `j₂(z)`.
fn dyadic_weight(z: f64) -> f64 {
    if z < 1.0 {
        z * z * bessel_series(2, z)
    } else {
        let (s, c) = z.sin_cos();
        (3.0 / (z * z) - 1.0) * s / z - 3.0 * c / (z * z)
    }
}

struct OracleSums {
    a: f64,
    b: f64,
}

/// `∫₀^∞ w(tR)/(1+t²) dt` for both weights at once, using `n`-point
/// Gauss–Legendre panels and an averaged alternating tail.
fn oracle_integrals(big_r: f64, n: usize) -> (OracleSums, f64) {
    let (gx, gw) = gauss_legendre(n);
    let integrand = |t: f64| {
        let z = t * big_r;
        let d = 1.0 / (1.0 + t * t);
        (transverse_weight(z) * d, dyadic_weight(z) * d)
    };
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let panel = |a: f64, b: f64, sa: &mut f64, sb: &mut f64| {
        for (t, w) in mapped(&gx, &gw, a, b) {
            let (fa, fb) = integrand(t);
            *sa += w * fa;
            *sb += w * fb;
        }
    };

    // Graded panels over the non-asymptotic range.
    let half_period = PI / big_r;
    let t_far = (60.0 / big_r).max(60.0);
    let mut t = 0.0;
    while t < t_far {
        let width = (0.25 * t.max(1.0)).min(0.5 * half_period);
        let next = (t + width).min(t_far);
        panel(t, next, &mut sum_a, &mut sum_b);
        t = next;
    }

    // Tail: half-period contributions alternate in sign; repeated
    // averaging of the partial sums removes the oscillation.
    const TAIL_TERMS: usize = 48;
    let mut partial_a = Vec::with_capacity(TAIL_TERMS + 1);
    let mut partial_b = Vec::with_capacity(TAIL_TERMS + 1);
    partial_a.push(sum_a);
    partial_b.push(sum_b);
    for _ in 0..TAIL_TERMS {
        let next = t + half_period;
        // sub-panels keep the rule resolved when the half period is long
        let pieces = (half_period / (0.25 * t)).ceil().max(1.0) as usize;
        for p in 0..pieces {
            let a = t + half_period * p as f64 / pieces as f64;
            let b = t + half_period * (p + 1) as f64 / pieces as f64;
            panel(a, b, &mut sum_a, &mut sum_b);
        }
        t = next;
        partial_a.push(sum_a);
        partial_b.push(sum_b);
    }
    let (a, err_a) = averaged_limit(partial_a);
    let (b, err_b) = averaged_limit(partial_b);
    (OracleSums { a, b }, err_a.max(err_b))
}

fn averaged_limit(mut s: Vec<f64>) -> (f64, f64) {
    let mut last_change = f64::INFINITY;
    while s.len() > 1 {
        let next: Vec<f64> = s.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if next.len() == 1 {
            last_change = (next[0] - s[s.len() - 1]).abs().min((next[0] - s[0]).abs());
        }
        s = next;
    }
    (s[0], last_change)
}

/// Oracle for [`kernel_scalars`]: inverse transform of the projected
/// resolvent, reduced to radial integrals
///
/// ```text
/// A(r) = 1/(2π²μℓ) ∫₀^∞ [j₀(tR) − j₁(tR)/(tR)] / (1+t²) dt
/// B(r) = 1/(2π²μℓ) ∫₀^∞  j₂(tR)                 / (1+t²) dt
/// ```
///
/// evaluated by composite Gauss–Legendre quadrature at two orders; the
/// difference between them (plus the tail-averaging change) is the error
/// estimate checked against `1e-9`.
pub fn fourier_oracle(r: f64, params: &KernelParams) -> Result<KernelScalars> {
    const OP: &str = "kernel::fourier_oracle";
    const TARGET: f64 = 1e-9;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain {
            op: OP,
            msg: format!("distance must be finite and non-negative, got {r}"),
        });
    }
    let prefactor = 1.0 / (2.0 * PI * PI * params.mu * params.ell);
    let big_r = r / params.ell;
    if big_r == 0.0 {
        // t = tan θ turns the measure dt/(1+t²) into dθ on [0, π/2].
        let (gx, gw) = gauss_legendre(16);
        let integral: f64 = mapped(&gx, &gw, 0.0, 0.5 * PI)
            .map(|(_, w)| w * transverse_weight(0.0))
            .sum();
        return Ok(KernelScalars {
            a: prefactor * integral,
            b: 0.0,
        });
    }
    let (coarse, err_coarse) = oracle_integrals(big_r, 20);
    let (fine, err_fine) = oracle_integrals(big_r, 30);
    let achieved = prefactor
        * ((fine.a - coarse.a).abs())
            .max((fine.b - coarse.b).abs())
            .max(err_coarse)
            .max(err_fine);
    if !(achieved <= TARGET) {
        return Err(Error::Oracle {
            op: OP,
            achieved,
            target: TARGET,
        });
    }
    Ok(KernelScalars {
        a: prefactor * fine.a,
        b: prefactor * fine.b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(ell: f64) -> KernelParams {
        KernelParams::new(ell)
    }

    #[test]
    fn value_at_origin() {
        for ell in [0.01, 0.3, 1.0, 7.0] {
            let s = kernel_scalars(0.0, &p(ell)).unwrap();
            assert!((s.a - 1.0 / (6.0 * PI * ell)).abs() < 1e-14 / ell);
            assert_eq!(s.b, 0.0);
            let g = oseen_hyper(&Vector3::zeros(), &p(ell));
            assert_eq!(g, Matrix3::identity() * s.a);
        }
    }

    #[test]
    fn branches_agree_at_switch() {
        for ell in [0.1, 1.0, 3.0] {
            let params = p(ell);
            let r = params.switch_radius;
            let c = closed_form_scalars(r, &params);
            let s = series_scalars(r, &params);
            // absolute agreement, in units where ℓ = μ = 1
            assert!(
                (c.a - s.a).abs() * ell <= 1e-12,
                "ell={ell} {} {}",
                c.a,
                s.a
            );
            assert!(
                (c.b - s.b).abs() * ell <= 1e-12,
                "ell={ell} {} {}",
                c.b,
                s.b
            );
        }
    }

    #[test]
    fn far_field_is_stokeslet_plus_dipole() {
        let params = p(1.0);
        let r = 100.0;
        let s = kernel_scalars(r, &params).unwrap();
        let stokeslet = 1.0 / (8.0 * PI * r);
        assert!((s.a - stokeslet * (1.0 + 2.0 / (r * r))).abs() <= 1e-14 * stokeslet);
        assert!((s.b - stokeslet * (1.0 - 6.0 / (r * r))).abs() <= 1e-14 * stokeslet);
        // the dipole part decays algebraically, the rest exponentially
        for r in [5.0, 8.0, 12.0, 20.0] {
            let s = kernel_scalars(r, &params).unwrap();
            let stokeslet = 1.0 / (8.0 * PI * r);
            let rem = s.a - stokeslet * (1.0 + 2.0 / (r * r));
            assert!(
                rem.abs() <= 3.0 * (-r).exp() / (8.0 * PI * r),
                "r={r} rem={rem}"
            );
        }
    }

    #[test]
    fn tensor_symmetric_and_even() {
        let params = p(0.5);
        let x = Vector3::new(0.3, -0.7, 0.2);
        let g = oseen_hyper(&x, &params);
        assert_eq!(g, g.transpose());
        assert_eq!(g, oseen_hyper(&-x, &params));
        let s = kernel_scalars(x.norm(), &params).unwrap();
        assert!((g.trace() - (3.0 * s.a + s.b)).abs() < 1e-15);
    }

    #[test]
    fn divergence_free() {
        let params = p(1.0);
        let x0 = Vector3::new(1.0, 0.0, 0.0);
        let h = params.ell / 100.0;
        for row in 0..3 {
            let mut div = 0.0;
            for j in 0..3 {
                let mut e = Vector3::zeros();
                e[j] = h;
                let gp = oseen_hyper(&(x0 + e), &params);
                let gm = oseen_hyper(&(x0 - e), &params);
                div += (gp[(row, j)] - gm[(row, j)]) / (2.0 * h);
            }
            assert!(div.abs() < 1e-6, "row {row}: {div}");
        }
        // also off-axis and inside the series branch
        let x0 = Vector3::new(0.004, 0.003, -0.001);
        let h = 1e-4;
        for row in 0..3 {
            let mut div = 0.0;
            for j in 0..3 {
                let mut e = Vector3::zeros();
                e[j] = h;
                div += (oseen_hyper(&(x0 + e), &params)[(row, j)]
                    - oseen_hyper(&(x0 - e), &params)[(row, j)])
                    / (2.0 * h);
            }
            assert!(div.abs() < 1e-6, "row {row}: {div}");
        }
    }

    #[test]
    fn negative_distance_is_domain_error() {
        assert!(matches!(
            kernel_scalars(-1.0, &p(1.0)),
            Err(Error::Domain { .. })
        ));
        assert!(kernel_scalars(f64::NAN, &p(1.0)).is_err());
    }

    #[test]
    fn pressure() {
        let v = pressure_kernel(&Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((v.x - 1.0 / (4.0 * PI)).abs() < 1e-16 && v.y == 0.0 && v.z == 0.0);
        let x = Vector3::new(0.2, -1.1, 0.4);
        let p1 = pressure_kernel(&x).unwrap();
        assert_eq!(pressure_kernel(&-x).unwrap(), -p1);
        assert!((p1.norm() - 1.0 / (4.0 * PI * x.norm_squared())).abs() < 1e-15);
        assert!(matches!(
            pressure_kernel(&Vector3::zeros()),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(p(1.0).validate().is_ok());
        assert!(p(0.0).validate().is_err());
        assert!(p(1.0).with_mu(-1.0).validate().is_err());
    }

    #[test]
    fn oracle_at_origin() {
        let s = fourier_oracle(0.0, &p(1.0)).unwrap();
        assert!((s.a - 1.0 / (6.0 * PI)).abs() < 1e-9);
        assert_eq!(s.b, 0.0);
    }

    #[test]
    fn oracle_matches_closed_form_at_ell() {
        let params = p(1.0);
        let o = fourier_oracle(1.0, &params).unwrap();
        let c = kernel_scalars(1.0, &params).unwrap();
        assert!((o.a - c.a).abs() < 1e-8 * c.a);
        assert!((o.b - c.b).abs() < 1e-8 * c.b);
        // high-precision reference for R = 1 (independent quadrature)
        assert!((c.a - 0.031_541_460_032_442_76).abs() < 1e-15);
        assert!((c.b - 0.005_980_731_470_247_893).abs() < 1e-15);
    }

    #[test]
    fn oracle_scales_like_inverse_ell_at_large_ell() {
        let r = 1.0;
        let a10 = fourier_oracle(r, &p(10.0)).unwrap().a;
        let a100 = fourier_oracle(r, &p(100.0)).unwrap().a;
        assert!((a10 * 6.0 * PI * 10.0 - 1.0).abs() < 0.1);
        assert!((a100 * 6.0 * PI * 100.0 - 1.0).abs() < 0.01);
        assert!((a10 / a100 / 10.0 - 1.0).abs() < 0.1);
    }
}
