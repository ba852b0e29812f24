//! Steady free fall at low Reynolds number.
//!
//! With `ω = λg`, the force and torque balances reduce to
//!
//! ```text
//! ξ  = K_tt⁻¹ (m_e g − λ K_tr g)
//! F g = λ g,   F = (K_rt K_tt⁻¹ K_tr − K_rr)⁻¹ (m_e K_rt K_tt⁻¹ + m_c [r×])
//! ```
//!
//! so every real eigenpair of the 3×3 fall operator `F` is a steady state.
//! A real 3×3 matrix always has at least one.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MassProperties;
use crate::mobility::ResistanceSet;

/// Relative size below which a singular value of the Schur factor counts
/// as a null direction.
const DEGENERACY_TOL: f64 = 1e-10;
/// `F` is flushed to zero when smaller than this fraction of the natural
/// spin scale (mirror-symmetric bodies, where it is pure round-off).
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallOperator {
    /// The fall operator `F`.
    pub matrix: Matrix3<f64>,
    /// `K_rt K_tt⁻¹ K_tr − K_rr`.
    pub schur: Matrix3<f64>,
    /// `m_e K_rt K_tt⁻¹ + m_c [r×]`.
    pub load: Matrix3<f64>,
    pub schur_min_singular: f64,
    /// Set when the Schur factor has a null direction (straight bodies).
    pub degenerate: bool,
    pub null_axis: Option<Vector3<f64>>,
    /// `‖F‖` before the symmetry flush.
    pub raw_norm: f64,
    /// Natural spin scale `max(|m_e|, m_c|r|/Λ) / (‖K_tt‖ Λ)`.
    pub spin_scale: f64,
}

fn k_tt_inverse(r: &ResistanceSet, op: &'static str) -> Result<Matrix3<f64>> {
    r.k_tt
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Solver {
            op,
            msg: "K_tt is not positive definite".into(),
            condition: f64::INFINITY,
        })
}

pub fn fall_operator(r: &ResistanceSet, mp: &MassProperties) -> Result<FallOperator> {
    const OP: &str = "freefall::fall_operator";
    let k_inv = k_tt_inverse(r, OP)?;
    let schur = r.k_rt * k_inv * r.k_tr - r.k_rr;
    let schur = (schur + schur.transpose()) * 0.5;
    let load = r.k_rt * k_inv * mp.effective_mass
        + mp.centroid_offset.cross_matrix() * mp.complementary_mass;

    let k_rr_norm = r.k_rr.norm();
    let eig = SymmetricEigen::new(schur);
    let schur_min_singular = eig.eigenvalues.amin();
    let null: Vec<usize> = (0..3)
        .filter(|&i| eig.eigenvalues[i].abs() < DEGENERACY_TOL * k_rr_norm)
        .collect();

    let (matrix, degenerate, null_axis) = match null.len() {
        0 => {
            let inv = schur.try_inverse().ok_or_else(|| Error::Solver {
                op: OP,
                msg: "Schur factor is singular".into(),
                condition: f64::INFINITY,
            })?;
            (inv * load, false, None)
        }
        1 => {
            let axis: Vector3<f64> = eig.eigenvectors.column(null[0]).into_owned();
            let leak = (axis.transpose() * load).norm();
            if leak > 1e-8 * load.norm().max(f64::MIN_POSITIVE) && leak > 0.0 {
                return Err(Error::Degeneracy {
                    op: OP,
                    axis: axis.into(),
                    msg: format!("load has a component {leak:.3e} along the null direction of the Schur factor"),
                });
            }
            let mut pinv = Matrix3::zeros();
            for i in (0..3).filter(|i| *i != null[0]) {
                let v = eig.eigenvectors.column(i);
                pinv += v * v.transpose() / eig.eigenvalues[i];
            }
            (pinv * load, true, Some(sign_convention(axis)))
        }
        _ => {
            let axis: Vector3<f64> = eig.eigenvectors.column(null[0]).into_owned();
            return Err(Error::Degeneracy {
                op: OP,
                axis: axis.into(),
                msg: format!("Schur factor has {} null directions", null.len()),
            });
        }
    };

    let length = r.meta.length;
    let spin_scale = mp
        .effective_mass
        .abs()
        .max(mp.complementary_mass * mp.centroid_offset.norm() / length)
        / (r.k_tt.norm() * length);
    let raw_norm = matrix.norm();
    let matrix = if raw_norm <= SYMMETRY_TOL * spin_scale {
        Matrix3::zeros()
    } else {
        matrix
    };
    Ok(FallOperator {
        matrix,
        schur,
        load,
        schur_min_singular,
        degenerate,
        null_axis,
        raw_norm,
        spin_scale,
    })
}

/// First component with magnitude above `1e-8` is made positive.
pub fn sign_convention(v: Vector3<f64>) -> Vector3<f64> {
    match v.iter().find(|c| c.abs() > 1e-8) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// A real eigenvalue with its (geometric) eigenspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Algebraic multiplicity.
    pub multiplicity: usize,
    /// Orthonormal basis of the eigenspace.
    pub basis: Vec<Vector3<f64>>,
}

/// Real roots of `λ³ + c₂λ² + c₁λ + c₀`, sorted, each with its multiplicity.
fn cubic_real_roots(c2: f64, c1: f64, c0: f64, cluster_tol: f64) -> Vec<(f64, usize)> {
    let shift = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    let mut roots: Vec<f64> = Vec::with_capacity(3);
    if p == 0.0 && q == 0.0 {
        roots.extend([0.0, 0.0, 0.0]);
    } else if disc > 0.0 {
        let sq = disc.sqrt();
        let u = (-q / 2.0 - q.signum() * sq).cbrt();
        let v = if u != 0.0 { -p / (3.0 * u) } else { 0.0 };
        let y = u + v;
        roots.push(y);
        // complex pair −y/2 ± i(√3/2)(u − v); keep it when it is real to tolerance
        let imag = 0.5 * 3f64.sqrt() * (u - v).abs();
        if imag <= cluster_tol {
            roots.extend([-y / 2.0, -y / 2.0]);
        }
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = if p != 0.0 {
            (3.0 * q / (p * m)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let theta = arg.acos() / 3.0;
        for k in 0..3 {
            roots.push(m * (theta - 2.0 * PI * k as f64 / 3.0).cos());
        }
    }
    let poly = |x: f64| ((x + c2) * x + c1) * x + c0;
    let dpoly = |x: f64| (3.0 * x + 2.0 * c2) * x + c1;
    let mut polished: Vec<f64> = roots
        .into_iter()
        .map(|y| {
            let mut x = y - shift;
            // one Newton step, kept only if it improves the residual
            let d = dpoly(x);
            if d != 0.0 {
                let cand = x - poly(x) / d;
                if poly(cand).abs() < poly(x).abs() {
                    x = cand;
                }
            }
            x
        })
        .collect();
    polished.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut out: Vec<(f64, usize)> = Vec::new();
    for x in polished {
        match out.last_mut() {
            Some((v, k)) if (x - *v).abs() <= cluster_tol => {
                *v = (*v * *k as f64 + x) / (*k as f64 + 1.0);
                *k += 1;
            }
            _ => out.push((x, 1)),
        }
    }
    out
}

/// Orthonormal eigenbasis of `F` for `λ`, at most `max_dim` vectors.
fn eigenspace(f: &Matrix3<f64>, lambda: f64, max_dim: usize, tol: f64) -> Vec<Vector3<f64>> {
    let m = f - Matrix3::identity() * lambda;
    if m.amax() <= tol && max_dim == 3 {
        return vec![Vector3::x(), Vector3::y(), Vector3::z()];
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[a]
            .partial_cmp(&svd.singular_values[b])
            .unwrap()
    });
    let null_dim = order
        .iter()
        .filter(|&&i| svd.singular_values[i] <= tol)
        .count()
        .clamp(1, max_dim);
    let null: Vec<Vector3<f64>> = order[..null_dim]
        .iter()
        .map(|&i| v_t.row(i).transpose().into_owned())
        .collect();
    match null.len() {
        1 => vec![sign_convention(null[0].normalize())],
        2 => {
            // deterministic basis: project the canonical axes onto the plane
            let normal = v_t.row(order[2]).transpose().into_owned().normalize();
            let mut candidates: Vec<Vector3<f64>> = [Vector3::x(), Vector3::y(), Vector3::z()]
                .iter()
                .map(|e| e - normal * normal.dot(e))
                .collect();
            candidates.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
            let first = candidates[0].normalize();
            let second = candidates[1] - first * first.dot(&candidates[1]);
            let second = if second.norm() > 1e-8 {
                second.normalize()
            } else {
                normal.cross(&first).normalize()
            };
            vec![sign_convention(first), sign_convention(second)]
        }
        _ => vec![Vector3::x(), Vector3::y(), Vector3::z()],
    }
}

/// Real eigenpairs of a 3×3 matrix from the characteristic cubic.
pub fn real_eigenpairs(f: &Matrix3<f64>) -> Vec<EigenPair> {
    let norm = f.norm();
    if norm == 0.0 {
        return vec![EigenPair {
            lambda: 0.0,
            multiplicity: 3,
            basis: vec![Vector3::x(), Vector3::y(), Vector3::z()],
        }];
    }
    let trace = f.trace();
    let minors = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)] + f[(0, 0)] * f[(2, 2)]
        - f[(0, 2)] * f[(2, 0)]
        + f[(1, 1)] * f[(2, 2)]
        - f[(1, 2)] * f[(2, 1)];
    let det = f.determinant();
    let roots = cubic_real_roots(-trace, minors, -det, 1e-7 * norm);
    roots
        .into_iter()
        .map(|(lambda, multiplicity)| {
            let basis = eigenspace(f, lambda, multiplicity, 1e-7 * norm);
            EigenPair {
                lambda,
                multiplicity,
                basis,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub lambda: f64,
    /// Fall direction (first eigenspace basis vector).
    pub g: Vector3<f64>,
    /// Translational velocity of the center of mass.
    pub xi: Vector3<f64>,
    /// Spin `λ g`.
    pub omega: Vector3<f64>,
    pub multiplicity: usize,
    /// Every unit vector in this span is a steady fall direction.
    pub eigenspace: Vec<Vector3<f64>>,
    pub degenerate: bool,
    /// `‖F g − λ g‖`, maximized over the eigenspace basis.
    pub eigen_residual: f64,
    /// Force/torque balance residual, maximized over the eigenspace basis.
    pub momentum_residual: f64,
    /// Scale the momentum residual is compared against.
    pub residual_scale: f64,
}

/// Velocities of the steady state with spin rate `λ` falling along `g`.
pub fn state_velocities(
    r: &ResistanceSet,
    mp: &MassProperties,
    lambda: f64,
    g: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let k_inv = k_tt_inverse(r, "freefall::steady_states")?;
    let omega = g * lambda;
    let xi = k_inv * (g * mp.effective_mass - r.k_tr * omega);
    Ok((xi, omega))
}

/// Balance residual `max(‖m_e g + f‖, ‖m_c r×g − t‖)` with `(f, t)` from
/// the resistance relation.
pub fn residual(
    g: &Vector3<f64>,
    xi: &Vector3<f64>,
    omega: &Vector3<f64>,
    r: &ResistanceSet,
    mp: &MassProperties,
) -> f64 {
    let (f, t) = r.loads(xi, omega);
    let force = (g * mp.effective_mass + f).norm();
    let torque = (mp.centroid_offset.cross(g) * mp.complementary_mass - t).norm();
    force.max(torque)
}

pub fn residual_scale(
    xi: &Vector3<f64>,
    omega: &Vector3<f64>,
    r: &ResistanceSet,
    mp: &MassProperties,
) -> f64 {
    [
        mp.effective_mass.abs(),
        mp.complementary_mass * mp.centroid_offset.norm(),
        r.k_tt.norm() * xi.norm(),
        r.k_tr.norm() * omega.norm(),
        r.k_rr.norm() * omega.norm(),
    ]
    .into_iter()
    .fold(f64::MIN_POSITIVE, f64::max)
}

/// Every steady fall of the body. `(λ, −g)` with `(−ξ, −ω)` is also
/// steady; only the sign-normalized representative is listed.
pub fn steady_states(r: &ResistanceSet, mp: &MassProperties) -> Result<Vec<SteadyState>> {
    const OP: &str = "freefall::steady_states";
    let op = fall_operator(r, mp)?;
    let pairs = real_eigenpairs(&op.matrix);
    let f_norm = op.matrix.norm();
    let mut states = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut eigen_residual: f64 = 0.0;
        let mut momentum_residual: f64 = 0.0;
        let mut scale: f64 = f64::MIN_POSITIVE;
        let mut first = None;
        for g in &pair.basis {
            let (xi, omega) = state_velocities(r, mp, pair.lambda, g)?;
            eigen_residual = eigen_residual.max((op.matrix * g - g * pair.lambda).norm());
            momentum_residual = momentum_residual.max(residual(g, &xi, &omega, r, mp));
            scale = scale.max(residual_scale(&xi, &omega, r, mp));
            first.get_or_insert((*g, xi, omega));
        }
        let limit = 1e-8 * scale;
        if momentum_residual > limit {
            return Err(Error::Consistency {
                op: OP,
                residual: momentum_residual,
                limit,
            });
        }
        if eigen_residual > 1e-10 * (1.0 + f_norm) {
            return Err(Error::Consistency {
                op: OP,
                residual: eigen_residual,
                limit: 1e-10 * (1.0 + f_norm),
            });
        }
        let (g, xi, omega) = first.expect("eigenspace is never empty");
        states.push(SteadyState {
            lambda: pair.lambda,
            g,
            xi,
            omega,
            multiplicity: pair.multiplicity,
            eigenspace: pair.basis,
            degenerate: op.degenerate,
            eigen_residual,
            momentum_residual,
            residual_scale: scale,
        });
    }
    Ok(states)
}
