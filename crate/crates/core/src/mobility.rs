//! Adherence problem on the curve, hydrodynamic loads and the grand
//! resistance matrix.
//!
//! The disturbance velocity is written as a single layer over the curve,
//! `u(x) = Σ_q w_q G(x − x_q) φ_q`, and collocated at the quadrature
//! nodes (Nyström). Because the hyperviscous kernel is bounded, the
//! diagonal blocks are simply `w_q G(0)`. Loads on the body follow from
//! the line-force density: `f = −Σ w_q φ_q`, `t = −Σ w_q x_q × φ_q`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3, Vector6, LU};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::DiscreteBody;
use crate::kernel::{oseen_hyper, pressure_kernel, KernelParams};

/// Force per unit length exerted by the body on the fluid, one vector per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineForceDensity(pub Vec<Vector3<f64>>);

impl LineForceDensity {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Vector3::zeros(); n])
    }

    fn from_vector(v: &DVector<f64>) -> Self {
        Self(
            (0..v.len() / 3)
                .map(|q| Vector3::new(v[3 * q], v[3 * q + 1], v[3 * q + 2]))
                .collect(),
        )
    }
}

/// Hydrodynamic force and torque (about the center of mass) on the body.
pub fn loads(body: &DiscreteBody, density: &LineForceDensity) -> (Vector3<f64>, Vector3<f64>) {
    let mut force = Vector3::zeros();
    let mut torque = Vector3::zeros();
    for ((x, w), phi) in body.positions.iter().zip(&body.weights).zip(&density.0) {
        force -= phi * *w;
        torque -= x.cross(phi) * *w;
    }
    (force, torque)
}

fn check_nodes(body: &DiscreteBody) -> Result<()> {
    const OP: &str = "mobility::assemble_system";
    if body.is_empty() {
        return Err(Error::Solver {
            op: OP,
            msg: "body has no nodes".into(),
            condition: f64::INFINITY,
        });
    }
    let n = body.len();
    for p in 0..n {
        for q in (p + 1)..n {
            if body.positions[p] == body.positions[q] {
                return Err(Error::Solver {
                    op: OP,
                    msg: format!("nodes {p} and {q} coincide; collocation matrix is singular"),
                    condition: f64::INFINITY,
                });
            }
        }
    }
    Ok(())
}

/// Dense `3N × 3N` Nyström matrix with block `(p, q) = w_q G(x_p − x_q)`.
pub fn assemble_system(body: &DiscreteBody, params: &KernelParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    check_nodes(body)?;
    let n = body.len();
    let mut m = DMatrix::<f64>::zeros(3 * n, 3 * n);
    let fill_columns = |q: usize, cols: &mut [f64]| {
        // column-major: three consecutive columns of node q
        let xq = body.positions[q];
        let wq = body.weights[q];
        for (p, xp) in body.positions.iter().enumerate() {
            let g = oseen_hyper(&(xp - xq), params) * wq;
            for j in 0..3 {
                for i in 0..3 {
                    cols[j * 3 * n + 3 * p + i] = g[(i, j)];
                }
            }
        }
    };
    let data = m.as_mut_slice();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(9 * n)
            .enumerate()
            .for_each(|(q, cols)| fill_columns(q, cols));
    }
    #[cfg(not(feature = "parallel"))]
    for (q, cols) in data.chunks_mut(9 * n).enumerate() {
        fill_columns(q, cols);
    }
    Ok(m)
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn rigid_data(body: &DiscreteBody, xi: &Vector3<f64>, omega: &Vector3<f64>) -> DVector<f64> {
    let mut u = DVector::zeros(3 * body.len());
    for (q, x) in body.positions.iter().enumerate() {
        let v = xi + omega.cross(x);
        u.fixed_rows_mut::<3>(3 * q).copy_from(&v);
    }
    u
}

/// Factorized Nyström system for one body.
pub struct RigidSolver<'a> {
    body: &'a DiscreteBody,
    matrix: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

/// Result of one prescribed-motion solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidSolution {
    pub density: LineForceDensity,
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl<'a> RigidSolver<'a> {
    pub fn new(body: &'a DiscreteBody, params: &KernelParams) -> Result<Self> {
        let matrix = assemble_system(body, params)?;
        let lu = matrix.clone().lu();
        let mut solver = Self {
            body,
            matrix,
            lu,
            condition: f64::INFINITY,
        };
        solver.condition = solver.estimate_condition();
        if !(solver.condition < 1e15) {
            return Err(Error::Solver {
                op: "mobility::solve_rigid_problem",
                msg: "Nyström matrix is numerically singular".into(),
                condition: solver.condition,
            });
        }
        Ok(solver)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// 1-norm condition estimate (Hager's method).
    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    fn weight_diag(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.body.len(),
            self.body.weights.iter().flat_map(|&w| [w, w, w]),
        )
    }

    fn estimate_condition(&self) -> f64 {
        let n = self.matrix.nrows();
        let norm1 = self
            .matrix
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let w = self.weight_diag();
        // M = G̃W with G̃ symmetric, so Mᵀy = b  ⇔  y = W M⁻¹ W⁻¹ b.
        let solve_t = |b: &DVector<f64>| -> Option<DVector<f64>> {
            let z = self.lu.solve(&b.component_div(&w))?;
            Some(z.component_mul(&w))
        };
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut estimate = 0.0;
        for _ in 0..5 {
            let Some(y) = self.lu.solve(&x) else {
                return f64::INFINITY;
            };
            if !y.iter().all(|v| v.is_finite()) {
                return f64::INFINITY;
            }
            estimate = y.iter().map(|v| v.abs()).sum::<f64>();
            let sign = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let Some(z) = solve_t(&sign) else {
                return f64::INFINITY;
            };
            let j = z.iamax();
            if z[j].abs() <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        norm1 * estimate
    }

    fn solve_columns(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let sol = self.lu.solve(rhs).ok_or_else(|| Error::Solver {
            op: "mobility::solve_rigid_problem",
            msg: "LU factorization is singular".into(),
            condition: self.condition,
        })?;
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(Error::Solver {
                op: "mobility::solve_rigid_problem",
                msg: "non-finite density".into(),
                condition: self.condition,
            });
        }
        Ok(sol)
    }

    /// Density and loads for the rigid motion `ξ + ω × x`.
    pub fn solve(&self, xi: &Vector3<f64>, omega: &Vector3<f64>) -> Result<RigidSolution> {
        if !(xi.iter().chain(omega.iter()).all(|v| v.is_finite())) {
            return Err(Error::Domain {
                op: "mobility::solve_rigid_problem",
                msg: "rigid velocities must be finite".into(),
            });
        }
        let data = rigid_data(self.body, xi, omega);
        let scale = xi.norm().max(omega.norm() * self.body.length);
        let density = if data.amax() <= 1e-12 * scale || scale == 0.0 {
            // no boundary data: axial spin of a straight body, or rest
            LineForceDensity::zeros(self.body.len())
        } else {
            let rhs = DMatrix::from_column_slice(data.len(), 1, data.as_slice());
            let sol = self.solve_columns(&rhs)?;
            LineForceDensity::from_vector(&sol.column(0).into_owned())
        };
        let (force, torque) = loads(self.body, &density);
        Ok(RigidSolution {
            density,
            force,
            torque,
        })
    }

    /// The six unit solves `h⁽ⁱ⁾` (translations) and `H⁽ⁱ⁾` (rotations).
    fn unit_densities(&self) -> Result<Vec<LineForceDensity>> {
        let n = self.body.len();
        let mut rhs = DMatrix::zeros(3 * n, 6);
        let mut null = [false; 6];
        for k in 0..6 {
            let mut e = Vector3::zeros();
            e[k % 3] = 1.0;
            let (xi, omega) = if k < 3 {
                (e, Vector3::zeros())
            } else {
                (Vector3::zeros(), e)
            };
            let data = rigid_data(self.body, &xi, &omega);
            if data.amax() <= 1e-12 * self.body.length.max(1.0) {
                null[k] = true;
            }
            rhs.set_column(k, &data);
        }
        let sol = self.solve_columns(&rhs)?;
        Ok((0..6)
            .map(|k| {
                if null[k] {
                    LineForceDensity::zeros(n)
                } else {
                    LineForceDensity::from_vector(&sol.column(k).into_owned())
                }
            })
            .collect())
    }
}

pub fn solve_rigid_problem(
    body: &DiscreteBody,
    params: &KernelParams,
    xi: &Vector3<f64>,
    omega: &Vector3<f64>,
) -> Result<RigidSolution> {
    RigidSolver::new(body, params)?.solve(xi, omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceMeta {
    pub ell: f64,
    pub mu: f64,
    pub nodes: usize,
    /// Arc length of the body.
    pub length: f64,
    pub shape_hash: String,
    /// `‖A₆ − A₆ᵀ‖ / ‖A₆‖` before symmetrization.
    pub asymmetry: f64,
    pub condition_estimate: f64,
}

/// Blocks of the grand resistance matrix, defined by
/// `f = −(K_tt ξ + K_tr ω)`, `t = −(K_rt ξ + K_rr ω)` with torque and
/// rotation about the center of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceSet {
    #[serde(with = "rows3")]
    pub k_tt: Matrix3<f64>,
    #[serde(with = "rows3")]
    pub k_tr: Matrix3<f64>,
    #[serde(with = "rows3")]
    pub k_rt: Matrix3<f64>,
    #[serde(with = "rows3")]
    pub k_rr: Matrix3<f64>,
    #[serde(with = "rows6")]
    pub grand: Matrix6<f64>,
    pub meta: ResistanceMeta,
}

impl ResistanceSet {
    pub fn from_grand(grand: Matrix6<f64>, meta: ResistanceMeta) -> Self {
        Self {
            k_tt: grand.fixed_view::<3, 3>(0, 0).into_owned(),
            k_tr: grand.fixed_view::<3, 3>(0, 3).into_owned(),
            k_rt: grand.fixed_view::<3, 3>(3, 0).into_owned(),
            k_rr: grand.fixed_view::<3, 3>(3, 3).into_owned(),
            grand,
            meta,
        }
    }

    /// `(f, t)` for the rigid velocities `(ξ, ω)`.
    pub fn loads(&self, xi: &Vector3<f64>, omega: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (
            -(self.k_tt * xi + self.k_tr * omega),
            -(self.k_rt * xi + self.k_rr * omega),
        )
    }
}

fn shape_hash(body: &DiscreteBody) -> String {
    let mut h = Sha256::new();
    for (x, w) in body.positions.iter().zip(&body.weights) {
        for v in x.iter().chain(std::iter::once(w)) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(&h.finalize()[..8])
}

pub fn resistance_set(body: &DiscreteBody, params: &KernelParams) -> Result<ResistanceSet> {
    let solver = RigidSolver::new(body, params)?;
    let units = solver.unit_densities()?;
    let mut grand = Matrix6::zeros();
    for (k, density) in units.iter().enumerate() {
        let (force, torque) = loads(body, density);
        // column k holds −(f, t) for unit motion k
        grand.fixed_view_mut::<3, 1>(0, k).copy_from(&-force);
        grand.fixed_view_mut::<3, 1>(3, k).copy_from(&-torque);
    }
    let norm = grand.norm();
    let asymmetry = if norm > 0.0 {
        (grand - grand.transpose()).norm() / norm
    } else {
        0.0
    };
    if asymmetry > 1e-6 {
        return Err(Error::Convergence {
            op: "mobility::resistance_set",
            msg: format!("grand resistance matrix asymmetry {asymmetry:.3e} exceeds 1e-6; refine the discretization"),
        });
    }
    let grand = (grand + grand.transpose()) * 0.5;
    Ok(ResistanceSet::from_grand(
        grand,
        ResistanceMeta {
            ell: params.ell,
            mu: params.mu,
            nodes: body.len(),
            length: body.length,
            shape_hash: shape_hash(body),
            asymmetry,
            condition_estimate: solver.condition_estimate(),
        },
    ))
}

/// Velocity `u(x) = Σ w_q G(x − x_q) φ_q`.
pub fn evaluate_velocity(
    body: &DiscreteBody,
    density: &LineForceDensity,
    params: &KernelParams,
    x: &Vector3<f64>,
) -> Vector3<f64> {
    body.positions
        .iter()
        .zip(&body.weights)
        .zip(&density.0)
        .map(|((xq, w), phi)| oseen_hyper(&(x - xq), params) * phi * *w)
        .sum()
}

/// Velocity and pressure at a field point.
pub fn evaluate_flow(
    body: &DiscreteBody,
    density: &LineForceDensity,
    params: &KernelParams,
    x: &Vector3<f64>,
) -> Result<(Vector3<f64>, f64)> {
    let mut p = 0.0;
    for ((xq, w), phi) in body.positions.iter().zip(&body.weights).zip(&density.0) {
        let kern = pressure_kernel(&(x - xq)).map_err(|_| Error::Singular {
            op: "mobility::evaluate_flow",
            msg: "pressure requested at a collocation node".into(),
        })?;
        p += w * kern.dot(phi);
    }
    Ok((evaluate_velocity(body, density, params, x), p))
}

/// Dissipation rate `ζᵀ A₆ ζ` for `ζ = (ξ, ω)`.
pub fn energy_dissipation(zeta: &Vector6<f64>, r: &ResistanceSet) -> f64 {
    zeta.dot(&(r.grand * zeta))
}

mod rows3 {
    use nalgebra::Matrix3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix3<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix3<f64>, D::Error> {
        let rows = <[[f64; 3]; 3]>::deserialize(d)?;
        Ok(Matrix3::from_fn(|i, j| rows[i][j]))
    }
}

mod rows6 {
    use nalgebra::Matrix6;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix6<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: [[f64; 6]; 6] = std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix6<f64>, D::Error> {
        let rows = <[[f64; 6]; 6]>::deserialize(d)?;
        Ok(Matrix6::from_fn(|i, j| rows[i][j]))
    }
}
