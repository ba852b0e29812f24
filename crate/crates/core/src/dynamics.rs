//! Quasi-steady sedimentation in the co-moving frame.
//!
//! Rigid-body inertia evolves in time while the hydrodynamic loads come
//! from the steady resistance relation:
//!
//! ```text
//! m dξ/dt = m_e G + f − Re m ω×ξ
//! J dω/dt = −m_c r×G + t − Re ω×(Jω)
//! dG/dt   = Re G×ω
//! dQ/dt   = Re Q[ω×],   dc/dt = Re Q ξ
//! ```
//!
//! Straight bodies have a null direction of `J`. The spin along it is
//! dynamically indeterminate and is held at its initial value.

use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freefall::{residual, state_velocities, SteadyState};
use crate::geometry::MassProperties;
use crate::mobility::ResistanceSet;

const BLOW_UP: f64 = 1e12;
/// Relative eigenvalue of `J` below which a direction counts as null.
const INERTIA_NULL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallState {
    pub t: f64,
    pub xi: Vector3<f64>,
    pub omega: Vector3<f64>,
    /// Gravity direction in the body frame.
    pub gravity: Vector3<f64>,
    pub orientation: Matrix3<f64>,
    /// Center of mass in the lab frame.
    pub position: Vector3<f64>,
}

impl FallState {
    /// Released from rest with the body frame aligned to the lab frame.
    pub fn at_rest(gravity: Vector3<f64>) -> Self {
        Self {
            t: 0.0,
            xi: Vector3::zeros(),
            omega: Vector3::zeros(),
            gravity,
            orientation: Matrix3::identity(),
            position: Vector3::zeros(),
        }
    }

    /// Sitting on a steady state, lab frame aligned with the body frame.
    pub fn from_steady(state: &SteadyState) -> Self {
        Self {
            xi: state.xi,
            omega: state.omega,
            ..Self::at_rest(state.g)
        }
    }

    fn is_finite(&self) -> bool {
        self.xi
            .iter()
            .chain(self.omega.iter())
            .chain(self.position.iter())
            .all(|v| v.is_finite())
            && self.gravity.iter().all(|v| v.is_finite())
            && self.orientation.iter().all(|v| v.is_finite())
    }

    fn magnitude(&self) -> f64 {
        self.xi
            .amax()
            .max(self.omega.amax())
            .max(self.position.amax())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub reynolds: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Halt once within this distance of a steady state. Zero disables it.
    #[serde(default)]
    pub steady_tol: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "dynamics::integrate";
        let bad = |msg: String| Err(Error::config(OP, msg));
        if !(self.reynolds.is_finite() && self.reynolds >= 0.0) {
            return bad(format!(
                "Reynolds number must be finite and >= 0, got {}",
                self.reynolds
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("time step must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("end time must be positive, got {}", self.t_end));
        }
        if !(self.steady_tol.is_finite() && self.steady_tol >= 0.0) {
            return bad(format!(
                "steady tolerance must be >= 0, got {}",
                self.steady_tol
            ));
        }
        if self.output_stride == 0 {
            return bad("output stride must be at least 1".into());
        }
        Ok(())
    }
}

/// Time derivative of a [`FallState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub xi: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub gravity: Vector3<f64>,
    pub orientation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

/// The quasi-steady equations of motion for one body.
#[derive(Debug, Clone)]
pub struct QuasiSteady<'a> {
    resistance: &'a ResistanceSet,
    mass: &'a MassProperties,
    reynolds: f64,
    inertia_pinv: Matrix3<f64>,
}

impl<'a> QuasiSteady<'a> {
    pub fn new(
        resistance: &'a ResistanceSet,
        mass: &'a MassProperties,
        reynolds: f64,
    ) -> Result<Self> {
        const OP: &str = "dynamics::rhs";
        if !(mass.mass.is_finite() && mass.mass > 0.0) {
            return Err(Error::MassModel {
                op: OP,
                msg: format!("mass must be positive, got {}", mass.mass),
            });
        }
        let eig = SymmetricEigen::new(mass.inertia);
        let top = eig.eigenvalues.amax();
        if !(top.is_finite() && top > 0.0) {
            return Err(Error::MassModel {
                op: OP,
                msg: "inertia tensor vanishes".into(),
            });
        }
        let mut pinv = Matrix3::zeros();
        let mut null = 0;
        for i in 0..3 {
            let lam = eig.eigenvalues[i];
            if lam < -INERTIA_NULL_TOL * top {
                return Err(Error::MassModel {
                    op: OP,
                    msg: format!("inertia tensor has negative eigenvalue {lam:.3e}"),
                });
            }
            if lam <= INERTIA_NULL_TOL * top {
                null += 1;
                continue;
            }
            let v = eig.eigenvectors.column(i);
            pinv += v * v.transpose() / lam;
        }
        if null > 1 {
            return Err(Error::MassModel {
                op: OP,
                msg: format!("inertia tensor is singular in {null} directions"),
            });
        }
        Ok(Self {
            resistance,
            mass,
            reynolds,
            inertia_pinv: pinv,
        })
    }

    pub fn rhs(&self, s: &FallState) -> Derivative {
        let mp = self.mass;
        let re = self.reynolds;
        let (f, t) = self.resistance.loads(&s.xi, &s.omega);
        let g = s.gravity;
        let dxi = (g * mp.effective_mass + f - s.omega.cross(&s.xi) * (re * mp.mass)) / mp.mass;
        let spin = mp.inertia * s.omega;
        let torque =
            -mp.centroid_offset.cross(&g) * mp.complementary_mass + t - s.omega.cross(&spin) * re;
        Derivative {
            xi: dxi,
            omega: self.inertia_pinv * torque,
            gravity: g.cross(&s.omega) * re,
            orientation: s.orientation * s.omega.cross_matrix() * re,
            position: s.orientation * s.xi * re,
        }
    }
}

/// Derivative of `s` under the quasi-steady equations.
pub fn rhs(
    s: &FallState,
    r: &ResistanceSet,
    mp: &MassProperties,
    reynolds: f64,
) -> Result<Derivative> {
    Ok(QuasiSteady::new(r, mp, reynolds)?.rhs(s))
}

fn advance(s: &FallState, d: &Derivative, h: f64) -> FallState {
    FallState {
        t: s.t + h,
        xi: s.xi + d.xi * h,
        omega: s.omega + d.omega * h,
        gravity: s.gravity + d.gravity * h,
        orientation: s.orientation + d.orientation * h,
        position: s.position + d.position * h,
    }
}

fn rk4_step(model: &QuasiSteady, s: &FallState, h: f64) -> FallState {
    let k1 = model.rhs(s);
    let k2 = model.rhs(&advance(s, &k1, h / 2.0));
    let k3 = model.rhs(&advance(s, &k2, h / 2.0));
    let k4 = model.rhs(&advance(s, &k3, h));
    let w = h / 6.0;
    let mut next = FallState {
        t: s.t + h,
        xi: s.xi + (k1.xi + (k2.xi + k3.xi) * 2.0 + k4.xi) * w,
        omega: s.omega + (k1.omega + (k2.omega + k3.omega) * 2.0 + k4.omega) * w,
        gravity: s.gravity + (k1.gravity + (k2.gravity + k3.gravity) * 2.0 + k4.gravity) * w,
        orientation: s.orientation
            + (k1.orientation + (k2.orientation + k3.orientation) * 2.0 + k4.orientation) * w,
        position: s.position + (k1.position + (k2.position + k3.position) * 2.0 + k4.position) * w,
    };
    project(&mut next);
    next
}

/// Renormalize `G` and replace `Q` by the nearest rotation.
fn project(s: &mut FallState) {
    let n = s.gravity.norm();
    if n > 0.0 {
        s.gravity /= n;
    }
    let svd = s.orientation.svd(true, true);
    if let (Some(u), Some(v_t)) = (svd.u, svd.v_t) {
        s.orientation = u * v_t;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<FallState>,
    pub steps: usize,
    /// Steady-state detection stopped the run before `t_end`.
    pub halted_early: bool,
}

impl Trajectory {
    pub fn last(&self) -> &FallState {
        self.samples
            .last()
            .expect("trajectory always holds the initial state")
    }
}

/// Fixed-step RK4 from `s0` to `params.t_end`. `states` feeds the early
/// halt and may be empty.
pub fn integrate(
    s0: &FallState,
    r: &ResistanceSet,
    mp: &MassProperties,
    params: &DynamicsParams,
    states: &[SteadyState],
) -> Result<Trajectory> {
    const OP: &str = "dynamics::integrate";
    params.validate()?;
    if !s0.is_finite() {
        return Err(Error::config(OP, "initial state is not finite"));
    }
    if (s0.gravity.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::config(
            OP,
            "initial gravity direction must be a unit vector",
        ));
    }
    if (s0.orientation.transpose() * s0.orientation - Matrix3::identity()).amax() > 1e-8 {
        return Err(Error::config(OP, "initial orientation must be a rotation"));
    }
    let model = QuasiSteady::new(r, mp, params.reynolds)?;
    let watch = params.steady_tol > 0.0 && !states.is_empty();
    let settled = |s: &FallState| {
        watch && nearest_steady(s, states, r, mp).is_some_and(|(_, d)| d < params.steady_tol)
    };

    let mut s = s0.clone();
    let mut samples = vec![s.clone()];
    if settled(&s) {
        return Ok(Trajectory {
            samples,
            steps: 0,
            halted_early: true,
        });
    }
    let t0 = s0.t;
    let t_end = t0 + params.t_end;
    let n_steps = ((params.t_end / params.dt) - 1e-9).ceil().max(1.0) as usize;
    for step in 1..=n_steps {
        let h = if step == n_steps {
            t_end - s.t
        } else {
            params.dt
        };
        s = rk4_step(&model, &s, h);
        if step == n_steps {
            s.t = t_end;
        }
        if !s.is_finite() || s.magnitude() > BLOW_UP {
            return Err(Error::Instability {
                op: OP,
                steps: step,
            });
        }
        let done = step == n_steps;
        let stop = settled(&s);
        if done || stop || step % params.output_stride == 0 {
            samples.push(s.clone());
        }
        if stop && !done {
            return Ok(Trajectory {
                samples,
                steps: step,
                halted_early: true,
            });
        }
    }
    Ok(Trajectory {
        samples,
        steps: n_steps,
        halted_early: false,
    })
}

/// Closest steady state to `s`, as `(index, distance)`. The distance is
/// `max(‖ξ−ξ*‖, ‖ω−ω*‖, ∠(G, g*))`, with `g*` the best direction in the
/// state's eigenspace (either sign).
fn nearest_steady(
    s: &FallState,
    states: &[SteadyState],
    r: &ResistanceSet,
    mp: &MassProperties,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, st) in states.iter().enumerate() {
        let mut proj = Vector3::zeros();
        for b in &st.eigenspace {
            proj += b * b.dot(&s.gravity);
        }
        let g = if proj.norm() > 1e-300 {
            proj.normalize()
        } else if st.g.dot(&s.gravity) >= 0.0 {
            st.g
        } else {
            -st.g
        };
        let Ok((xi, omega)) = state_velocities(r, mp, st.lambda, &g) else {
            continue;
        };
        let angle = s.gravity.normalize().dot(&g).clamp(-1.0, 1.0).acos();
        let d = (s.xi - xi).norm().max((s.omega - omega).norm()).max(angle);
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyReport {
    pub converged: bool,
    /// Index into the steady-state list of the nearest state.
    pub nearest: Option<usize>,
    pub distance: f64,
    /// Time of the final sample.
    pub time: f64,
    /// Force/torque balance residual at the final sample.
    pub balance_residual: f64,
}

/// Whether the trajectory ends within `tol` of one of `states`.
pub fn detect_steady(
    traj: &Trajectory,
    states: &[SteadyState],
    r: &ResistanceSet,
    mp: &MassProperties,
    tol: f64,
) -> SteadyReport {
    let s = traj.last();
    let nearest = nearest_steady(s, states, r, mp);
    let distance = nearest.map_or(f64::INFINITY, |(_, d)| d);
    SteadyReport {
        converged: distance < tol,
        nearest: nearest.map(|(i, _)| i),
        distance,
        time: s.t,
        balance_residual: residual(&s.gravity, &s.xi, &s.omega, r, mp),
    }
}

pub const TRAJECTORY_HEADER: [&str; 22] = [
    "t", "xi1", "xi2", "xi3", "omega1", "omega2", "omega3", "G1", "G2", "G3", "c1", "c2", "c3",
    "Q11", "Q12", "Q13", "Q21", "Q22", "Q23", "Q31", "Q32", "Q33",
];

/// Trajectory as CSV, one row per sample, 17 significant digits.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    const OP: &str = "dynamics::write_trajectory_csv";
    let io = |e: csv::Error| Error::Io {
        op: OP,
        path: "<trajectory>".into(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER).map_err(io)?;
    for s in &traj.samples {
        let mut row = Vec::with_capacity(22);
        row.push(s.t);
        row.extend(s.xi.iter());
        row.extend(s.omega.iter());
        row.extend(s.gravity.iter());
        row.extend(s.position.iter());
        for i in 0..3 {
            for j in 0..3 {
                row.push(s.orientation[(i, j)]);
            }
        }
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Io {
        op: OP,
        path: "<trajectory>".into(),
        source: e,
    })
}
