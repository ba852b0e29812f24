//! Configuration, orchestration and report emission for the command-line tool.
//!
//! A run reads one JSON [`RunConfig`], computes everything in memory and
//! only then writes its artifacts, so a failed run leaves nothing behind.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver error,
//! 4 convergence gate failure.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, DynamicsParams, FallState, SteadyReport};
use crate::error::{Error, Result};
use crate::freefall::{self, SteadyState};
use crate::geometry::{self, CurveSpec, DiscreteBody, GeometryDiagnostics, MassProperties, Shape};
use crate::kernel::{self, KernelParams};
use crate::mobility::{self, ResistanceSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_GATE: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mobility,
    Steady,
    Fall,
    KernelCheck,
    Convergence,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Mobility => "mobility",
            Mode::Steady => "steady",
            Mode::Fall => "fall",
            Mode::KernelCheck => "kernel-check",
            Mode::Convergence => "convergence",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fluid {
    Nondimensional {
        ell: f64,
        #[serde(default)]
        reynolds: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
    },
    Dimensional(DimensionalFluid),
}

/// Physical inputs. `thickness` is the effective thickness `L` and
/// `length_scale` the body size `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionalFluid {
    pub rho: f64,
    pub mu: f64,
    pub thickness: f64,
    pub length_scale: f64,
    pub gravity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub ell: f64,
    pub reynolds: f64,
    /// Viscosity used by the solver (1 unless overridden).
    pub mu: f64,
    /// Velocity scale `W = ρgd²/μ`.
    pub speed: f64,
    /// Time scale `ρd²/μ`.
    pub time: f64,
    /// Mass scale `ρd³`.
    pub mass: f64,
    pub length: f64,
}

/// Map physical inputs to `ℓ`, `Re` and the output scales.
pub fn nondimensionalize(d: &DimensionalFluid) -> Result<Scales> {
    for (name, v) in [
        ("rho", d.rho),
        ("mu", d.mu),
        ("thickness", d.thickness),
        ("length_scale", d.length_scale),
        ("gravity", d.gravity),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config(
                "cli::nondimensionalize",
                format!("{name} must be finite and positive, got {v}"),
            ));
        }
    }
    let DimensionalFluid {
        rho,
        mu,
        thickness,
        length_scale: d_len,
        gravity: g,
    } = *d;
    Ok(Scales {
        ell: thickness / d_len,
        reynolds: rho * rho * g * d_len.powi(3) / (mu * mu),
        mu: 1.0,
        speed: rho * g * d_len * d_len / mu,
        time: rho * d_len * d_len / mu,
        mass: rho * d_len.powi(3),
        length: d_len,
    })
}

impl Fluid {
    pub fn scales(&self) -> Result<Scales> {
        match self {
            Fluid::Nondimensional { ell, reynolds, mu } => {
                let mu = mu.unwrap_or(1.0);
                if !(reynolds.is_finite() && *reynolds >= 0.0) {
                    return Err(Error::config(
                        "cli::run",
                        format!("reynolds must be >= 0, got {reynolds}"),
                    ));
                }
                if !(mu.is_finite() && mu > 0.0) {
                    return Err(Error::config(
                        "cli::run",
                        format!("mu must be positive, got {mu}"),
                    ));
                }
                Ok(Scales {
                    ell: *ell,
                    reynolds: *reynolds,
                    mu,
                    speed: 1.0,
                    time: 1.0,
                    mass: 1.0,
                    length: 1.0,
                })
            }
            Fluid::Dimensional(d) => nondimensionalize(d),
        }
    }

    fn is_dimensional(&self) -> bool {
        matches!(self, Fluid::Dimensional(_))
    }
}

/// Masses are in units of `ρd³` in dimensional mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Masses {
    /// Total mass; rescales the density profile when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
    #[serde(default)]
    pub complementary: f64,
}

impl Default for Masses {
    fn default() -> Self {
        Self {
            total: None,
            complementary: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub panels: usize,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub steady_tol: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    /// Gravity direction in the body frame at release.
    #[serde(default = "default_gravity")]
    pub gravity_direction: [f64; 3],
}

fn default_stride() -> usize {
    1
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

/// Artifact file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_trajectory")]
    pub trajectory: String,
    #[serde(default = "default_convergence")]
    pub convergence: String,
    #[serde(default = "default_kernel_check")]
    pub kernel_check: String,
}

fn default_report() -> String {
    "report.json".into()
}
fn default_trajectory() -> String {
    "trajectory.csv".into()
}
fn default_convergence() -> String {
    "convergence.csv".into()
}
fn default_kernel_check() -> String {
    "kernel_check.csv".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            report: default_report(),
            trajectory: default_trajectory(),
            convergence: default_convergence(),
            kernel_check: default_kernel_check(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub body: CurveSpec,
    pub fluid: Fluid,
    #[serde(default)]
    pub masses: Masses,
    pub discretization: Discretization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsConfig>,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("cli::load_config", e.to_string()))
    }

    /// Read a config file and pull any `vertices_csv` into the vertex list.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            op: "cli::load_config",
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_vertices(base)?;
        Ok(config)
    }

    /// Load `vertices_csv` (relative to `base`) into the polyline vertices.
    pub fn resolve_vertices(&mut self, base: &Path) -> Result<()> {
        if let Shape::Polyline {
            vertices,
            vertices_csv: Some(file),
            ..
        } = &mut self.body.shape
        {
            if !vertices.is_empty() {
                return Err(Error::config(
                    "cli::load_config",
                    "give polyline vertices inline or as vertices_csv, not both",
                ));
            }
            *vertices = read_vertices(&base.join(file.as_str()))?;
        }
        Ok(())
    }
}

fn read_vertices(path: &Path) -> Result<Vec<[f64; 3]>> {
    const OP: &str = "cli::load_config";
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        op: OP,
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(OP, format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) if v.len() == 3 => out.push([v[0], v[1], v[2]]),
            // a non-numeric first row is a header
            Err(_) if i == 0 => continue,
            _ => {
                return Err(Error::config(
                    OP,
                    format!("{}: row {} is not three numbers", path.display(), i + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// What went wrong in a run. Gate failures carry a partial report.
#[derive(Debug)]
pub enum Failure {
    Error(Error),
    Gate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Error(e) => write!(f, "{e}"),
            Failure::Gate(msg) => write!(f, "cli::run: convergence gate failed: {msg}"),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Gate(_) => EXIT_GATE,
            Failure::Error(e) => match e {
                Error::Config { .. }
                | Error::Io { .. }
                | Error::Geometry { .. }
                | Error::Domain { .. } => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionalVelocities {
    pub xi: Vector3<f64>,
    pub omega: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    #[serde(flatten)]
    pub state: SteadyState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensional: Option<DimensionalVelocities>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub reynolds: f64,
    pub steps: usize,
    pub samples: usize,
    pub halted_early: bool,
    pub final_time: f64,
    pub final_xi: Vector3<f64>,
    pub final_omega: Vector3<f64>,
    pub final_gravity: Vector3<f64>,
    pub final_position: Vector3<f64>,
    /// Non-convergence is a result, not an error.
    pub detection: SteadyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub r_over_ell: f64,
    pub a_closed: f64,
    pub a_oracle: f64,
    pub a_rel_err: f64,
    pub b_closed: f64,
    pub b_oracle: f64,
    pub b_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheck {
    pub ell: f64,
    pub mu: f64,
    pub tolerance: f64,
    pub rows: Vec<KernelRow>,
    pub max_rel_err: f64,
    /// `|A(0) − 1/(6πμℓ)| / A(0)`.
    pub origin_rel_err: f64,
    pub passed: bool,
}

pub const KERNEL_CHECK_RADII: [f64; 6] = [0.0, 1e-2, 1e-1, 1.0, 10.0, 100.0];
pub const KERNEL_CHECK_TOL: f64 = 1e-8;

fn relative(closed: f64, oracle: f64) -> f64 {
    let diff = (closed - oracle).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / oracle.abs()
    }
}

/// Closed-form kernel against the Fourier-integral oracle.
pub fn kernel_check(params: &KernelParams) -> Result<KernelCheck> {
    params.validate()?;
    let mut rows = Vec::with_capacity(KERNEL_CHECK_RADII.len());
    for &q in &KERNEL_CHECK_RADII {
        let r = q * params.ell;
        let closed = kernel::kernel_scalars(r, params)?;
        let oracle = kernel::fourier_oracle(r, params)?;
        rows.push(KernelRow {
            r_over_ell: q,
            a_closed: closed.a,
            a_oracle: oracle.a,
            a_rel_err: relative(closed.a, oracle.a),
            b_closed: closed.b,
            b_oracle: oracle.b,
            b_rel_err: relative(closed.b, oracle.b),
        });
    }
    let max_rel_err = rows
        .iter()
        .map(|r| r.a_rel_err.max(r.b_rel_err))
        .fold(0.0, f64::max);
    let exact = 1.0 / (6.0 * std::f64::consts::PI * params.mu * params.ell);
    let origin_rel_err = (rows[0].a_closed - exact).abs() / exact;
    Ok(KernelCheck {
        ell: params.ell,
        mu: params.mu,
        tolerance: KERNEL_CHECK_TOL,
        passed: max_rel_err <= KERNEL_CHECK_TOL && origin_rel_err <= 1e-10,
        rows,
        max_rel_err,
        origin_rel_err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub panels: usize,
    pub nodes: usize,
    /// Spin rate of the steady state with the largest `|λ|`.
    pub lambda: f64,
    pub k_tr_norm: f64,
    #[serde(with = "grand_rows")]
    pub grand: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `‖A₆(2N) − A₆(N)‖` for consecutive rows.
    pub differences: Vec<f64>,
    pub ratios: Vec<f64>,
    pub lambda_differences: Vec<f64>,
    pub passed: bool,
}

mod grand_rows {
    use nalgebra::Matrix6;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Matrix6<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<[f64; 6]> = (0..6).map(|i| std::array::from_fn(|j| m[(i, j)])).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix6<f64>, D::Error> {
        let rows = Vec::<[f64; 6]>::deserialize(d)?;
        if rows.len() != 6 {
            return Err(serde::de::Error::custom("expected 6 rows"));
        }
        Ok(Matrix6::from_fn(|i, j| rows[i][j]))
    }
}

/// Everything a pipeline needs after the config is resolved.
#[derive(Debug, Clone)]
pub struct Setup {
    pub scales: Scales,
    pub params: KernelParams,
    pub complementary_mass: f64,
    pub total_mass: Option<f64>,
}

impl Setup {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let scales = config.fluid.scales()?;
        let params = KernelParams::new(scales.ell).with_mu(scales.mu);
        params.validate()?;
        let m = config.masses;
        if let Some(total) = m.total {
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::config(
                    "cli::run",
                    format!("total mass must be positive, got {total}"),
                ));
            }
        }
        Ok(Self {
            scales,
            params,
            complementary_mass: m.complementary / scales.mass,
            total_mass: m.total.map(|t| t / scales.mass),
        })
    }

    /// Discretized body and its mass properties.
    pub fn body(
        &self,
        spec: &CurveSpec,
        panels: usize,
        order: usize,
    ) -> Result<(DiscreteBody, MassProperties)> {
        let mut body = geometry::discretize(spec, panels, order)?;
        if let Some(total) = self.total_mass {
            let mass = geometry::mass_properties(&body, 0.0)?.mass;
            let f = total / mass;
            body.density.iter_mut().for_each(|d| *d *= f);
        }
        let mp = geometry::mass_properties(&body, self.complementary_mass)?;
        Ok((body, mp))
    }
}

/// Largest-magnitude spin rate, the first one on ties.
fn dominant_lambda(states: &[SteadyState]) -> f64 {
    states
        .iter()
        .map(|s| s.lambda)
        .fold(0.0, |acc, l| if l.abs() > acc.abs() { l } else { acc })
}

fn convergence_row(
    setup: &Setup,
    spec: &CurveSpec,
    panels: usize,
    order: usize,
) -> Result<ConvergenceRow> {
    let (body, mp) = setup.body(spec, panels, order)?;
    let r = mobility::resistance_set(&body, &setup.params)?;
    let states = freefall::steady_states(&r, &mp)?;
    Ok(ConvergenceRow {
        panels,
        nodes: body.len(),
        lambda: dominant_lambda(&states),
        k_tr_norm: r.k_tr.norm(),
        grand: r.grand,
    })
}

/// Resistance and spin rate at `N, 2N, 4N, 8N` panels. Passes when the
/// last successive difference is smaller than the one before it.
pub fn convergence_study(config: &RunConfig) -> Result<ConvergenceTable> {
    let setup = Setup::from_config(config)?;
    let base = config.discretization.panels;
    let order = config.discretization.order;
    let panels: Vec<usize> = (0..4).map(|k| base << k).collect();
    #[cfg(feature = "parallel")]
    let rows: Vec<Result<ConvergenceRow>> = {
        use rayon::prelude::*;
        panels
            .par_iter()
            .map(|&p| convergence_row(&setup, &config.body, p, order))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Result<ConvergenceRow>> = panels
        .iter()
        .map(|&p| convergence_row(&setup, &config.body, p, order))
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let scale = rows.last().map_or(1.0, |r| r.grand.norm());
    let differences: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[1].grand - w[0].grand).norm())
        .collect();
    let lambda_differences: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[1].lambda - w[0].lambda).abs())
        .collect();
    let ratios: Vec<f64> = differences
        .windows(2)
        .map(|d| {
            // both differences at round-off: already converged
            if d[1] <= 1e-13 * scale {
                0.0
            } else {
                d[1] / d[0]
            }
        })
        .collect();
    let passed = ratios.last().is_some_and(|&q| q < 1.0);
    Ok(ConvergenceTable {
        rows,
        differences,
        ratios,
        lambda_differences,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub mode: Mode,
    pub config: RunConfig,
    pub scales: Scales,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<GeometryDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<MassProperties>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resistance: Option<ResistanceSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_states: Option<Vec<StateReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_check: Option<KernelCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceTable>,
}

/// A finished run: the report plus any CSV artifacts, not yet written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: Report,
    /// `(file name, contents)`.
    pub files: Vec<(String, String)>,
    /// Set when a convergence or oracle gate failed.
    pub gate_failure: Option<String>,
}

impl RunOutput {
    pub fn report_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&self.report).expect("report is always serializable");
        s.push('\n');
        s
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Run the pipeline for `mode` without touching the filesystem.
pub fn execute(mode: Mode, config: &RunConfig) -> Result<RunOutput> {
    let setup = Setup::from_config(config)?;
    let scales = setup.scales;
    let mut report = Report {
        version: VERSION.into(),
        mode,
        config: config.clone(),
        scales,
        diagnostics: None,
        mass: None,
        resistance: None,
        steady_states: None,
        dynamics: None,
        kernel_check: None,
        convergence: None,
    };
    let mut files = Vec::new();
    let mut gate_failure = None;

    match mode {
        Mode::KernelCheck => {
            let check = kernel_check(&setup.params)?;
            if !check.passed {
                gate_failure = Some(format!(
                    "kernel oracle error {:.3e} exceeds {:.0e}",
                    check.max_rel_err, check.tolerance
                ));
            }
            let rows = check.rows.iter().map(|r| {
                vec![
                    r.r_over_ell,
                    r.a_closed,
                    r.a_oracle,
                    r.a_rel_err,
                    r.b_closed,
                    r.b_oracle,
                    r.b_rel_err,
                ]
            });
            files.push((
                config.outputs.kernel_check.clone(),
                csv_text(
                    &[
                        "r_over_ell",
                        "a_closed",
                        "a_oracle",
                        "a_rel_err",
                        "b_closed",
                        "b_oracle",
                        "b_rel_err",
                    ],
                    rows,
                ),
            ));
            report.kernel_check = Some(check);
        }
        Mode::Convergence => {
            let table = convergence_study(config)?;
            if !table.passed {
                gate_failure = Some(format!(
                    "successive differences did not decrease (ratios {:?})",
                    table.ratios
                ));
            }
            let mut header = vec![
                "panels".to_string(),
                "nodes".into(),
                "lambda".into(),
                "k_tr_norm".into(),
            ];
            for i in 1..=6 {
                for j in 1..=6 {
                    header.push(format!("a{i}{j}"));
                }
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = table.rows.iter().map(|r| {
                let mut v = vec![r.panels as f64, r.nodes as f64, r.lambda, r.k_tr_norm];
                for i in 0..6 {
                    for j in 0..6 {
                        v.push(r.grand[(i, j)]);
                    }
                }
                v
            });
            files.push((config.outputs.convergence.clone(), csv_text(&header, rows)));
            report.convergence = Some(table);
        }
        Mode::Mobility | Mode::Steady | Mode::Fall => {
            let d = config.discretization;
            let (body, mp) = setup.body(&config.body, d.panels, d.order)?;
            report.diagnostics = Some(geometry::validate_geometry(&body, scales.ell));
            let r = mobility::resistance_set(&body, &setup.params)?;
            if mode != Mode::Mobility {
                let states = freefall::steady_states(&r, &mp)?;
                let dimensional = config.fluid.is_dimensional();
                report.steady_states = Some(
                    states
                        .iter()
                        .map(|s| StateReport {
                            state: s.clone(),
                            dimensional: dimensional.then(|| DimensionalVelocities {
                                xi: s.xi * scales.speed,
                                omega: s.omega * (scales.speed / scales.length),
                            }),
                        })
                        .collect(),
                );
                if mode == Mode::Fall {
                    let (dyn_report, csv) = fall(config, &scales, &r, &mp, &states)?;
                    report.dynamics = Some(dyn_report);
                    files.push((config.outputs.trajectory.clone(), csv));
                }
            }
            report.mass = Some(mp);
            report.resistance = Some(r);
        }
    }
    Ok(RunOutput {
        report,
        files,
        gate_failure,
    })
}

fn fall(
    config: &RunConfig,
    scales: &Scales,
    r: &ResistanceSet,
    mp: &MassProperties,
    states: &[SteadyState],
) -> Result<(DynamicsReport, String)> {
    let dc = config
        .dynamics
        .as_ref()
        .ok_or_else(|| Error::config("cli::run", "mode fall needs a dynamics block"))?;
    let g = Vector3::from(dc.gravity_direction);
    if !(g.iter().all(|v| v.is_finite()) && g.norm() > 0.0) {
        return Err(Error::config(
            "cli::run",
            "gravity_direction must be a nonzero vector",
        ));
    }
    // dimensional runs give dt and t_end in physical time
    let params = DynamicsParams {
        reynolds: scales.reynolds,
        dt: dc.dt / scales.time,
        t_end: dc.t_end / scales.time,
        steady_tol: dc.steady_tol,
        output_stride: dc.output_stride,
    };
    let traj = dynamics::integrate(&FallState::at_rest(g.normalize()), r, mp, &params, states)?;
    let detection = dynamics::detect_steady(&traj, states, r, mp, dc.steady_tol);
    let last = traj.last();
    let report = DynamicsReport {
        reynolds: scales.reynolds,
        steps: traj.steps,
        samples: traj.samples.len(),
        halted_early: traj.halted_early,
        final_time: last.t,
        final_xi: last.xi,
        final_omega: last.omega,
        final_gravity: last.gravity,
        final_position: last.position,
        detection,
    };
    let mut out = traj.clone();
    if config.fluid.is_dimensional() {
        for s in &mut out.samples {
            s.t *= scales.time;
            s.xi *= scales.speed;
            s.omega *= scales.speed / scales.length;
            s.position *= scales.length;
        }
    }
    let mut buf = Vec::new();
    dynamics::write_trajectory_csv(&out, &mut buf)?;
    Ok((report, String::from_utf8(buf).expect("csv output is ASCII")))
}

/// Write the report and CSV files into `out_dir`.
pub fn write_artifacts(
    output: &RunOutput,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    const OP: &str = "cli::write_artifacts";
    let io = |path: &Path, source| Error::Io {
        op: OP,
        path: path.display().to_string(),
        source,
    };
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let mut written = Vec::new();
    let report_path = out_dir.join(&config.outputs.report);
    fs::write(&report_path, output.report_json()).map_err(|e| io(&report_path, e))?;
    written.push(report_path);
    for (name, contents) in &output.files {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|e| io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

fn check_mode(mode: Mode, config: &RunConfig) -> Result<()> {
    if let Some(m) = config.mode {
        if m != mode {
            return Err(Error::config(
                "cli::run",
                format!("config asks for mode {m} but {mode} was requested"),
            ));
        }
    }
    Ok(())
}

/// Load, run and write. Returns the process exit code; messages go to
/// stderr.
pub fn run(mode: Mode, config_path: &Path, out_dir: &Path) -> i32 {
    match run_inner(mode, config_path, out_dir) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

fn run_inner(
    mode: Mode,
    config_path: &Path,
    out_dir: &Path,
) -> std::result::Result<Vec<PathBuf>, Failure> {
    let config = RunConfig::load(config_path)?;
    check_mode(mode, &config)?;
    let output = execute(mode, &config)?;
    let paths = write_artifacts(&output, &config, out_dir)?;
    match output.gate_failure {
        // the report is still written so the table can be inspected
        Some(msg) => Err(Failure::Gate(msg)),
        None => Ok(paths),
    }
}
