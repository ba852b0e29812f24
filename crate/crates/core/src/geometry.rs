//! One-dimensional rigid bodies, their mass distribution and the
//! composite Gauss–Legendre discretization used by every other stage.
//!
//! Positions in a [`DiscreteBody`] live in the co-moving frame: the origin
//! is the center of mass of the discrete (node-weighted) mass distribution.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, mapped};

/// Mass per unit arc length as a function of the arc-length fraction
/// `s / Λ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityProfile {
    Uniform(f64),
    /// Linear ramp from `start` at `s = 0` to `end` at `s = Λ`.
    Linear {
        start: f64,
        end: f64,
    },
}

impl Default for DensityProfile {
    fn default() -> Self {
        DensityProfile::Uniform(1.0)
    }
}

impl DensityProfile {
    pub fn at(&self, fraction: f64) -> f64 {
        match *self {
            DensityProfile::Uniform(v) => v,
            DensityProfile::Linear { start, end } => start + (end - start) * fraction,
        }
    }

    pub fn is_uniform(&self) -> bool {
        match *self {
            DensityProfile::Uniform(_) => true,
            DensityProfile::Linear { start, end } => start == end,
        }
    }

    /// Same profile multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            DensityProfile::Uniform(v) => DensityProfile::Uniform(v * factor),
            DensityProfile::Linear { start, end } => DensityProfile::Linear {
                start: start * factor,
                end: end * factor,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DensityProfile::Uniform(v) => v.is_finite() && v > 0.0,
            DensityProfile::Linear { start, end } => {
                start.is_finite() && end.is_finite() && start > 0.0 && end > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::geometry(
                "geometry::discretize",
                "line density must be finite and positive everywhere",
            ))
        }
    }
}

/// Shape of the curve. All lengths are nondimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    /// Straight segment along `e₁`.
    Rod { length: f64 },
    /// Circle of the given radius in the `e₁e₂` plane.
    Ring { radius: f64 },
    /// Right-handed helix around `e₃`; `pitch` is the rise per turn.
    Helix { radius: f64, pitch: f64, turns: f64 },
    Polyline {
        #[serde(default)]
        vertices: Vec<[f64; 3]>,
        #[serde(default)]
        closed: bool,
        /// CSV of `x,y,z` rows, resolved into `vertices` when the config is loaded.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices_csv: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub density: DensityProfile,
}

impl CurveSpec {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            density: DensityProfile::default(),
        }
    }

    pub fn rod(length: f64) -> Self {
        Self::new(Shape::Rod { length })
    }

    pub fn ring(radius: f64) -> Self {
        Self::new(Shape::Ring { radius })
    }

    pub fn helix(radius: f64, pitch: f64, turns: f64) -> Self {
        Self::new(Shape::Helix {
            radius,
            pitch,
            turns,
        })
    }

    pub fn polyline(vertices: Vec<[f64; 3]>, closed: bool) -> Self {
        Self::new(Shape::Polyline {
            vertices,
            closed,
            vertices_csv: None,
        })
    }

    pub fn with_density(mut self, density: DensityProfile) -> Self {
        self.density = density;
        self
    }

    pub fn closed(&self) -> bool {
        match &self.shape {
            Shape::Ring { .. } => true,
            Shape::Polyline { closed, .. } => *closed,
            _ => false,
        }
    }

    /// Exact arc length of the curve.
    pub fn arc_length(&self) -> Result<f64> {
        Ok(self.pieces()?.iter().map(Piece::length).sum())
    }

    fn pieces(&self) -> Result<Vec<Piece>> {
        const OP: &str = "geometry::discretize";
        let positive = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::geometry(
                    OP,
                    format!("{what} must be finite and positive, got {v}"),
                ))
            }
        };
        match &self.shape {
            Shape::Rod { length } => {
                positive(*length, "rod length")?;
                Ok(vec![Piece::Segment {
                    start: Vector3::new(-0.5 * length, 0.0, 0.0),
                    end: Vector3::new(0.5 * length, 0.0, 0.0),
                }])
            }
            Shape::Ring { radius } => {
                positive(*radius, "ring radius")?;
                Ok(vec![Piece::Helical {
                    radius: *radius,
                    rise: 0.0,
                    sweep: 2.0 * PI,
                }])
            }
            Shape::Helix {
                radius,
                pitch,
                turns,
            } => {
                positive(*radius, "helix radius")?;
                positive(*turns, "helix turns")?;
                if !pitch.is_finite() || *pitch < 0.0 {
                    return Err(Error::geometry(
                        OP,
                        "helix pitch must be finite and non-negative",
                    ));
                }
                if *pitch == 0.0 && *turns > 1.0 {
                    return Err(Error::geometry(
                        OP,
                        "flat helix with more than one turn overlaps itself",
                    ));
                }
                Ok(vec![Piece::Helical {
                    radius: *radius,
                    rise: pitch / (2.0 * PI),
                    sweep: 2.0 * PI * turns,
                }])
            }
            Shape::Polyline {
                vertices, closed, ..
            } => polyline_pieces(vertices, *closed),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Piece {
    Segment {
        start: Vector3<f64>,
        end: Vector3<f64>,
    },
    /// `θ ↦ (a cos θ, a sin θ, rise·θ)` for `θ ∈ [0, sweep]`.
    Helical { radius: f64, rise: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Segment { start, end } => (end - start).norm(),
            Piece::Helical {
                radius,
                rise,
                sweep,
            } => sweep * radius.hypot(rise),
        }
    }

    /// Point at arc-length fraction `u ∈ [0, 1]` of this piece.
    fn point(&self, u: f64) -> Vector3<f64> {
        match *self {
            Piece::Segment { start, end } => start + (end - start) * u,
            Piece::Helical {
                radius,
                rise,
                sweep,
            } => {
                let theta = sweep * u;
                Vector3::new(radius * theta.cos(), radius * theta.sin(), rise * theta)
            }
        }
    }
}

fn polyline_pieces(vertices: &[[f64; 3]], closed: bool) -> Result<Vec<Piece>> {
    const OP: &str = "geometry::discretize";
    let min_vertices = if closed { 3 } else { 2 };
    if vertices.len() < min_vertices {
        return Err(Error::geometry(
            OP,
            format!(
                "polyline needs at least {min_vertices} vertices, got {}",
                vertices.len()
            ),
        ));
    }
    if vertices.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::geometry(OP, "polyline vertex is not finite"));
    }
    let pts: Vec<Vector3<f64>> = vertices.iter().map(|v| Vector3::from(*v)).collect();
    let mut segments: Vec<(Vector3<f64>, Vector3<f64>)> =
        pts.windows(2).map(|w| (w[0], w[1])).collect();
    if closed {
        segments.push((pts[pts.len() - 1], pts[0]));
    }
    let total: f64 = segments.iter().map(|(a, b)| (b - a).norm()).sum();
    if !(total > 0.0) {
        return Err(Error::geometry(OP, "curve has zero length"));
    }
    let tol = 1e-12 * total;
    for (i, (a, b)) in segments.iter().enumerate() {
        if (b - a).norm() <= tol {
            return Err(Error::geometry(
                OP,
                format!("polyline segment {i} has zero length"),
            ));
        }
    }
    let n = segments.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (closed && i == 0 && j == n - 1);
            let (a0, a1) = segments[i];
            let (b0, b1) = segments[j];
            if adjacent {
                // Consecutive segments may only meet at the shared vertex.
                let da = (a1 - a0).normalize();
                let db = (b1 - b0).normalize();
                let (da, db) = if j == i + 1 { (da, db) } else { (db, da) };
                if da.dot(&db) < -1.0 + 1e-12 {
                    return Err(Error::geometry(
                        OP,
                        format!("self-intersecting polyline: segments {i} and {j} fold back"),
                    ));
                }
            } else if segment_distance(a0, a1, b0, b1) <= tol {
                return Err(Error::geometry(
                    OP,
                    format!("self-intersecting polyline: segments {i} and {j} touch"),
                ));
            }
        }
    }
    Ok(segments
        .into_iter()
        .map(|(start, end)| Piece::Segment { start, end })
        .collect())
}

/// Minimum distance between segments `[p0, p1]` and `[q0, q1]`.
fn segment_distance(p0: Vector3<f64>, p1: Vector3<f64>, q0: Vector3<f64>, q1: Vector3<f64>) -> f64 {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-14 * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    ((p0 + d1 * s) - (q0 + d2 * t)).norm()
}

/// Nyström discretization of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBody {
    /// Node positions relative to the center of mass.
    pub positions: Vec<Vector3<f64>>,
    /// Arc-length quadrature weights.
    pub weights: Vec<f64>,
    /// Line density at each node.
    pub density: Vec<f64>,
    pub panels: usize,
    pub order: usize,
    /// Total length `Λ = Σ w_q`.
    pub length: f64,
    pub closed: bool,
    /// Center of mass in the coordinates of the original curve spec.
    pub center_of_mass: Vector3<f64>,
}

impl DiscreteBody {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Axis direction when every node lies on one line through the origin
    /// (to `tol` relative to the body length).
    pub fn straight_axis(&self, tol: f64) -> Option<Vector3<f64>> {
        let (_, dir, dev) = best_fit_line(self);
        (dev <= tol * self.length).then_some(dir)
    }

    /// Builds a body from explicit nodes. Positions are re-centered on the
    /// node-weighted center of mass.
    pub fn from_nodes(
        positions: Vec<Vector3<f64>>,
        weights: Vec<f64>,
        density: Vec<f64>,
    ) -> Result<Self> {
        const OP: &str = "geometry::from_nodes";
        if positions.is_empty()
            || positions.len() != weights.len()
            || weights.len() != density.len()
        {
            return Err(Error::geometry(
                OP,
                "node, weight and density arrays must be non-empty and equally long",
            ));
        }
        if weights
            .iter()
            .chain(&density)
            .any(|w| !(w.is_finite() && *w > 0.0))
        {
            return Err(Error::geometry(
                OP,
                "weights and densities must be finite and positive",
            ));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::geometry(OP, "node position is not finite"));
        }
        let mut body = DiscreteBody {
            length: weights.iter().sum(),
            positions,
            weights,
            density,
            panels: 1,
            order: 1,
            closed: false,
            center_of_mass: Vector3::zeros(),
        };
        body.recenter();
        Ok(body)
    }

    fn recenter(&mut self) {
        let mut moment = Vector3::zeros();
        let mut mass = 0.0;
        for ((x, w), rho) in self.positions.iter().zip(&self.weights).zip(&self.density) {
            moment += x * (w * rho);
            mass += w * rho;
        }
        let com = moment / mass;
        for x in &mut self.positions {
            *x -= com;
        }
        self.center_of_mass += com;
    }
}

/// Composite Gauss–Legendre discretization with `panels` panels of
/// `order` nodes each. Polyline segments receive panels in proportion to
/// their length, never fewer than one; no panel straddles a vertex.
pub fn discretize(spec: &CurveSpec, panels: usize, order: usize) -> Result<DiscreteBody> {
    const OP: &str = "geometry::discretize";
    if panels < 1 {
        return Err(Error::geometry(OP, "need at least one panel"));
    }
    if !(2..=16).contains(&order) {
        return Err(Error::geometry(
            OP,
            format!("quadrature order must be in 2..=16, got {order}"),
        ));
    }
    spec.density.validate()?;
    let pieces = spec.pieces()?;
    let total: f64 = pieces.iter().map(Piece::length).sum();
    if !(total > 0.0) {
        return Err(Error::geometry(OP, "curve has zero length"));
    }

    let (gx, gw) = gauss_legendre(order);
    let mut positions = Vec::new();
    let mut weights = Vec::new();
    let mut density = Vec::new();
    let mut used_panels = 0;
    let mut offset = 0.0;
    for piece in &pieces {
        let len = piece.length();
        let count = if pieces.len() == 1 {
            panels
        } else {
            ((panels as f64 * len / total).round() as usize).max(1)
        };
        for j in 0..count {
            let a = j as f64 / count as f64;
            let b = (j + 1) as f64 / count as f64;
            for (u, w) in mapped(&gx, &gw, a, b) {
                positions.push(piece.point(u));
                weights.push(w * len);
                density.push(spec.density.at((offset + u * len) / total));
            }
        }
        used_panels += count;
        offset += len;
    }

    let mut body = DiscreteBody {
        length: weights.iter().sum(),
        positions,
        weights,
        density,
        panels: used_panels,
        order,
        closed: spec.closed(),
        center_of_mass: Vector3::zeros(),
    };
    body.recenter();
    Ok(body)
}

/// Mass, buoyancy split, centroid offset and inertia of a body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassProperties {
    pub mass: f64,
    pub complementary_mass: f64,
    pub effective_mass: f64,
    /// Uniform-measure centroid relative to the center of mass.
    pub centroid_offset: Vector3<f64>,
    /// Inertia tensor about the center of mass.
    pub inertia: Matrix3<f64>,
}

impl MassProperties {
    /// Same body, every mass scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mass: self.mass * factor,
            complementary_mass: self.complementary_mass * factor,
            effective_mass: self.effective_mass * factor,
            centroid_offset: self.centroid_offset,
            inertia: self.inertia * factor,
        }
    }
}

pub fn mass_properties(body: &DiscreteBody, complementary_mass: f64) -> Result<MassProperties> {
    if !(complementary_mass.is_finite() && complementary_mass >= 0.0) {
        return Err(Error::geometry(
            "geometry::mass_properties",
            format!("complementary mass must be finite and non-negative, got {complementary_mass}"),
        ));
    }
    let mut mass = 0.0;
    let mut centroid = Vector3::zeros();
    let mut inertia = Matrix3::zeros();
    for ((x, w), rho) in body.positions.iter().zip(&body.weights).zip(&body.density) {
        let dm = w * rho;
        mass += dm;
        centroid += x * *w;
        inertia += (Matrix3::identity() * x.norm_squared() - x * x.transpose()) * dm;
    }
    centroid /= body.length;
    let inertia = (inertia + inertia.transpose()) * 0.5;
    Ok(MassProperties {
        mass,
        complementary_mass,
        effective_mass: mass - complementary_mass,
        centroid_offset: centroid,
        inertia,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDiagnostics {
    pub nodes: usize,
    pub min_separation: f64,
    /// `min_separation / ℓ`.
    pub separation_ratio: f64,
    /// Largest node distance from the best-fit line, divided by `Λ`.
    pub straightness: f64,
    pub closed: bool,
    pub duplicate_nodes: bool,
    pub warnings: Vec<String>,
}

/// Weighted centroid, principal direction and largest deviation from the
/// best-fit line.
fn best_fit_line(body: &DiscreteBody) -> (Vector3<f64>, Vector3<f64>, f64) {
    let mut centroid = Vector3::zeros();
    for (x, w) in body.positions.iter().zip(&body.weights) {
        centroid += x * *w;
    }
    centroid /= body.length;
    let mut cov = Matrix3::zeros();
    for (x, w) in body.positions.iter().zip(&body.weights) {
        let d = x - centroid;
        cov += d * d.transpose() * *w;
    }
    let eig = SymmetricEigen::new(cov);
    let imax = eig.eigenvalues.imax();
    let dir: Vector3<f64> = eig.eigenvectors.column(imax).into_owned().normalize();
    let dev = body
        .positions
        .iter()
        .map(|x| {
            let d = x - centroid;
            (d - dir * d.dot(&dir)).norm()
        })
        .fold(0.0, f64::max);
    (centroid, dir, dev)
}

pub fn validate_geometry(body: &DiscreteBody, ell: f64) -> GeometryDiagnostics {
    let n = body.len();
    let mut min_sep = f64::INFINITY;
    for p in 0..n {
        for q in (p + 1)..n {
            min_sep = min_sep.min((body.positions[p] - body.positions[q]).norm());
        }
    }
    let duplicate_nodes = n > 1 && min_sep <= 1e-14 * body.length.max(f64::MIN_POSITIVE);
    let straightness = if n > 0 && body.length > 0.0 {
        best_fit_line(body).2 / body.length
    } else {
        0.0
    };
    let mut warnings = Vec::new();
    if duplicate_nodes {
        warnings.push("duplicate nodes: collocation matrix is singular".to_string());
    } else if n > 1 && min_sep < ell / 10.0 {
        warnings.push(format!(
            "minimum node separation {min_sep:.3e} is below ℓ/10 = {:.3e}; kernel quadrature accuracy degrades",
            ell / 10.0
        ));
    }
    GeometryDiagnostics {
        nodes: n,
        min_separation: min_sep,
        separation_ratio: min_sep / ell,
        straightness,
        closed: body.closed,
        duplicate_nodes,
        warnings,
    }
}
