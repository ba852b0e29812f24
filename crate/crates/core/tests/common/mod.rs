#![allow(dead_code)]

use nalgebra::{Rotation3, Unit, Vector3};
use rand::Rng;
use slenderfall::geometry::{self, CurveSpec, DensityProfile, DiscreteBody, MassProperties};

/// Open random-walk polyline with bounded turning, resampled until it
/// discretizes without self-contact.
pub fn random_polyline<R: Rng>(rng: &mut R) -> CurveSpec {
    loop {
        let n = rng.gen_range(4..=7);
        let mut dir = random_unit(rng);
        let mut p = Vector3::zeros();
        let mut vertices = vec![[0.0; 3]];
        for _ in 1..n {
            let axis = Unit::new_normalize(dir.cross(&random_unit(rng)));
            let turn = rng.gen_range(0.3..1.8);
            dir = Rotation3::from_axis_angle(&axis, turn) * dir;
            p += dir * rng.gen_range(0.4..1.0);
            vertices.push([p.x, p.y, p.z]);
        }
        let density = if rng.gen_bool(0.5) {
            DensityProfile::Uniform(rng.gen_range(0.5..2.0))
        } else {
            DensityProfile::Linear {
                start: rng.gen_range(0.5..2.0),
                end: rng.gen_range(0.5..2.0),
            }
        };
        let spec = CurveSpec::polyline(vertices, false).with_density(density);
        if geometry::discretize(&spec, 8, 4).is_ok() {
            return spec;
        }
    }
}

pub fn random_unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn body(spec: &CurveSpec, panels: usize, mc_fraction: f64) -> (DiscreteBody, MassProperties) {
    let body = geometry::discretize(spec, panels, 4).unwrap();
    let m = geometry::mass_properties(&body, 0.0).unwrap().mass;
    let mp = geometry::mass_properties(&body, mc_fraction * m).unwrap();
    (body, mp)
}
