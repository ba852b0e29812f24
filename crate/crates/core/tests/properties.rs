mod common;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slenderfall::dynamics::{self, DynamicsParams, FallState};
use slenderfall::freefall::{fall_operator, real_eigenpairs, steady_states};
use slenderfall::geometry::{self, CurveSpec, DiscreteBody, Shape};
use slenderfall::kernel::{kernel_scalars, oseen_hyper, KernelParams};
use slenderfall::mobility::{self, ResistanceSet};

fn polyline(seed: u64) -> CurveSpec {
    common::random_polyline(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn map_vertices(spec: &CurveSpec, f: impl Fn(Vector3<f64>) -> Vector3<f64>) -> CurveSpec {
    let Shape::Polyline {
        vertices, closed, ..
    } = &spec.shape
    else {
        unreachable!()
    };
    let moved = vertices
        .iter()
        .map(|v| f(Vector3::from(*v)).into())
        .collect();
    CurveSpec::polyline(moved, *closed).with_density(spec.density)
}

fn resistance(spec: &CurveSpec) -> (DiscreteBody, ResistanceSet) {
    let body = geometry::discretize(spec, 8, 4).unwrap();
    let r = mobility::resistance_set(&body, &KernelParams::new(0.1)).unwrap();
    (body, r)
}

fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}

fn sorted_lambdas(r: &ResistanceSet, body: &DiscreteBody) -> Vec<f64> {
    let mp = geometry::mass_properties(body, 0.3).unwrap();
    let f = fall_operator(r, &mp).unwrap();
    let mut l: Vec<f64> = real_eigenpairs(&f.matrix)
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.lambda, p.multiplicity))
        .collect();
    l.sort_by(f64::total_cmp);
    l
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kernel_is_positive_definite(r in 0.0f64..50.0, ell in 0.01f64..5.0) {
        let p = KernelParams::new(ell);
        let k = kernel_scalars(r, &p).unwrap();
        prop_assert!(k.a > 0.0);
        prop_assert!(k.a + k.b > 0.0);
        let eig = oseen_hyper(&Vector3::new(r, 0.0, 0.0), &p).symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0);
    }

    #[test]
    fn kernel_scales_inversely_with_viscosity(r in 0.0f64..10.0, mu in 0.1f64..10.0) {
        let one = kernel_scalars(r, &KernelParams::new(0.3)).unwrap();
        let scaled = kernel_scalars(r, &KernelParams::new(0.3).with_mu(mu)).unwrap();
        prop_assert!((scaled.a * mu - one.a).abs() <= 1e-14 * one.a);
        prop_assert!((scaled.b * mu - one.b).abs() <= 1e-14 * one.a);
    }

    #[test]
    fn recentering_is_idempotent(seed in any::<u64>()) {
        let body = geometry::discretize(&polyline(seed), 8, 4).unwrap();
        let again = DiscreteBody::from_nodes(body.positions.clone(), body.weights.clone(), body.density.clone()).unwrap();
        for (a, b) in body.positions.iter().zip(&again.positions) {
            prop_assert!((a - b).norm() <= 1e-12 * body.length);
        }
        let moment: Vector3<f64> = body.positions.iter().zip(&body.weights).zip(&body.density)
            .map(|((x, w), rho)| x * (w * rho)).sum();
        prop_assert!(moment.norm() <= 1e-12 * body.length * body.length);
    }

    #[test]
    fn resistance_is_translation_invariant(seed in any::<u64>(), shift in prop::array::uniform3(-5.0f64..5.0)) {
        let spec = polyline(seed);
        let moved = map_vertices(&spec, |v| v + Vector3::from(shift));
        let (_, a) = resistance(&spec);
        let (_, b) = resistance(&moved);
        prop_assert!((a.grand - b.grand).norm() <= 1e-9 * a.grand.norm());
    }

    #[test]
    fn resistance_rotates_covariantly(seed in any::<u64>(), axis in prop::array::uniform3(-1.0f64..1.0), angle in 0.0f64..std::f64::consts::TAU) {
        prop_assume!(Vector3::from(axis).norm() > 0.1);
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::from(axis)), angle);
        let q = *rot.matrix();
        let spec = polyline(seed);
        let (body, a) = resistance(&spec);
        let (body_rot, b) = resistance(&map_vertices(&spec, |v| rot * v));
        prop_assert!(close(&(q * a.k_tt * q.transpose()), &b.k_tt, 1e-9));
        prop_assert!(close(&(q * a.k_tr * q.transpose()), &b.k_tr, 1e-9));
        prop_assert!(close(&(q * a.k_rr * q.transpose()), &b.k_rr, 1e-9));
        let (la, lb) = (sorted_lambdas(&a, &body), sorted_lambdas(&b, &body_rot));
        prop_assert_eq!(la.len(), lb.len());
        for (x, y) in la.iter().zip(&lb) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn mirror_image_flips_chirality(seed in any::<u64>()) {
        let spec = polyline(seed);
        let p = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        let (body, a) = resistance(&spec);
        let (body_m, b) = resistance(&map_vertices(&spec, |v| p * v));
        prop_assert!(close(&(p * a.k_tt * p), &b.k_tt, 1e-9));
        prop_assert!(close(&(-p * a.k_tr * p), &b.k_tr, 1e-9));
        prop_assert!(close(&(p * a.k_rr * p), &b.k_rr, 1e-9));
        let la = sorted_lambdas(&a, &body);
        let mut lb: Vec<f64> = sorted_lambdas(&b, &body_m).iter().map(|l| -l).collect();
        lb.sort_by(f64::total_cmp);
        prop_assert_eq!(la.len(), lb.len());
        for (x, y) in la.iter().zip(&lb) {
            prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn grand_matrix_is_symmetric_positive(seed in any::<u64>()) {
        let (_, r) = resistance(&polyline(seed));
        prop_assert!(r.meta.asymmetry <= 1e-8);
        let eig = r.grand.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0, "{:?}", eig);
    }

    #[test]
    fn every_polyline_has_a_steady_state(seed in any::<u64>(), mc in 0.0f64..2.0) {
        let spec = polyline(seed);
        let (body, mp) = common::body(&spec, 8, mc);
        let r = mobility::resistance_set(&body, &KernelParams::new(0.1)).unwrap();
        let states = steady_states(&r, &mp).unwrap();
        prop_assert!(!states.is_empty());
        for s in &states {
            prop_assert!((s.g.norm() - 1.0).abs() < 1e-12);
            prop_assert!((s.omega - s.g * s.lambda).norm() <= 1e-14 * (1.0 + s.lambda.abs()));
        }
    }

    #[test]
    fn viscosity_rescales_velocities(seed in any::<u64>(), mu in 0.25f64..4.0) {
        let spec = polyline(seed);
        let (body, mp) = common::body(&spec, 8, 0.3);
        let base = steady_states(&mobility::resistance_set(&body, &KernelParams::new(0.1)).unwrap(), &mp).unwrap();
        let scaled = steady_states(&mobility::resistance_set(&body, &KernelParams::new(0.1).with_mu(mu)).unwrap(), &mp).unwrap();
        prop_assert_eq!(base.len(), scaled.len());
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert!((b.xi * mu - a.xi).norm() <= 1e-9 * a.xi.norm());
            prop_assert!((b.omega * mu - a.omega).norm() <= 1e-9 * (a.omega.norm() + a.xi.norm()));
        }
    }

    #[test]
    fn gravity_stays_unit_and_frame_orthonormal(seed in any::<u64>(), re in 0.0f64..3.0) {
        let spec = polyline(seed);
        let (body, mp) = common::body(&spec, 8, 0.3);
        let r = mobility::resistance_set(&body, &KernelParams::new(0.1)).unwrap();
        let g = common::random_unit(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let params = DynamicsParams { reynolds: re, dt: 0.05, t_end: 20.0, steady_tol: 0.0, output_stride: 10 };
        let traj = dynamics::integrate(&FallState::at_rest(g), &r, &mp, &params, &[]).unwrap();
        for s in &traj.samples {
            prop_assert!((s.gravity.norm() - 1.0).abs() < 1e-8);
            prop_assert!((s.orientation.transpose() * s.orientation - Matrix3::identity()).amax() < 1e-8);
            prop_assert!((s.orientation.transpose() * g - s.gravity).norm() < 1e-6);
        }
    }
}

#[test]
fn drag_vanishes_as_thickness_shrinks() {
    // the classical limit loses the finite self-mobility: translational
    // resistance at fixed resolution falls with the effective thickness
    let body = geometry::discretize(&CurveSpec::rod(1.0), 16, 4).unwrap();
    let drags: Vec<f64> = [1.0, 0.1, 0.01, 0.001]
        .iter()
        .map(|&ell| {
            let r = mobility::resistance_set(&body, &KernelParams::new(ell)).unwrap();
            r.k_tt.symmetric_eigen().eigenvalues.max()
        })
        .collect();
    assert!(drags.windows(2).all(|w| w[1] < w[0]), "{drags:?}");
}
