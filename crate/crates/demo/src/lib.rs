//! Browser bindings for the slenderfall solver.
//!
//! Every export takes and returns JSON strings. The plain functions carry
//! the logic so they can be tested natively.

use serde::Serialize;
use slenderfall::cli::{execute, Mode, RunConfig};
use slenderfall::kernel::{kernel_scalars, KernelParams};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct KernelProfile {
    r: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `1/(8πμr)`, the Stokeslet value the hyperviscous kernel approaches.
    stokeslet: Vec<f64>,
}

/// `A(r)` and `B(r)` on `samples` points of `[0, r_max]`.
pub fn kernel_profile_json(
    ell: f64,
    mu: f64,
    r_max: f64,
    samples: usize,
) -> Result<String, String> {
    if !(r_max.is_finite() && r_max > 0.0) || !(2..=100_000).contains(&samples) {
        return Err("need r_max > 0 and 2 <= samples <= 100000".into());
    }
    let params = KernelParams::new(ell).with_mu(mu);
    params.validate().map_err(|e| e.to_string())?;
    let mut out = KernelProfile {
        r: Vec::with_capacity(samples),
        a: Vec::with_capacity(samples),
        b: Vec::with_capacity(samples),
        stokeslet: Vec::with_capacity(samples),
    };
    for i in 0..samples {
        let r = r_max * i as f64 / (samples - 1) as f64;
        let k = kernel_scalars(r, &params).map_err(|e| e.to_string())?;
        out.r.push(r);
        out.a.push(k.a);
        out.b.push(k.b);
        out.stokeslet.push(if r > 0.0 {
            1.0 / (8.0 * std::f64::consts::PI * mu * r)
        } else {
            f64::NAN
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn run(mode: Mode, config_json: &str) -> Result<slenderfall::cli::RunOutput, String> {
    let config = RunConfig::from_json(config_json).map_err(|e| e.to_string())?;
    execute(mode, &config).map_err(|e| e.to_string())
}

/// Steady states, resistance and mass properties for a run config.
pub fn steady_states_json(config_json: &str) -> Result<String, String> {
    let out = run(Mode::Steady, config_json)?;
    Ok(out.report_json())
}

#[derive(Serialize)]
struct FallOutput {
    report: serde_json::Value,
    /// Trajectory CSV, the same bytes the command-line tool writes.
    trajectory: String,
}

/// Quasi-steady sedimentation from rest; the config needs a dynamics block.
pub fn fall_trajectory_json(config_json: &str) -> Result<String, String> {
    let out = run(Mode::Fall, config_json)?;
    let report = serde_json::to_value(&out.report).map_err(|e| e.to_string())?;
    let trajectory = out
        .files
        .into_iter()
        .next()
        .map(|(_, csv)| csv)
        .unwrap_or_default();
    serde_json::to_string(&FallOutput { report, trajectory }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn kernel_profile(ell: f64, mu: f64, r_max: f64, samples: usize) -> Result<String, JsError> {
    kernel_profile_json(ell, mu, r_max, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn steady_states(config_json: &str) -> Result<String, JsError> {
    steady_states_json(config_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fall_trajectory(config_json: &str) -> Result<String, JsError> {
    fall_trajectory_json(config_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn version() -> String {
    slenderfall::cli::VERSION.to_string()
}
