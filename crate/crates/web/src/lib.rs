//! Browser bindings: the expected-activation curve, missing-pattern grids and
//! a small GCNmf vs. mean-imputation comparison on a synthetic graph.
//!
//! The `*_impl` functions carry the logic and run natively; the exported
//! wrappers only translate errors for JavaScript.

use gcnmf::activation::{expected_with_grad, Activation};
use gcnmf::data::{generate_synthetic, SyntheticSpec};
use gcnmf::experiment::{run_plan, summarize, ExperimentPlan, Method};
use gcnmf::mask::{generate_mask, MaskSpec, MissingPattern};
use gcnmf::model::TrainConfig;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn activation(alpha: f64) -> Activation {
    if alpha == 0.0 {
        Activation::Relu
    } else {
        Activation::LeakyRelu { alpha }
    }
}

/// `points` triples `(μ, E[σ(N(μ, s²))], σ(μ))` for μ evenly spaced in `[lo, hi]`.
pub fn activation_curve_impl(lo: f64, hi: f64, sd: f64, alpha: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(sd >= 0.0) || !(hi > lo) || points < 2 {
        return Err(format!("need sd >= 0, hi > lo and at least 2 points (got sd={sd}, [{lo}, {hi}], {points})"));
    }
    let act = activation(alpha);
    let mut out = Vec::with_capacity(3 * points);
    for i in 0..points {
        let mu = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        out.extend([mu, expected_with_grad(act, mu, sd * sd).0, act.apply(mu)]);
    }
    Ok(out)
}

/// Row-major 0/1 grid, 1 = missing.
pub fn mask_grid_impl(pattern: &str, mr: f64, rows: usize, cols: usize, seed: u64) -> Result<Vec<u8>, String> {
    let pattern: MissingPattern = pattern.parse().map_err(|e| format!("{e}"))?;
    let mask = generate_mask(&MaskSpec { pattern, mr, seed }, rows, cols).map_err(|e| format!("{e}"))?;
    Ok(mask.bits().iter().map(|&b| b as u8).collect())
}

#[derive(Serialize)]
struct MethodReport {
    method: &'static str,
    mean: f64,
    std: f64,
    /// Validation accuracy per epoch of the first seed.
    val_curve: Vec<f64>,
}

/// Trains GCNmf and MEAN+GCN on a 150-node, 3-class block model; JSON report.
pub fn compare_impl(pattern: &str, mr: f64, seeds: usize, seed: u64) -> Result<String, String> {
    let pattern: MissingPattern = pattern.parse().map_err(|e| format!("{e}"))?;
    let ds = generate_synthetic(&SyntheticSpec {
        nodes: 150,
        clusters: 3,
        feature_dim: 12,
        intra_p: 0.08,
        inter_p: 0.01,
        feature_noise: 0.8,
        seed,
        train_per_class: 5,
        val_per_class: 15,
    })
    .map_err(|e| format!("{e}"))?;
    let plan = ExperimentPlan {
        patterns: vec![pattern],
        mrs: vec![mr],
        methods: vec![Method::Gcnmf, Method::MeanGcn],
        mask_instances: 1,
        seeds_per_instance: seeds.max(1),
        config: TrainConfig {
            max_epochs: 150,
            patience: 50,
            k: 3,
            ..TrainConfig::default()
        },
        seed,
        ..ExperimentPlan::default()
    };
    let outcomes = run_plan(&ds, &plan).map_err(|e| format!("{e}"))?;
    let reports: Vec<MethodReport> = summarize(&plan, &outcomes)
        .into_iter()
        .map(|c| {
            let val_curve = outcomes
                .iter()
                .find(|o| o.spec.method == c.method)
                .and_then(|o| o.result.as_ref().ok())
                .map(|r| r.val_acc_curve.clone())
                .unwrap_or_default();
            MethodReport {
                method: c.method.name(),
                mean: c.mean,
                std: c.std,
                val_curve,
            }
        })
        .collect();
    serde_json::to_string(&reports).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn activation_curve(lo: f64, hi: f64, sd: f64, alpha: f64, points: usize) -> Result<Vec<f64>, JsError> {
    activation_curve_impl(lo, hi, sd, alpha, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mask_grid(pattern: &str, mr: f64, rows: usize, cols: usize, seed: u64) -> Result<Vec<u8>, JsError> {
    mask_grid_impl(pattern, mr, rows, cols, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(pattern: &str, mr: f64, seeds: usize, seed: u64) -> Result<String, JsError> {
    compare_impl(pattern, mr, seeds, seed).map_err(|e| JsError::new(&e))
}
