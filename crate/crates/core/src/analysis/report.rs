use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{alignment_metrics_with_svd, AlignmentMetrics};
use crate::error::{Error, Result};
use crate::io::{is_analyzable, DeltaSource, NamedTensorMap};
use crate::linalg::{frobenius_norm, stable_rank, truncated_svd, Matrix};

const KNOWN_MODULES: &[&str] = &[
    "q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj", "qkv_proj",
    "gate_up_proj", "out_proj", "fc1", "fc2",
];

/// Penultimate dot-separated segment when it names a known projection,
/// otherwise `"other"`.
pub fn module_type(path: &str) -> &str {
    let mut segs = path.rsplit('.');
    segs.next();
    match segs.next() {
        Some(seg) if KNOWN_MODULES.contains(&seg) => seg,
        _ => "other",
    }
}

/// First all-digit path segment, e.g. `12` in `model.layers.12.mlp.up_proj.weight`.
pub fn layer_index(path: &str) -> Option<usize> {
    path.split('.')
        .find(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|s| s.parse().ok())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub path: String,
    pub layer_index: Option<usize>,
    pub module_type: String,
    pub d: usize,
    pub k: usize,
    /// Absent when the update is exactly zero.
    pub stable_rank: Option<f64>,
    pub metrics: Option<AlignmentMetrics>,
    pub base_fro_norm: f64,
    pub delta_fro_norm: f64,
}

impl LayerReport {
    pub fn is_zero_update(&self) -> bool {
        self.metrics.is_none()
    }
}

/// Clamps `top_t` to `min(d, k)`, logging when it has to.
pub fn effective_top_t(path: &str, shape: (usize, usize), top_t: usize) -> usize {
    let min_dim = shape.0.min(shape.1);
    if top_t > min_dim {
        log::warn!("{path}: top_t {top_t} clamped to min(d, k) = {min_dim}");
        min_dim
    } else {
        top_t.max(1)
    }
}

/// Stable rank, alignment metrics and norms for one layer's update.
pub fn analyze_layer(path: &str, base: &Matrix, delta: &DeltaSource, top_t: usize) -> Result<LayerReport> {
    let update = delta.materialize_for(base)?;
    let mut report = LayerReport {
        path: path.to_string(),
        layer_index: layer_index(path),
        module_type: module_type(path).to_string(),
        d: base.rows(),
        k: base.cols(),
        stable_rank: None,
        metrics: None,
        base_fro_norm: frobenius_norm(base),
        delta_fro_norm: frobenius_norm(&update),
    };
    if update.is_zero() {
        return Ok(report);
    }
    let t = effective_top_t(path, base.shape(), top_t);
    let svd = truncated_svd(base, t)?;
    report.stable_rank = Some(stable_rank(&update)?);
    report.metrics = Some(alignment_metrics_with_svd(base, &update, &svd)?);
    Ok(report)
}

/// Analyzes every update whose target is an analyzable base tensor, in
/// parallel. Output is sorted by path.
pub fn analyze_updates(
    base: &NamedTensorMap,
    deltas: &BTreeMap<String, DeltaSource>,
    top_t: usize,
) -> Result<Vec<LayerReport>> {
    let mut jobs = Vec::with_capacity(deltas.len());
    for (path, delta) in deltas {
        let entry = base.entry(path).ok_or_else(|| Error::Tensor {
            tensor: path.clone(),
            message: "update targets a tensor missing from the base checkpoint".into(),
        })?;
        if is_analyzable(path, entry) {
            jobs.push((path.as_str(), entry.matrix(), delta));
        } else {
            log::debug!("skipping non-analyzable tensor {path}");
        }
    }
    let mut reports = jobs
        .into_par_iter()
        .map(|(path, w, delta)| analyze_layer(path, w, delta, top_t))
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleAggregate {
    /// Every layer of this module type, zero updates included.
    pub layer_count: usize,
    /// Layers that contributed to the means.
    pub nonzero_count: usize,
    pub stable_rank: Option<f64>,
    pub metrics: Option<AlignmentMetrics>,
}

/// Per-module-type means over layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub modules: BTreeMap<String, ModuleAggregate>,
}

/// Arithmetic means per module type. Zero-update layers are counted but do not
/// enter the means.
pub fn aggregate_reports(reports: &[LayerReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no layer reports to aggregate".into()));
    }
    let mut sorted: Vec<&LayerReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));

    let mut groups: BTreeMap<&str, Vec<&LayerReport>> = BTreeMap::new();
    for r in sorted {
        groups.entry(r.module_type.as_str()).or_default().push(r);
    }
    let modules = groups
        .into_iter()
        .map(|(module, layers)| {
            let live: Vec<_> = layers
                .iter()
                .filter_map(|r| Some((r.stable_rank?, r.metrics?)))
                .collect();
            let n = live.len() as f64;
            let (stable_rank, metrics) = if live.is_empty() {
                (None, None)
            } else {
                let mut sums = [0.0; 4];
                let mut sr = 0.0;
                for (s, m) in &live {
                    sr += s;
                    for (acc, v) in sums.iter_mut().zip(m.as_array()) {
                        *acc += v;
                    }
                }
                (
                    Some(sr / n),
                    Some(AlignmentMetrics {
                        m1: sums[0] / n,
                        m2: sums[1] / n,
                        m3: sums[2] / n,
                        m4: sums[3] / n,
                    }),
                )
            };
            (
                module.to_string(),
                ModuleAggregate {
                    layer_count: layers.len(),
                    nonzero_count: live.len(),
                    stable_rank,
                    metrics,
                },
            )
        })
        .collect();
    Ok(AggregateReport { modules })
}

/// Layer reports, their aggregates and the analysis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub layers: Vec<LayerReport>,
    pub aggregates: AggregateReport,
    pub top_t: usize,
}

impl AnalysisReport {
    pub fn new(mut layers: Vec<LayerReport>, top_t: usize) -> Self {
        layers.sort_by(|a, b| a.path.cmp(&b.path));
        let aggregates = if layers.is_empty() {
            AggregateReport::default()
        } else {
            aggregate_reports(&layers).expect("nonempty")
        };
        Self {
            layers,
            aggregates,
            top_t,
        }
    }
}
