//! Merging updates into base weights: plain addition, or addition after
//! removing the update's component in the base's dominant column space
//! (`OrthoCol`) or column and row spaces with rescaling (`OrthoBoth`).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{DeltaSource, NamedTensorMap};
use crate::linalg::{project_col_complement, project_row_complement, truncated_svd, Matrix, TruncatedSvd};

pub const DEFAULT_MERGE_K: usize = 64;

/// Rescaling factors swept for `OrthoBoth`, in the published order.
pub const LAMBDA_SWEEP: [f64; 5] = [1.0, 1.15, 1.75, 1.2, 1.25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    Vanilla,
    OrthoCol,
    OrthoBoth,
}

impl MergeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MergeMode::Vanilla => "vanilla",
            MergeMode::OrthoCol => "ortho_col",
            MergeMode::OrthoBoth => "ortho_both",
        }
    }
}

impl std::str::FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(MergeMode::Vanilla),
            "ortho_col" | "ortho-col" => Ok(MergeMode::OrthoCol),
            "ortho_both" | "ortho-both" => Ok(MergeMode::OrthoBoth),
            other => Err(Error::InvalidArgument(format!("unknown merge mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeConfig {
    pub mode: MergeMode,
    /// Projector rank; ignored by `Vanilla`.
    pub k: usize,
    /// Rescaling of the projected update; used by `OrthoBoth` only.
    pub lambda: f64,
    /// Copy tensors without an update into the output.
    pub passthrough_missing: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            mode: MergeMode::Vanilla,
            k: DEFAULT_MERGE_K,
            lambda: 1.0,
            passthrough_missing: true,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Projector rank actually used for a `d × k` layer. A rank of `min(d, k)`
/// or more would annihilate every update, so it is lowered to `min(d, k) − 1`.
pub fn effective_k(shape: (usize, usize), k: usize) -> (usize, bool) {
    let min_dim = shape.0.min(shape.1);
    if k >= min_dim {
        (min_dim - 1, true)
    } else {
        (k, false)
    }
}

fn clamp_logged(path: &str, shape: (usize, usize), k: usize) -> usize {
    let (eff, clamped) = effective_k(shape, k);
    if clamped {
        log::warn!("{path}: projector rank {k} clamped to {eff} for {}x{} layer", shape.0, shape.1);
    }
    eff
}

/// `W_I + ΔW`.
pub fn merge_vanilla(base: &Matrix, delta: &DeltaSource) -> Result<Matrix> {
    let update = delta.materialize_for(base)?;
    Ok(base + &update)
}

/// `W_I + (I − U_k U_kᵀ) ΔW`, with `U_k` from the rank-`k` SVD of `W_I`.
pub fn ortho_merge_col(base: &Matrix, delta: &DeltaSource, k: usize) -> Result<Matrix> {
    let update = delta.materialize_for(base)?;
    let k = clamp_logged(delta.target(), base.shape(), k);
    if k == 0 {
        return Ok(base + &update);
    }
    let svd = truncated_svd(base, k)?;
    merge_projected(base, &update, MergeMode::OrthoCol, Some(&svd), 1.0)
}

/// `W_I + λ (I − U_k U_kᵀ) ΔW (I − V_k V_kᵀ)`.
pub fn ortho_merge_both(base: &Matrix, delta: &DeltaSource, k: usize, lambda: f64) -> Result<Matrix> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    let update = delta.materialize_for(base)?;
    let k = clamp_logged(delta.target(), base.shape(), k);
    let svd = if k == 0 { None } else { Some(truncated_svd(base, k)?) };
    merge_projected(base, &update, MergeMode::OrthoBoth, svd.as_ref(), lambda)
}

/// Applies `mode` to an already materialized update. `svd == None` stands for
/// an empty projector.
pub fn merge_projected(
    base: &Matrix,
    update: &Matrix,
    mode: MergeMode,
    svd: Option<&TruncatedSvd>,
    lambda: f64,
) -> Result<Matrix> {
    base.ensure_same_shape(update, "merge")?;
    let projected = match (mode, svd) {
        (MergeMode::Vanilla, _) | (MergeMode::OrthoCol, None) => return Ok(base + update),
        (MergeMode::OrthoBoth, None) => update.clone(),
        (MergeMode::OrthoCol, Some(svd)) => project_col_complement(update, svd.u())?,
        (MergeMode::OrthoBoth, Some(svd)) => {
            let left = project_col_complement(update, svd.u())?;
            project_row_complement(&left, svd.v())?
        }
    };
    if mode == MergeMode::OrthoBoth && lambda != 1.0 {
        Ok(base + &projected.scale(lambda))
    } else {
        Ok(base + &projected)
    }
}

/// Truncated SVDs of base layers, reused across merges of the same base.
#[derive(Debug, Default, Clone)]
pub struct SvdCache {
    entries: BTreeMap<String, TruncatedSvd>,
}

impl SvdCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rank-`k` decomposition of `base` at `path`, computing it on a miss or
    /// when the cached rank is too small.
    pub fn get_or_compute(&mut self, path: &str, base: &Matrix, k: usize) -> Result<TruncatedSvd> {
        if let Some(svd) = self.entries.get(path) {
            if svd.rank() >= k {
                return svd.truncate(k);
            }
        }
        let svd = truncated_svd(base, k)?;
        self.entries.insert(path.to_string(), svd.clone());
        Ok(svd)
    }

    /// Fills the cache for many layers at once, in parallel.
    fn prefill(&mut self, jobs: &[(&str, &Matrix, usize)]) -> Result<()> {
        let missing: Vec<_> = jobs
            .iter()
            .filter(|(p, _, k)| *k > 0 && self.entries.get(*p).is_none_or(|s| s.rank() < *k))
            .collect();
        let computed = missing
            .par_iter()
            .map(|(p, w, k)| truncated_svd(w, *k).map(|s| (p.to_string(), s)))
            .collect::<Result<Vec<_>>>()?;
        self.entries.extend(computed);
        Ok(())
    }
}

/// What a checkpoint merge did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeManifest {
    pub mode: MergeMode,
    pub k: usize,
    pub lambda: f64,
    pub layers_merged: Vec<String>,
    /// Base tensors without an update.
    pub layers_skipped: Vec<String>,
    /// Layers whose projector rank was lowered to fit their shape.
    pub clamped_layers: Vec<String>,
}

impl MergeManifest {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub merged: NamedTensorMap,
    pub manifest: MergeManifest,
}

pub fn merge_checkpoint(
    base: &NamedTensorMap,
    deltas: &BTreeMap<String, DeltaSource>,
    cfg: &MergeConfig,
) -> Result<MergeOutcome> {
    merge_checkpoint_cached(base, deltas, cfg, &mut SvdCache::new())
}

/// [`merge_checkpoint`] reusing (and filling) `cache`.
pub fn merge_checkpoint_cached(
    base: &NamedTensorMap,
    deltas: &BTreeMap<String, DeltaSource>,
    cfg: &MergeConfig,
    cache: &mut SvdCache,
) -> Result<MergeOutcome> {
    cfg.validate()?;
    let mut jobs = Vec::with_capacity(deltas.len());
    let mut clamped_layers = Vec::new();
    for (path, delta) in deltas {
        let w = base.get(path).ok_or_else(|| Error::Tensor {
            tensor: path.clone(),
            message: "update targets a tensor missing from the base checkpoint".into(),
        })?;
        if delta.shape() != w.shape() {
            return Err(Error::shape(format!("update for `{path}`"), w.shape(), delta.shape()));
        }
        let k = if cfg.mode == MergeMode::Vanilla {
            0
        } else {
            let (eff, clamped) = effective_k(w.shape(), cfg.k);
            if clamped {
                log::warn!("{path}: projector rank {} clamped to {eff}", cfg.k);
                clamped_layers.push(path.clone());
            }
            eff
        };
        jobs.push((path.as_str(), w, k));
    }
    cache.prefill(&jobs)?;

    let cache_ref = &*cache;
    let merged_layers = jobs
        .par_iter()
        .map(|&(path, w, k)| {
            let update = deltas[path].materialize();
            let svd = if k == 0 {
                None
            } else {
                Some(cache_ref.entries[path].truncate(k)?)
            };
            merge_projected(w, &update, cfg.mode, svd.as_ref(), cfg.lambda).map(|m| (path, m))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut merged = base.clone();
    let layers_skipped: Vec<String> = base
        .paths()
        .filter(|p| !deltas.contains_key(*p))
        .map(str::to_string)
        .collect();
    if !cfg.passthrough_missing {
        let mut kept = NamedTensorMap::new();
        *kept.metadata_mut() = base.metadata().clone();
        for (path, entry) in base.iter() {
            if deltas.contains_key(path) {
                kept.insert_entry(path.to_string(), entry.clone());
            }
        }
        merged = kept;
    }
    let mut layers_merged = Vec::with_capacity(merged_layers.len());
    for (path, m) in merged_layers {
        merged.replace_values(path, m);
        layers_merged.push(path.to_string());
    }

    Ok(MergeOutcome {
        merged,
        manifest: MergeManifest {
            mode: cfg.mode,
            k: cfg.k,
            lambda: cfg.lambda,
            layers_merged,
            layers_skipped,
            clamped_layers,
        },
    })
}
