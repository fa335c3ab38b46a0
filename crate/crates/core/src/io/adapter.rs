use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor_map::NamedTensorMap;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const LORA_A: &str = ".lora_A.weight";
const LORA_B: &str = ".lora_B.weight";
const PEFT_PREFIX: &str = "base_model.model.";

/// Low-rank factors of one adapted weight: `ΔW = (α / r) · B · A`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterPair {
    target: String,
    b: Matrix,
    a: Matrix,
    alpha: f64,
}

impl AdapterPair {
    /// `b` is `d × r`, `a` is `r × k`.
    pub fn new(target: impl Into<String>, b: Matrix, a: Matrix, alpha: f64) -> Result<Self> {
        let target = target.into();
        if a.rows() != b.cols() {
            return Err(Error::Adapter {
                target,
                message: format!(
                    "rank mismatch: A is {}x{} but B is {}x{}",
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols()
                ),
            });
        }
        let r = a.rows();
        if r > b.rows().min(a.cols()) {
            return Err(Error::Adapter {
                target,
                message: format!("rank {r} exceeds min(d, k) = {}", b.rows().min(a.cols())),
            });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Adapter {
                target,
                message: format!("alpha must be positive, got {alpha}"),
            });
        }
        Ok(Self { target, b, a, alpha })
    }

    /// Path of the base weight this adapter modifies.
    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    /// `α / r`.
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank() as f64
    }

    /// Shape of the materialized update, `(d, k)`.
    pub fn delta_shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }

    pub fn with_factors(&self, b: Matrix, a: Matrix) -> Result<Self> {
        Self::new(self.target.clone(), b, a, self.alpha)
    }

    /// `(α / r) · B · A`.
    pub fn delta(&self) -> Matrix {
        let ba = &self.b * &self.a;
        if self.alpha == self.rank() as f64 {
            ba
        } else {
            ba.scale(self.scaling())
        }
    }
}

/// Sidecar JSON next to an adapter container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    #[serde(alias = "lora_alpha")]
    pub alpha: f64,
    pub r: usize,
    #[serde(default)]
    pub target_modules: Vec<String>,
}

impl AdapterConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: AdapterConfig = serde_json::from_str(&text)?;
        if !(cfg.alpha > 0.0) || cfg.r == 0 {
            return Err(Error::InvalidArgument(format!(
                "{}: alpha and r must be positive",
                path.display()
            )));
        }
        Ok(cfg)
    }
}

/// How adapter tensor names map onto base weight paths.
#[derive(Debug, Clone, Default)]
pub enum AdapterNaming {
    /// `<stem>.lora_A.weight` / `<stem>.lora_B.weight`, targeting
    /// `<stem>.weight` after dropping a leading `base_model.model.`.
    #[default]
    Peft,
    /// `<stem>.lora_A.weight` / `<stem>.lora_B.weight`, targeting the base path
    /// given for `<stem>`.
    Explicit(BTreeMap<String, String>),
}

impl AdapterNaming {
    fn target_for(&self, stem: &str) -> Result<String> {
        match self {
            AdapterNaming::Peft => {
                let stem = stem.strip_prefix(PEFT_PREFIX).unwrap_or(stem);
                Ok(format!("{stem}.weight"))
            }
            AdapterNaming::Explicit(map) => map.get(stem).cloned().ok_or_else(|| Error::Adapter {
                target: stem.to_string(),
                message: "no explicit target mapping".into(),
            }),
        }
    }
}

/// Adapters read from one container.
#[derive(Debug, Clone)]
pub struct AdapterSet {
    pub pairs: Vec<AdapterPair>,
    /// Tensors that follow neither side of the naming convention.
    pub unpaired: Vec<String>,
    pub config: AdapterConfig,
}

/// Sidecar location for an adapter container: `<file>.json` if present,
/// otherwise `adapter_config.json` in the same directory.
pub fn sidecar_path(adapter: &Path) -> PathBuf {
    let sibling = adapter.with_extension("json");
    if sibling.exists() {
        return sibling;
    }
    adapter
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("adapter_config.json")
}

pub fn load_adapters(path: impl AsRef<Path>, naming: &AdapterNaming) -> Result<AdapterSet> {
    let path = path.as_ref();
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(Error::InvalidArgument(format!(
            "missing adapter sidecar for {} (looked for {})",
            path.display(),
            sidecar.display()
        )));
    }
    let config = AdapterConfig::load(&sidecar)?;
    let tensors = NamedTensorMap::load(path)?;
    pair_adapters(&tensors, config, naming)
}

/// Pairs `lora_A` / `lora_B` tensors. Output is ordered by stem.
pub fn pair_adapters(
    tensors: &NamedTensorMap,
    config: AdapterConfig,
    naming: &AdapterNaming,
) -> Result<AdapterSet> {
    let mut halves: BTreeMap<&str, (Option<&Matrix>, Option<&Matrix>)> = BTreeMap::new();
    let mut unpaired = Vec::new();
    for (name, entry) in tensors.iter() {
        if let Some(stem) = name.strip_suffix(LORA_A) {
            halves.entry(stem).or_default().0 = Some(entry.matrix());
        } else if let Some(stem) = name.strip_suffix(LORA_B) {
            halves.entry(stem).or_default().1 = Some(entry.matrix());
        } else {
            unpaired.push(name.to_string());
        }
    }

    let mut pairs = Vec::with_capacity(halves.len());
    for (stem, halves) in halves {
        let (a, b) = match halves {
            (Some(a), Some(b)) => (a, b),
            (Some(_), None) => {
                return Err(Error::Adapter {
                    target: stem.to_string(),
                    message: "lora_A present without matching lora_B".into(),
                })
            }
            (None, _) => {
                return Err(Error::Adapter {
                    target: stem.to_string(),
                    message: "lora_B present without matching lora_A".into(),
                })
            }
        };
        if a.rows() != config.r || b.cols() != config.r {
            return Err(Error::Adapter {
                target: stem.to_string(),
                message: format!(
                    "rank mismatch: sidecar r = {}, A is {}x{}, B is {}x{}",
                    config.r,
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols()
                ),
            });
        }
        let target = naming.target_for(stem)?;
        pairs.push(AdapterPair::new(target, b.clone(), a.clone(), config.alpha)?);
    }
    if !unpaired.is_empty() {
        log::warn!("{} adapter tensors outside the lora_A/lora_B convention", unpaired.len());
    }
    Ok(AdapterSet {
        pairs,
        unpaired,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(r: usize) -> AdapterConfig {
        AdapterConfig {
            alpha: 16.0,
            r,
            target_modules: vec![],
        }
    }

    #[test]
    fn single_pair() {
        let mut t = NamedTensorMap::new();
        t.insert("L.lora_A.weight", Matrix::zeros(4, 64));
        t.insert("L.lora_B.weight", Matrix::zeros(128, 4));
        let set = pair_adapters(&t, config(4), &AdapterNaming::Peft).unwrap();
        assert_eq!(set.pairs.len(), 1);
        let p = &set.pairs[0];
        assert_eq!((p.rank(), p.alpha(), p.target()), (4, 16.0, "L.weight"));
        assert_eq!(p.delta_shape(), (128, 64));
    }

    #[test]
    fn missing_b_names_stem() {
        let mut t = NamedTensorMap::new();
        t.insert("L.lora_A.weight", Matrix::zeros(4, 64));
        let err = pair_adapters(&t, config(4), &AdapterNaming::Peft).unwrap_err();
        assert!(matches!(&err, Error::Adapter { target, .. } if target == "L"), "{err}");
    }

    #[test]
    fn rank_mismatch() {
        let mut t = NamedTensorMap::new();
        t.insert("L.lora_A.weight", Matrix::zeros(4, 8));
        t.insert("L.lora_B.weight", Matrix::zeros(8, 3));
        assert!(pair_adapters(&t, config(4), &AdapterNaming::Peft).is_err());
        assert!(AdapterPair::new("x", Matrix::zeros(8, 3), Matrix::zeros(4, 8), 1.0).is_err());
    }

    #[test]
    fn peft_prefix_and_explicit_naming() {
        let mut t = NamedTensorMap::new();
        t.insert("base_model.model.m.q_proj.lora_A.weight", Matrix::zeros(1, 3));
        t.insert("base_model.model.m.q_proj.lora_B.weight", Matrix::zeros(2, 1));
        t.insert("extra.bias", Matrix::zeros(1, 2));
        let set = pair_adapters(&t, config(1), &AdapterNaming::Peft).unwrap();
        assert_eq!(set.pairs[0].target(), "m.q_proj.weight");
        assert_eq!(set.unpaired, vec!["extra.bias".to_string()]);

        let explicit = AdapterNaming::Explicit(
            [("base_model.model.m.q_proj".to_string(), "layer0.attn.q".to_string())].into(),
        );
        let set = pair_adapters(&t, config(1), &explicit).unwrap();
        assert_eq!(set.pairs[0].target(), "layer0.attn.q");
        assert!(pair_adapters(&t, config(1), &AdapterNaming::Explicit(BTreeMap::new())).is_err());
    }

    #[test]
    fn sidecar_accepts_peft_alias() {
        let cfg: AdapterConfig =
            serde_json::from_str(r#"{"lora_alpha": 16, "r": 4, "target_modules": ["q_proj"]}"#).unwrap();
        assert_eq!(cfg.alpha, 16.0);
    }
}
