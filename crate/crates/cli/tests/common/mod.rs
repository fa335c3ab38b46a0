#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deltascope::io::{Dtype, NamedTensorMap};
use deltascope::Matrix;
use deltascope_oracle::{gaussian, rng, Dense};

pub const LAYERS: [(&str, usize, usize); 4] = [
    ("model.layers.0.mlp.down_proj", 12, 16),
    ("model.layers.0.self_attn.q_proj", 12, 12),
    ("model.layers.1.mlp.up_proj", 16, 12),
    ("model.layers.1.self_attn.v_proj", 12, 12),
];
pub const RANK: usize = 2;
pub const ALPHA: f64 = 4.0;

pub fn to_matrix(d: &Dense) -> Matrix {
    Matrix::from_row_major(d.rows, d.cols, &d.data).unwrap()
}

pub fn to_dense(m: &Matrix) -> Dense {
    Dense::new(m.rows(), m.cols(), m.to_row_major())
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub base: PathBuf,
    pub adapter: PathBuf,
    /// Dense base weights and adapter factors `(W, B, A)` per target path.
    pub layers: Vec<(String, Dense, Dense, Dense)>,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Four-layer base checkpoint plus a norm vector, and a PEFT-named rank-2
/// adapter for every layer with an `adapter_config.json` sidecar.
pub fn four_layer_fixture(seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(seed);
    let mut base = NamedTensorMap::new();
    let mut adapter = NamedTensorMap::new();
    let mut layers = Vec::new();
    for (stem, d, k) in LAYERS {
        let w = gaussian(&mut r, d, k);
        let b = gaussian(&mut r, d, RANK);
        let a = gaussian(&mut r, RANK, k);
        base.insert(format!("{stem}.weight"), to_matrix(&w));
        adapter.insert(format!("base_model.model.{stem}.lora_A.weight"), to_matrix(&a));
        adapter.insert(format!("base_model.model.{stem}.lora_B.weight"), to_matrix(&b));
        layers.push((format!("{stem}.weight"), w, b, a));
    }
    base.insert_vector("model.norm.weight", &[1.0; 12]).unwrap();
    let base_path = dir.path().join("base.safetensors");
    let adapter_path = dir.path().join("adapter_model.safetensors");
    base.save(&base_path, Dtype::F64).unwrap();
    adapter.save(&adapter_path, Dtype::F64).unwrap();
    std::fs::write(
        dir.path().join("adapter_config.json"),
        format!("{{\"alpha\": {ALPHA}, \"r\": {RANK}}}\n"),
    )
    .unwrap();
    Fixture { dir, base: base_path, adapter: adapter_path, layers }
}

pub fn deltascope(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deltascope"))
        .args(args.iter().map(|a| a.as_ref()))
        .env_remove("DELTASCOPE_THREADS")
        .output()
        .unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Compares against `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(name: &str, bytes: &[u8]) -> Result<(), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, bytes).unwrap();
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == bytes {
        Ok(())
    } else {
        Err(format!("{name} differs from golden file"))
    }
}

pub fn report_layers(bytes: &[u8]) -> Vec<serde_json::Value> {
    let doc: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    doc["layers"].as_array().unwrap().clone()
}
