//! Python bindings. Matrices cross the boundary as lists of row lists.

use std::collections::BTreeMap;

use deltascope::analysis::{analyze_updates, to_json, AnalysisReport, DEFAULT_TOP_T};
use deltascope::io::{diff_checkpoints, load_adapters, AdapterNaming, AdapterPair, DeltaSource, Dtype, NamedTensorMap};
use deltascope::merge::{merge_checkpoint, MergeConfig, MergeMode, DEFAULT_MERGE_K, LAMBDA_SWEEP};
use deltascope::penalty::{penalty_grads, BaseApprox, PenaltyConfig, PenaltyVariant};
use deltascope::scoring::{EvalLog, EvalRecord, SafetyPolarity};
use deltascope::toy::{run_comparison, run_scenario, ToyScenario};
use deltascope::{linalg, ErrorKind, Matrix};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyKeyError, PyOSError, PyValueError};
use pyo3::prelude::*;

create_exception!(deltascope, ShapeError, PyValueError, "Incompatible matrix or tensor shapes.");
create_exception!(deltascope, NumericError, PyArithmeticError, "Numerical failure.");

type Rows = Vec<Vec<f64>>;

fn err(e: deltascope::Error) -> PyErr {
    match (&e, e.kind()) {
        (deltascope::Error::Io { .. }, _) => PyOSError::new_err(e.to_string()),
        (_, ErrorKind::Shape) => ShapeError::new_err(e.to_string()),
        (_, ErrorKind::Numeric) => NumericError::new_err(e.to_string()),
        (_, ErrorKind::Input) => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Matrix::from_row_major(rows.len(), cols, &flat).map_err(err)
}

fn rows(m: &Matrix) -> Rows {
    let flat = m.to_row_major();
    if m.cols() == 0 {
        return vec![Vec::new(); m.rows()];
    }
    flat.chunks(m.cols()).map(<[f64]>::to_vec).collect()
}

fn parse<T: std::str::FromStr<Err = deltascope::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn dtype(tag: &str) -> PyResult<Dtype> {
    Dtype::parse(&tag.to_ascii_uppercase()).ok_or_else(|| PyValueError::new_err(format!("unknown precision {tag:?}")))
}

/// Named 2-D (and 1-D) tensors of a checkpoint container, held at fp64.
#[pyclass(module = "deltascope", skip_from_py_object)]
#[derive(Clone, Default)]
struct Checkpoint {
    inner: NamedTensorMap,
}

#[pymethods]
impl Checkpoint {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: NamedTensorMap::load(path).map_err(err)? })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: NamedTensorMap::from_bytes(data).map_err(err)? })
    }

    #[pyo3(signature = (path, precision = "F64"))]
    fn save(&self, path: &str, precision: &str) -> PyResult<()> {
        self.inner.save(path, dtype(precision)?).map_err(err)
    }

    #[pyo3(signature = (precision = "F64"))]
    fn to_bytes(&self, precision: &str) -> PyResult<Vec<u8>> {
        self.inner.to_bytes(dtype(precision)?).map_err(err)
    }

    fn names(&self) -> Vec<String> {
        self.inner.paths().map(str::to_string).collect()
    }

    fn get(&self, name: &str) -> PyResult<Rows> {
        self.inner.get(name).map(rows).ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    fn shape(&self, name: &str) -> PyResult<Vec<usize>> {
        self.inner
            .entry(name)
            .map(|e| e.shape().to_vec())
            .ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    fn dtype(&self, name: &str) -> PyResult<String> {
        self.inner
            .entry(name)
            .map(|e| e.dtype().tag().to_string())
            .ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }

    fn set(&mut self, name: &str, value: Rows) -> PyResult<()> {
        self.inner.insert(name, matrix(&value)?);
        Ok(())
    }

    fn set_vector(&mut self, name: &str, value: Vec<f64>) -> PyResult<()> {
        self.inner.insert_vector(name, &value).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, name: &str) -> bool {
        self.inner.contains(name)
    }

    fn __repr__(&self) -> String {
        format!("Checkpoint({} tensors)", self.inner.len())
    }
}

#[pyfunction]
fn stable_rank(m: Rows) -> PyResult<f64> {
    linalg::stable_rank(&matrix(&m)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (m, tol = 1e-10, max_iter = 1000))]
fn spectral_norm(m: Rows, tol: f64, max_iter: usize) -> PyResult<f64> {
    linalg::spectral_norm(&matrix(&m)?, tol, max_iter).map_err(err)
}

/// Top-`t` singular triplets as `(U, S, V)`.
#[pyfunction]
fn truncated_svd(m: Rows, t: usize) -> PyResult<(Rows, Vec<f64>, Rows)> {
    let svd = linalg::truncated_svd(&matrix(&m)?, t).map_err(err)?;
    Ok((rows(svd.u()), svd.s().to_vec(), rows(svd.v())))
}

#[pyfunction]
#[pyo3(signature = (base, delta, top_t = DEFAULT_TOP_T))]
fn alignment_metrics(base: Rows, delta: Rows, top_t: usize) -> PyResult<BTreeMap<&'static str, f64>> {
    let m = deltascope::analysis::alignment_metrics(&matrix(&base)?, &matrix(&delta)?, top_t).map_err(err)?;
    Ok(BTreeMap::from([("m1", m.m1), ("m2", m.m2), ("m3", m.m3), ("m4", m.m4)]))
}

/// `(alpha / r) · B · A`.
#[pyfunction]
fn lora_delta(b: Rows, a: Rows, alpha: f64) -> PyResult<Rows> {
    let pair = AdapterPair::new("w", matrix(&b)?, matrix(&a)?, alpha).map_err(err)?;
    Ok(rows(&pair.delta()))
}

/// Merges one dense update into one weight matrix.
#[pyfunction]
#[pyo3(signature = (base, delta, mode = "vanilla", k = DEFAULT_MERGE_K, lam = 1.0))]
fn merge_layer(base: Rows, delta: Rows, mode: &str, k: usize, lam: f64) -> PyResult<Rows> {
    let mode: MergeMode = parse(mode)?;
    let base = matrix(&base)?;
    let cfg = MergeConfig { mode, k, lambda: lam, passthrough_missing: true };
    cfg.validate().map_err(err)?;
    let mut map = NamedTensorMap::new();
    map.insert("w", base);
    let deltas = BTreeMap::from([("w".to_string(), DeltaSource::dense("w", matrix(&delta)?))]);
    let out = merge_checkpoint(&map, &deltas, &cfg).map_err(err)?;
    Ok(rows(out.merged.get("w").expect("merged layer present")))
}

fn adapter_deltas(path: &str, alpha: Option<f64>) -> PyResult<BTreeMap<String, DeltaSource>> {
    let set = load_adapters(path, &AdapterNaming::Peft).map_err(err)?;
    set.pairs
        .into_iter()
        .map(|p| {
            let p = match alpha {
                Some(a) => AdapterPair::new(p.target(), p.b().clone(), p.a().clone(), a).map_err(err)?,
                None => p,
            };
            Ok((p.target().to_string(), DeltaSource::from(p)))
        })
        .collect()
}

/// Merges a PEFT-named adapter (with its JSON sidecar) into `base`.
/// Returns the merged checkpoint and the manifest as a JSON string.
#[pyfunction]
#[pyo3(signature = (base, adapter_path, mode = "vanilla", k = DEFAULT_MERGE_K, lam = 1.0, alpha = None, passthrough = true))]
fn merge(
    base: &Checkpoint,
    adapter_path: &str,
    mode: &str,
    k: usize,
    lam: f64,
    alpha: Option<f64>,
    passthrough: bool,
) -> PyResult<(Checkpoint, String)> {
    let cfg = MergeConfig { mode: parse(mode)?, k, lambda: lam, passthrough_missing: passthrough };
    cfg.validate().map_err(err)?;
    let deltas = adapter_deltas(adapter_path, alpha)?;
    let out = merge_checkpoint(&base.inner, &deltas, &cfg).map_err(err)?;
    let manifest = String::from_utf8(out.manifest.to_json()).expect("JSON is UTF-8");
    Ok((Checkpoint { inner: out.merged }, manifest))
}

fn report(base: &NamedTensorMap, deltas: &BTreeMap<String, DeltaSource>, top_t: usize) -> PyResult<String> {
    let layers = analyze_updates(base, deltas, top_t).map_err(err)?;
    Ok(String::from_utf8(to_json(&AnalysisReport::new(layers, top_t))).expect("JSON is UTF-8"))
}

/// Per-layer report of `tuned − base` as a JSON string.
#[pyfunction]
#[pyo3(signature = (base, tuned, top_t = DEFAULT_TOP_T))]
fn analyze(base: &Checkpoint, tuned: &Checkpoint, top_t: usize) -> PyResult<String> {
    let diff = diff_checkpoints(&base.inner, &tuned.inner).map_err(err)?;
    report(&base.inner, &diff.deltas, top_t)
}

/// Per-layer report of an adapter's updates as a JSON string.
#[pyfunction]
#[pyo3(signature = (base, adapter_path, top_t = DEFAULT_TOP_T, alpha = None))]
fn analyze_adapter(base: &Checkpoint, adapter_path: &str, top_t: usize, alpha: Option<f64>) -> PyResult<String> {
    report(&base.inner, &adapter_deltas(adapter_path, alpha)?, top_t)
}

/// Penalty value and its gradients with respect to B and A.
#[pyfunction]
#[pyo3(signature = (base, b, a, alpha, variant = "col", beta = 1.0, base_rank = None))]
fn penalty(
    base: Rows,
    b: Rows,
    a: Rows,
    alpha: f64,
    variant: &str,
    beta: f64,
    base_rank: Option<usize>,
) -> PyResult<(f64, Rows, Rows)> {
    let variant: PenaltyVariant = parse(variant)?;
    let cfg = PenaltyConfig {
        variant,
        beta,
        base_approx: base_rank.map_or(BaseApprox::Exact, BaseApprox::Rank),
        ..PenaltyConfig::default()
    };
    let pair = AdapterPair::new("w", matrix(&b)?, matrix(&a)?, alpha).map_err(err)?;
    let r = penalty_grads(&matrix(&base)?, &pair, &cfg).map_err(err)?;
    Ok((r.value, rows(&r.grad_b), rows(&r.grad_a)))
}

/// Best rank-`m` approximation of `base`.
#[pyfunction]
fn low_rank_base(base: Rows, m: usize) -> PyResult<Rows> {
    Ok(rows(&deltascope::penalty::low_rank_base(&matrix(&base)?, m).map_err(err)?))
}

fn eval_log(outcomes: Vec<Vec<bool>>) -> PyResult<EvalLog> {
    let records = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, outcomes)| EvalRecord { id: i.to_string(), outcomes })
        .collect();
    EvalLog::new(records).map_err(err)
}

/// Pass@1 over per-question sample outcomes.
#[pyfunction]
fn pass_at_1(outcomes: Vec<Vec<bool>>) -> PyResult<f64> {
    deltascope::scoring::pass_at_1(&eval_log(outcomes)?).map_err(err)
}

/// Safety score of judge verdicts, `True` meaning safe.
#[pyfunction]
#[pyo3(signature = (verdicts, polarity = "safe_fraction"))]
fn safety_score(verdicts: Vec<bool>, polarity: &str) -> PyResult<f64> {
    let polarity: SafetyPolarity = parse(polarity)?;
    let log = eval_log(verdicts.into_iter().map(|v| vec![v]).collect())?;
    deltascope::scoring::safety_score(&log, polarity).map_err(err)
}

/// Runs the toy experiment for a scenario JSON string (defaults when
/// omitted) and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (scenario = None, compare = false))]
fn run_toy(py: Python<'_>, scenario: Option<&str>, compare: bool) -> PyResult<String> {
    let scenario = match scenario {
        Some(s) => ToyScenario::from_json(s.as_bytes()).map_err(err)?,
        None => ToyScenario::default(),
    };
    let bytes = py
        .detach(|| {
            if compare {
                run_comparison(&scenario).map(|c| c.to_json())
            } else {
                run_scenario(&scenario).map(|r| r.to_json())
            }
        })
        .map_err(err)?;
    Ok(String::from_utf8(bytes).expect("JSON is UTF-8"))
}

#[pymodule]
#[pyo3(name = "deltascope")]
fn deltascope_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Checkpoint>()?;
    m.add("ShapeError", m.py().get_type::<ShapeError>())?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add("LAMBDA_SWEEP", LAMBDA_SWEEP.to_vec())?;
    m.add("DEFAULT_MERGE_K", DEFAULT_MERGE_K)?;
    m.add("DEFAULT_TOP_T", DEFAULT_TOP_T)?;
    m.add_function(wrap_pyfunction!(stable_rank, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_norm, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_svd, m)?)?;
    m.add_function(wrap_pyfunction!(alignment_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(lora_delta, m)?)?;
    m.add_function(wrap_pyfunction!(merge_layer, m)?)?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_adapter, m)?)?;
    m.add_function(wrap_pyfunction!(penalty, m)?)?;
    m.add_function(wrap_pyfunction!(low_rank_base, m)?)?;
    m.add_function(wrap_pyfunction!(pass_at_1, m)?)?;
    m.add_function(wrap_pyfunction!(safety_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_toy, m)?)?;
    Ok(())
}
