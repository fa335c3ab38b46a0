//! Deterministic JSON / CSV serialization of analysis reports.
//!
//! Every float is rounded to 9 significant digits and then printed in its
//! shortest round-trip form, so output is byte-stable across platforms.

use serde_json::{json, Map, Value};

use super::metrics::AlignmentMetrics;
use super::report::{AnalysisReport, LayerReport, ModuleAggregate};

pub const CSV_COLUMNS: [&str; 12] = [
    "path",
    "layer_index",
    "module_type",
    "d",
    "k",
    "stable_rank",
    "m1",
    "m2",
    "m3",
    "m4",
    "base_fro_norm",
    "delta_fro_norm",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn num(x: f64) -> Value {
    json!(round_sig9(x))
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn metric_fields(obj: &mut Map<String, Value>, metrics: Option<AlignmentMetrics>) {
    for (i, key) in ["m1", "m2", "m3", "m4"].iter().enumerate() {
        obj.insert((*key).into(), opt_num(metrics.map(|m| m.as_array()[i])));
    }
}

fn layer_json(r: &LayerReport) -> Value {
    let mut obj = Map::new();
    obj.insert("path".into(), json!(r.path));
    obj.insert("layer_index".into(), json!(r.layer_index));
    obj.insert("module_type".into(), json!(r.module_type));
    obj.insert("d".into(), json!(r.d));
    obj.insert("k".into(), json!(r.k));
    obj.insert("stable_rank".into(), opt_num(r.stable_rank));
    metric_fields(&mut obj, r.metrics);
    obj.insert("base_fro_norm".into(), num(r.base_fro_norm));
    obj.insert("delta_fro_norm".into(), num(r.delta_fro_norm));
    Value::Object(obj)
}

fn aggregate_json(a: &ModuleAggregate) -> Value {
    let mut obj = Map::new();
    obj.insert("layer_count".into(), json!(a.layer_count));
    obj.insert("nonzero_count".into(), json!(a.nonzero_count));
    obj.insert("stable_rank".into(), opt_num(a.stable_rank));
    metric_fields(&mut obj, a.metrics);
    Value::Object(obj)
}

/// `{"layers": [...], "aggregates": {module: {...}}, "config": {"top_t": n}}`
/// with sorted keys, pretty-printed, newline-terminated.
pub fn to_json(report: &AnalysisReport) -> Vec<u8> {
    let layers: Vec<Value> = report.layers.iter().map(layer_json).collect();
    let aggregates: Map<String, Value> = report
        .aggregates
        .modules
        .iter()
        .map(|(k, v)| (k.clone(), aggregate_json(v)))
        .collect();
    let doc = json!({
        "layers": layers,
        "aggregates": aggregates,
        "config": { "top_t": report.top_t },
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("JSON values serialize");
    out.push(b'\n');
    out
}

fn csv_num(x: Option<f64>) -> String {
    x.map(|v| serde_json::to_string(&round_sig9(v)).expect("finite float"))
        .unwrap_or_default()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per layer under the [`CSV_COLUMNS`] header. Absent values are
/// empty fields.
pub fn to_csv(layers: &[LayerReport]) -> Vec<u8> {
    let mut sorted: Vec<&LayerReport> = layers.iter().collect();
    sorted.sort_by(|a, b| a.path.cmp(&b.path));
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in sorted {
        let metrics = r.metrics.map(|m| m.as_array());
        let fields = [
            csv_text(&r.path),
            r.layer_index.map(|i| i.to_string()).unwrap_or_default(),
            csv_text(&r.module_type),
            r.d.to_string(),
            r.k.to_string(),
            csv_num(r.stable_rank),
            csv_num(metrics.map(|m| m[0])),
            csv_num(metrics.map(|m| m[1])),
            csv_num(metrics.map(|m| m[2])),
            csv_num(metrics.map(|m| m[3])),
            csv_num(Some(r.base_fro_norm)),
            csv_num(Some(r.delta_fro_norm)),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn emit_report(report: &AnalysisReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => to_json(report),
        ReportFormat::Csv => to_csv(&report.layers),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig9(0.123456789123), 0.123456789);
        assert_eq!(round_sig9(123456.7890123), 123456.789);
        assert_eq!(round_sig9(0.0), 0.0);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let bytes = to_csv(&[]);
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "path,layer_index,module_type,d,k,stable_rank,m1,m2,m3,m4,base_fro_norm,delta_fro_norm\n"
        );
    }

    #[test]
    fn emission_is_deterministic() {
        let r = LayerReport {
            path: "model.layers.3.mlp.up_proj.weight".into(),
            layer_index: Some(3),
            module_type: "up_proj".into(),
            d: 4,
            k: 2,
            stable_rank: Some(1.0 / 3.0),
            metrics: Some(AlignmentMetrics { m1: 0.1, m2: 0.2, m3: 0.3, m4: 0.4 }),
            base_fro_norm: 2.0,
            delta_fro_norm: std::f64::consts::PI,
        };
        let report = AnalysisReport::new(vec![r], 16);
        let a = emit_report(&report, ReportFormat::Json);
        assert_eq!(a, emit_report(&report, ReportFormat::Json));
        let csv = String::from_utf8(emit_report(&report, ReportFormat::Csv)).unwrap();
        assert!(csv.ends_with("model.layers.3.mlp.up_proj.weight,3,up_proj,4,2,0.333333333,0.1,0.2,0.3,0.4,2.0,3.14159265\n"), "{csv}");
    }

    #[test]
    fn zero_update_fields_are_null() {
        let r = LayerReport {
            path: "w".into(),
            layer_index: None,
            module_type: "other".into(),
            d: 1,
            k: 1,
            stable_rank: None,
            metrics: None,
            base_fro_norm: 1.0,
            delta_fro_norm: 0.0,
        };
        let report = AnalysisReport::new(vec![r], 16);
        let v: Value = serde_json::from_slice(&to_json(&report)).unwrap();
        assert!(v["layers"][0]["m1"].is_null());
        assert!(v["aggregates"]["other"]["stable_rank"].is_null());
        assert_eq!(v["aggregates"]["other"]["layer_count"], 1);
    }
}
