//! Deterministic JSON and CSV writers.
//!
//! Floats are written as `{:.16e}` (17 significant digits), so a value
//! round-trips exactly and identical runs give identical bytes.

use serde_json::Value;
use std::fmt::Write;

use weylflow::identities::CheckReport;

pub const SCHEMA: u64 = 1;

pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // JSON has no infinities; such values only reach here as text
        format!("\"{v}\"")
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |k: usize| "  ".repeat(k);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => write!(out, "{u}").expect("string write"),
            (None, Some(i)) => write!(out, "{i}").expect("string write"),
            _ => out.push_str(&float(n.as_f64().expect("f64 number"))),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(out, item, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with fixed float formatting; object keys come out sorted.
pub fn to_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v, 0);
    out.push('\n');
    out
}

pub fn reports_json(header: Value, reports: &[CheckReport]) -> String {
    let mut root = serde_json::Map::new();
    root.insert("schema".into(), Value::from(SCHEMA));
    root.insert("header".into(), header);
    root.insert(
        "reports".into(),
        Value::Array(
            reports
                .iter()
                .map(|r| serde_json::to_value(r).expect("report serializes"))
                .collect(),
        ),
    );
    to_json(&Value::Object(root))
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const REPORT_CSV_HEADER: &str = "check_id,paper_ref,metric,n_points,max_residual,tolerance,pass,status,order,magnitude,reason";

pub fn reports_csv(reports: &[CheckReport]) -> String {
    let opt = |v: Option<f64>| v.map(float).unwrap_or_default();
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for r in reports {
        let status = serde_json::to_value(r.status).expect("status serializes");
        let cells = [
            csv_field(&r.check_id),
            csv_field(&r.paper_ref),
            csv_field(&r.metric),
            r.n_points.to_string(),
            opt(r.max_residual),
            float(r.tolerance),
            r.pass.to_string(),
            status.as_str().unwrap_or_default().to_string(),
            opt(r.order),
            opt(r.magnitude),
            csv_field(r.reason.as_deref().unwrap_or("")),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn rows_csv(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| float(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(float(0.1), "1.0000000000000001e-1");
        assert_eq!(float(-2.0), "-2.0000000000000000e0");
        let back: f64 = float(std::f64::consts::PI).parse().unwrap();
        assert_eq!(back, std::f64::consts::PI);
    }

    #[test]
    fn json_is_stable() {
        let v = serde_json::json!({"b": [1, 2.5, null], "a": "x,y", "e": []});
        let s = to_json(&v);
        assert_eq!(s, to_json(&v));
        let parsed: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(parsed["b"][1].as_f64(), Some(2.5));
        assert_eq!(parsed["a"], "x,y");
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("sphere:n=4,r=1"), "\"sphere:n=4,r=1\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
