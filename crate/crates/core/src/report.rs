//! Metric reports and their structured-text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;

/// Outcome of one metric computation, with the fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub per_instrument: Option<BTreeMap<String, f64>>,
    pub config: BTreeMap<String, Value>,
}

impl MetricReport {
    pub fn new(metric: impl Into<String>, value: f64) -> Self {
        MetricReport {
            metric: metric.into(),
            value,
            per_instrument: None,
            config: BTreeMap::new(),
        }
    }

    pub fn with_per_instrument(mut self, scores: BTreeMap<String, f64>) -> Self {
        self.per_instrument = Some(scores);
        self
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("config values serialize");
        self.config.insert(key.to_string(), value);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let entry = self
            .config
            .entry("warnings".to_string())
            .or_insert_with(|| Value::Array(Vec::new()));
        if let Value::Array(items) = entry {
            items.push(Value::String(message.into()));
        }
    }

    pub fn warnings(&self) -> Vec<&str> {
        match self.config.get("warnings") {
            Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).collect(),
            _ => Vec::new(),
        }
    }

    /// JSON with every float rounded to 9 significant digits.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        round_floats(&mut value);
        serde_json::to_string_pretty(&value).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "metric          {}", self.metric).unwrap();
        writeln!(out, "value           {}", format_sig9(self.value)).unwrap();
        if let Some(per) = &self.per_instrument {
            writeln!(out, "per_instrument").unwrap();
            for (id, v) in per {
                writeln!(out, "  {:<24} {}", id, format_sig9(*v)).unwrap();
            }
        }
        writeln!(out, "config").unwrap();
        for (key, v) in &self.config {
            let mut v = v.clone();
            round_floats(&mut v);
            writeln!(out, "  {:<24} {}", key, v).unwrap();
        }
        out
    }
}

/// Rounds to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn format_sig9(x: f64) -> String {
    serde_json::Value::from(sig9(x)).to_string()
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                *v = Value::from(sig9(x));
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}
