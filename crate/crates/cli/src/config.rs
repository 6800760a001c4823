//! Run configuration: a single JSON document per run, with CLI flags
//! overriding individual fields. Sweeps replicate the template across one
//! parameter axis.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepAxis {
    /// Name of the parameter in `params` this sweep varies.
    pub axis: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: String,
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
}

fn default_out() -> String {
    "qcurv-out".to_string()
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            seed: 0,
            output_dir: default_out(),
            params: serde_json::Map::new(),
            sweep: None,
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.params.insert(key.to_string(), value);
    }

    pub fn set_if(&mut self, key: &str, value: Option<Value>) {
        if let Some(v) = value {
            self.params.insert(key.to_string(), v);
        }
    }

    pub fn f64(&self, key: &str, default: f64) -> Result<f64, String> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_f64()
                .ok_or_else(|| format!("parameter '{key}' must be a number, got {v}")),
        }
    }

    pub fn u64(&self, key: &str, default: u64) -> Result<u64, String> {
        match self.params.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| format!("parameter '{key}' must be a nonnegative integer, got {v}")),
        }
    }

    pub fn string(&self, key: &str, default: &str) -> Result<String, String> {
        match self.params.get(key) {
            None => Ok(default.to_string()),
            Some(v) => v
                .as_str()
                .map(|s| s.to_string())
                .ok_or_else(|| format!("parameter '{key}' must be a string, got {v}")),
        }
    }

    pub fn f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, String> {
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| format!("parameter '{key}' must hold numbers"))
                })
                .collect(),
            Some(v) => Err(format!("parameter '{key}' must be an array, got {v}")),
        }
    }

    pub fn pair_list(&self, key: &str, default: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, String> {
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| {
                    let arr = v
                        .as_array()
                        .filter(|arr| arr.len() == 2)
                        .ok_or_else(|| format!("parameter '{key}' must hold [x, y] pairs"))?;
                    let x = arr[0].as_f64().ok_or_else(|| format!("bad pair in '{key}'"))?;
                    let y = arr[1].as_f64().ok_or_else(|| format!("bad pair in '{key}'"))?;
                    Ok((x, y))
                })
                .collect(),
            Some(v) => Err(format!("parameter '{key}' must be an array, got {v}")),
        }
    }
}
