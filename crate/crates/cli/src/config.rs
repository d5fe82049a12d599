//! Config files (TOML or JSON) merged under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Keys accepted in a config file. Nested tables patch the defaults field
/// by field, so a file may set only `adaptive.tol_t`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub eps: Option<f64>,
    pub output: Option<PathBuf>,
    pub degree: Option<usize>,
    pub elements: Option<usize>,
    pub k: Option<f64>,
    pub quadrature: Option<usize>,
    pub full: Option<bool>,
    pub trajectory: Option<bool>,
    pub snapshot_times: Option<Vec<f64>>,
    pub grid_points: Option<usize>,
    pub k_inv: Option<Vec<f64>>,
    pub sweep: Option<String>,
    pub compare_uniform: Option<bool>,
    pub reference_file: Option<PathBuf>,
    pub estimators: Option<Value>,
    pub adaptive: Option<Value>,
    pub reference: Option<Value>,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    Ok(cfg)
}

/// `base` with the keys of `patch` replaced.
pub fn overlay<T: Serialize + DeserializeOwned>(base: &T, patch: Option<&Value>) -> Result<T> {
    let Some(patch) = patch else {
        return Ok(serde_json::from_value(serde_json::to_value(base)?)?);
    };
    let mut v = serde_json::to_value(base)?;
    merge(&mut v, patch);
    serde_json::from_value(v).context("applying config overrides")
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, pv) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), pv);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Clone, Debug, Default, Args)]
pub struct Common {
    /// TOML or JSON config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub problem: Option<String>,
    /// Semiclassical parameter for problems that take one.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, short = 'r')]
    pub degree: Option<usize>,
    /// Number of elements of the uniform (initial) mesh.
    #[arg(long, short = 'm')]
    pub elements: Option<usize>,
    /// Time step (initial step for adaptive runs).
    #[arg(long, short)]
    pub k: Option<f64>,
    /// Gauss points per element.
    #[arg(long)]
    pub quadrature: Option<usize>,
    /// `midpoint`, `plain_midpoint` or `gauss3`.
    #[arg(long)]
    pub time_rule: Option<String>,
    /// Include derivative jumps in the elliptic estimators.
    #[arg(long)]
    pub jumps: bool,
}

impl Common {
    pub fn file(&self) -> Result<FileConfig> {
        match &self.config {
            Some(p) => load(p),
            None => Ok(FileConfig::default()),
        }
    }

    /// Estimator overrides from the file with flags on top.
    pub fn estimator_patch(&self, file: &FileConfig) -> Value {
        let mut v = file.estimators.clone().unwrap_or(Value::Object(Default::default()));
        if let Some(r) = &self.time_rule {
            v["time_rule"] = Value::String(r.clone());
        }
        if self.jumps {
            v["jumps"] = Value::Bool(true);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cnafem::adaptive::AdaptiveConfig;

    #[test]
    fn partial_table_patches_one_field() {
        let file: FileConfig = toml::from_str("problem = \"exp1a\"\n[adaptive]\ntol_t = 0.5\n").unwrap();
        let base = AdaptiveConfig {
            tol_s: 0.01,
            ..Default::default()
        };
        let out = overlay(&base, file.adaptive.as_ref()).unwrap();
        assert_eq!(out.tol_t, 0.5);
        assert_eq!(out.tol_s, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("problme = \"x\"").is_err());
    }

    #[test]
    fn json_and_toml_agree() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        let t = dir.path().join("c.toml");
        std::fs::write(&j, r#"{"problem": "exp2", "degree": 3, "k_inv": [80, 160]}"#).unwrap();
        std::fs::write(&t, "problem = \"exp2\"\ndegree = 3\nk_inv = [80, 160]\n").unwrap();
        let (a, b) = (load(&j).unwrap(), load(&t).unwrap());
        assert_eq!(a.problem, b.problem);
        assert_eq!(a.degree, b.degree);
        assert_eq!(a.k_inv, b.k_inv);
    }
}
