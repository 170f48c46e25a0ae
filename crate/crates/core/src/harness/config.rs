//! Flat `key = value` configuration files.
//!
//! Recognised keys: `threshold`, `bf1_tolerance`, `pd.kind`
//! (`wasserstein` | `bottleneck`), `pd.q` and `select.k`. Blank lines and lines
//! starting with `#` are ignored; every key is optional.

use std::path::Path;

use super::select::DEFAULT_TOP_K;
use super::{HarnessError, HarnessResult};
use crate::metrics::EvalConfig;
use crate::persistence::DiagramDistanceConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub eval: EvalConfig,
    pub top_k: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            eval: EvalConfig::default(),
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl HarnessConfig {
    pub fn parse(path: &Path, text: &str) -> HarnessResult<Self> {
        let mut cfg = Self::default();
        let mut kind: Option<String> = None;
        let mut q: Option<f64> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| HarnessError::Config {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("`{v}` is not a number")))
            };
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| err(format!("`{v}` is not a non-negative integer")))
            };
            match key {
                "threshold" => cfg.eval.threshold = num(value)?,
                "bf1_tolerance" => cfg.eval.bf1_tolerance = int(value)?,
                "pd.kind" => match value {
                    "wasserstein" | "bottleneck" => kind = Some(value.to_owned()),
                    other => return Err(err(format!("unknown pd.kind `{other}`"))),
                },
                "pd.q" => q = Some(num(value)?),
                "select.k" => {
                    cfg.top_k = int(value)?;
                    if cfg.top_k == 0 {
                        return Err(err("select.k must be >= 1".into()));
                    }
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        cfg.eval.pd = match kind.as_deref() {
            Some("bottleneck") => DiagramDistanceConfig::Bottleneck,
            _ => DiagramDistanceConfig::Wasserstein {
                q: q.unwrap_or(1.0),
            },
        };
        cfg.eval.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> HarnessResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(path, &text)
    }
}
