use std::fs;
use std::path::Path;

use hybridfpca::simgen::ScenarioConfig;
use hybridfpca::{Error, FofConfig, HpcaConfig, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Settings for `decompose`, `fit` and `select`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub hpca: HpcaConfig,
    pub fof: FofConfig,
}

pub fn read_json(path: &Path) -> Result<Value> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::Parse {
        path: shown.clone(),
        detail: format!("cannot read: {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: shown,
        detail: format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column()),
    })
}

/// Recursively overlays `patch` onto `base`; arrays and scalars are replaced.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn decode<T: for<'de> Deserialize<'de>>(value: Value, path: &Path) -> Result<T> {
    serde_json::from_value(value).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

pub fn scenario_config(scenario: u8, path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::preset(scenario)?;
    if let Some(p) = path {
        let patch = read_json(p)?;
        if let Some(s) = patch.get("scenario").and_then(Value::as_u64) {
            if s != scenario as u64 {
                return Err(Error::InvalidConfig(format!(
                    "{} is for scenario {s} but --scenario {scenario} was given",
                    p.display()
                )));
            }
        }
        let mut base = serde_json::to_value(&cfg)?;
        merge(&mut base, patch);
        cfg = decode(base, p)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn pipeline_config(path: Option<&Path>, seed: Option<u64>, fve: Option<f64>) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => decode(read_json(p)?, p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.fof.seed = s;
    }
    if let Some(f) = fve {
        cfg.hpca.fve_target = f;
    }
    if !(cfg.hpca.fve_target > 0.0 && cfg.hpca.fve_target <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "fve_target must lie in (0, 1], got {}",
            cfg.hpca.fve_target
        )));
    }
    cfg.fof.validate()?;
    Ok(cfg)
}
