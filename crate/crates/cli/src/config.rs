//! Key=value config files for the generate and train commands.
//!
//! One `key = value` pair per line; `#` starts a comment. Unknown keys
//! are rejected so typos cannot silently fall back to defaults.

use crate::CliError;
use egoflow::mfg::MfgConfig;
use egoflow::synthgen::SceneConfig;
use std::path::Path;

fn parse_pairs(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Data(format!(
                "{}:{}: expected key=value, got {raw:?}",
                path.display(),
                idx + 1
            ))
        })?;
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Data(format!("config key {key}: bad value {value:?}")))
}

/// Scene parameters starting from defaults.
pub fn scene_config(path: Option<&Path>) -> Result<SceneConfig, CliError> {
    let mut cfg = SceneConfig::default();
    let Some(path) = path else { return Ok(cfg) };
    for (key, value) in parse_pairs(path)? {
        match key.as_str() {
            "width" => cfg.width = parse_num(&key, &value)?,
            "height" => cfg.height = parse_num(&key, &value)?,
            "depth_min" => cfg.depth_range.0 = parse_num(&key, &value)?,
            "depth_max" => cfg.depth_range.1 = parse_num(&key, &value)?,
            "boxes_min" => cfg.depth_boxes.0 = parse_num(&key, &value)?,
            "boxes_max" => cfg.depth_boxes.1 = parse_num(&key, &value)?,
            "max_translation" => cfg.max_translation = parse_num(&key, &value)?,
            "max_rotation" => cfg.max_rotation = parse_num(&key, &value)?,
            "objects_min" => cfg.object_count.0 = parse_num(&key, &value)?,
            "objects_max" => cfg.object_count.1 = parse_num(&key, &value)?,
            "max_object_flow" => cfg.max_object_flow = parse_num(&key, &value)?,
            "noise_sigma" => cfg.noise_sigma = parse_num(&key, &value)?,
            "outlier_fraction" => cfg.outlier_fraction = parse_num(&key, &value)?,
            "seed" => cfg.seed = parse_num(&key, &value)?,
            other => {
                return Err(CliError::Data(format!("unknown scene config key {other:?}")))
            }
        }
    }
    Ok(cfg)
}

/// Network parameters. Starts from the desk architecture sized for the
/// given grid; hidden size changes rebuild the conv stack.
pub fn mfg_config(
    path: Option<&Path>,
    width: usize,
    height: usize,
) -> Result<MfgConfig, CliError> {
    let mut hidden = 128usize;
    let mut pairs = Vec::new();
    if let Some(path) = path {
        pairs = parse_pairs(path)?;
        for (key, value) in &pairs {
            if key == "hidden" {
                hidden = parse_num(key, value)?;
            }
        }
    }
    let mut cfg = MfgConfig::auto(width, height, hidden);
    for (key, value) in pairs {
        match key.as_str() {
            "hidden" => {}
            "sparsity_weight" => cfg.sparsity_weight = parse_num(&key, &value)?,
            "input_scale" => cfg.input_scale = parse_num(&key, &value)?,
            "weight_cap" => cfg.weight_cap = parse_num(&key, &value)?,
            "learning_rate" => cfg.optimizer.learning_rate = parse_num(&key, &value)?,
            "beta1" => cfg.optimizer.beta1 = parse_num(&key, &value)?,
            "beta2" => cfg.optimizer.beta2 = parse_num(&key, &value)?,
            "epsilon" => cfg.optimizer.epsilon = parse_num(&key, &value)?,
            other => {
                return Err(CliError::Data(format!(
                    "unknown network config key {other:?}"
                )))
            }
        }
    }
    Ok(cfg)
}
