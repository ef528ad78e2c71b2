//! Flat `key = value` configuration with optional `[section]` headers.
//! Sectioned keys are flattened to `section.key`. All keys are
//! documented in the CLI `--help` output; unknown keys are rejected so
//! typos fail loudly.

use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`, got {1:?}")]
    Malformed(usize, String),
    #[error("line {0}: unterminated section header")]
    BadSection(usize),
    #[error("duplicate key {0:?}")]
    Duplicate(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: {message}")]
    BadValue { key: String, message: String },
}

/// Parse the flat config text into a `section.key -> value` map.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or(ConfigError::BadSection(idx + 1))?
                .trim();
            if name.is_empty() || name.contains(['[', ']', '=']) {
                return Err(ConfigError::BadSection(idx + 1));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Malformed(idx + 1, line.to_string()))?;
        let key = key.trim();
        if key.is_empty() || key.contains(['[', ']']) {
            return Err(ConfigError::Malformed(idx + 1, line.to_string()));
        }
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if out.insert(full.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate(full));
        }
    }
    Ok(out)
}

/// Everything a run needs; CLI flags override config file values, which
/// override these defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// RNG seed; fixed seed means bit-identical CSV/JSON output.
    pub seed: u64,
    /// Output directory, created if missing.
    pub out: PathBuf,
    /// Deepest word level materialized by default.
    pub k: u32,
    /// Cocycle scale.
    pub s: f64,
    /// Materialization cap in letters.
    pub word_cap: u64,
    /// Offset stride for sampled sup/mean statistics.
    pub stride: usize,
    /// Number of time-scale levels to construct.
    pub levels: usize,
    /// Default shell for sweeps.
    pub shell: usize,
    /// Default sample count for randomized sweeps.
    pub samples: usize,
    /// Numerical slack for cross-check comparisons.
    pub tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            k: 6,
            s: 1.0,
            word_cap: crate::words::DEFAULT_WORD_CAP,
            stride: 101,
            levels: 8,
            shell: 5,
            samples: 20,
            tolerance: 1e-8,
        }
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "run.seed",
    "run.out",
    "run.k",
    "run.tolerance",
    "cocycle.s",
    "words.cap",
    "cocycle.stride",
    "perturb.levels",
    "perturb.shell",
    "perturb.samples",
];

impl RunConfig {
    /// Build from parsed config text, rejecting unknown keys and
    /// invalid values (tolerances must be positive and finite).
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        for (key, value) in map {
            let bad = |message: &str| ConfigError::BadValue {
                key: key.clone(),
                message: message.to_string(),
            };
            match key.as_str() {
                "run.seed" => cfg.seed = value.parse().map_err(|_| bad("expected integer"))?,
                "run.out" => cfg.out = PathBuf::from(value),
                "run.k" => {
                    cfg.k = value.parse().map_err(|_| bad("expected integer"))?;
                    if cfg.k == 0 || cfg.k > 62 {
                        return Err(bad("level must be in 1..=62"));
                    }
                }
                "run.tolerance" => {
                    cfg.tolerance = value.parse().map_err(|_| bad("expected float"))?;
                    if !cfg.tolerance.is_finite() || cfg.tolerance <= 0.0 {
                        return Err(bad("tolerance must be positive and finite"));
                    }
                }
                "cocycle.s" => {
                    cfg.s = value.parse().map_err(|_| bad("expected float"))?;
                    if !cfg.s.is_finite() || cfg.s <= 0.0 {
                        return Err(bad("scale must be positive and finite"));
                    }
                }
                "words.cap" => cfg.word_cap = value.parse().map_err(|_| bad("expected integer"))?,
                "cocycle.stride" => {
                    cfg.stride = value.parse().map_err(|_| bad("expected integer"))?;
                    if cfg.stride == 0 {
                        return Err(bad("stride must be positive"));
                    }
                }
                "perturb.levels" => {
                    cfg.levels = value.parse().map_err(|_| bad("expected integer"))?
                }
                "perturb.shell" => cfg.shell = value.parse().map_err(|_| bad("expected integer"))?,
                "perturb.samples" => {
                    cfg.samples = value.parse().map_err(|_| bad("expected integer"))?
                }
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            }
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_map(&parse_config(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_comments() {
        let text = "\
# comment
run.seed = 9
[cocycle]
s = 1.5
stride = 7
[perturb]
shell = 4
";
        let map = parse_config(text).unwrap();
        assert_eq!(map["run.seed"], "9");
        assert_eq!(map["cocycle.s"], "1.5");
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.s, 1.5);
        assert_eq!(cfg.stride, 7);
        assert_eq!(cfg.shell, 4);
        // untouched defaults survive
        assert_eq!(cfg.k, 6);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(parse_config("run.seed 9"), Err(ConfigError::Malformed(1, _))));
        assert!(matches!(parse_config("[oops"), Err(ConfigError::BadSection(1))));
        assert!(matches!(
            parse_config("a = 1\na = 2"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            RunConfig::from_text("nope = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn rejects_invalid_values() {
        assert!(matches!(
            RunConfig::from_text("run.tolerance = -1e-8"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            RunConfig::from_text("cocycle.s = nan"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            RunConfig::from_text("run.k = 0"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
