//! Flat `key = value` run configuration.
//!
//! One config file drives every command; each command reads the subset it
//! needs. Unknown keys are rejected and every value is validated up front,
//! so a bad config never leaves partial outputs behind.

use std::fmt;
use std::path::PathBuf;

use qre_core::arch::Architecture;
use qre_core::data::{ShapeClass, SynthConfig};
use qre_core::distortion::{DistortionFamily, LevelFamily};
use qre_core::eval::SweepGrid;
use qre_core::mixup::{DrawScope, LambdaLaw, MixPolicy, Pairing};
use qre_core::schedule::CycleFamily;

/// A configuration problem, always tied to a key so the exit message names
/// what to fix.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Which distortion family a training cycle mixes in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleToken {
    Noise,
    Blur,
    Pristine,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    // synthetic data
    pub classes: Vec<ShapeClass>,
    pub per_class: usize,
    pub image_size: usize,
    pub bg_noise: f64,
    pub jitter_pos: f64,
    pub jitter_scale_min: f64,
    pub jitter_scale_max: f64,
    pub jitter_rot: f64,
    // splitting
    pub test_fraction: f64,
    // training
    pub data: Option<PathBuf>,
    pub architecture: Option<Architecture>,
    pub batch_size: usize,
    pub alpha0: f64,
    pub momentum: f64,
    pub epochs_per_cycle: usize,
    pub cycles: Vec<CycleToken>,
    pub noise_levels: Vec<f64>,
    pub blur_levels: Vec<f64>,
    pub lambda_law: LambdaLaw,
    pub pairing: Pairing,
    pub lambda_scope: DrawScope,
    // sweep
    pub grid_noise: Vec<f64>,
    pub grid_blur: Vec<usize>,
    pub include_clean: bool,
    pub topk: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            classes: vec![
                ShapeClass::Disk,
                ShapeClass::Square,
                ShapeClass::Cross,
                ShapeClass::DiagonalStripes,
            ],
            per_class: 625,
            image_size: 32,
            bg_noise: 0.05,
            jitter_pos: 0.12,
            jitter_scale_min: 0.55,
            jitter_scale_max: 0.80,
            jitter_rot: 0.5,
            test_fraction: 0.2,
            data: None,
            architecture: None,
            batch_size: 32,
            alpha0: 0.05,
            momentum: 0.9,
            epochs_per_cycle: 32,
            cycles: vec![CycleToken::Noise, CycleToken::Blur],
            noise_levels: (1..=10).map(|i| (i * 10) as f64).collect(),
            blur_levels: (0..8).map(|i| (2 * i + 1) as f64).collect(),
            lambda_law: LambdaLaw::Uniform01,
            pairing: Pairing::SameSample,
            lambda_scope: DrawScope::PerBatch,
            grid_noise: (1..=10).map(|i| (i * 10) as f64).collect(),
            grid_blur: (0..8).map(|i| 2 * i + 1).collect(),
            include_clean: true,
            topk: 3,
        }
    }
}

impl RunConfig {
    /// Parse `key = value` text. `#` starts a comment; blank lines are
    /// skipped; keys may appear at most once.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();

        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                err(
                    line,
                    format!("line {}: expected `key = value`", line_no + 1),
                )
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(err(key, "duplicate key"));
            }
            seen.push(key.to_string());
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "classes" => {
                self.classes = split_list(value)
                    .map(|name| ShapeClass::parse(name).map_err(|e| err(key, e.to_string())))
                    .collect::<Result<_, _>>()?;
            }
            "per_class" => self.per_class = parse_num(key, value)?,
            "image_size" => self.image_size = parse_num(key, value)?,
            "bg_noise" => self.bg_noise = parse_num(key, value)?,
            "jitter_pos" => self.jitter_pos = parse_num(key, value)?,
            "jitter_scale_min" => self.jitter_scale_min = parse_num(key, value)?,
            "jitter_scale_max" => self.jitter_scale_max = parse_num(key, value)?,
            "jitter_rot" => self.jitter_rot = parse_num(key, value)?,
            "test_fraction" => self.test_fraction = parse_num(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "architecture" => {
                self.architecture = if value == "default" {
                    None
                } else {
                    Some(
                        Architecture::parse(value)
                            .map_err(|e| err(key, e.to_string()))?,
                    )
                };
            }
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "alpha0" => self.alpha0 = parse_num(key, value)?,
            "momentum" => self.momentum = parse_num(key, value)?,
            "epochs_per_cycle" => self.epochs_per_cycle = parse_num(key, value)?,
            "cycles" => {
                self.cycles = split_list(value)
                    .map(|token| match token {
                        "noise" => Ok(CycleToken::Noise),
                        "blur" => Ok(CycleToken::Blur),
                        "pristine" => Ok(CycleToken::Pristine),
                        other => Err(err(
                            key,
                            format!("unknown cycle family {other:?} (noise, blur or pristine)"),
                        )),
                    })
                    .collect::<Result<_, _>>()?;
            }
            "noise_levels" => self.noise_levels = parse_list(key, value)?,
            "blur_levels" => self.blur_levels = parse_list(key, value)?,
            "lambda_law" => {
                self.lambda_law = if value == "uniform" {
                    LambdaLaw::Uniform01
                } else if let Some(rest) = value.strip_prefix("fixed:") {
                    LambdaLaw::Fixed(parse_num(key, rest)?)
                } else if let Some(rest) = value.strip_prefix("beta:") {
                    LambdaLaw::Beta(parse_num(key, rest)?)
                } else {
                    return Err(err(
                        key,
                        format!("expected uniform, fixed:<x> or beta:<a>, got {value:?}"),
                    ));
                };
            }
            "pairing" => {
                self.pairing = match value {
                    "same" => Pairing::SameSample,
                    "shuffled" => Pairing::ShuffledWithinBatch,
                    other => {
                        return Err(err(key, format!("expected same or shuffled, got {other:?}")))
                    }
                };
            }
            "lambda_scope" => {
                self.lambda_scope = match value {
                    "batch" => DrawScope::PerBatch,
                    "sample" => DrawScope::PerSample,
                    other => {
                        return Err(err(key, format!("expected batch or sample, got {other:?}")))
                    }
                };
            }
            "grid_noise" => self.grid_noise = parse_list(key, value)?,
            "grid_blur" => {
                self.grid_blur = split_list(value)
                    .map(|v| {
                        v.parse::<usize>()
                            .map_err(|_| err(key, format!("bad integer {v:?}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "include_clean" => {
                self.include_clean = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(err(key, format!("expected true or false, got {other:?}")))
                    }
                };
            }
            "topk" => self.topk = parse_num(key, value)?,
            unknown => return Err(err(unknown, "unknown key")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.synth_config()
            .validate()
            .map_err(|e| err("per_class", e.to_string()))?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(err("test_fraction", "must lie strictly between 0 and 1"));
        }
        if self.batch_size == 0 {
            return Err(err("batch_size", "must be >= 1"));
        }
        if !(self.alpha0.is_finite() && self.alpha0 > 0.0) {
            return Err(err("alpha0", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(err("momentum", "must lie in [0, 1)"));
        }
        if self.epochs_per_cycle == 0 {
            return Err(err("epochs_per_cycle", "must be >= 1"));
        }
        if self.cycles.is_empty() {
            return Err(err("cycles", "must list at least one cycle"));
        }
        if self.topk == 0 {
            return Err(err("topk", "must be >= 1"));
        }
        self.mix_policy()
            .validate()
            .map_err(|e| err("lambda_law", e.to_string()))?;
        LevelFamily::new(DistortionFamily::GaussianNoise, self.noise_levels.clone())
            .map_err(|e| err("noise_levels", e.to_string()))?;
        LevelFamily::new(DistortionFamily::GaussianBlur, self.blur_levels.clone())
            .map_err(|e| err("blur_levels", e.to_string()))?;
        self.sweep_grid()
            .validate()
            .map_err(|e| err("grid_noise", e.to_string()))?;
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            classes: self.classes.clone(),
            per_class: self.per_class,
            size: self.image_size,
            bg_noise: self.bg_noise,
            jitter_pos: self.jitter_pos,
            jitter_scale: (self.jitter_scale_min, self.jitter_scale_max),
            jitter_rot: self.jitter_rot,
            seed: self.seed,
        }
    }

    pub fn mix_policy(&self) -> MixPolicy {
        MixPolicy {
            lambda_law: self.lambda_law,
            pairing: self.pairing,
            draw_scope: self.lambda_scope,
        }
    }

    pub fn cycle_families(&self) -> Result<Vec<CycleFamily>, ConfigError> {
        self.cycles
            .iter()
            .map(|token| {
                Ok(match token {
                    CycleToken::Pristine => CycleFamily::Pristine,
                    CycleToken::Noise => CycleFamily::Distortion(
                        LevelFamily::new(
                            DistortionFamily::GaussianNoise,
                            self.noise_levels.clone(),
                        )
                        .map_err(|e| err("noise_levels", e.to_string()))?,
                    ),
                    CycleToken::Blur => CycleFamily::Distortion(
                        LevelFamily::new(
                            DistortionFamily::GaussianBlur,
                            self.blur_levels.clone(),
                        )
                        .map_err(|e| err("blur_levels", e.to_string()))?,
                    ),
                })
            })
            .collect()
    }

    pub fn sweep_grid(&self) -> SweepGrid {
        SweepGrid {
            noise_levels: self.grid_noise.clone(),
            blur_levels: self.grid_blur.clone(),
            include_clean: self.include_clean,
        }
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    split_list(value)
        .map(|v| parse_num::<f64>(key, v))
        .collect()
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| err(key, format!("cannot parse {value:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.epochs_per_cycle, 32);
        assert_eq!(cfg.cycles, vec![CycleToken::Noise, CycleToken::Blur]);
        assert_eq!(cfg.grid_noise.len(), 10);
        assert_eq!(cfg.grid_blur.len(), 8);
        assert!(cfg.include_clean);
    }

    #[test]
    fn comments_and_values_parse() {
        let text = "\
# run setup
seed = 11        # inline comment
batch_size=16
cycles = noise, blur
lambda_law = fixed:0.25
grid_noise = 60, 80, 100
include_clean = false
";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.lambda_law, LambdaLaw::Fixed(0.25));
        assert_eq!(cfg.grid_noise, vec![60.0, 80.0, 100.0]);
        assert!(!cfg.include_clean);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("mystery = 1").unwrap_err();
        assert_eq!(e.key, "mystery");
    }

    #[test]
    fn duplicate_key_rejected() {
        let e = RunConfig::parse("seed = 1\nseed = 2").unwrap_err();
        assert_eq!(e.key, "seed");
        assert!(e.message.contains("duplicate"));
    }

    #[test]
    fn bad_values_are_rejected_with_key() {
        assert_eq!(RunConfig::parse("seed = x").unwrap_err().key, "seed");
        assert_eq!(
            RunConfig::parse("momentum = 1.5").unwrap_err().key,
            "momentum"
        );
        assert_eq!(
            RunConfig::parse("blur_levels = 2,4").unwrap_err().key,
            "blur_levels"
        );
        assert_eq!(
            RunConfig::parse("cycles = sepia").unwrap_err().key,
            "cycles"
        );
        assert_eq!(
            RunConfig::parse("test_fraction = 1.0").unwrap_err().key,
            "test_fraction"
        );
        assert_eq!(
            RunConfig::parse("lambda_law = gamma:2").unwrap_err().key,
            "lambda_law"
        );
        // grid noise levels must be integers for CSV reporting
        assert_eq!(
            RunConfig::parse("grid_noise = 12.5").unwrap_err().key,
            "grid_noise"
        );
    }

    #[test]
    fn architecture_key_parses_or_defaults() {
        let cfg = RunConfig::parse("architecture = default").unwrap();
        assert!(cfg.architecture.is_none());
        let cfg =
            RunConfig::parse("architecture = input:3x16x16|conv:4,k3,p1|relu|pool:2|flatten|dense:4")
                .unwrap();
        assert_eq!(cfg.architecture.unwrap().num_classes(), 4);
        assert_eq!(
            RunConfig::parse("architecture = input:3x16x16|what")
                .unwrap_err()
                .key,
            "architecture"
        );
    }
}
