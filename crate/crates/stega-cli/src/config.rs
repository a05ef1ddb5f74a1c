//! Flat key=value run configuration. Defaults are the reference
//! configuration; unknown keys are rejected so typos cannot silently fall
//! back to defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use stega_core::cost::Scheme;
use stega_core::gbdt::GbdtConfig;
use stega_core::model::Preprocessing;
use stega_core::train::{BoundaryMode, TrainConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected key=value, got {text:?}")]
    BadSyntax { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("key {key}: invalid value {value:?} ({hint})")]
    BadValue {
        key: String,
        value: String,
        hint: String,
    },
}

/// Architecture constants a config may state but not change.
const FIXED_KEYS: [(&str, &str, &str); 4] = [
    ("patch_size", "7", "the 83-feature bank triple is built on 7x7 patches"),
    ("m_grid_lo", "100", "the M grid is 100..=1000 step 50, scaled by area"),
    ("m_grid_hi", "1000", "the M grid is 100..=1000 step 50, scaled by area"),
    ("m_grid_step", "50", "the M grid is 100..=1000 step 50, scaled by area"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub scheme: Scheme,
    pub payload: f64,
    pub preprocessing: Preprocessing,
    pub group_count: usize,
    pub cost_window: usize,
    pub boundary_mode: BoundaryMode,
    pub k_select: usize,
    pub trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub pair_cap_per_group: usize,
    pub block_cap_per_group: usize,
    pub boundary_sample_cap: usize,
    pub min_pairs_per_group: usize,
    pub round2_min_pairs: usize,
    pub val_pair_cap_per_group: usize,
    pub split_train: f64,
    pub split_val: f64,
    pub split_test: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            scheme: Scheme::Hill,
            payload: 0.4,
            preprocessing: Preprocessing::None,
            group_count: 10,
            cost_window: 3,
            boundary_mode: BoundaryMode::EqualMass,
            k_select: 15,
            trees: 100,
            max_depth: 2,
            learning_rate: 0.3,
            lambda: 1.0,
            pair_cap_per_group: 50_000,
            block_cap_per_group: 50_000,
            boundary_sample_cap: 200_000,
            min_pairs_per_group: 1,
            round2_min_pairs: 1000,
            val_pair_cap_per_group: 10_000,
            split_train: 0.4,
            split_val: 0.1,
            split_test: 0.5,
        }
    }
}

fn bad(key: &str, value: &str, hint: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        hint: hint.into(),
    }
}

macro_rules! parse_with {
    ($key:expr, $value:expr, $ty:ty, $hint:expr) => {
        $value
            .parse::<$ty>()
            .map_err(|_| bad($key, $value, $hint))?
    };
}

impl RunConfig {
    /// Applies one key=value assignment; used for files and flag overrides
    /// alike.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = parse_with!(key, value, u64, "unsigned integer"),
            "scheme" => {
                self.scheme = match value {
                    "hill" => Scheme::Hill,
                    "suniward" => Scheme::Suniward,
                    _ => return Err(bad(key, value, "hill or suniward")),
                }
            }
            "payload" => {
                let p = parse_with!(key, value, f64, "bits per pixel in (0, 1]");
                if !(p > 0.0 && p <= 1.0) {
                    return Err(bad(key, value, "bits per pixel in (0, 1]"));
                }
                self.payload = p;
            }
            "preprocessing" => {
                self.preprocessing = match value {
                    "none" => Preprocessing::None,
                    "half" => Preprocessing::HalfSize,
                    _ => return Err(bad(key, value, "none or half")),
                }
            }
            "group_count" => {
                let g = parse_with!(key, value, usize, "positive integer");
                if g == 0 {
                    return Err(bad(key, value, "positive integer"));
                }
                self.group_count = g;
            }
            "cost_window" => {
                let w = parse_with!(key, value, usize, "odd positive integer");
                if w == 0 || w % 2 == 0 {
                    return Err(bad(key, value, "odd positive integer"));
                }
                self.cost_window = w;
            }
            "boundary_mode" => {
                self.boundary_mode = match value {
                    "equal_mass" => BoundaryMode::EqualMass,
                    "fixed_width" => BoundaryMode::FixedWidth,
                    _ => return Err(bad(key, value, "equal_mass or fixed_width")),
                }
            }
            "k_select" => {
                let k = parse_with!(key, value, usize, "1..=83");
                if !(1..=83).contains(&k) {
                    return Err(bad(key, value, "1..=83"));
                }
                self.k_select = k;
            }
            "trees" => {
                let t = parse_with!(key, value, usize, "positive integer");
                if t == 0 {
                    return Err(bad(key, value, "positive integer"));
                }
                self.trees = t;
            }
            "max_depth" => {
                let d = parse_with!(key, value, usize, "positive integer");
                if d == 0 {
                    return Err(bad(key, value, "positive integer"));
                }
                self.max_depth = d;
            }
            "learning_rate" => {
                let lr = parse_with!(key, value, f64, "positive real");
                if !(lr > 0.0) {
                    return Err(bad(key, value, "positive real"));
                }
                self.learning_rate = lr;
            }
            "lambda" => {
                let l = parse_with!(key, value, f64, "non-negative real");
                if !(l >= 0.0) {
                    return Err(bad(key, value, "non-negative real"));
                }
                self.lambda = l;
            }
            "pair_cap_per_group" => {
                self.pair_cap_per_group = parse_with!(key, value, usize, "positive integer")
            }
            "block_cap_per_group" => {
                self.block_cap_per_group = parse_with!(key, value, usize, "positive integer")
            }
            "boundary_sample_cap" => {
                self.boundary_sample_cap = parse_with!(key, value, usize, "positive integer")
            }
            "min_pairs_per_group" => {
                self.min_pairs_per_group = parse_with!(key, value, usize, "positive integer")
            }
            "round2_min_pairs" => {
                self.round2_min_pairs = parse_with!(key, value, usize, "positive integer")
            }
            "val_pair_cap_per_group" => {
                self.val_pair_cap_per_group = parse_with!(key, value, usize, "positive integer")
            }
            "split_train" => self.split_train = parse_with!(key, value, f64, "fraction"),
            "split_val" => self.split_val = parse_with!(key, value, f64, "fraction"),
            "split_test" => self.split_test = parse_with!(key, value, f64, "fraction"),
            _ => {
                for (fixed, expected, hint) in FIXED_KEYS {
                    if key == fixed {
                        if value == expected {
                            return Ok(());
                        }
                        return Err(bad(key, value, hint));
                    }
                }
                return Err(ConfigError::UnknownKey(key.into()));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut config = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadSyntax {
                line: i + 1,
                text: line.into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey(key.into()));
            }
            config.set(key, value)?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Canonical rendering of every key; stored in model provenance.
    pub fn snapshot(&self) -> String {
        let scheme = match self.scheme {
            Scheme::Hill => "hill",
            Scheme::Suniward => "suniward",
        };
        let boundary = match self.boundary_mode {
            BoundaryMode::EqualMass => "equal_mass",
            BoundaryMode::FixedWidth => "fixed_width",
        };
        let mut s = String::new();
        let _ = writeln!(s, "block_cap_per_group={}", self.block_cap_per_group);
        let _ = writeln!(s, "boundary_mode={boundary}");
        let _ = writeln!(s, "boundary_sample_cap={}", self.boundary_sample_cap);
        let _ = writeln!(s, "cost_window={}", self.cost_window);
        let _ = writeln!(s, "group_count={}", self.group_count);
        let _ = writeln!(s, "k_select={}", self.k_select);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "max_depth={}", self.max_depth);
        let _ = writeln!(s, "min_pairs_per_group={}", self.min_pairs_per_group);
        let _ = writeln!(s, "round2_min_pairs={}", self.round2_min_pairs);
        let _ = writeln!(s, "pair_cap_per_group={}", self.pair_cap_per_group);
        let _ = writeln!(s, "payload={}", self.payload);
        let _ = writeln!(s, "preprocessing={}", self.preprocessing.name());
        let _ = writeln!(s, "scheme={scheme}");
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "split_test={}", self.split_test);
        let _ = writeln!(s, "split_train={}", self.split_train);
        let _ = writeln!(s, "split_val={}", self.split_val);
        let _ = writeln!(s, "trees={}", self.trees);
        let _ = writeln!(s, "val_pair_cap_per_group={}", self.val_pair_cap_per_group);
        s
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            group_count: self.group_count,
            cost_window: self.cost_window,
            boundary_mode: self.boundary_mode,
            k_select: self.k_select,
            gbdt: GbdtConfig {
                n_trees: self.trees,
                max_depth: self.max_depth,
                learning_rate: self.learning_rate,
                lambda: self.lambda,
                seed: self.seed,
            },
            pair_cap_per_group: self.pair_cap_per_group,
            block_cap_per_group: self.block_cap_per_group,
            boundary_sample_cap: self.boundary_sample_cap,
            min_pairs_per_group: self.min_pairs_per_group,
            round2_min_pairs: self.round2_min_pairs,
            val_pair_cap_per_group: self.val_pair_cap_per_group,
        }
    }

    pub fn splits(&self) -> (f64, f64, f64) {
        (self.split_train, self.split_val, self.split_test)
    }
}
