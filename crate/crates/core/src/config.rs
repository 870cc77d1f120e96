//! Search configuration, read from TOML.
//!
//! A file only needs the keys it changes: it is layered over a preset
//! (`full` unless the file or the command line names another one).
//!
//! ```toml
//! preset = "desk"
//! seed = 7
//!
//! [data]
//! csv = "blobs.csv"
//! split = [0.7, 0.15, 0.15]
//!
//! [search]
//! population = 12
//!
//! [training]
//! finetune_iterations = 20
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::NormalizationKind;
use crate::error::{Error, Result};
use crate::fitness::FitnessConfig;
use crate::nsga2::OffspringConfig;
use crate::search_space::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Full-scale defaults: N = 100, 50 generations, depth 1..10, width 10..400.
    #[default]
    #[serde(alias = "paper")]
    Full,
    /// N = 10, 10 generations, depth 1..5, width 10..100, shorter training.
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "paper" => Ok(Preset::Full),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected desk, full or paper)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Full => "full",
            Preset::Desk => "desk",
        })
    }
}

impl Preset {
    pub fn config(self) -> SearchConfig {
        match self {
            Preset::Full => SearchConfig::default(),
            Preset::Desk => SearchConfig {
                preset: Preset::Desk,
                search: SearchParams {
                    population: 10,
                    max_generations: 10,
                    depth_max: 5,
                    width_max: 100,
                    ..SearchParams::default()
                },
                training: FitnessConfig {
                    initial_iterations: 100,
                    finetune_iterations: 30,
                    ..FitnessConfig::default()
                },
                ..SearchConfig::default()
            },
        }
    }
}

/// Synthetic Gaussian blobs used when no file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub features: usize,
    pub per_class: usize,
    pub separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            features: 20,
            per_class: 300,
            separation: 6.0,
        }
    }
}

/// Where samples come from and how they are prepared. Sources are tried in
/// the order `csv`, `signal_dir`, `signal_manifest`, `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub csv: Option<PathBuf>,
    pub skip_header: bool,
    /// One subdirectory per class holding raw signal files.
    pub signal_dir: Option<PathBuf>,
    /// `file,label` lines, paths relative to the manifest.
    pub signal_manifest: Option<PathBuf>,
    pub segment_length: usize,
    pub synth: Option<SynthConfig>,
    pub normalization: NormalizationKind,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv: None,
            skip_header: false,
            signal_dir: None,
            signal_manifest: None,
            segment_length: 1024,
            synth: None,
            normalization: NormalizationKind::MinMax,
            split: [0.7, 0.15, 0.15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    pub population: usize,
    pub max_generations: usize,
    pub depth_min: usize,
    pub depth_max: usize,
    pub width_min: usize,
    pub width_max: usize,
    pub crossover_prob: f64,
    pub eta: f64,
    pub p_gene: f64,
    pub mutation: bool,
    /// Controller learning rate.
    pub alpha: f64,
    /// With `false` every generation samples from the initial closed-form
    /// parameters.
    pub controller: bool,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            population: 100,
            max_generations: 50,
            depth_min: 1,
            depth_max: 10,
            width_min: 10,
            width_max: 400,
            crossover_prob: 0.5,
            eta: 15.0,
            p_gene: 1.0,
            mutation: false,
            alpha: 0.1,
            controller: true,
        }
    }
}

impl SearchParams {
    pub fn space(&self) -> Result<SearchSpace> {
        SearchSpace::new(self.depth_min, self.depth_max, self.width_min, self.width_max)
    }

    pub fn offspring(&self) -> OffspringConfig {
        OffspringConfig {
            crossover_prob: self.crossover_prob,
            eta: self.eta,
            p_gene: self.p_gene,
            mutation: self.mutation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub preset: Preset,
    pub seed: u64,
    pub data: DataConfig,
    pub search: SearchParams,
    pub training: FitnessConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Full,
            seed: 42,
            data: DataConfig::default(),
            search: SearchParams::default(),
            training: FitnessConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl SearchConfig {
    /// Parses `text` over its preset; `preset` overrides the file's choice.
    pub fn from_toml_str(text: &str, preset: Option<Preset>) -> Result<Self> {
        let file: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let chosen = match (preset, file.get("preset")) {
            (Some(p), _) => p,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(other)) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
            (None, None) => Preset::Full,
        };
        let mut base = toml::Table::try_from(chosen.config()).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, file);
        base.insert("preset".into(), toml::Value::String(chosen.to_string()));
        let cfg: SearchConfig = toml::Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path, preset: Option<Preset>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg = Self::from_toml_str(&text, preset)?;
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.data.csv, &mut cfg.data.signal_dir, &mut cfg.data.signal_manifest]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.search;
        s.space()?;
        if s.population < 2 {
            return Err(Error::Config(format!("population must be at least 2, got {}", s.population)));
        }
        if !(0.0..=1.0).contains(&s.crossover_prob) {
            return Err(Error::Config(format!("crossover_prob {} outside [0, 1]", s.crossover_prob)));
        }
        if !(0.0..=1.0).contains(&s.p_gene) {
            return Err(Error::Config(format!("p_gene {} outside [0, 1]", s.p_gene)));
        }
        if !(s.eta > 0.0 && s.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", s.eta)));
        }
        if !(s.alpha >= 0.0 && s.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", s.alpha)));
        }
        let d = &self.data;
        if d.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (d.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {:?} must lie in [0, 1] and sum to 1", d.split)));
        }
        if d.split[0] == 0.0 || d.split[1] == 0.0 {
            return Err(Error::Config("train and validation fractions must be positive".into()));
        }
        if d.segment_length == 0 {
            return Err(Error::Config("segment_length must be positive".into()));
        }
        if let Some(sy) = &d.synth {
            if sy.classes < 2 || sy.features == 0 || sy.per_class == 0 {
                return Err(Error::Config("synth needs classes >= 2, features >= 1, per_class >= 1".into()));
            }
        }
        self.training.validate()
    }
}
