//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use flowpl_core::losses::LossConfig;
use flowpl_core::model::ModelConfig;
use flowpl_core::seed::sub_seed;
use flowpl_core::ssl::SslConfig;
use flowpl_core::synth::SplitConfig;
use flowpl_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_ROOT_ENV: &str = "FLOWPL_RUN_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Parent of the default output directories.
    pub run_root: PathBuf,
    /// Dataset directory, relative to `run_root` unless absolute.
    pub data: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { run_root: "runs".into(), data: "data".into() }
    }
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.run_root.join(p)
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.resolve(&self.data)
    }
}

/// Sub-seeds of the root seed. Unset entries are derived from it; set ones
/// pin a single stream so one phase can be replayed in isolation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Scene generation.
    pub data: Option<u64>,
    /// Parameter initialization.
    pub init: Option<u64>,
    /// Batch order and crop positions of every training phase.
    pub order: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub seeds: Seeds,
    pub paths: Paths,
    pub data: SplitConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub pretrain: TrainConfig,
    pub ssl: SslConfig,
}

// TOML integers are signed 64-bit.
fn derive(root: u64, name: &str) -> u64 {
    sub_seed(root, name) >> 1
}

impl RunConfig {
    /// Shipped defaults for the desk-scale experiment.
    pub fn shipped() -> Self {
        Self { pretrain: TrainConfig { total_steps: 6000, ..TrainConfig::default() }, ..Self::default() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    /// The shipped defaults overlaid with `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::shipped()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let mut merged = toml::Table::try_from(Self::shipped()).expect("defaults serialize");
                let file: toml::Table = text.parse().map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?;
                overlay(&mut merged, file);
                toml::Value::Table(merged)
                    .try_into()
                    .map_err(|e: toml::de::Error| Error::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Fills unset sub-seeds from the root seed and copies them into the
    /// seed fields of the sections that consume them.
    pub fn resolve_seeds(&mut self) {
        let s = &mut self.seeds;
        let data = *s.data.get_or_insert_with(|| derive(self.seed, "data"));
        s.init.get_or_insert_with(|| derive(self.seed, "init"));
        let order = *s.order.get_or_insert_with(|| derive(self.seed, "order"));
        self.data.root_seed = data;
        self.pretrain.seed = derive(order, "pretrain");
        self.ssl.seed = derive(order, "ssl");
    }

    pub fn init_seed(&self) -> u64 {
        self.seeds.init.unwrap_or_else(|| derive(self.seed, "init"))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.pretrain.validate(self.model.stride)?;
        self.ssl.validate(self.model.stride)?;
        self.data.scene.validate()?;
        self.data.target_shift.validate()?;
        if self.seed > i64::MAX as u64 {
            return Err(Error::Usage("seed must be below 2^63".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Recursively replaces entries of `base` with those of `file`. Keys the
/// defaults do not have are kept so deserialization rejects them.
fn overlay(base: &mut toml::Table, file: toml::Table) {
    for (k, v) in file {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(f)) => overlay(b, f),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_a_round_trip() {
        let mut c = RunConfig::shipped();
        c.resolve_seeds();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 3").is_err());
        assert!(RunConfig::parse("[model]\nstrid = 8").is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[ssl.unlabeled]\nbatch = 2\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p)), Err(Error::Usage(_))));
    }

    #[test]
    fn file_overrides_only_what_it_sets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 9\n[pretrain]\nlearning_rate = 0.001\n").unwrap();
        let c = RunConfig::load(Some(&p)).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.pretrain.learning_rate, 1e-3);
        assert_eq!(c.pretrain.total_steps, RunConfig::shipped().pretrain.total_steps);
    }

    #[test]
    fn sub_seeds_are_distinct_and_pinnable() {
        let mut a = RunConfig { seed: 5, ..RunConfig::default() };
        a.resolve_seeds();
        let s = a.seeds;
        assert!(s.data != s.init && s.init != s.order && s.data != s.order);
        let mut b = RunConfig { seed: 6, seeds: Seeds { data: s.data, ..Seeds::default() }, ..RunConfig::default() };
        b.resolve_seeds();
        assert_eq!(b.data.root_seed, a.data.root_seed);
        assert_ne!(b.pretrain.seed, a.pretrain.seed);
    }
}
