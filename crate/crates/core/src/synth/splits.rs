use alloc::vec::Vec;

use super::{apply_shift, gen_pair, DomainShift, SceneParams, SceneSpec};
use crate::error::SynthError;
use crate::flow::{FramePair, LabeledPair};
use crate::seed::splitmix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SplitRole {
    /// Labeled source-domain pairs.
    Source,
    /// Small labeled target set used for pretraining, CV and finetuning.
    TargetTrain,
    /// Large target set whose labels are never exposed.
    TargetUnlabeled,
    /// Held-out labeled target set.
    TargetTest,
}

impl SplitRole {
    pub const ALL: [SplitRole; 4] =
        [SplitRole::Source, SplitRole::TargetTrain, SplitRole::TargetUnlabeled, SplitRole::TargetTest];

    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Source => "source",
            SplitRole::TargetTrain => "target-train",
            SplitRole::TargetUnlabeled => "target-unlabeled",
            SplitRole::TargetTest => "target-test",
        }
    }

    pub fn is_target(self) -> bool {
        self != SplitRole::Source
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SplitSizes {
    pub source: usize,
    pub target_train: usize,
    pub target_unlabeled: usize,
    pub target_test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self { source: 500, target_train: 50, target_unlabeled: 500, target_test: 100 }
    }
}

impl SplitSizes {
    pub fn get(&self, role: SplitRole) -> usize {
        match role {
            SplitRole::Source => self.source,
            SplitRole::TargetTrain => self.target_train,
            SplitRole::TargetUnlabeled => self.target_unlabeled,
            SplitRole::TargetTest => self.target_test,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SplitConfig {
    pub root_seed: u64,
    pub sizes: SplitSizes,
    pub scene: SceneParams,
    pub target_shift: DomainShift,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { root_seed: 0, sizes: SplitSizes::default(), scene: SceneParams::default(), target_shift: DomainShift::target() }
    }
}

/// Scene seeds per role. All roles draw from one contiguous range of
/// consecutive seeds, so they are pairwise disjoint by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSeeds {
    pub source: Vec<u64>,
    pub target_train: Vec<u64>,
    pub target_unlabeled: Vec<u64>,
    pub target_test: Vec<u64>,
}

impl SplitSeeds {
    pub fn derive(cfg: &SplitConfig) -> Result<Self, SynthError> {
        let s = cfg.sizes;
        for role in SplitRole::ALL {
            if s.get(role) == 0 {
                return Err(SynthError::InvalidSizes(alloc::format!("{} split is empty", role.name())));
            }
        }
        let total = [s.source, s.target_train, s.target_unlabeled, s.target_test]
            .iter()
            .try_fold(0u64, |acc, &n| acc.checked_add(n as u64))
            .ok_or(SynthError::SeedOverflow)?;
        if total == u64::MAX {
            return Err(SynthError::SeedOverflow);
        }
        let base = splitmix(cfg.root_seed);
        let mut next = 0u64;
        let mut take = |n: usize| {
            let v: Vec<u64> = (next..next + n as u64).map(|i| base.wrapping_add(i)).collect();
            next += n as u64;
            v
        };
        Ok(SplitSeeds {
            source: take(s.source),
            target_train: take(s.target_train),
            target_unlabeled: take(s.target_unlabeled),
            target_test: take(s.target_test),
        })
    }

    pub fn get(&self, role: SplitRole) -> &[u64] {
        match role {
            SplitRole::Source => &self.source,
            SplitRole::TargetTrain => &self.target_train,
            SplitRole::TargetUnlabeled => &self.target_unlabeled,
            SplitRole::TargetTest => &self.target_test,
        }
    }
}

/// Renders one scene of `role`, applying the target shift where it belongs.
pub fn render_scene(cfg: &SplitConfig, role: SplitRole, seed: u64) -> Result<LabeledPair, SynthError> {
    let pair = gen_pair(&SceneSpec::sample(seed, &cfg.scene)?)?;
    Ok(if role.is_target() { apply_shift(&pair, &cfg.target_shift, splitmix(seed ^ 0x5eed)) } else { pair })
}

/// The four dataset roles. Unlabeled target pairs are stored without labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplits {
    pub config: SplitConfig,
    pub seeds: SplitSeeds,
    pub source: Vec<LabeledPair>,
    pub target_train: Vec<LabeledPair>,
    pub target_unlabeled: Vec<FramePair>,
    pub target_test: Vec<LabeledPair>,
}

impl DatasetSplits {
    pub fn labeled(&self, role: SplitRole) -> Option<&[LabeledPair]> {
        match role {
            SplitRole::Source => Some(&self.source),
            SplitRole::TargetTrain => Some(&self.target_train),
            SplitRole::TargetTest => Some(&self.target_test),
            SplitRole::TargetUnlabeled => None,
        }
    }

    /// Regenerates the hidden labels of the unlabeled split. For diagnostics
    /// only; training code never calls this.
    pub fn unlabeled_ground_truth(&self, index: usize) -> Result<LabeledPair, SynthError> {
        render_scene(&self.config, SplitRole::TargetUnlabeled, self.seeds.target_unlabeled[index])
    }
}

pub fn build_splits(cfg: &SplitConfig) -> Result<DatasetSplits, SynthError> {
    cfg.scene.validate()?;
    cfg.target_shift.validate()?;
    let seeds = SplitSeeds::derive(cfg)?;
    let labeled = |role: SplitRole| -> Result<Vec<LabeledPair>, SynthError> {
        seeds.get(role).iter().map(|&s| render_scene(cfg, role, s)).collect()
    };
    let target_unlabeled = seeds
        .target_unlabeled
        .iter()
        .map(|&s| {
            render_scene(cfg, SplitRole::TargetUnlabeled, s).map(|p| FramePair { image1: p.image1, image2: p.image2 })
        })
        .collect::<Result<_, _>>()?;
    Ok(DatasetSplits {
        source: labeled(SplitRole::Source)?,
        target_train: labeled(SplitRole::TargetTrain)?,
        target_unlabeled,
        target_test: labeled(SplitRole::TargetTest)?,
        seeds,
        config: cfg.clone(),
    })
}
