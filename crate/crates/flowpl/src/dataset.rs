//! On-disk dataset: `split/<name>/NNNNNN_{img1.png,img2.png,flow.bin,mask.png}`
//! plus `manifest.json` with the split configuration and scene seeds.
//! The unlabeled split holds frames only.

use std::path::{Path, PathBuf};

use flowpl_core::flow::{Domain, FramePair, LabelKind, LabeledPair};
use flowpl_core::synth::{DatasetSplits, SplitConfig, SplitRole, SplitSeeds};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: u32,
    pub config: SplitConfig,
    pub seeds: SplitSeeds,
}

pub fn split_dir(root: &Path, role: SplitRole) -> PathBuf {
    root.join("split").join(role.name())
}

pub fn entry(dir: &Path, index: usize, file: &str) -> PathBuf {
    dir.join(format!("{index:06}_{file}"))
}

fn write_frames(dir: &Path, i: usize, p: &FramePair) -> Result<()> {
    io::write_frame(&entry(dir, i, "img1.png"), &p.image1)?;
    io::write_frame(&entry(dir, i, "img2.png"), &p.image2)
}

pub fn write_dataset(root: &Path, splits: &DatasetSplits) -> Result<()> {
    for role in SplitRole::ALL {
        let dir = split_dir(root, role);
        io::create_dir(&dir)?;
        match splits.labeled(role) {
            Some(pairs) => {
                for (i, p) in pairs.iter().enumerate() {
                    write_frames(&dir, i, &FramePair { image1: p.image1.clone(), image2: p.image2.clone() })?;
                    io::write_raw_flow(&entry(&dir, i, "flow.bin"), &p.flow)?;
                    io::write_mask(&entry(&dir, i, "mask.png"), &p.mask)?;
                }
            }
            None => {
                for (i, p) in splits.target_unlabeled.iter().enumerate() {
                    write_frames(&dir, i, p)?;
                }
            }
        }
    }
    let manifest = Manifest { format: 1, config: splits.config.clone(), seeds: splits.seeds.clone() };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    io::write_bytes(&root.join(MANIFEST), text.as_bytes())
}

pub fn read_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST);
    let bytes = io::read_bytes(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::data(&path, e))
}

fn read_frames(dir: &Path, i: usize) -> Result<FramePair> {
    Ok(FramePair {
        image1: io::read_frame(&entry(dir, i, "img1.png"))?,
        image2: io::read_frame(&entry(dir, i, "img2.png"))?,
    })
}

pub fn read_labeled(root: &Path, role: SplitRole, count: usize) -> Result<Vec<LabeledPair>> {
    let dir = split_dir(root, role);
    let domain = if role.is_target() { Domain::Target } else { Domain::Source };
    (0..count)
        .map(|i| {
            let f = read_frames(&dir, i)?;
            let flow = io::read_raw_flow(&entry(&dir, i, "flow.bin"))?;
            let mask = io::read_mask(&entry(&dir, i, "mask.png"))?;
            LabeledPair::new(f.image1, f.image2, flow, mask, domain, LabelKind::GroundTruth)
                .map_err(|e| Error::data(&entry(&dir, i, "flow.bin"), e))
        })
        .collect()
}

pub fn read_unlabeled(root: &Path, count: usize) -> Result<Vec<FramePair>> {
    let dir = split_dir(root, SplitRole::TargetUnlabeled);
    (0..count).map(|i| read_frames(&dir, i)).collect()
}

/// Loads every split listed in the manifest.
pub fn read_dataset(root: &Path) -> Result<DatasetSplits> {
    let m = read_manifest(root)?;
    let sizes = m.config.sizes;
    Ok(DatasetSplits {
        source: read_labeled(root, SplitRole::Source, sizes.source)?,
        target_train: read_labeled(root, SplitRole::TargetTrain, sizes.target_train)?,
        target_unlabeled: read_unlabeled(root, sizes.target_unlabeled)?,
        target_test: read_labeled(root, SplitRole::TargetTest, sizes.target_test)?,
        seeds: m.seeds,
        config: m.config,
    })
}

pub fn parse_role(name: &str) -> Result<SplitRole> {
    SplitRole::ALL
        .into_iter()
        .find(|r| r.name() == name)
        .ok_or_else(|| Error::Usage(format!("unknown split `{name}`")))
}
