//! The staged experiment: synthesis, augmentation, training, removal,
//! evaluation and reporting.
//!
//! Each stage writes one directory under the stage root together with a
//! `stage.json` record holding the hash of the configuration it depends on,
//! the content hashes of its inputs and the hash of its own files. A stage
//! whose record still matches is not rebuilt. Paths inside manifests are
//! relative to the stage root.

mod config;
mod evaluate;
mod report;
mod stages;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

pub use config::{
    AugmentConfig, DataConfig, EvalConfig, ExperimentConfig, FilterSplit, GanTrainConfig, Profile, SegTrainConfig,
};
pub use evaluate::{Condition, MetricsRow, TrialRecord};
pub use report::{delta_points, render_report, report, ReportBundle};

use crate::error::{Error, Result};
use crate::io;

pub const STAGE_RECORD: &str = "stage.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Augment,
    TrainSeg,
    TrainGan,
    Remove,
    Evaluate,
    Report,
}

impl Stage {
    /// In dependency order.
    pub const ALL: [Stage; 7] = [
        Stage::Synth,
        Stage::Augment,
        Stage::TrainSeg,
        Stage::TrainGan,
        Stage::Remove,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Augment => "augment",
            Stage::TrainSeg => "train_seg",
            Stage::TrainGan => "train_gan",
            Stage::Remove => "remove",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Direct upstream stages.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::Synth => &[],
            Stage::Augment => &[Stage::Synth],
            Stage::TrainSeg | Stage::TrainGan => &[Stage::Augment],
            Stage::Remove => &[Stage::Synth, Stage::Augment, Stage::TrainSeg, Stage::TrainGan],
            Stage::Evaluate => &[Stage::Synth, Stage::Remove],
            Stage::Report => &[Stage::Evaluate],
        }
    }

    /// The part of the configuration this stage's output depends on
    /// directly. Upstream settings reach it through the input hashes.
    fn config_slice(self, c: &ExperimentConfig) -> serde_json::Value {
        match self {
            Stage::Synth => json!({ "seed": c.seed, "data": c.data }),
            Stage::Augment => json!({ "seed": c.seed, "filters": c.filters.train, "augment": c.augment }),
            Stage::TrainSeg => json!({
                "seed": c.seed, "segnet": c.segnet, "train": c.segnet_train, "schedule": c.schedule,
            }),
            Stage::TrainGan => json!({
                "seed": c.seed, "gan": c.gan, "train": c.gan_train, "schedule": c.schedule,
                "weights": c.loss_weights,
            }),
            Stage::Remove => json!({
                "filters": c.filters.test, "references": c.data.references_per_identity,
            }),
            Stage::Evaluate => json!({ "seed": c.seed, "evaluation": c.evaluation }),
            Stage::Report => json!({ "fmr_targets": c.evaluation.fmr_targets }),
        }
    }

    pub fn config_hash(self, c: &ExperimentConfig) -> String {
        let text = serde_json::to_string(&self.config_slice(c)).expect("config serialises");
        io::sha256_hex(text.as_bytes())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s || st.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Contents of `stage.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub config_hash: String,
    /// Upstream stage name to its content hash at build time.
    pub inputs: std::collections::BTreeMap<String, String>,
    pub content_hash: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageArtifact {
    pub stage: Stage,
    pub dir: PathBuf,
    pub record: StageRecord,
    /// True when the existing artifact was reused.
    pub cached: bool,
}

pub fn stage_path(root: &Path, stage: Stage) -> PathBuf {
    root.join(stage.name())
}

pub fn read_record(root: &Path, stage: Stage) -> Result<Option<StageRecord>> {
    let path = stage_path(root, stage).join(STAGE_RECORD);
    if !path.exists() {
        return Ok(None);
    }
    io::read_json(&path).map(Some)
}

/// Recorded content hash of an upstream artifact after checking that it is
/// present, built from the current configuration and unmodified.
fn verified_input(root: &Path, config: &ExperimentConfig, stage: Stage, upstream: Stage) -> Result<String> {
    let Some(record) = read_record(root, upstream)? else {
        return Err(Error::StageDependency {
            stage: stage.name().into(),
            missing: stage_path(root, upstream).join(STAGE_RECORD).display().to_string(),
        });
    };
    if record.config_hash != upstream.config_hash(config) {
        return Err(Error::StaleArtifact {
            artifact: upstream.name().into(),
            reason: "it was built from a different configuration; rerun it first".into(),
        });
    }
    let actual = io::hash_tree(&stage_path(root, upstream), &[STAGE_RECORD])?;
    if actual != record.content_hash {
        return Err(Error::StaleArtifact {
            artifact: upstream.name().into(),
            reason: "its files changed after it was written".into(),
        });
    }
    for up in upstream.inputs() {
        let current = read_record(root, *up)?.map(|r| r.content_hash);
        if current.as_ref() != record.inputs.get(up.name()) {
            return Err(Error::StaleArtifact {
                artifact: upstream.name().into(),
                reason: format!("`{}` was rebuilt since; rerun it first", up.name()),
            });
        }
    }
    Ok(record.content_hash)
}

/// Builds one stage (or reuses it) under `root`.
pub fn run_stage(config: &ExperimentConfig, root: &Path, stage: Stage) -> Result<StageArtifact> {
    config.validate()?;
    let mut inputs = std::collections::BTreeMap::new();
    // nearest upstream first, so a missing artifact is named precisely
    for up in stage.inputs().iter().rev() {
        inputs.insert(up.name().to_string(), verified_input(root, config, stage, *up)?);
    }
    let config_hash = stage.config_hash(config);
    let dir = stage_path(root, stage);
    if let Some(old) = read_record(root, stage)? {
        if old.config_hash == config_hash
            && old.inputs == inputs
            && io::hash_tree(&dir, &[STAGE_RECORD])? == old.content_hash
        {
            log::info!("{stage}: up to date");
            return Ok(StageArtifact {
                stage,
                dir,
                record: old,
                cached: true,
            });
        }
    }

    log::info!("{stage}: building");
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let tmp = root.join(format!(".{}.tmp", stage.name()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let ctx = stages::Ctx { config, root, out: &tmp };
    match stage {
        Stage::Synth => stages::synth(&ctx)?,
        Stage::Augment => stages::augment(&ctx)?,
        Stage::TrainSeg => stages::train_seg(&ctx)?,
        Stage::TrainGan => stages::train_gan(&ctx)?,
        Stage::Remove => stages::remove(&ctx)?,
        Stage::Evaluate => evaluate::evaluate(&ctx)?,
        Stage::Report => report::build(&ctx)?,
    }
    let record = StageRecord {
        stage,
        config_hash,
        inputs,
        content_hash: io::hash_tree(&tmp, &[STAGE_RECORD])?,
    };
    io::write_json(&tmp.join(STAGE_RECORD), &record)?;
    replace_dir(&tmp, &dir)?;
    Ok(StageArtifact {
        stage,
        dir,
        record,
        cached: false,
    })
}

/// Moves `tmp` into place, swapping out any previous `dir`.
fn replace_dir(tmp: &Path, dir: &Path) -> Result<()> {
    let old = dir.with_file_name(format!(
        ".{}.old",
        dir.file_name().and_then(|s| s.to_str()).unwrap_or("stage")
    ));
    if old.exists() {
        std::fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    if dir.exists() {
        std::fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::rename(tmp, dir).map_err(|e| Error::io(tmp, e))?;
    if old.exists() {
        std::fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(())
}

/// Every stage in order.
pub fn run_all(config: &ExperimentConfig, root: &Path) -> Result<Vec<StageArtifact>> {
    Stage::ALL.into_iter().map(|s| run_stage(config, root, s)).collect()
}

/// Independent stream seed for one purpose.
pub(crate) fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}
