//! Experiment configuration: built-in profiles deep-merged with a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inpaint::{GanConfig, LossWeights, SsimWindow};
use crate::schedule::OptimSchedule;
use crate::segmenter::SegNetConfig;
use crate::stickers;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Full resolution and schedule.
    Paper,
    /// 64x64 images, small widths and a few hundred iterations.
    Desk,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(Error::Config(format!("unknown profile `{s}` (expected paper or desk)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub image_size: u32,
    /// Source-id prefix of the training dataset.
    pub train_prefix: String,
    /// Source-id prefix of the removal/evaluation dataset.
    pub eval_prefix: String,
    pub train_identities: usize,
    pub train_sessions: usize,
    pub eval_identities: usize,
    pub eval_sessions: usize,
    /// Sessions per evaluation identity enrolled as references; the rest
    /// are probes.
    pub references_per_identity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub n_subregions: usize,
    pub fill_min: f64,
    pub fill_max: f64,
    /// Augmented training images.
    pub count: usize,
    /// Filtered training images per augmented one.
    pub filtered_ratio: f64,
    /// Augmented evaluation-set images kept for reconstruction scoring.
    pub heldout: usize,
    pub validation_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegTrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanTrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub ssim_window: SsimWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub fmr_targets: Vec<f64>,
    pub impostors_per_probe: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seed: u64,
    pub data: DataConfig,
    pub filters: FilterSplit,
    pub augment: AugmentConfig,
    pub segnet: SegNetConfig,
    pub segnet_train: SegTrainConfig,
    pub gan: GanConfig,
    pub gan_train: GanTrainConfig,
    pub schedule: OptimSchedule,
    pub loss_weights: LossWeights,
    pub evaluation: EvalConfig,
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let filters = FilterSplit {
            train: names(&["card", "kitty", "mickey", "dog", "mask", "panda", "squirrel"]),
            test: names(&["bunny", "glasses", "joker"]),
        };
        let evaluation = EvalConfig {
            fmr_targets: vec![0.0001, 0.001, 0.01],
            impostors_per_probe: 10,
        };
        match profile {
            Profile::Paper => ExperimentConfig {
                profile,
                seed: 0,
                data: DataConfig {
                    image_size: 512,
                    train_prefix: "A".into(),
                    eval_prefix: "B".into(),
                    train_identities: 1000,
                    train_sessions: 5,
                    eval_identities: 500,
                    eval_sessions: 5,
                    references_per_identity: 2,
                },
                filters,
                augment: AugmentConfig {
                    n_subregions: 16,
                    fill_min: 0.2,
                    fill_max: 0.6,
                    count: 7870,
                    filtered_ratio: 4355.0 / 7870.0,
                    heldout: 200,
                    validation_fraction: 0.1,
                },
                segnet: SegNetConfig::default(),
                segnet_train: SegTrainConfig {
                    iterations: 100_000,
                    batch_size: 8,
                },
                gan: GanConfig::default(),
                // 70 epochs over 12,225 samples, one sample per step
                gan_train: GanTrainConfig {
                    iterations: 70 * 12_225,
                    batch_size: 1,
                    ssim_window: SsimWindow::default(),
                },
                schedule: OptimSchedule::default(),
                loss_weights: LossWeights::default(),
                evaluation,
            },
            Profile::Desk => ExperimentConfig {
                profile,
                seed: 0,
                data: DataConfig {
                    image_size: 64,
                    train_prefix: "A".into(),
                    eval_prefix: "B".into(),
                    train_identities: 100,
                    train_sessions: 2,
                    eval_identities: 24,
                    eval_sessions: 5,
                    references_per_identity: 2,
                },
                filters,
                augment: AugmentConfig {
                    n_subregions: 16,
                    fill_min: 0.2,
                    fill_max: 0.6,
                    count: 200,
                    filtered_ratio: 4355.0 / 7870.0,
                    heldout: 20,
                    validation_fraction: 0.1,
                },
                segnet: SegNetConfig::desk(),
                segnet_train: SegTrainConfig {
                    iterations: 500,
                    batch_size: 8,
                },
                gan: GanConfig::desk(),
                gan_train: GanTrainConfig {
                    iterations: 600,
                    batch_size: 4,
                    ssim_window: SsimWindow::default(),
                },
                schedule: OptimSchedule::default(),
                loss_weights: LossWeights::default(),
                evaluation,
            },
        }
    }

    /// The profile named in `text` (or `fallback`, else desk) with every key
    /// of `text` merged over it.
    pub fn from_toml_str(text: &str, profile_override: Option<Profile>) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        let named = match user.get("profile") {
            Some(toml::Value::String(s)) => Some(s.parse::<Profile>()?),
            Some(other) => return Err(Error::Config(format!("profile must be a string, got {other}"))),
            None => None,
        };
        let profile = profile_override.or(named).unwrap_or(Profile::Desk);
        let base = toml::Table::try_from(Self::profile(profile))
            .map_err(|e| Error::Config(format!("profile does not serialise: {e}")))?;
        let mut merged = toml::Value::Table(base);
        merge(&mut merged, toml::Value::Table(user));
        if let toml::Value::Table(t) = &mut merged {
            t.insert("profile".into(), toml::Value::try_from(profile).expect("enum serialises"));
        }
        let config: ExperimentConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` if given; otherwise the chosen profile as is.
    pub fn load(path: Option<&Path>, profile: Option<Profile>, seed: Option<u64>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text, profile)?
            }
            None => Self::profile(profile.unwrap_or(Profile::Desk)),
        };
        if let Some(s) = seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let f = &self.filters;
        for name in f.train.iter().chain(&f.test) {
            if stickers::by_name(name).is_none() {
                return bad(format!("unknown filter `{name}`"));
            }
        }
        if let Some(n) = f.train.iter().find(|n| f.test.contains(n)) {
            return bad(format!("filter `{n}` is in both the training and the test split"));
        }
        if f.train.is_empty() || f.test.is_empty() {
            return bad("both filter splits need at least one filter".into());
        }
        if self.profile == Profile::Paper && (f.test.len() != 3 || f.train.len() + f.test.len() != 10) {
            return bad("the `paper` profile holds out 3 of the 10 filters".into());
        }
        let d = &self.data;
        if d.train_prefix == d.eval_prefix || d.train_prefix.is_empty() || d.eval_prefix.is_empty() {
            return bad("train and eval datasets need distinct, non-empty prefixes".into());
        }
        if d.train_identities == 0 || d.train_sessions == 0 || d.eval_identities < 2 {
            return bad("datasets are too small (eval needs two identities for impostor trials)".into());
        }
        if d.references_per_identity == 0 || d.eval_sessions <= d.references_per_identity {
            return bad("eval_sessions must exceed references_per_identity".into());
        }
        let size = (d.image_size, d.image_size);
        if self.segnet.input_size != size || self.gan.input_size != size {
            return bad(format!(
                "image_size {} disagrees with segnet {:?} / gan {:?} input sizes",
                d.image_size, self.segnet.input_size, self.gan.input_size
            ));
        }
        let a = &self.augment;
        if a.n_subregions == 0 || !(0.0 <= a.fill_min && a.fill_min <= a.fill_max && a.fill_max <= 1.0) {
            return bad(format!("augment fill range [{}, {}]", a.fill_min, a.fill_max));
        }
        if !(0.0..1.0).contains(&a.validation_fraction) || a.filtered_ratio < 0.0 {
            return bad("validation_fraction must be in [0, 1) and filtered_ratio non-negative".into());
        }
        if a.count == 0 && a.filtered_ratio == 0.0 {
            return bad("no training images".into());
        }
        if self.segnet_train.iterations == 0 || self.segnet_train.batch_size == 0 {
            return bad("segnet_train needs iterations and a batch size".into());
        }
        if self.gan_train.iterations == 0 || self.gan_train.batch_size == 0 {
            return bad("gan_train needs iterations and a batch size".into());
        }
        let w = self.gan_train.ssim_window;
        if w.size == 0 || w.size % 2 == 0 || w.size > d.image_size as usize || w.sigma <= 0.0 {
            return bad(format!("ssim window {w:?}"));
        }
        if self.evaluation.fmr_targets.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return bad("FMR targets must lie in (0, 1]".into());
        }
        if self.schedule.initial_lr <= 0.0 || self.schedule.decay_every == 0 {
            return bad("schedule needs a positive rate and decay interval".into());
        }
        self.segnet.validate()?;
        self.gan.validate()?;
        self.loss_weights.validate()
    }
}

/// Recursively overlays `over` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_are_valid() {
        ExperimentConfig::profile(Profile::Paper).validate().unwrap();
        ExperimentConfig::profile(Profile::Desk).validate().unwrap();
        let p = ExperimentConfig::profile(Profile::Paper);
        assert_eq!(p.filters.test.len(), 3);
        assert_eq!(p.data.image_size, 512);
        assert_eq!(p.loss_weights, LossWeights::default());
    }

    #[test]
    fn file_overrides_merge_deeply() {
        let c = ExperimentConfig::from_toml_str(
            "seed = 9\n[segnet_train]\niterations = 12\n[gan.generator]\nbase_channels = 8\n",
            None,
        )
        .unwrap();
        assert_eq!(c.profile, Profile::Desk);
        assert_eq!(c.seed, 9);
        assert_eq!(c.segnet_train.iterations, 12);
        assert_eq!(c.segnet_train.batch_size, 8);
        assert_eq!(c.gan.generator.base_channels, 8);
        assert_eq!(c.gan.generator.dilations, vec![2, 4, 8, 16]);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "[filters]\ntrain = [\"joker\"]\ntest = [\"joker\"]\n",
            "[filters]\ntest = [\"sombrero\"]\n",
            "unknown_key = 1\n",
            "[data]\nimage_size = 48\n",
            "profile = \"huge\"\n",
            "[augment]\nfill_min = 0.9\nfill_max = 0.1\n",
            "not toml at all [",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text, None), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn paper_profile_holds_out_three() {
        let text = "profile = \"paper\"\n[filters]\ntrain = [\"card\"]\ntest = [\"joker\"]\n";
        assert!(matches!(ExperimentConfig::from_toml_str(text, None), Err(Error::Config(_))));
    }
}
