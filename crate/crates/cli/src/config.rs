//! Experiment configuration: JSON with defaults for every field and unknown
//! keys rejected. CLI flags override the seed list and output format.

use serde::{Deserialize, Serialize};

use okreg::error::{Error, Result};
use okreg::kernel::KernelSpec;
use okreg::ntk::{Activation, CorrectionMode, RefreshSchedule};
use okreg::regression::HyperParams;
use okreg::tasks::{self, TaskConfig};

/// Kernel families buildable from a config; random-feature projections are
/// drawn from the task seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelDescriptor {
    Rbf { bandwidth: f64 },
    RandomFeatureTanh { dim: usize },
    Linear,
}

impl Default for KernelDescriptor {
    fn default() -> Self {
        KernelDescriptor::Rbf { bandwidth: 0.1 }
    }
}

impl KernelDescriptor {
    pub fn build(&self, input_dim: usize, seed: u64) -> Result<KernelSpec> {
        match self {
            KernelDescriptor::Rbf { bandwidth } => KernelSpec::rbf(*bandwidth),
            KernelDescriptor::RandomFeatureTanh { dim } => {
                Ok(tasks::gen_random_feature_map(*dim, input_dim, seed))
            }
            KernelDescriptor::Linear => Ok(KernelSpec::linear(input_dim)),
        }
    }
}

/// The learners the runner knows how to drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    /// Ridge fit on the full data; flat curve by construction.
    Offline,
    /// Sample-by-sample online learning on the true targets.
    OnlineTrue,
    /// Online learning on the exact corrected targets (uses the full set).
    OnlineCorrected,
    /// Online learning on causally corrected targets, chunk by chunk.
    OnlineIterCorrected,
    /// Mini-batch SGD on an MLP, optionally with NTK-corrected targets.
    SgdMlp {
        hidden: Vec<usize>,
        activation: Activation,
        schedule: RefreshSchedule,
        correction: CorrectionMode,
    },
    /// Offline refit on everything seen so far at each evaluation point.
    CumulativeReplay,
}

impl LearnerKind {
    pub fn tag(&self) -> String {
        match self {
            LearnerKind::Offline => "offline".to_string(),
            LearnerKind::OnlineTrue => "online_true".to_string(),
            LearnerKind::OnlineCorrected => "online_corrected".to_string(),
            LearnerKind::OnlineIterCorrected => "online_iter_corrected".to_string(),
            LearnerKind::SgdMlp { correction, .. } => match correction {
                CorrectionMode::None => "sgd_mlp".to_string(),
                CorrectionMode::Iterative => "sgd_mlp_corrected".to_string(),
            },
            LearnerKind::CumulativeReplay => "cumulative_replay".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub kernel: KernelDescriptor,
    pub learners: Vec<LearnerKind>,
    pub hp: HyperParams,
    /// Optional hyperparameter grid; when non-empty each learner runs once
    /// per entry and records carry an `[eta=…,gamma=…]` tag suffix.
    pub hp_grid: Vec<HyperParams>,
    /// Look-ahead horizon of the block correction.
    pub correction_chunk: usize,
    /// Evaluation cadence in update steps.
    pub eval_every: usize,
    pub seeds: Vec<u64>,
    /// Passes per task for the MLP learners.
    pub epochs_per_task: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: TaskConfig::default(),
            kernel: KernelDescriptor::default(),
            learners: vec![LearnerKind::Offline],
            hp: HyperParams::default(),
            hp_grid: Vec::new(),
            correction_chunk: 20,
            eval_every: 16,
            seeds: vec![0],
            epochs_per_task: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(body: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(body).map_err(|e| Error::Parse {
                path: origin.to_string(),
                message: e.to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path)
            .map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        Self::from_json(&body, &path.display().to_string())
    }

    /// The hyperparameter settings to run: the grid when given, else `hp`.
    pub fn hp_settings(&self) -> Vec<HyperParams> {
        if self.hp_grid.is_empty() {
            vec![self.hp.clone()]
        } else {
            self.hp_grid.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        for hp in &self.hp_grid {
            hp.validate()?;
        }
        if self.learners.is_empty() {
            return Err(Error::InvalidParameter {
                name: "learners",
                reason: "need at least one learner".to_string(),
            });
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter {
                name: "seeds",
                reason: "need at least one seed".to_string(),
            });
        }
        if self.correction_chunk == 0 || self.eval_every == 0 || self.epochs_per_task == 0 {
            return Err(Error::InvalidParameter {
                name: "config",
                reason: "correction_chunk, eval_every, epochs_per_task must be >= 1".to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides_parse() {
        let cfg = ExperimentConfig::from_json("{}", "inline").unwrap();
        assert_eq!(cfg.eval_every, 16);
        assert_eq!(cfg.correction_chunk, 20);
        assert_eq!(cfg.seeds, vec![0]);
        let cfg = ExperimentConfig::from_json(
            r#"{"hp": {"eta": 0.25}, "learners": ["online_true", "offline"]}"#,
            "inline",
        )
        .unwrap();
        assert_eq!(cfg.hp.eta, 0.25);
        assert_eq!(cfg.hp.gamma, 1.0);
        assert_eq!(cfg.learners.len(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_json(r#"{"not_a_key": 1}"#, "inline").unwrap_err();
        assert!(err.to_string().contains("not_a_key"));
        let err =
            ExperimentConfig::from_json(r#"{"hp": {"etaa": 0.1}}"#, "inline").unwrap_err();
        assert!(err.to_string().contains("etaa"));
    }

    #[test]
    fn learner_tags() {
        assert_eq!(LearnerKind::Offline.tag(), "offline");
        let mlp = LearnerKind::SgdMlp {
            hidden: vec![64],
            activation: Activation::Tanh,
            schedule: RefreshSchedule::RefreshPerTask,
            correction: CorrectionMode::Iterative,
        };
        assert_eq!(mlp.tag(), "sgd_mlp_corrected");
    }

    #[test]
    fn config_roundtrip_json() {
        let cfg = ExperimentConfig::default();
        let body = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&body, "inline").unwrap();
        assert_eq!(cfg, back);
    }
}
