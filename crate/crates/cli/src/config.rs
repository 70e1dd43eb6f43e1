//! Engine configuration: JSON config file plus CLI flag overrides, flags
//! winning. All association and matcher parameters are exposed even though
//! `track` only consumes the association subset.

use anyhow::Result;
use clap::Args;
use serde::Deserialize;

use qtrack_core::assignment::{ClsCostForm, MatcherParams};
use qtrack_core::losses::LossReduction;
use qtrack_core::tracker::{AssignMode, AssocConfig};

/// Optional fields mirroring every engine parameter; unset fields fall back
/// to the built-in defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub top_k: Option<usize>,
    pub tau_new: Option<f64>,
    pub memory_momentum: Option<f64>,
    pub keep_alive_frames: Option<u64>,
    pub emit_score_threshold: Option<f64>,
    pub assign_mode: Option<AssignMode>,
    pub normalize_embeddings: Option<bool>,
    pub lambda_cls: Option<f64>,
    pub lambda_l1: Option<f64>,
    pub lambda_giou: Option<f64>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub cls_cost_form: Option<ClsCostForm>,
    pub loss_reduction: Option<LossReduction>,
}

impl ConfigFile {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    /// Resolve the association config: defaults, then file, then flags.
    pub fn assoc_config(&self, overrides: &EngineOverrides) -> AssocConfig {
        let mut cfg = AssocConfig::default();
        if let Some(v) = self.top_k {
            cfg.top_k = v;
        }
        if let Some(v) = self.tau_new {
            cfg.tau_new = v;
        }
        if let Some(v) = self.memory_momentum {
            cfg.memory_momentum = v;
        }
        if let Some(v) = self.keep_alive_frames {
            cfg.keep_alive_frames = Some(v);
        }
        if let Some(v) = self.emit_score_threshold {
            cfg.emit_score_threshold = v;
        }
        if let Some(v) = self.assign_mode {
            cfg.assign_mode = v;
        }
        if let Some(v) = self.normalize_embeddings {
            cfg.normalize_embeddings = v;
        }

        if let Some(v) = overrides.topk {
            cfg.top_k = v;
        }
        if let Some(v) = overrides.tau_new {
            cfg.tau_new = v;
        }
        if let Some(v) = overrides.momentum {
            cfg.memory_momentum = v;
        }
        if let Some(v) = overrides.keep_alive {
            cfg.keep_alive_frames = Some(v);
        }
        if let Some(v) = overrides.emit_threshold {
            cfg.emit_score_threshold = v;
        }
        if let Some(v) = overrides.assign_mode {
            cfg.assign_mode = v.into();
        }
        if let Some(v) = overrides.normalize_embeddings {
            cfg.normalize_embeddings = v;
        }
        cfg
    }

    /// Resolve the matcher parameters the same way.
    pub fn matcher_params(&self, overrides: &EngineOverrides) -> MatcherParams {
        let mut params = MatcherParams::default();
        if let Some(v) = self.lambda_cls {
            params.weights.lambda_cls = v;
        }
        if let Some(v) = self.lambda_l1 {
            params.weights.lambda_l1 = v;
        }
        if let Some(v) = self.lambda_giou {
            params.weights.lambda_giou = v;
        }
        if let Some(v) = self.alpha {
            params.alpha = v;
        }
        if let Some(v) = self.gamma {
            params.gamma = v;
        }
        if let Some(v) = self.cls_cost_form {
            params.cls_cost_form = v;
        }

        if let Some(v) = overrides.lambda_cls {
            params.weights.lambda_cls = v;
        }
        if let Some(v) = overrides.lambda_l1 {
            params.weights.lambda_l1 = v;
        }
        if let Some(v) = overrides.lambda_giou {
            params.weights.lambda_giou = v;
        }
        if let Some(v) = overrides.alpha {
            params.alpha = v;
        }
        if let Some(v) = overrides.gamma {
            params.gamma = v;
        }
        params
    }

    pub fn loss_reduction(&self) -> LossReduction {
        self.loss_reduction.unwrap_or_default()
    }
}

/// Per-flag engine overrides shared by commands that accept tuning.
#[derive(Debug, Default, Args)]
pub struct EngineOverrides {
    /// Candidates kept per frame.
    #[arg(long)]
    pub topk: Option<usize>,
    /// Minimum matching factor to inherit an identity.
    #[arg(long)]
    pub tau_new: Option<f64>,
    /// Memory embedding momentum in [0, 1].
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Frames a track may stay unmatched and still be eligible.
    #[arg(long)]
    pub keep_alive: Option<u64>,
    /// Drop output tracks whose best score is below this.
    #[arg(long)]
    pub emit_threshold: Option<f64>,
    /// Candidate-to-track binding rule.
    #[arg(long, value_enum)]
    pub assign_mode: Option<AssignModeArg>,
    /// L2-normalize embeddings before similarity.
    #[arg(long)]
    pub normalize_embeddings: Option<bool>,
    /// Classification term weight of the matching cost.
    #[arg(long)]
    pub lambda_cls: Option<f64>,
    /// L1 box term weight of the matching cost.
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    /// GIoU term weight of the matching cost.
    #[arg(long)]
    pub lambda_giou: Option<f64>,
    /// Focal alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Focal gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
}

/// clap-friendly mirror of the assign mode.
#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum AssignModeArg {
    Greedy,
    Hungarian,
}

impl From<AssignModeArg> for AssignMode {
    fn from(value: AssignModeArg) -> Self {
        match value {
            AssignModeArg::Greedy => AssignMode::Greedy,
            AssignModeArg::Hungarian => AssignMode::Hungarian,
        }
    }
}
