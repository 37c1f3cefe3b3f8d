//! Self-critical policy learning with teacher and metric rewards.

mod objective;
mod reward;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use objective::{advantages, mixed_loss, model_selection_score, self_critical_loss};
pub use reward::{
    assign_credit, reward_absolute, reward_relative, segment_generation, RewardModel, RewardTrace,
    Segmentation,
};
pub use train::{evaluate_dev, train_policy, BatchLog, DevSummary, PolicyConfig, PolicyTraining};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    #[serde(rename = "ao")]
    Ao,
    #[serde(rename = "ro")]
    Ro,
    #[serde(rename = "ro+b4")]
    RoB4,
    #[serde(rename = "bleu1")]
    Bleu1,
    #[serde(rename = "bleu4")]
    Bleu4,
    #[serde(rename = "rouge-l")]
    RougeL,
}

impl RewardKind {
    pub const ALL: [RewardKind; 6] = [
        RewardKind::Ao,
        RewardKind::Ro,
        RewardKind::RoB4,
        RewardKind::Bleu1,
        RewardKind::Bleu4,
        RewardKind::RougeL,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Ao => "ao",
            RewardKind::Ro => "ro",
            RewardKind::RoB4 => "ro+b4",
            RewardKind::Bleu1 => "bleu1",
            RewardKind::Bleu4 => "bleu4",
            RewardKind::RougeL => "rouge-l",
        }
    }

    pub fn uses_relative(self) -> bool {
        matches!(self, RewardKind::Ro | RewardKind::RoB4)
    }

    pub fn uses_teacher(self) -> bool {
        matches!(self, RewardKind::Ao | RewardKind::Ro | RewardKind::RoB4)
    }
}

impl std::fmt::Display for RewardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .collect();
        match norm.as_str() {
            "ao" | "absolute" => Ok(RewardKind::Ao),
            "ro" | "relative" => Ok(RewardKind::Ro),
            "ro+b4" | "rob4" => Ok(RewardKind::RoB4),
            "bleu1" => Ok(RewardKind::Bleu1),
            "bleu4" => Ok(RewardKind::Bleu4),
            "rougel" | "rl" => Ok(RewardKind::RougeL),
            _ => Err(Error::invalid(format!("unknown reward kind {s:?}"))),
        }
    }
}
