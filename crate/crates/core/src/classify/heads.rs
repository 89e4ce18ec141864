//! Output-layer arithmetic for the three classifier heads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::ModelGeometry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SoftmaxError {
    #[error("softmax of an empty vector")]
    EmptyVector,
    #[error("softmax input contains a non-finite value at index {0}")]
    NonFiniteInput(usize),
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>, SoftmaxError> {
    if scores.is_empty() {
        return Err(SoftmaxError::EmptyVector);
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(SoftmaxError::NonFiniteInput(i));
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HeadKind {
    /// Sentence sentiment: three softmax nodes over the flattened encoder output.
    Sa,
    /// Stance: four softmax nodes over the flattened encoder output.
    Sd,
    /// Aspect tagging: one four-node layer applied to every token vector,
    /// with weights shared across positions.
    Absa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadGeometry {
    pub kind: HeadKind,
    pub input_dim: usize,
    pub output_nodes: usize,
    pub parameter_count: usize,
    pub shared_across_tokens: bool,
}

pub fn head_geometry(kind: HeadKind, geometry: ModelGeometry) -> HeadGeometry {
    let (input_dim, output_nodes, shared) = match kind {
        HeadKind::Sa => (geometry.flattened_dim(), 3, false),
        HeadKind::Sd => (geometry.flattened_dim(), 4, false),
        HeadKind::Absa => (geometry.embed_dim, 4, true),
    };
    HeadGeometry {
        kind,
        input_dim,
        output_nodes,
        // weights plus one bias per node
        parameter_count: output_nodes * (input_dim + 1),
        shared_across_tokens: shared,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub sa: u32,
    pub sd: u32,
    pub absa: u32,
}

/// Fine-tuning settings handed to an external trainer. Nothing in this
/// crate executes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecipe {
    pub optimizer: String,
    pub learning_rate: f64,
    pub epochs: EpochSchedule,
    pub restarts: u32,
    pub selection: String,
    pub geometry: ModelGeometry,
}

impl Default for TrainingRecipe {
    fn default() -> Self {
        TrainingRecipe {
            optimizer: "adam".into(),
            learning_rate: 1e-5,
            epochs: EpochSchedule { sa: 1, sd: 1, absa: 6 },
            restarts: 5,
            selection: "max_validation_categorical_accuracy".into(),
            geometry: ModelGeometry::default(),
        }
    }
}

impl TrainingRecipe {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recipe serializes")
    }
}
