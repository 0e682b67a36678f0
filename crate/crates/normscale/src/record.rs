//! Logit records: one sample's raw final-layer activations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Train,
    InTest,
    OodTest,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Train => "train",
            Origin::InTest => "in_test",
            Origin::OodTest => "ood_test",
        }
    }
}

/// One sample's raw logit vector, with an optional ground-truth label.
///
/// Logits are stored at `f32` precision to match the on-disk formats;
/// all downstream arithmetic runs in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitRecord {
    logits: Vec<f32>,
    label: Option<usize>,
    origin: Origin,
}

impl LogitRecord {
    /// Build a record, rejecting non-finite logits and out-of-range labels.
    pub fn new(logits: Vec<f32>, label: Option<usize>, origin: Origin) -> Result<Self> {
        if let Some(pos) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("logit column {pos}"),
            });
        }
        if let Some(l) = label {
            if l >= logits.len() {
                return Err(Error::Label {
                    label: l as i64,
                    num_classes: logits.len(),
                });
            }
        }
        Ok(Self {
            logits,
            label,
            origin,
        })
    }

    pub fn logits(&self) -> &[f32] {
        &self.logits
    }

    /// Logits widened to `f64` for computation.
    pub fn logits_f64(&self) -> Vec<f64> {
        self.logits.iter().map(|&v| v as f64).collect()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.logits.len()
    }

    /// Same record tagged with a different origin.
    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}
