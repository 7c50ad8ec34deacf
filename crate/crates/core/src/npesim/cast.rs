//! Local distribution network cast patterns.
//!
//! For a configuration of K batch slots times N neuron slots, the feature
//! word of one batch is broadcast to the rows assigned to that batch,
//! while every PE receives its own weight word (the slot of the neuron it
//! computes).

use crate::mapper::{ArrayShape, NpeConfig};

use super::NpeError;

/// Per-cycle source assignment realized by the distribution network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CastPattern {
    pub config: NpeConfig,
    pub shape: ArrayShape,
    /// Batch slot feeding each MAC group (array row).
    pub feature_source: Vec<u32>,
    /// Weight word slot consumed by each PE, row-major.
    pub weight_word: Vec<u32>,
}

impl CastPattern {
    /// Weight slot of the PE at (row, col).
    pub fn weight_slot(&self, row: usize, col: usize) -> u32 {
        self.weight_word[row * self.shape.cols as usize + col]
    }
}

/// Build the broadcast/unicast pattern of a legal configuration.
pub fn make_cast_pattern(config: NpeConfig, shape: ArrayShape) -> Result<CastPattern, NpeError> {
    if !config.is_legal(shape) {
        return Err(NpeError::IllegalConfig {
            batches_per_roll: config.batches_per_roll,
            neurons_per_roll: config.neurons_per_roll,
            rows: shape.rows,
            cols: shape.cols,
        });
    }
    let groups_per_batch = shape.rows / config.batches_per_roll;
    let feature_source: Vec<u32> = (0..shape.rows).map(|r| r / groups_per_batch).collect();
    let mut weight_word = Vec::with_capacity(shape.total_pes() as usize);
    for r in 0..shape.rows {
        for c in 0..shape.cols {
            weight_word.push((r % groups_per_batch) * shape.cols + c);
        }
    }
    Ok(CastPattern {
        config,
        shape,
        feature_source,
        weight_word,
    })
}
