//! Cycle-level simulator of the deferring-MAC NPE: PE array, controller
//! executing mapper schedules, weight/feature memory models with buffered
//! access counting, cast patterns, and transfer coding.

mod cast;
mod engine;
pub mod format;
mod mem;
pub mod rlc;

pub use cast::{make_cast_pattern, CastPattern};
pub use engine::{
    run_layer, run_model, EngineCounters, LayerCounters, LayerRunResult, RunCounters, SimConfig,
    SimOutput,
};
pub use mem::{
    layout_features, layout_weights, read_feature, read_weight, weight_block_rows, MemGeometry,
    MemImage, MemStats,
};

use thiserror::Error;

use crate::bitmac::{sign_extend, FixedWord, ACC_WIDTH};

/// Default fraction bits of the run-wide fixed-point convention (Q8.8).
pub const DEFAULT_FRACTION_BITS: u32 = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NpeError {
    #[error("weight block needs {needed_rows} rows, weight memory has {available_rows}")]
    WeightCapacity {
        needed_rows: usize,
        available_rows: usize,
    },
    #[error(
        "feature memory cannot hold {batches} batches of {features} features \
         ({needed_rows} rows needed, {available_rows} available); the design \
         assumes one buffer holds the features of at least one full layer"
    )]
    FeatureCapacity {
        batches: usize,
        features: usize,
        needed_rows: usize,
        available_rows: usize,
    },
    #[error("configuration {batches_per_roll}x{neurons_per_roll} is illegal for a {rows}x{cols} array")]
    IllegalConfig {
        batches_per_roll: u32,
        neurons_per_roll: u32,
        rows: u32,
        cols: u32,
    },
    #[error("roll width {neurons_per_roll} exceeds the {row_words}-word weight memory row")]
    RollTooWide {
        neurons_per_roll: u32,
        row_words: usize,
    },
    #[error("schedule does not match the layer problem: {0}")]
    ScheduleMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed run-length stream: {0}")]
    Rlc(String),
    #[error("bad file magic: expected {expected:?}")]
    BadMagic { expected: [u8; 4] },
    #[error("unsupported file version {0}")]
    BadVersion(u32),
    #[error("file truncated")]
    Truncated,
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for NpeError {
    fn from(e: std::io::Error) -> Self {
        NpeError::Io(e.to_string())
    }
}

/// Engine data flows. The two output-stationary flows are simulated; the
/// no-local-reuse flavors are analytical timing models layered on the
/// output-stationary functional path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dataflow {
    /// Output stationary with deferring MACs (one extra cycle per roll).
    OsTcd,
    /// Output stationary with conventional MACs.
    OsConv,
    /// No local reuse: partial sums written back every cycle.
    Nlr,
    /// Unrolled multiply/add tree mapped onto the PEs.
    Rna,
}

impl Dataflow {
    pub const ALL: [Dataflow; 4] = [Dataflow::OsTcd, Dataflow::OsConv, Dataflow::Nlr, Dataflow::Rna];

    pub fn name(&self) -> &'static str {
        match self {
            Dataflow::OsTcd => "os-tcd",
            Dataflow::OsConv => "os-conv",
            Dataflow::Nlr => "nlr",
            Dataflow::Rna => "rna",
        }
    }

    /// True when the functional path runs deferring MACs bit-level.
    pub fn uses_deferring_macs(&self) -> bool {
        matches!(self, Dataflow::OsTcd)
    }
}

impl std::str::FromStr for Dataflow {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "os-tcd" | "ostcd" => Ok(Dataflow::OsTcd),
            "os-conv" | "osconv" => Ok(Dataflow::OsConv),
            "nlr" => Ok(Dataflow::Nlr),
            "rna" => Ok(Dataflow::Rna),
            other => Err(format!("unknown dataflow {other:?}")),
        }
    }
}

/// Activation path applied to every raw neuron value on its way back to
/// feature memory: ReLU, then arithmetic right shift by the fraction
/// alignment, then saturation into the non-negative signed 16-bit range.
pub fn quantize_relu(acc: u64, fraction_bits: u32) -> FixedWord {
    let signed = sign_extend(acc, ACC_WIDTH);
    if signed <= 0 {
        return FixedWord::new(0);
    }
    let shifted = signed >> fraction_bits;
    FixedWord::new(shifted.min(i16::MAX as i64) as i16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitmac::MacParams;

    fn embed(v: i64) -> u64 {
        (v as u64) & MacParams::default().mask()
    }

    #[test]
    fn quantize_relu_clamps_negative() {
        assert_eq!(quantize_relu(embed(-1), 8).raw(), 0);
        assert_eq!(quantize_relu(embed(-(1 << 30)), 8).raw(), 0);
    }

    #[test]
    fn quantize_relu_zero() {
        assert_eq!(quantize_relu(0, 8).raw(), 0);
    }

    #[test]
    fn quantize_relu_saturates() {
        assert_eq!(quantize_relu(embed(1 << 30), 8).raw(), i16::MAX);
        // Largest value that still fits exactly.
        assert_eq!(quantize_relu(embed(32767 << 8), 8).raw(), 32767);
        assert_eq!(quantize_relu(embed((32767 << 8) + 256), 8).raw(), 32767);
    }

    #[test]
    fn quantize_relu_shifts() {
        assert_eq!(quantize_relu(embed(5 << 8), 8).raw(), 5);
        assert_eq!(quantize_relu(embed(0x1ff), 8).raw(), 1); // truncation
        assert_eq!(quantize_relu(embed(7), 0).raw(), 7);
    }

    #[test]
    fn dataflow_parsing() {
        assert_eq!("os-tcd".parse::<Dataflow>().unwrap(), Dataflow::OsTcd);
        assert_eq!("NLR".parse::<Dataflow>().unwrap(), Dataflow::Nlr);
        assert!("weird".parse::<Dataflow>().is_err());
    }
}
