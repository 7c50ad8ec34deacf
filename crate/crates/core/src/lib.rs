//! Bit-exact model of a temporal-carry-deferring MAC (TCD-MAC) and a
//! cycle-level simulator of the NPE built from an array of them.
//!
//! The crate is organized around five subsystems:
//!
//! - [`bitmac`]: the deferring MAC itself, modeled at the bit level
//!   (partial-product columns, hamming-weight compressor tree, deferred
//!   carry buffer), plus a behavioral reference MAC.
//! - [`mapper`]: the minimum-roll scheduler that unrolls multi-batch MLP
//!   layers onto NPE(K, N) array configurations.
//! - [`npesim`]: the engine simulator — PE array, weight/feature memory
//!   layouts with buffered access counting, cast patterns, run-length
//!   coding for transfers, and the layer/model execution loop.
//! - [`ppamodel`]: parameterized timing and energy models that turn the
//!   simulator's counters into reports, including the MAC-level
//!   throughput/energy improvement table.
//! - [`goldref`]: a golden fixed-point MLP forward pass used to verify the
//!   simulator bit-for-bit.

pub mod bitmac;
pub mod goldref;
pub mod mapper;
pub mod npesim;
pub mod ppamodel;

pub use bitmac::{FixedWord, MacMode, MacParams, StreamResult, TcdMac, ACC_WIDTH};
pub use goldref::{MlpModel, WeightMatrix};
pub use mapper::{ArrayShape, LayerProblem, NpeConfig, ScheduleEvent};
pub use npesim::{
    Dataflow, EngineCounters, MemGeometry, MemImage, RunCounters, SimConfig, SimOutput,
};
pub use ppamodel::{EnergyReport, EnginePpa, MacPpa, PpaParams};
