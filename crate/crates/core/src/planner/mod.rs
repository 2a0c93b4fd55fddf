//! Configuration math, probabilistic bounds, resource estimation, and
//! multi-query packing.
//!
//! Everything here is a pure function of its arguments; outputs serialize
//! to JSON for the CLI and the pipeline builder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod distinct;
mod pack;
mod resources;
mod topn;

pub use distinct::{
    distinct_expected_prune_fraction, distinct_max_load, fingerprint_bits, DistinctBounds,
};
pub use pack::{pack_queries, Placement, QueryPlacement};
pub use resources::{estimate_resources, AlgorithmShape};
pub use topn::{
    lambert_w, topn_closed_form_rows, topn_expected_unpruned, topn_optimize, topn_width,
    TopNConfig,
};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("configuration error: {0}")]
    Invalid(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
}

/// Hardware demand of one algorithm instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceFootprint {
    pub stages: u32,
    pub alus: u32,
    pub sram_bits: u64,
    pub tcam_entries: u32,
}

/// Capacities of the target pipeline. One register array sustains a single
/// read-modify-write per packet; that rule is enforced by the simulator,
/// not counted here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchProfile {
    pub stages: u32,
    pub alus_per_stage: u32,
    pub sram_bits_per_stage: u64,
    pub tcam_entries: u32,
}

impl SwitchProfile {
    /// A roomy default profile for experiments: mid-range stage and ALU
    /// counts with generous per-stage SRAM.
    pub fn desk_default() -> SwitchProfile {
        SwitchProfile {
            stages: 20,
            alus_per_stage: 16,
            sram_bits_per_stage: 64 << 20,
            tcam_entries: 4096,
        }
    }
}
