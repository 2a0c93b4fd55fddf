//! The pruning algorithms.
//!
//! Each algorithm is a small state machine: configure it, feed it entry
//! views in stream order, get a [`Decision`] per entry. Two-pass protocols
//! (join, HAVING with SUM/COUNT) additionally take a pass barrier via
//! [`Pruner::finish_pass`].
//!
//! Every state transition here is deliberately expressible in the staged
//! register model that `switchsim` enforces (one read-modify-write per
//! register array per packet, decisions latched at pipeline end), and the
//! pipeline realizations are required to match these reference
//! implementations packet for packet.

use thiserror::Error;

pub mod distinct;
pub mod filter;
pub mod groupby;
pub mod having;
pub mod join;
pub mod skyline;
pub mod topn;

pub use distinct::{DistinctConfig, MatrixCache, ReplacePolicy};
pub use filter::{filter_decompose, CompiledFilter, FilterConfig};
pub use groupby::{GroupByConfig, GroupByMatrix, KeyRowMap};
pub use having::{CountMin, HavingConfig, HavingState, MinMaxOp, SketchMode};
pub use join::{BloomFilter, JoinConfig, JoinFilters};
pub use skyline::{ScoreKind, SkylineConfig, SkylineStore};
pub use topn::{RowDraw, TopNDetConfig, TopNDetState, TopNRandConfig, TopNRandMatrix};

/// Per-entry verdict of a pruning algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Forward,
    Prune,
}

/// Which side of a two-table query an entry belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableSide {
    Left,
    Right,
}

/// Pass number for two-pass protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    One,
    Two,
}

/// The switch-visible view of one entry: the projected (and, where needed,
/// fingerprinted) column values plus flow context.
#[derive(Debug, Clone, Copy)]
pub struct EntryView<'a> {
    /// Flow the entry arrived on.
    pub flow: u16,
    /// Entry id within the flow (doubles as the packet sequence number).
    pub seq: u32,
    /// Projected values, in the query's wire order.
    pub values: &'a [u64],
    pub side: TableSide,
    pub pass: Pass,
}

impl<'a> EntryView<'a> {
    /// Single-table, single-pass view.
    pub fn simple(flow: u16, seq: u32, values: &'a [u64]) -> Self {
        EntryView {
            flow,
            seq,
            values,
            side: TableSide::Left,
            pass: Pass::One,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AlgoError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("entry carries {found} values, algorithm expects {expected}")]
    WrongArity { expected: usize, found: usize },
    #[error("pass protocol violation: {0}")]
    PassProtocol(String),
}

/// Configuration for any of the pruning algorithms. The same config drives
/// both the reference state machines here and the staged pipelines in
/// `switchsim`, so the two stay decision-equivalent.
#[derive(Debug, Clone)]
pub enum AlgorithmConfig {
    Filter(FilterConfig),
    Distinct(DistinctConfig),
    TopNDet(TopNDetConfig),
    TopNRand(TopNRandConfig),
    Skyline(SkylineConfig),
    GroupBy(GroupByConfig),
    Join(JoinConfig),
    Having(HavingConfig),
}

/// A configured pruning state machine.
#[derive(Debug, Clone)]
pub enum Pruner {
    Filter(CompiledFilter),
    Distinct(MatrixCache),
    TopNDet(TopNDetState),
    TopNRand(TopNRandMatrix),
    Skyline(SkylineStore),
    GroupBy(GroupByMatrix),
    Join(JoinFilters),
    Having(HavingState),
}

impl Pruner {
    pub fn from_config(cfg: &AlgorithmConfig) -> Result<Pruner, AlgoError> {
        Ok(match cfg {
            AlgorithmConfig::Filter(c) => Pruner::Filter(CompiledFilter::new(c)?),
            AlgorithmConfig::Distinct(c) => Pruner::Distinct(MatrixCache::new(c)?),
            AlgorithmConfig::TopNDet(c) => Pruner::TopNDet(TopNDetState::new(c)?),
            AlgorithmConfig::TopNRand(c) => Pruner::TopNRand(TopNRandMatrix::new(c)?),
            AlgorithmConfig::Skyline(c) => Pruner::Skyline(SkylineStore::new(c)?),
            AlgorithmConfig::GroupBy(c) => Pruner::GroupBy(GroupByMatrix::new(c)?),
            AlgorithmConfig::Join(c) => Pruner::Join(JoinFilters::new(c)?),
            AlgorithmConfig::Having(c) => Pruner::Having(HavingState::new(c)?),
        })
    }

    /// Process one entry in stream order.
    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        match self {
            Pruner::Filter(s) => s.process(view),
            Pruner::Distinct(s) => s.process(view),
            Pruner::TopNDet(s) => s.process(view),
            Pruner::TopNRand(s) => s.process(view),
            Pruner::Skyline(s) => s.process(view),
            Pruner::GroupBy(s) => s.process(view),
            Pruner::Join(s) => s.process(view),
            Pruner::Having(s) => s.process(view),
        }
    }

    /// Barrier notification for two-pass protocols; a no-op for single-pass
    /// algorithms.
    pub fn finish_pass(&mut self, pass: Pass) {
        match self {
            Pruner::Join(s) => s.finish_pass(pass),
            Pruner::Having(s) => s.finish_pass(pass),
            _ => {}
        }
    }
}

pub(crate) fn expect_arity(view: &EntryView, expected: usize) -> Result<(), AlgoError> {
    if view.values.len() != expected {
        Err(AlgoError::WrongArity {
            expected,
            found: view.values.len(),
        })
    } else {
        Ok(())
    }
}
