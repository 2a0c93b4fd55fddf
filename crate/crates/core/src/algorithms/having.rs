//! HAVING pruning.
//!
//! MIN(x) < c and MAX(x) > c are single-pass: an entry's own value decides
//! whether its key qualifies, and a matrix cache dedups qualifying keys.
//! SUM and COUNT (direction '>' only) are two-pass: a Count-Min sketch
//! announces candidate keys whose running estimate crosses the threshold;
//! the master then requests exact re-aggregation of just those keys.

use crate::hash::SeededHash;

use super::{
    distinct::{DistinctConfig, MatrixCache},
    expect_arity, AlgoError, Decision, EntryView, Pass,
};

/// Count-Min sketch: `rows` counter arrays of `width` 64-bit counters.
/// Estimates never undershoot the true aggregate, so pruning on
/// `estimate <= c` is one-sided safe.
#[derive(Debug, Clone)]
pub struct CountMin {
    rows: usize,
    width: usize,
    hashes: Vec<SeededHash>,
    counters: Vec<u64>,
}

impl CountMin {
    pub fn new(rows: usize, width: usize, seed: u64) -> Result<CountMin, AlgoError> {
        if rows == 0 || width == 0 {
            return Err(AlgoError::InvalidConfig(
                "count-min needs rows >= 1 and width >= 1".into(),
            ));
        }
        Ok(CountMin {
            rows,
            width,
            hashes: (0..rows)
                .map(|i| SeededHash::new(crate::hash::derive_seed(seed, "count-min", i as u64)))
                .collect(),
            counters: vec![0; rows * width],
        })
    }

    /// Add `delta` under `key` and return the updated estimate (the minimum
    /// over the rows).
    pub fn update(&mut self, key: u64, delta: u64) -> u64 {
        let mut estimate = u64::MAX;
        for i in 0..self.rows {
            let idx = i * self.width + self.hashes[i].row(key, self.width);
            self.counters[idx] = self.counters[idx].saturating_add(delta);
            estimate = estimate.min(self.counters[idx]);
        }
        estimate
    }

    pub fn estimate(&self, key: u64) -> u64 {
        (0..self.rows)
            .map(|i| self.counters[i * self.width + self.hashes[i].row(key, self.width)])
            .min()
            .unwrap_or(0)
    }
}

/// Which aggregate the sketch accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchMode {
    Sum,
    Count,
}

/// Single-entry predicate for the MIN/MAX forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinMaxOp {
    /// `MIN(x) < c`: an entry below c proves its key qualifies.
    MinLt,
    /// `MAX(x) > c`: an entry above c proves its key qualifies.
    MaxGt,
}

impl MinMaxOp {
    pub fn qualifies(&self, value: u64, threshold: u64) -> bool {
        match self {
            MinMaxOp::MinLt => value < threshold,
            MinMaxOp::MaxGt => value > threshold,
        }
    }
}

#[derive(Debug, Clone)]
pub enum HavingConfig {
    MinMax {
        op: MinMaxOp,
        threshold: u64,
        cache: DistinctConfig,
    },
    Sketch {
        mode: SketchMode,
        threshold: u64,
        /// Count-Min rows (d) and counters per row (w).
        rows: usize,
        width: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub enum HavingState {
    MinMax {
        op: MinMaxOp,
        threshold: u64,
        cache: MatrixCache,
    },
    Sketch {
        mode: SketchMode,
        threshold: u64,
        sketch: CountMin,
        pass_one_done: bool,
    },
}

impl HavingState {
    pub fn new(cfg: &HavingConfig) -> Result<HavingState, AlgoError> {
        Ok(match cfg {
            HavingConfig::MinMax {
                op,
                threshold,
                cache,
            } => HavingState::MinMax {
                op: *op,
                threshold: *threshold,
                cache: MatrixCache::new(cache)?,
            },
            HavingConfig::Sketch {
                mode,
                threshold,
                rows,
                width,
                seed,
            } => HavingState::Sketch {
                mode: *mode,
                threshold: *threshold,
                sketch: CountMin::new(*rows, *width, *seed)?,
                pass_one_done: false,
            },
        })
    }

    pub fn finish_pass(&mut self, pass: Pass) {
        if let HavingState::Sketch { pass_one_done, .. } = self {
            if pass == Pass::One {
                *pass_one_done = true;
            }
        }
    }

    /// Entry view: `[key, value]`. COUNT ignores the value slot.
    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        expect_arity(view, 2)?;
        let (key, value) = (view.values[0], view.values[1]);
        match self {
            HavingState::MinMax {
                op,
                threshold,
                cache,
            } => {
                if !op.qualifies(value, *threshold) {
                    return Ok(Decision::Prune);
                }
                // First qualifying occurrence of the key forwards; repeats
                // are duplicates the master does not need.
                Ok(cache.process_key(key))
            }
            HavingState::Sketch {
                mode,
                threshold,
                sketch,
                pass_one_done,
            } => match view.pass {
                Pass::One => {
                    let delta = match mode {
                        SketchMode::Sum => value,
                        SketchMode::Count => 1,
                    };
                    let estimate = sketch.update(key, delta);
                    // Candidate announcement: the key's estimate crossed c.
                    if estimate > *threshold {
                        Ok(Decision::Forward)
                    } else {
                        Ok(Decision::Prune)
                    }
                }
                Pass::Two => {
                    if !*pass_one_done {
                        return Err(AlgoError::PassProtocol(
                            "pass-2 entry arrived before the pass-1 completion barrier".into(),
                        ));
                    }
                    // Workers re-stream only master-requested keys; the
                    // switch passes them through for exact aggregation.
                    Ok(Decision::Forward)
                }
            },
        }
    }
}
