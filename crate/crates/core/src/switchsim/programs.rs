//! Staged realizations of the pruning algorithms.
//!
//! Each program mirrors its reference state machine exactly — same hash
//! seeds, same cell semantics, same decisions — but every state access goes
//! through the pipeline's constrained register context, stage by stage.

use std::sync::Arc;

use crate::algorithms::{
    AlgorithmConfig, CompiledFilter, EntryView, HavingConfig, KeyRowMap, Pass, ReplacePolicy,
    RowDraw, ScoreKind, TableSide,
};
use crate::hash::{derive_seed, SeededHash};
use crate::query::Extremum;

use super::logtable::{aph_score, LogTable, MsbTcam};
use super::{ArrayRef, ExecCtx, Pipeline, PipelineError};

fn arity(view: &EntryView, expected: usize) -> Result<(), PipelineError> {
    if view.values.len() != expected {
        return Err(PipelineError::Program(format!(
            "entry carries {} values, program expects {expected}",
            view.values.len()
        )));
    }
    Ok(())
}

#[derive(Debug)]
pub(crate) enum Program {
    /// Placeholder while a program is checked out for execution.
    Tombstone,
    Filter(FilterProg),
    Distinct(DistinctProg),
    TopNDet(TopNDetProg),
    TopNRand(TopNRandProg),
    Skyline(SkylineProg),
    GroupBy(GroupByProg),
    Join(JoinProg),
    HavingMinMax(HavingMinMaxProg),
    HavingSketch(HavingSketchProg),
}

impl Program {
    pub fn build(
        cfg: &AlgorithmConfig,
        first_stage: usize,
        pipe: &mut Pipeline,
    ) -> Result<Program, String> {
        let alus_per_stage = pipe.profile().alus_per_stage as usize;
        Ok(match cfg {
            AlgorithmConfig::Filter(c) => Program::Filter(FilterProg {
                stage: first_stage,
                filter: CompiledFilter::new(c).map_err(|e| e.to_string())?,
            }),
            AlgorithmConfig::Distinct(c) => {
                let mut columns = Vec::with_capacity(c.width);
                match c.policy {
                    ReplacePolicy::Lru => {
                        for i in 0..c.width {
                            columns.push(pipe.alloc_array(first_stage + i, c.rows));
                        }
                        Program::Distinct(DistinctProg {
                            rows: c.rows,
                            width: c.width,
                            row_hash: SeededHash::new(c.row_seed),
                            cursor: None,
                            columns,
                        })
                    }
                    ReplacePolicy::Fifo => {
                        // Cursor plus w columns, packed A arrays per stage.
                        let mut slots =
                            (0..=c.width).map(|i| first_stage + i / alus_per_stage.max(1));
                        let cursor = pipe.alloc_array(slots.next().unwrap(), c.rows);
                        for stage in slots {
                            columns.push(pipe.alloc_array(stage, c.rows));
                        }
                        Program::Distinct(DistinctProg {
                            rows: c.rows,
                            width: c.width,
                            row_hash: SeededHash::new(c.row_seed),
                            cursor: Some(cursor),
                            columns,
                        })
                    }
                }
            }
            AlgorithmConfig::TopNDet(c) => {
                let warmup_min = pipe.alloc_array(first_stage, 1);
                let counters = (0..c.thresholds)
                    .map(|i| pipe.alloc_array(first_stage + 1 + i, 1))
                    .collect();
                Program::TopNDet(TopNDetProg {
                    n: c.n,
                    thresholds: c.thresholds,
                    warmup_min,
                    counters,
                })
            }
            AlgorithmConfig::TopNRand(c) => {
                let columns = (0..c.width)
                    .map(|i| pipe.alloc_array(first_stage + i, c.rows))
                    .collect();
                let seed = match c.draw {
                    RowDraw::Hashed { seed } => seed,
                    RowDraw::Injected(_) => 0,
                };
                Program::TopNRand(TopNRandProg {
                    rows: c.rows,
                    draw: c.draw.clone(),
                    hash: SeededHash::new(seed),
                    drawn: 0,
                    columns,
                })
            }
            AlgorithmConfig::Skyline(c) => {
                let (score_kind, table, tcam, compute_stages) = match c.score {
                    ScoreKind::Sum => {
                        (ScoreKind::Sum, None, None, ceil_log2(c.dims as u32) as usize)
                    }
                    ScoreKind::Aph { beta } => (
                        ScoreKind::Aph { beta },
                        Some(LogTable::shared(beta)),
                        Some(MsbTcam::new()),
                        // msb lookup + table lookup + the adder tree
                        2 + ceil_log2(c.dims as u32) as usize,
                    ),
                };
                let points_base = first_stage + compute_stages;
                let mut scores = Vec::with_capacity(c.width);
                let mut dims = Vec::with_capacity(c.width);
                for i in 0..c.width {
                    scores.push(pipe.alloc_array(points_base + 2 * i, 1));
                    dims.push(
                        (0..c.dims)
                            .map(|_| pipe.alloc_array(points_base + 2 * i + 1, 1))
                            .collect(),
                    );
                }
                Program::Skyline(SkylineProg {
                    dims: c.dims,
                    width: c.width,
                    score: score_kind,
                    table,
                    tcam,
                    first_stage,
                    compute_stages,
                    scores,
                    dim_arrays: dims,
                })
            }
            AlgorithmConfig::GroupBy(c) => {
                let hash_fns = match c.row_map {
                    KeyRowMap::Hashed { seed } => (0..c.hashes)
                        .map(|i| SeededHash::new(derive_seed(seed, "groupby-row", i as u64)))
                        .collect(),
                    KeyRowMap::Fixed(_) => Vec::new(),
                };
                let keys = (0..c.hashes)
                    .map(|i| pipe.alloc_array(first_stage + i, c.rows))
                    .collect();
                // Value cells boot to the aggregation identity, so a fresh
                // cell (key 0) can never beat a real entry.
                let identity = match c.direction {
                    Extremum::Max => 0u64,
                    Extremum::Min => u64::MAX,
                };
                let vals = (0..c.hashes)
                    .map(|i| pipe.alloc_array_init(first_stage + i, c.rows, identity))
                    .collect();
                Program::GroupBy(GroupByProg {
                    rows: c.rows,
                    hashes: c.hashes,
                    direction: c.direction,
                    row_map: c.row_map.clone(),
                    hash_fns,
                    keys,
                    vals,
                })
            }
            AlgorithmConfig::Join(c) => {
                let per_side = (c.total_bits / 2).max(1);
                let bits_per_array = (per_side / c.hash_count as u64).max(1);
                let words = bits_per_array.div_ceil(64) as usize;
                let left = (0..c.hash_count)
                    .map(|_| pipe.alloc_array(first_stage, words))
                    .collect();
                let right = (0..c.hash_count)
                    .map(|_| pipe.alloc_array(first_stage + 1, words))
                    .collect();
                let left_hashes = (0..c.hash_count)
                    .map(|i| SeededHash::new(derive_seed(c.seed, "bloom", i as u64)))
                    .collect();
                let right_hashes = (0..c.hash_count)
                    .map(|i| SeededHash::new(derive_seed(c.seed ^ 0x5a5a, "bloom", i as u64)))
                    .collect();
                Program::Join(JoinProg {
                    bits_per_array,
                    asymmetric: c.asymmetric,
                    left,
                    right,
                    left_hashes,
                    right_hashes,
                    pass_one_done: false,
                })
            }
            AlgorithmConfig::Having(HavingConfig::MinMax {
                op,
                threshold,
                cache,
            }) => {
                let columns = (0..cache.width)
                    .map(|i| pipe.alloc_array(first_stage + i, cache.rows))
                    .collect();
                Program::HavingMinMax(HavingMinMaxProg {
                    op: *op,
                    threshold: *threshold,
                    rows: cache.rows,
                    width: cache.width,
                    row_hash: SeededHash::new(cache.row_seed),
                    columns,
                    first_stage,
                })
            }
            AlgorithmConfig::Having(HavingConfig::Sketch {
                mode,
                threshold,
                rows,
                width,
                seed,
            }) => {
                let row_arrays = (0..*rows)
                    .map(|i| pipe.alloc_array(first_stage + i / alus_per_stage.max(1), *width))
                    .collect();
                let hashes = (0..*rows)
                    .map(|i| SeededHash::new(derive_seed(*seed, "count-min", i as u64)))
                    .collect();
                Program::HavingSketch(HavingSketchProg {
                    mode: *mode,
                    threshold: *threshold,
                    width: *width,
                    row_arrays,
                    hashes,
                    pass_one_done: false,
                    first_stage,
                })
            }
        })
    }

    pub fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        match self {
            Program::Tombstone => unreachable!("tombstone program executed"),
            Program::Filter(p) => p.execute(ctx, view),
            Program::Distinct(p) => p.execute(ctx, view),
            Program::TopNDet(p) => p.execute(ctx, view),
            Program::TopNRand(p) => p.execute(ctx, view),
            Program::Skyline(p) => p.execute(ctx, view),
            Program::GroupBy(p) => p.execute(ctx, view),
            Program::Join(p) => p.execute(ctx, view),
            Program::HavingMinMax(p) => p.execute(ctx, view),
            Program::HavingSketch(p) => p.execute(ctx, view),
        }
    }

    pub fn finish_pass(&mut self, pass: Pass) {
        match self {
            Program::Join(p) => {
                if pass == Pass::One {
                    p.pass_one_done = true;
                }
            }
            Program::HavingSketch(p) => {
                if pass == Pass::One {
                    p.pass_one_done = true;
                }
            }
            _ => {}
        }
    }
}

fn ceil_log2(x: u32) -> u32 {
    debug_assert!(x >= 1);
    32 - (x - 1).leading_zeros()
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct FilterProg {
    stage: usize,
    filter: CompiledFilter,
}

impl FilterProg {
    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, self.filter.wire_arity())?;
        ctx.alu(self.stage, self.filter.atoms.len().max(1) as u32)?;
        let mut bits = 0usize;
        for (i, atom) in self.filter.atoms.iter().enumerate() {
            if atom.op.eval(view.values[atom.slot], atom.constant) {
                bits |= 1 << i;
            }
        }
        Ok(!self.filter.truth_table[bits])
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct DistinctProg {
    rows: usize,
    width: usize,
    row_hash: SeededHash,
    /// Per-row rotating cursor (FIFO policy only).
    cursor: Option<ArrayRef>,
    columns: Vec<ArrayRef>,
}

impl DistinctProg {
    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 1)?;
        let fp = view.values[0];
        let r = self.row_hash.row(fp, self.rows);
        match self.cursor {
            None => {
                // LRU: rolling shift, stopping at (and overwriting) a match.
                let mut carry = fp;
                for i in 0..self.width {
                    let old = ctx.rmw(self.columns[i], r, |_| carry)?;
                    if old == fp {
                        return Ok(true);
                    }
                    carry = old;
                }
                Ok(false)
            }
            Some(cursor) => {
                let at = ctx.rmw(cursor, r, |old| (old + 1) % self.width as u64)? as usize
                    % self.width;
                let mut hit = false;
                for (j, &col) in self.columns.iter().enumerate() {
                    let old = ctx.rmw(col, r, |old| if j == at { fp } else { old })?;
                    if old == fp {
                        hit = true;
                    }
                }
                Ok(hit)
            }
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct TopNDetProg {
    n: u64,
    thresholds: usize,
    /// Warm-up minimum, stored biased by one so 0 means "unset".
    warmup_min: ArrayRef,
    counters: Vec<ArrayRef>,
}

impl TopNDetProg {
    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 1)?;
        let v = view.values[0];
        let n = self.n;
        let warmup = (view.seq as u64) <= n;
        let biased = ctx.rmw(self.warmup_min, 0, |old| {
            if warmup {
                if old == 0 {
                    v.saturating_add(1)
                } else {
                    old.min(v.saturating_add(1))
                }
            } else {
                old
            }
        })?;
        if warmup {
            return Ok(false);
        }
        let t0 = biased.saturating_sub(1);
        let threshold = |i: usize| -> u64 {
            if i == 0 {
                t0
            } else if t0 >= 1 {
                t0.checked_shl(i as u32).unwrap_or(u64::MAX)
            } else {
                1u64 << (i - 1)
            }
        };
        let mut active = 0usize;
        let mut chain_alive = true;
        for i in 1..=self.thresholds {
            let above = v >= threshold(i);
            let count = ctx.rmw(self.counters[i - 1], 0, |old| old + u64::from(above))?
                + u64::from(above);
            if chain_alive && count >= n {
                active = i;
            } else {
                chain_alive = false;
            }
        }
        Ok(v < threshold(active))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct TopNRandProg {
    rows: usize,
    draw: RowDraw,
    hash: SeededHash,
    drawn: usize,
    columns: Vec<ArrayRef>,
}

impl TopNRandProg {
    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 1)?;
        let v = view.values[0];
        let i = self.drawn;
        self.drawn += 1;
        let row = match &self.draw {
            RowDraw::Hashed { .. } => self
                .hash
                .row(((view.flow as u64) << 32) | view.seq as u64, self.rows),
            RowDraw::Injected(rows) => rows[i % rows.len()] as usize,
        };
        let mut carry = v;
        let mut prune = true;
        for &col in &self.columns {
            let old = ctx.rmw(col, row, |old| old.max(carry))?;
            if carry > old {
                carry = old;
                prune = false;
            } else {
                prune = prune && old > carry;
            }
        }
        Ok(prune)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct SkylineProg {
    dims: usize,
    width: usize,
    score: ScoreKind,
    table: Option<Arc<LogTable>>,
    tcam: Option<MsbTcam>,
    first_stage: usize,
    compute_stages: usize,
    scores: Vec<ArrayRef>,
    dim_arrays: Vec<Vec<ArrayRef>>,
}

impl SkylineProg {
    fn score_of(&self, dims: &[u64]) -> u64 {
        match self.score {
            ScoreKind::Sum => dims.iter().fold(0u64, |a, &d| a.saturating_add(d)),
            ScoreKind::Aph { .. } => aph_score(
                dims,
                self.table.as_ref().expect("aph table"),
                self.tcam.as_ref().expect("aph tcam"),
            ),
        }
    }

    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, self.dims)?;
        // Score computation occupies the leading compute stages.
        for s in 0..self.compute_stages {
            ctx.alu(self.first_stage + s, 1)?;
        }
        let original = view.values;
        let mut cur_score = self.score_of(original);
        let mut cur_point = original.to_vec();
        let mut prune = false;
        for i in 0..self.width {
            let old_score = ctx.rmw(self.scores[i], 0, |old| old.max(cur_score))?;
            if cur_score > old_score {
                for (j, &arr) in self.dim_arrays[i].iter().enumerate() {
                    let incoming = cur_point[j];
                    let old_dim = ctx.rmw(arr, 0, |_| incoming)?;
                    cur_point[j] = old_dim;
                }
                cur_score = old_score;
            } else {
                let mut all_le = true;
                let mut any_diff = false;
                for (j, &arr) in self.dim_arrays[i].iter().enumerate() {
                    let stored = ctx.rmw(arr, 0, |old| old)?;
                    all_le &= original[j] <= stored;
                    any_diff |= original[j] != stored;
                }
                if all_le && any_diff {
                    prune = true;
                }
            }
        }
        Ok(prune)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct GroupByProg {
    rows: usize,
    hashes: usize,
    direction: Extremum,
    row_map: KeyRowMap,
    hash_fns: Vec<SeededHash>,
    keys: Vec<ArrayRef>,
    vals: Vec<ArrayRef>,
}

impl GroupByProg {
    fn row(&self, i: usize, key: u64) -> usize {
        match &self.row_map {
            KeyRowMap::Hashed { .. } => self.hash_fns[i].row(key, self.rows),
            KeyRowMap::Fixed(maps) => maps[i].get(&key).copied().unwrap_or(0),
        }
    }

    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 2)?;
        let (key, value) = (view.values[0], view.values[1]);
        let better = |stored: u64, v: u64| match self.direction {
            Extremum::Max => stored > v,
            Extremum::Min => stored < v,
        };
        let mut best = value;
        let mut prune = false;
        for i in 0..self.hashes {
            let idx = self.row(i, key);
            let old_key = ctx.rmw(self.keys[i], idx, |_| key)?;
            let matched = old_key == key;
            let write = best;
            let old_val = ctx.rmw(self.vals[i], idx, |old| {
                if matched {
                    if better(old, write) {
                        old
                    } else {
                        write
                    }
                } else {
                    write
                }
            })?;
            if matched {
                if better(old_val, value) {
                    prune = true;
                }
                if better(old_val, best) {
                    best = old_val;
                }
            }
        }
        Ok(prune)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct JoinProg {
    bits_per_array: u64,
    asymmetric: bool,
    left: Vec<ArrayRef>,
    right: Vec<ArrayRef>,
    left_hashes: Vec<SeededHash>,
    right_hashes: Vec<SeededHash>,
    pass_one_done: bool,
}

impl JoinProg {
    fn bit_of(&self, hashes: &[SeededHash], i: usize, key: u64) -> (usize, u64) {
        let bit = hashes[i].hash(key) % self.bits_per_array;
        ((bit / 64) as usize, 1u64 << (bit % 64))
    }

    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 1)?;
        let key = view.values[0];
        match (view.pass, view.side) {
            (Pass::One, TableSide::Left) => {
                for i in 0..self.left.len() {
                    let (word, mask) = self.bit_of(&self.left_hashes, i, key);
                    ctx.rmw(self.left[i], word, |old| old | mask)?;
                }
                // Absorbed unless the asymmetric small side streams through.
                Ok(!self.asymmetric)
            }
            (Pass::One, TableSide::Right) => {
                if self.asymmetric {
                    return Err(PipelineError::Program(
                        "asymmetric join streams only the left table in pass 1".into(),
                    ));
                }
                for i in 0..self.right.len() {
                    let (word, mask) = self.bit_of(&self.right_hashes, i, key);
                    ctx.rmw(self.right[i], word, |old| old | mask)?;
                }
                Ok(true)
            }
            (Pass::Two, side) => {
                if !self.pass_one_done {
                    return Err(PipelineError::Program(
                        "pass-2 entry arrived before the pass-1 completion barrier".into(),
                    ));
                }
                if self.asymmetric && side == TableSide::Left {
                    return Err(PipelineError::Program(
                        "asymmetric join pass 2 streams only the right table".into(),
                    ));
                }
                let (arrays, hashes) = match side {
                    TableSide::Left => (&self.right, &self.right_hashes),
                    TableSide::Right => (&self.left, &self.left_hashes),
                };
                let mut matched = true;
                for i in 0..arrays.len() {
                    let (word, mask) = self.bit_of(hashes, i, key);
                    let old = ctx.rmw(arrays[i], word, |old| old)?;
                    matched &= old & mask != 0;
                }
                Ok(!matched)
            }
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct HavingMinMaxProg {
    op: crate::algorithms::having::MinMaxOp,
    threshold: u64,
    rows: usize,
    width: usize,
    row_hash: SeededHash,
    columns: Vec<ArrayRef>,
    first_stage: usize,
}

impl HavingMinMaxProg {
    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 2)?;
        let (key, value) = (view.values[0], view.values[1]);
        ctx.alu(self.first_stage, 1)?; // the per-entry predicate
        if !self.op.qualifies(value, self.threshold) {
            return Ok(true);
        }
        let r = self.row_hash.row(key, self.rows);
        let mut carry = key;
        for i in 0..self.width {
            let old = ctx.rmw(self.columns[i], r, |_| carry)?;
            if old == key {
                return Ok(true);
            }
            carry = old;
        }
        Ok(false)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct HavingSketchProg {
    mode: crate::algorithms::having::SketchMode,
    threshold: u64,
    width: usize,
    row_arrays: Vec<ArrayRef>,
    hashes: Vec<SeededHash>,
    pass_one_done: bool,
    first_stage: usize,
}

impl HavingSketchProg {
    fn execute(&mut self, ctx: &mut ExecCtx, view: &EntryView) -> Result<bool, PipelineError> {
        arity(view, 2)?;
        let (key, value) = (view.values[0], view.values[1]);
        match view.pass {
            Pass::One => {
                let delta = match self.mode {
                    crate::algorithms::having::SketchMode::Sum => value,
                    crate::algorithms::having::SketchMode::Count => 1,
                };
                let mut estimate = u64::MAX;
                for i in 0..self.row_arrays.len() {
                    let idx = self.hashes[i].row(key, self.width);
                    let old =
                        ctx.rmw(self.row_arrays[i], idx, |old| old.saturating_add(delta))?;
                    estimate = estimate.min(old.saturating_add(delta));
                }
                Ok(estimate <= self.threshold)
            }
            Pass::Two => {
                if !self.pass_one_done {
                    return Err(PipelineError::Program(
                        "pass-2 entry arrived before the pass-1 completion barrier".into(),
                    ));
                }
                ctx.alu(self.first_stage, 1)?;
                Ok(false)
            }
        }
    }
}
