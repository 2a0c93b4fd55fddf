//! TOP N pruning: the deterministic threshold ladder and the randomized
//! d×w rolling-minimum matrix.

use crate::hash::SeededHash;

use super::{expect_arity, AlgoError, Decision, EntryView};

// ---------------------------------------------------------------------------
// Deterministic thresholds
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TopNDetConfig {
    pub n: u64,
    /// Number of ladder thresholds above t0 (one counter per threshold).
    pub thresholds: usize,
}

/// Threshold-ladder state.
///
/// The first N entries of the flow (by sequence number — the transport
/// guarantees in-order, exactly-once processing) are a warmup that forwards
/// everything and records their minimum t0. Afterwards every entry below
/// the active threshold is pruned; thresholds double (`t_i = 2^i * t0`) and
/// the ladder climbs to `t_{i+1}` once N entries at least that large have
/// been counted.
///
/// The warm-up minimum lives in a register cell biased by one (0 means
/// "unset"), exactly as the staged pipeline stores it. A zero t0 would
/// collapse the power-of-two ladder, so pruning then stays off until N
/// entries of at least 1 justify a ladder re-based at 1.
#[derive(Debug, Clone)]
pub struct TopNDetState {
    n: u64,
    thresholds: usize,
    t0_biased: u64,
    counters: Vec<u64>,
    active: usize,
}

impl TopNDetState {
    pub fn new(cfg: &TopNDetConfig) -> Result<TopNDetState, AlgoError> {
        if cfg.n == 0 {
            return Err(AlgoError::InvalidConfig("TOP N requires N >= 1".into()));
        }
        if cfg.thresholds == 0 || cfg.thresholds > 62 {
            return Err(AlgoError::InvalidConfig(
                "threshold count must be in 1..=62".into(),
            ));
        }
        Ok(TopNDetState {
            n: cfg.n,
            thresholds: cfg.thresholds,
            t0_biased: 0,
            counters: vec![0; cfg.thresholds],
            active: 0,
        })
    }

    /// The warm-up minimum (saturates one below `u64::MAX` due to the
    /// register bias, which only makes pruning more conservative).
    pub fn t0(&self) -> u64 {
        self.t0_biased.saturating_sub(1)
    }

    /// `t_i` of the ladder; index 0 is t0 itself.
    pub fn threshold(&self, i: usize) -> u64 {
        let t0 = self.t0();
        if i == 0 {
            return t0;
        }
        if t0 >= 1 {
            t0.checked_shl(i as u32).unwrap_or(u64::MAX)
        } else {
            // t0 = 0: ladder re-based at 1, justified by the counters alone.
            1u64 << (i - 1)
        }
    }

    pub fn active_threshold(&self) -> u64 {
        self.threshold(self.active)
    }

    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        expect_arity(view, 1)?;
        Ok(self.process_at(view.seq, view.values[0]))
    }

    /// Process the entry with sequence number `seq` (1-based stream order).
    pub fn process_at(&mut self, seq: u32, v: u64) -> Decision {
        if (seq as u64) <= self.n {
            let biased = v.saturating_add(1);
            self.t0_biased = if self.t0_biased == 0 {
                biased
            } else {
                self.t0_biased.min(biased)
            };
            return Decision::Forward;
        }
        // Count occurrences at or above each ladder threshold. Thresholds
        // increase with i, so stop at the first miss.
        for i in 1..=self.thresholds {
            if v >= self.threshold(i) {
                self.counters[i - 1] += 1;
            } else {
                break;
            }
        }
        while self.active < self.thresholds && self.counters[self.active] >= self.n {
            self.active += 1;
        }
        if v < self.active_threshold() {
            Decision::Prune
        } else {
            Decision::Forward
        }
    }
}

// ---------------------------------------------------------------------------
// Randomized matrix
// ---------------------------------------------------------------------------

/// How an entry picks its matrix row: a fresh uniform draw per entry, not a
/// function of the value.
#[derive(Debug, Clone)]
pub enum RowDraw {
    /// Uniform draw derived from (flow, seq) — unique per entry, so
    /// retransmissions are idempotent and replays reproduce.
    Hashed { seed: u64 },
    /// Explicit per-entry rows (tests and trace replays), consumed in
    /// processing order; 0-based.
    Injected(Vec<u32>),
}

#[derive(Debug, Clone)]
pub struct TopNRandConfig {
    pub n: u64,
    pub rows: usize,
    pub width: usize,
    pub draw: RowDraw,
    /// Error budget used to check the `d >= N*e / ln(1/delta)` precondition;
    /// `None` skips the check (explicitly sized matrices).
    pub delta: Option<f64>,
}

/// The randomized TOP N matrix: each row keeps its w largest routed values
/// via a rolling minimum; an entry smaller than all w cells of its row is
/// pruned. Cells start at 0, the "minus infinity" of unsigned values.
#[derive(Debug, Clone)]
pub struct TopNRandMatrix {
    rows: usize,
    width: usize,
    draw: RowDraw,
    hash: SeededHash,
    drawn: usize,
    cells: Vec<u64>,
}

impl TopNRandMatrix {
    pub fn new(cfg: &TopNRandConfig) -> Result<TopNRandMatrix, AlgoError> {
        if cfg.rows == 0 || cfg.width == 0 {
            return Err(AlgoError::InvalidConfig(
                "matrix needs rows >= 1 and width >= 1".into(),
            ));
        }
        if let Some(delta) = cfg.delta {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(AlgoError::InvalidConfig(format!(
                    "delta must be in (0,1), got {delta}"
                )));
            }
            let lower = cfg.n as f64 * std::f64::consts::E / (1.0 / delta).ln();
            if (cfg.rows as f64) < lower {
                return Err(AlgoError::InvalidConfig(format!(
                    "rows d = {} violates d >= N*e/ln(1/delta) = {lower:.2}",
                    cfg.rows
                )));
            }
        }
        let seed = match cfg.draw {
            RowDraw::Hashed { seed } => seed,
            RowDraw::Injected(_) => 0,
        };
        Ok(TopNRandMatrix {
            rows: cfg.rows,
            width: cfg.width,
            draw: cfg.draw.clone(),
            hash: SeededHash::new(seed),
            drawn: 0,
            cells: vec![0; cfg.rows * cfg.width],
        })
    }

    fn draw_row(&mut self, flow: u16, seq: u32) -> usize {
        let i = self.drawn;
        self.drawn += 1;
        match &self.draw {
            RowDraw::Hashed { .. } => self
                .hash
                .row(((flow as u64) << 32) | seq as u64, self.rows),
            RowDraw::Injected(rows) => rows[i % rows.len()] as usize,
        }
    }

    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        expect_arity(view, 1)?;
        let row = self.draw_row(view.flow, view.seq);
        Ok(self.process_in_row(view.values[0], row))
    }

    /// Prune iff `v` is strictly smaller than all w cells of its row; else
    /// forward and insert via the rolling minimum.
    pub fn process_in_row(&mut self, v: u64, row: usize) -> Decision {
        let cells = &mut self.cells[row * self.width..(row + 1) * self.width];
        let prune = cells.iter().all(|&old| v < old);
        let mut carry = v;
        for cell in cells.iter_mut() {
            if carry > *cell {
                std::mem::swap(&mut carry, cell);
            }
        }
        if prune {
            Decision::Prune
        } else {
            Decision::Forward
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(n: u64, w: usize) -> TopNDetState {
        TopNDetState::new(&TopNDetConfig { n, thresholds: w }).unwrap()
    }

    fn feed(state: &mut TopNDetState, values: &[u64]) -> Vec<Decision> {
        feed_from(state, 1, values)
    }

    fn feed_from(state: &mut TopNDetState, first_seq: u32, values: &[u64]) -> Vec<Decision> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| state.process_at(first_seq + i as u32, v))
            .collect()
    }

    #[test]
    fn warmup_takes_min_and_then_prunes_below_it() {
        let mut s = det(3, 4);
        let d = feed(&mut s, &[4, 7, 2, 5]);
        assert_eq!(d, vec![Decision::Forward; 4]);
        assert_eq!(s.t0(), 2);
        assert_eq!(s.process_at(5, 1), Decision::Prune);
        assert_eq!(s.process_at(6, 2), Decision::Forward); // ties kept
    }

    #[test]
    fn n_at_least_stream_length_forwards_everything() {
        let mut s = det(10, 4);
        let d = feed(&mut s, &[9, 1, 8, 2, 7]);
        assert!(d.iter().all(|&x| x == Decision::Forward));
    }

    #[test]
    fn decreasing_stream_prunes_only_below_t0() {
        let mut s = det(2, 4);
        let d = feed(&mut s, &[10, 9, 8, 7, 6]);
        assert_eq!(d[..2], [Decision::Forward, Decision::Forward]);
        // t0 = 9; everything after is < 9 and prunable
        assert_eq!(d[2..], [Decision::Prune, Decision::Prune, Decision::Prune]);
        // forwarded set {10, 9} contains the true top 2
    }

    #[test]
    fn ladder_advances_after_n_large_values() {
        let mut s = det(2, 4);
        feed(&mut s, &[1, 1]); // t0 = 1
        assert_eq!(s.active_threshold(), 1);
        // thresholds: t1 = 2, t2 = 4, t3 = 8, t4 = 16
        feed_from(&mut s, 3, &[4, 4]); // two entries >= t2
        assert_eq!(s.active_threshold(), 4);
        assert_eq!(s.process_at(5, 3), Decision::Prune);
        assert_eq!(s.process_at(6, 4), Decision::Forward);
    }

    #[test]
    fn zero_t0_disables_pruning_until_counters_justify_one() {
        let mut s = det(2, 4);
        feed(&mut s, &[0, 5]); // t0 = 0
        assert_eq!(s.process_at(3, 0), Decision::Forward); // nothing prunable yet
        // Ladder re-based at 1: t1=1, t2=2, t3=4, t4=8.
        feed_from(&mut s, 4, &[9, 9]);
        // counters for t1..t4 all reached 2 -> active threshold 8
        assert_eq!(s.active_threshold(), 8);
        assert_eq!(s.process_at(6, 7), Decision::Prune);
    }

    /// Brute-force oracle: the forwarded multiset always contains the true
    /// top-N multiset.
    #[test]
    fn forwarded_superset_of_true_top_n() {
        use rand::{Rng, SeedableRng};
        for seed in 0..10u64 {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let values: Vec<u64> = (0..2_000).map(|_| rng.random_range(0..10_000)).collect();
            let n = 50;
            let mut s = det(n as u64, 8);
            let mut forwarded = Vec::new();
            for (i, &v) in values.iter().enumerate() {
                if s.process_at(i as u32 + 1, v) == Decision::Forward {
                    forwarded.push(v);
                }
            }
            let mut sorted = values.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            let top: Vec<u64> = sorted[..n].to_vec();
            forwarded.sort_unstable_by(|a, b| b.cmp(a));
            // multiset inclusion: count occurrences
            for &t in &top {
                let need = top.iter().filter(|&&x| x == t).count();
                let have = forwarded.iter().filter(|&&x| x == t).count();
                assert!(have >= need, "seed {seed}: top value {t} lost");
            }
        }
    }

    #[test]
    fn rand_matrix_replays_injected_rows() {
        // Stream (7,4,7,5,3,2) over a 3x2 matrix with fixed row draws:
        // the 3 lands on a full row of larger values and is pruned, the 2
        // lands next to an empty cell and is forwarded.
        let mut m = TopNRandMatrix::new(&TopNRandConfig {
            n: 3,
            rows: 3,
            width: 2,
            draw: RowDraw::Injected(vec![2, 0, 2, 1, 2, 1]),
            delta: None,
        })
        .unwrap();
        let stream = [7u64, 4, 7, 5, 3, 2];
        let decisions: Vec<Decision> = stream
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let values = [v];
                m.process(&EntryView::simple(0, i as u32 + 1, &values))
                    .unwrap()
            })
            .collect();
        assert_eq!(
            decisions,
            vec![
                Decision::Forward,
                Decision::Forward,
                Decision::Forward,
                Decision::Forward,
                Decision::Prune,
                Decision::Forward,
            ]
        );
    }

    #[test]
    fn rand_matrix_never_prunes_with_width_at_least_stream_length() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let mut m = TopNRandMatrix::new(&TopNRandConfig {
            n: 1,
            rows: 4,
            width: 32,
            draw: RowDraw::Hashed { seed: 1 },
            delta: None,
        })
        .unwrap();
        for seq in 1..=32u32 {
            let values = [rng.random_range(0..100u64)];
            assert_eq!(
                m.process(&EntryView::simple(0, seq, &values)).unwrap(),
                Decision::Forward
            );
        }
    }

    #[test]
    fn rand_matrix_enforces_theorem_precondition() {
        let err = TopNRandMatrix::new(&TopNRandConfig {
            n: 1000,
            rows: 100,
            width: 4,
            draw: RowDraw::Hashed { seed: 1 },
            delta: Some(1e-4),
        })
        .unwrap_err();
        assert!(matches!(err, AlgoError::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn rows_keep_their_w_largest_values() {
        let mut m = TopNRandMatrix::new(&TopNRandConfig {
            n: 2,
            rows: 1,
            width: 3,
            draw: RowDraw::Injected(vec![0]),
            delta: None,
        })
        .unwrap();
        for (i, v) in [5u64, 9, 1, 7, 3, 8].into_iter().enumerate() {
            let values = [v];
            let _ = m.process(&EntryView::simple(0, i as u32 + 1, &values));
        }
        assert_eq!(&m.cells, &[9, 8, 7]);
    }
}
