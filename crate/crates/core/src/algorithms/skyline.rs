//! SKYLINE pruning: w stored points, a monotone scalar score for the
//! replacement decision, exact dominance for the prune decision.

use std::sync::Arc;

use crate::switchsim::logtable::{aph_score, LogTable, MsbTcam, DEFAULT_BETA};

use super::{AlgoError, Decision, EntryView};

/// Scoring heuristic for the stored-point replacement walk. Both are
/// monotone nondecreasing in every coordinate, which is all pruning safety
/// needs; the approximate-product heuristic resists scale imbalance between
/// dimensions.
#[derive(Debug, Clone)]
pub enum ScoreKind {
    Sum,
    /// Approximate product: sum of fixed-point base-2 logs, `beta` scale.
    Aph { beta: u64 },
}

impl ScoreKind {
    pub fn aph_default() -> ScoreKind {
        ScoreKind::Aph { beta: DEFAULT_BETA }
    }
}

#[derive(Debug, Clone)]
pub struct SkylineConfig {
    pub dims: usize,
    /// Stored point count w.
    pub width: usize,
    pub score: ScoreKind,
}

#[derive(Debug, Clone)]
enum Scorer {
    Sum,
    Aph { table: Arc<LogTable>, tcam: MsbTcam },
}

impl Scorer {
    fn score(&self, dims: &[u64]) -> u64 {
        match self {
            Scorer::Sum => dims.iter().fold(0u64, |acc, &d| acc.saturating_add(d)),
            Scorer::Aph { table, tcam } => aph_score(dims, table, tcam),
        }
    }
}

/// The stored-point walk: an arriving point carries itself through the w
/// slots, swapping in wherever its score beats the resident (rolling
/// minimum on scores), while a separate flag marks the packet for pruning
/// if any resident strictly dominates the *original* point. The decision
/// lands at pipeline end.
///
/// Slots start zeroed; an all-zero resident can never strictly dominate
/// anything, so empty slots never cause a prune.
#[derive(Debug, Clone)]
pub struct SkylineStore {
    dims: usize,
    width: usize,
    scorer: Scorer,
    scores: Vec<u64>,
    points: Vec<u64>, // width * dims, row-major
}

/// Strict dominance: `y` dominates `x` iff every coordinate of `x` is at
/// most `y`'s and the points differ. Exact duplicates do not dominate each
/// other (a pruned duplicate would be a lost output row).
pub fn dominates(y: &[u64], x: &[u64]) -> bool {
    debug_assert_eq!(y.len(), x.len());
    x.iter().zip(y).all(|(a, b)| a <= b) && x != y
}

impl SkylineStore {
    pub fn new(cfg: &SkylineConfig) -> Result<SkylineStore, AlgoError> {
        if cfg.dims < 2 {
            return Err(AlgoError::InvalidConfig(
                "skyline needs at least 2 dimensions".into(),
            ));
        }
        if cfg.width == 0 {
            return Err(AlgoError::InvalidConfig("skyline needs width >= 1".into()));
        }
        let scorer = match cfg.score {
            ScoreKind::Sum => Scorer::Sum,
            ScoreKind::Aph { beta } => Scorer::Aph {
                table: LogTable::shared(beta),
                tcam: MsbTcam::new(),
            },
        };
        Ok(SkylineStore {
            dims: cfg.dims,
            width: cfg.width,
            scorer,
            scores: vec![0; cfg.width],
            points: vec![0; cfg.width * cfg.dims],
        })
    }

    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        if view.values.len() != self.dims {
            return Err(AlgoError::WrongArity {
                expected: self.dims,
                found: view.values.len(),
            });
        }
        Ok(self.process_point(view.values))
    }

    pub fn process_point(&mut self, point: &[u64]) -> Decision {
        let original = point;
        let mut cur_score = self.scorer.score(point);
        let mut cur_point = point.to_vec();
        let mut prune = false;
        for i in 0..self.width {
            let slot = &mut self.points[i * self.dims..(i + 1) * self.dims];
            if cur_score > self.scores[i] {
                std::mem::swap(&mut cur_score, &mut self.scores[i]);
                for (c, s) in cur_point.iter_mut().zip(slot.iter_mut()) {
                    std::mem::swap(c, s);
                }
            } else if dominates(slot, original) {
                prune = true;
            }
        }
        if prune {
            Decision::Prune
        } else {
            Decision::Forward
        }
    }

    pub fn score_of(&self, point: &[u64]) -> u64 {
        self.scorer.score(point)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(dims: usize, width: usize, score: ScoreKind) -> SkylineStore {
        SkylineStore::new(&SkylineConfig { dims, width, score }).unwrap()
    }

    fn run(store: &mut SkylineStore, points: &[Vec<u64>]) -> Vec<Decision> {
        points.iter().map(|p| store.process_point(p)).collect()
    }

    /// Exact skyline by sort-filter-scan: sort by score descending (a
    /// dominator always scores at least as high), then test each point
    /// against the accepted skyline.
    pub(crate) fn skyline_oracle(points: &[Vec<u64>]) -> Vec<Vec<u64>> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by_key(|&i| {
            std::cmp::Reverse(points[i].iter().fold(0u64, |a, &b| a.saturating_add(b)))
        });
        let mut skyline: Vec<Vec<u64>> = Vec::new();
        for &i in &order {
            if !skyline.iter().any(|s| dominates(s, &points[i])) {
                skyline.push(points[i].clone());
            }
        }
        skyline
    }

    #[test]
    fn ratings_survivors_cover_the_skyline() {
        // (taste, texture): Pizza(7,5) Cheetos(8,6) Jello(9,4) Burger(5,7) Fries(3,3)
        let pts = vec![
            vec![7, 5],
            vec![8, 6],
            vec![9, 4],
            vec![5, 7],
            vec![3, 3],
        ];
        let mut s = store(2, 5, ScoreKind::Sum);
        let decisions = run(&mut s, &pts);
        let survivors: Vec<Vec<u64>> = pts
            .iter()
            .zip(&decisions)
            .filter(|(_, d)| **d == Decision::Forward)
            .map(|(p, _)| p.clone())
            .collect();
        let mut oracle = skyline_oracle(&pts);
        oracle.sort();
        // {Cheetos, Jello, Burger}
        assert_eq!(oracle, vec![vec![5, 7], vec![8, 6], vec![9, 4]]);
        for member in &oracle {
            assert!(survivors.contains(member), "skyline point {member:?} pruned");
        }
        // Fries is dominated and should have been pruned.
        assert_eq!(decisions[4], Decision::Prune);
    }

    #[test]
    fn single_point_is_forwarded() {
        let mut s = store(2, 3, ScoreKind::Sum);
        assert_eq!(s.process_point(&[4, 4]), Decision::Forward);
    }

    #[test]
    fn duplicates_are_not_pruned() {
        let mut s = store(2, 4, ScoreKind::Sum);
        assert_eq!(s.process_point(&[5, 5]), Decision::Forward);
        assert_eq!(s.process_point(&[5, 5]), Decision::Forward);
    }

    #[test]
    fn dominated_point_is_pruned_by_stored_point() {
        let mut s = store(2, 4, ScoreKind::Sum);
        s.process_point(&[8, 6]);
        assert_eq!(s.process_point(&[7, 5]), Decision::Prune);
        assert_eq!(s.process_point(&[9, 1]), Decision::Forward); // incomparable
    }

    #[test]
    fn dimension_mismatch_errors() {
        let mut s = store(3, 4, ScoreKind::Sum);
        let values = [1u64, 2];
        let err = s.process(&EntryView::simple(0, 1, &values)).unwrap_err();
        assert!(matches!(err, AlgoError::WrongArity { expected: 3, found: 2 }));
    }

    #[test]
    fn no_true_skyline_point_pruned_random_2d() {
        use rand::{Rng, SeedableRng};
        for (seed, score) in [(1u64, ScoreKind::Sum), (2, ScoreKind::aph_default())] {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let pts: Vec<Vec<u64>> = (0..10_000)
                .map(|_| vec![rng.random_range(0..1 << 16), rng.random_range(0..1 << 16)])
                .collect();
            let mut s = store(2, 10, score);
            let decisions = run(&mut s, &pts);
            let skyline = skyline_oracle(&pts);
            for (p, d) in pts.iter().zip(&decisions) {
                if *d == Decision::Prune {
                    assert!(
                        !skyline.contains(p),
                        "true skyline point {p:?} was pruned"
                    );
                }
            }
        }
    }

    #[test]
    fn aph_orders_by_product() {
        // Products 48 > 35: Cheetos (8,6) outscores Pizza (7,5).
        let s = store(2, 1, ScoreKind::aph_default());
        assert!(s.score_of(&[8, 6]) > s.score_of(&[7, 5]));
        // And the full order by product for the example points:
        let by_score = |p: &[u64]| s.score_of(p);
        assert!(by_score(&[9, 4]) > by_score(&[5, 7])); // 36 > 35
        assert!(by_score(&[5, 7]) == by_score(&[5, 7]));
        assert!(by_score(&[7, 5]) > by_score(&[3, 3])); // 35 > 9
    }
}
