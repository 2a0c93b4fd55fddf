//! GROUP BY MAX/MIN pruning: a w-hash key/value matrix with write-through
//! of the best known value per key.

use std::collections::BTreeMap;

use crate::hash::SeededHash;
use crate::query::Extremum;

use super::{expect_arity, AlgoError, Decision, EntryView};

/// Row selection per hash index. `Fixed` pins explicit key-to-row maps for
/// trace replays; missing keys fall back to row 0.
#[derive(Debug, Clone)]
pub enum KeyRowMap {
    Hashed { seed: u64 },
    Fixed(Vec<BTreeMap<u64, usize>>),
}

#[derive(Debug, Clone)]
pub struct GroupByConfig {
    /// Cells per hash row (d).
    pub rows: usize,
    /// Hash function count (w); one stage each.
    pub hashes: usize,
    pub direction: Extremum,
    pub row_map: KeyRowMap,
}

/// The key/value matrix. Cell `(i, h_i(k))` may hold any key colliding
/// under `h_i`; a stored value always originates from a real entry of its
/// key (possibly propagated forward by the write-through), so a stored
/// better value is a safe witness for pruning.
///
/// Cells start as `(key 0, identity value)` — 0 for MAX, `u64::MAX` for
/// MIN — which can never beat a real entry, so the zero key needs no
/// reserved sentinel here.
#[derive(Debug, Clone)]
pub struct GroupByMatrix {
    rows: usize,
    hashes: usize,
    direction: Extremum,
    row_map: KeyRowMap,
    hash_fns: Vec<SeededHash>,
    keys: Vec<u64>,
    vals: Vec<u64>,
}

impl GroupByMatrix {
    pub fn new(cfg: &GroupByConfig) -> Result<GroupByMatrix, AlgoError> {
        if cfg.rows == 0 || cfg.hashes == 0 {
            return Err(AlgoError::InvalidConfig(
                "group-by matrix needs rows >= 1 and hashes >= 1".into(),
            ));
        }
        if let KeyRowMap::Fixed(maps) = &cfg.row_map {
            if maps.len() != cfg.hashes {
                return Err(AlgoError::InvalidConfig(
                    "fixed row maps must cover every hash index".into(),
                ));
            }
        }
        let hash_fns = match cfg.row_map {
            KeyRowMap::Hashed { seed } => (0..cfg.hashes)
                .map(|i| SeededHash::new(crate::hash::derive_seed(seed, "groupby-row", i as u64)))
                .collect(),
            KeyRowMap::Fixed(_) => Vec::new(),
        };
        let init = match cfg.direction {
            Extremum::Max => 0,
            Extremum::Min => u64::MAX,
        };
        Ok(GroupByMatrix {
            rows: cfg.rows,
            hashes: cfg.hashes,
            direction: cfg.direction,
            row_map: cfg.row_map.clone(),
            hash_fns,
            keys: vec![0; cfg.rows * cfg.hashes],
            vals: vec![init; cfg.rows * cfg.hashes],
        })
    }

    fn row(&self, hash_index: usize, key: u64) -> usize {
        match &self.row_map {
            KeyRowMap::Hashed { .. } => self.hash_fns[hash_index].row(key, self.rows),
            KeyRowMap::Fixed(maps) => maps[hash_index].get(&key).copied().unwrap_or(0),
        }
    }

    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        expect_arity(view, 2)?;
        Ok(self.process_pair(view.values[0], view.values[1]))
    }

    /// Prune iff some hashed cell holds this key with a strictly better
    /// value; write the best known `(key, value)` through all w cells.
    pub fn process_pair(&mut self, key: u64, value: u64) -> Decision {
        let strictly_better = |stored: u64, v: u64| match self.direction {
            Extremum::Max => stored > v,
            Extremum::Min => stored < v,
        };
        let mut best = value;
        let mut prune = false;
        for i in 0..self.hashes {
            let idx = i * self.rows + self.row(i, key);
            if self.keys[idx] == key {
                if strictly_better(self.vals[idx], value) {
                    prune = true;
                }
                if strictly_better(self.vals[idx], best) {
                    best = self.vals[idx];
                }
            }
            self.keys[idx] = key;
            self.vals[idx] = best;
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

    fn hashed(rows: usize, hashes: usize, direction: Extremum) -> GroupByMatrix {
        GroupByMatrix::new(&GroupByConfig {
            rows,
            hashes,
            direction,
            row_map: KeyRowMap::Hashed { seed: 3 },
        })
        .unwrap()
    }

    #[test]
    fn toy_trace_prunes_all_but_first_appearances() {
        // d = w = 3, data (x,5),(x,2),(y,2),(y,1),(x,3) with pinned rows
        // h1(x)=h1(y)=2, h2(x)=1, h3(y)=2, h3(x)=1 (1-based).
        let x = 101u64;
        let y = 202u64;
        let maps = vec![
            BTreeMap::from([(x, 1usize), (y, 1)]),
            BTreeMap::from([(x, 0), (y, 2)]),
            BTreeMap::from([(x, 0), (y, 1)]),
        ];
        let mut m = GroupByMatrix::new(&GroupByConfig {
            rows: 3,
            hashes: 3,
            direction: Extremum::Max,
            row_map: KeyRowMap::Fixed(maps),
        })
        .unwrap();
        let stream = [(x, 5u64), (x, 2), (y, 2), (y, 1), (x, 3)];
        let decisions: Vec<Decision> =
            stream.iter().map(|&(k, v)| m.process_pair(k, v)).collect();
        assert_eq!(
            decisions,
            vec![
                Decision::Forward,
                Decision::Prune,
                Decision::Forward,
                Decision::Prune,
                Decision::Prune,
            ]
        );
    }

    #[test]
    fn unique_keys_never_prune() {
        let mut m = hashed(8, 3, Extremum::Max);
        for k in 1..=500u64 {
            assert_eq!(m.process_pair(k, k * 7 % 97), Decision::Forward);
        }
    }

    #[test]
    fn max_never_prunes_a_key_maximum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let mut m = hashed(16, 4, Extremum::Max);
        let mut true_max: BTreeMap<u64, u64> = BTreeMap::new();
        let stream: Vec<(u64, u64)> = (0..20_000)
            .map(|_| (rng.random_range(0..300), rng.random_range(0..1_000_000)))
            .collect();
        for &(k, v) in &stream {
            true_max
                .entry(k)
                .and_modify(|m| *m = (*m).max(v))
                .or_insert(v);
        }
        let mut forwarded_max: BTreeMap<u64, u64> = BTreeMap::new();
        for &(k, v) in &stream {
            if m.process_pair(k, v) == Decision::Forward {
                forwarded_max
                    .entry(k)
                    .and_modify(|m| *m = (*m).max(v))
                    .or_insert(v);
            }
        }
        // The per-key maximum must survive pruning for every key.
        assert_eq!(true_max, forwarded_max);
    }

    #[test]
    fn min_direction_mirrors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let mut m = hashed(16, 4, Extremum::Min);
        let mut true_min: BTreeMap<u64, u64> = BTreeMap::new();
        let mut forwarded_min: BTreeMap<u64, u64> = BTreeMap::new();
        for _ in 0..20_000 {
            let (k, v) = (rng.random_range(0..300u64), rng.random());
            true_min
                .entry(k)
                .and_modify(|m| *m = (*m).min(v))
                .or_insert(v);
            if m.process_pair(k, v) == Decision::Forward {
                forwarded_min
                    .entry(k)
                    .and_modify(|m| *m = (*m).min(v))
                    .or_insert(v);
            }
        }
        assert_eq!(true_min, forwarded_min);
    }

    #[test]
    fn zero_key_is_safe_in_both_directions() {
        let mut m = hashed(4, 2, Extremum::Max);
        assert_eq!(m.process_pair(0, 5), Decision::Forward);
        assert_eq!(m.process_pair(0, 3), Decision::Prune);
        let mut m = hashed(4, 2, Extremum::Min);
        assert_eq!(m.process_pair(0, 5), Decision::Forward);
        assert_eq!(m.process_pair(0, 9), Decision::Prune);
    }
}
