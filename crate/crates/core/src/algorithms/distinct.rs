//! The d×w matrix cache behind DISTINCT (and the HAVING MIN/MAX key dedup).
//!
//! Keys hash to one of `d` rows; each row keeps the last `w` fingerprints.
//! A hit prunes (the value was seen); a miss forwards and inserts. Cell
//! value 0 is the empty sentinel, which is why fingerprints are never 0.

use crate::hash::SeededHash;

use super::{expect_arity, AlgoError, Decision, EntryView};

/// Row replacement policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplacePolicy {
    /// Rolling replacement: inserts shift the row, evicting the oldest; a hit
    /// refreshes the matched key to the front (stops the shift at the match,
    /// so the row holds each fingerprint at most once).
    Lru,
    /// A rotating cursor picks the victim cell; every arrival is written at
    /// the cursor, hit or miss.
    Fifo,
}

#[derive(Debug, Clone)]
pub struct DistinctConfig {
    /// Row count d.
    pub rows: usize,
    /// Cells per row w.
    pub width: usize,
    pub policy: ReplacePolicy,
    /// Seed for the key-to-row hash.
    pub row_seed: u64,
}

/// The matrix cache. Stores fingerprints (or full 64-bit keys in
/// deterministic identity mode — the caller fingerprints before the switch).
#[derive(Debug, Clone)]
pub struct MatrixCache {
    rows: usize,
    width: usize,
    policy: ReplacePolicy,
    row_hash: SeededHash,
    cells: Vec<u64>,
    cursors: Vec<u32>,
}

impl MatrixCache {
    pub fn new(cfg: &DistinctConfig) -> Result<MatrixCache, AlgoError> {
        if cfg.rows == 0 || cfg.width == 0 {
            return Err(AlgoError::InvalidConfig(
                "matrix cache needs rows >= 1 and width >= 1".into(),
            ));
        }
        Ok(MatrixCache {
            rows: cfg.rows,
            width: cfg.width,
            policy: cfg.policy,
            row_hash: SeededHash::new(cfg.row_seed),
            cells: vec![0; cfg.rows * cfg.width],
            cursors: vec![0; cfg.rows],
        })
    }

    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        expect_arity(view, 1)?;
        Ok(self.process_key(view.values[0]))
    }

    /// Look up / insert one fingerprint. `fp` must be nonzero.
    pub fn process_key(&mut self, fp: u64) -> Decision {
        debug_assert_ne!(fp, 0, "fingerprint 0 is the empty sentinel");
        let r = self.row_hash.row(fp, self.rows);
        let row = &mut self.cells[r * self.width..(r + 1) * self.width];
        match self.policy {
            ReplacePolicy::Lru => {
                let mut carry = fp;
                for cell in row.iter_mut() {
                    let old = *cell;
                    *cell = carry;
                    if old == fp {
                        return Decision::Prune;
                    }
                    carry = old;
                }
                Decision::Forward
            }
            ReplacePolicy::Fifo => {
                let cursor = self.cursors[r] as usize % self.width;
                let mut hit = false;
                for (i, cell) in row.iter_mut().enumerate() {
                    if *cell == fp {
                        hit = true;
                    }
                    if i == cursor {
                        *cell = fp;
                    }
                }
                self.cursors[r] = ((cursor + 1) % self.width) as u32;
                if hit {
                    Decision::Prune
                } else {
                    Decision::Forward
                }
            }
        }
    }

    /// Row index a fingerprint maps to (shared with the staged pipeline).
    pub fn row_of(&self, fp: u64) -> usize {
        self.row_hash.row(fp, self.rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::FingerprintMode;

    fn cache(rows: usize, width: usize, policy: ReplacePolicy) -> MatrixCache {
        MatrixCache::new(&DistinctConfig {
            rows,
            width,
            policy,
            row_seed: 99,
        })
        .unwrap()
    }

    #[test]
    fn seller_stream_prunes_only_the_duplicate() {
        // Keys McCheetah, Papizza, McCheetah, JellyFish with w >= 2.
        let mode = FingerprintMode::Identity; // byte keys hash at full width
        let keys = ["McCheetah", "Papizza", "McCheetah", "JellyFish"]
            .map(|s| mode.apply_bytes(s.as_bytes()));
        let mut c = cache(8, 2, ReplacePolicy::Lru);
        let decisions: Vec<Decision> = keys.iter().map(|&k| c.process_key(k)).collect();
        assert_eq!(
            decisions,
            vec![
                Decision::Forward,
                Decision::Forward,
                Decision::Prune,
                Decision::Forward
            ]
        );
    }

    #[test]
    fn all_distinct_stream_never_prunes() {
        let mut c = cache(16, 4, ReplacePolicy::Lru);
        for k in 1..=1000u64 {
            assert_eq!(c.process_key(k), Decision::Forward);
        }
    }

    #[test]
    fn lru_rolling_replacement_evicts_oldest() {
        // Single row, w = 2: after 1,2,3 the row is [3,2]; 1 was evicted.
        let mut c = cache(1, 2, ReplacePolicy::Lru);
        assert_eq!(c.process_key(1), Decision::Forward);
        assert_eq!(c.process_key(2), Decision::Forward);
        assert_eq!(c.process_key(3), Decision::Forward);
        assert_eq!(c.process_key(1), Decision::Forward); // evicted, so a miss
        assert_eq!(c.process_key(3), Decision::Prune); // still cached
    }

    #[test]
    fn lru_hit_refreshes_recency() {
        // Row [b, a]; touching a moves it back to the front.
        let mut c = cache(1, 2, ReplacePolicy::Lru);
        c.process_key(10);
        c.process_key(20); // row: [20, 10]
        assert_eq!(c.process_key(10), Decision::Prune); // row: [10, 20]
        c.process_key(30); // evicts 20
        assert_eq!(c.process_key(10), Decision::Prune);
        assert_eq!(c.process_key(20), Decision::Forward);
    }

    #[test]
    fn fifo_cursor_rotates() {
        let mut c = cache(1, 2, ReplacePolicy::Fifo);
        assert_eq!(c.process_key(1), Decision::Forward); // cells [1, 0]
        assert_eq!(c.process_key(2), Decision::Forward); // cells [1, 2]
        assert_eq!(c.process_key(1), Decision::Prune); // written at cursor 0 again
        assert_eq!(c.process_key(3), Decision::Forward); // cells [1, 3]
        assert_eq!(c.process_key(2), Decision::Forward); // 2 was overwritten
    }

    #[test]
    fn first_occurrences_never_pruned_with_identity_fingerprints() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for policy in [ReplacePolicy::Lru, ReplacePolicy::Fifo] {
            let mut c = cache(32, 3, policy);
            let mut seen = std::collections::HashSet::new();
            for _ in 0..20_000 {
                let k = rng.random_range(1..=400u64);
                let d = c.process_key(k);
                if seen.insert(k) {
                    assert_eq!(d, Decision::Forward, "first occurrence of {k} pruned");
                }
            }
        }
    }

    #[test]
    fn prune_implies_same_row_fingerprint_match() {
        // With hashed fingerprints a prune must coincide with a genuine
        // same-row fingerprint collision; track a mirror of the cache.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(6);
        let mode = FingerprintMode::Hashed { bits: 16, seed: 7 };
        let mut c = cache(8, 2, ReplacePolicy::Lru);
        let mut mirrored_rows: Vec<Vec<u64>> = vec![Vec::new(); 8];
        for _ in 0..5_000 {
            let fp = mode.apply_u64(rng.random());
            let row = c.row_of(fp);
            let was_present = mirrored_rows[row].contains(&fp);
            let d = c.process_key(fp);
            if d == Decision::Prune {
                assert!(was_present, "prune without a cached same-row fingerprint");
            }
            // Mirror the LRU update.
            let cells = &mut mirrored_rows[row];
            if let Some(pos) = cells.iter().position(|&x| x == fp) {
                cells.remove(pos);
            }
            cells.insert(0, fp);
            cells.truncate(2);
        }
    }
}
