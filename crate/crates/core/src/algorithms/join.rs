//! JOIN pruning: two Bloom filters built on a first pass over the key
//! columns, then a second pass pruning each side against the opposite
//! filter. No false negatives, so no matched entry is ever pruned.

use crate::hash::SeededHash;

use super::{AlgoError, Decision, EntryView, Pass, TableSide};

/// A Bloom filter laid out as one bit array per hash function, so a packet
/// touches each register array exactly once.
#[derive(Debug, Clone)]
pub struct BloomFilter {
    bits_per_array: u64,
    arrays: Vec<Vec<u64>>,
    hashes: Vec<SeededHash>,
    inserted: u64,
}

impl BloomFilter {
    /// `total_bits` spread over `hash_count` arrays.
    pub fn new(total_bits: u64, hash_count: usize, seed: u64) -> Result<BloomFilter, AlgoError> {
        if total_bits == 0 || hash_count == 0 {
            return Err(AlgoError::InvalidConfig(
                "bloom filter needs bits >= 1 and hashes >= 1".into(),
            ));
        }
        let bits_per_array = (total_bits / hash_count as u64).max(1);
        let words = bits_per_array.div_ceil(64) as usize;
        Ok(BloomFilter {
            bits_per_array,
            arrays: vec![vec![0u64; words]; hash_count],
            hashes: (0..hash_count)
                .map(|i| SeededHash::new(crate::hash::derive_seed(seed, "bloom", i as u64)))
                .collect(),
            inserted: 0,
        })
    }

    fn bit_of(&self, hash_index: usize, key: u64) -> (usize, u64) {
        let bit = self.hashes[hash_index].hash(key) % self.bits_per_array;
        ((bit / 64) as usize, 1u64 << (bit % 64))
    }

    pub fn insert(&mut self, key: u64) {
        for i in 0..self.hashes.len() {
            let (word, mask) = self.bit_of(i, key);
            self.arrays[i][word] |= mask;
        }
        self.inserted += 1;
    }

    /// True iff every hash position is set; an inserted key always reports
    /// true (no false negatives).
    pub fn contains(&self, key: u64) -> bool {
        (0..self.hashes.len()).all(|i| {
            let (word, mask) = self.bit_of(i, key);
            self.arrays[i][word] & mask != 0
        })
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Analytic false-positive rate for `n` inserted keys under this
    /// partitioned layout: each of the H arrays must have the probed bit
    /// set, independently.
    pub fn false_positive_rate(&self, n: u64) -> f64 {
        let m = self.bits_per_array as f64;
        let per_array = 1.0 - (1.0 - 1.0 / m).powf(n as f64);
        per_array.powi(self.hashes.len() as i32)
    }
}

#[derive(Debug, Clone)]
pub struct JoinConfig {
    /// Total filter bits M, split across the two sides.
    pub total_bits: u64,
    /// Hash functions per filter (H).
    pub hash_count: usize,
    pub seed: u64,
    /// Asymmetric mode: pass 1 streams the (small) left table unpruned while
    /// building its filter; pass 2 prunes the right table against it.
    pub asymmetric: bool,
}

/// Pass-aware join pruning state.
#[derive(Debug, Clone)]
pub struct JoinFilters {
    asymmetric: bool,
    left: BloomFilter,
    right: BloomFilter,
    pass_one_done: bool,
}

impl JoinFilters {
    pub fn new(cfg: &JoinConfig) -> Result<JoinFilters, AlgoError> {
        let per_side = (cfg.total_bits / 2).max(1);
        Ok(JoinFilters {
            asymmetric: cfg.asymmetric,
            left: BloomFilter::new(per_side, cfg.hash_count, cfg.seed)?,
            right: BloomFilter::new(per_side, cfg.hash_count, cfg.seed ^ 0x5a5a)?,
            pass_one_done: false,
        })
    }

    pub fn finish_pass(&mut self, pass: Pass) {
        if pass == Pass::One {
            self.pass_one_done = true;
        }
    }

    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        super::expect_arity(view, 1)?;
        let key = view.values[0];
        match (view.pass, view.side) {
            (Pass::One, TableSide::Left) => {
                self.left.insert(key);
                if self.asymmetric {
                    // The small table streams through unpruned.
                    Ok(Decision::Forward)
                } else {
                    // Key-only pass; the switch absorbs it.
                    Ok(Decision::Prune)
                }
            }
            (Pass::One, TableSide::Right) => {
                if self.asymmetric {
                    return Err(AlgoError::PassProtocol(
                        "asymmetric join streams only the left table in pass 1".into(),
                    ));
                }
                self.right.insert(key);
                Ok(Decision::Prune)
            }
            (Pass::Two, side) => {
                if !self.pass_one_done {
                    return Err(AlgoError::PassProtocol(
                        "pass-2 entry arrived before the pass-1 completion barrier".into(),
                    ));
                }
                let opposite = match side {
                    TableSide::Left => &self.right,
                    TableSide::Right => &self.left,
                };
                if self.asymmetric && side == TableSide::Left {
                    return Err(AlgoError::PassProtocol(
                        "asymmetric join pass 2 streams only the right table".into(),
                    ));
                }
                if opposite.contains(key) {
                    Ok(Decision::Forward)
                } else {
                    Ok(Decision::Prune)
                }
            }
        }
    }

    pub fn side_filter(&self, side: TableSide) -> &BloomFilter {
        match side {
            TableSide::Left => &self.left,
            TableSide::Right => &self.right,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::FingerprintMode;

    fn view(key: u64, side: TableSide, pass: Pass) -> (u64, TableSide, Pass) {
        (key, side, pass)
    }

    fn run(
        filters: &mut JoinFilters,
        items: &[(u64, TableSide, Pass)],
    ) -> Vec<Result<Decision, AlgoError>> {
        items
            .iter()
            .enumerate()
            .map(|(i, &(key, side, pass))| {
                let values = [key];
                filters.process(&EntryView {
                    flow: 0,
                    seq: i as u32 + 1,
                    values: &values,
                    side,
                    pass,
                })
            })
            .collect()
    }

    fn key_of(name: &str) -> u64 {
        FingerprintMode::Hashed { bits: 64, seed: 77 }.apply_bytes(name.as_bytes())
    }

    #[test]
    fn unmatched_key_is_pruned_in_pass_two() {
        let mut f = JoinFilters::new(&JoinConfig {
            total_bits: 1 << 14,
            hash_count: 3,
            seed: 5,
            asymmetric: false,
        })
        .unwrap();
        let products = ["Burger", "Pizza", "Fries", "Jello"].map(key_of);
        let ratings = ["Pizza", "Cheetos", "Jello", "Burger", "Fries"].map(key_of);

        let mut pass1: Vec<(u64, TableSide, Pass)> = Vec::new();
        for &k in &products {
            pass1.push(view(k, TableSide::Left, Pass::One));
        }
        for &k in &ratings {
            pass1.push(view(k, TableSide::Right, Pass::One));
        }
        for d in run(&mut f, &pass1) {
            assert_eq!(d.unwrap(), Decision::Prune); // absorbed, never reaches the master
        }
        f.finish_pass(Pass::One);

        // Pass 2: Cheetos is absent from the products side and gets pruned.
        for &k in &products {
            let values = [k];
            let d = f
                .process(&EntryView {
                    flow: 0,
                    seq: 1,
                    values: &values,
                    side: TableSide::Left,
                    pass: Pass::Two,
                })
                .unwrap();
            assert_eq!(d, Decision::Forward);
        }
        let mut decisions = Vec::new();
        for &k in &ratings {
            let values = [k];
            decisions.push(
                f.process(&EntryView {
                    flow: 0,
                    seq: 1,
                    values: &values,
                    side: TableSide::Right,
                    pass: Pass::Two,
                })
                .unwrap(),
            );
        }
        assert_eq!(
            decisions,
            vec![
                Decision::Forward,
                Decision::Prune, // Cheetos
                Decision::Forward,
                Decision::Forward,
                Decision::Forward,
            ]
        );
    }

    #[test]
    fn empty_left_table_prunes_every_right_row() {
        let mut f = JoinFilters::new(&JoinConfig {
            total_bits: 1 << 10,
            hash_count: 2,
            seed: 1,
            asymmetric: false,
        })
        .unwrap();
        f.finish_pass(Pass::One);
        for k in 1..=50u64 {
            let values = [k];
            let d = f
                .process(&EntryView {
                    flow: 0,
                    seq: k as u32,
                    values: &values,
                    side: TableSide::Right,
                    pass: Pass::Two,
                })
                .unwrap();
            assert_eq!(d, Decision::Prune);
        }
    }

    #[test]
    fn pass_two_before_barrier_is_a_protocol_error() {
        let mut f = JoinFilters::new(&JoinConfig {
            total_bits: 1 << 10,
            hash_count: 2,
            seed: 1,
            asymmetric: false,
        })
        .unwrap();
        let values = [9u64];
        let err = f
            .process(&EntryView {
                flow: 0,
                seq: 1,
                values: &values,
                side: TableSide::Left,
                pass: Pass::Two,
            })
            .unwrap_err();
        assert!(matches!(err, AlgoError::PassProtocol(_)));
    }

    #[test]
    fn no_false_negatives_ever() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        let mut bf = BloomFilter::new(1 << 12, 3, 7).unwrap();
        let keys: Vec<u64> = (0..2_000).map(|_| rng.random()).collect();
        for &k in &keys {
            bf.insert(k);
        }
        for &k in &keys {
            assert!(bf.contains(k));
        }
    }

    #[test]
    fn asymmetric_mode_streams_small_side_through() {
        let mut f = JoinFilters::new(&JoinConfig {
            total_bits: 1 << 12,
            hash_count: 3,
            seed: 2,
            asymmetric: true,
        })
        .unwrap();
        let values = [42u64];
        let d = f
            .process(&EntryView {
                flow: 0,
                seq: 1,
                values: &values,
                side: TableSide::Left,
                pass: Pass::One,
            })
            .unwrap();
        assert_eq!(d, Decision::Forward);
        f.finish_pass(Pass::One);
        let d = f
            .process(&EntryView {
                flow: 0,
                seq: 1,
                values: &values,
                side: TableSide::Right,
                pass: Pass::Two,
            })
            .unwrap();
        assert_eq!(d, Decision::Forward);
        let values = [43u64];
        let d = f
            .process(&EntryView {
                flow: 0,
                seq: 2,
                values: &values,
                side: TableSide::Right,
                pass: Pass::Two,
            })
            .unwrap();
        assert_eq!(d, Decision::Prune);
    }
}
