//! Per-algorithm hardware footprints.
//!
//! Stage/ALU/SRAM/TCAM demands as closed formulas of algorithm parameters.
//! `alus_per_stage` (A) enters where same-stage ALUs share one memory space
//! (the FIFO cache and the Count-Min rows).

use serde::{Deserialize, Serialize};

use super::{ConfigError, ResourceFootprint};

/// Algorithm kind plus the parameters its footprint depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlgorithmShape {
    Filter { conditions: u32 },
    DistinctLru { rows: u64, width: u32 },
    DistinctFifo { rows: u64, width: u32, alus_per_stage: u32 },
    SkylineSum { dims: u32, width: u32 },
    SkylineAph { dims: u32, width: u32 },
    TopNDet { width: u32 },
    TopNRand { rows: u64, width: u32 },
    GroupBy { rows: u64, width: u32 },
    JoinBloom { filter_bits: u64, hash_count: u32 },
    JoinRegisterBloom { filter_bits: u64, hash_count: u32 },
    HavingSketch { rows: u32, width: u64, alus_per_stage: u32 },
    HavingMinMax { rows: u64, width: u32 },
}

fn ceil_log2(x: u32) -> u32 {
    debug_assert!(x >= 1);
    32 - (x - 1).leading_zeros()
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Stage/ALU/SRAM/TCAM demand for one algorithm instance.
pub fn estimate_resources(shape: AlgorithmShape) -> Result<ResourceFootprint, ConfigError> {
    use AlgorithmShape::*;
    let fp = match shape {
        Filter { conditions } => {
            if conditions == 0 {
                return Err(ConfigError::Invalid("filter needs >= 1 condition".into()));
            }
            ResourceFootprint {
                stages: 1,
                alus: conditions,
                // one 32-bit register per reconfigurable constant
                sram_bits: 32 * conditions as u64,
                tcam_entries: 0,
            }
        }
        DistinctLru { rows, width } => ResourceFootprint {
            stages: width,
            alus: width,
            sram_bits: rows * width as u64 * 64,
            tcam_entries: 0,
        },
        DistinctFifo {
            rows,
            width,
            alus_per_stage,
        } => {
            if alus_per_stage == 0 {
                return Err(ConfigError::Invalid("A must be >= 1".into()));
            }
            ResourceFootprint {
                stages: width.div_ceil(alus_per_stage),
                alus: width,
                sram_bits: rows * width as u64 * 64,
                tcam_entries: 0,
            }
        }
        SkylineSum { dims, width } => {
            check_dims(dims)?;
            ResourceFootprint {
                stages: ceil_log2(dims) + 2 * width,
                alus: 2 * ceil_log2(dims) - 1 + width * (dims + 1),
                sram_bits: width as u64 * (dims as u64 + 1) * 64,
                tcam_entries: 0,
            }
        }
        SkylineAph { dims, width } => {
            check_dims(dims)?;
            ResourceFootprint {
                stages: ceil_log2(dims) + 2 * (width + 1),
                alus: 2 * ceil_log2(dims) - 1 + width * (dims + 1),
                sram_bits: width as u64 * (dims as u64 + 1) * 64 + (1 << 16) * 32,
                tcam_entries: 64 * dims,
            }
        }
        TopNDet { width } => ResourceFootprint {
            stages: width + 1,
            alus: width + 1,
            sram_bits: (width as u64 + 1) * 64,
            tcam_entries: 0,
        },
        TopNRand { rows, width } => ResourceFootprint {
            stages: width,
            alus: width,
            sram_bits: rows * width as u64 * 64,
            tcam_entries: 0,
        },
        GroupBy { rows, width } => ResourceFootprint {
            stages: width,
            alus: width,
            sram_bits: rows * width as u64 * 64,
            tcam_entries: 0,
        },
        JoinBloom {
            filter_bits,
            hash_count,
        } => ResourceFootprint {
            stages: 2,
            alus: hash_count,
            sram_bits: filter_bits,
            tcam_entries: 0,
        },
        JoinRegisterBloom {
            filter_bits,
            hash_count,
        } => ResourceFootprint {
            stages: 1,
            alus: 1,
            sram_bits: filter_bits + binomial(64, hash_count as u64) * 64,
            tcam_entries: 0,
        },
        HavingSketch {
            rows,
            width,
            alus_per_stage,
        } => {
            if alus_per_stage == 0 {
                return Err(ConfigError::Invalid("A must be >= 1".into()));
            }
            ResourceFootprint {
                stages: rows.div_ceil(alus_per_stage),
                alus: rows,
                sram_bits: rows as u64 * width * 64,
                tcam_entries: 0,
            }
        }
        HavingMinMax { rows, width } => ResourceFootprint {
            // matrix cache plus the per-entry predicate ALU
            stages: width,
            alus: width + 1,
            sram_bits: rows * width as u64 * 64,
            tcam_entries: 0,
        },
    };
    Ok(fp)
}

fn check_dims(dims: u32) -> Result<(), ConfigError> {
    if dims < 2 {
        return Err(ConfigError::Invalid(
            "skyline needs at least 2 dimensions".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_lru_defaults() {
        let fp = estimate_resources(AlgorithmShape::DistinctLru {
            rows: 4096,
            width: 2,
        })
        .unwrap();
        assert_eq!(fp.stages, 2);
        assert_eq!(fp.alus, 2);
        assert_eq!(fp.sram_bits, 4096 * 2 * 64);
        assert_eq!(fp.tcam_entries, 0);
    }

    #[test]
    fn skyline_aph_example() {
        let fp = estimate_resources(AlgorithmShape::SkylineAph { dims: 2, width: 10 }).unwrap();
        assert_eq!(fp.stages, 23); // ceil(log2 2) + 2*(10+1)
        assert_eq!(fp.alus, 31); // 2*ceil(log2 2) - 1 + 10*(2+1)
        assert_eq!(fp.sram_bits, 30 * 64 + (1 << 16) * 32);
        assert_eq!(fp.tcam_entries, 128);
    }

    #[test]
    fn join_bloom_four_megabytes() {
        let fp = estimate_resources(AlgorithmShape::JoinBloom {
            filter_bits: 32 << 20,
            hash_count: 3,
        })
        .unwrap();
        assert_eq!(fp.stages, 2);
        assert_eq!(fp.alus, 3);
        assert_eq!(fp.sram_bits, 32 << 20);
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(64, 3), 41_664);
        assert_eq!(binomial(64, 1), 64);
        assert_eq!(binomial(4, 2), 6);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(4), 2);
        assert_eq!(ceil_log2(5), 3);
    }
}
