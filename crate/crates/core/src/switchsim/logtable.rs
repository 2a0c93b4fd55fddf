//! Fixed-point base-2 logarithm via a 2^16-entry lookup table plus a TCAM
//! most-significant-bit search — the switch-friendly way to score products
//! as sums of logarithms.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LogDomainError {
    #[error("log of 0 is undefined")]
    Zero,
}

/// Lookup table mapping `a in 1..2^16` to `round(beta * log2(a))`.
///
/// Entries for a < 2^16 fit in 32 bits when `beta = 2^28` (the default):
/// the largest image is `beta * log2(65535) < 2^32`.
#[derive(Debug, Clone)]
pub struct LogTable {
    beta: u64,
    entries: Vec<u32>,
}

pub const DEFAULT_BETA: u64 = 1 << 28;

impl LogTable {
    pub fn new(beta: u64) -> LogTable {
        let mut entries = vec![0u32; 1 << 16];
        for a in 1usize..(1 << 16) {
            let v = (beta as f64 * (a as f64).log2()).round();
            entries[a] = v as u32;
        }
        LogTable { beta, entries }
    }

    pub fn shared(beta: u64) -> Arc<LogTable> {
        Arc::new(LogTable::new(beta))
    }

    pub fn beta(&self) -> u64 {
        self.beta
    }

    /// Direct table read for `a in 1..2^16`.
    pub fn entry(&self, a: u16) -> u32 {
        debug_assert!(a >= 1);
        self.entries[a as usize]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// The 64-rule longest-prefix TCAM that finds the most significant set bit.
///
/// Rule `i` matches any word whose top bit is at position `i`; rules are
/// scanned from the longest prefix down, exactly as a TCAM would resolve
/// them. Returns `floor(log2(z))`.
#[derive(Debug, Clone)]
pub struct MsbTcam {
    // (prefix value, prefix length) per rule, most-specific first.
    rules: Vec<(u64, u32)>,
}

impl Default for MsbTcam {
    fn default() -> Self {
        Self::new()
    }
}

impl MsbTcam {
    pub fn new() -> MsbTcam {
        // Rule for bit position b: prefix of (63 - b) zero bits followed by a
        // one. Ordered from position 63 down to 0.
        let rules = (0..64)
            .rev()
            .map(|b| {
                let prefix_len = 64 - b as u32;
                let prefix_value = 1u64; // zeros then a one, right-aligned
                (prefix_value, prefix_len)
            })
            .collect();
        MsbTcam { rules }
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// Longest-prefix lookup of `floor(log2(z))`.
    pub fn lookup(&self, z: u64) -> Result<u32, LogDomainError> {
        if z == 0 {
            return Err(LogDomainError::Zero);
        }
        for (i, &(value, len)) in self.rules.iter().enumerate() {
            if z >> (64 - len) == value {
                return Ok(63 - i as u32);
            }
        }
        unreachable!("some prefix always matches a nonzero word")
    }
}

/// `floor(log2(z))` via the TCAM emulation.
pub fn msb_index(z: u64) -> Result<u32, LogDomainError> {
    MsbTcam::new().lookup(z)
}

/// Fixed-point `beta * log2(z)` approximation.
///
/// Values below 2^16 read the table directly; wider values apply the table
/// to the 16 bits starting at the most significant one and add `beta`
/// per skipped power of two.
pub fn approx_log(z: u64, table: &LogTable, tcam: &MsbTcam) -> Result<u64, LogDomainError> {
    let msb = tcam.lookup(z)?;
    if msb <= 15 {
        Ok(table.entry(z as u16) as u64)
    } else {
        let window = (z >> (msb - 15)) as u16; // 16 bits, top bit set
        Ok(table.entry(window) as u64 + table.beta() * (msb as u64 - 15))
    }
}

/// APH score: the sum of approximate logarithms over the dimensions.
/// Dimension value 0 is mapped to 1 before scoring (pruning still uses the
/// exact coordinates, so this costs pruning rate only).
pub fn aph_score(dims: &[u64], table: &LogTable, tcam: &MsbTcam) -> u64 {
    let mut acc = 0u64;
    for &d in dims {
        let z = if d == 0 { 1 } else { d };
        acc = acc.saturating_add(approx_log(z, table, tcam).expect("z >= 1"));
    }
    acc
}
