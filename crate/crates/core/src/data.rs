//! Row/column data model, CSV ingestion, and seeded stream generators.
//!
//! Datasets are immutable after construction and safe to share across
//! threads; the generators are pure functions of their parameters and seed.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::hash::derive_seed;

/// A single column value: unsigned 64-bit integer or bounded UTF-8 string.
///
/// Integers compare numerically, strings bytewise. Only integers (or
/// fingerprints of strings) ever reach the switch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    UInt(u64),
    Str(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::UInt(_) => ValueKind::UInt,
            Value::Str(_) => ValueKind::Str,
        }
    }

    pub fn as_u64(&self) -> Option<u64> {
        match self {
            Value::UInt(v) => Some(*v),
            Value::Str(_) => None,
        }
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::UInt(a), Value::UInt(b)) => a.cmp(b),
            (Value::Str(a), Value::Str(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Value::UInt(_), Value::Str(_)) => Ordering::Less,
            (Value::Str(_), Value::UInt(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::UInt(v) => write!(f, "{v}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    UInt,
    Str,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueKind::UInt => write!(f, "uint"),
            ValueKind::Str => write!(f, "str"),
        }
    }
}

/// One row. `entry_id` doubles as the packet sequence number, so it is dense
/// and strictly increasing in source order within a flow (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Entry {
    pub entry_id: u32,
    pub columns: Vec<Value>,
}

/// An ordered multiset of entries conforming to a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub schema: Vec<(String, ValueKind)>,
    pub rows: Vec<Entry>,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column '{column}' expects {kind}, got '{text}'")]
    KindMismatch {
        line: usize,
        column: String,
        kind: ValueKind,
        text: String,
    },
    #[error("header mismatch: expected '{expected}', found '{found}'")]
    HeaderMismatch { expected: String, found: String },
    #[error("missing header line")]
    MissingHeader,
    #[error("string value contains a comma (quoting is not supported): '{0}'")]
    EmbeddedComma(String),
    #[error("row {row} has {found} columns, schema has {expected}")]
    SchemaWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Dataset {
    /// Build a dataset from raw rows, assigning entry ids 1..=n in order.
    pub fn new(
        schema: Vec<(String, ValueKind)>,
        rows: Vec<Vec<Value>>,
    ) -> Result<Dataset, DataError> {
        let width = schema.len();
        let mut entries = Vec::with_capacity(rows.len());
        for (i, columns) in rows.into_iter().enumerate() {
            if columns.len() != width {
                return Err(DataError::SchemaWidth {
                    row: i + 1,
                    expected: width,
                    found: columns.len(),
                });
            }
            for (value, (name, kind)) in columns.iter().zip(&schema) {
                if value.kind() != *kind {
                    return Err(DataError::KindMismatch {
                        line: i + 1,
                        column: name.clone(),
                        kind: *kind,
                        text: value.to_string(),
                    });
                }
            }
            entries.push(Entry {
                entry_id: (i + 1) as u32,
                columns,
            });
        }
        Ok(Dataset {
            schema,
            rows: entries,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|(n, _)| n == name)
    }

    /// Load a CSV file against a declared schema.
    ///
    /// The first line must be a header matching the schema names exactly.
    /// No quoting dialect: a comma always separates fields.
    pub fn load_csv(
        path: impl AsRef<Path>,
        schema: &[(String, ValueKind)],
    ) -> Result<Dataset, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Dataset::from_csv_str(&text, schema)
    }

    /// Parse CSV text against a declared schema (see [`Dataset::load_csv`]).
    pub fn from_csv_str(
        text: &str,
        schema: &[(String, ValueKind)],
    ) -> Result<Dataset, DataError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(DataError::MissingHeader)?;
        let expected_header = schema
            .iter()
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join(",");
        if header.trim_end() != expected_header {
            return Err(DataError::HeaderMismatch {
                expected: expected_header,
                found: header.to_string(),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2; // 1-based, after the header
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != schema.len() {
                return Err(DataError::FieldCount {
                    line: line_no,
                    expected: schema.len(),
                    found: fields.len(),
                });
            }
            let mut columns = Vec::with_capacity(fields.len());
            for (field, (name, kind)) in fields.iter().zip(schema) {
                let value = match kind {
                    ValueKind::UInt => {
                        Value::UInt(field.trim().parse::<u64>().map_err(|_| {
                            DataError::KindMismatch {
                                line: line_no,
                                column: name.clone(),
                                kind: *kind,
                                text: field.to_string(),
                            }
                        })?)
                    }
                    ValueKind::Str => Value::Str(field.to_string()),
                };
                columns.push(value);
            }
            rows.push(columns);
        }
        Dataset::new(schema.to_vec(), rows)
    }

    /// Render the dataset back to CSV; `from_csv_str` of the output
    /// reproduces an identical dataset.
    pub fn to_csv_string(&self) -> Result<String, DataError> {
        let mut out = String::new();
        let header = self
            .schema
            .iter()
            .map(|(n, _)| n.as_str())
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&header);
        out.push('\n');
        for entry in &self.rows {
            let mut first = true;
            for value in &entry.columns {
                if !first {
                    out.push(',');
                }
                first = false;
                let text = value.to_string();
                if text.contains(',') {
                    return Err(DataError::EmbeddedComma(text));
                }
                out.push_str(&text);
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let text = self.to_csv_string()?;
        std::fs::write(path, text).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Infer a schema from a CSV file: a column is `uint` if every data row
    /// parses as one, otherwise `str`.
    pub fn infer_schema(path: impl AsRef<Path>) -> Result<Vec<(String, ValueKind)>, DataError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut lines = text.lines();
        let header = lines.next().ok_or(DataError::MissingHeader)?;
        let names: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
        let mut numeric = vec![true; names.len()];
        for line in lines {
            if line.is_empty() {
                continue;
            }
            for (i, field) in line.split(',').enumerate() {
                if i < numeric.len() && field.trim().parse::<u64>().is_err() {
                    numeric[i] = false;
                }
            }
        }
        Ok(names
            .into_iter()
            .zip(numeric)
            .map(|(n, is_num)| {
                (
                    n,
                    if is_num {
                        ValueKind::UInt
                    } else {
                        ValueKind::Str
                    },
                )
            })
            .collect())
    }
}

/// Key distribution for [`gen_stream`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeyDist {
    Uniform,
    /// Zipf with exponent `s` over the distinct-key ranks.
    Zipf(f64),
}

/// Generate `n` entries whose `key` column has exactly `distinct` values,
/// with a `value` column uniform over `value_range`. The emitted order is a
/// seeded random permutation, so streams model random-order arrival.
pub fn gen_stream(
    n: usize,
    distinct: usize,
    key_dist: KeyDist,
    value_range: (u64, u64),
    seed: u64,
) -> Result<Dataset, DataError> {
    if distinct > n {
        return Err(DataError::InvalidArgument(format!(
            "distinct count {distinct} exceeds stream length {n}"
        )));
    }
    if n > 0 && distinct == 0 {
        return Err(DataError::InvalidArgument(
            "a non-empty stream needs at least one distinct key".into(),
        ));
    }
    let (lo, hi) = value_range;
    if lo > hi {
        return Err(DataError::InvalidArgument(format!(
            "empty value range {lo}..={hi}"
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "gen_stream", 0));
    // Distinct key pool; keys are >= 1 so identity fingerprints stay clear of
    // the zero sentinel.
    let mut pool = Vec::with_capacity(distinct);
    let mut seen = HashSet::with_capacity(distinct);
    while pool.len() < distinct {
        let k = rng.random_range(1..=u64::MAX);
        if seen.insert(k) {
            pool.push(k);
        }
    }

    let zipf = match key_dist {
        KeyDist::Zipf(s) => Some(
            rand_distr::Zipf::new(distinct as f64, s)
                .map_err(|e| DataError::InvalidArgument(format!("zipf: {e}")))?,
        ),
        KeyDist::Uniform => None,
    };

    let mut keys = Vec::with_capacity(n);
    // Each pool key once, so the distinct count is exact.
    keys.extend_from_slice(&pool);
    for _ in distinct..n {
        let idx = match &zipf {
            None => rng.random_range(0..distinct),
            Some(z) => {
                let rank: f64 = rng.sample(z);
                (rank as usize - 1).min(distinct - 1)
            }
        };
        keys.push(pool[idx]);
    }
    keys.shuffle(&mut rng);

    let rows = keys
        .into_iter()
        .map(|k| vec![Value::UInt(k), Value::UInt(rng.random_range(lo..=hi))])
        .collect();
    Dataset::new(
        vec![
            ("key".to_string(), ValueKind::UInt),
            ("value".to_string(), ValueKind::UInt),
        ],
        rows,
    )
}

/// Generate `n` points with `dims` integer coordinates uniform over
/// `coord_range`, columns named `d0`, `d1`, ...
pub fn gen_points(
    n: usize,
    dims: usize,
    coord_range: (u64, u64),
    seed: u64,
) -> Result<Dataset, DataError> {
    if dims == 0 {
        return Err(DataError::InvalidArgument("dims must be >= 1".into()));
    }
    let (lo, hi) = coord_range;
    if lo > hi {
        return Err(DataError::InvalidArgument(format!(
            "empty coordinate range {lo}..={hi}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "gen_points", 0));
    let rows = (0..n)
        .map(|_| {
            (0..dims)
                .map(|_| Value::UInt(rng.random_range(lo..=hi)))
                .collect()
        })
        .collect();
    let schema = (0..dims)
        .map(|i| (format!("d{i}"), ValueKind::UInt))
        .collect();
    Dataset::new(schema, rows)
}

/// Uniform random permutation of the rows; entry ids are reassigned to the
/// new order. Deterministic given the seed.
pub fn shuffle(dataset: &Dataset, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, "shuffle", 0));
    let mut rows: Vec<Vec<Value>> = dataset.rows.iter().map(|e| e.columns.clone()).collect();
    rows.shuffle(&mut rng);
    Dataset::new(dataset.schema.clone(), rows).expect("rows already conform to schema")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    pub(crate) fn products() -> Dataset {
        let schema = vec![
            ("name".to_string(), ValueKind::Str),
            ("seller".to_string(), ValueKind::Str),
            ("price".to_string(), ValueKind::UInt),
        ];
        let text = "name,seller,price\n\
                    Burger,McCheetah,4\n\
                    Pizza,Papizza,7\n\
                    Fries,McCheetah,2\n\
                    Jello,JellyFish,5\n";
        Dataset::from_csv_str(text, &schema).unwrap()
    }

    #[test]
    fn csv_loads_four_product_rows() {
        let d = products();
        assert_eq!(d.len(), 4);
        assert_eq!(d.rows[0].entry_id, 1);
        assert_eq!(d.rows[3].entry_id, 4);
        assert_eq!(
            d.rows[0].columns,
            vec![
                Value::Str("Burger".into()),
                Value::Str("McCheetah".into()),
                Value::UInt(4)
            ]
        );
        assert_eq!(
            d.rows[3].columns,
            vec![
                Value::Str("Jello".into()),
                Value::Str("JellyFish".into()),
                Value::UInt(5)
            ]
        );
    }

    #[test]
    fn csv_empty_body_gives_zero_rows() {
        let schema = vec![("k".to_string(), ValueKind::UInt)];
        let d = Dataset::from_csv_str("k\n", &schema).unwrap();
        assert_eq!(d.len(), 0);
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let d = products();
        let text = d.to_csv_string().unwrap();
        let back = Dataset::from_csv_str(&text, &d.schema).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let schema = vec![
            ("k".to_string(), ValueKind::UInt),
            ("v".to_string(), ValueKind::UInt),
        ];
        let err = Dataset::from_csv_str("k,v\n1,2\n3\n", &schema).unwrap_err();
        match err {
            DataError::FieldCount { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other}"),
        }
        let err = Dataset::from_csv_str("k,v\n1,x\n", &schema).unwrap_err();
        match err {
            DataError::KindMismatch { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "v");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn gen_stream_distinct_count_is_exact() {
        // Independent hash-set oracle over the key column.
        let d = gen_stream(100_000, 1_000, KeyDist::Zipf(1.1), (0, 1 << 20), 7).unwrap();
        let keys: HashSet<u64> = d
            .rows
            .iter()
            .map(|e| e.columns[0].as_u64().unwrap())
            .collect();
        assert_eq!(keys.len(), 1_000);
        assert_eq!(d.len(), 100_000);
    }

    #[test]
    fn gen_stream_all_distinct() {
        let d = gen_stream(15_000, 15_000, KeyDist::Uniform, (0, 100), 1).unwrap();
        let keys: HashSet<u64> = d
            .rows
            .iter()
            .map(|e| e.columns[0].as_u64().unwrap())
            .collect();
        assert_eq!(keys.len(), 15_000);
    }

    #[test]
    fn gen_stream_single_entry() {
        let d = gen_stream(1, 1, KeyDist::Uniform, (5, 5), 3).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.rows[0].columns[1], Value::UInt(5));
    }

    #[test]
    fn gen_stream_rejects_distinct_above_n() {
        assert!(gen_stream(5, 6, KeyDist::Uniform, (0, 1), 0).is_err());
    }

    #[test]
    fn shuffle_preserves_multiset_and_empty_is_identity() {
        let empty = Dataset::new(vec![("k".to_string(), ValueKind::UInt)], vec![]).unwrap();
        assert_eq!(shuffle(&empty, 1), empty);

        let d = gen_stream(100, 40, KeyDist::Uniform, (0, 9), 11).unwrap();
        let shuffled = shuffle(&d, 42);
        let count = |ds: &Dataset| {
            let mut m: HashMap<Vec<Value>, usize> = HashMap::new();
            for e in &ds.rows {
                *m.entry(e.columns.clone()).or_default() += 1;
            }
            m
        };
        assert_eq!(count(&d), count(&shuffled));
        // ids reassigned densely
        for (i, e) in shuffled.rows.iter().enumerate() {
            assert_eq!(e.entry_id as usize, i + 1);
        }
    }

    #[test]
    fn shuffle_seeds_differ() {
        let d = gen_stream(100, 100, KeyDist::Uniform, (0, 1 << 30), 5).unwrap();
        let a = shuffle(&d, 1);
        let b = shuffle(&d, 2);
        assert_ne!(a.rows, b.rows);
    }
}
