//! Switch-side pruning for database queries, end to end at desk scale.
//!
//! A programmable switch sitting between workers and a master can drop
//! ("prune") entries that provably cannot affect a query's output; the master
//! then completes the query on the survivors and produces the exact result.
//! This crate provides every piece needed to build and validate such a setup
//! in simulation:
//!
//! * [`data`] — the row/column data model, CSV ingestion, and seeded stream
//!   generators.
//! * [`query`] — a small query grammar (`SELECT DISTINCT`, `TOP N`, `JOIN`,
//!   `GROUP BY`/`HAVING`, `SKYLINE OF`, `WHERE`) and predicate formulas.
//! * [`algorithms`] — the pruning state machines: predicate truth tables,
//!   the d×w LRU/FIFO matrix cache, deterministic and randomized top-N,
//!   skyline point stores, group-by extremum sketches, Bloom-filter joins,
//!   and Count-Min backed HAVING.
//! * [`planner`] — closed-form configuration math (matrix sizing, fingerprint
//!   widths, expected pruning bounds), per-algorithm resource footprints, and
//!   greedy multi-query packing onto a pipeline profile.
//! * [`switchsim`] — a match-action pipeline emulator that hosts the same
//!   algorithms under hardware-style constraints (single register access per
//!   packet, bounded ALU slots per stage, TCAM/log-table arithmetic).
//! * [`transport`] — the packet codec, the worker/switch/master reliability
//!   protocol, and a seeded lossy-channel simulator.
//! * [`runner`] — exact query oracles, master-side completion, and the
//!   experiment harness behind the CLI.

pub mod algorithms;
pub mod data;
pub mod hash;
pub mod planner;
pub mod query;
pub mod runner;
pub mod switchsim;
pub mod transport;

pub use data::{Dataset, Entry, Value, ValueKind};
pub use query::{parse_query, Guarantee, PredicateFormula, QueryKind, QuerySpec};
