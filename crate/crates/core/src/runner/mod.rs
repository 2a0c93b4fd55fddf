//! Exact oracles, master-side completion, and the experiment harness.
