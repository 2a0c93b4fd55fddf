//! Predicate decomposition and truth-table filtering.
//!
//! A monotone WHERE formula splits into a switch part (supported atoms only)
//! and a host-side residual. Unsupported atoms are replaced by a tautology
//! and the tree simplified, so pruning on the switch part can never drop an
//! entry the full predicate accepts.

use crate::query::{Atom, PredicateFormula};

use super::{expect_arity, AlgoError, Decision, EntryView};

/// Split `phi` into a switch-evaluable part and the residual the master
/// re-checks on survivors.
///
/// The switch part is implied by `phi` (monotonicity plus tautology
/// substitution), so `!switch_part(e)` is always safe to prune. The residual
/// is `TRUE` when every atom is supported, otherwise `phi` itself: the
/// master's selection over survivors is then exactly `phi`'s.
pub fn filter_decompose(phi: &PredicateFormula) -> (PredicateFormula, PredicateFormula) {
    let (switch_part, replaced) = strip_unsupported(phi);
    let residual = if replaced {
        phi.clone()
    } else {
        PredicateFormula::True
    };
    (switch_part, residual)
}

fn strip_unsupported(f: &PredicateFormula) -> (PredicateFormula, bool) {
    match f {
        PredicateFormula::True => (PredicateFormula::True, false),
        PredicateFormula::Atom(a) => {
            if a.switch_supported() {
                (PredicateFormula::Atom(a.clone()), false)
            } else {
                (PredicateFormula::True, true)
            }
        }
        PredicateFormula::And(a, b) => {
            let (a, ra) = strip_unsupported(a);
            let (b, rb) = strip_unsupported(b);
            let out = match (a, b) {
                (PredicateFormula::True, x) | (x, PredicateFormula::True) => x,
                (a, b) => PredicateFormula::And(Box::new(a), Box::new(b)),
            };
            (out, ra || rb)
        }
        PredicateFormula::Or(a, b) => {
            let (a, ra) = strip_unsupported(a);
            let (b, rb) = strip_unsupported(b);
            let out = match (a, b) {
                (PredicateFormula::True, _) | (_, PredicateFormula::True) => {
                    PredicateFormula::True
                }
                (a, b) => PredicateFormula::Or(Box::new(a), Box::new(b)),
            };
            (out, ra || rb)
        }
    }
}

/// Switch-side filter configuration: the decomposed switch part plus its
/// compiled form (atom list and truth table).
#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub switch_part: PredicateFormula,
    pub residual: PredicateFormula,
}

impl FilterConfig {
    pub fn from_predicate(phi: &PredicateFormula) -> FilterConfig {
        let (switch_part, residual) = filter_decompose(phi);
        FilterConfig {
            switch_part,
            residual,
        }
    }
}

/// One compiled atom: compare the value in `slot` against a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledAtom {
    pub slot: usize,
    pub op: crate::query::CompareOp,
    pub constant: u64,
}

/// The switch part compiled to (atom evaluations -> bit vector -> truth
/// table lookup). `columns` names the projected wire slots in order.
#[derive(Debug, Clone)]
pub struct CompiledFilter {
    pub columns: Vec<String>,
    pub atoms: Vec<CompiledAtom>,
    pub truth_table: Vec<bool>,
}

const MAX_ATOMS: usize = 16;

impl CompiledFilter {
    pub fn new(cfg: &FilterConfig) -> Result<CompiledFilter, AlgoError> {
        // Unique supported atoms, in first-appearance order; identical atoms
        // share a truth-table variable.
        let mut atoms: Vec<Atom> = Vec::new();
        for a in cfg.switch_part.atoms() {
            debug_assert!(a.switch_supported());
            if !atoms.contains(a) {
                atoms.push(a.clone());
            }
        }
        if atoms.len() > MAX_ATOMS {
            return Err(AlgoError::InvalidConfig(format!(
                "{} switch atoms exceed the {MAX_ATOMS}-variable truth table",
                atoms.len()
            )));
        }
        let mut columns: Vec<String> = Vec::new();
        let mut compiled = Vec::new();
        for atom in &atoms {
            let column = atom.column().to_string();
            let slot = match columns.iter().position(|c| *c == column) {
                Some(s) => s,
                None => {
                    columns.push(column);
                    columns.len() - 1
                }
            };
            match atom {
                Atom::Compare { op, value, .. } => compiled.push(CompiledAtom {
                    slot,
                    op: *op,
                    constant: *value,
                }),
                Atom::Like { .. } => unreachable!("unsupported atom in switch part"),
            }
        }
        let truth_table = (0..1usize << atoms.len())
            .map(|mask| eval_with_assignment(&cfg.switch_part, &atoms, mask))
            .collect();
        Ok(CompiledFilter {
            columns,
            atoms: compiled,
            truth_table,
        })
    }

    /// Wire slots for this filter; a column-free switch part still rides a
    /// single placeholder value (DATA packets carry at least one).
    pub fn wire_arity(&self) -> usize {
        self.columns.len().max(1)
    }

    /// Prune iff the switch part evaluates to false.
    pub fn process(&mut self, view: &EntryView) -> Result<Decision, AlgoError> {
        expect_arity(view, self.wire_arity())?;
        let mut bits = 0usize;
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.op.eval(view.values[atom.slot], atom.constant) {
                bits |= 1 << i;
            }
        }
        if self.truth_table[bits] {
            Ok(Decision::Forward)
        } else {
            Ok(Decision::Prune)
        }
    }
}

fn eval_with_assignment(f: &PredicateFormula, atoms: &[Atom], mask: usize) -> bool {
    match f {
        PredicateFormula::True => true,
        PredicateFormula::Atom(a) => {
            let idx = atoms.iter().position(|x| x == a).expect("atom registered");
            mask & (1 << idx) != 0
        }
        PredicateFormula::And(a, b) => {
            eval_with_assignment(a, atoms, mask) && eval_with_assignment(b, atoms, mask)
        }
        PredicateFormula::Or(a, b) => {
            eval_with_assignment(a, atoms, mask) || eval_with_assignment(b, atoms, mask)
        }
    }
}
