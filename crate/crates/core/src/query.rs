//! Query model and the mini-grammar parser.
//!
//! The supported surface is deliberately small:
//!
//! ```text
//! SELECT [DISTINCT | TOP n] items FROM table
//!     [JOIN table2 ON a = b]
//!     [WHERE formula]
//!     [GROUP BY col [HAVING agg(col) (> | <) n]]
//!     [ORDER BY col]
//!     [SKYLINE OF col, col, ...]
//! ```
//!
//! Anything outside it is rejected loudly, with unsupported-by-design
//! constructs (`HAVING SUM(x) < c` and friends) getting a dedicated error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Entry, Value, ValueKind};

/// Correctness guarantee requested for the pruning run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Guarantee {
    /// Pruning never removes an output-relevant entry, for any input.
    Deterministic,
    /// Output exactness holds with probability at least `1 - delta`.
    Probabilistic(f64),
}

/// Comparison operator in a predicate atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CompareOp {
    pub fn eval(&self, lhs: u64, rhs: u64) -> bool {
        match self {
            CompareOp::Lt => lhs < rhs,
            CompareOp::Le => lhs <= rhs,
            CompareOp::Gt => lhs > rhs,
            CompareOp::Ge => lhs >= rhs,
            CompareOp::Eq => lhs == rhs,
        }
    }

    fn text(&self) -> &'static str {
        match self {
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
            CompareOp::Eq => "=",
        }
    }
}

/// An atomic predicate. Numeric comparisons can run on the switch; `LIKE`
/// (and anything else string-shaped) cannot and stays host-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Atom {
    Compare {
        column: String,
        op: CompareOp,
        value: u64,
    },
    Like {
        column: String,
        pattern: String,
    },
}

impl Atom {
    pub fn switch_supported(&self) -> bool {
        matches!(self, Atom::Compare { .. })
    }

    pub fn column(&self) -> &str {
        match self {
            Atom::Compare { column, .. } | Atom::Like { column, .. } => column,
        }
    }
}

/// A monotone Boolean formula over atoms: AND/OR only, no negation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PredicateFormula {
    True,
    Atom(Atom),
    And(Box<PredicateFormula>, Box<PredicateFormula>),
    Or(Box<PredicateFormula>, Box<PredicateFormula>),
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("column '{0}' not found in schema")]
    UnknownColumn(String),
    #[error("column '{column}' has kind {found}, predicate needs {needed}")]
    KindMismatch {
        column: String,
        found: ValueKind,
        needed: ValueKind,
    },
}

impl PredicateFormula {
    /// Evaluate against an entry under the given schema.
    pub fn eval(
        &self,
        schema: &[(String, ValueKind)],
        entry: &Entry,
    ) -> Result<bool, EvalError> {
        match self {
            PredicateFormula::True => Ok(true),
            PredicateFormula::And(a, b) => Ok(a.eval(schema, entry)? && b.eval(schema, entry)?),
            PredicateFormula::Or(a, b) => Ok(a.eval(schema, entry)? || b.eval(schema, entry)?),
            PredicateFormula::Atom(atom) => {
                let idx = schema
                    .iter()
                    .position(|(n, _)| n == atom.column())
                    .ok_or_else(|| EvalError::UnknownColumn(atom.column().to_string()))?;
                match (atom, &entry.columns[idx]) {
                    (Atom::Compare { op, value, .. }, Value::UInt(v)) => Ok(op.eval(*v, *value)),
                    (Atom::Compare { column, .. }, Value::Str(_)) => {
                        Err(EvalError::KindMismatch {
                            column: column.clone(),
                            found: ValueKind::Str,
                            needed: ValueKind::UInt,
                        })
                    }
                    (Atom::Like { pattern, .. }, Value::Str(s)) => Ok(like_match(pattern, s)),
                    (Atom::Like { column, .. }, Value::UInt(_)) => Err(EvalError::KindMismatch {
                        column: column.clone(),
                        found: ValueKind::UInt,
                        needed: ValueKind::Str,
                    }),
                }
            }
        }
    }

    /// All atoms, left to right.
    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            PredicateFormula::True => {}
            PredicateFormula::Atom(a) => out.push(a),
            PredicateFormula::And(a, b) | PredicateFormula::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    fn render(&self, out: &mut String, parent_or: bool) {
        match self {
            PredicateFormula::True => out.push_str("TRUE"),
            PredicateFormula::Atom(Atom::Compare { column, op, value }) => {
                out.push_str(&format!("{column} {} {value}", op.text()));
            }
            PredicateFormula::Atom(Atom::Like { column, pattern }) => {
                out.push_str(&format!("{column} LIKE '{pattern}'"));
            }
            PredicateFormula::And(a, b) => {
                for (i, side) in [a, b].into_iter().enumerate() {
                    if i > 0 {
                        out.push_str(" AND ");
                    }
                    let needs_parens = matches!(**side, PredicateFormula::Or(..));
                    if needs_parens {
                        out.push('(');
                    }
                    side.render(out, false);
                    if needs_parens {
                        out.push(')');
                    }
                }
            }
            PredicateFormula::Or(a, b) => {
                if parent_or {
                    out.push('(');
                }
                a.render(out, true);
                out.push_str(" OR ");
                b.render(out, true);
                if parent_or {
                    out.push(')');
                }
            }
        }
    }
}

/// `%` matches any sequence, `_` any single character; bytewise.
pub fn like_match(pattern: &str, text: &str) -> bool {
    let p: Vec<u8> = pattern.bytes().collect();
    let t: Vec<u8> = text.bytes().collect();
    // DP over (pattern position, text position).
    let mut dp = vec![vec![false; t.len() + 1]; p.len() + 1];
    dp[0][0] = true;
    for i in 1..=p.len() {
        if p[i - 1] == b'%' {
            dp[i][0] = dp[i - 1][0];
        }
    }
    for i in 1..=p.len() {
        for j in 1..=t.len() {
            dp[i][j] = match p[i - 1] {
                b'%' => dp[i - 1][j] || dp[i][j - 1],
                b'_' => dp[i - 1][j - 1],
                c => dp[i - 1][j - 1] && c == t[j - 1],
            };
        }
    }
    dp[p.len()][t.len()]
}

/// What the select clause asks for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Projection {
    All,
    Columns(Vec<String>),
    /// `SELECT COUNT()` — the master reports a row count.
    Count,
}

/// MAX or MIN, for group-by aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremum {
    Max,
    Min,
}

/// Aggregate + direction in a HAVING clause. Directions are fixed by what a
/// single entry can witness: `MIN(x) < c`, `MAX(x) > c`, `SUM(x) > c`,
/// `COUNT() > c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HavingAggregate {
    Min { value_column: String },
    Max { value_column: String },
    Sum { value_column: String },
    Count,
}

impl HavingAggregate {
    pub fn value_column(&self) -> Option<&str> {
        match self {
            HavingAggregate::Min { value_column }
            | HavingAggregate::Max { value_column }
            | HavingAggregate::Sum { value_column } => Some(value_column),
            HavingAggregate::Count => None,
        }
    }
}

/// The query kinds the pruning pipeline understands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QueryKind {
    Filter {
        table: String,
        projection: Projection,
        predicate: PredicateFormula,
    },
    Distinct {
        table: String,
        key_columns: Vec<String>,
    },
    TopN {
        table: String,
        n: u64,
        order_column: String,
        projection: Projection,
    },
    Skyline {
        table: String,
        projection: Projection,
        dimensions: Vec<String>,
    },
    GroupByExtremum {
        table: String,
        key_column: String,
        value_column: String,
        direction: Extremum,
    },
    Join {
        left_table: String,
        right_table: String,
        left_column: String,
        right_column: String,
    },
    Having {
        table: String,
        key_column: String,
        aggregate: HavingAggregate,
        threshold: u64,
    },
}

/// A parsed query plus the requested guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub kind: QueryKind,
    pub guarantee: Guarantee,
}

impl QuerySpec {
    pub fn deterministic(kind: QueryKind) -> Result<Self, QueryError> {
        let spec = QuerySpec {
            kind,
            guarantee: Guarantee::Deterministic,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_guarantee(mut self, guarantee: Guarantee) -> Result<Self, QueryError> {
        self.guarantee = guarantee;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if let Guarantee::Probabilistic(delta) = self.guarantee {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(QueryError::Invalid(format!(
                    "probabilistic guarantee needs 0 < delta < 1, got {delta}"
                )));
            }
        }
        match &self.kind {
            QueryKind::TopN { n, .. } if *n == 0 => {
                Err(QueryError::Invalid("TOP N requires N >= 1".into()))
            }
            QueryKind::Skyline { dimensions, .. } if dimensions.len() < 2 => Err(
                QueryError::Invalid("SKYLINE OF requires at least 2 dimensions".into()),
            ),
            QueryKind::Distinct { key_columns, .. } if key_columns.is_empty() => {
                Err(QueryError::Invalid("DISTINCT requires key columns".into()))
            }
            _ => Ok(()),
        }
    }

    /// Render back to query text; `parse_query(render(q)) == q`.
    pub fn render(&self) -> String {
        fn proj(p: &Projection) -> String {
            match p {
                Projection::All => "*".to_string(),
                Projection::Columns(cols) => cols.join(", "),
                Projection::Count => "COUNT()".to_string(),
            }
        }
        match &self.kind {
            QueryKind::Filter {
                table,
                projection,
                predicate,
            } => {
                let mut phi = String::new();
                predicate.render(&mut phi, false);
                format!("SELECT {} FROM {table} WHERE {phi}", proj(projection))
            }
            QueryKind::Distinct { table, key_columns } => {
                format!("SELECT DISTINCT {} FROM {table}", key_columns.join(", "))
            }
            QueryKind::TopN {
                table,
                n,
                order_column,
                projection,
            } => format!(
                "SELECT TOP {n} {} FROM {table} ORDER BY {order_column}",
                proj(projection)
            ),
            QueryKind::Skyline {
                table,
                projection,
                dimensions,
            } => format!(
                "SELECT {} FROM {table} SKYLINE OF {}",
                proj(projection),
                dimensions.join(", ")
            ),
            QueryKind::GroupByExtremum {
                table,
                key_column,
                value_column,
                direction,
            } => {
                let agg = match direction {
                    Extremum::Max => "MAX",
                    Extremum::Min => "MIN",
                };
                format!(
                    "SELECT {key_column}, {agg}({value_column}) FROM {table} GROUP BY {key_column}"
                )
            }
            QueryKind::Join {
                left_table,
                right_table,
                left_column,
                right_column,
            } => format!(
                "SELECT * FROM {left_table} JOIN {right_table} ON {left_table}.{left_column} = {right_table}.{right_column}"
            ),
            QueryKind::Having {
                table,
                key_column,
                aggregate,
                threshold,
            } => {
                let (name, dir, col) = match aggregate {
                    HavingAggregate::Min { value_column } => ("MIN", "<", value_column.as_str()),
                    HavingAggregate::Max { value_column } => ("MAX", ">", value_column.as_str()),
                    HavingAggregate::Sum { value_column } => ("SUM", ">", value_column.as_str()),
                    HavingAggregate::Count => ("COUNT", ">", ""),
                };
                format!(
                    "SELECT {key_column} FROM {table} GROUP BY {key_column} HAVING {name}({col}) {dir} {threshold}"
                )
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unsupported by design: {0}")]
    Unsupported(String),
    #[error("invalid query: {0}")]
    Invalid(String),
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(u64),
    Str(String),
    Comma,
    LParen,
    RParen,
    Star,
    Dot,
    Cmp(CompareOp),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b',' => {
                toks.push(Token {
                    tok: Tok::Comma,
                    pos: i,
                });
                i += 1;
            }
            b'(' => {
                toks.push(Token {
                    tok: Tok::LParen,
                    pos: i,
                });
                i += 1;
            }
            b')' => {
                toks.push(Token {
                    tok: Tok::RParen,
                    pos: i,
                });
                i += 1;
            }
            b'*' => {
                toks.push(Token {
                    tok: Tok::Star,
                    pos: i,
                });
                i += 1;
            }
            b'.' => {
                toks.push(Token {
                    tok: Tok::Dot,
                    pos: i,
                });
                i += 1;
            }
            b'<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    toks.push(Token {
                        tok: Tok::Cmp(CompareOp::Le),
                        pos: i,
                    });
                    i += 2;
                } else {
                    toks.push(Token {
                        tok: Tok::Cmp(CompareOp::Lt),
                        pos: i,
                    });
                    i += 1;
                }
            }
            b'>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    toks.push(Token {
                        tok: Tok::Cmp(CompareOp::Ge),
                        pos: i,
                    });
                    i += 2;
                } else {
                    toks.push(Token {
                        tok: Tok::Cmp(CompareOp::Gt),
                        pos: i,
                    });
                    i += 1;
                }
            }
            b'=' => {
                toks.push(Token {
                    tok: Tok::Cmp(CompareOp::Eq),
                    pos: i,
                });
                i += 1;
            }
            b'\'' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(QueryError::Syntax {
                            position: start,
                            message: "unterminated string literal".into(),
                        });
                    }
                    if bytes[i] == b'\'' {
                        i += 1;
                        break;
                    }
                    s.push(bytes[i] as char);
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Str(s),
                    pos: start,
                });
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let num: u64 = text[start..i].parse().map_err(|_| QueryError::Syntax {
                    position: start,
                    message: format!("integer out of range: {}", &text[start..i]),
                })?;
                toks.push(Token {
                    tok: Tok::Number(num),
                    pos: start,
                });
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push(Token {
                    tok: Tok::Ident(text[start..i].to_string()),
                    pos: start,
                });
            }
            other => {
                return Err(QueryError::Syntax {
                    position: i,
                    message: format!("unexpected character '{}'", other as char),
                })
            }
        }
    }
    toks.push(Token {
        tok: Tok::Eof,
        pos: text.len(),
    });
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum SelectItem {
    Star,
    Column(String),
    Agg(String, Option<String>), // name, argument column
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax {
            position: self.peek().pos,
            message: message.into(),
        })
    }

    /// Consume an identifier; if it is a keyword, fail.
    fn ident(&mut self, what: &str) -> Result<String, QueryError> {
        match self.peek().tok.clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), QueryError> {
        match &self.peek().tok {
            Tok::Ident(s) if s.eq_ignore_ascii_case(kw) => {
                self.bump();
                Ok(())
            }
            _ => self.err(format!("expected keyword {kw}")),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn number(&mut self, what: &str) -> Result<u64, QueryError> {
        match self.peek().tok {
            Tok::Number(n) => {
                self.bump();
                Ok(n)
            }
            _ => self.err(format!("expected {what}")),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), QueryError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn select_items(&mut self) -> Result<Vec<SelectItem>, QueryError> {
        let mut items = Vec::new();
        loop {
            match self.peek().tok.clone() {
                Tok::Star => {
                    self.bump();
                    items.push(SelectItem::Star);
                }
                Tok::Ident(s) if is_agg_name(&s) => {
                    self.bump();
                    self.expect(Tok::LParen, "'(' after aggregate")?;
                    let arg = if self.peek().tok == Tok::RParen {
                        None
                    } else {
                        Some(self.ident("aggregate argument column")?)
                    };
                    self.expect(Tok::RParen, "')'")?;
                    items.push(SelectItem::Agg(s.to_ascii_uppercase(), arg));
                }
                Tok::Ident(s) if !is_keyword(&s) => {
                    self.bump();
                    items.push(SelectItem::Column(s));
                }
                _ => return self.err("expected select item"),
            }
            if self.peek().tok == Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok(items)
    }

    /// `table.column` or bare `column`.
    fn qualified_column(&mut self) -> Result<(Option<String>, String), QueryError> {
        let first = self.ident("column")?;
        if self.peek().tok == Tok::Dot {
            self.bump();
            let col = self.ident("column after '.'")?;
            Ok((Some(first), col))
        } else {
            Ok((None, first))
        }
    }

    fn formula(&mut self) -> Result<PredicateFormula, QueryError> {
        let mut lhs = self.term()?;
        while self.at_keyword("OR") {
            self.bump();
            let rhs = self.term()?;
            lhs = PredicateFormula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<PredicateFormula, QueryError> {
        let mut lhs = self.factor()?;
        while self.at_keyword("AND") {
            self.bump();
            let rhs = self.factor()?;
            lhs = PredicateFormula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<PredicateFormula, QueryError> {
        if self.peek().tok == Tok::LParen {
            self.bump();
            let inner = self.formula()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(inner);
        }
        if self.at_keyword("TRUE") {
            self.bump();
            return Ok(PredicateFormula::True);
        }
        let column = self.ident("predicate column")?;
        if self.at_keyword("LIKE") {
            self.bump();
            match self.peek().tok.clone() {
                Tok::Str(pattern) => {
                    self.bump();
                    Ok(PredicateFormula::Atom(Atom::Like { column, pattern }))
                }
                _ => self.err("expected quoted pattern after LIKE"),
            }
        } else if let Tok::Cmp(op) = self.peek().tok {
            self.bump();
            let value = self.number("comparison constant")?;
            Ok(PredicateFormula::Atom(Atom::Compare { column, op, value }))
        } else {
            self.err("expected comparison or LIKE")
        }
    }
}

fn is_agg_name(s: &str) -> bool {
    ["MAX", "MIN", "SUM", "COUNT"]
        .iter()
        .any(|k| s.eq_ignore_ascii_case(k))
}

fn is_keyword(s: &str) -> bool {
    [
        "SELECT", "DISTINCT", "TOP", "FROM", "JOIN", "ON", "WHERE", "GROUP", "BY", "HAVING",
        "ORDER", "SKYLINE", "OF", "AND", "OR", "LIKE", "TRUE",
    ]
    .iter()
    .any(|k| s.eq_ignore_ascii_case(k))
}

/// Parse query text into a [`QuerySpec`] (deterministic guarantee by
/// default; see [`QuerySpec::with_guarantee`]).
pub fn parse_query(text: &str) -> Result<QuerySpec, QueryError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, at: 0 };
    p.keyword("SELECT")?;

    let mut distinct = false;
    let mut top_n: Option<u64> = None;
    if p.at_keyword("DISTINCT") {
        p.bump();
        distinct = true;
    } else if p.at_keyword("TOP") {
        p.bump();
        top_n = Some(p.number("N after TOP")?);
    }

    let items = p.select_items()?;
    p.keyword("FROM")?;
    let table = p.ident("table name")?;

    // Optional clauses.
    let mut join: Option<(String, (Option<String>, String), (Option<String>, String))> = None;
    let mut predicate: Option<PredicateFormula> = None;
    let mut group_by: Option<String> = None;
    let mut having: Option<(String, Option<String>, CompareOp, u64, usize)> = None;
    let mut order_by: Option<String> = None;
    let mut skyline: Option<Vec<String>> = None;

    if p.at_keyword("JOIN") {
        p.bump();
        let right = p.ident("join table")?;
        p.keyword("ON")?;
        let a = p.qualified_column()?;
        p.expect(Tok::Cmp(CompareOp::Eq), "'=' in join condition")?;
        let b = p.qualified_column()?;
        join = Some((right, a, b));
    }
    if p.at_keyword("WHERE") {
        p.bump();
        predicate = Some(p.formula()?);
    }
    if p.at_keyword("GROUP") {
        p.bump();
        p.keyword("BY")?;
        group_by = Some(p.ident("group-by column")?);
        if p.at_keyword("HAVING") {
            let having_pos = p.peek().pos;
            p.bump();
            let agg = match p.peek().tok.clone() {
                Tok::Ident(s) if is_agg_name(&s) => {
                    p.bump();
                    s.to_ascii_uppercase()
                }
                _ => return p.err("expected aggregate (MIN/MAX/SUM/COUNT) after HAVING"),
            };
            p.expect(Tok::LParen, "'(' after aggregate")?;
            let arg = if p.peek().tok == Tok::RParen {
                None
            } else {
                Some(p.ident("aggregate argument column")?)
            };
            p.expect(Tok::RParen, "')'")?;
            let op = match p.peek().tok {
                Tok::Cmp(op @ (CompareOp::Gt | CompareOp::Lt)) => {
                    p.bump();
                    op
                }
                _ => return p.err("expected '>' or '<' after HAVING aggregate"),
            };
            let threshold = p.number("HAVING threshold")?;
            having = Some((agg, arg, op, threshold, having_pos));
        }
    }
    if p.at_keyword("ORDER") {
        p.bump();
        p.keyword("BY")?;
        order_by = Some(p.ident("order-by column")?);
    }
    if p.at_keyword("SKYLINE") {
        p.bump();
        p.keyword("OF")?;
        let mut dims = vec![p.ident("skyline dimension")?];
        while p.peek().tok == Tok::Comma {
            p.bump();
            dims.push(p.ident("skyline dimension")?);
        }
        skyline = Some(dims);
    }
    if p.peek().tok != Tok::Eof {
        return p.err("unexpected trailing input");
    }

    let projection_of = |items: &[SelectItem]| -> Result<Projection, QueryError> {
        if items.len() == 1 {
            match &items[0] {
                SelectItem::Star => return Ok(Projection::All),
                SelectItem::Agg(name, None) if name == "COUNT" => return Ok(Projection::Count),
                _ => {}
            }
        }
        let mut cols = Vec::new();
        for item in items {
            match item {
                SelectItem::Column(c) => cols.push(c.clone()),
                _ => {
                    return Err(QueryError::Invalid(
                        "select list mixes aggregates and columns in an unsupported way".into(),
                    ))
                }
            }
        }
        Ok(Projection::Columns(cols))
    };

    // Classify.
    let kind = if distinct {
        if join.is_some() || predicate.is_some() || group_by.is_some() || skyline.is_some() {
            return Err(QueryError::Invalid(
                "DISTINCT cannot be combined with other clauses".into(),
            ));
        }
        let key_columns = match projection_of(&items)? {
            Projection::Columns(cols) => cols,
            _ => {
                return Err(QueryError::Invalid(
                    "DISTINCT requires named key columns".into(),
                ))
            }
        };
        QueryKind::Distinct { table, key_columns }
    } else if let Some(n) = top_n {
        let order_column = order_by.ok_or_else(|| {
            QueryError::Invalid("TOP N requires an ORDER BY column".into())
        })?;
        if join.is_some() || predicate.is_some() || group_by.is_some() || skyline.is_some() {
            return Err(QueryError::Invalid(
                "TOP N cannot be combined with other clauses".into(),
            ));
        }
        QueryKind::TopN {
            table,
            n,
            order_column,
            projection: projection_of(&items)?,
        }
    } else if let Some(dims) = skyline {
        if join.is_some() || predicate.is_some() || group_by.is_some() || order_by.is_some() {
            return Err(QueryError::Invalid(
                "SKYLINE OF cannot be combined with other clauses".into(),
            ));
        }
        QueryKind::Skyline {
            table,
            projection: projection_of(&items)?,
            dimensions: dims,
        }
    } else if let Some((right_table, a, b)) = join {
        if predicate.is_some() || group_by.is_some() || order_by.is_some() {
            return Err(QueryError::Invalid(
                "JOIN cannot be combined with other clauses".into(),
            ));
        }
        if !matches!(projection_of(&items)?, Projection::All) {
            return Err(QueryError::Invalid("JOIN supports SELECT * only".into()));
        }
        // Resolve qualified sides onto (left, right) tables.
        let resolve = |(qual, col): (Option<String>, String),
                       left: &str,
                       right: &str|
         -> Result<(bool, String), QueryError> {
            match qual {
                None => Ok((true, col)), // unqualified: position decides
                Some(t) if t == left => Ok((true, col)),
                Some(t) if t == right => Ok((false, col)),
                Some(t) => Err(QueryError::Invalid(format!(
                    "join condition references unknown table '{t}'"
                ))),
            }
        };
        let (a_is_left, a_col) = resolve(a, &table, &right_table)?;
        let (b_is_left, b_col) = resolve(b, &table, &right_table)?;
        let (left_column, right_column) = match (a_is_left, b_is_left) {
            (true, true) => (a_col, b_col), // both unqualified: first is left
            (true, false) => (a_col, b_col),
            (false, true) => (b_col, a_col),
            (false, false) => {
                return Err(QueryError::Invalid(
                    "join condition must reference both tables".into(),
                ))
            }
        };
        QueryKind::Join {
            left_table: table,
            right_table,
            left_column,
            right_column,
        }
    } else if let Some(key_column) = group_by {
        if let Some((agg, arg, op, threshold, pos)) = having {
            let aggregate = match (agg.as_str(), op) {
                ("MIN", CompareOp::Lt) => HavingAggregate::Min {
                    value_column: arg.ok_or_else(|| {
                        QueryError::Invalid("MIN needs an argument column".into())
                    })?,
                },
                ("MAX", CompareOp::Gt) => HavingAggregate::Max {
                    value_column: arg.ok_or_else(|| {
                        QueryError::Invalid("MAX needs an argument column".into())
                    })?,
                },
                ("SUM", CompareOp::Gt) => HavingAggregate::Sum {
                    value_column: arg.ok_or_else(|| {
                        QueryError::Invalid("SUM needs an argument column".into())
                    })?,
                },
                ("COUNT", CompareOp::Gt) => HavingAggregate::Count,
                ("SUM" | "COUNT", CompareOp::Lt) => {
                    return Err(QueryError::Unsupported(format!(
                        "HAVING {agg}(..) < c at byte {pos}: supporting the '<' direction is \
                         deferred; a single entry can only witness the '>' side"
                    )))
                }
                ("MIN", CompareOp::Gt) | ("MAX", CompareOp::Lt) => {
                    return Err(QueryError::Unsupported(format!(
                        "HAVING {agg} with that direction cannot be checked per entry; use \
                         MIN(x) < c or MAX(x) > c"
                    )))
                }
                _ => {
                    return Err(QueryError::Invalid(format!(
                        "unsupported HAVING aggregate {agg}"
                    )))
                }
            };
            match projection_of(&items)? {
                Projection::Columns(cols) if cols == vec![key_column.clone()] => {}
                _ => {
                    return Err(QueryError::Invalid(
                        "HAVING queries must select exactly the group-by column".into(),
                    ))
                }
            }
            QueryKind::Having {
                table,
                key_column,
                aggregate,
                threshold,
            }
        } else {
            // Plain GROUP BY: select must be `key, MAX(col)` / `key, MIN(col)`
            // (or just the aggregate).
            let mut direction = None;
            let mut value_column = None;
            let mut key_ok = false;
            for item in &items {
                match item {
                    SelectItem::Column(c) if *c == key_column => key_ok = true,
                    SelectItem::Agg(name, Some(arg)) if name == "MAX" || name == "MIN" => {
                        if direction.is_some() {
                            return Err(QueryError::Invalid(
                                "GROUP BY supports a single MAX/MIN aggregate".into(),
                            ));
                        }
                        direction = Some(if name == "MAX" {
                            Extremum::Max
                        } else {
                            Extremum::Min
                        });
                        value_column = Some(arg.clone());
                    }
                    _ => {
                        return Err(QueryError::Invalid(
                            "GROUP BY select list must be the key and one MAX/MIN aggregate"
                                .into(),
                        ))
                    }
                }
            }
            let _ = key_ok;
            let (direction, value_column) = match (direction, value_column) {
                (Some(d), Some(v)) => (d, v),
                _ => {
                    return Err(QueryError::Invalid(
                        "GROUP BY requires a MAX/MIN aggregate in the select list".into(),
                    ))
                }
            };
            QueryKind::GroupByExtremum {
                table,
                key_column,
                value_column,
                direction,
            }
        }
    } else if let Some(predicate) = predicate {
        QueryKind::Filter {
            table,
            projection: projection_of(&items)?,
            predicate,
        }
    } else {
        return Err(QueryError::Invalid(
            "query names no supported operation (DISTINCT/TOP/JOIN/WHERE/GROUP BY/SKYLINE)"
                .into(),
        ));
    };

    QuerySpec::deterministic(kind)
}
