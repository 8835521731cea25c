//! Static `where` constraints, the classifier constraint, and the graded
//! fitness signal used by evolution.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::grammar::{RowRecord, Value};
use crate::ml::Classifier;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("constraint references <{0}>, which is not a column of the row")]
    SchemaMismatch(String),
    #[error("type error in `{constraint}`: {message}")]
    Type { constraint: String, message: String },
    #[error("cannot encode row: {0}")]
    Encoding(String),
}

/// Syntax error inside a `where` clause.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Le => "<=",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn holds<T: PartialOrd>(self, a: &T, b: &T) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Ref(String),
    Number(f64),
    Str(String),
    Bool(bool),
    Int(Box<Expr>),
    Float(Box<Expr>),
    ToStr(Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Val {
    Num(f64),
    Str(String),
    Bool(bool),
}

impl Val {
    fn kind(&self) -> &'static str {
        match self {
            Val::Num(_) => "number",
            Val::Str(_) => "string",
            Val::Bool(_) => "boolean",
        }
    }
}

impl Expr {
    fn collect_refs(&self, out: &mut Vec<String>) {
        match self {
            Expr::Ref(n) => {
                if !out.contains(n) {
                    out.push(n.clone());
                }
            }
            Expr::Number(_) | Expr::Str(_) | Expr::Bool(_) => {}
            Expr::Int(e) | Expr::Float(e) | Expr::ToStr(e) | Expr::Not(e) => e.collect_refs(out),
            Expr::Cmp(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
        }
    }

    fn eval(&self, row: &RowRecord, src: &dyn Fn() -> String) -> Result<Val, ConstraintError> {
        let type_err = |message: String| ConstraintError::Type { constraint: src(), message };
        Ok(match self {
            Expr::Ref(n) => match row.get(n) {
                Some(Value::Number(v)) => Val::Num(*v),
                Some(Value::Category(s)) => Val::Str(s.clone()),
                None => return Err(ConstraintError::SchemaMismatch(n.clone())),
            },
            Expr::Number(v) => Val::Num(*v),
            Expr::Str(s) => Val::Str(s.clone()),
            Expr::Bool(b) => Val::Bool(*b),
            Expr::Int(e) | Expr::Float(e) => {
                let v = match e.eval(row, src)? {
                    Val::Num(v) => v,
                    Val::Str(s) => s
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| type_err(format!("cannot convert {s:?} to a number")))?,
                    Val::Bool(b) => f64::from(u8::from(b)),
                };
                Val::Num(if matches!(self, Expr::Int(_)) { v.trunc() } else { v })
            }
            Expr::ToStr(e) => match e.eval(row, src)? {
                Val::Num(v) => Val::Str(v.to_string()),
                Val::Str(s) => Val::Str(s),
                Val::Bool(b) => Val::Str(b.to_string()),
            },
            Expr::Cmp(op, a, b) => {
                let (a, b) = (a.eval(row, src)?, b.eval(row, src)?);
                Val::Bool(match (&a, &b) {
                    (Val::Num(x), Val::Num(y)) => op.holds(x, y),
                    (Val::Str(x), Val::Str(y)) => op.holds(x, y),
                    (Val::Bool(x), Val::Bool(y)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => op.holds(x, y),
                    _ => return Err(type_err(format!("cannot compare {} with {}", a.kind(), b.kind()))),
                })
            }
            Expr::And(a, b) => Val::Bool(a.eval_bool(row, src)? && b.eval_bool(row, src)?),
            Expr::Or(a, b) => Val::Bool(a.eval_bool(row, src)? || b.eval_bool(row, src)?),
            Expr::Not(e) => Val::Bool(!e.eval_bool(row, src)?),
        })
    }

    fn eval_bool(&self, row: &RowRecord, src: &dyn Fn() -> String) -> Result<bool, ConstraintError> {
        match self.eval(row, src)? {
            Val::Bool(b) => Ok(b),
            other => Err(ConstraintError::Type {
                constraint: src(),
                message: format!("expected a boolean, found a {}", other.kind()),
            }),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Not(_) => 3,
            Expr::Cmp(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Ref(n) => write!(f, "<{n}>"),
            Expr::Number(v) => write!(f, "{v}"),
            Expr::Str(s) => write!(f, "'{}'", s.escape_default()),
            Expr::Bool(b) => write!(f, "{}", if *b { "True" } else { "False" }),
            Expr::Int(e) => write!(f, "int({e})"),
            Expr::Float(e) => write!(f, "float({e})"),
            Expr::ToStr(e) => write!(f, "str({e})"),
            Expr::Cmp(op, a, b) => {
                wrap(f, a, 5)?;
                write!(f, " {} ", op.symbol())?;
                wrap(f, b, 5)
            }
            Expr::And(a, b) => {
                wrap(f, a, 2)?;
                write!(f, " & ")?;
                wrap(f, b, 3)
            }
            Expr::Or(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " | ")?;
                wrap(f, b, 2)
            }
            Expr::Not(e) => {
                write!(f, "not ")?;
                wrap(f, e, 3)
            }
        }
    }
}

/// One conjunct of a `where` clause.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticConstraint {
    expr: Expr,
    source: String,
}

impl StaticConstraint {
    pub fn new(expr: Expr) -> Self {
        let source = expr.to_string();
        StaticConstraint { expr, source }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// Canonical text of the constraint.
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn references(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.expr.collect_refs(&mut out);
        out
    }

    pub fn eval(&self, row: &RowRecord) -> Result<bool, ConstraintError> {
        self.expr.eval_bool(row, &|| self.source.clone())
    }

    /// Credit in `[0, 1]`: 1 when satisfied; for a violated numeric
    /// comparison `x op c` (other than `!=`), `1 / (1 + |x - c| / max(1, |c|))`;
    /// otherwise 0.
    pub fn credit(&self, row: &RowRecord) -> Result<f64, ConstraintError> {
        if self.eval(row)? {
            return Ok(1.0);
        }
        let src = || self.source.clone();
        if let Expr::Cmp(op, a, b) = &self.expr {
            if *op != CmpOp::Ne {
                if let (Val::Num(x), Val::Num(c)) = (a.eval(row, &src)?, b.eval(row, &src)?) {
                    return Ok(1.0 / (1.0 + (x - c).abs() / c.abs().max(1.0)));
                }
            }
        }
        Ok(0.0)
    }
}

impl fmt::Display for StaticConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Maps a row to the numeric feature vector a classifier consumes.
pub trait RowEncoder: Send + Sync {
    fn encode_row(&self, row: &RowRecord) -> Result<Vec<f64>, String>;
}

/// Satisfied when the frozen model predicts the target class for a row.
#[derive(Clone)]
pub struct ClassifierConstraint {
    pub model: Arc<dyn Classifier>,
    pub target: usize,
}

impl fmt::Debug for ClassifierConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClassifierConstraint").field("target", &self.target).finish_non_exhaustive()
    }
}

impl ClassifierConstraint {
    pub fn new(model: Arc<dyn Classifier>, target: usize) -> Self {
        ClassifierConstraint { model, target }
    }

    pub fn eval(&self, row: &RowRecord, encoder: &dyn RowEncoder) -> Result<bool, ConstraintError> {
        let x = encoder.encode_row(row).map_err(ConstraintError::Encoding)?;
        Ok(self.model.predict_one(&x) == self.target)
    }
}

/// Fraction of constraints satisfied, in `[0, 1]`; exactly 1.0 only when
/// every constraint holds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FitnessScore(f64);

impl FitnessScore {
    pub const PERFECT: FitnessScore = FitnessScore(1.0);
    pub const ZERO: FitnessScore = FitnessScore(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_perfect(self) -> bool {
        self.0 == 1.0
    }
}

/// Largest score an individual with an unmet constraint can reach.
const BELOW_PERFECT: f64 = 1.0 - f64::EPSILON / 2.0;

/// Scores a row against the static constraints and, optionally, the
/// classifier constraint (which counts once and earns no partial credit).
pub fn fitness(
    row: &RowRecord,
    statics: &[StaticConstraint],
    classifier: Option<(&ClassifierConstraint, &dyn RowEncoder)>,
) -> Result<FitnessScore, ConstraintError> {
    let mut total = 0usize;
    let mut credit = 0.0;
    let mut all = true;
    for c in statics {
        total += 1;
        let x = c.credit(row)?;
        all &= x == 1.0 && c.eval(row)?;
        credit += x;
    }
    if let Some((constraint, encoder)) = classifier {
        total += 1;
        if constraint.eval(row, encoder)? {
            credit += 1.0;
        } else {
            all = false;
        }
    }
    if total == 0 || all {
        return Ok(FitnessScore::PERFECT);
    }
    Ok(FitnessScore((credit / total as f64).min(BELOW_PERFECT)))
}

/// Parses the body of a `where` clause. Top-level conjunctions are split
/// into separate constraints.
pub fn parse_where_clause(text: &str, line: usize) -> Result<Vec<StaticConstraint>, ClauseError> {
    let tokens = lex(text, line)?;
    let mut parser = ExprParser { tokens: &tokens, pos: 0, line };
    let mut out = Vec::new();
    while parser.peek().is_some() {
        let expr = parser.or()?;
        match parser.peek() {
            None => {}
            Some(Tok::Semi) => parser.pos += 1,
            Some(t) => return Err(parser.error(format!("unexpected {t:?}"))),
        }
        split_conjuncts(expr, &mut out);
    }
    if out.is_empty() {
        return Err(ClauseError { line, message: "empty where clause".into() });
    }
    Ok(out)
}

fn split_conjuncts(expr: Expr, out: &mut Vec<StaticConstraint>) {
    match expr {
        Expr::And(a, b) => {
            split_conjuncts(*a, out);
            split_conjuncts(*b, out);
        }
        e => out.push(StaticConstraint::new(e)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ref(String),
    Num(f64),
    Str(String),
    Ident(String),
    Cmp(CmpOp),
    And,
    Or,
    Not,
    LParen,
    RParen,
    Semi,
}

fn lex(text: &str, first_line: usize) -> Result<Vec<(Tok, usize)>, ClauseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut line = first_line;
    let mut i = 0;
    let err = |line: usize, m: String| ClauseError { line, message: m };
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let tok = match c {
            '\n' => {
                line += 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '<' if next.is_some_and(|n| n.is_alphabetic() || n == '_') => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '-') {
                    j += 1;
                }
                if chars.get(j) != Some(&'>') {
                    return Err(err(line, "malformed nonterminal reference".into()));
                }
                let name = chars[i + 1..j].iter().collect();
                i = j + 1;
                out.push((Tok::Ref(name), line));
                continue;
            }
            '<' if next == Some('=') => (Tok::Cmp(CmpOp::Le), 2),
            '<' => (Tok::Cmp(CmpOp::Lt), 1),
            '>' if next == Some('=') => (Tok::Cmp(CmpOp::Ge), 2),
            '>' => (Tok::Cmp(CmpOp::Gt), 1),
            '≤' => (Tok::Cmp(CmpOp::Le), 1),
            '≥' => (Tok::Cmp(CmpOp::Ge), 1),
            '≠' => (Tok::Cmp(CmpOp::Ne), 1),
            '=' if next == Some('=') => (Tok::Cmp(CmpOp::Eq), 2),
            '=' => (Tok::Cmp(CmpOp::Eq), 1),
            '!' if next == Some('=') => (Tok::Cmp(CmpOp::Ne), 2),
            '!' => (Tok::Not, 1),
            '&' if next == Some('&') => (Tok::And, 2),
            '&' => (Tok::And, 1),
            '|' if next == Some('|') => (Tok::Or, 2),
            '|' => (Tok::Or, 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            ';' => (Tok::Semi, 1),
            '\'' | '"' => {
                let mut j = i + 1;
                let mut s = String::new();
                while j < chars.len() && chars[j] != c {
                    if chars[j] == '\\' && j + 1 < chars.len() {
                        s.push(match chars[j + 1] {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        j += 2;
                    } else {
                        s.push(chars[j]);
                        j += 1;
                    }
                }
                if j >= chars.len() {
                    return Err(err(line, "unterminated string".into()));
                }
                i = j + 1;
                out.push((Tok::Str(s), line));
                continue;
            }
            c if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.' || chars[j] == '_') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    j += 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let s: String = chars[i..j].iter().filter(|&&c| c != '_').collect();
                let v = s.parse::<f64>().map_err(|_| err(line, format!("bad number {s:?}")))?;
                i = j;
                out.push((Tok::Num(v), line));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                i = j;
                let tok = match word.as_str() {
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(word),
                };
                out.push((tok, line));
                continue;
            }
            other => return Err(err(line, format!("unexpected character {other:?} in constraint"))),
        };
        out.push((tok.0, line));
        i += tok.1;
    }
    Ok(out)
}

struct ExprParser<'t> {
    tokens: &'t [(Tok, usize)],
    pos: usize,
    line: usize,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn error(&self, message: String) -> ClauseError {
        let line = self.tokens.get(self.pos).or(self.tokens.last()).map_or(self.line, |(_, l)| *l);
        ClauseError { line, message }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ClauseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {tok:?}")))
        }
    }

    fn or(&mut self) -> Result<Expr, ClauseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ClauseError> {
        let mut lhs = self.not()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.not()?));
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, ClauseError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ClauseError> {
        let lhs = self.atom()?;
        if let Some(Tok::Cmp(op)) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.atom()?;
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr, ClauseError> {
        let tok = self.peek().cloned().ok_or_else(|| self.error("unexpected end of constraint".into()))?;
        self.pos += 1;
        match tok {
            Tok::Ref(n) => Ok(Expr::Ref(n)),
            Tok::Num(v) => Ok(Expr::Number(v)),
            Tok::Str(s) => Ok(Expr::Str(s)),
            Tok::Cmp(CmpOp::Lt) | Tok::Cmp(CmpOp::Gt) => Err(self.error("misplaced comparison".into())),
            Tok::LParen => {
                let e = self.or()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "True" | "true" => Ok(Expr::Bool(true)),
                "False" | "false" => Ok(Expr::Bool(false)),
                "int" | "float" | "str" => {
                    self.expect(Tok::LParen)?;
                    let inner = Box::new(self.or()?);
                    self.expect(Tok::RParen)?;
                    Ok(match name.as_str() {
                        "int" => Expr::Int(inner),
                        "float" => Expr::Float(inner),
                        _ => Expr::ToStr(inner),
                    })
                }
                other => Err(self.error(format!("unknown function or name `{other}`"))),
            },
            other => Err(self.error(format!("unexpected {other:?}"))),
        }
    }
}
