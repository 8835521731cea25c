//! Context-free grammars for tabular rows.
//!
//! A [`Grammar`] is parsed from the grammar DSL (productions plus a trailing
//! `where` block), and drives both random generation of
//! [`DerivationTree`]s and recognition of existing strings.

mod dsl;
mod generate;
mod recognize;
mod row;
mod tree;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::constraints::StaticConstraint;

pub use dsl::parse_spec;
pub use generate::{Generator, RepetitionPolicy, DEFAULT_DEPTH_BUDGET};
pub use row::{ColumnKind, RowLayout, RowRecord, Value};
pub use tree::DerivationTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: undefined nonterminal <{name}>")]
    UndefinedNonterminal { name: String, line: usize },
    #[error("line {line}: duplicate production for <{name}>; combine alternatives with `|`")]
    DuplicateProduction { name: String, line: usize },
    #[error("empty grammar spec")]
    Empty,
    #[error("grammar cannot bottom out from <{symbol}> within depth budget {budget}")]
    Unsatisfiable { symbol: String, budget: u32 },
    #[error("unknown nonterminal <{0}>")]
    UnknownSymbol(String),
    #[error("malformed row: {0}")]
    MalformedRow(String),
    #[error("row layout: {0}")]
    Layout(String),
}

/// How many times an item may repeat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Repetition {
    None,
    Star,
    Plus,
}

impl Repetition {
    pub fn min_count(self) -> usize {
        match self {
            Repetition::Star => 0,
            Repetition::None | Repetition::Plus => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemKind {
    Terminal(String),
    NonTerminal(String),
    Group(Vec<Alternative>),
}

/// One element on the right-hand side of a production.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub kind: ItemKind,
    pub repetition: Repetition,
}

impl Item {
    pub fn terminal(text: impl Into<String>) -> Self {
        Item { kind: ItemKind::Terminal(text.into()), repetition: Repetition::None }
    }

    pub fn nonterminal(name: impl Into<String>) -> Self {
        Item { kind: ItemKind::NonTerminal(name.into()), repetition: Repetition::None }
    }
}

pub type Alternative = Vec<Item>;

#[derive(Debug, Clone, PartialEq)]
pub struct Production {
    pub name: String,
    pub alternatives: Vec<Alternative>,
    pub line: usize,
}

/// A parsed context-free grammar. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Grammar {
    productions: Vec<Production>,
    index: HashMap<String, usize>,
    start: String,
    terminals: BTreeSet<String>,
    // Minimal number of nonterminal expansions needed to reach terminals;
    // `None` for symbols that never bottom out.
    min_depth: Vec<Option<u32>>,
}

impl PartialEq for Grammar {
    fn eq(&self, other: &Self) -> bool {
        self.productions == other.productions && self.start == other.start
    }
}

/// A grammar together with the static constraints of its `where` block.
#[derive(Debug, Clone)]
pub struct Spec {
    pub grammar: Grammar,
    pub constraints: Vec<StaticConstraint>,
}

impl Grammar {
    /// Builds a grammar from productions, checking that every referenced
    /// nonterminal is defined and that `start` exists.
    pub fn new(productions: Vec<Production>, start: &str) -> Result<Self, GrammarError> {
        if productions.is_empty() {
            return Err(GrammarError::Empty);
        }
        let mut index = HashMap::new();
        for (i, p) in productions.iter().enumerate() {
            if index.insert(p.name.clone(), i).is_some() {
                return Err(GrammarError::DuplicateProduction { name: p.name.clone(), line: p.line });
            }
        }
        let mut terminals = BTreeSet::new();
        for p in &productions {
            for alt in &p.alternatives {
                check_alternative(alt, &index, p.line, &mut terminals)?;
            }
        }
        if !index.contains_key(start) {
            return Err(GrammarError::UndefinedNonterminal { name: start.to_string(), line: 0 });
        }
        let mut grammar = Grammar {
            productions,
            index,
            start: start.to_string(),
            terminals,
            min_depth: Vec::new(),
        };
        grammar.min_depth = grammar.compute_min_depths();
        Ok(grammar)
    }

    pub fn start_symbol(&self) -> &str {
        &self.start
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.productions.iter().map(|p| p.name.as_str())
    }

    pub fn terminals(&self) -> &BTreeSet<String> {
        &self.terminals
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn production(&self, name: &str) -> Option<&Production> {
        self.index.get(name).map(|&i| &self.productions[i])
    }

    pub fn alternatives(&self, name: &str) -> Option<&[Alternative]> {
        self.production(name).map(|p| p.alternatives.as_slice())
    }

    /// Fewest nested nonterminal expansions needed to derive a terminal
    /// string from `name`, or `None` when no finite derivation exists.
    pub fn min_depth(&self, name: &str) -> Option<u32> {
        self.index.get(name).and_then(|&i| self.min_depth[i])
    }

    pub(crate) fn alternative_depth(&self, alt: &Alternative) -> Option<u32> {
        alt_depth(alt, &|n| self.min_depth(n))
    }

    pub(crate) fn item_depth(&self, item: &Item) -> Option<u32> {
        item_depth(item, &|n| self.min_depth(n))
    }

    fn compute_min_depths(&self) -> Vec<Option<u32>> {
        let mut depths: Vec<Option<u32>> = vec![None; self.productions.len()];
        loop {
            let mut changed = false;
            for (i, p) in self.productions.iter().enumerate() {
                let lookup = |n: &str| self.index.get(n).and_then(|&j| depths[j]);
                let best = p
                    .alternatives
                    .iter()
                    .filter_map(|alt| alt_depth(alt, &lookup))
                    .min()
                    .map(|d| d + 1);
                if let Some(d) = best {
                    if depths[i].is_none_or(|old| d < old) {
                        depths[i] = Some(d);
                        changed = true;
                    }
                }
            }
            if !changed {
                return depths;
            }
        }
    }

    /// Enumerates the language of `name` when it is finite and has at
    /// most `limit` sentences. Sentences come out in source order, without
    /// duplicates.
    pub fn finite_language(&self, name: &str, limit: usize) -> Option<Vec<String>> {
        let mut visiting = Vec::new();
        let sentences = self.enumerate_symbol(name, limit, &mut visiting)?;
        let mut seen = BTreeSet::new();
        Some(sentences.into_iter().filter(|s| seen.insert(s.clone())).collect())
    }

    fn enumerate_symbol(&self, name: &str, limit: usize, visiting: &mut Vec<String>) -> Option<Vec<String>> {
        if visiting.iter().any(|v| v == name) {
            return None;
        }
        visiting.push(name.to_string());
        let alts = self.alternatives(name)?;
        let result = self.enumerate_alternatives(alts, limit, visiting);
        visiting.pop();
        result
    }

    fn enumerate_alternatives(
        &self,
        alts: &[Alternative],
        limit: usize,
        visiting: &mut Vec<String>,
    ) -> Option<Vec<String>> {
        let mut out = Vec::new();
        for alt in alts {
            let mut acc = vec![String::new()];
            for item in alt {
                if item.repetition != Repetition::None {
                    return None;
                }
                let parts = match &item.kind {
                    ItemKind::Terminal(t) => vec![t.clone()],
                    ItemKind::NonTerminal(n) => self.enumerate_symbol(n, limit, visiting)?,
                    ItemKind::Group(g) => self.enumerate_alternatives(g, limit, visiting)?,
                };
                if acc.len().saturating_mul(parts.len()) > limit {
                    return None;
                }
                acc = acc
                    .iter()
                    .flat_map(|prefix| parts.iter().map(move |p| format!("{prefix}{p}")))
                    .collect();
            }
            out.extend(acc);
            if out.len() > limit {
                return None;
            }
        }
        Some(out)
    }
}

fn check_alternative(
    alt: &Alternative,
    index: &HashMap<String, usize>,
    line: usize,
    terminals: &mut BTreeSet<String>,
) -> Result<(), GrammarError> {
    for item in alt {
        match &item.kind {
            ItemKind::Terminal(t) => {
                terminals.insert(t.clone());
            }
            ItemKind::NonTerminal(n) => {
                if !index.contains_key(n) {
                    return Err(GrammarError::UndefinedNonterminal { name: n.clone(), line });
                }
            }
            ItemKind::Group(alts) => {
                for a in alts {
                    check_alternative(a, index, line, terminals)?;
                }
            }
        }
    }
    Ok(())
}

fn alt_depth(alt: &Alternative, lookup: &dyn Fn(&str) -> Option<u32>) -> Option<u32> {
    alt.iter().try_fold(0, |acc, item| item_depth(item, lookup).map(|d| acc.max(d)))
}

fn item_depth(item: &Item, lookup: &dyn Fn(&str) -> Option<u32>) -> Option<u32> {
    if item.repetition == Repetition::Star {
        return Some(0);
    }
    match &item.kind {
        ItemKind::Terminal(_) => Some(0),
        ItemKind::NonTerminal(n) => lookup(n),
        ItemKind::Group(alts) => alts.iter().filter_map(|a| alt_depth(a, lookup)).min(),
    }
}

impl fmt::Display for Grammar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.productions {
            write!(f, "<{}> ::= ", p.name)?;
            write_alternatives(f, &p.alternatives)?;
            writeln!(f)?;
        }
        Ok(())
    }
}

fn write_alternatives(f: &mut fmt::Formatter<'_>, alts: &[Alternative]) -> fmt::Result {
    for (i, alt) in alts.iter().enumerate() {
        if i > 0 {
            write!(f, " | ")?;
        }
        for (j, item) in alt.iter().enumerate() {
            if j > 0 {
                write!(f, " ")?;
            }
            match &item.kind {
                ItemKind::Terminal(t) => write!(f, "'{}'", t.escape_default())?,
                ItemKind::NonTerminal(n) => write!(f, "<{n}>")?,
                ItemKind::Group(g) => {
                    write!(f, "(")?;
                    write_alternatives(f, g)?;
                    write!(f, ")")?;
                }
            }
            match item.repetition {
                Repetition::None => {}
                Repetition::Star => write!(f, "*")?,
                Repetition::Plus => write!(f, "+")?,
            }
        }
    }
    Ok(())
}
