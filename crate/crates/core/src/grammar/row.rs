use std::fmt;
use std::sync::Arc;

use super::{DerivationTree, Grammar, GrammarError, ItemKind, Repetition};

/// Largest finite language still treated as a categorical vocabulary.
const MAX_VOCABULARY: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnKind {
    Numeric,
    /// Tokens in grammar source order.
    Categorical(Vec<String>),
}

/// Column structure of the row production: which nonterminal feeds each
/// column, the header names, and the separator between cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLayout {
    pub row_symbol: String,
    pub symbols: Vec<String>,
    pub names: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub separator: String,
}

impl RowLayout {
    /// Derives the layout from the `<row>` production (and `<header>`, when
    /// present). The row production must be a single sequence of column
    /// nonterminals separated by one repeated terminal.
    pub fn from_grammar(grammar: &Grammar) -> Result<Self, GrammarError> {
        Self::with_row_symbol(grammar, "row")
    }

    pub fn with_row_symbol(grammar: &Grammar, row_symbol: &str) -> Result<Self, GrammarError> {
        let layout_err = |m: String| GrammarError::Layout(m);
        let alts = grammar
            .alternatives(row_symbol)
            .ok_or_else(|| layout_err(format!("grammar has no <{row_symbol}> production")))?;
        if alts.len() != 1 {
            return Err(layout_err(format!("<{row_symbol}> must have exactly one alternative")));
        }
        let mut symbols = Vec::new();
        let mut separator: Option<String> = None;
        for (i, item) in alts[0].iter().enumerate() {
            if item.repetition != Repetition::None {
                return Err(layout_err(format!("<{row_symbol}> items may not repeat")));
            }
            let expect_column = i % 2 == 0;
            match (&item.kind, expect_column) {
                (ItemKind::NonTerminal(n), true) => symbols.push(n.clone()),
                (ItemKind::Terminal(t), false) => match &separator {
                    Some(s) if s != t => {
                        return Err(layout_err(format!("inconsistent separators {s:?} and {t:?}")))
                    }
                    _ => separator = Some(t.clone()),
                },
                _ => {
                    return Err(layout_err(format!(
                        "<{row_symbol}> must alternate column nonterminals and separator literals"
                    )))
                }
            }
        }
        if alts[0].len() % 2 == 0 {
            return Err(layout_err(format!("<{row_symbol}> ends with a separator")));
        }
        let separator = separator.unwrap_or_else(|| ",".to_string());

        let names = match grammar.finite_language("header", 1).and_then(|v| v.into_iter().next()) {
            Some(header) => {
                let names: Vec<String> = header.split(separator.as_str()).map(|s| s.trim().to_string()).collect();
                if names.len() != symbols.len() {
                    return Err(layout_err(format!(
                        "header has {} names but <{row_symbol}> has {} columns",
                        names.len(),
                        symbols.len()
                    )));
                }
                names
            }
            None => symbols.clone(),
        };

        let kinds = symbols
            .iter()
            .map(|s| match grammar.finite_language(s, MAX_VOCABULARY) {
                Some(words) if words.iter().any(|w| w.trim().parse::<f64>().is_err()) => {
                    ColumnKind::Categorical(words)
                }
                _ => ColumnKind::Numeric,
            })
            .collect();

        Ok(RowLayout { row_symbol: row_symbol.to_string(), symbols, names, kinds, separator })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn column_of_symbol(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn column_of_name(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|s| s == name)
    }

    /// The cells of a row tree exactly as derived, joined by commas.
    pub fn cell_texts(&self, tree: &DerivationTree) -> String {
        let texts: Vec<String> = tree.children().iter().filter(|c| c.symbol().is_some()).map(DerivationTree::text).collect();
        texts.join(",")
    }

    /// Converts a tree rooted at the row nonterminal into typed cells.
    pub fn tree_to_row(self: &Arc<Self>, tree: &DerivationTree) -> Result<RowRecord, GrammarError> {
        if tree.symbol() != Some(self.row_symbol.as_str()) {
            return Err(GrammarError::MalformedRow(format!("tree is not rooted at <{}>", self.row_symbol)));
        }
        let cells: Vec<&DerivationTree> = tree.children().iter().filter(|c| c.symbol().is_some()).collect();
        if cells.len() != self.len() {
            return Err(GrammarError::MalformedRow(format!(
                "expected {} columns, found {}",
                self.len(),
                cells.len()
            )));
        }
        let values = cells
            .iter()
            .zip(&self.kinds)
            .zip(&self.symbols)
            .map(|((cell, kind), symbol)| {
                let text = cell.text();
                match kind {
                    ColumnKind::Categorical(_) => Ok(Value::Category(text)),
                    ColumnKind::Numeric => parse_number(&text).map(Value::Number).ok_or_else(|| {
                        GrammarError::MalformedRow(format!("<{symbol}> value {text:?} is not a finite number"))
                    }),
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(RowRecord { layout: Arc::clone(self), values })
    }
}

pub(crate) fn parse_number(text: &str) -> Option<f64> {
    text.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// A single cell of a grammar-derived row.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Category(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Category(s) => f.write_str(s),
        }
    }
}

/// One grammar-derived CSV row with its column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RowRecord {
    pub layout: Arc<RowLayout>,
    pub values: Vec<Value>,
}

impl RowRecord {
    pub fn get(&self, symbol: &str) -> Option<&Value> {
        self.layout.column_of_symbol(symbol).map(|i| &self.values[i])
    }

    pub fn to_csv_line(&self) -> String {
        self.values.iter().map(Value::to_string).collect::<Vec<_>>().join(",")
    }
}
