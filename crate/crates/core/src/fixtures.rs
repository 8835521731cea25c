//! Seeded stand-in datasets with planted dependencies, emitted together
//! with a grammar whose language contains every generated row.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, WeightedIndex};
use thiserror::Error;

use crate::grammar::{parse_spec, RowLayout};
use crate::rng;
use crate::tabular::{parse_csv, Dataset, Schema};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixtureError {
    #[error("column {0}: {1}")]
    Column(String, String),
    #[error("dependency refers to unknown column or token: {0}")]
    Dependency(String),
    #[error("emitted grammar is invalid: {0}")]
    Grammar(String),
    #[error("could not draw {0} distinct rows")]
    TooFewDistinct(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnDef {
    /// Uniform integer in `lo..=hi`.
    Int { name: String, lo: u32, hi: u32 },
    /// Uniform on the grid `lo, lo + 10^-places, ..., hi`.
    Decimal { name: String, lo: u32, hi: u32, places: u32 },
    /// Token drawn with the given relative weights.
    Category { name: String, vocab: Vec<String>, weights: Vec<f64> },
}

impl ColumnDef {
    pub fn name(&self) -> &str {
        match self {
            ColumnDef::Int { name, .. } | ColumnDef::Decimal { name, .. } | ColumnDef::Category { name, .. } => name,
        }
    }

    fn variance(&self) -> f64 {
        match self {
            ColumnDef::Int { lo, hi, .. } => {
                let n = (hi - lo + 1) as f64;
                (n * n - 1.0) / 12.0
            }
            ColumnDef::Decimal { lo, hi, places, .. } => {
                let step = 10f64.powi(-(*places as i32));
                let n = (hi - lo) as f64 / step + 1.0;
                (n * n - 1.0) / 12.0 * step * step
            }
            ColumnDef::Category { .. } => 0.0,
        }
    }
}

/// Integer target: `base + sum(weight * column) + shifts + N(0, noise_sd)`,
/// rounded and clamped to `lo..=hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDef {
    pub name: String,
    pub base: f64,
    pub linear: Vec<(String, f64)>,
    /// `(column, token, shift)` added when the column holds the token.
    pub shifts: Vec<(String, String, f64)>,
    pub noise_sd: f64,
    pub lo: u32,
    pub hi: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub name: String,
    pub rows: usize,
    pub columns: Vec<ColumnDef>,
    pub target: TargetDef,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub csv: String,
    pub grammar: String,
    pub meta: String,
    pub dataset: Dataset,
    /// `1 - noise_variance / target_variance`, the best R² any model can
    /// expect (ignoring clamping and rounding).
    pub r2_ceiling: f64,
}

/// 600 rows of age, sex, bmi and smoker with
/// `charges = 2000 + 50 * age + 800 * smoker + N(0, 200)`.
pub fn mini_insurance(seed: u64) -> FixtureSpec {
    FixtureSpec {
        name: "mini_insurance".into(),
        rows: 600,
        columns: insurance_columns(),
        target: TargetDef {
            name: "charges".into(),
            base: 2000.0,
            linear: vec![("age".into(), 50.0)],
            shifts: vec![("smoker".into(), "yes".into(), 800.0)],
            noise_sd: 200.0,
            lo: 1000,
            hi: 9999,
        },
        seed,
    }
}

/// Same columns as [`mini_insurance`] but the target is pure noise.
pub fn noise_insurance(seed: u64) -> FixtureSpec {
    FixtureSpec {
        name: "mini_insurance_noise".into(),
        target: TargetDef {
            name: "charges".into(),
            base: 4500.0,
            linear: vec![],
            shifts: vec![],
            noise_sd: 700.0,
            lo: 1000,
            hi: 9999,
        },
        ..mini_insurance(seed)
    }
}

fn insurance_columns() -> Vec<ColumnDef> {
    vec![
        ColumnDef::Int { name: "age".into(), lo: 18, hi: 64 },
        ColumnDef::Category { name: "sex".into(), vocab: vec!["female".into(), "male".into()], weights: vec![1.0, 1.0] },
        ColumnDef::Decimal { name: "bmi".into(), lo: 18, hi: 45, places: 1 },
        ColumnDef::Category { name: "smoker".into(), vocab: vec!["no".into(), "yes".into()], weights: vec![4.0, 1.0] },
    ]
}

fn digits(v: u32) -> u32 {
    v.to_string().len() as u32
}

/// Alternatives spelling every integer with `digits(lo)..=digits(hi)` digits.
fn integer_rule(lo: u32, hi: u32) -> String {
    (digits(lo)..=digits(hi))
        .map(|d| if d == 1 { "<digit>".to_string() } else { format!("<nonzero>{}", " <digit>".repeat(d as usize - 1)) })
        .collect::<Vec<_>>()
        .join(" | ")
}

impl FixtureSpec {
    fn validate(&self) -> Result<(), FixtureError> {
        let col_err = |n: &str, m: &str| Err(FixtureError::Column(n.to_string(), m.to_string()));
        let mut names = HashSet::new();
        for c in self.columns.iter().map(ColumnDef::name).chain([self.target.name.as_str()]) {
            if !names.insert(c) || c.is_empty() || !c.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_') {
                return col_err(c, "names must be distinct identifiers");
            }
        }
        for c in &self.columns {
            match c {
                ColumnDef::Int { lo, hi, .. } | ColumnDef::Decimal { lo, hi, .. } if lo > hi => {
                    return col_err(c.name(), "empty range")
                }
                ColumnDef::Decimal { places, .. } if *places == 0 || *places > 6 => {
                    return col_err(c.name(), "places must be in 1..=6")
                }
                ColumnDef::Category { vocab, weights, .. } => {
                    let distinct: HashSet<&String> = vocab.iter().collect();
                    if vocab.is_empty() || vocab.len() != weights.len() || distinct.len() != vocab.len() {
                        return col_err(c.name(), "vocabulary and weights must be non-empty, distinct and aligned");
                    }
                    if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
                        return col_err(c.name(), "weights must be non-negative with a positive sum");
                    }
                    if vocab.iter().any(|t| t.is_empty() || t.contains([',', '\'', '\\', '\n']) || t.parse::<f64>().is_ok()) {
                        return col_err(c.name(), "tokens must be non-numeric plain words");
                    }
                }
                _ => {}
            }
        }
        let t = &self.target;
        if t.lo > t.hi || !(t.noise_sd >= 0.0) {
            return col_err(&t.name, "empty range or negative noise");
        }
        for (col, _) in &t.linear {
            match self.columns.iter().find(|c| c.name() == col) {
                Some(ColumnDef::Int { .. } | ColumnDef::Decimal { .. }) => {}
                _ => return Err(FixtureError::Dependency(col.clone())),
            }
        }
        for (col, token, _) in &t.shifts {
            match self.columns.iter().find(|c| c.name() == col) {
                Some(ColumnDef::Category { vocab, .. }) if vocab.contains(token) => {}
                _ => return Err(FixtureError::Dependency(format!("{col}={token}"))),
            }
        }
        Ok(())
    }

    fn grammar_text(&self) -> String {
        let mut g = String::new();
        let names: Vec<&str> = self.columns.iter().map(ColumnDef::name).chain([self.target.name.as_str()]).collect();
        let _ = writeln!(g, "<start> ::= <header> '\\n' (<row> '\\n')*");
        let _ = writeln!(g, "<header> ::= '{}'", names.join(","));
        let cells: Vec<String> = names.iter().map(|n| format!("<{n}>")).collect();
        let _ = writeln!(g, "<row> ::= {}", cells.join(" ',' "));
        let mut bounds = Vec::new();
        for c in &self.columns {
            match c {
                ColumnDef::Int { name, lo, hi } => {
                    let _ = writeln!(g, "<{name}> ::= {}", integer_rule(*lo, *hi));
                    bounds.push(format!("int(<{name}>) >= {lo} & int(<{name}>) <= {hi}"));
                }
                ColumnDef::Decimal { name, lo, hi, places } => {
                    let _ = writeln!(g, "<{name}> ::= ({}) '.'{}", integer_rule(*lo, *hi), " <digit>".repeat(*places as usize));
                    bounds.push(format!("float(<{name}>) >= {lo} & float(<{name}>) <= {hi}"));
                }
                ColumnDef::Category { name, vocab, .. } => {
                    let alts: Vec<String> = vocab.iter().map(|t| format!("'{t}'")).collect();
                    let _ = writeln!(g, "<{name}> ::= {}", alts.join(" | "));
                }
            }
        }
        let _ = writeln!(g, "<{}> ::= {}", self.target.name, integer_rule(self.target.lo, self.target.hi));
        let _ = writeln!(g, "<nonzero> ::= '1' | ... | '9'");
        let _ = writeln!(g, "<digit> ::= '0' | ... | '9'");
        for b in bounds {
            let _ = writeln!(g, "where {b}");
        }
        g
    }

    fn target_variance(&self) -> f64 {
        let t = &self.target;
        let mut var = t.noise_sd * t.noise_sd;
        for (col, w) in &t.linear {
            let def = self.columns.iter().find(|c| c.name() == col).expect("validated");
            var += w * w * def.variance();
        }
        for c in &self.columns {
            if let ColumnDef::Category { name, vocab, weights } = c {
                let total: f64 = weights.iter().sum();
                let shift = |tok: &String| -> f64 {
                    t.shifts.iter().filter(|(col, tk, _)| col == name && tk == tok).map(|(_, _, s)| s).sum()
                };
                let mean: f64 = vocab.iter().zip(weights).map(|(tok, w)| w / total * shift(tok)).sum();
                var += vocab.iter().zip(weights).map(|(tok, w)| w / total * (shift(tok) - mean).powi(2)).sum::<f64>();
            }
        }
        var
    }

    fn meta_text(&self, ceiling: f64) -> String {
        let t = &self.target;
        let mut m = String::new();
        let _ = writeln!(m, "fixture: {}", self.name);
        let _ = writeln!(m, "rows: {}", self.rows);
        let _ = writeln!(m, "seed: {}", self.seed);
        for c in &self.columns {
            let desc = match c {
                ColumnDef::Int { name, lo, hi } => format!("{name}: integer uniform on [{lo}, {hi}]"),
                ColumnDef::Decimal { name, lo, hi, places } => {
                    format!("{name}: decimal uniform on [{lo}, {hi}] with {places} place(s)")
                }
                ColumnDef::Category { name, vocab, weights } => {
                    let parts: Vec<String> = vocab.iter().zip(weights).map(|(v, w)| format!("{v}:{w}")).collect();
                    format!("{name}: categorical, weights {}", parts.join(" "))
                }
            };
            let _ = writeln!(m, "column {desc}");
        }
        let mut formula = format!("{} = {}", t.name, t.base);
        for (c, w) in &t.linear {
            let _ = write!(formula, " + {w}*{c}");
        }
        for (c, tok, s) in &t.shifts {
            let _ = write!(formula, " + {s}*[{c}={tok}]");
        }
        let _ = write!(formula, " + N(0, {}^2), rounded, clamped to [{}, {}]", t.noise_sd, t.lo, t.hi);
        let _ = writeln!(m, "target {formula}");
        let _ = writeln!(m, "planted dependencies: {}", t.linear.len() + t.shifts.len());
        let _ = writeln!(m, "target variance: {:.3}", self.target_variance());
        let _ = writeln!(m, "r2 ceiling: {ceiling:.6}");
        m
    }
}

/// Generates the dataset, its grammar and a sidecar describing the planted
/// dependencies. Rows are distinct so preprocessing drops nothing.
pub fn make_fixture(spec: &FixtureSpec) -> Result<Fixture, FixtureError> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let noise = Normal::new(0.0, spec.target.noise_sd).map_err(|e| FixtureError::Column(spec.target.name.clone(), e.to_string()))?;
    let pickers: Vec<Option<WeightedIndex<f64>>> = spec
        .columns
        .iter()
        .map(|c| match c {
            ColumnDef::Category { weights, .. } => WeightedIndex::new(weights).ok(),
            _ => None,
        })
        .collect();
    let names: Vec<&str> = spec.columns.iter().map(ColumnDef::name).chain([spec.target.name.as_str()]).collect();
    let mut csv = names.join(",");
    csv.push('\n');
    let mut seen = HashSet::new();
    let mut attempts = 0;
    while seen.len() < spec.rows {
        attempts += 1;
        if attempts > spec.rows * 20 + 100 {
            return Err(FixtureError::TooFewDistinct(spec.rows));
        }
        let mut cells = Vec::new();
        let mut y = spec.target.base;
        for (c, picker) in spec.columns.iter().zip(&pickers) {
            let (text, value) = match c {
                ColumnDef::Int { lo, hi, .. } => {
                    let v = r.gen_range(*lo..=*hi);
                    (v.to_string(), v as f64)
                }
                ColumnDef::Decimal { lo, hi, places, .. } => {
                    let scale = 10u64.pow(*places);
                    let k = r.gen_range(*lo as u64 * scale..=*hi as u64 * scale);
                    let v = k as f64 / scale as f64;
                    (format!("{v:.*}", *places as usize), v)
                }
                ColumnDef::Category { vocab, .. } => {
                    let tok = &vocab[picker.as_ref().expect("weights validated").sample(&mut r)];
                    y += spec.target.shifts.iter().filter(|(col, t, _)| col == c.name() && t == tok).map(|(_, _, s)| s).sum::<f64>();
                    (tok.clone(), 0.0)
                }
            };
            y += spec.target.linear.iter().filter(|(col, _)| col == c.name()).map(|(_, w)| w * value).sum::<f64>();
            cells.push(text);
        }
        y += noise.sample(&mut r);
        let y = y.round().clamp(spec.target.lo as f64, spec.target.hi as f64) as u32;
        cells.push(y.to_string());
        let line = cells.join(",");
        if seen.insert(line.clone()) {
            csv.push_str(&line);
            csv.push('\n');
        }
    }
    let grammar = spec.grammar_text();
    let parsed = parse_spec(&grammar).map_err(|e| FixtureError::Grammar(e.to_string()))?;
    let layout = RowLayout::from_grammar(&parsed.grammar).map_err(|e| FixtureError::Grammar(e.to_string()))?;
    let schema = Arc::new(Schema::from_layout(&layout));
    let dataset = parse_csv(&csv, schema).map_err(|e| FixtureError::Grammar(e.to_string()))?;
    let r2_ceiling = 1.0 - spec.target.noise_sd.powi(2) / spec.target_variance();
    let meta = spec.meta_text(r2_ceiling);
    Ok(Fixture { csv, grammar, meta, dataset, r2_ceiling })
}
