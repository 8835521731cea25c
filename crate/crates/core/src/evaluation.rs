//! Resemblance (per-column 1-D Wasserstein), utility (four train/test
//! pairings) and privacy (exact duplicate audit) of a synthetic dataset.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::ml::{
    self, Classifier, DecisionTree, ForestParams, GaussianNB, MlError, RandomForest, Regressor, ScoreKind, Targets,
    TreeParams,
};
use crate::rng;
use crate::tabular::{self, row_key, Dataset, TabularError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("empty sample")]
    EmptySample,
    #[error("non-finite sample value")]
    NonFinite,
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error("classification target must hold non-negative integer codes")]
    BadLabels,
}

/// W1 distance between the empirical distributions of `a` and `b`: the
/// integral over `t` in `[0, 1]` of `|F_a^-1(t) - F_b^-1(t)|`. Quantile
/// breakpoints `i/n` and `j/m` are merged exactly on the common grid
/// `1/(n*m)`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as u128, b.len() as u128);
    if n == m {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64);
    }
    let (mut i, mut j, mut pos) = (0usize, 0usize, 0u128);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let next_a = (i as u128 + 1) * m;
        let next_b = (j as u128 + 1) * n;
        let next = next_a.min(next_b);
        total += (next - pos) as f64 * (a[i] - b[j]).abs();
        pos = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / (n * m) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResemblanceReport {
    pub features: Vec<(String, f64)>,
    /// Unweighted mean over all columns.
    pub aggregate: f64,
}

pub fn resemblance(original: &Dataset, synthetic: &Dataset) -> Result<ResemblanceReport, EvalError> {
    let (a, b) = tabular::normalize(original, synthetic)?;
    let features = original
        .schema
        .columns
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let x: Vec<f64> = a.iter().map(|r| r[j]).collect();
            let y: Vec<f64> = b.iter().map(|r| r[j]).collect();
            Ok((col.name.clone(), wasserstein_1d(&x, &y)?))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let aggregate = features.iter().map(|(_, d)| d).sum::<f64>() / features.len().max(1) as f64;
    Ok(ResemblanceReport { features, aggregate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(format!("unknown task kind {other:?} (expected classification or regression)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Original,
    Generated,
    TrainOriginalTestGenerated,
    TrainGeneratedTestOriginal,
}

impl Task {
    pub const ALL: [Task; 4] =
        [Task::Original, Task::Generated, Task::TrainOriginalTestGenerated, Task::TrainGeneratedTestOriginal];

    pub fn label(self) -> &'static str {
        match self {
            Task::Original => "Original",
            Task::Generated => "Generated",
            Task::TrainOriginalTestGenerated => "Train Original - Test Generated",
            Task::TrainGeneratedTestOriginal => "Train Generated - Test Original",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    NaiveBayes,
}

impl ModelKind {
    pub fn for_task(kind: TaskKind) -> &'static [ModelKind] {
        match kind {
            TaskKind::Classification => &[ModelKind::DecisionTree, ModelKind::RandomForest, ModelKind::NaiveBayes],
            TaskKind::Regression => &[ModelKind::DecisionTree, ModelKind::RandomForest],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::NaiveBayes => "naive_bayes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityCell {
    pub model: ModelKind,
    pub task: Task,
    pub score: Result<f64, MlError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    pub kind: ScoreKind,
    pub cells: Vec<UtilityCell>,
}

impl UtilityMatrix {
    pub fn get(&self, model: ModelKind, task: Task) -> Option<&Result<f64, MlError>> {
        self.cells.iter().find(|c| c.model == model && c.task == task).map(|c| &c.score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityOptions {
    pub task_kind: TaskKind,
    pub forest_trees: usize,
    pub seed: u64,
}

struct Xy {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn labels(y: &[f64]) -> Result<Vec<usize>, EvalError> {
    y.iter()
        .map(|&v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(EvalError::BadLabels) })
        .collect()
}

fn score_cell(model: ModelKind, train: &Xy, test: &Xy, opts: &UtilityOptions, n_classes: usize) -> Result<f64, MlError> {
    let seed = rng::derive_seed(opts.seed, model as u64);
    let forest = ForestParams { n_trees: opts.forest_trees, seed, ..Default::default() };
    let tree = TreeParams { seed, ..Default::default() };
    match opts.task_kind {
        TaskKind::Classification => {
            let train_y = labels(&train.y).map_err(|_| MlError::Label { label: usize::MAX, n_classes })?;
            let test_y = labels(&test.y).map_err(|_| MlError::Label { label: usize::MAX, n_classes })?;
            let t = Targets::Classes { labels: &train_y, n_classes };
            let predicted = match model {
                ModelKind::DecisionTree => DecisionTree::fit(&train.x, t, tree)?.predict(&test.x),
                ModelKind::RandomForest => RandomForest::fit(&train.x, t, forest)?.predict(&test.x),
                ModelKind::NaiveBayes => GaussianNB::fit(&train.x, &train_y, n_classes)?.predict(&test.x),
            };
            ml::accuracy(&test_y, &predicted)
        }
        TaskKind::Regression => {
            let t = Targets::Values(&train.y);
            let predicted = match model {
                ModelKind::DecisionTree => DecisionTree::fit(&train.x, t, tree)?.predict_values(&test.x),
                ModelKind::RandomForest => RandomForest::fit(&train.x, t, forest)?.predict_values(&test.x),
                ModelKind::NaiveBayes => return Err(MlError::UndefinedScore("naive Bayes has no regressor")),
            };
            ml::r2(&test.y, &predicted)
        }
    }
}

/// Scores every model on the four train/test pairings. Both datasets are
/// split 70/30 with the same seed, and each test share is reused across
/// tasks, so Original and Train Generated - Test Original share a test set.
pub fn utility_matrix(original: &Dataset, synthetic: &Dataset, opts: &UtilityOptions) -> Result<UtilityMatrix, EvalError> {
    if original.schema.columns != synthetic.schema.columns || original.schema.target != synthetic.schema.target {
        return Err(TabularError::SchemaMismatch.into());
    }
    let part = |d: &Dataset| -> Result<(Xy, Xy), EvalError> {
        let (tr, te) = tabular::split_indices(d.len(), 0.7, opts.seed)?;
        let (x, y) = d.xy()?;
        let take = |idx: &[usize]| Xy { x: idx.iter().map(|&i| x[i].clone()).collect(), y: idx.iter().map(|&i| y[i]).collect() };
        Ok((take(&tr), take(&te)))
    };
    let (o_tr, o_te) = part(original)?;
    let (g_tr, g_te) = part(synthetic)?;
    let n_classes = match opts.task_kind {
        TaskKind::Classification => {
            let t = original.schema.target.expect("xy checked the target");
            let max_label = labels(&o_tr.y.iter().chain(&o_te.y).chain(&g_tr.y).chain(&g_te.y).copied().collect::<Vec<_>>())?
                .into_iter()
                .max()
                .unwrap_or(0);
            match &original.schema.columns[t].kind {
                crate::grammar::ColumnKind::Categorical(v) => v.len().max(max_label + 1),
                crate::grammar::ColumnKind::Numeric => max_label + 1,
            }
        }
        TaskKind::Regression => 0,
    };
    let jobs: Vec<(ModelKind, Task)> = ModelKind::for_task(opts.task_kind)
        .iter()
        .flat_map(|&m| Task::ALL.into_iter().map(move |t| (m, t)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(model, task)| {
            let (train, test) = match task {
                Task::Original => (&o_tr, &o_te),
                Task::Generated => (&g_tr, &g_te),
                Task::TrainOriginalTestGenerated => (&o_tr, &g_te),
                Task::TrainGeneratedTestOriginal => (&g_tr, &o_te),
            };
            UtilityCell { model, task, score: score_cell(model, train, test, opts, n_classes) }
        })
        .collect();
    let kind = match opts.task_kind {
        TaskKind::Classification => ScoreKind::Accuracy,
        TaskKind::Regression => ScoreKind::R2,
    };
    Ok(UtilityMatrix { kind, cells })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivacyAudit {
    pub duplicates: usize,
    /// Indices into the synthetic dataset of rows found in the original.
    pub indices: Vec<usize>,
}

/// Counts synthetic rows exactly equal to some original row.
pub fn privacy_audit(original: &Dataset, synthetic: &Dataset) -> PrivacyAudit {
    let known: HashSet<_> = original.rows.iter().map(|r| row_key(r)).collect();
    let indices: Vec<usize> =
        synthetic.rows.iter().enumerate().filter(|(_, r)| known.contains(&row_key(r))).map(|(i, _)| i).collect();
    PrivacyAudit { duplicates: indices.len(), indices }
}

fn fmt_score(s: &Result<f64, MlError>) -> String {
    match s {
        Ok(v) => format!("{v:.6}"),
        Err(_) => "undefined".to_string(),
    }
}

/// Human-readable report with RESEMBLANCE, UTILITY and PRIVACY sections.
pub fn render_report(res: &ResemblanceReport, util: &UtilityMatrix, privacy: &PrivacyAudit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "RESEMBLANCE");
    let _ = writeln!(
        out,
        "aggregate = unweighted mean of per-feature W1 over union min-max normalized columns (categorical columns by integer code)"
    );
    for (name, d) in &res.features {
        let _ = writeln!(out, "  {name}: {d:.6}");
    }
    let _ = writeln!(out, "  aggregate: {:.6}", res.aggregate);
    let _ = writeln!(out);
    let _ = writeln!(out, "UTILITY ({})", util.kind.name());
    let models: Vec<ModelKind> = util.cells.iter().map(|c| c.model).fold(Vec::new(), |mut v, m| {
        if !v.contains(&m) {
            v.push(m);
        }
        v
    });
    for m in models {
        let _ = writeln!(out, "  {}", m.label());
        for t in Task::ALL {
            if let Some(s) = util.get(m, t) {
                let _ = writeln!(out, "    {}: {}", t.label(), fmt_score(s));
            }
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "PRIVACY");
    let _ = writeln!(out, "  exact duplicates of original rows: {}", privacy.duplicates);
    if !privacy.indices.is_empty() {
        const SHOWN: usize = 20;
        let idx: Vec<String> = privacy.indices.iter().take(SHOWN).map(usize::to_string).collect();
        let more = privacy.indices.len().saturating_sub(SHOWN);
        let tail = if more > 0 { format!(" (+{more} more)") } else { String::new() };
        let _ = writeln!(out, "  synthetic row indices: {}{tail}", idx.join(" "));
    }
    out
}

/// Machine-readable mirror of [`render_report`]: `section,name,task,value`.
pub fn render_report_csv(res: &ResemblanceReport, util: &UtilityMatrix, privacy: &PrivacyAudit) -> String {
    let mut out = String::from("section,name,task,value\n");
    for (name, d) in &res.features {
        let _ = writeln!(out, "resemblance,{name},,{d:.6}");
    }
    let _ = writeln!(out, "resemblance,aggregate,,{:.6}", res.aggregate);
    for c in &util.cells {
        let _ = writeln!(out, "utility,{},{},{}", c.model.label(), c.task.label(), fmt_score(&c.score));
    }
    let _ = writeln!(out, "privacy,duplicates,,{}", privacy.duplicates);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[3.0, 1.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(wasserstein_1d(&[], &[1.0]), Err(EvalError::EmptySample));
        assert_eq!(wasserstein_1d(&[f64::NAN], &[1.0]), Err(EvalError::NonFinite));
    }

    #[test]
    fn task_kind_parses() {
        assert_eq!("regression".parse::<TaskKind>(), Ok(TaskKind::Regression));
        assert!("clustering".parse::<TaskKind>().is_err());
    }
}
