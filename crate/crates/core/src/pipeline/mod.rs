//! The synthesis loop: random rows and an initial discriminator, evolutionary
//! collection of rows the discriminator takes for originals, retraining
//! against the collected rows, repeated for a number of rounds.

mod config;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use thiserror::Error;

pub use config::{ConfigError, PipelineConfig, RawConfig, KEYS as CONFIG_KEYS};

use crate::constraints::{self, ClassifierConstraint, FitnessScore, StaticConstraint};
use crate::evaluation::{self, EvalError, ModelKind, PrivacyAudit, ResemblanceReport, Task, UtilityMatrix, UtilityOptions};
use crate::evolution::{self, EvolutionError, Fitness, Member, Population};
use crate::grammar::{parse_spec, DerivationTree, Generator, GrammarError, RowLayout, Spec, DEFAULT_DEPTH_BUDGET};
use crate::ml::{self, Classifier, DecisionTree, MlError, Targets, TreeParams};
use crate::rng;
use crate::tabular::{self, owned_row_key, Cell, Dataset, Provenance, RowKey, Schema, TabularError};

/// Discriminator label for rows of the original dataset.
pub const ORIGINAL: usize = 1;
/// Discriminator label for generated rows.
pub const SYNTHETIC: usize = 0;

/// Generated samples considered by the rolling discriminator accuracy.
pub const ROLLING_WINDOW: usize = 200;
const WEAK_DISCRIMINATOR: f64 = 0.55;
const SMALL_RETRAIN: usize = 10;
const TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Spec { path: String, source: GrammarError },
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Ml(#[from] MlError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("original dataset has {0} usable rows; at least 3 are needed")]
    TooSmall(usize),
    #[error("no good samples to retrain on")]
    NoGoodSamples,
    #[error("output directory {0} is in use by another run (remove .lock if stale)")]
    Locked(PathBuf),
    #[error("{0}")]
    Io(String),
    #[error("could not generate a well-formed row: {0}")]
    Generation(String),
}

impl PipelineError {
    /// Whether the failure stems from invalid user input rather than the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Spec { .. }
                | PipelineError::Tabular(TabularError::HeaderMismatch { .. })
                | PipelineError::Tabular(TabularError::Arity { .. })
                | PipelineError::Tabular(TabularError::UnknownCategory { .. })
                | PipelineError::Tabular(TabularError::UnknownColumn(_))
                | PipelineError::Tabular(TabularError::SchemaMismatch)
        )
    }
}

fn io(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Quota,
    MaxIterations,
    Stall,
    Accuracy,
}

impl StopReason {
    pub fn label(self) -> &'static str {
        match self {
            StopReason::Quota => "quota",
            StopReason::MaxIterations => "max_iterations",
            StopReason::Stall => "stall",
            StopReason::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodSample {
    pub tree: DerivationTree,
    /// Cell texts joined by commas.
    pub line: String,
    pub cells: Vec<Cell>,
    pub round: usize,
    pub iteration: usize,
    /// Set when the row equals an original row; such rows are kept and
    /// reported by the privacy audit rather than dropped.
    pub matches_original: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub round: usize,
    /// Global iteration counter across rounds, starting at 1.
    pub iteration: usize,
    pub new_good: usize,
    pub cumulative_good: usize,
    /// Share of the last generated samples classified as original.
    pub fool_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Held-out accuracy of the discriminator active during this round.
    pub discriminator_accuracy: f64,
    pub iterations: usize,
    pub new_good: usize,
    pub stop: Option<StopReason>,
}

pub struct PipelineState {
    /// Number of collection rounds started so far.
    pub round: usize,
    pub discriminator: Arc<dyn Classifier>,
    /// The trained tree behind `discriminator`, absent for injected models.
    pub discriminator_model: Option<DecisionTree>,
    pub discriminator_accuracy: f64,
    /// Held-out recall on original rows, used by the rolling accuracy.
    pub original_recall: Option<f64>,
    pub good: Vec<GoodSample>,
    good_keys: HashSet<RowKey>,
    pub run_log: Vec<LogRecord>,
    pub rounds: Vec<RoundRecord>,
    pub iteration: usize,
    pub initial_synthetic: Vec<String>,
    /// Trees of the phase-1 random rows, used to seed the first population.
    pub initial_trees: Vec<DerivationTree>,
}

impl PipelineState {
    pub fn with_discriminator(discriminator: Arc<dyn Classifier>) -> Self {
        PipelineState {
            round: 0,
            discriminator,
            discriminator_model: None,
            discriminator_accuracy: f64::NAN,
            original_recall: None,
            good: Vec::new(),
            good_keys: HashSet::new(),
            run_log: Vec::new(),
            rounds: Vec::new(),
            iteration: 0,
            initial_synthetic: Vec::new(),
            initial_trees: Vec::new(),
        }
    }

    pub fn good_trees(&self) -> Vec<DerivationTree> {
        self.good.iter().map(|g| g.tree.clone()).collect()
    }
}

/// Scores a row tree against the static constraints and the discriminator.
struct RowFitness<'a> {
    layout: &'a Arc<RowLayout>,
    schema: &'a Schema,
    statics: &'a [StaticConstraint],
    classifier: ClassifierConstraint,
}

impl Fitness for RowFitness<'_> {
    fn score(&self, tree: &DerivationTree) -> FitnessScore {
        match self.layout.tree_to_row(tree) {
            Ok(row) => constraints::fitness(&row, self.statics, Some((&self.classifier, self.schema)))
                .unwrap_or(FitnessScore::ZERO),
            Err(_) => FitnessScore::ZERO,
        }
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub spec: Spec,
    pub layout: Arc<RowLayout>,
    pub schema: Arc<Schema>,
    /// Preprocessed original dataset.
    pub original: Dataset,
    original_x: Vec<Vec<f64>>,
    original_keys: HashSet<RowKey>,
}

pub struct RunOutcome {
    pub out: PathBuf,
    pub synthetic: Dataset,
    pub synthetic_lines: Vec<String>,
    pub state: PipelineState,
    pub resemblance: Option<ResemblanceReport>,
    pub utility: Option<UtilityMatrix>,
    pub privacy: PrivacyAudit,
    pub report: String,
}

impl Pipeline {
    /// Reads the grammar file and original CSV named in the config.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| ConfigError::Io { path: p.display().to_string(), message: e.to_string() });
        let spec_text = read(&config.spec)?;
        let spec = parse_spec(&spec_text)
            .map_err(|source| PipelineError::Spec { path: config.spec.display().to_string(), source })?;
        let layout = RowLayout::from_grammar(&spec.grammar)
            .map_err(|source| PipelineError::Spec { path: config.spec.display().to_string(), source })?;
        let schema = Arc::new(Schema::from_layout(&layout).with_target(&config.task_column)?);
        let raw = tabular::load_csv(&config.data, Arc::clone(&schema))?;
        Self::assemble(config, spec, layout, raw)
    }

    /// Builds a pipeline from in-memory spec and CSV text.
    pub fn from_sources(config: PipelineConfig, spec_text: &str, csv_text: &str) -> Result<Self, PipelineError> {
        let spec = parse_spec(spec_text)?;
        let layout = RowLayout::from_grammar(&spec.grammar)?;
        let schema = Arc::new(Schema::from_layout(&layout).with_target(&config.task_column)?);
        let raw = tabular::parse_csv(csv_text, schema)?;
        Self::assemble(config, spec, layout, raw)
    }

    fn assemble(config: PipelineConfig, spec: Spec, layout: RowLayout, raw: Dataset) -> Result<Self, PipelineError> {
        let original = tabular::preprocess(&raw)?;
        if original.len() < raw.len() {
            info!("preprocessing dropped {} of {} rows", raw.len() - original.len(), raw.len());
        }
        let original_x = original.matrix()?;
        let original_keys = original.rows.iter().map(|r| owned_row_key(r)).collect();
        let schema = Arc::clone(&original.schema);
        Ok(Pipeline { config, spec, layout: Arc::new(layout), schema, original, original_x, original_keys })
    }

    fn seed(&self, stream: u64) -> u64 {
        rng::derive_seed(self.config.seed, stream)
    }

    fn desired(&self) -> usize {
        self.config.good_samples.unwrap_or(self.original.len())
    }

    fn max_iterations(&self) -> usize {
        self.config.max_iterations.unwrap_or(self.original.len())
    }

    fn tree_params(&self, seed: u64) -> TreeParams {
        TreeParams { max_depth: self.config.tree_max_depth, min_samples_leaf: self.config.tree_min_leaf, max_features: None, seed }
    }

    /// Cell texts of a row tree joined by commas, plus its encoded cells.
    fn encode_tree(&self, tree: &DerivationTree) -> Result<(String, Vec<Cell>), PipelineError> {
        let row = self.layout.tree_to_row(tree)?;
        let cells = self.schema.cells_of(&row)?;
        Ok((self.layout.cell_texts(tree), cells))
    }

    fn encoded(cells: &[Cell]) -> Vec<f64> {
        cells.iter().map(|c| c.as_f64().expect("encoded cell")).collect()
    }

    /// Trains a discriminator on originals (label 1) against `synthetic`
    /// (label 0) with a seeded 70/30 split. Returns the model, its held-out
    /// accuracy and its held-out recall on originals.
    ///
    /// Rows with identical features always land on the same side of the
    /// split, so a synthetic copy of an original row cannot be scored
    /// against its own twin.
    pub fn train_discriminator(
        &self,
        synthetic: &[Vec<f64>],
        seed: u64,
    ) -> Result<(DecisionTree, f64, f64), PipelineError> {
        let x: Vec<Vec<f64>> = self.original_x.iter().chain(synthetic).cloned().collect();
        let y: Vec<usize> =
            std::iter::repeat_n(ORIGINAL, self.original_x.len()).chain(std::iter::repeat_n(SYNTHETIC, synthetic.len())).collect();
        let (train, test) = grouped_split(&x, seed)?;
        let model = DecisionTree::fit_indices(&x, Targets::Classes { labels: &y, n_classes: 2 }, &train, self.tree_params(seed))?;
        let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let predicted: Vec<usize> = test.iter().map(|&i| model.predict_one(&x[i])).collect();
        let accuracy = ml::accuracy(&truth, &predicted)?;
        let originals: Vec<usize> = test.iter().copied().filter(|&i| y[i] == ORIGINAL).collect();
        let recall = if originals.is_empty() {
            1.0
        } else {
            originals.iter().filter(|&&i| model.predict_one(&x[i]) == ORIGINAL).count() as f64 / originals.len() as f64
        };
        Ok((model, accuracy, recall))
    }

    /// Generates as many random rows as there are originals, each satisfying
    /// the static constraints, and trains the first discriminator.
    pub fn phase1_setup(&self) -> Result<PipelineState, PipelineError> {
        let n = self.original.len();
        if n < 3 {
            return Err(PipelineError::TooSmall(n));
        }
        let generator = Generator::new(&self.spec.grammar);
        let mut r = rng::seeded(self.seed(1));
        let mut lines = Vec::with_capacity(n);
        let mut trees = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        let mut failures = 0;
        while lines.len() < n {
            let tree = generator.generate(&self.layout.row_symbol, DEFAULT_DEPTH_BUDGET, &mut r)?;
            // the initial rows come from the constraint-satisfying fuzzer, so
            // only the learned constraint separates them from the originals
            if let Some(violated) = self.violated_static(&tree) {
                failures += 1;
                if failures > 100 * n.max(10) {
                    return Err(PipelineError::Generation(format!("cannot satisfy `{violated}`")));
                }
                continue;
            }
            match self.encode_tree(&tree) {
                Ok((line, cells)) => {
                    lines.push(line);
                    trees.push(tree);
                    xs.push(Self::encoded(&cells));
                }
                Err(e) => {
                    failures += 1;
                    if failures > 100 * n.max(10) {
                        return Err(PipelineError::Generation(e.to_string()));
                    }
                }
            }
        }
        let (model, accuracy, recall) = self.train_discriminator(&xs, self.seed(2))?;
        info!("phase 1: {n} random rows, discriminator held-out accuracy {accuracy:.4}");
        if accuracy < WEAK_DISCRIMINATOR {
            warn!("discriminator accuracy {accuracy:.4} is near chance: grammar already mimics data");
        }
        let mut state = PipelineState::with_discriminator(Arc::new(model.clone()));
        state.discriminator_model = Some(model);
        state.discriminator_accuracy = accuracy;
        state.original_recall = Some(recall);
        state.initial_synthetic = lines;
        state.initial_trees = trees;
        Ok(state)
    }

    fn violated_static(&self, tree: &DerivationTree) -> Option<String> {
        let row = match self.layout.tree_to_row(tree) {
            Ok(row) => row,
            Err(e) => return Some(e.to_string()),
        };
        self.spec.constraints.iter().find(|c| !c.eval(&row).unwrap_or(false)).map(|c| c.to_string())
    }

    fn original_recall(&self, state: &PipelineState) -> f64 {
        state.original_recall.unwrap_or_else(|| {
            let hits = self.original_x.iter().filter(|x| state.discriminator.predict_one(x) == ORIGINAL).count();
            hits as f64 / self.original_x.len().max(1) as f64
        })
    }

    /// Initial population for a round: every good sample collected so far,
    /// then the best-scoring phase-1 rows while there is room.
    fn starting_trees(&self, state: &PipelineState, fitness: &dyn Fitness, r: &mut rng::Rng) -> Vec<DerivationTree> {
        let mut trees = state.good_trees();
        let room = self.config.evolution.population_size.saturating_sub(trees.len());
        if room > 0 && !state.initial_trees.is_empty() {
            let mut scored: Vec<(f64, &DerivationTree)> =
                state.initial_trees.iter().map(|t| (fitness.score(t).value(), t)).collect();
            scored.shuffle(r);
            scored.sort_by(|a, b| b.0.total_cmp(&a.0));
            trees.extend(scored.into_iter().take(room).map(|(_, t)| t.clone()));
        }
        trees
    }

    /// Runs one collection round against the active discriminator.
    pub fn collect_good_samples(&self, state: &mut PipelineState) -> Result<StopReason, PipelineError> {
        state.round += 1;
        let round = state.round;
        let evo = self.config.evolution;
        let generator = Generator::new(&self.spec.grammar);
        let fitness = RowFitness {
            layout: &self.layout,
            schema: &self.schema,
            statics: &self.spec.constraints,
            classifier: ClassifierConstraint::new(Arc::clone(&state.discriminator), ORIGINAL),
        };
        let mut r = rng::seeded(self.seed(100 + round as u64));
        let recall = self.original_recall(state);
        let desired = self.desired();
        let max_iterations = self.max_iterations();
        let symbol = self.layout.row_symbol.as_str();

        let mut pop = evolution::seed_population(&self.starting_trees(state, &fitness, &mut r), &evo, &generator, symbol, &fitness, &mut r)?;
        let mut round_good: Vec<Member> = Vec::new();
        let mut window: VecDeque<bool> = VecDeque::with_capacity(ROLLING_WINDOW + 1);
        let mut since_new = 0;
        let mut iterations = 0;
        let mut stop = StopReason::MaxIterations;
        while iterations < max_iterations {
            iterations += 1;
            state.iteration += 1;
            pop = evolution::evolve_step(&pop, &fitness, &evo, &generator, &mut r);

            let mut new_good = 0;
            for m in &pop.members {
                let encoded = self.encode_tree(&m.tree).ok();
                if m.fresh {
                    let fooled = encoded
                        .as_ref()
                        .is_some_and(|(_, cells)| state.discriminator.predict_one(&Self::encoded(cells)) == ORIGINAL);
                    window.push_back(fooled);
                    if window.len() > ROLLING_WINDOW {
                        window.pop_front();
                    }
                }
                let Some((line, cells)) = encoded else { continue };
                if !m.fitness.is_perfect() {
                    continue;
                }
                let key = owned_row_key(&cells);
                if state.good_keys.contains(&key) {
                    continue;
                }
                let matches_original = self.original_keys.contains(&key);
                if matches_original {
                    warn!("good sample {line:?} equals an original row");
                }
                state.good_keys.insert(key);
                state.good.push(GoodSample {
                    tree: m.tree.clone(),
                    line,
                    cells,
                    round,
                    iteration: state.iteration,
                    matches_original,
                });
                round_good.push(m.clone());
                new_good += 1;
            }
            since_new = if new_good > 0 { 0 } else { since_new + 1 };
            let fool_rate = if window.is_empty() { 0.0 } else { window.iter().filter(|&&f| f).count() as f64 / window.len() as f64 };
            state.run_log.push(LogRecord {
                round,
                iteration: state.iteration,
                new_good,
                cumulative_good: state.good.len(),
                fool_rate,
            });

            // balanced accuracy: recall on originals and on generated rows
            let rolling = 0.5 * recall + 0.5 * (1.0 - fool_rate);
            if round_good.len() >= desired {
                stop = StopReason::Quota;
                break;
            }
            if window.len() >= ROLLING_WINDOW && rolling < self.config.retrain_threshold {
                stop = StopReason::Accuracy;
                break;
            }
            if since_new >= self.config.stall_window {
                stop = StopReason::Stall;
                break;
            }
            pop = reseed(pop, &round_good, &mut r);
        }
        let new_good = round_good.len();
        info!("round {round}: {new_good} good samples in {iterations} iterations, stopped by {}", stop.label());
        state.rounds.push(RoundRecord {
            round,
            discriminator_accuracy: state.discriminator_accuracy,
            iterations,
            new_good,
            stop: Some(stop),
        });
        Ok(stop)
    }

    /// Trains a fresh discriminator on the originals against every good
    /// sample collected so far and makes it the active one.
    pub fn retrain_discriminator(&self, state: &mut PipelineState) -> Result<f64, PipelineError> {
        if state.good.is_empty() {
            return Err(PipelineError::NoGoodSamples);
        }
        if state.good.len() < SMALL_RETRAIN {
            warn!("retraining on only {} good samples", state.good.len());
        }
        let xs: Vec<Vec<f64>> = state.good.iter().map(|g| Self::encoded(&g.cells)).collect();
        let (model, accuracy, recall) = self.train_discriminator(&xs, self.seed(200 + state.round as u64))?;
        info!("retrained discriminator after round {}: held-out accuracy {accuracy:.4}", state.round);
        state.discriminator = Arc::new(model.clone());
        state.discriminator_model = Some(model);
        state.discriminator_accuracy = accuracy;
        state.original_recall = Some(recall);
        Ok(accuracy)
    }

    /// Good samples as a dataset, truncated to the original size by a seeded
    /// uniform subsample that keeps collection order.
    pub fn final_selection(&self, state: &PipelineState) -> (Dataset, Vec<String>) {
        let n = self.original.len();
        let mut idx: Vec<usize> = (0..state.good.len()).collect();
        if idx.len() > n {
            idx = sample(&mut rng::seeded(self.seed(300)), state.good.len(), n).into_vec();
            idx.sort_unstable();
        }
        let rows = idx.iter().map(|&i| state.good[i].cells.clone()).collect();
        let lines = idx.iter().map(|&i| state.good[i].line.clone()).collect();
        (Dataset::new(Arc::clone(&self.schema), rows, Provenance::Synthetic), lines)
    }

    fn utility_options(&self) -> UtilityOptions {
        UtilityOptions { task_kind: self.config.task_kind, forest_trees: self.config.forest_trees, seed: self.config.seed }
    }

    /// Random-forest score on the Train Generated - Test Original task.
    pub fn current_utility(&self, state: &PipelineState) -> Option<f64> {
        let (synthetic, _) = self.final_selection(state);
        let m = evaluation::utility_matrix(&self.original, &synthetic, &self.utility_options()).ok()?;
        m.get(ModelKind::RandomForest, Task::TrainGeneratedTestOriginal)?.clone().ok()
    }

    /// Full run: setup, then `rounds` collections with retraining between
    /// them. Writes every artifact into the configured output directory.
    pub fn run(&self) -> Result<RunOutcome, PipelineError> {
        let out = self.config.out.clone();
        let _lock = OutputLock::acquire(&out)?;
        let mut state = self.phase1_setup()?;
        write(&out.join("initial_synthetic.csv"), &self.csv_text(&state.initial_synthetic))?;
        self.checkpoint_discriminator(&out, &state, 1)?;

        let looped = self.round_loop(&mut state, &out);
        self.write_logs(&out, &state)?;
        looped?;

        let (synthetic, lines) = self.final_selection(&state);
        write(&out.join("synthetic.csv"), &self.csv_text(&lines))?;
        let privacy = evaluation::privacy_audit(&self.original, &synthetic);
        let (resemblance, utility) = if synthetic.is_empty() {
            (None, None)
        } else {
            (
                Some(evaluation::resemblance(&self.original, &synthetic)?),
                Some(evaluation::utility_matrix(&self.original, &synthetic, &self.utility_options())?),
            )
        };
        let mut report = match (&resemblance, &utility) {
            (Some(res), Some(util)) => {
                write(&out.join("report.csv"), &evaluation::render_report_csv(res, util, &privacy))?;
                evaluation::render_report(res, util, &privacy)
            }
            _ => format!(
                "RESEMBLANCE\n  no synthetic rows\n\nUTILITY\n  no synthetic rows\n\nPRIVACY\n  exact duplicates of original rows: {}\n",
                privacy.duplicates
            ),
        };
        report.push('\n');
        report.push_str(&self.run_summary(&state, synthetic.len()));
        write(&out.join("report.txt"), &report)?;
        Ok(RunOutcome { out, synthetic, synthetic_lines: lines, state, resemblance, utility, privacy, report })
    }

    fn round_loop(&self, state: &mut PipelineState, out: &Path) -> Result<(), PipelineError> {
        for r in 1..=self.config.rounds {
            self.collect_good_samples(state)?;
            self.checkpoint_good(out, state)?;
            self.write_logs(out, state)?;
            if let Some(target) = self.config.utility_target {
                let u = self.current_utility(state);
                info!("utility after round {r}: {u:?}");
                if u.is_some_and(|u| u >= target) {
                    break;
                }
            }
            if r < self.config.rounds {
                self.retrain_discriminator(state)?;
                self.checkpoint_discriminator(out, state, r + 1)?;
            }
        }
        Ok(())
    }

    fn csv_text(&self, lines: &[String]) -> String {
        let mut s = self.schema.names().join(",");
        s.push('\n');
        for l in lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    fn checkpoint_discriminator(&self, out: &Path, state: &PipelineState, round: usize) -> Result<(), PipelineError> {
        if let Some(model) = &state.discriminator_model {
            write(&out.join("checkpoints").join(format!("discriminator_r{round}.txt")), &model.to_text())?;
        }
        Ok(())
    }

    fn checkpoint_good(&self, out: &Path, state: &PipelineState) -> Result<(), PipelineError> {
        let mut s = format!("round,iteration,{}\n", self.schema.names().join(","));
        for g in &state.good {
            let _ = writeln!(s, "{},{},{}", g.round, g.iteration, g.line);
        }
        write(&out.join("checkpoints").join("good_samples.csv"), &s)
    }

    fn write_logs(&self, out: &Path, state: &PipelineState) -> Result<(), PipelineError> {
        write(&out.join("run_log.csv"), &run_log_csv(&state.run_log))?;
        let mut s = String::from("round,discriminator_accuracy,iterations,new_good,stop\n");
        for r in &state.rounds {
            let stop = r.stop.map_or("", StopReason::label);
            let _ = writeln!(s, "{},{:.6},{},{},{}", r.round, r.discriminator_accuracy, r.iterations, r.new_good, stop);
        }
        write(&out.join("rounds.csv"), &s)
    }

    fn run_summary(&self, state: &PipelineState, released: usize) -> String {
        let mut s = String::from("RUN\n");
        let _ = writeln!(s, "  original rows after preprocessing: {}", self.original.len());
        let _ = writeln!(s, "  good samples collected: {}", state.good.len());
        let _ = writeln!(s, "  released synthetic rows: {released}");
        for r in &state.rounds {
            let _ = writeln!(
                s,
                "  round {}: discriminator accuracy {:.6}, {} iterations, {} new good samples, stopped by {}",
                r.round,
                r.discriminator_accuracy,
                r.iterations,
                r.new_good,
                r.stop.map_or("-", StopReason::label)
            );
        }
        if let Some(last) = state.rounds.last() {
            if last.round < self.config.rounds {
                let _ = writeln!(s, "  utility target reached after round {}", last.round);
            }
        }
        s
    }
}

/// Next population: every good sample of the round (a uniform subset if
/// there are too many), topped up with the best remaining members.
fn reseed(pop: Population, round_good: &[Member], r: &mut rng::Rng) -> Population {
    let size = pop.members.len();
    let mut members: Vec<Member> = if round_good.len() > size {
        let mut idx = sample(r, round_good.len(), size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| round_good[i].clone()).collect()
    } else {
        round_good.to_vec()
    };
    if members.len() < size {
        let taken: HashSet<&str> = members.iter().map(|m| m.text.as_str()).collect();
        let mut rest: Vec<&Member> = pop.members.iter().filter(|m| !taken.contains(m.text.as_str())).collect();
        rest.shuffle(r);
        rest.sort_by(|a, b| evolution::rank(a, b));
        let mut rest: Vec<Member> = rest.into_iter().cloned().collect();
        // duplicates of good samples may be needed to keep the size fixed
        rest.extend(pop.members.iter().filter(|m| taken.contains(m.text.as_str())).cloned());
        members.extend(rest.into_iter().take(size - members.len()));
    }
    Population { members, generation: pop.generation }
}

/// Seeded 70/30 split over groups of identical feature vectors, taken in
/// order of first appearance. Without duplicates this is the plain split.
fn grouped_split(x: &[Vec<f64>], seed: u64) -> Result<(Vec<usize>, Vec<usize>), TabularError> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, row) in x.iter().enumerate() {
        let key = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    let (train, test) = tabular::split_indices(groups.len(), TRAIN_FRACTION, seed)?;
    let expand = |gs: Vec<usize>| gs.into_iter().flat_map(|g| groups[g].iter().copied()).collect();
    Ok((expand(train), expand(test)))
}

pub fn run_log_csv(log: &[LogRecord]) -> String {
    let mut s = String::from("round,iteration,new_good,cumulative_good,fool_rate\n");
    for l in log {
        let _ = writeln!(s, "{},{},{},{},{:.6}", l.round, l.iteration, l.new_good, l.cumulative_good, l.fool_rate);
    }
    s
}

fn write(path: &Path, contents: &str) -> Result<(), PipelineError> {
    tabular::write_atomic(path, contents.as_bytes()).map_err(io)
}

/// Exclusive claim on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(dir.to_path_buf())),
            Err(e) => Err(io(format!("{}: {e}", path.display()))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Loads the grammar file and data named by `config` and performs a full run.
pub fn run(config: PipelineConfig) -> Result<RunOutcome, PipelineError> {
    Pipeline::new(config)?.run()
}
