//! Randomized invariants across modules.

mod common;

use std::fs;
use std::sync::Arc;

use proptest::prelude::*;

use tabfuzz::constraints::{fitness, parse_where_clause, ClassifierConstraint, FitnessScore, StaticConstraint};
use tabfuzz::evaluation::{privacy_audit, resemblance, utility_matrix, wasserstein_1d, TaskKind, UtilityOptions};
use tabfuzz::evolution::{evolve_step, seed_population, EvolutionConfig};
use tabfuzz::grammar::{parse_spec, ColumnKind, DerivationTree, Generator, RowLayout, RowRecord, Spec, Value, DEFAULT_DEPTH_BUDGET};
use tabfuzz::ml::{Classifier, DecisionTree, ForestParams, RandomForest, Targets, TreeParams};
use tabfuzz::rng;
use tabfuzz::tabular::{self, Cell, Dataset, Provenance, Schema};

fn load_spec(path: &str) -> Spec {
    parse_spec(&fs::read_to_string(common::repo_root().join(path)).unwrap()).unwrap()
}

#[test]
fn generated_trees_round_trip_and_stay_in_language() {
    for path in ["specs/example.fan", "specs/insurance.fan", "specs/adult.fan", "fixtures/mini_insurance.fan"] {
        let spec = load_spec(path);
        let g = &spec.grammar;
        let generator = Generator::new(g);
        let row = RowLayout::from_grammar(g).unwrap().row_symbol;
        for seed in 0..1000u64 {
            let symbol = if seed % 10 == 0 { g.start_symbol().to_string() } else { row.clone() };
            let tree = generator.generate(&symbol, DEFAULT_DEPTH_BUDGET, &mut rng::seeded(seed)).unwrap();
            let text = tree.text();
            let again = g.parse_tree(&symbol, &text).unwrap_or_else(|| panic!("{path}: {text:?} not recognized"));
            assert_eq!(again, tree, "{path}: re-parse of {text:?} differs");
            let twin = generator.generate(&symbol, DEFAULT_DEPTH_BUDGET, &mut rng::seeded(seed)).unwrap();
            assert_eq!(twin.text(), text);
        }
    }
}

#[test]
fn fixture_rows_parse_under_their_grammar() {
    for name in ["mini_insurance", "mini_insurance_noise"] {
        let spec = load_spec(&format!("fixtures/{name}.fan"));
        let csv = fs::read_to_string(common::fixtures().join(format!("{name}.csv"))).unwrap();
        assert!(spec.grammar.recognizes(spec.grammar.start_symbol(), &csv), "{name}");
    }
}

fn small_sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 2.0), 1..=6)
}

proptest! {
    #[test]
    fn w1_is_a_metric_matching_transport(a in small_sample(), b in small_sample(), c in small_sample()) {
        let ab = wasserstein_1d(&a, &b).unwrap();
        let ba = wasserstein_1d(&b, &a).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((ab - common::transport_w1(&a, &b)).abs() < 1e-9);
        let mut shuffled = a.clone();
        shuffled.reverse();
        prop_assert_eq!(wasserstein_1d(&a, &shuffled).unwrap(), 0.0);
        let (ac, cb) = (wasserstein_1d(&a, &c).unwrap(), wasserstein_1d(&c, &b).unwrap());
        prop_assert!(ab <= ac + cb + 1e-9);
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        // zero exactly when the empirical distributions coincide
        let same = a.len() == b.len() && sa == sb;
        if same { prop_assert_eq!(ab, 0.0); }
    }
}

const TWO_COLUMNS: &str = "<start> ::= <header> '\\n' (<row> '\\n')*\n<header> ::= 'a,b'\n<row> ::= <a> ',' <b>\n<a> ::= <digit>+\n<b> ::= <digit>+\n<digit> ::= '0' | ... | '9'\n";

fn numeric_dataset(rows: &[(f64, f64)]) -> Dataset {
    let spec = parse_spec(TWO_COLUMNS).unwrap();
    let schema = Arc::new(Schema::from_layout(&RowLayout::from_grammar(&spec.grammar).unwrap()));
    Dataset::new(schema, rows.iter().map(|&(a, b)| vec![Cell::Num(a), Cell::Num(b)]).collect(), Provenance::Original)
}

fn pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec(((-50i32..50).prop_map(f64::from), (0i32..30).prop_map(f64::from)), 1..12)
}

proptest! {
    #[test]
    fn resemblance_ignores_joint_affine_rescaling(
        x in pairs(), y in pairs(),
        sa in prop_oneof![0.1f64..10.0, -10.0f64..-0.1], ta in -100.0f64..100.0,
        sb in 0.1f64..10.0, tb in -100.0f64..100.0,
    ) {
        let map = |v: &[(f64, f64)]| -> Vec<(f64, f64)> { v.iter().map(|&(a, b)| (sa * a + ta, sb * b + tb)).collect() };
        let before = resemblance(&numeric_dataset(&x), &numeric_dataset(&y)).unwrap().aggregate;
        let after = resemblance(&numeric_dataset(&map(&x)), &numeric_dataset(&map(&y))).unwrap().aggregate;
        prop_assert!((before - after).abs() < 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn normalized_cells_stay_in_unit_interval(x in pairs(), y in pairs()) {
        let (a, b) = tabular::normalize(&numeric_dataset(&x), &numeric_dataset(&y)).unwrap();
        for v in a.iter().chain(&b).flatten() {
            prop_assert!((0.0..=1.0).contains(v));
        }
    }

    #[test]
    fn privacy_of_a_dataset_against_itself(x in pairs()) {
        let d = tabular::preprocess(&numeric_dataset(&x)).unwrap();
        prop_assert_eq!(privacy_audit(&d, &d).duplicates, d.len());
        prop_assert_eq!(privacy_audit(&d, &numeric_dataset(&[])).duplicates, 0);
    }
}

fn fixture_schema() -> Arc<Schema> {
    let spec = load_spec("fixtures/mini_insurance.fan");
    Arc::new(Schema::from_layout(&RowLayout::from_grammar(&spec.grammar).unwrap()).with_target("charges").unwrap())
}

proptest! {
    #[test]
    fn preprocess_is_idempotent(
        rows in prop::collection::vec((0usize..2, 0usize..2, 0u8..4, 15.0f64..50.0, 18i32..65), 0..40),
    ) {
        let schema = fixture_schema();
        let sexes = ["female", "male"];
        let smokers = ["no", "yes"];
        let raw: Vec<Vec<Cell>> = rows
            .iter()
            .map(|&(sex, smoker, hole, bmi, age)| {
                let mut r = vec![
                    Cell::Num(f64::from(age)),
                    Cell::Cat(sexes[sex].into()),
                    Cell::Num((bmi * 10.0).round() / 10.0),
                    Cell::Cat(smokers[smoker].into()),
                    Cell::Num(f64::from(age * 100)),
                ];
                if hole == 0 {
                    r[2] = Cell::Missing;
                }
                r
            })
            .collect();
        let d = Dataset::new(Arc::clone(&schema), raw, Provenance::Original);
        let once = tabular::preprocess(&d).unwrap();
        let twice = tabular::preprocess(&once).unwrap();
        prop_assert_eq!(&once, &twice);
        prop_assert!(once.rows.iter().flatten().all(|c| matches!(c, Cell::Num(_) | Cell::Code(_))));
    }
}

#[test]
fn categorical_codes_decode_to_their_token() {
    for path in ["specs/example.fan", "specs/insurance.fan", "specs/adult.fan", "fixtures/mini_insurance.fan"] {
        let spec = load_spec(path);
        let schema = Schema::from_layout(&RowLayout::from_grammar(&spec.grammar).unwrap());
        for (j, col) in schema.columns.iter().enumerate() {
            if let ColumnKind::Categorical(vocab) = &col.kind {
                for (i, token) in vocab.iter().enumerate() {
                    assert_eq!(schema.encode(j, token), Some(i));
                    assert_eq!(schema.decode(j, i), Some(token.as_str()));
                }
                assert_eq!(schema.encode(j, "not-a-token"), None);
            }
        }
    }
}

struct Const(usize);

impl Classifier for Const {
    fn predict_one(&self, _: &[f64]) -> usize {
        self.0
    }
}

fn example_row(age: u32) -> RowRecord {
    let spec = load_spec("specs/example.fan");
    let layout = Arc::new(RowLayout::from_grammar(&spec.grammar).unwrap());
    RowRecord { layout, values: vec![Value::Number(f64::from(age)), Value::Category("librarian".into()), Value::Number(100.0)] }
}

fn bound(op: &str, k: u32) -> StaticConstraint {
    parse_where_clause(&format!("int(<age>) {op} {k}"), 1).unwrap().remove(0)
}

proptest! {
    #[test]
    fn fitness_moves_with_added_constraints(
        age in 0u32..150,
        base in prop::collection::vec((prop_oneof![Just(">"), Just("<"), Just("==")], 0u32..150), 0..5),
        extra in (prop_oneof![Just(">"), Just("<"), Just(">="), Just("<=")], 0u32..150),
        verdict in 0usize..2,
    ) {
        let row = example_row(age);
        let schema = Schema::from_layout(&row.layout);
        let clf = ClassifierConstraint::new(Arc::new(Const(verdict)), 1);
        let statics: Vec<StaticConstraint> = base.iter().map(|(op, k)| bound(op, *k)).collect();
        let score = |cs: &[StaticConstraint]| fitness(&row, cs, Some((&clf, &schema))).unwrap();
        let before = score(&statics);
        let added = bound(extra.0, extra.1);
        let holds = added.eval(&row).unwrap();
        let credit = added.credit(&row).unwrap();
        let mut more = statics.clone();
        more.push(added);
        let after = score(&more);
        if holds {
            prop_assert!(after >= before, "{:?} -> {:?}", before, after);
        } else {
            // an average can only rise toward the newcomer's partial credit
            prop_assert!(after.value() <= before.value().max(credit), "{:?} -> {:?}", before, after);
            if credit <= before.value() {
                prop_assert!(after <= before, "{:?} -> {:?}", before, after);
            }
        }
        // the classifier earns no partial credit, so a rejection never helps
        let without = fitness(&row, &more, None).unwrap();
        let rejected = fitness(&row, &more, Some((&ClassifierConstraint::new(Arc::new(Const(0)), 1), &schema))).unwrap();
        prop_assert!(rejected <= without);
        let all = more.iter().all(|c| c.eval(&row).unwrap()) && verdict == 1;
        prop_assert_eq!(after.is_perfect(), all);
        prop_assert_eq!(after == FitnessScore::PERFECT, all);
    }
}

#[test]
fn near_miss_credit_can_raise_an_average() {
    // 1 satisfied bound + rejected classifier scores 1/2; adding the
    // violated-but-adjacent `< 70` (credit 1) lifts the mean to 2/3
    let row = example_row(70);
    let schema = Schema::from_layout(&row.layout);
    let clf = ClassifierConstraint::new(Arc::new(Const(0)), 1);
    let one = fitness(&row, &[bound(">", 18)], Some((&clf, &schema))).unwrap().value();
    let two = fitness(&row, &[bound(">", 18), bound("<", 70)], Some((&clf, &schema))).unwrap().value();
    assert_eq!(one, 0.5);
    assert!((two - 2.0 / 3.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn elitism_and_closure_under_evolution(seed in 0u64..10_000) {
        let spec = load_spec("specs/example.fan");
        let layout = Arc::new(RowLayout::from_grammar(&spec.grammar).unwrap());
        let generator = Generator::new(&spec.grammar);
        let statics = spec.constraints.clone();
        let score = |t: &DerivationTree| match layout.tree_to_row(t) {
            Ok(row) => fitness(&row, &statics, None).unwrap_or(FitnessScore::ZERO),
            Err(_) => FitnessScore::ZERO,
        };
        let config = EvolutionConfig { population_size: 30, seed, ..Default::default() };
        let mut r = rng::seeded(seed);
        let mut pop = seed_population(&[], &config, &generator, "row", &score, &mut r).unwrap();
        let mut best = pop.best().unwrap().fitness.value();
        for _ in 0..25 {
            pop = evolve_step(&pop, &score, &config, &generator, &mut r);
            let now = pop.best().unwrap().fitness.value();
            prop_assert!(now >= best);
            best = now;
            for m in &pop.members {
                prop_assert!(spec.grammar.recognizes("row", &m.text), "{:?}", m.text);
            }
        }
    }

    #[test]
    fn forest_is_deterministic_under_seed(seed in 0u64..1000) {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i * 37 % 61) as f64, (i * 11 % 7) as f64, i as f64]).collect();
        let y: Vec<usize> = x.iter().map(|r| usize::from(r[0] + r[1] > 35.0)).collect();
        let params = ForestParams { n_trees: 15, seed, ..Default::default() };
        let a = RandomForest::fit(&x, Targets::Classes { labels: &y, n_classes: 2 }, params).unwrap();
        let b = RandomForest::fit(&x, Targets::Classes { labels: &y, n_classes: 2 }, params).unwrap();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn unbounded_tree_fits_distinct_points(
        points in prop::collection::btree_map((0i32..40, 0i32..40), 0usize..3, 1..40),
    ) {
        let x: Vec<Vec<f64>> = points.keys().map(|&(a, b)| vec![f64::from(a), f64::from(b)]).collect();
        let y: Vec<usize> = points.values().copied().collect();
        let tree = DecisionTree::fit(&x, Targets::Classes { labels: &y, n_classes: 3 }, TreeParams::default()).unwrap();
        prop_assert_eq!(tree.predict(&x), y);
    }
}

#[test]
fn utility_matrix_is_deterministic() {
    let spec = load_spec("fixtures/mini_insurance.fan");
    let layout = RowLayout::from_grammar(&spec.grammar).unwrap();
    let schema = Arc::new(Schema::from_layout(&layout).with_target("charges").unwrap());
    let d = tabular::preprocess(&tabular::load_csv(&common::fixtures().join("mini_insurance.csv"), schema).unwrap()).unwrap();
    let (a, b) = tabular::split(&d, 0.5, 9).unwrap();
    let opts = UtilityOptions { task_kind: TaskKind::Regression, forest_trees: 20, seed: 5 };
    assert_eq!(utility_matrix(&a, &b, &opts).unwrap(), utility_matrix(&a, &b, &opts).unwrap());
}
