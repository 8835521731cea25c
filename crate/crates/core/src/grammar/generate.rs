use rand::Rng;

use super::{Alternative, DerivationTree, Grammar, GrammarError, Item, ItemKind, Repetition};

pub const DEFAULT_DEPTH_BUDGET: u32 = 64;

/// Once the remaining budget drops below this, only the shallowest
/// alternatives are taken and repetitions collapse to their minimum.
const LOW_WATER: u32 = 8;

/// Repetition counts for `*` and `+` are geometric with the given mean,
/// truncated at `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepetitionPolicy {
    pub mean: f64,
    pub cap: usize,
}

impl Default for RepetitionPolicy {
    fn default() -> Self {
        RepetitionPolicy { mean: 4.0, cap: 20 }
    }
}

impl RepetitionPolicy {
    fn sample(&self, min: usize, rng: &mut impl Rng) -> usize {
        let extra_mean = (self.mean - min as f64).max(0.0);
        let cont = extra_mean / (extra_mean + 1.0);
        let mut n = min;
        while n < self.cap && rng.gen_bool(cont) {
            n += 1;
        }
        n.max(min.min(self.cap))
    }
}

/// Random sentence generator over a grammar.
#[derive(Debug, Clone, Copy)]
pub struct Generator<'g> {
    grammar: &'g Grammar,
    policy: RepetitionPolicy,
}

impl<'g> Generator<'g> {
    pub fn new(grammar: &'g Grammar) -> Self {
        Generator { grammar, policy: RepetitionPolicy::default() }
    }

    pub fn with_policy(mut self, policy: RepetitionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn grammar(&self) -> &'g Grammar {
        self.grammar
    }

    /// Generates a tree rooted at `symbol`. `budget` bounds the number of
    /// nested nonterminal expansions.
    pub fn generate(
        &self,
        symbol: &str,
        budget: u32,
        rng: &mut impl Rng,
    ) -> Result<DerivationTree, GrammarError> {
        if !self.grammar.contains(symbol) {
            return Err(GrammarError::UnknownSymbol(symbol.to_string()));
        }
        match self.grammar.min_depth(symbol) {
            Some(d) if d <= budget => Ok(self.symbol(symbol, budget, rng)),
            _ => Err(GrammarError::Unsatisfiable { symbol: symbol.to_string(), budget }),
        }
    }

    // Invariant for the private helpers: the requested expansion fits in
    // `budget`, so the shallowest choice always exists.
    fn symbol(&self, name: &str, budget: u32, rng: &mut impl Rng) -> DerivationTree {
        let alts = self.grammar.alternatives(name).expect("checked symbol");
        let (index, alt) = self.choose(alts, budget - 1, rng);
        DerivationTree::NonTerminal {
            name: name.to_string(),
            alternative: index,
            children: self.sequence(alt, budget - 1, rng),
        }
    }

    fn choose<'a>(
        &self,
        alts: &'a [Alternative],
        budget: u32,
        rng: &mut impl Rng,
    ) -> (usize, &'a Alternative) {
        let depths: Vec<Option<u32>> = alts.iter().map(|a| self.grammar.alternative_depth(a)).collect();
        let fitting: Vec<usize> = (0..alts.len())
            .filter(|&i| depths[i].is_some_and(|d| d <= budget))
            .collect();
        let pool: Vec<usize> = if budget < LOW_WATER {
            let shallowest = fitting.iter().filter_map(|&i| depths[i]).min();
            fitting.into_iter().filter(|&i| depths[i] == shallowest).collect()
        } else {
            fitting
        };
        let i = pool[rng.gen_range(0..pool.len())];
        (i, &alts[i])
    }

    fn sequence(&self, alt: &Alternative, budget: u32, rng: &mut impl Rng) -> Vec<DerivationTree> {
        alt.iter().map(|item| self.item(item, budget, rng)).collect()
    }

    fn item(&self, item: &Item, budget: u32, rng: &mut impl Rng) -> DerivationTree {
        if item.repetition == Repetition::None {
            return self.base(&item.kind, budget, rng);
        }
        let base_fits = self
            .grammar
            .item_depth(&Item { kind: item.kind.clone(), repetition: Repetition::None })
            .is_some_and(|d| d <= budget);
        let min = item.repetition.min_count();
        let count = if !base_fits {
            0
        } else if budget < LOW_WATER {
            min
        } else {
            self.policy.sample(min, rng)
        };
        DerivationTree::Repeat {
            children: (0..count).map(|_| self.base(&item.kind, budget, rng)).collect(),
        }
    }

    fn base(&self, kind: &ItemKind, budget: u32, rng: &mut impl Rng) -> DerivationTree {
        match kind {
            ItemKind::Terminal(t) => DerivationTree::Terminal(t.clone()),
            ItemKind::NonTerminal(n) => self.symbol(n, budget, rng),
            ItemKind::Group(alts) => {
                let (index, alt) = self.choose(alts, budget, rng);
                DerivationTree::Group { alternative: index, children: self.sequence(alt, budget, rng) }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_spec;
    use crate::rng::seeded;

    const FIG1: &str = include_str!("../../../../specs/example.fan");

    #[test]
    fn job_is_one_of_the_vocabulary() {
        let spec = parse_spec(FIG1).unwrap();
        let gen = Generator::new(&spec.grammar);
        let mut rng = seeded(7);
        for _ in 0..50 {
            let t = gen.generate("job", 64, &mut rng).unwrap();
            assert!(["librarian", "neurosurgeon", "president"].contains(&t.text().as_str()));
        }
    }

    #[test]
    fn digit_is_single_char() {
        let spec = parse_spec(FIG1).unwrap();
        let gen = Generator::new(&spec.grammar);
        let mut rng = seeded(1);
        for _ in 0..50 {
            let t = gen.generate("digit", 64, &mut rng).unwrap().text();
            assert_eq!(t.len(), 1);
            assert!(t.chars().all(|c| c.is_ascii_digit()));
        }
    }

    #[test]
    fn non_terminating_grammar() {
        let spec = parse_spec("<a> ::= <a>").unwrap();
        let gen = Generator::new(&spec.grammar);
        for budget in [1, 10, 1000] {
            let err = gen.generate("a", budget, &mut seeded(0)).unwrap_err();
            assert!(matches!(err, GrammarError::Unsatisfiable { .. }));
        }
    }

    #[test]
    fn budget_too_small() {
        let spec = parse_spec("<a> ::= <b>\n<b> ::= <c>\n<c> ::= 'x'").unwrap();
        let gen = Generator::new(&spec.grammar);
        assert!(gen.generate("a", 2, &mut seeded(0)).is_err());
        assert_eq!(gen.generate("a", 3, &mut seeded(0)).unwrap().text(), "x");
    }

    #[test]
    fn recursion_terminates_under_budget() {
        let spec = parse_spec("<e> ::= <e> '+' <e> | '(' <e> ')' | 'x'").unwrap();
        let gen = Generator::new(&spec.grammar);
        let mut rng = seeded(3);
        for _ in 0..200 {
            let t = gen.generate("e", 12, &mut rng).unwrap();
            assert!(t.text().contains('x'));
        }
    }

    #[test]
    fn repetition_counts_bounded() {
        let spec = parse_spec("<s> ::= 'a'*").unwrap();
        let gen = Generator::new(&spec.grammar);
        let mut rng = seeded(11);
        let lens: Vec<usize> = (0..4000).map(|_| gen.generate("s", 64, &mut rng).unwrap().text().len()).collect();
        assert!(lens.iter().all(|&n| n <= 20));
        let mean = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
        // geometric mean 4, slightly reduced by the cap
        assert!((mean - 4.0).abs() < 0.25, "mean {mean}");
    }
}
