//! Backtracking recursive-descent recognizer.
//!
//! Parsing is written in continuation-passing style so that every
//! alternative and every repetition count can be retried when the rest of
//! the input fails to match. Alternatives are tried in source order and
//! repetitions greedily, so an unambiguous grammar yields the unique tree.

use std::collections::HashSet;

use super::{Alternative, DerivationTree, Grammar, Item, ItemKind, Repetition};

const STEP_LIMIT: usize = 2_000_000;
const INLINE_INPUT: usize = 256;
const STACK_PER_BYTE: usize = 16 << 10;

type Cont<'k, 'g, 'i> = &'k mut dyn FnMut(&mut Recognizer<'g, 'i>, usize, DerivationTree) -> bool;

struct Recognizer<'g, 'i> {
    grammar: &'g Grammar,
    input: &'i str,
    // (symbol, position) pairs currently being expanded; re-entering one
    // without consuming input is left recursion and is cut off.
    active: HashSet<(&'g str, usize)>,
    steps: usize,
}

impl Grammar {
    /// Parses `input` as a complete derivation of `symbol`.
    pub fn parse_tree(&self, symbol: &str, input: &str) -> Option<DerivationTree> {
        // Recursion depth grows with the input length, so long inputs get a
        // dedicated thread with a proportionally sized stack.
        if input.len() > INLINE_INPUT {
            let stack = (1 << 25) + input.len() * STACK_PER_BYTE;
            return std::thread::scope(|s| {
                std::thread::Builder::new()
                    .stack_size(stack)
                    .spawn_scoped(s, || self.parse_tree_inline(symbol, input))
                    .ok()?
                    .join()
                    .ok()
                    .flatten()
            });
        }
        self.parse_tree_inline(symbol, input)
    }

    fn parse_tree_inline(&self, symbol: &str, input: &str) -> Option<DerivationTree> {
        let name = self.production(symbol)?.name.as_str();
        let mut rec = Recognizer { grammar: self, input, active: HashSet::new(), steps: 0 };
        let mut found = None;
        rec.symbol(name, 0, &mut |p, end, tree| {
            if end == p.input.len() {
                found = Some(tree);
                true
            } else {
                false
            }
        });
        found
    }

    /// True when `input` is in the language of `symbol`.
    pub fn recognizes(&self, symbol: &str, input: &str) -> bool {
        self.parse_tree(symbol, input).is_some()
    }
}

impl<'g, 'i> Recognizer<'g, 'i> {
    fn tick(&mut self) -> bool {
        self.steps += 1;
        self.steps <= STEP_LIMIT
    }

    fn symbol(&mut self, name: &'g str, pos: usize, k: Cont<'_, 'g, 'i>) -> bool {
        if !self.tick() || !self.active.insert((name, pos)) {
            return false;
        }
        let production = self.grammar.production(name).expect("validated grammar");
        let mut done = false;
        for (index, alt) in production.alternatives.iter().enumerate() {
            let mut acc = Vec::new();
            done = self.sequence(alt, pos, &mut acc, &mut |p, end, children| {
                p.active.remove(&(name, pos));
                let node = DerivationTree::NonTerminal { name: name.to_string(), alternative: index, children };
                let r = k(p, end, node);
                p.active.insert((name, pos));
                r
            });
            if done {
                break;
            }
        }
        self.active.remove(&(name, pos));
        done
    }

    fn sequence(
        &mut self,
        items: &'g [Item],
        pos: usize,
        acc: &mut Vec<DerivationTree>,
        k: &mut dyn FnMut(&mut Self, usize, Vec<DerivationTree>) -> bool,
    ) -> bool {
        let Some((first, rest)) = items.split_first() else {
            return k(self, pos, acc.clone());
        };
        self.item(first, pos, &mut |p, end, node| {
            acc.push(node);
            let r = p.sequence(rest, end, acc, k);
            acc.pop();
            r
        })
    }

    fn item(&mut self, item: &'g Item, pos: usize, k: Cont<'_, 'g, 'i>) -> bool {
        match item.repetition {
            Repetition::None => self.base(&item.kind, pos, k),
            rep => self.repeat(&item.kind, rep.min_count(), pos, &mut Vec::new(), k),
        }
    }

    fn repeat(
        &mut self,
        kind: &'g ItemKind,
        min: usize,
        pos: usize,
        acc: &mut Vec<DerivationTree>,
        k: Cont<'_, 'g, 'i>,
    ) -> bool {
        if !self.tick() {
            return false;
        }
        let count = acc.len();
        let more = self.base(kind, pos, &mut |p, end, node| {
            if end == pos && count >= min {
                return false;
            }
            acc.push(node);
            let r = p.repeat(kind, min, end, acc, k);
            acc.pop();
            r
        });
        if more {
            return true;
        }
        count >= min && k(self, pos, DerivationTree::Repeat { children: acc.clone() })
    }

    fn base(&mut self, kind: &'g ItemKind, pos: usize, k: Cont<'_, 'g, 'i>) -> bool {
        match kind {
            ItemKind::Terminal(t) => {
                self.input[pos..].starts_with(t.as_str())
                    && k(self, pos + t.len(), DerivationTree::Terminal(t.clone()))
            }
            ItemKind::NonTerminal(n) => self.symbol(n, pos, k),
            ItemKind::Group(alts) => self.group(alts, pos, k),
        }
    }

    fn group(&mut self, alts: &'g [Alternative], pos: usize, k: Cont<'_, 'g, 'i>) -> bool {
        for (index, alt) in alts.iter().enumerate() {
            let mut acc = Vec::new();
            let done = self.sequence(alt, pos, &mut acc, &mut |p, end, children| {
                k(p, end, DerivationTree::Group { alternative: index, children })
            });
            if done {
                return true;
            }
        }
        false
    }
}
