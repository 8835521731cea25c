use std::fmt;

/// A derivation tree for one sentence of a [`Grammar`](super::Grammar).
///
/// `Repeat` nodes stand for a starred or plussed item; their child count is
/// the chosen repetition count. `Group` nodes stand for a parenthesised
/// sub-expression and remember which of its alternatives was taken.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DerivationTree {
    Terminal(String),
    NonTerminal { name: String, alternative: usize, children: Vec<DerivationTree> },
    Group { alternative: usize, children: Vec<DerivationTree> },
    Repeat { children: Vec<DerivationTree> },
}

impl DerivationTree {
    /// The derived string (concatenated terminal leaves).
    pub fn text(&self) -> String {
        let mut out = String::new();
        self.write_leaves(&mut out);
        out
    }

    fn write_leaves(&self, out: &mut String) {
        match self {
            DerivationTree::Terminal(t) => out.push_str(t),
            DerivationTree::NonTerminal { children, .. }
            | DerivationTree::Group { children, .. }
            | DerivationTree::Repeat { children } => {
                for c in children {
                    c.write_leaves(out);
                }
            }
        }
    }

    pub fn symbol(&self) -> Option<&str> {
        match self {
            DerivationTree::NonTerminal { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn children(&self) -> &[DerivationTree] {
        match self {
            DerivationTree::Terminal(_) => &[],
            DerivationTree::NonTerminal { children, .. }
            | DerivationTree::Group { children, .. }
            | DerivationTree::Repeat { children } => children,
        }
    }

    fn children_mut(&mut self) -> &mut [DerivationTree] {
        match self {
            DerivationTree::Terminal(_) => &mut [],
            DerivationTree::NonTerminal { children, .. }
            | DerivationTree::Group { children, .. }
            | DerivationTree::Repeat { children } => children,
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(DerivationTree::node_count).sum::<usize>()
    }

    /// Paths (child index sequences) to every nonterminal node, in
    /// pre-order. The root, if a nonterminal, is the empty path.
    pub fn nonterminal_paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        self.collect_paths(&mut path, &mut out);
        out
    }

    fn collect_paths(&self, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if self.symbol().is_some() {
            out.push(path.clone());
        }
        for (i, c) in self.children().iter().enumerate() {
            path.push(i);
            c.collect_paths(path, out);
            path.pop();
        }
    }

    pub fn get(&self, path: &[usize]) -> Option<&DerivationTree> {
        path.iter().try_fold(self, |node, &i| node.children().get(i))
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut DerivationTree> {
        let mut node = self;
        for &i in path {
            node = node.children_mut().get_mut(i)?;
        }
        Some(node)
    }

    /// Replaces the subtree at `path`, returning the old one.
    pub fn replace(&mut self, path: &[usize], subtree: DerivationTree) -> Option<DerivationTree> {
        let slot = self.get_mut(path)?;
        Some(std::mem::replace(slot, subtree))
    }

    /// First nonterminal node named `name` in pre-order.
    pub fn find(&self, name: &str) -> Option<&DerivationTree> {
        if self.symbol() == Some(name) {
            return Some(self);
        }
        self.children().iter().find_map(|c| c.find(name))
    }

    /// Depth of the node at `path` counted in nonterminal levels above it.
    pub(crate) fn nonterminal_depth(&self, path: &[usize]) -> u32 {
        let mut node = self;
        let mut depth = 0;
        for &i in path {
            if node.symbol().is_some() {
                depth += 1;
            }
            node = &node.children()[i];
        }
        depth
    }
}

impl fmt::Display for DerivationTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}
