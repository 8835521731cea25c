use rand::Rng as _;
use rayon::prelude::*;

use super::tree::{DecisionTree, TreeParams};
use super::{argmax_counts, validate, Classifier, MlError, Regressor, Targets};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` uses floor(sqrt(d)) for classification and ceil(d/3) for
    /// regression, at least 1 either way.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: None, min_samples_leaf: 1, max_features: None, seed: 0 }
    }
}

/// Bagged CART trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: usize,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], targets: Targets<'_>, params: ForestParams) -> Result<Self, MlError> {
        let d = validate(x, &targets)?;
        let n = x.len();
        let n_classes = match targets {
            Targets::Classes { n_classes, .. } => n_classes,
            Targets::Values(_) => 0,
        };
        let max_features = params.max_features.unwrap_or(if n_classes > 0 {
            ((d as f64).sqrt().floor() as usize).max(1)
        } else {
            d.div_ceil(3).max(1)
        });
        let trees = (0..params.n_trees.max(1))
            .into_par_iter()
            .map(|t| {
                let seed = rng::derive_seed(params.seed, t as u64);
                let mut r = rng::seeded(seed);
                let bootstrap: Vec<usize> = (0..n).map(|_| r.gen_range(0..n)).collect();
                let tree_params = TreeParams {
                    max_depth: params.max_depth,
                    min_samples_leaf: params.min_samples_leaf,
                    max_features: Some(max_features),
                    seed: r.gen(),
                };
                DecisionTree::fit_indices(x, targets, &bootstrap, tree_params)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RandomForest { trees, n_classes })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }
}

impl Classifier for RandomForest {
    /// Majority vote; ties go to the lowest class index.
    fn predict_one(&self, x: &[f64]) -> usize {
        let mut votes = vec![0; self.n_classes.max(1)];
        for t in &self.trees {
            let c = t.predict_one(x);
            if c < votes.len() {
                votes[c] += 1;
            }
        }
        argmax_counts(&votes)
    }
}

impl Regressor for RandomForest {
    fn predict_value(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_value(x)).sum::<f64>() / self.trees.len() as f64
    }
}
