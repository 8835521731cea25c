use super::{validate, Classifier, MlError, Targets};

const VARIANCE_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with empirical class priors and per-class,
/// per-feature maximum-likelihood variances (floored at 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNB {
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianNB {
    pub fn fit(x: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Result<Self, MlError> {
        let d = validate(x, &Targets::Classes { labels, n_classes })?;
        let n = x.len() as f64;
        let mut counts = vec![0usize; n_classes];
        let mut means = vec![vec![0.0; d]; n_classes];
        for (row, &c) in x.iter().zip(labels) {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for (m, &k) in means.iter_mut().zip(&counts) {
            if k > 0 {
                m.iter_mut().for_each(|v| *v /= k as f64);
            }
        }
        let mut variances = vec![vec![0.0; d]; n_classes];
        for (row, &c) in x.iter().zip(labels) {
            for ((s, v), m) in variances[c].iter_mut().zip(row).zip(&means[c]) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, &k) in variances.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|v| *v = (*v / k.max(1) as f64).max(VARIANCE_FLOOR));
        }
        let priors = counts.iter().map(|&k| k as f64 / n).collect();
        Ok(GaussianNB { priors, means, variances })
    }

    /// Unnormalised log posterior per class. Classes unseen in training get
    /// negative infinity.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        self.priors
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(&p, (m, s))| {
                if p == 0.0 {
                    return f64::NEG_INFINITY;
                }
                p.ln()
                    + x.iter()
                        .zip(m.iter().zip(s))
                        .map(|(v, (mu, var))| {
                            -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (v - mu) * (v - mu) / (2.0 * var)
                        })
                        .sum::<f64>()
            })
            .collect()
    }
}

impl Classifier for GaussianNB {
    fn predict_one(&self, x: &[f64]) -> usize {
        let scores = self.log_joint(x);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }
}
