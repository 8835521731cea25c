//! Shared helpers and independent oracles for integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use tabfuzz::pipeline::{PipelineConfig, RawConfig};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixtures() -> PathBuf {
    repo_root().join("fixtures")
}

/// The mini-insurance config with `out` redirected and extra overrides.
pub fn insurance_config(out: &Path, seed: u64, extra: &[&str]) -> PipelineConfig {
    let mut raw = RawConfig::load(&fixtures().join("mini_insurance.conf")).unwrap();
    raw.apply_override(&format!("out={}", out.display())).unwrap();
    raw.apply_override(&format!("seed={seed}")).unwrap();
    for e in extra {
        raw.apply_override(e).unwrap();
    }
    raw.build().unwrap()
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials).
pub fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| cost[matched[j] - 1][j - 1]).sum()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// W1 between two uniform empirical measures by splitting both into
/// lcm(n, m) equal atoms and solving the resulting assignment problem.
pub fn transport_w1(a: &[f64], b: &[f64]) -> f64 {
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let atoms = |x: &[f64]| -> Vec<f64> { x.iter().flat_map(|&v| std::iter::repeat_n(v, l / x.len())).collect() };
    let (aa, bb) = (atoms(a), atoms(b));
    let cost: Vec<Vec<f64>> = aa.iter().map(|x| bb.iter().map(|y| (x - y).abs()).collect()).collect();
    assignment_cost(&cost) / l as f64
}

/// Exhaustive minimum over all permutations; for cross-checking the
/// assignment solver on tiny inputs.
pub fn permutation_min(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

/// Gaussian naive Bayes posterior for `x`, computed directly in
/// probability space from per-class samples.
pub fn nb_posterior(classes: &[Vec<Vec<f64>>], x: &[f64], variance_floor: f64) -> Vec<f64> {
    let total: usize = classes.iter().map(Vec::len).sum();
    let joint: Vec<f64> = classes
        .iter()
        .map(|rows| {
            let prior = rows.len() as f64 / total as f64;
            let mut p = prior;
            for (f, &xf) in x.iter().enumerate() {
                let n = rows.len() as f64;
                let mean = rows.iter().map(|r| r[f]).sum::<f64>() / n;
                let var = (rows.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n).max(variance_floor);
                p *= (-(xf - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            }
            p
        })
        .collect();
    let z: f64 = joint.iter().sum();
    joint.iter().map(|j| j / z).collect()
}

/// Peak resident set size of this process in KiB, when the platform
/// reports it.
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}
