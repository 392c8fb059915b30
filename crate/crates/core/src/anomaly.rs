//! Isolation forest over multivariate rows.
//!
//! Each tree isolates a random subsample with axis-aligned random splits.
//! Points that isolate quickly (short average path) score close to 1.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

const EULER_GAMMA: f64 = 0.577_215_664_9;

/// Average path length of an unsuccessful BST search over `n` points,
/// `c(n) = 2 H(n−1) − 2 (n−1)/n` with `H(i) ≈ ln i + γ`.
pub fn expected_path_c(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IsoNode {
    Split {
        feature: usize,
        value: f64,
        left: Box<IsoNode>,
        right: Box<IsoNode>,
    },
    Leaf {
        size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoTree {
    pub root: IsoNode,
    pub height_limit: usize,
}

impl IsoTree {
    fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        let mut depth = 0.0;
        loop {
            match node {
                IsoNode::Leaf { size } => return depth + expected_path_c(*size),
                IsoNode::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if x[*feature] < *value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<IsoTree>,
    pub subsample: usize,
    pub n_features: usize,
    pub contamination: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    /// Subsample size ψ; capped at the number of points.
    pub subsample: usize,
    pub contamination: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            subsample: 64,
            contamination: 0.2,
            seed: 0,
        }
    }
}

fn grow(points: &[&[f64]], depth: usize, limit: usize, rng: &mut impl Rng) -> IsoNode {
    if depth >= limit || points.len() <= 1 {
        return IsoNode::Leaf { size: points.len() };
    }
    let d = points[0].len();
    let ranges: Vec<(usize, f64, f64)> = (0..d)
        .filter_map(|f| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[f]), hi.max(p[f]))
            });
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return IsoNode::Leaf { size: points.len() };
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let value = loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            break v;
        }
    };
    let (left, right): (Vec<&[f64]>, Vec<&[f64]>) =
        points.iter().copied().partition(|p| p[feature] < value);
    IsoNode::Split {
        feature,
        value,
        left: Box::new(grow(&left, depth + 1, limit, rng)),
        right: Box::new(grow(&right, depth + 1, limit, rng)),
    }
}

pub fn build_forest(points: &[Vec<f64>], params: ForestParams) -> Result<IsolationForestModel> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            have: points.len(),
        });
    }
    if params.trees == 0 {
        return Err(Error::config("anomaly.trees", "must be at least 1"));
    }
    if params.subsample < 2 {
        return Err(Error::config("anomaly.psi", "must be at least 2"));
    }
    if !(params.contamination > 0.0 && params.contamination <= 0.5) {
        return Err(Error::config("anomaly.contamination", "must lie in (0, 0.5]"));
    }
    let n_features = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != n_features) {
        return Err(Error::FeatureMismatch {
            expected: n_features,
            got: p.len(),
        });
    }
    let psi = params.subsample.min(points.len());
    let height_limit = (psi as f64).log2().ceil() as usize;
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng(derive_seed(params.seed, t as u64));
            let idx = sample(&mut r, points.len(), psi);
            let sub: Vec<&[f64]> = idx.iter().map(|i| points[i].as_slice()).collect();
            IsoTree {
                root: grow(&sub, 0, height_limit, &mut r),
                height_limit,
            }
        })
        .collect();
    Ok(IsolationForestModel {
        trees,
        subsample: psi,
        n_features,
        contamination: params.contamination,
        seed: params.seed,
    })
}

impl IsolationForestModel {
    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// `s = 2^(−E[h(x)] / c(ψ))`.
pub fn anomaly_scores(model: &IsolationForestModel, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    if let Some(p) = points.iter().find(|p| p.len() != model.n_features) {
        return Err(Error::FeatureMismatch {
            expected: model.n_features,
            got: p.len(),
        });
    }
    let c = expected_path_c(model.subsample);
    Ok(points
        .iter()
        .map(|p| 2f64.powf(-model.mean_path_length(p) / c))
        .collect())
}

/// `⌈contamination · n⌉`.
pub fn flag_count(contamination: f64, n: usize) -> usize {
    ((contamination * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Indices of the `⌈contamination · n⌉` highest scores, ascending. Equal
/// scores favour the lower index.
pub fn top_indices(scores: &[f64], contamination: f64) -> Vec<usize> {
    let k = flag_count(contamination, scores.len()).min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flagged = order[..k].to_vec();
    flagged.sort_unstable();
    flagged
}

pub fn detect(model: &IsolationForestModel, points: &[Vec<f64>]) -> Result<Vec<usize>> {
    let scores = anomaly_scores(model, points)?;
    Ok(top_indices(&scores, model.contamination))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand_distr::StandardNormal;

    fn harmonic_formula(n: usize) -> f64 {
        let h: f64 = ((n - 1) as f64).ln() + 0.5772156649;
        2.0 * h - 2.0 * (n as f64 - 1.0) / n as f64
    }

    #[test]
    fn c_values() {
        assert_eq!(expected_path_c(1), 0.0);
        assert!((expected_path_c(2) - 0.15443).abs() < 1e-4);
        assert!((expected_path_c(256) - harmonic_formula(256)).abs() < 1e-9);
        for n in 2..500 {
            assert!(expected_path_c(n + 1) > expected_path_c(n));
        }
    }

    fn cluster_with_outliers(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng(seed);
        let mut pts: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![r.sample(StandardNormal), r.sample(StandardNormal)])
            .collect();
        let mut planted = Vec::new();
        for k in 0..5 {
            let angle: f64 = 2.0 * std::f64::consts::PI * (k as f64 + r.random::<f64>()) / 5.0;
            planted.push(pts.len());
            pts.push(vec![10.0 * angle.cos(), 10.0 * angle.sin()]);
        }
        (pts, planted)
    }

    #[test]
    fn deterministic() {
        let (pts, _) = cluster_with_outliers(1);
        let p = ForestParams {
            seed: 17,
            ..Default::default()
        };
        assert_eq!(build_forest(&pts, p).unwrap(), build_forest(&pts, p).unwrap());
    }

    #[test]
    fn identical_points_make_leaves() {
        let pts = vec![vec![1.0, 2.0]; 2];
        let m = build_forest(&pts, ForestParams::default()).unwrap();
        for t in &m.trees {
            assert!(matches!(t.root, IsoNode::Leaf { size } if size <= 2));
        }
        let pts = vec![vec![0.5; 3]; 10];
        let m = build_forest(&pts, ForestParams::default()).unwrap();
        assert_eq!(detect(&m, &pts).unwrap(), vec![0, 1]);
    }

    #[test]
    fn planted_points_are_isolated_first() {
        let (pts, planted) = cluster_with_outliers(3);
        let m = build_forest(
            &pts,
            ForestParams {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let cluster_min = (0..200).map(|i| m.mean_path_length(&pts[i])).fold(f64::INFINITY, f64::min);
        for &i in &planted {
            assert!(m.mean_path_length(&pts[i]) < cluster_min);
        }
        let scores = anomaly_scores(&m, &pts).unwrap();
        assert!(scores.iter().all(|&s| s > 0.0 && s < 1.0));
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut top: Vec<usize> = order[..5].to_vec();
        top.sort_unstable();
        assert_eq!(top, planted);
    }

    #[test]
    fn pushing_a_point_outward_raises_its_score() {
        let mut wins = 0;
        for trial in 0..100u64 {
            let mut r = rng(400 + trial);
            let mut pts: Vec<Vec<f64>> = (0..200)
                .map(|_| vec![r.sample(StandardNormal), r.sample(StandardNormal)])
                .collect();
            let far = (0..200)
                .max_by(|&a, &b| pts[a][0].hypot(pts[a][1]).total_cmp(&pts[b][0].hypot(pts[b][1])))
                .unwrap();
            let moved: Vec<f64> = pts[far].iter().map(|v| 10.0 * v).collect();
            pts.push(moved);
            let m = build_forest(&pts, ForestParams { seed: trial, ..Default::default() }).unwrap();
            let s = anomaly_scores(&m, &pts).unwrap();
            if s[200] > s[..200].iter().cloned().fold(f64::MIN, f64::max) {
                wins += 1;
            }
        }
        assert!(wins >= 95, "{wins}/100");
    }

    #[test]
    fn score_midpoint() {
        let c = expected_path_c(64);
        assert_eq!(2f64.powf(-c / c), 0.5);
    }

    #[test]
    fn flag_counts() {
        assert_eq!(flag_count(0.2, 83), 17);
        assert_eq!(flag_count(0.2, 10), 2);
        assert_eq!(top_indices(&vec![0.5; 83], 0.2).len(), 17);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_forest(&[vec![1.0]], ForestParams::default()),
            Err(Error::TooFewPoints { .. })
        ));
        let m = build_forest(&[vec![1.0, 2.0], vec![2.0, 1.0]], ForestParams::default()).unwrap();
        assert!(matches!(
            anomaly_scores(&m, &[vec![1.0]]),
            Err(Error::FeatureMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn flag_count_is_exact(n in 1usize..400, c in 0.001f64..=0.5) {
            let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64).collect();
            let flagged = top_indices(&scores, c);
            prop_assert_eq!(flagged.len(), ((c * n as f64) - 1e-9).ceil() as usize);
        }
    }
}
