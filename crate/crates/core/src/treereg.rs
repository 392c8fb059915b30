//! CART regression trees, bagged/randomized forests, squared-error gradient
//! boosting, and the predictive interpolation of weekly series onto a
//! daily grid.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{cyclic_encode_one, daily_grid, SplitSpec, TimeSeriesFrame};
use crate::mathcore::Matrix;
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CartNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<CartNode>,
        right: Box<CartNode>,
    },
    Leaf {
        value: f64,
    },
}

impl CartNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                CartNode::Leaf { value } => return *value,
                CartNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 1,
            CartNode::Split { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 1,
            CartNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            CartNode::Leaf { .. } => 0,
            CartNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// Best midpoint between consecutive distinct values.
    Best,
    /// One uniform draw inside the node's range per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
    pub threshold: ThresholdMode,
    /// Grow best-first until this many leaves; `None` grows level by level.
    pub max_leaves: Option<usize>,
}

impl Default for CartParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 2,
            max_features: None,
            threshold: ThresholdMode::Best,
            max_leaves: None,
        }
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grower<'a, R: Rng> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a CartParams,
    rng: R,
}

fn mean(y: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

impl<R: Rng> Grower<'_, R> {
    fn best_split(&mut self, idx: &[usize]) -> Option<Candidate> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let first = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == first) {
            return None;
        }
        let sse: f64 = {
            let m = total / n as f64;
            idx.iter().map(|&i| (self.y[i] - m).powi(2)).sum()
        };
        let d = self.x.cols();
        let k = self.params.max_features.unwrap_or(d).clamp(1, d);
        let features: Vec<usize> = if k == d {
            (0..d).collect()
        } else {
            sample(&mut self.rng, d, k).into_vec()
        };
        let base = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        let mut consider = |feature: usize, threshold: f64, gain: f64| {
            if gain > 1e-12 * sse.max(1e-300) && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        };
        for f in features {
            match self.params.threshold {
                ThresholdMode::Best => {
                    let mut order: Vec<usize> = idx.to_vec();
                    order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
                    let mut left_sum = 0.0;
                    for s in 1..n {
                        left_sum += self.y[order[s - 1]];
                        let lo = self.x.get(order[s - 1], f);
                        let hi = self.x.get(order[s], f);
                        if s < min_leaf || n - s < min_leaf || hi <= lo {
                            continue;
                        }
                        let right_sum = total - left_sum;
                        let gain = left_sum * left_sum / s as f64
                            + right_sum * right_sum / (n - s) as f64
                            - base;
                        let mut threshold = lo + (hi - lo) / 2.0;
                        if threshold >= hi {
                            threshold = lo;
                        }
                        consider(f, threshold, gain);
                    }
                }
                ThresholdMode::Random => {
                    let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        let v = self.x.get(i, f);
                        (lo.min(v), hi.max(v))
                    });
                    if hi <= lo {
                        continue;
                    }
                    let threshold = self.rng.random_range(lo..hi);
                    let (mut ls, mut ln) = (0.0, 0usize);
                    for &i in idx {
                        if self.x.get(i, f) <= threshold {
                            ls += self.y[i];
                            ln += 1;
                        }
                    }
                    if ln < min_leaf || n - ln < min_leaf {
                        continue;
                    }
                    let rs = total - ls;
                    let gain = ls * ls / ln as f64 + rs * rs / (n - ln) as f64 - base;
                    consider(f, threshold, gain);
                }
            }
        }
        best
    }

    fn partition(&self, idx: &[usize], c: &Candidate) -> (Vec<usize>, Vec<usize>) {
        idx.iter().partition(|&&i| self.x.get(i, c.feature) <= c.threshold)
    }
}

enum Slot {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

fn assemble(slots: &[Slot], at: usize) -> CartNode {
    match slots[at] {
        Slot::Leaf(value) => CartNode::Leaf { value },
        Slot::Split {
            feature,
            threshold,
            left,
            right,
        } => CartNode::Split {
            feature,
            threshold,
            left: Box::new(assemble(slots, left)),
            right: Box::new(assemble(slots, right)),
        },
    }
}

fn fit_on_rows(
    features: &Matrix,
    targets: &[f64],
    rows: Vec<usize>,
    params: &CartParams,
    seed: u64,
) -> CartNode {
    let mut g = Grower {
        x: features,
        y: targets,
        params,
        rng: rng(seed),
    };
    let depth_ok = |depth: usize| params.max_depth.is_none_or(|m| depth < m);
    let mut slots = vec![Slot::Leaf(mean(targets, &rows))];

    match params.max_leaves {
        None => {
            let mut queue = VecDeque::from([(0usize, rows, 0usize)]);
            while let Some((slot, idx, depth)) = queue.pop_front() {
                if !depth_ok(depth) {
                    continue;
                }
                if let Some(c) = g.best_split(&idx) {
                    let (l, r) = g.partition(&idx, &c);
                    let (li, ri) = (slots.len(), slots.len() + 1);
                    slots.push(Slot::Leaf(mean(targets, &l)));
                    slots.push(Slot::Leaf(mean(targets, &r)));
                    slots[slot] = Slot::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left: li,
                        right: ri,
                    };
                    queue.push_back((li, l, depth + 1));
                    queue.push_back((ri, r, depth + 1));
                }
            }
        }
        Some(max_leaves) => {
            let mut frontier: Vec<(usize, Vec<usize>, usize, Option<Candidate>)> = Vec::new();
            let c = if depth_ok(0) { g.best_split(&rows) } else { None };
            frontier.push((0, rows, 0, c));
            let mut leaves = 1;
            while leaves < max_leaves {
                let pick = frontier
                    .iter()
                    .enumerate()
                    .filter_map(|(k, f)| f.3.as_ref().map(|c| (k, c.gain)))
                    .fold(None, |acc: Option<(usize, f64)>, (k, gain)| match acc {
                        Some((_, g0)) if g0 >= gain => acc,
                        _ => Some((k, gain)),
                    });
                let Some((k, _)) = pick else { break };
                let (slot, idx, depth, c) = frontier.swap_remove(k);
                let c = c.expect("picked candidate");
                let (l, r) = g.partition(&idx, &c);
                let (li, ri) = (slots.len(), slots.len() + 1);
                slots.push(Slot::Leaf(mean(targets, &l)));
                slots.push(Slot::Leaf(mean(targets, &r)));
                slots[slot] = Slot::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: li,
                    right: ri,
                };
                leaves += 1;
                for (si, part) in [(li, l), (ri, r)] {
                    let cand = if depth_ok(depth + 1) { g.best_split(&part) } else { None };
                    frontier.push((si, part, depth + 1, cand));
                }
            }
        }
    }
    assemble(&slots, 0)
}

fn check_training_set(features: &Matrix, targets: &[f64], min_leaf: usize) -> Result<()> {
    if features.rows() != targets.len() {
        return Err(Error::dims(format!(
            "{} feature rows for {} targets",
            features.rows(),
            targets.len()
        )));
    }
    let needed = 2 * min_leaf.max(1);
    if targets.len() < needed {
        return Err(Error::TooFewSamples {
            needed,
            have: targets.len(),
        });
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite regression target".into()));
    }
    Ok(())
}

/// Greedy variance-reduction tree. Splits send `x[f] <= threshold` left.
pub fn fit_cart(
    features: &Matrix,
    targets: &[f64],
    params: &CartParams,
    seed: u64,
) -> Result<CartNode> {
    check_training_set(features, targets, params.min_leaf)?;
    Ok(fit_on_rows(
        features,
        targets,
        (0..targets.len()).collect(),
        params,
        seed,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestMode {
    RandomForest,
    ExtraTrees,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Only meaningful for `RandomForest`.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_leaf: 2,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn cart_params(&self, mode: ForestMode, n_features: usize) -> CartParams {
        match mode {
            ForestMode::RandomForest => CartParams {
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                max_features: Some((n_features as f64).sqrt().ceil() as usize),
                threshold: ThresholdMode::Best,
                max_leaves: None,
            },
            ForestMode::ExtraTrees => CartParams {
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                max_features: None,
                threshold: ThresholdMode::Random,
                max_leaves: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<CartNode>,
    pub mode: ForestMode,
    pub params: ForestParams,
    pub seed: u64,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Tree `t` is grown with seed `derive_seed(seed, t)`; bootstrap rows come
/// from a separate stream so a non-bootstrapped single tree equals `fit_cart`.
pub fn fit_forest(
    features: &Matrix,
    targets: &[f64],
    mode: ForestMode,
    params: ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    check_training_set(features, targets, params.min_leaf)?;
    if params.n_trees == 0 {
        return Err(Error::config("interpolation.trees", "must be at least 1"));
    }
    let cart = params.cart_params(mode, features.cols());
    let n = targets.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive_seed(seed, t as u64);
            let rows: Vec<usize> = if mode == ForestMode::RandomForest && params.bootstrap {
                let mut r = rng(derive_seed(tree_seed, u64::MAX));
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_on_rows(features, targets, rows, &cart, tree_seed)
        })
        .collect();
    Ok(ForestModel {
        trees,
        mode,
        params,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Growth {
    DepthWise { max_depth: Option<usize> },
    LeafWise { max_leaves: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub growth: Growth,
    pub learning_rate: f64,
    pub stages: usize,
    pub min_leaf: usize,
}

impl GbmParams {
    pub fn depth_wise() -> Self {
        Self {
            growth: Growth::DepthWise { max_depth: Some(3) },
            learning_rate: 0.1,
            stages: 200,
            min_leaf: 2,
        }
    }

    pub fn leaf_wise() -> Self {
        Self {
            growth: Growth::LeafWise { max_leaves: 8 },
            ..Self::depth_wise()
        }
    }

    fn cart_params(&self) -> CartParams {
        let (max_depth, max_leaves) = match self.growth {
            Growth::DepthWise { max_depth } => (max_depth, None),
            Growth::LeafWise { max_leaves } => (None, Some(max_leaves)),
        };
        CartParams {
            max_depth,
            min_leaf: self.min_leaf,
            max_features: None,
            threshold: ThresholdMode::Best,
            max_leaves,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub base: f64,
    pub stages: Vec<CartNode>,
    pub params: GbmParams,
    pub seed: u64,
    /// Training MSE before any stage, then after each stage.
    pub train_loss: Vec<f64>,
}

impl GbmModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base
            + self.params.learning_rate * self.stages.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

pub fn fit_gbm(features: &Matrix, targets: &[f64], params: GbmParams, seed: u64) -> Result<GbmModel> {
    check_training_set(features, targets, params.min_leaf)?;
    if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::config("interpolation.learning_rate", "must lie in (0, 1]"));
    }
    let n = targets.len();
    let base = targets.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let cart = params.cart_params();
    let mse = |f: &[f64]| f.iter().zip(targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mse(&fitted)];
    let mut stages = Vec::with_capacity(params.stages);
    for s in 0..params.stages {
        let residuals: Vec<f64> = targets.iter().zip(&fitted).map(|(y, f)| y - f).collect();
        let tree = fit_on_rows(features, &residuals, (0..n).collect(), &cart, derive_seed(seed, s as u64));
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += params.learning_rate * tree.predict(features.row(i));
        }
        train_loss.push(mse(&fitted));
        stages.push(tree);
    }
    Ok(GbmModel {
        base,
        stages,
        params,
        seed,
        train_loss,
    })
}

/// The four ensemble presets ranked during interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Preset {
    RandomForest,
    ExtraTrees,
    /// Level-wise boosted trees (XGBoost-like).
    GbmDepthWise,
    /// Best-first boosted trees (LightGBM-like).
    GbmLeafWise,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::RandomForest,
        Preset::ExtraTrees,
        Preset::GbmDepthWise,
        Preset::GbmLeafWise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::RandomForest => "RandomForest",
            Preset::ExtraTrees => "ExtraTrees",
            Preset::GbmDepthWise => "GBM-DepthWise",
            Preset::GbmLeafWise => "GBM-LeafWise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpolationConfig {
    pub split: f64,
    pub trees: usize,
    pub stages: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        Self {
            split: 0.8,
            trees: 200,
            stages: 200,
            learning_rate: 0.1,
            min_leaf: 2,
        }
    }
}

/// Minimum observed cells per parameter for interpolation.
pub const MIN_OBSERVED: usize = 20;

enum Fitted {
    Forest(ForestModel),
    Gbm(GbmModel),
}

impl Fitted {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Fitted::Forest(m) => m.predict(x),
            Fitted::Gbm(m) => m.predict(x),
        }
    }
}

fn fit_preset(
    preset: Preset,
    x: &Matrix,
    y: &[f64],
    cfg: &InterpolationConfig,
    seed: u64,
) -> Result<Fitted> {
    let forest = ForestParams {
        n_trees: cfg.trees,
        min_leaf: cfg.min_leaf,
        ..ForestParams::default()
    };
    let gbm = |base: GbmParams| GbmParams {
        learning_rate: cfg.learning_rate,
        stages: cfg.stages,
        min_leaf: cfg.min_leaf,
        ..base
    };
    Ok(match preset {
        Preset::RandomForest => Fitted::Forest(fit_forest(x, y, ForestMode::RandomForest, forest, seed)?),
        Preset::ExtraTrees => Fitted::Forest(fit_forest(x, y, ForestMode::ExtraTrees, forest, seed)?),
        Preset::GbmDepthWise => Fitted::Gbm(fit_gbm(x, y, gbm(GbmParams::depth_wise()), seed)?),
        Preset::GbmLeafWise => Fitted::Gbm(fit_gbm(x, y, gbm(GbmParams::leaf_wise()), seed)?),
    })
}

/// Interpolation features: `(sin, cos)` of the day of year plus the day
/// offset from `origin`, which lets the trees follow trend.
pub fn time_features(date: chrono::NaiveDate, origin: chrono::NaiveDate) -> [f64; 3] {
    let (s, c) = cyclic_encode_one(date);
    [s, c, (date - origin).num_days() as f64]
}

pub const FEATURE_NAMES: [&str; 3] = ["sin_day_of_year", "cos_day_of_year", "day_index"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub preset: Preset,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPlan {
    pub parameter: String,
    /// Best validation MSE first.
    pub ranking: Vec<ModelScore>,
    pub chosen: Vec<Preset>,
    pub fixed_choice: bool,
    pub observed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationPlan {
    pub features: Vec<String>,
    pub notes: Vec<String>,
    pub split: f64,
    pub metric_space: String,
    pub parameters: Vec<ParameterPlan>,
}

#[derive(Debug, Clone)]
pub struct Interpolation {
    pub daily: TimeSeriesFrame,
    pub plan: InterpolationPlan,
}

/// Mn always averages these three, whatever the ranking says.
pub const MN_PRESETS: [Preset; 3] = [Preset::RandomForest, Preset::GbmDepthWise, Preset::ExtraTrees];

struct ColumnResult {
    plan: ParameterPlan,
    daily: Vec<Option<f64>>,
}

fn interpolate_column(
    frame: &TimeSeriesFrame,
    c: usize,
    grid: &[chrono::NaiveDate],
    cfg: &InterpolationConfig,
    seed: u64,
) -> Result<ColumnResult> {
    let name = frame.names()[c].clone();
    let origin = frame.dates()[0];
    let observed: Vec<(usize, f64)> = frame
        .column(c)
        .iter()
        .enumerate()
        .filter_map(|(r, v)| v.map(|v| (r, v)))
        .collect();
    if observed.len() < MIN_OBSERVED {
        return Err(Error::TooFewSamples {
            needed: MIN_OBSERVED,
            have: observed.len(),
        });
    }
    let lo = observed.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    let hi = observed.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scale = |v: f64| if span > 0.0 { (v - lo) / span } else { 0.0 };
    let unscale = |s: f64| lo + s * span;

    let feats: Vec<f64> = observed
        .iter()
        .flat_map(|&(r, _)| time_features(frame.dates()[r], origin))
        .collect();
    let x_all = Matrix::new(observed.len(), 3, feats)?;
    let y_all: Vec<f64> = observed.iter().map(|o| scale(o.1)).collect();

    let cut = SplitSpec::new(cfg.split)?.train_len(observed.len());
    let x_train = Matrix::new(cut, 3, x_all.as_slice()[..cut * 3].to_vec())?;
    let y_train = &y_all[..cut];

    let preset_seed = |p: Preset| derive_seed(seed, ((c as u64) << 8) | p as u64);
    let mut ranking = Vec::with_capacity(4);
    for p in Preset::ALL {
        let model = fit_preset(p, &x_train, y_train, cfg, preset_seed(p))?;
        let m = (observed.len() - cut) as f64;
        let (mut se, mut ae) = (0.0, 0.0);
        for i in cut..observed.len() {
            let e = model.predict(x_all.row(i)) - y_all[i];
            se += e * e;
            ae += e.abs();
        }
        ranking.push(ModelScore {
            preset: p,
            mse: se / m,
            mae: ae / m,
        });
    }
    ranking.sort_by(|a, b| a.mse.total_cmp(&b.mse).then(a.preset.cmp(&b.preset)));

    let fixed_choice = name == "Mn";
    let chosen: Vec<Preset> = if fixed_choice {
        MN_PRESETS.to_vec()
    } else {
        ranking.iter().take(3).map(|s| s.preset).collect()
    };

    let models = chosen
        .iter()
        .map(|&p| fit_preset(p, &x_all, &y_all, cfg, preset_seed(p)))
        .collect::<Result<Vec<_>>>()?;

    let mut observed_on = std::collections::BTreeMap::new();
    for &(r, v) in &observed {
        observed_on.insert(frame.dates()[r], v);
    }
    let daily = grid
        .iter()
        .map(|&d| {
            if let Some(&v) = observed_on.get(&d) {
                return Some(v);
            }
            let x = time_features(d, origin);
            let s = models.iter().map(|m| m.predict(&x)).sum::<f64>() / models.len() as f64;
            // boosted stages can step slightly outside the observed hull
            Some(unscale(s).clamp(lo, hi))
        })
        .collect();

    Ok(ColumnResult {
        plan: ParameterPlan {
            parameter: name,
            ranking,
            chosen,
            fixed_choice,
            observed: observed.len(),
        },
        daily,
    })
}

/// Fills a (weekly, possibly gappy) frame onto an inclusive daily grid.
/// Observed cells are kept verbatim; every other day is the mean of three
/// tree ensembles fitted on the time features.
pub fn interpolate(
    frame: &TimeSeriesFrame,
    cfg: &InterpolationConfig,
    seed: u64,
) -> Result<Interpolation> {
    if frame.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    SplitSpec::new(cfg.split)?;
    let grid = daily_grid(frame.dates()[0], *frame.dates().last().expect("nonempty"));
    let results = (0..frame.n_cols())
        .into_par_iter()
        .map(|c| interpolate_column(frame, c, &grid, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let (plans, columns): (Vec<_>, Vec<_>) = results.into_iter().map(|r| (r.plan, r.daily)).unzip();
    let daily = TimeSeriesFrame::new(grid, frame.names().to_vec(), columns)?;
    Ok(Interpolation {
        daily,
        plan: InterpolationPlan {
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            notes: vec![
                "day_index is an added trend feature alongside the cyclic day-of-year pair".into(),
                "Mn averages RandomForest, GBM-DepthWise and ExtraTrees regardless of rank".into(),
                "chosen models are refitted on all observed rows before predicting the daily grid".into(),
            ],
            split: cfg.split,
            metric_space: "per-parameter min-max scaled to [0,1]".into(),
            parameters: plans,
        },
    })
}

/// `parameter,model,mse_scaled,mae_scaled,rank,selected`
pub fn write_model_table(path: &Path, plan: &InterpolationPlan) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "model", "mse_scaled", "mae_scaled", "rank", "selected"])?;
    for p in &plan.parameters {
        for (rank, s) in p.ranking.iter().enumerate() {
            w.write_record([
                p.parameter.clone(),
                s.preset.name().to_string(),
                s.mse.to_string(),
                s.mae.to_string(),
                (rank + 1).to_string(),
                p.chosen.contains(&s.preset).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
