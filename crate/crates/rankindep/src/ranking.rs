//! Bipartite ranking: scorers learned from negative/positive samples.
//!
//! The ranking tree grows axis-aligned splits chosen to maximize the
//! one-split empirical AUC gain `|n⁻_L/n⁻ − n⁺_L/n⁺|` over a random feature
//! subset, with the local positive fraction as leaf score; the forest
//! averages trees fit on per-class bootstrap resamples. The downstream rank
//! test is invariant to monotone recalibration, so the positive fraction is
//! as good as any monotone transform of the local likelihood ratio.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` considers every feature.
    /// Interaction-driven dependence concentrates the signal in a handful
    /// of lifted features, and restricted candidate sets (e.g. `⌈√dim⌉`)
    /// measurably starve the splits of exactly those.
    pub feature_subsample: Option<usize>,
    pub bootstrap: bool,
    /// Lift the pair features with squares and cross-block products before
    /// growing trees. Single coordinates have identical laws under the
    /// joint and the product of marginals, so without the lift every root
    /// split is noise; the lift exposes the interaction signal to
    /// axis-aligned splits.
    #[serde(default = "default_true")]
    pub interactions: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 5,
            feature_subsample: None,
            bootstrap: true,
            interactions: true,
        }
    }
}

impl ForestConfig {
    pub fn single_tree() -> Self {
        ForestConfig {
            n_trees: 1,
            bootstrap: false,
            ..ForestConfig::default()
        }
    }

    fn validate(&self, dim: usize) -> Result<usize> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::invalid("n_trees, max_depth and min_leaf must be >= 1"));
        }
        let c = self.feature_subsample.unwrap_or(dim);
        if c == 0 || c > dim {
            return Err(Error::invalid(format!(
                "feature_subsample must lie in 1..={dim}, got {c}"
            )));
        }
        Ok(c)
    }
}

/// Feature space the trees split on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum FeatureMap {
    /// The concatenated pair coordinates as-is.
    Raw,
    /// Coordinates augmented with the two block means, then squares and all
    /// cross-block products, plus the paired-product mean. Dependence that
    /// leaves every coordinate's marginal untouched (as the shuffle
    /// construction guarantees) shows up only in cross-block interactions
    /// and block aggregates, which this map exposes to axis-aligned splits.
    Quadratic { q: usize, l: usize },
}

impl FeatureMap {
    pub fn quadratic_for(q: usize, l: usize) -> Self {
        FeatureMap::Quadratic { q, l }
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Raw => input_dim,
            FeatureMap::Quadratic { q, l } => 2 * (q + l + 2) + (q + 1) * (l + 1) + 2,
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::Raw => z.to_vec(),
            FeatureMap::Quadratic { q, l } => {
                let (x, y) = z.split_at(*q);
                let x_mean = x.iter().sum::<f64>() / *q as f64;
                let y_mean = y.iter().sum::<f64>() / *l as f64;
                let pairs = (*q).min(*l);
                let paired_product_mean =
                    (0..pairs).map(|u| x[u] * y[u]).sum::<f64>() / pairs as f64;

                let mut out = Vec::with_capacity(self.output_dim(q + l));
                out.extend_from_slice(x);
                out.push(x_mean);
                out.extend_from_slice(y);
                out.push(y_mean);
                let augmented = out.clone();
                out.extend(augmented.iter().map(|v| v * v));
                for xi in x.iter().chain(std::iter::once(&x_mean)) {
                    for yj in y.iter().chain(std::iter::once(&y_mean)) {
                        out.push(xi * yj);
                    }
                }
                out.push(paired_product_mean);
                out.push(paired_product_mean * paired_product_mean);
                out
            }
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            FeatureMap::Raw => None,
            FeatureMap::Quadratic { q, l } => Some(q + l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        score: f64,
    },
}

/// A fitted ranking tree; prediction is piecewise constant on its leaf cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTree {
    nodes: Vec<TreeNode>,
    dim: usize,
}

impl RankingTree {
    pub fn score(&self, z: &[f64]) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { score } => return *score,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if z[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingForest {
    trees: Vec<RankingTree>,
    dim: usize,
    #[serde(default = "raw_map")]
    map: FeatureMap,
}

fn raw_map() -> FeatureMap {
    FeatureMap::Raw
}

impl RankingForest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.map
    }

    pub fn score(&self, z: &[f64]) -> f64 {
        let lifted = self.map.apply(z);
        let total: f64 = self.trees.iter().map(|t| t.score(&lifted)).sum();
        total / self.trees.len() as f64
    }
}

/// A strictly increasing post-composition map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MonotoneMap {
    Exp,
    /// `v ↦ scale·v + shift` with `scale > 0`.
    Affine { scale: f64, shift: f64 },
}

impl MonotoneMap {
    pub fn apply(&self, v: f64) -> f64 {
        match self {
            MonotoneMap::Exp => v.exp(),
            MonotoneMap::Affine { scale, shift } => scale * v + shift,
        }
    }
}

/// Quadratic form `z ↦ zᵀ θ z` (the Gaussian likelihood-ratio transform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticScorer {
    theta: Vec<f64>,
    dim: usize,
}

impl QuadraticScorer {
    pub fn score(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.theta[i * d + j] * z[j];
            }
            acc += z[i] * row;
        }
        acc
    }
}

/// A scoring function `s: ℝ^{q+l} → ℝ`, learned or analytic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoringModel {
    Tree(RankingTree),
    Forest(RankingForest),
    OracleGaussian(QuadraticScorer),
    OracleGumbel { rho: f64 },
    Constant { value: f64 },
    Monotone {
        inner: Box<ScoringModel>,
        map: MonotoneMap,
    },
}

impl ScoringModel {
    pub fn score(&self, z: &[f64]) -> f64 {
        match self {
            ScoringModel::Tree(t) => t.score(z),
            ScoringModel::Forest(f) => f.score(z),
            ScoringModel::OracleGaussian(q) => q.score(z),
            ScoringModel::OracleGumbel { rho } => rho * (2.0 * z[0] - 1.0) * (2.0 * z[1] - 1.0),
            ScoringModel::Constant { value } => *value,
            ScoringModel::Monotone { inner, map } => map.apply(inner.score(z)),
        }
    }

    pub fn score_all(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|z| self.score(z)).collect()
    }

    /// The input dimension this scorer expects, when it has one.
    pub fn expected_dim(&self) -> Option<usize> {
        match self {
            ScoringModel::Tree(t) => Some(t.dim),
            ScoringModel::Forest(f) => Some(f.dim),
            ScoringModel::OracleGaussian(q) => Some(q.dim),
            ScoringModel::OracleGumbel { .. } => Some(2),
            ScoringModel::Constant { .. } => None,
            ScoringModel::Monotone { inner, .. } => inner.expected_dim(),
        }
    }

    /// Post-compose with a strictly increasing map.
    pub fn with_monotone(self, map: MonotoneMap) -> ScoringModel {
        ScoringModel::Monotone {
            inner: Box::new(self),
            map,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<ScoringModel> {
        Ok(serde_json::from_str(json)?)
    }
}

struct TreeFitter<'a> {
    neg: &'a [Vec<f64>],
    pos: &'a [Vec<f64>],
    dim: usize,
    max_depth: usize,
    min_leaf: usize,
    n_candidates: usize,
    nodes: Vec<TreeNode>,
}

impl<'a> TreeFitter<'a> {
    // Sample `n_candidates` distinct features by partial Fisher–Yates; the
    // full feature set needs no draw.
    fn draw_features(&self, rng: &mut impl Rng) -> Vec<usize> {
        if self.n_candidates == self.dim {
            return (0..self.dim).collect();
        }
        let mut pool: Vec<usize> = (0..self.dim).collect();
        for i in 0..self.n_candidates {
            let j = rng.random_range(i..self.dim);
            pool.swap(i, j);
        }
        pool.truncate(self.n_candidates);
        pool
    }

    fn value(&self, item: (bool, usize), feature: usize) -> f64 {
        if item.0 {
            self.pos[item.1][feature]
        } else {
            self.neg[item.1][feature]
        }
    }

    fn build(&mut self, items: Vec<(bool, usize)>, depth: usize, rng: &mut impl Rng) -> u32 {
        let n_pos = items.iter().filter(|(is_pos, _)| *is_pos).count();
        let n_neg = items.len() - n_pos;
        let leaf_score = n_pos as f64 / items.len() as f64;

        let stop = depth >= self.max_depth
            || n_pos == 0
            || n_neg == 0
            || items.len() < 2 * self.min_leaf;
        if !stop {
            if let Some((feature, threshold)) = self.best_split(&items, n_neg, n_pos, rng) {
                let (left_items, right_items): (Vec<_>, Vec<_>) = items
                    .into_iter()
                    .partition(|&it| self.value(it, feature) <= threshold);
                let slot = self.nodes.len();
                self.nodes.push(TreeNode::Leaf { score: 0.0 }); // placeholder
                let left = self.build(left_items, depth + 1, rng);
                let right = self.build(right_items, depth + 1, rng);
                self.nodes[slot] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                return slot as u32;
            }
        }
        self.nodes.push(TreeNode::Leaf { score: leaf_score });
        (self.nodes.len() - 1) as u32
    }

    fn best_split(
        &self,
        items: &[(bool, usize)],
        n_neg: usize,
        n_pos: usize,
        rng: &mut impl Rng,
    ) -> Option<(usize, f64)> {
        let mut best_gain = 0.0f64;
        let mut best: Option<(usize, f64)> = None;
        let mut column: Vec<(f64, bool)> = Vec::with_capacity(items.len());
        for &feature in &self.draw_features(rng) {
            column.clear();
            column.extend(items.iter().map(|&it| (self.value(it, feature), it.0)));
            column.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));

            let mut left_pos = 0usize;
            let mut left_neg = 0usize;
            for i in 0..column.len() - 1 {
                if column[i].1 {
                    left_pos += 1;
                } else {
                    left_neg += 1;
                }
                if column[i].0 == column[i + 1].0 {
                    continue;
                }
                let left_count = i + 1;
                if left_count < self.min_leaf || items.len() - left_count < self.min_leaf {
                    continue;
                }
                let gain = (left_neg as f64 / n_neg as f64 - left_pos as f64 / n_pos as f64).abs();
                if gain > best_gain + 1e-12 {
                    best_gain = gain;
                    // Midpoint threshold; the guard keeps t strictly below
                    // the right value so {v ≤ t} matches the sweep counts
                    // even when the midpoint rounds up.
                    let mut t = 0.5 * (column[i].0 + column[i + 1].0);
                    if t >= column[i + 1].0 {
                        t = column[i].0;
                    }
                    best = Some((feature, t));
                }
            }
        }
        best
    }
}

fn fit_tree_on(
    neg: &[Vec<f64>],
    pos: &[Vec<f64>],
    cfg: &ForestConfig,
    items: Vec<(bool, usize)>,
    rng: &mut impl Rng,
) -> Result<RankingTree> {
    let dim = neg[0].len();
    let n_candidates = cfg.validate(dim)?;
    let mut fitter = TreeFitter {
        neg,
        pos,
        dim,
        max_depth: cfg.max_depth,
        min_leaf: cfg.min_leaf,
        n_candidates,
        nodes: Vec::new(),
    };
    let root = fitter.build(items, 0, rng);
    debug_assert_eq!(root, 0);
    Ok(RankingTree {
        nodes: fitter.nodes,
        dim,
    })
}

fn check_training_inputs(neg: &[Vec<f64>], pos: &[Vec<f64>]) -> Result<usize> {
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::invalid("both class samples must be nonempty"));
    }
    let dim = neg[0].len();
    if dim == 0 {
        return Err(Error::invalid("feature dimension must be >= 1"));
    }
    for row in neg.iter().chain(pos.iter()) {
        if row.len() != dim {
            return Err(Error::invalid("ragged feature rows"));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
    }
    Ok(dim)
}

/// Fit a single ranking tree on the two class samples.
pub fn fit_ranking_tree(
    neg: &[Vec<f64>],
    pos: &[Vec<f64>],
    cfg: &ForestConfig,
    stream: RngStream,
) -> Result<ScoringModel> {
    check_training_inputs(neg, pos)?;
    let mut rng = stream.rng();
    let items: Vec<(bool, usize)> = (0..neg.len())
        .map(|i| (false, i))
        .chain((0..pos.len()).map(|i| (true, i)))
        .collect();
    Ok(ScoringModel::Tree(fit_tree_on(neg, pos, cfg, items, &mut rng)?))
}

/// Fit a ranking forest on the raw pair coordinates: per-class bootstrap
/// resamples, feature subsampling at every split, mean leaf score across
/// trees. Pair-aware callers lift the features first via
/// [`fit_ranking_forest_with_map`].
pub fn fit_ranking_forest(
    neg: &[Vec<f64>],
    pos: &[Vec<f64>],
    cfg: &ForestConfig,
    stream: RngStream,
) -> Result<ScoringModel> {
    fit_ranking_forest_with_map(neg, pos, FeatureMap::Raw, cfg, stream)
}

/// Fit a ranking forest with trees grown in the mapped feature space; the
/// returned scorer applies the map internally and remains a function of the
/// raw pair coordinates.
pub fn fit_ranking_forest_with_map(
    neg: &[Vec<f64>],
    pos: &[Vec<f64>],
    map: FeatureMap,
    cfg: &ForestConfig,
    stream: RngStream,
) -> Result<ScoringModel> {
    let input_dim = check_training_inputs(neg, pos)?;
    if let Some(expected) = map.input_dim() {
        if expected != input_dim {
            return Err(Error::invalid(format!(
                "feature map expects dimension {expected} but the rows have {input_dim}"
            )));
        }
    }
    if map == FeatureMap::Raw && cfg.n_trees == 1 && !cfg.bootstrap {
        return fit_ranking_tree(neg, pos, cfg, stream);
    }
    let lifted_neg: Vec<Vec<f64>> = neg.iter().map(|z| map.apply(z)).collect();
    let lifted_pos: Vec<Vec<f64>> = pos.iter().map(|z| map.apply(z)).collect();
    cfg.validate(map.output_dim(input_dim))?;
    let trees: Result<Vec<RankingTree>> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.child(t as u64).rng();
            let items: Vec<(bool, usize)> = if cfg.bootstrap {
                let mut items = Vec::with_capacity(lifted_neg.len() + lifted_pos.len());
                for _ in 0..lifted_neg.len() {
                    items.push((false, rng.random_range(0..lifted_neg.len())));
                }
                for _ in 0..lifted_pos.len() {
                    items.push((true, rng.random_range(0..lifted_pos.len())));
                }
                items
            } else {
                (0..lifted_neg.len())
                    .map(|i| (false, i))
                    .chain((0..lifted_pos.len()).map(|i| (true, i)))
                    .collect()
            };
            fit_tree_on(&lifted_neg, &lifted_pos, cfg, items, &mut rng)
        })
        .collect();
    Ok(ScoringModel::Forest(RankingForest {
        trees: trees?,
        dim: input_dim,
        map,
    }))
}

/// The optimal scorer for centered Gaussian pairs:
/// `s(z) = zᵀ (diag(Γ_X⁻¹, Γ_Y⁻¹) − Γ⁻¹) z`, an increasing transform of the
/// likelihood ratio of the joint law against the product of the marginals
/// (`log LR = −½·zᵀ(Γ⁻¹ − diag(Γ_X⁻¹, Γ_Y⁻¹))z + const`); the sign matters,
/// since the optimal ROC curve must sit above the diagonal.
pub fn oracle_gaussian_scorer(
    gamma: &DMatrix<f64>,
    gamma_x: &DMatrix<f64>,
    gamma_y: &DMatrix<f64>,
) -> Result<ScoringModel> {
    let d = gamma.nrows();
    let q = gamma_x.nrows();
    let l = gamma_y.nrows();
    if gamma.ncols() != d || q + l != d || gamma_x.ncols() != q || gamma_y.ncols() != l {
        return Err(Error::invalid("covariance blocks do not assemble to the pair dimension"));
    }
    let inv = |m: &DMatrix<f64>, name: &str| -> Result<DMatrix<f64>> {
        m.clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::invalid(format!("{name} covariance is singular")))
    };
    let gamma_inv = inv(gamma, "joint")?;
    let gx_inv = inv(gamma_x, "X block")?;
    let gy_inv = inv(gamma_y, "Y block")?;
    let mut theta = -gamma_inv;
    for i in 0..q {
        for j in 0..q {
            theta[(i, j)] += gx_inv[(i, j)];
        }
    }
    for i in 0..l {
        for j in 0..l {
            theta[(q + i, q + j)] += gy_inv[(i, j)];
        }
    }
    let flat: Vec<f64> = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| theta[(i, j)])
        .collect();
    Ok(ScoringModel::OracleGaussian(QuadraticScorer {
        theta: flat,
        dim: d,
    }))
}

/// The bilinear-family oracle `s(x, y) = ρ(2x−1)(2y−1)` over uniform
/// marginals.
pub fn oracle_gumbel_scorer(rho: f64) -> Result<ScoringModel> {
    if rho.abs() > 1.0 {
        return Err(Error::invalid(format!("gumbel rho must lie in [-1,1], got {rho}")));
    }
    Ok(ScoringModel::OracleGumbel { rho })
}

impl crate::datagen::ModelSpec {
    /// The analytic oracle scorer for models that admit one (the Gaussian
    /// family and the bilinear family).
    pub fn oracle_scorer(&self) -> Result<ScoringModel> {
        use crate::datagen::ModelId;
        match self.model {
            ModelId::Gl | ModelId::GlPlus => {
                let gamma = self.covariance()?;
                let q = self.dim_x;
                let l = self.dim_y;
                let gamma_x = gamma.view((0, 0), (q, q)).into_owned();
                let gamma_y = gamma.view((q, q), (l, l)).into_owned();
                oracle_gaussian_scorer(&gamma, &gamma_x, &gamma_y)
            }
            ModelId::Gumbel => oracle_gumbel_scorer(self.rho),
            _ => Err(Error::UnsupportedModel(self.label())),
        }
    }
}
