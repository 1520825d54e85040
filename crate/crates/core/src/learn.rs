//! Balanced-weight binary classifiers: a linear soft-margin SVM and a random
//! forest of weighted-Gini CART trees.
//!
//! Labels are `0` (negative / low) and `1` (positive / high). Every tie
//! resolves to class 0.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const SIGMA_FLOOR: f64 = 1e-12;
pub const DEFAULT_SVM_EPOCHS: usize = 300;

/// `w_c = N / (K · N_c)` for K = 2 classes.
pub fn balanced_weights(labels: &[u8]) -> Result<[f64; 2]> {
    let mut counts = [0usize; 2];
    for &y in labels {
        if y > 1 {
            return Err(Error::invalid(format!("label {y} is not binary")));
        }
        counts[y as usize] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::SingleClass(format!(
            "class counts {}/{}",
            counts[0], counts[1]
        )));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)])
}

fn check_matrix(x: &[Vec<f64>], y: Option<&[u8]>) -> Result<usize> {
    let d = x.first().map(|r| r.len()).ok_or_else(|| Error::invalid("empty design matrix"))?;
    for row in x {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
    }
    if let Some(y) = y {
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
    }
    Ok(d)
}

/// Per-column mean and population σ of the training matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Columns with σ below the floor are only centred.
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = check_matrix(x, None)?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sd = vec![0.0; d];
        for row in x {
            for j in 0..d {
                sd[j] += (row[j] - mean[j]).powi(2);
            }
        }
        for s in &mut sd {
            *s = (*s / n).sqrt();
            if *s < SIGMA_FLOOR {
                *s = 1.0;
            }
        }
        Ok(Standardizer { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: row.len() });
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(v, (m, s))| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// Linear decision function `w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub w: Vec<f64>,
    pub b: f64,
}

/// Per-epoch training trace of the averaged iterate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SvmTrace {
    pub objective: Vec<f64>,
}

/// `½(‖w‖² + b²) + C · Σ sᵢ · max(0, 1 − yᵢ(w·xᵢ + b))`, the bias being
/// regularised as an augmented constant feature.
pub fn svm_objective(model: &LinearSvm, x: &[Vec<f64>], y: &[u8], c: f64, weights: [f64; 2]) -> f64 {
    let reg = 0.5 * (model.w.iter().map(|v| v * v).sum::<f64>() + model.b * model.b);
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let s = if yi == 1 { 1.0 } else { -1.0 };
            weights[yi as usize] * (1.0 - s * model.score(row)).max(0.0)
        })
        .sum();
    reg + c * loss
}

impl LinearSvm {
    pub fn score(&self, row: &[f64]) -> f64 {
        self.w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    /// Full-batch projected subgradient descent on the objective above with
    /// step `1/t`, returning the running average of the iterates. The
    /// iterates are kept inside the ball of radius `sqrt(2·C·Σsᵢ)` that
    /// contains the optimum. Deterministic: no sampling is involved.
    pub fn train(x: &[Vec<f64>], y: &[u8], c: f64, weights: [f64; 2], epochs: usize) -> Result<(Self, SvmTrace)> {
        let d = check_matrix(x, Some(y))?;
        if !(c > 0.0) {
            return Err(Error::OutOfRange { what: "C", value: c });
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("class weights must be positive"));
        }
        let signs: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        let sw: Vec<f64> = y.iter().map(|&v| weights[v as usize]).collect();
        let radius = (2.0 * c * sw.iter().sum::<f64>()).sqrt();

        // last coordinate is the bias
        let mut w = vec![0.0; d + 1];
        let mut avg = vec![0.0; d + 1];
        let mut g = vec![0.0; d + 1];
        let mut trace = SvmTrace::default();
        for t in 1..=epochs.max(1) {
            g.copy_from_slice(&w);
            for (i, row) in x.iter().enumerate() {
                let margin = signs[i] * (row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d]);
                if margin < 1.0 {
                    let k = c * sw[i] * signs[i];
                    for (gj, xj) in g.iter_mut().zip(row) {
                        *gj -= k * xj;
                    }
                    g[d] -= k;
                }
            }
            let step = 1.0 / t as f64;
            for (wj, gj) in w.iter_mut().zip(&g) {
                *wj -= step * gj;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            let tf = t as f64;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) / tf;
            }
            let current = LinearSvm {
                w: avg[..d].to_vec(),
                b: avg[d],
            };
            trace.objective.push(svm_objective(&current, x, y, c, weights));
        }
        Ok((
            LinearSvm {
                w: avg[..d].to_vec(),
                b: avg[d],
            },
            trace,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Resample the training rows with replacement for each tree.
    pub bootstrap: bool,
    /// Consider every feature at each split instead of `⌈√d⌉`.
    pub all_features: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
            all_features: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flattened tree; node 0 is the root. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// `1 − Σ p_c²` over class masses.
pub fn gini(mass: [f64; 2]) -> f64 {
    let total = mass[0] + mass[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p0 = mass[0] / total;
    let p1 = mass[1] / total;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    /// per-row weight: class weight × bootstrap multiplicity
    w: Vec<f64>,
    /// per-row multiplicity, used for `min_leaf`
    count: Vec<usize>,
    params: ForestParams,
    n_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy)]
struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl TreeBuilder<'_> {
    fn mass(&self, rows: &[usize]) -> [f64; 2] {
        let mut m = [0.0; 2];
        for &r in rows {
            m[self.y[r] as usize] += self.w[r];
        }
        m
    }

    fn leaf(&mut self, mass: [f64; 2]) -> usize {
        let class = u8::from(mass[1] > mass[0]);
        self.nodes.push(Node::Leaf { class });
        self.nodes.len() - 1
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x[0].len();
        if self.n_features >= d {
            return (0..d).collect();
        }
        let mut f = sample(&mut self.rng, d, self.n_features).into_vec();
        f.sort_unstable();
        f
    }

    fn best_split(&mut self, rows: &[usize], parent: f64) -> Option<BestSplit> {
        let features = self.candidate_features();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<BestSplit> = None;
        let mut order = rows.to_vec();
        let total_mass = self.mass(rows);
        let total_count: usize = rows.iter().map(|&r| self.count[r]).sum();
        for f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = [0.0; 2];
            let mut left_count = 0usize;
            for k in 0..order.len() - 1 {
                let r = order[k];
                left[self.y[r] as usize] += self.w[r];
                left_count += self.count[r];
                let (a, b) = (self.x[r][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let right_count = total_count - left_count;
                if left_count < min_leaf || right_count < min_leaf {
                    continue;
                }
                let right = [total_mass[0] - left[0], total_mass[1] - left[1]];
                let impurity = (left[0] + left[1]) * gini(left) + (right[0] + right[1]) * gini(right);
                if best.is_none_or(|bs| impurity < bs.impurity) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: a + (b - a) / 2.0,
                        impurity,
                    });
                }
            }
        }
        best.filter(|b| parent - b.impurity > 1e-12)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let mass = self.mass(&rows);
        let count: usize = rows.iter().map(|&r| self.count[r]).sum();
        let parent = (mass[0] + mass[1]) * gini(mass);
        let at_limit = self.params.max_depth.is_some_and(|m| depth >= m);
        if at_limit || parent <= 0.0 || count < 2 * self.params.min_leaf.max(1) {
            return self.leaf(mass);
        }
        let Some(split) = self.best_split(&rows, parent) else {
            return self.leaf(mass);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0 });
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    /// Tree `t` draws from a ChaCha8 stream seeded with `seed + t`.
    pub fn train(x: &[Vec<f64>], y: &[u8], params: ForestParams, weights: [f64; 2], seed: u64) -> Result<Self> {
        let d = check_matrix(x, Some(y))?;
        if params.n_trees == 0 {
            return Err(Error::OutOfRange { what: "n_trees", value: 0.0 });
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        let n_features = if params.all_features {
            d
        } else {
            ((d as f64).sqrt().ceil() as usize).max(1)
        };
        let n = x.len();
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
                let mut count = vec![0usize; n];
                if params.bootstrap {
                    for _ in 0..n {
                        count[rng.random_range(0..n)] += 1;
                    }
                } else {
                    count.iter_mut().for_each(|c| *c = 1);
                }
                let w = (0..n).map(|i| weights[y[i] as usize] * count[i] as f64).collect();
                let rows = (0..n).filter(|&i| count[i] > 0).collect();
                let mut b = TreeBuilder {
                    x,
                    y,
                    w,
                    count,
                    params,
                    n_features,
                    rng,
                    nodes: Vec::new(),
                };
                b.grow(rows, 0);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(RandomForest { trees })
    }

    /// Fraction of trees voting for class 1.
    pub fn vote_share(&self, row: &[f64]) -> f64 {
        let ones = self.trees.iter().filter(|t| t.predict(row) == 1).count();
        ones as f64 / self.trees.len() as f64
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let ones = self.trees.iter().filter(|t| t.predict(row) == 1).count();
        u8::from(2 * ones > self.trees.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearSvm,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::LinearSvm, ModelKind::RandomForest];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LinearSvm => "linear_svm",
            ModelKind::RandomForest => "random_forest",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_svm" | "svm" => Ok(ModelKind::LinearSvm),
            "random_forest" | "rf" => Ok(ModelKind::RandomForest),
            other => Err(Error::invalid(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hyper {
    LinearSvm { c: f64, epochs: usize },
    RandomForest(ForestParams),
}

impl Hyper {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyper::LinearSvm { .. } => ModelKind::LinearSvm,
            Hyper::RandomForest(_) => ModelKind::RandomForest,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyper::LinearSvm { c, .. } if !(*c > 0.0) => Err(Error::OutOfRange { what: "C", value: *c }),
            Hyper::RandomForest(p) if p.n_trees == 0 => Err(Error::OutOfRange { what: "n_trees", value: 0.0 }),
            _ => Ok(()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Hyper::LinearSvm { c, .. } => format!("C={c}"),
            Hyper::RandomForest(p) => format!(
                "n_trees={},max_depth={}",
                p.n_trees,
                p.max_depth.map_or("none".to_string(), |d| d.to_string())
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyper: Hyper,
    pub seed: u64,
    /// Use balanced class weights; otherwise both weights are 1.
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    LinearSvm(LinearSvm),
    RandomForest(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub class_weights: [f64; 2],
    pub standardizer: Standardizer,
    pub params: Params,
}

/// Standardises `x`, weights the classes and fits the model.
pub fn train(spec: &ModelSpec, x: &[Vec<f64>], y: &[u8]) -> Result<TrainedModel> {
    spec.hyper.validate()?;
    check_matrix(x, Some(y))?;
    let class_weights = if spec.balanced {
        balanced_weights(y)?
    } else {
        [1.0, 1.0]
    };
    let standardizer = Standardizer::fit(x)?;
    let xs = standardizer.transform(x)?;
    let params = match spec.hyper {
        Hyper::LinearSvm { c, epochs } => Params::LinearSvm(LinearSvm::train(&xs, y, c, class_weights, epochs)?.0),
        Hyper::RandomForest(p) => Params::RandomForest(RandomForest::train(&xs, y, p, class_weights, spec.seed)?),
    };
    Ok(TrainedModel {
        version: MODEL_FORMAT_VERSION,
        spec: *spec,
        class_weights,
        standardizer,
        params,
    })
}

impl TrainedModel {
    /// SVM margin `w·x + b`, or the forest's class-1 vote share minus ½.
    /// Class 1 is predicted iff the score is strictly positive.
    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        x.iter()
            .map(|row| {
                let z = self.standardizer.transform_row(row)?;
                Ok(match &self.params {
                    Params::LinearSvm(m) => m.score(&z),
                    Params::RandomForest(f) => f.vote_share(&z) - 0.5,
                })
            })
            .collect()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        Ok(self.scores(x)?.into_iter().map(|s| u8::from(s > 0.0)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }
}

/// Unweighted mean of the two per-class recalls of a prediction.
pub fn uar_of(y: &[u8], pred: &[u8]) -> f64 {
    let mut c = [[0usize; 2]; 2];
    for (&t, &p) in y.iter().zip(pred) {
        c[t as usize][p as usize] += 1;
    }
    let recall = |k: usize| {
        let n = c[k][0] + c[k][1];
        if n == 0 {
            0.0
        } else {
            c[k][k] as f64 / n as f64
        }
    };
    (recall(0) + recall(1)) / 2.0
}
