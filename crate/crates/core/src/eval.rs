//! Couple-disjoint stratified cross-validation with inner tuning, UAR, and
//! the modality-combination grid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::fuse;
use crate::learn::{train, ForestParams, Hyper, ModelKind, ModelSpec, DEFAULT_SVM_EPOCHS};
use crate::model::{DatasetSample, Gender, Modality, Target};

pub const OUTER_FOLDS: usize = 3;
pub const INNER_FOLDS: usize = 2;

/// 2×2 counts indexed `[truth][prediction]`.
pub type Confusion = [[usize; 2]; 2];

/// `(recall₀ + recall₁) / 2`; both classes must be present.
pub fn uar(c: &Confusion) -> Result<f64> {
    let n0 = c[0][0] + c[0][1];
    let n1 = c[1][0] + c[1][1];
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleClass(format!("confusion {c:?} has an empty class row")));
    }
    Ok((c[0][0] as f64 / n0 as f64 + c[1][1] as f64 / n1 as f64) / 2.0)
}

pub fn confusion(y: &[u8], pred: &[u8]) -> Confusion {
    let mut c = [[0usize; 2]; 2];
    for (&t, &p) in y.iter().zip(pred) {
        c[t as usize][p as usize] += 1;
    }
    c
}

/// Assignment of couples to folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub target: String,
    pub assignment: BTreeMap<u32, usize>,
    /// `[class 0, class 1]` sample counts per fold.
    pub class_counts: Vec<[usize; 2]>,
}

impl FoldPlan {
    pub fn fold_of(&self, couple: u32) -> Option<usize> {
        self.assignment.get(&couple).copied()
    }

    /// Sample indices `(train, test)` for fold `f`.
    pub fn split(&self, couples: &[u32], f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..couples.len()).partition(|&i| self.assignment[&couples[i]] != f)
    }

    pub fn couples_in(&self, f: usize) -> Vec<u32> {
        self.assignment.iter().filter(|(_, &v)| v == f).map(|(c, _)| *c).collect()
    }
}

/// Mean over classes of the standard deviation, across folds, of the share
/// of that class's samples held by each fold.
fn imbalance(counts: &[[usize; 2]], totals: [usize; 2]) -> f64 {
    let k = counts.len() as f64;
    (0..2)
        .map(|c| {
            let shares: Vec<f64> = counts.iter().map(|f| f[c] as f64 / totals[c].max(1) as f64).collect();
            let m = shares.iter().sum::<f64>() / k;
            (shares.iter().map(|s| (s - m).powi(2)).sum::<f64>() / k).sqrt()
        })
        .sum::<f64>()
        / 2.0
}

/// Greedy couple-level stratified assignment. Couples are visited by
/// descending minority-class count (ties in a seeded random order) and each
/// goes to the fold that keeps the per-class fold shares most even; ties go
/// to the fold with fewer samples, then the lower index.
pub fn make_couple_folds(couples: &[u32], y: &[u8], k: usize, target: &str, seed: u64) -> Result<FoldPlan> {
    let strat = |detail: String| Error::Stratification {
        target: target.to_string(),
        detail,
    };
    if couples.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: couples.len(), got: y.len() });
    }
    let mut per_couple: BTreeMap<u32, [usize; 2]> = BTreeMap::new();
    for (&c, &l) in couples.iter().zip(y) {
        per_couple.entry(c).or_default()[l as usize] += 1;
    }
    let mut totals = [0usize; 2];
    for v in per_couple.values() {
        totals[0] += v[0];
        totals[1] += v[1];
    }
    if per_couple.len() < k {
        return Err(strat(format!("{} couples cannot fill {k} folds", per_couple.len())));
    }
    let minority = if totals[0] <= totals[1] { 0 } else { 1 };
    if totals[minority] < k {
        return Err(strat(format!(
            "only {} minority-class samples for {k} folds",
            totals[minority]
        )));
    }
    let mut order: Vec<(u32, [usize; 2])> = per_couple.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.1[minority].cmp(&a.1[minority]));

    let mut counts = vec![[0usize; 2]; k];
    let mut assignment = BTreeMap::new();
    for (couple, cc) in order {
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..k {
            counts[f][0] += cc[0];
            counts[f][1] += cc[1];
            let score = imbalance(&counts, totals);
            let size = counts[f][0] + counts[f][1];
            counts[f][0] -= cc[0];
            counts[f][1] -= cc[1];
            let better = match best {
                None => true,
                Some((s, sz, _)) => score < s - 1e-12 || ((score - s).abs() <= 1e-12 && size < sz),
            };
            if better {
                best = Some((score, size, f));
            }
        }
        let f = best.expect("k >= 1").2;
        counts[f][0] += cc[0];
        counts[f][1] += cc[1];
        assignment.insert(couple, f);
    }
    if let Some(f) = counts.iter().position(|c| c[0] == 0 || c[1] == 0) {
        return Err(strat(format!(
            "fold {f} would hold class counts {:?}; per-fold counts {counts:?}",
            counts[f]
        )));
    }
    Ok(FoldPlan {
        k,
        target: target.to_string(),
        assignment,
        class_counts: counts,
    })
}

/// Design matrix with labels and group ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalData {
    pub ids: Vec<String>,
    pub couples: Vec<u32>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
}

impl EvalData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> EvalData {
        EvalData {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            couples: idx.iter().map(|&i| self.couples[i]).collect(),
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Fuses the requested modalities of every sample. Errors name the
    /// first sample lacking one of them.
    pub fn from_samples(samples: &[&DatasetSample], modalities: &[Modality], target: Target) -> Result<Self> {
        let mut data = EvalData {
            ids: Vec::new(),
            couples: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
        };
        for s in samples {
            let parts = modalities
                .iter()
                .map(|m| {
                    s.features
                        .get(m)
                        .ok_or_else(|| Error::invalid(format!("sample {} has no {m} features", s.session_id)))
                })
                .collect::<Result<Vec<_>>>()?;
            data.ids.push(s.session_id.clone());
            data.couples.push(s.couple_id);
            data.x.push(fuse(&parts)?.values);
            data.y.push(s.label.class(target));
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub hyper: Hyper,
    /// Inner-CV UAR of the chosen cell; `None` when inner folds were infeasible.
    pub inner_uar: Option<f64>,
    pub fallback: Option<String>,
}

fn cv_uar(data: &EvalData, plan: &FoldPlan, hyper: Hyper, seed: u64, balanced: bool) -> Result<f64> {
    let mut pred = vec![0u8; data.len()];
    for f in 0..plan.k {
        let (tr, te) = plan.split(&data.couples, f);
        let train_set = data.subset(&tr);
        let spec = ModelSpec {
            hyper,
            seed: seed.wrapping_add(f as u64),
            balanced,
        };
        let model = train(&spec, &train_set.x, &train_set.y)?;
        let p = model.predict(&data.subset(&te).x)?;
        for (i, v) in te.into_iter().zip(p) {
            pred[i] = v;
        }
    }
    uar(&confusion(&data.y, &pred))
}

/// Picks the grid cell with the best couple-disjoint 2-fold UAR on `data`;
/// ties go to the earlier cell. If the inner folds cannot be stratified the
/// first cell is used and the reason recorded.
pub fn inner_tune(data: &EvalData, grid: &[Hyper], seed: u64, balanced: bool) -> Result<TuneResult> {
    let first = *grid.first().ok_or_else(|| Error::invalid("empty hyperparameter grid"))?;
    if grid.len() == 1 {
        return Ok(TuneResult {
            hyper: first,
            inner_uar: None,
            fallback: None,
        });
    }
    let plan = match make_couple_folds(&data.couples, &data.y, INNER_FOLDS, "inner", seed) {
        Ok(p) => p,
        Err(e) => {
            return Ok(TuneResult {
                hyper: first,
                inner_uar: None,
                fallback: Some(e.to_string()),
            })
        }
    };
    let scores = grid
        .par_iter()
        .map(|h| cv_uar(data, &plan, *h, seed, balanced))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(TuneResult {
        hyper: grid[best],
        inner_uar: Some(scores[best]),
        fallback: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_couples: Vec<u32>,
    pub test_couples: Vec<u32>,
    pub tune: TuneResult,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub session_id: String,
    pub couple_id: u32,
    pub fold: usize,
    pub truth: u8,
    pub predicted: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Target,
    pub gender: Option<Gender>,
    pub modalities: Vec<Modality>,
    pub model: ModelKind,
    pub confusion: Confusion,
    pub uar: f64,
    pub folds: Vec<FoldResult>,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    /// Checks pooling, UAR and couple-disjointness contracts.
    pub fn verify(&self, dataset_size: usize) -> Result<()> {
        let total: usize = self.confusion.iter().flatten().sum();
        if total != dataset_size || self.predictions.len() != dataset_size {
            return Err(Error::invalid(format!(
                "pooled {total} predictions for {dataset_size} samples"
            )));
        }
        if uar(&self.confusion)? != self.uar {
            return Err(Error::invalid("stored UAR does not match the confusion matrix"));
        }
        let mut seen = BTreeSet::new();
        for f in &self.folds {
            let train: BTreeSet<_> = f.train_couples.iter().collect();
            if let Some(c) = f.test_couples.iter().find(|c| train.contains(c)) {
                return Err(Error::invalid(format!("couple {c} is in train and test of fold {}", f.fold)));
            }
            for c in &f.test_couples {
                if !seen.insert(*c) {
                    return Err(Error::invalid(format!("couple {c} is tested in two folds")));
                }
            }
        }
        for p in &self.predictions {
            let f = &self.folds[p.fold];
            if !f.test_couples.contains(&p.couple_id) {
                return Err(Error::invalid(format!("{} predicted outside its test fold", p.session_id)));
            }
        }
        Ok(())
    }
}

/// Outer cross-validation: tune on each training split, refit on it, predict
/// the held-out couples, then pool every test prediction into one confusion
/// matrix.
pub fn run_cv(
    data: &EvalData,
    kind: ModelKind,
    grid: &[Hyper],
    plan: &FoldPlan,
    seed: u64,
    balanced: bool,
) -> Result<(Confusion, Vec<FoldResult>, Vec<Prediction>)> {
    let grid: Vec<Hyper> = grid.iter().copied().filter(|h| h.kind() == kind).collect();
    if grid.is_empty() {
        return Err(Error::invalid(format!("no {kind} cells in the grid")));
    }
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let (tr, te) = plan.split(&data.couples, f);
            let train_set = data.subset(&tr);
            let test_set = data.subset(&te);
            let fold_seed = seed.wrapping_add(1000 * (f as u64 + 1));
            let run = || -> Result<(FoldResult, Vec<Prediction>)> {
                let tune = inner_tune(&train_set, &grid, fold_seed, balanced)?;
                let spec = ModelSpec {
                    hyper: tune.hyper,
                    seed: fold_seed,
                    balanced,
                };
                let model = train(&spec, &train_set.x, &train_set.y)?;
                let pred = model.predict(&test_set.x)?;
                let predictions = te
                    .iter()
                    .zip(pred)
                    .map(|(&i, p)| Prediction {
                        session_id: data.ids[i].clone(),
                        couple_id: data.couples[i],
                        fold: f,
                        truth: data.y[i],
                        predicted: p,
                    })
                    .collect();
                let uniq = |v: &[u32]| v.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
                Ok((
                    FoldResult {
                        fold: f,
                        train_couples: uniq(&train_set.couples),
                        test_couples: uniq(&test_set.couples),
                        tune,
                        test_size: te.len(),
                    },
                    predictions,
                ))
            };
            run().map_err(|e| e.in_stage("cross-validation", format!("fold {f}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut results = Vec::new();
    let mut predictions = Vec::new();
    for (r, p) in folds {
        results.push(r);
        predictions.extend(p);
    }
    let truth: Vec<u8> = predictions.iter().map(|p| p.truth).collect();
    let pred: Vec<u8> = predictions.iter().map(|p| p.predicted).collect();
    Ok((confusion(&truth, &pred), results, predictions))
}

/// Hyperparameter grids per model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub svm_c: Vec<f64>,
    pub svm_epochs: usize,
    pub rf_trees: Vec<usize>,
    pub rf_depth: Vec<Option<usize>>,
    pub kinds: Vec<ModelKind>,
    pub balanced: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            svm_c: vec![0.01, 0.1, 1.0, 10.0],
            svm_epochs: DEFAULT_SVM_EPOCHS,
            rf_trees: vec![100, 300],
            rf_depth: vec![None, Some(10)],
            kinds: ModelKind::ALL.to_vec(),
            balanced: true,
        }
    }
}

impl GridConfig {
    /// All cells in canonical order: SVM by C, then forests by trees and depth.
    pub fn cells(&self) -> Vec<Hyper> {
        let mut out = Vec::new();
        if self.kinds.contains(&ModelKind::LinearSvm) {
            out.extend(self.svm_c.iter().map(|&c| Hyper::LinearSvm {
                c,
                epochs: self.svm_epochs,
            }));
        }
        if self.kinds.contains(&ModelKind::RandomForest) {
            for &n_trees in &self.rf_trees {
                for &max_depth in &self.rf_depth {
                    out.push(Hyper::RandomForest(ForestParams {
                        n_trees,
                        max_depth,
                        ..Default::default()
                    }));
                }
            }
        }
        out
    }
}

/// The seven modality rows: four unimodal, then the three combinations.
pub fn modality_rows() -> Vec<Vec<Modality>> {
    use Modality::*;
    vec![
        vec![Physio],
        vec![Movement],
        vec![Acoustic],
        vec![Linguistic],
        vec![Physio, Movement],
        vec![Acoustic, Linguistic],
        vec![Physio, Movement, Acoustic, Linguistic],
    ]
}

pub fn modality_label(mods: &[Modality]) -> String {
    mods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join("+")
}

/// One (gender, target, modality set) cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub gender: Option<Gender>,
    pub target: Target,
    pub modalities: Vec<Modality>,
    /// Highest-UAR report among model kinds; ties keep the earlier kind.
    pub best: Option<EvalReport>,
    pub per_model: Vec<EvalReport>,
    /// Why the cell could not be evaluated.
    pub absent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub targets: Vec<Target>,
    pub rows: Vec<Vec<Modality>>,
    pub grid: GridConfig,
    pub seed: u64,
}

impl Default for GridRequest {
    fn default() -> Self {
        GridRequest {
            targets: Target::ALL.to_vec(),
            rows: modality_rows(),
            grid: GridConfig::default(),
            seed: 0,
        }
    }
}

/// Evaluates every (target, modality row, model kind) combination for one
/// gender's samples. Fold plans depend only on the target, so all rows of a
/// target share the same couple split. A row whose modality is missing is
/// marked absent; stratification errors abort.
pub fn modality_grid(samples: &[&DatasetSample], gender: Option<Gender>, req: &GridRequest) -> Result<Vec<CellReport>> {
    let cells = req.grid.cells();
    let mut jobs = Vec::new();
    for &target in &req.targets {
        let couples: Vec<u32> = samples.iter().map(|s| s.couple_id).collect();
        let y: Vec<u8> = samples.iter().map(|s| s.label.class(target)).collect();
        let plan = make_couple_folds(&couples, &y, OUTER_FOLDS, target.as_str(), req.seed)?;
        for mods in &req.rows {
            jobs.push((target, mods.clone(), plan.clone()));
        }
    }
    let per_job: Vec<CellReport> = jobs
        .into_par_iter()
        .map(|(target, mods, plan)| -> Result<CellReport> {
            let mut cell = CellReport {
                gender,
                target,
                modalities: mods.clone(),
                best: None,
                per_model: Vec::new(),
                absent: None,
            };
            let data = match EvalData::from_samples(samples, &mods, target) {
                Ok(d) => d,
                Err(e) => {
                    cell.absent = Some(e.to_string());
                    return Ok(cell);
                }
            };
            for &kind in &req.grid.kinds {
                let (conf, folds, predictions) = run_cv(&data, kind, &cells, &plan, req.seed, req.grid.balanced)
                    .map_err(|e| e.in_stage("modality grid", format!("{} {}", modality_label(&mods), target)))?;
                cell.per_model.push(EvalReport {
                    target,
                    gender,
                    modalities: mods.clone(),
                    model: kind,
                    uar: uar(&conf)?,
                    confusion: conf,
                    folds,
                    predictions,
                });
            }
            cell.best = cell
                .per_model
                .iter()
                .fold(None::<&EvalReport>, |b, r| match b {
                    Some(b) if b.uar >= r.uar => Some(b),
                    _ => Some(r),
                })
                .cloned();
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_job)
}

fn gender_key(g: Option<Gender>) -> &'static str {
    match g {
        Some(Gender::Male) => "male",
        Some(Gender::Female) => "female",
        None => "all",
    }
}

/// `gender → target → modality → {uar, confusion, model, hyperparams, ...}`.
pub fn metrics_json(cells: &[CellReport], inputs: &BTreeMap<String, String>) -> serde_json::Value {
    use serde_json::{json, Map, Value};
    let mut root = Map::new();
    for c in cells {
        let g = root
            .entry(gender_key(c.gender))
            .or_insert_with(|| Value::Object(Map::new()));
        let t = g
            .as_object_mut()
            .unwrap()
            .entry(c.target.as_str())
            .or_insert_with(|| Value::Object(Map::new()));
        let entry = match (&c.best, &c.absent) {
            (Some(b), _) => json!({
                "uar": b.uar,
                "confusion": b.confusion,
                "model": b.model.as_str(),
                "hyperparams": b.folds.iter().map(|f| f.tune.hyper.describe()).collect::<Vec<_>>(),
                "inner_fallbacks": b.folds.iter().filter_map(|f| f.tune.fallback.clone()).collect::<Vec<_>>(),
                "folds": b.folds.iter().map(|f| json!({
                    "fold": f.fold,
                    "train_couples": f.train_couples,
                    "test_couples": f.test_couples,
                    "test_size": f.test_size,
                })).collect::<Vec<_>>(),
                "n": b.predictions.len(),
                "all_models": c.per_model.iter().map(|r| json!({
                    "model": r.model.as_str(),
                    "uar": r.uar,
                    "confusion": r.confusion,
                })).collect::<Vec<_>>(),
            }),
            (None, Some(reason)) => json!({ "absent": reason }),
            (None, None) => json!({ "absent": "not evaluated" }),
        };
        t.as_object_mut()
            .unwrap()
            .insert(modality_label(&c.modalities), entry);
    }
    json!({ "inputs": inputs, "metrics": root })
}

/// Writes `confusion_<gender>_<target>_<modality>.csv` for each evaluated cell.
pub fn write_confusions(dir: &Path, cells: &[CellReport]) -> Result<()> {
    for c in cells {
        let Some(b) = &c.best else { continue };
        let name = format!(
            "confusion_{}_{}_{}.csv",
            gender_key(c.gender),
            c.target.as_str(),
            modality_label(&c.modalities)
        );
        let mut w = csv::Writer::from_path(dir.join(name))?;
        let names = c.target.class_names();
        w.write_record(["truth", &format!("pred_{}", names[0]), &format!("pred_{}", names[1])])?;
        for (k, row) in b.confusion.iter().enumerate() {
            w.write_record([names[k].to_string(), row[0].to_string(), row[1].to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Plain-text table: one row per modality set, one column per gender/target.
pub fn format_table(cells: &[CellReport]) -> String {
    let mut columns: Vec<(Option<Gender>, Target)> = Vec::new();
    let mut rows: Vec<Vec<Modality>> = Vec::new();
    for c in cells {
        if !columns.contains(&(c.gender, c.target)) {
            columns.push((c.gender, c.target));
        }
        if !rows.contains(&c.modalities) {
            rows.push(c.modalities.clone());
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<40}", "modalities");
    for (g, t) in &columns {
        let _ = write!(out, "{:>18}", format!("{} {}", gender_key(*g), t.as_str()));
    }
    out.push('\n');
    for r in &rows {
        let _ = write!(out, "{:<40}", modality_label(r));
        for (g, t) in &columns {
            let v = cells
                .iter()
                .find(|c| c.gender == *g && c.target == *t && &c.modalities == r)
                .and_then(|c| c.best.as_ref())
                .map_or("n/a".to_string(), |b| format!("{:.1}% {}", 100.0 * b.uar, short(b.model)));
            let _ = write!(out, "{v:>18}");
        }
        out.push('\n');
    }
    out
}

fn short(k: ModelKind) -> &'static str {
    match k {
        ModelKind::LinearSvm => "SVM",
        ModelKind::RandomForest => "RF",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uar_examples() {
        assert_eq!(uar(&[[5, 0], [0, 7]]).unwrap(), 1.0);
        assert_eq!(uar(&[[0, 3], [0, 30]]).unwrap(), 0.5);
        assert_eq!(uar(&[[2, 2], [0, 4]]).unwrap(), 0.75);
        assert!(uar(&[[0, 0], [1, 1]]).is_err());
        let c = [[3, 1], [2, 9]];
        let swapped = [[9, 2], [1, 3]];
        assert_eq!(uar(&c).unwrap(), uar(&swapped).unwrap());
    }

    #[test]
    fn balanced_six_couples() {
        let mut couples = Vec::new();
        let mut y = Vec::new();
        for c in 1..=6 {
            for l in [0, 1, 0, 1] {
                couples.push(c);
                y.push(l);
            }
        }
        let plan = make_couple_folds(&couples, &y, 3, "arousal", 1).unwrap();
        for f in 0..3 {
            assert_eq!(plan.couples_in(f).len(), 2);
            assert_eq!(plan.class_counts[f], [4, 4]);
        }
    }

    #[test]
    fn skewed_couples_still_stratify() {
        // five couples without any negative sample
        let mut couples = Vec::new();
        let mut y = Vec::new();
        let negatives = [0, 1, 1, 0, 2, 1, 3, 2, 0, 1, 0, 2, 0];
        for (i, &neg) in negatives.iter().enumerate() {
            for j in 0..15 {
                couples.push(i as u32 + 1);
                y.push(u8::from(j >= neg));
            }
        }
        for seed in 0..20 {
            let plan = make_couple_folds(&couples, &y, 3, "valence", seed).unwrap();
            assert!(plan.class_counts.iter().all(|c| c[0] >= 1 && c[1] >= 1));
        }
    }

    #[test]
    fn infeasible_folds_name_the_target() {
        let couples = vec![1, 1, 2, 2, 3, 3];
        let y = vec![1, 1, 1, 0, 1, 1];
        let err = make_couple_folds(&couples, &y, 3, "valence", 0).unwrap_err();
        assert!(err.to_string().contains("valence"), "{err}");
        assert!(make_couple_folds(&[1, 2], &[0, 1], 3, "arousal", 0).is_err());
    }

    #[test]
    fn grid_cells_canonical_order() {
        let cells = GridConfig::default().cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0], Hyper::LinearSvm { c: 0.01, epochs: DEFAULT_SVM_EPOCHS });
        assert_eq!(modality_rows().len(), 7);
    }
}
