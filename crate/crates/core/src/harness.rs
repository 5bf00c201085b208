//! Experimental protocol: stratified folds, component sweeps over
//! attention-map conditions, accuracy aggregation, paired significance
//! testing and summary statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::attention::AttentionMap;
use crate::classify::{self, CovarianceEstimator};
use crate::datamodel::{DataMatrix, SampleInfo};
use crate::error::{Error, Result};
use crate::facespace::{self, FaceSpace, Method};

/// Classification task: which label column drives the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Gender,
    Expression,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Gender => "gender",
            Task::Expression => "expression",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "gender" => Ok(Task::Gender),
            "expression" => Ok(Task::Expression),
            other => Err(Error::Usage(format!(
                "task must be gender or expression, got `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The task label of a sample, if present.
pub fn task_label(info: &SampleInfo, task: Task) -> Option<&'static str> {
    match task {
        Task::Gender => info.gender.map(|g| g.code()),
        Task::Expression => info.expression.map(|e| e.code()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Stratified k-fold cross-validation within one dataset.
    Cv10,
    /// Train on dataset A, test on seeded stratified subsamples of
    /// dataset B.
    CrossDb,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::Cv10 => "cv10",
            Protocol::CrossDb => "cross_db",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "cv10" => Ok(Protocol::Cv10),
            "cross_db" => Ok(Protocol::CrossDb),
            other => Err(Error::Usage(format!(
                "protocol must be cv10 or cross_db, got `{other}`"
            ))),
        }
    }
}

/// Which covariance backs the Mahalanobis metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    Pooled,
    EigenvalueWhitening,
}

impl CovarianceKind {
    fn estimator(&self, fs: &FaceSpace, m: usize) -> CovarianceEstimator {
        match self {
            CovarianceKind::Pooled => CovarianceEstimator::Pooled,
            CovarianceKind::EigenvalueWhitening => {
                CovarianceEstimator::EigenvalueWhitening(fs.eigenvalues()[..m].to_vec())
            }
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        match token {
            "pooled" => Ok(CovarianceKind::Pooled),
            "whitened" => Ok(CovarianceKind::EigenvalueWhitening),
            other => Err(Error::Usage(format!(
                "covariance must be pooled or whitened, got `{other}`"
            ))),
        }
    }
}

/// One attention-map condition of a sweep. For pca the map is absent and
/// the condition is labeled `none`.
#[derive(Debug, Clone)]
pub struct MapCondition {
    pub label: String,
    pub map: Option<AttentionMap>,
}

impl MapCondition {
    pub fn none() -> Self {
        MapCondition {
            label: "none".into(),
            map: None,
        }
    }

    /// Label the condition by the map's provenance.
    pub fn from_map(map: AttentionMap) -> Self {
        MapCondition {
            label: map.provenance().as_str().into(),
            map: Some(map),
        }
    }

    pub fn labeled(label: impl Into<String>, map: AttentionMap) -> Self {
        MapCondition {
            label: label.into(),
            map: Some(map),
        }
    }
}

/// Full description of one sweep: task, method, map conditions, component
/// grid and protocol parameters.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    pub maps: Vec<MapCondition>,
    pub component_grid: Vec<usize>,
    pub protocol: Protocol,
    pub folds: usize,
    pub seed: u64,
    /// cross_db only: number of seeded test subsamples.
    pub repeats: usize,
    /// cross_db only: fraction of each test class kept per repeat.
    pub test_subsample: f64,
    pub covariance: CovarianceKind,
}

impl ExperimentConfig {
    pub fn new(task: Task, method: Method, maps: Vec<MapCondition>, seed: u64) -> Self {
        ExperimentConfig {
            task,
            method,
            maps,
            component_grid: default_component_grid(),
            protocol: Protocol::Cv10,
            folds: 10,
            seed,
            repeats: 5,
            test_subsample: 0.9,
            covariance: CovarianceKind::Pooled,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.maps.is_empty() {
            return Err(Error::Usage("no map conditions configured".into()));
        }
        if self.component_grid.is_empty() {
            return Err(Error::Usage("component grid is empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::Usage("folds must be at least 2".into()));
        }
        for cond in &self.maps {
            match (&cond.map, self.method.uses_map()) {
                (Some(_), false) => {
                    return Err(Error::Usage(format!(
                        "method {} takes no attention map (condition `{}`)",
                        self.method, cond.label
                    )))
                }
                (None, true) => {
                    return Err(Error::Usage(format!(
                        "method {} requires an attention map (condition `{}`)",
                        self.method, cond.label
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// The paper-style default grid: 20, 40, ..., 240.
pub fn default_component_grid() -> Vec<usize> {
    (1..=12).map(|i| i * 20).collect()
}

/// One accuracy measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub task: Task,
    pub method: Method,
    pub map: String,
    pub components: usize,
    /// Fold index under cv10, repeat index under cross_db.
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    /// CSV with stable column order and fixed 9-decimal accuracy
    /// formatting; the root seed is recorded in a leading comment line.
    pub fn to_csv(&self, seed: u64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# seed={seed}");
        out.push_str("task,method,map,components,fold,accuracy\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.9}",
                row.task, row.method, row.map, row.components, row.fold, row.accuracy
            );
        }
        out
    }

    pub fn extend(&mut self, other: ExperimentResult) {
        self.rows.extend(other.rows);
    }
}

/// Deterministic per-cell seed derivation (splitmix64 over the root seed
/// and a cell index), so parallel execution never changes results.
pub fn child_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stratified fold assignment: each class is shuffled (deterministically
/// per seed) and dealt round-robin, so per-class fold sizes differ by at
/// most one. Returns the fold index of every sample.
pub fn stratified_kfold(labels: &[&str], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Usage("k must be at least 2".into()));
    }
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    for (label, mut members) in classes {
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                label: label.to_string(),
                size: members.len(),
                required: k,
            });
        }
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            assignment[idx] = pos % k;
        }
    }
    Ok(assignment)
}

fn labeled_indices(data: &DataMatrix, task: Task) -> (Vec<usize>, Vec<&'static str>) {
    let mut indices = Vec::new();
    let mut labels = Vec::new();
    for (i, info) in data.info().iter().enumerate() {
        if let Some(label) = task_label(info, task) {
            indices.push(i);
            labels.push(label);
        }
    }
    (indices, labels)
}

fn project_rows(
    data: &DataMatrix,
    rows: &[usize],
    fs: &FaceSpace,
    m: usize,
) -> Result<Vec<DVector<f64>>> {
    rows.iter()
        .map(|&i| fs.project(&data.row(i), m))
        .collect()
}

fn prefix(coords: &[DVector<f64>], m: usize) -> Vec<DVector<f64>> {
    coords.iter().map(|c| DVector::from(c.rows(0, m))).collect()
}

/// Evaluate one experiment cell: fit the face space on the training rows
/// only, project both portions, train the classifier, and return the test
/// accuracy. Attention maps are fixed external inputs, never refit.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    data: &DataMatrix,
    task: Task,
    method: Method,
    map: Option<&AttentionMap>,
    components: usize,
    train_idx: &[usize],
    test_idx: &[usize],
    covariance: CovarianceKind,
) -> Result<f64> {
    let train_dm = data.select_rows(train_idx)?;
    let fs = facespace::fit(&train_dm, method, map, components)?;

    let train_coords: Vec<DVector<f64>> = (0..train_dm.num_samples())
        .map(|i| fs.project(&train_dm.row(i), components))
        .collect::<Result<_>>()?;
    let test_coords = project_rows(data, test_idx, &fs, components)?;

    let train_labels: Vec<&str> = train_dm
        .info()
        .iter()
        .map(|info| {
            task_label(info, task)
                .ok_or_else(|| Error::InvalidInput(format!("sample `{}` has no {task} label", info.id)))
        })
        .collect::<Result<_>>()?;
    let test_labels: Vec<&str> = test_idx
        .iter()
        .map(|&i| {
            task_label(&data.info()[i], task).ok_or_else(|| {
                Error::InvalidInput(format!("sample `{}` has no {task} label", data.info()[i].id))
            })
        })
        .collect::<Result<_>>()?;

    let model = classify::train(
        &train_coords,
        &train_labels,
        &covariance.estimator(&fs, components),
    )?;
    model.accuracy(&test_coords, &test_labels)
}

/// Run the full sweep under the cv10 protocol: the Cartesian product of
/// map conditions, component counts and folds. Rows come out sorted by
/// (condition order, components, fold) regardless of scheduling.
///
/// Within one (condition, fold) unit the face space is fitted once at the
/// largest grid value; smaller counts reuse prefixes of the same
/// projections, which is exactly what a per-cell fit would produce.
pub fn run_sweep(data: &DataMatrix, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if config.protocol != Protocol::Cv10 {
        return Err(Error::Usage(
            "run_sweep handles cv10; use run_sweep_cross_db for cross_db".into(),
        ));
    }
    let (indices, labels) = labeled_indices(data, config.task);
    if indices.is_empty() {
        return Err(Error::EmptyInput(format!("no {} labels in dataset", config.task)));
    }
    let assignment = stratified_kfold(&labels, config.folds, config.seed)?;
    let m_max = *config.component_grid.iter().max().unwrap();

    let units: Vec<(usize, usize)> = (0..config.maps.len())
        .flat_map(|ci| (0..config.folds).map(move |fold| (ci, fold)))
        .collect();

    let mut keyed: Vec<(usize, ResultRow)> = units
        .par_iter()
        .map(|&(ci, fold)| -> Result<Vec<(usize, ResultRow)>> {
            let cond = &config.maps[ci];
            let cell_name = |m: usize| {
                format!(
                    "task={} method={} map={} m={m} fold={fold}",
                    config.task, config.method, cond.label
                )
            };
            let wrap = |m: usize, e: Error| Error::Cell {
                label: cell_name(m),
                source: Box::new(e),
            };

            let mut train_rows = Vec::new();
            let mut test_rows = Vec::new();
            let mut train_labels = Vec::new();
            let mut test_labels = Vec::new();
            for (pos, &row) in indices.iter().enumerate() {
                if assignment[pos] == fold {
                    test_rows.push(row);
                    test_labels.push(labels[pos]);
                } else {
                    train_rows.push(row);
                    train_labels.push(labels[pos]);
                }
            }

            let train_dm = data.select_rows(&train_rows).map_err(|e| wrap(m_max, e))?;
            let fs = facespace::fit(&train_dm, config.method, cond.map.as_ref(), m_max)
                .map_err(|e| wrap(m_max, e))?;
            let train_coords: Vec<DVector<f64>> = (0..train_dm.num_samples())
                .map(|i| fs.project(&train_dm.row(i), m_max))
                .collect::<Result<_>>()
                .map_err(|e| wrap(m_max, e))?;
            let test_coords =
                project_rows(data, &test_rows, &fs, m_max).map_err(|e| wrap(m_max, e))?;

            let mut rows = Vec::with_capacity(config.component_grid.len());
            for &m in &config.component_grid {
                let model = classify::train(
                    &prefix(&train_coords, m),
                    &train_labels,
                    &config.covariance.estimator(&fs, m),
                )
                .map_err(|e| wrap(m, e))?;
                let accuracy = model
                    .accuracy(&prefix(&test_coords, m), &test_labels)
                    .map_err(|e| wrap(m, e))?;
                rows.push((
                    ci,
                    ResultRow {
                        task: config.task,
                        method: config.method,
                        map: cond.label.clone(),
                        components: m,
                        fold,
                        accuracy,
                    },
                ));
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    keyed.sort_by(|a, b| {
        (a.0, a.1.components, a.1.fold).cmp(&(b.0, b.1.components, b.1.fold))
    });
    Ok(ExperimentResult {
        rows: keyed.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Cross-database protocol: fit on every labeled row of `train_data`,
/// evaluate each repeat on a seeded stratified subsample of `test_data`.
/// Training rows come only from A, test rows only from B.
pub fn run_sweep_cross_db(
    train_data: &DataMatrix,
    test_data: &DataMatrix,
    config: &ExperimentConfig,
) -> Result<ExperimentResult> {
    config.validate()?;
    if config.protocol != Protocol::CrossDb {
        return Err(Error::Usage("config protocol is not cross_db".into()));
    }
    if train_data.dim() != test_data.dim() {
        return Err(Error::DimensionMismatch {
            context: "cross_db datasets".into(),
            expected: train_data.dim(),
            found: test_data.dim(),
        });
    }
    if config.repeats == 0 {
        return Err(Error::Usage("repeats must be at least 1".into()));
    }
    if !(0.0 < config.test_subsample && config.test_subsample <= 1.0) {
        return Err(Error::Usage("test_subsample must be in (0, 1]".into()));
    }

    let (train_rows, train_labels) = labeled_indices(train_data, config.task);
    let (test_rows, test_labels) = labeled_indices(test_data, config.task);
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::EmptyInput(format!("no {} labels in dataset", config.task)));
    }
    let m_max = *config.component_grid.iter().max().unwrap();

    let mut keyed: Vec<(usize, ResultRow)> = (0..config.maps.len())
        .into_par_iter()
        .map(|ci| -> Result<Vec<(usize, ResultRow)>> {
            let cond = &config.maps[ci];
            let wrap = |m: usize, r: usize, e: Error| Error::Cell {
                label: format!(
                    "task={} method={} map={} m={m} repeat={r}",
                    config.task, config.method, cond.label
                ),
                source: Box::new(e),
            };

            let train_dm = train_data
                .select_rows(&train_rows)
                .map_err(|e| wrap(m_max, 0, e))?;
            let fs = facespace::fit(&train_dm, config.method, cond.map.as_ref(), m_max)
                .map_err(|e| wrap(m_max, 0, e))?;
            let train_coords: Vec<DVector<f64>> = (0..train_dm.num_samples())
                .map(|i| fs.project(&train_dm.row(i), m_max))
                .collect::<Result<_>>()
                .map_err(|e| wrap(m_max, 0, e))?;
            let labels_vec: Vec<&str> = train_labels.clone();
            let test_coords = project_rows(test_data, &test_rows, &fs, m_max)
                .map_err(|e| wrap(m_max, 0, e))?;

            let subsamples: Vec<Vec<usize>> = (0..config.repeats)
                .map(|r| {
                    stratified_subsample(
                        &test_labels,
                        config.test_subsample,
                        child_seed(config.seed, (ci * config.repeats + r) as u64),
                    )
                })
                .collect();

            let mut rows = Vec::new();
            for &m in &config.component_grid {
                let model = classify::train(
                    &prefix(&train_coords, m),
                    &labels_vec,
                    &config.covariance.estimator(&fs, m),
                )
                .map_err(|e| wrap(m, 0, e))?;
                for (r, subsample) in subsamples.iter().enumerate() {
                    let ys: Vec<DVector<f64>> = subsample
                        .iter()
                        .map(|&i| DVector::from(test_coords[i].rows(0, m)))
                        .collect();
                    let sub_labels: Vec<&str> = subsample.iter().map(|&i| test_labels[i]).collect();
                    let accuracy = model
                        .accuracy(&ys, &sub_labels)
                        .map_err(|e| wrap(m, r, e))?;
                    rows.push((
                        ci,
                        ResultRow {
                            task: config.task,
                            method: config.method,
                            map: cond.label.clone(),
                            components: m,
                            fold: r,
                            accuracy,
                        },
                    ));
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    keyed.sort_by(|a, b| {
        (a.0, a.1.components, a.1.fold).cmp(&(b.0, b.1.components, b.1.fold))
    });
    Ok(ExperimentResult {
        rows: keyed.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Per-class subsample (without replacement) of roughly `fraction` of the
/// members; deterministic per seed. Returns positions into `labels`.
fn stratified_subsample(labels: &[&str], fraction: f64, seed: u64) -> Vec<usize> {
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for (_, mut members) in classes {
        let take = ((members.len() as f64 * fraction).round() as usize)
            .clamp(1, members.len());
        members.shuffle(&mut rng);
        picked.extend(members.into_iter().take(take));
    }
    picked.sort_unstable();
    picked
}

// ---------------------------------------------------------------------------
// Paired significance testing (Wilcoxon signed-rank)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    TwoSided,
    /// `a` tends to exceed `b`.
    Greater,
    /// `a` tends to fall below `b`.
    Less,
}

/// Above this effective sample size the exact null enumeration gives way
/// to the normal approximation with tie and continuity corrections.
const WILCOXON_EXACT_LIMIT: usize = 20;

/// Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped (standard convention); if every pair is
/// identical the result is `(statistic = 0, p = 1)`. The statistic is the
/// positive-rank sum `W+`. For up to 20 effective pairs the p-value comes
/// from the exact null distribution of `W+` (subset-sum enumeration over
/// the observed ranks); beyond that, from the normal approximation.
pub fn paired_test(a: &[f64], b: &[f64], alternative: Alternative) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "paired samples".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "paired test needs at least 5 pairs, got {}",
            a.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x - y)
        .filter(|&d| d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Ok((0.0, 1.0));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let (p_greater, p_less) = if n <= WILCOXON_EXACT_LIMIT {
        exact_tail_probabilities(&ranks, w_plus)
    } else {
        normal_tail_probabilities(&abs, &ranks, w_plus)
    };
    let p = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => (2.0 * p_greater.min(p_less)).min(1.0),
    };
    Ok((w_plus, p))
}

/// Average ranks (1-based) with ties sharing their mean rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Exact null tail probabilities of `W+` by dynamic programming over the
/// doubled ranks (doubling makes tied average ranks integral).
fn exact_tail_probabilities(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|&r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let denom = 2f64.powi(ranks.len() as i32);
    let w2 = (2.0 * w_plus).round() as usize;
    let ge: f64 = counts[w2..].iter().sum();
    let le: f64 = counts[..=w2.min(total)].iter().sum();
    (ge / denom, le / denom)
}

/// Normal approximation with tie correction and continuity correction.
fn normal_tail_probabilities(abs: &[f64], ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;

    let mut tie_correction = 0.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_correction += t * t * t - t;
        i = j + 1;
    }
    let variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_correction / 48.0;
    if variance <= 0.0 {
        return (1.0, 1.0);
    }
    let sigma = variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_greater = 1.0 - normal.cdf((w_plus - 0.5 - mean) / sigma);
    let p_less = normal.cdf((w_plus + 0.5 - mean) / sigma);
    (p_greater, p_less)
}

/// Paired comparison of two map conditions within one method, paired by
/// (components, fold).
#[derive(Debug, Clone)]
pub struct PairedComparison {
    pub task: Task,
    pub method: Method,
    pub map_a: String,
    pub map_b: String,
    pub pairs: usize,
    pub statistic: f64,
    pub p_two_sided: f64,
    /// One-sided alternative: condition `a` exceeds condition `b`.
    pub p_greater: f64,
}

pub fn compare_map_conditions(
    rows: &[ResultRow],
    method: Method,
    map_a: &str,
    map_b: &str,
) -> Result<PairedComparison> {
    let mut cells_a = BTreeMap::new();
    let mut cells_b = BTreeMap::new();
    let mut task = None;
    for row in rows.iter().filter(|r| r.method == method) {
        task = Some(row.task);
        if row.map == map_a {
            cells_a.insert((row.components, row.fold), row.accuracy);
        } else if row.map == map_b {
            cells_b.insert((row.components, row.fold), row.accuracy);
        }
    }
    let task = task.ok_or_else(|| {
        Error::EmptyInput(format!("no rows for method {method}"))
    })?;
    let keys: Vec<_> = cells_a
        .keys()
        .filter(|k| cells_b.contains_key(*k))
        .cloned()
        .collect();
    let a: Vec<f64> = keys.iter().map(|k| cells_a[k]).collect();
    let b: Vec<f64> = keys.iter().map(|k| cells_b[k]).collect();
    let (statistic, p_two_sided) = paired_test(&a, &b, Alternative::TwoSided)?;
    let (_, p_greater) = paired_test(&a, &b, Alternative::Greater)?;
    Ok(PairedComparison {
        task,
        method,
        map_a: map_a.to_string(),
        map_b: map_b.to_string(),
        pairs: keys.len(),
        statistic,
        p_two_sided,
        p_greater,
    })
}

pub fn significance_csv(comparisons: &[PairedComparison], seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# seed={seed}");
    out.push_str("task,method,map_a,map_b,pairs,statistic,p_two_sided,p_one_sided_greater\n");
    for c in comparisons {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9},{:.8e},{:.8e}",
            c.task, c.method, c.map_a, c.map_b, c.pairs, c.statistic, c.p_two_sided, c.p_greater
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Summary statistics
// ---------------------------------------------------------------------------

/// Boxplot-ready statistics for one (method, map, components) condition;
/// `components` is `None` when folds are pooled across the grid.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub task: Task,
    pub method: Method,
    pub map: String,
    pub components: Option<usize>,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Aggregate result rows per condition. With `pool_components` the grid
/// collapses and folds pool across all component counts.
pub fn summarize(rows: &[ResultRow], pool_components: bool) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String, Option<usize>), Vec<f64>> = BTreeMap::new();
    let mut meta: BTreeMap<(String, String, String, Option<usize>), (Task, Method)> =
        BTreeMap::new();
    for row in rows {
        let components = if pool_components { None } else { Some(row.components) };
        let key = (
            row.task.as_str().to_string(),
            row.method.as_str().to_string(),
            row.map.clone(),
            components,
        );
        groups.entry(key.clone()).or_default().push(row.accuracy);
        meta.entry(key).or_insert((row.task, row.method));
    }
    groups
        .into_iter()
        .map(|(key, mut accs)| {
            let (task, method) = meta[&key];
            accs.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracy"));
            let count = accs.len();
            let mean = accs.iter().sum::<f64>() / count as f64;
            let sd = if count > 1 {
                (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (count as f64 - 1.0))
                    .sqrt()
            } else {
                0.0
            };
            SummaryRow {
                task,
                method,
                map: key.2,
                components: key.3,
                count,
                mean,
                sd,
                min: accs[0],
                q1: quantile(&accs, 0.25),
                median: quantile(&accs, 0.5),
                q3: quantile(&accs, 0.75),
                max: accs[count - 1],
            }
        })
        .collect()
}

/// Linear-interpolation quantile (the R-7 convention) on sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary_csv(rows: &[SummaryRow], seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# seed={seed}");
    out.push_str("task,method,map,components,count,mean,sd,min,q1,median,q3,max\n");
    for r in rows {
        let components = r
            .components
            .map(|c| c.to_string())
            .unwrap_or_else(|| "all".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            r.task, r.method, r.map, components, r.count, r.mean, r.sd, r.min, r.q1, r.median,
            r.q3, r.max
        );
    }
    out
}

/// Parse a results CSV produced by [`ExperimentResult::to_csv`] (comment
/// lines starting with `#` are skipped).
pub fn parse_results_csv(content: &str, path: &std::path::Path) -> Result<ExperimentResult> {
    let mut rows = Vec::new();
    let mut lines = content.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let header = lines.next();
    match header {
        Some((_, h)) if h.trim() == "task,method,map,components,fold,accuracy" => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: None,
                message: "missing results header".into(),
            })
        }
    }
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: Some(i as u64 + 1),
            message,
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(parse_err(format!("expected 6 fields, found {}", fields.len())));
        }
        rows.push(ResultRow {
            task: Task::parse(fields[0]).map_err(|e| parse_err(e.to_string()))?,
            method: Method::parse(fields[1]).map_err(|e| parse_err(e.to_string()))?,
            map: fields[2].to_string(),
            components: fields[3].parse().map_err(|_| parse_err("bad components".into()))?,
            fold: fields[4].parse().map_err(|_| parse_err("bad fold".into()))?,
            accuracy: fields[5].parse().map_err(|_| parse_err("bad accuracy".into()))?,
        });
    }
    Ok(ExperimentResult { rows })
}

/// Distinct map condition labels present in a result, in row order.
pub fn map_labels(result: &ExperimentResult) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in &result.rows {
        if seen.insert(row.map.clone()) {
            out.push(row.map.clone());
        }
    }
    out
}
