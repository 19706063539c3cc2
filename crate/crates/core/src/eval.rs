//! Metrics, the precision/recall threshold sweep, baselines, and random
//! hyperparameter search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureBundle;
use crate::miner::Label;
use crate::model::{
    classify, fit, mean_loss, predict, FeatureDims, ModelError, OvidConfig, TrainExample,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn tally(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Vandalism, Label::Vandalism) => self.tp += 1,
            (Label::Vandalism, Label::Regular) => self.fp += 1,
            (Label::Regular, Label::Regular) => self.tn += 1,
            (Label::Regular, Label::Vandalism) => self.fn_ += 1,
        }
    }

    /// Thresholds scores with the strict-greater classification rule.
    pub fn from_scores(scored: &[(f64, Label)], threshold: f64) -> Self {
        let mut cc = ConfusionCounts::default();
        for (score, actual) in scored {
            cc.tally(classify(*score, threshold), *actual);
        }
        cc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Precision defaults to 1.0 with no predicted positives (the sweep's
/// right-hand endpoint convention); recall and F1 default to 0.
pub fn metrics(cc: &ConfusionCounts) -> Result<Metrics, EvalError> {
    if cc.total() == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let precision = if cc.tp + cc.fp == 0 {
        1.0
    } else {
        cc.tp as f64 / (cc.tp + cc.fp) as f64
    };
    let recall = if cc.tp + cc.fn_ == 0 {
        0.0
    } else {
        cc.tp as f64 / (cc.tp + cc.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = (cc.tp + cc.tn) as f64 / cc.total() as f64;
    Ok(Metrics {
        precision,
        recall,
        f1,
        accuracy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Evaluates `n_points + 1` evenly spaced thresholds across [0, 1].
pub fn pr_sweep(scored: &[(f64, Label)], n_points: usize) -> Result<Vec<PrPoint>, EvalError> {
    if scored.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let n_points = n_points.max(1);
    (0..=n_points)
        .map(|i| {
            let threshold = i as f64 / n_points as f64;
            let m = metrics(&ConfusionCounts::from_scores(scored, threshold))?;
            Ok(PrPoint {
                threshold,
                precision: m.precision,
                recall: m.recall,
            })
        })
        .collect()
}

pub fn write_pr_curve<W: std::io::Write>(mut w: W, curve: &[PrPoint]) -> std::io::Result<()> {
    writeln!(w, "threshold,precision,recall")?;
    for p in curve {
        writeln!(w, "{},{},{}", p.threshold, p.precision, p.recall)?;
    }
    Ok(())
}

/// Fair-coin labels, one per example.
pub fn random_baseline(n: usize, seed: u64) -> Vec<Label> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Label::Vandalism
            } else {
                Label::Regular
            }
        })
        .collect()
}

/// Thresholds of the five-rule edit scorer. This is a transparent
/// approximation of the cited rule-based system, defined over this crate's
/// own features; reports label it as such.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleThresholds {
    /// Rule 1: the author has at most this many prior contributions.
    pub max_user_contributions: f64,
    /// Rule 2: the edit carries at most this many valid tags.
    pub max_valid_tags: f64,
    /// Rule 3: the object version is at least this.
    pub min_version: f64,
    /// Rule 4 has no threshold: it fires when the name changed.
    /// Rule 5: a delete whose prior version had at least this many valid tags.
    pub min_deleted_valid_tags: f64,
    /// An edit is flagged when at least this many rules fire.
    pub score_threshold: u32,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        RuleThresholds {
            max_user_contributions: 5.0,
            max_valid_tags: 0.0,
            min_version: 8.0,
            min_deleted_valid_tags: 2.0,
            score_threshold: 2,
        }
    }
}

// Edit-row slots the rules read (see features::EditFeatures layout).
const SLOT_OP_DELETE: usize = 5;
const SLOT_VERSION: usize = 6;
const SLOT_VALID: usize = 12;
const SLOT_PREV_VALID: usize = 13;
const SLOT_NAME_CHANGED: usize = 14;
const SLOT_USER_CONTRIBUTIONS: usize = 3;

/// Number of rules that fire for one raw edit row.
pub fn rule_score(bundle: &FeatureBundle, edit_row: &[f64], th: &RuleThresholds) -> u32 {
    let mut score = 0;
    if bundle.x_u[SLOT_USER_CONTRIBUTIONS] <= th.max_user_contributions {
        score += 1;
    }
    if edit_row[SLOT_VALID] <= th.max_valid_tags {
        score += 1;
    }
    if edit_row[SLOT_VERSION] >= th.min_version {
        score += 1;
    }
    if edit_row[SLOT_NAME_CHANGED] == 1.0 {
        score += 1;
    }
    if edit_row[SLOT_OP_DELETE] == 1.0 && edit_row[SLOT_PREV_VALID] >= th.min_deleted_valid_tags {
        score += 1;
    }
    score
}

/// A changeset is vandalism when at least one edit's rule score reaches the
/// score threshold. Bundles must be raw (unnormalized).
pub fn rule_baseline(bundle: &FeatureBundle, th: &RuleThresholds) -> Label {
    let flagged = bundle
        .m_e
        .iter()
        .any(|row| rule_score(bundle, row, th) >= th.score_threshold);
    if flagged {
        Label::Vandalism
    } else {
        Label::Regular
    }
}

/// Candidate values per rule threshold for the exhaustive grid search.
#[derive(Debug, Clone)]
pub struct RuleGrids {
    pub max_user_contributions: Vec<f64>,
    pub max_valid_tags: Vec<f64>,
    pub min_version: Vec<f64>,
    pub min_deleted_valid_tags: Vec<f64>,
    pub score_threshold: Vec<u32>,
}

impl Default for RuleGrids {
    fn default() -> Self {
        RuleGrids {
            max_user_contributions: vec![0.0, 1.0, 5.0, 20.0, 100.0],
            max_valid_tags: vec![0.0, 1.0, 2.0],
            min_version: vec![2.0, 4.0, 8.0, 16.0],
            min_deleted_valid_tags: vec![1.0, 2.0, 4.0],
            score_threshold: vec![1, 2, 3, 4, 5],
        }
    }
}

/// Exhaustively maximizes F1 over the grid; ties keep the first candidate in
/// iteration order, so the search is deterministic.
pub fn grid_search_rules(
    labeled: &[(FeatureBundle, Label)],
    grids: &RuleGrids,
) -> Result<(RuleThresholds, Metrics), EvalError> {
    if labeled.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut best: Option<(RuleThresholds, Metrics)> = None;
    for &contributions in &grids.max_user_contributions {
        for &valid in &grids.max_valid_tags {
            for &version in &grids.min_version {
                for &deleted in &grids.min_deleted_valid_tags {
                    for &score in &grids.score_threshold {
                        let th = RuleThresholds {
                            max_user_contributions: contributions,
                            max_valid_tags: valid,
                            min_version: version,
                            min_deleted_valid_tags: deleted,
                            score_threshold: score,
                        };
                        let mut cc = ConfusionCounts::default();
                        for (bundle, actual) in labeled {
                            cc.tally(rule_baseline(bundle, &th), *actual);
                        }
                        let m = metrics(&cc)?;
                        if best.as_ref().is_none_or(|(_, b)| m.f1 > b.f1) {
                            best = Some((th, m));
                        }
                    }
                }
            }
        }
    }
    Ok(best.expect("non-empty grids"))
}

/// The hyperparameter search space; the default is the published grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    pub th_e_max: Vec<usize>,
    pub n_pred: Vec<usize>,
    pub n_head: Vec<usize>,
    pub d_h: Vec<usize>,
    pub dropout: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            th_e_max: vec![10, 20, 30],
            n_pred: vec![1, 2, 3, 4, 5],
            n_head: vec![5, 10, 15, 20],
            d_h: vec![12, 24, 36, 48],
            dropout: vec![0.4, 0.5, 0.6, 0.7],
            lambda: vec![0.005, 0.01, 0.02],
        }
    }
}

impl SearchSpace {
    pub fn contains(&self, config: &OvidConfig) -> bool {
        self.th_e_max.contains(&config.th_e_max)
            && self.n_pred.contains(&config.n_pred)
            && self.n_head.contains(&config.n_head)
            && self.d_h.contains(&config.d_h)
            && self.dropout.contains(&config.dropout)
            && self.lambda.contains(&config.lambda)
    }

    fn sample(&self, base: &OvidConfig, rng: &mut ChaCha8Rng) -> OvidConfig {
        let pick_usize = |v: &[usize], rng: &mut ChaCha8Rng| v[rng.gen_range(0..v.len())];
        let pick_f64 = |v: &[f64], rng: &mut ChaCha8Rng| v[rng.gen_range(0..v.len())];
        OvidConfig {
            th_e_max: pick_usize(&self.th_e_max, rng),
            n_pred: pick_usize(&self.n_pred, rng),
            n_head: pick_usize(&self.n_head, rng),
            d_h: pick_usize(&self.d_h, rng),
            dropout: pick_f64(&self.dropout, rng),
            lambda: pick_f64(&self.lambda, rng),
            seed: rng.gen(),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    pub config: OvidConfig,
    pub val_f1: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

/// Uniform sampling with replacement over the space; each config is trained
/// and ranked by validation F1, ties broken by accuracy then trial order.
/// Trials run on the rayon pool; results merge deterministically by index.
pub fn random_search(
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
    base: &OvidConfig,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    dims: FeatureDims,
) -> Result<(OvidConfig, Vec<TrialResult>), EvalError> {
    if n_trials == 0 || val_set.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs: Vec<OvidConfig> = (0..n_trials)
        .map(|_| space.sample(base, &mut rng))
        .collect();

    let mut trials: Vec<TrialResult> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| -> Result<TrialResult, EvalError> {
            let (params, _) = fit(train_set, val_set, &config, dims)?;
            let mut cc = ConfusionCounts::default();
            for ex in val_set {
                let y = predict(&params, &config, &ex.bundle)?;
                let actual = if ex.target == 1.0 {
                    Label::Vandalism
                } else {
                    Label::Regular
                };
                cc.tally(classify(y, config.th_class), actual);
            }
            let m = metrics(&cc)?;
            let val_loss = mean_loss(&params, &config, val_set)?;
            Ok(TrialResult {
                index,
                config,
                val_f1: m.f1,
                val_accuracy: m.accuracy,
                val_loss,
            })
        })
        .collect::<Result<_, _>>()?;
    trials.sort_by_key(|t| t.index);

    let best = trials
        .iter()
        .max_by(|a, b| {
            (a.val_f1, a.val_accuracy, std::cmp::Reverse(a.index))
                .partial_cmp(&(b.val_f1, b.val_accuracy, std::cmp::Reverse(b.index)))
                .expect("finite metrics")
        })
        .expect("at least one trial");
    Ok((best.config.clone(), trials))
}

/// One named row of an evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<ReportEntry>,
}

impl EvalReport {
    pub fn push(
        &mut self,
        name: impl Into<String>,
        counts: ConfusionCounts,
    ) -> Result<(), EvalError> {
        self.entries.push(ReportEntry {
            name: name.into(),
            metrics: metrics(&counts)?,
            counts,
        });
        Ok(())
    }

    /// Human-readable fixed-width table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>9} {:>9} {:>9} {:>9} {:>6} {:>6} {:>6} {:>6}\n",
            "model", "precision", "recall", "f1", "accuracy", "tp", "fp", "tn", "fn"
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "{:<28} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>6} {:>6} {:>6}\n",
                e.name,
                e.metrics.precision,
                e.metrics.recall,
                e.metrics.f1,
                e.metrics.accuracy,
                e.counts.tp,
                e.counts.fp,
                e.counts.tn,
                e.counts.fn_,
            ));
        }
        out
    }
}
