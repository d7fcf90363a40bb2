//! Scoring of predicted label sequences, a replicated simulation study and
//! a runtime-scaling benchmark.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    classify_online, count_class_changes, train, ClassModel, ClassifierConfig, DEFAULT_MIN_DURATION,
};
use crate::error::{Error, Result};
use crate::simgen::{generate_with_rng, make_training_set_with_rng, stream_rng, ClassProcess, Scenario};

fn check_lengths(truth: &[usize], predicted: &[usize]) -> Result<()> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!("truth has {} labels, prediction has {}", truth.len(), predicted.len())));
    }
    if truth.is_empty() {
        return Err(Error::Validation("label vectors are empty".into()));
    }
    Ok(())
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Homogeneity and completeness from the label contingency table, with
/// natural-log entropies.
pub fn homogeneity_completeness(truth: &[usize], predicted: &[usize]) -> Result<(f64, f64)> {
    check_lengths(truth, predicted)?;
    let n = truth.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut by_truth: BTreeMap<usize, usize> = BTreeMap::new();
    let mut by_pred: BTreeMap<usize, usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        *joint.entry((t, p)).or_default() += 1;
        *by_truth.entry(t).or_default() += 1;
        *by_pred.entry(p).or_default() += 1;
    }
    let h_truth = entropy(by_truth.values().copied(), n);
    let h_pred = entropy(by_pred.values().copied(), n);
    let h_joint = entropy(joint.values().copied(), n);
    // H(T|P) = H(T,P) - H(P)
    let homogeneity = if h_truth == 0.0 { 1.0 } else { 1.0 - (h_joint - h_pred) / h_truth };
    let completeness = if h_pred == 0.0 { 1.0 } else { 1.0 - (h_joint - h_truth) / h_pred };
    Ok((homogeneity.clamp(0.0, 1.0), completeness.clamp(0.0, 1.0)))
}

/// Harmonic mean of homogeneity and completeness.
pub fn v_measure(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    let (h, c) = homogeneity_completeness(truth, predicted)?;
    Ok(if h + c == 0.0 { 0.0 } else { 2.0 * h * c / (h + c) })
}

/// Fraction of time points whose predicted label equals the truth.
pub fn true_positive_rate(truth: &[usize], predicted: &[usize]) -> Result<f64> {
    check_lengths(truth, predicted)?;
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Mean and sample standard deviation; the deviation is undefined for a
/// single value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd =
            (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Some(Self { mean, sd })
    }

    fn cell(&self, digits: usize) -> String {
        match self.sd {
            Some(sd) => format!("{:.*} ({:.*})", digits, self.mean, digits, sd),
            None => format!("{:.*} (n/a)", digits, self.mean),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub changes_detected: usize,
    pub v_measure: f64,
    pub true_positive_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<u8>,
    pub n_replications: usize,
    pub n_failures: usize,
    pub true_changes: usize,
    pub changes_detected: Option<Summary>,
    pub v_measure: Option<Summary>,
    pub true_positive_rate: Option<Summary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify_seconds: Option<Summary>,
    pub replications: Vec<Replication>,
    pub failures: Vec<Failure>,
}

impl EvaluationReport {
    fn from_outcomes(true_changes: usize, outcomes: Vec<std::result::Result<Replication, Failure>>) -> Self {
        let n_replications = outcomes.len();
        let (mut replications, mut failures) = (Vec::new(), Vec::new());
        for o in outcomes {
            match o {
                Ok(r) => replications.push(r),
                Err(f) => failures.push(f),
            }
        }
        let column = |f: fn(&Replication) -> f64| Summary::of(&replications.iter().map(f).collect::<Vec<_>>());
        let timings: Vec<f64> = replications.iter().filter_map(|r| r.classify_seconds).collect();
        Self {
            preset: None,
            scenario: None,
            n_replications,
            n_failures: failures.len(),
            true_changes,
            changes_detected: column(|r| r.changes_detected as f64),
            v_measure: column(|r| r.v_measure),
            true_positive_rate: column(|r| r.true_positive_rate),
            classify_seconds: Summary::of(&timings),
            replications,
            failures,
        }
    }

    /// Copy with every wall-clock field removed, so that reruns with the
    /// same seed serialize to identical bytes.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        out.classify_seconds = None;
        for r in &mut out.replications {
            r.train_seconds = None;
            r.classify_seconds = None;
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `measure | mean (sd)` rows in the style of a results table.
    pub fn table(&self) -> String {
        let heading = match (&self.preset, self.scenario) {
            (Some(p), Some(s)) => format!("{p}, scenario {s}"),
            (None, Some(s)) => format!("scenario {s}"),
            (Some(p), None) => p.clone(),
            (None, None) => "study".into(),
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{heading}: {} replications, {} failed, {} true changes",
            self.n_replications, self.n_failures, self.true_changes
        );
        let _ = writeln!(out, "{:<22}mean (sd)", "measure");
        let rows = [
            ("changes detected", self.changes_detected, 2),
            ("V-measure", self.v_measure, 2),
            ("true positive rate", self.true_positive_rate, 2),
        ];
        for (name, s, digits) in rows {
            let cell = s.map(|s| s.cell(digits)).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(out, "{name:<22}{cell}");
        }
        if let Some(t) = self.classify_seconds {
            let _ = writeln!(out, "{:<22}{}", "classify seconds", t.cell(3));
        }
        out
    }
}

/// Trains on a fresh training set and classifies a fresh test stream per
/// replication. Replication `r` draws its training set from stream `2r`
/// and its test stream from stream `2r + 1` of `seed`. A failed
/// replication is recorded and the study carries on.
pub fn run_study(
    process: &ClassProcess,
    scenario: &Scenario,
    n_replications: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> EvaluationReport {
    let outcomes = (0..n_replications)
        .into_par_iter()
        .map(|r| replicate(process, scenario, cfg, seed, r).map_err(|e| Failure { index: r, message: e.to_string() }))
        .collect();
    EvaluationReport::from_outcomes(scenario.n_changes(), outcomes)
}

fn replicate(
    process: &ClassProcess,
    scenario: &Scenario,
    cfg: &ClassifierConfig,
    seed: u64,
    r: usize,
) -> Result<Replication> {
    let training = make_training_set_with_rng(process, cfg.window_length, &mut stream_rng(seed, 2 * r as u64))?;
    let test = generate_with_rng(process, scenario, &mut stream_rng(seed, 2 * r as u64 + 1))?;
    let clock = Instant::now();
    let model = train(&training, cfg)?;
    let train_seconds = clock.elapsed().as_secs_f64();
    let clock = Instant::now();
    let probs = classify_online(test.series(), &model)?;
    let classify_seconds = clock.elapsed().as_secs_f64();
    Ok(Replication {
        index: r,
        changes_detected: count_class_changes(probs.labels(), DEFAULT_MIN_DURATION),
        v_measure: v_measure(test.labels(), probs.labels())?,
        true_positive_rate: true_positive_rate(test.labels(), probs.labels())?,
        train_seconds: Some(train_seconds),
        classify_seconds: Some(classify_seconds),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub length: usize,
    pub replications: usize,
    /// Wall time of one classification of the whole series.
    pub seconds: Summary,
    pub per_point_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub window_length: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:>8}  {:>6}  {:>22}  {:>14}\n", "T", "reps", "seconds mean (sd)", "us per point");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>8}  {:>6}  {:>22}  {:>14.3}",
                r.length,
                r.replications,
                r.seconds.cell(4),
                r.per_point_seconds * 1e6
            );
        }
        out
    }

    /// Per-point time at `length`, if it was measured.
    pub fn per_point(&self, length: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.length == length).map(|r| r.per_point_seconds)
    }
}

/// A test stream of `length` points cycling classes in segments of 300.
fn bench_scenario(length: usize) -> Result<Scenario> {
    let mut segments = vec![300; length / 300];
    match length % 300 {
        0 => {}
        rest => segments.push(rest),
    }
    Scenario::new(segments)
}

/// Times `classify_online` on `mvn3` streams of each length. One model is
/// trained from stream 0 of `seed`; the test stream for length index `i`
/// and replication `r` comes from stream `1 + i·reps + r`. Runs
/// sequentially so that timings are not disturbed by other work, after one
/// untimed warm-up classification.
pub fn bench_scaling(lengths: &[usize], replications: usize, cfg: &ClassifierConfig, seed: u64) -> Result<BenchTable> {
    if replications == 0 {
        return Err(Error::Config("benchmark needs at least one replication".into()));
    }
    let process = ClassProcess::mvn3();
    let training = make_training_set_with_rng(&process, cfg.window_length, &mut stream_rng(seed, 0))?;
    let model: ClassModel = train(&training, cfg)?;
    if let Some(&first) = lengths.first() {
        let warm = generate_with_rng(&process, &bench_scenario(first)?, &mut stream_rng(seed, u64::MAX))?;
        classify_online(warm.series(), &model)?;
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for (i, &length) in lengths.iter().enumerate() {
        if length < cfg.window_length {
            return Err(Error::Length { needed: cfg.window_length, got: length });
        }
        let scenario = bench_scenario(length)?;
        let mut seconds = Vec::with_capacity(replications);
        for r in 0..replications {
            let stream = 1 + (i * replications + r) as u64;
            let test = generate_with_rng(&process, &scenario, &mut stream_rng(seed, stream))?;
            let clock = Instant::now();
            classify_online(test.series(), &model)?;
            seconds.push(clock.elapsed().as_secs_f64());
        }
        let summary = Summary::of(&seconds).expect("at least one replication");
        rows.push(BenchRow { length, replications, per_point_seconds: summary.mean / length as f64, seconds: summary });
    }
    Ok(BenchTable { window_length: cfg.window_length, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_one() {
        let t = [1, 1, 2, 2, 3, 3];
        assert_eq!(v_measure(&t, &t).unwrap(), 1.0);
        assert_eq!(true_positive_rate(&t, &t).unwrap(), 1.0);
    }

    #[test]
    fn renaming_classes_keeps_v_measure() {
        let t = [1, 1, 2, 2, 3, 3];
        let p = [3, 3, 1, 1, 2, 2];
        assert!((v_measure(&t, &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_predicted_class_has_zero_homogeneity() {
        let t = [1, 1, 1, 1, 2, 2, 2, 2];
        let (h, c) = homogeneity_completeness(&t, &[1; 8]).unwrap();
        assert_eq!(h, 0.0);
        assert_eq!(c, 1.0);
        assert_eq!(v_measure(&t, &[1; 8]).unwrap(), 0.0);
    }

    #[test]
    fn v_measure_matches_hand_computation() {
        // contingency [[2, 0], [1, 1]]: H(T) = ln 2, H(P) = H(3/4, 1/4),
        // H(T,P) = H(1/2, 1/4, 1/4)
        let t = [1, 1, 2, 2];
        let p = [1, 1, 1, 2];
        let ht = 2f64.ln();
        let hp = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let hj = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
        let h = 1.0 - (hj - hp) / ht;
        let c = 1.0 - (hj - ht) / hp;
        assert!((v_measure(&t, &p).unwrap() - 2.0 * h * c / (h + c)).abs() < 1e-14);
    }

    #[test]
    fn tpr_arithmetic() {
        assert_eq!(true_positive_rate(&[1, 1, 2, 2], &[1, 2, 2, 2]).unwrap(), 0.75);
        assert_eq!(true_positive_rate(&[1, 2, 1], &[2, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_a_shape_error() {
        assert!(matches!(v_measure(&[1, 2], &[1]), Err(Error::Shape(_))));
        assert!(matches!(true_positive_rate(&[1], &[1, 2]), Err(Error::Shape(_))));
    }

    #[test]
    fn single_value_has_no_sd() {
        let s = Summary::of(&[0.7]).unwrap();
        assert_eq!(s.mean, 0.7);
        assert_eq!(s.sd, None);
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.sd, Some(2f64.sqrt()));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn study_with_one_replication_flags_sd() {
        let cfg = ClassifierConfig::new(64);
        let scenario = Scenario::new(vec![100, 100]).unwrap();
        let report = run_study(&ClassProcess::mvn3(), &scenario, 1, &cfg, 3);
        assert_eq!(report.n_failures, 0);
        assert_eq!(report.v_measure.unwrap().sd, None);
        assert!(report.table().contains("(n/a)"));
    }

    #[test]
    fn study_is_reproducible() {
        let cfg = ClassifierConfig::new(64);
        let scenario = Scenario::new(vec![100, 100]).unwrap();
        let a = run_study(&ClassProcess::mvn3(), &scenario, 3, &cfg, 8).without_timings();
        let b = run_study(&ClassProcess::mvn3(), &scenario, 3, &cfg, 8).without_timings();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn failures_are_recorded() {
        // a test stream shorter than the window cannot be classified
        let cfg = ClassifierConfig::new(64);
        let scenario = Scenario::new(vec![20, 20]).unwrap();
        let report = run_study(&ClassProcess::mvn3(), &scenario, 2, &cfg, 1);
        assert_eq!(report.n_failures, 2);
        assert!(report.changes_detected.is_none());
    }

    #[test]
    fn bench_has_one_row_per_length() {
        let cfg = ClassifierConfig::new(64);
        let table = bench_scaling(&[128, 256], 1, &cfg, 2).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.per_point(256).is_some());
    }
}
