use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::{validate_priors, ClassifierConfig, RidgePolicy};
use super::features::{
    collect_samples, discrepancy_from_samples, select_indices, DiscrepancyTable, IndexEntry, IndexSet, TrainingSamples,
};
use crate::data::LabelledSeries;
use crate::error::{Error, Result};
use crate::spectra::{CoherenceDiagnostics, SmootherConfig};
use crate::wavelet::{inner_product_matrix, levels_for, WaveletFilter};

pub const MODEL_VERSION: u32 = 1;

const MAX_RIDGE_STEPS: usize = 64;

/// One class-conditional Gaussian, with its Cholesky factor cached.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGaussian {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    lambda: f64,
    factor: DMatrix<f64>,
    log_det: f64,
}

impl ClassGaussian {
    /// `covariance` must already be regularized; `lambda` is recorded only.
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>, lambda: f64) -> Result<Self> {
        let n = mean.len();
        if covariance.shape() != (n, n) {
            return Err(Error::Shape(format!("covariance is {:?}, mean has {n} entries", covariance.shape())));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Value("class parameters must be finite".into()));
        }
        if (&covariance - covariance.transpose()).amax() > 1e-12 * covariance.amax().max(1.0) {
            return Err(Error::Validation("covariance is not symmetric".into()));
        }
        let factor =
            covariance.clone().cholesky().ok_or(Error::Conditioning { condition: condition_number(&covariance) })?.l();
        let log_det = 2.0 * factor.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { mean: DVector::from_vec(mean), covariance, lambda, factor, log_det })
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `(z - μ)ᵀ Σ⁻¹ (z - μ)`.
    pub fn mahalanobis(&self, z: &[f64]) -> f64 {
        let diff = DVector::from_iterator(z.len(), z.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let y = self.factor.solve_lower_triangular(&diff).expect("Cholesky factor has a positive diagonal");
        y.norm_squared()
    }

    /// Log density up to the `|M|/2 · ln 2π` term shared by every class.
    pub fn log_kernel(&self, z: &[f64]) -> f64 {
        -0.5 * (self.log_det + self.mahalanobis(z))
    }
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Posterior class probabilities at one location.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub probabilities: Vec<f64>,
    /// Every class scored `-∞`, so the uniform vector was returned.
    pub fallback: bool,
}

/// Softmax of log scores with the maximum subtracted first.
pub fn normalize_log_scores(scores: &[f64]) -> Posterior {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        let n = scores.len();
        return Posterior { probabilities: vec![1.0 / n as f64; n], fallback: true };
    }
    let mut probabilities: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    Posterior { probabilities, fallback: false }
}

/// The trained classifier. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    window_length: usize,
    levels: usize,
    channels: usize,
    scale_cap: usize,
    index_set: IndexSet,
    priors: Vec<f64>,
    log_priors: Vec<f64>,
    classes: Vec<ClassGaussian>,
    smoother: SmootherConfig,
    ridge: RidgePolicy,
    inverse_rows: Vec<Vec<f64>>,
    provenance: Option<Value>,
}

impl ClassModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        window_length: usize,
        channels: usize,
        scale_cap: usize,
        index_set: IndexSet,
        priors: Vec<f64>,
        classes: Vec<ClassGaussian>,
        smoother: SmootherConfig,
        ridge: RidgePolicy,
    ) -> Result<Self> {
        let levels = levels_for(window_length)?;
        smoother.validate(window_length)?;
        if classes.len() < 2 {
            return Err(Error::Validation("a model needs at least two classes".into()));
        }
        if priors.len() != classes.len() {
            return Err(Error::Validation(format!("{} priors for {} classes", priors.len(), classes.len())));
        }
        validate_priors(&priors)?;
        if scale_cap == 0 || scale_cap > levels {
            return Err(Error::Validation(format!("scale cap {scale_cap} outside 1..={levels}")));
        }
        for e in index_set.entries() {
            if e.scale > scale_cap || e.q >= channels {
                return Err(Error::Validation(format!("index entry {e:?} out of range")));
            }
        }
        if let Some(c) = classes.iter().position(|c| c.mean().len() != index_set.len()) {
            return Err(Error::Shape(format!("class {} mean does not match the index set", c + 1)));
        }
        let inverse_rows = if smoother.bias_correction {
            inner_product_matrix(levels, &WaveletFilter::haar())?.inverse_rows()
        } else {
            (0..levels).map(|j| (0..levels).map(|l| f64::from(u8::from(j == l))).collect()).collect()
        };
        let log_priors = priors.iter().map(|p| p.ln()).collect();
        Ok(Self {
            window_length,
            levels,
            channels,
            scale_cap,
            index_set,
            priors,
            log_priors,
            classes,
            smoother,
            ridge,
            inverse_rows,
            provenance: None,
        })
    }

    /// Attaches a free-form record of how the model was produced.
    pub fn with_provenance(mut self, provenance: Value) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn scale_cap(&self) -> usize {
        self.scale_cap
    }

    pub fn index_set(&self) -> &IndexSet {
        &self.index_set
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn classes(&self) -> &[ClassGaussian] {
        &self.classes
    }

    pub fn class(&self, c: usize) -> &ClassGaussian {
        &self.classes[c - 1]
    }

    pub fn smoother(&self) -> &SmootherConfig {
        &self.smoother
    }

    pub fn ridge(&self) -> &RidgePolicy {
        &self.ridge
    }

    pub fn provenance(&self) -> Option<&Value> {
        self.provenance.as_ref()
    }

    pub(crate) fn inverse_rows(&self) -> &[Vec<f64>] {
        &self.inverse_rows
    }

    /// `ln prior(c) - ½ ln|Σ_c| - ½ (z-μ_c)ᵀ Σ_c⁻¹ (z-μ_c)` per class.
    pub fn log_scores(&self, z: &[f64]) -> Vec<f64> {
        self.classes
            .iter()
            .zip(&self.log_priors)
            .map(|(g, lp)| if *lp == f64::NEG_INFINITY { *lp } else { lp + g.log_kernel(z) })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelDocument>(text)?.into_model()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Posterior at one location from the Fisher-z values at the model's
/// index set, in index-set order.
pub fn window_posterior(zeta: &[f64], model: &ClassModel) -> Result<Posterior> {
    if zeta.len() != model.index_set.len() {
        return Err(Error::Shape(format!(
            "{} feature values for an index set of {}",
            zeta.len(),
            model.index_set.len()
        )));
    }
    if let Some(v) = zeta.iter().find(|v| !v.is_finite()) {
        return Err(Error::Value(format!("feature value {v}")));
    }
    Ok(normalize_log_scores(&model.log_scores(zeta)))
}

/// Sample skewness and excess kurtosis of one selected feature within one
/// class. Values far from zero suggest the Gaussian model fits poorly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalityCheck {
    pub class: usize,
    pub entry: IndexEntry,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSummary {
    pub discrepancy: DiscrepancyTable,
    /// Training samples per class.
    pub counts: Vec<usize>,
    pub normality: Vec<NormalityCheck>,
    pub coherence: CoherenceDiagnostics,
    pub warnings: Vec<String>,
}

pub fn train(train: &[LabelledSeries], cfg: &ClassifierConfig) -> Result<ClassModel> {
    train_with_summary(train, cfg).map(|(m, _)| m)
}

pub fn train_with_summary(train: &[LabelledSeries], cfg: &ClassifierConfig) -> Result<(ClassModel, TrainingSummary)> {
    let samples = collect_samples(train, cfg)?;
    let table = discrepancy_from_samples(&samples);
    let index_set = select_indices(&table, cfg.proportion)?;
    let columns: Vec<usize> = index_set
        .entries()
        .iter()
        .map(|e| samples.candidates.iter().position(|c| c == e).expect("selected from candidates"))
        .collect();

    let mut warnings = Vec::new();
    if table.infinite > 0 {
        warnings.push(format!("{} indices had zero pooled variance with distinct class means", table.infinite));
    }
    let mut classes = Vec::with_capacity(samples.n_classes);
    let mut normality = Vec::new();
    for c in 0..samples.n_classes {
        let n = samples.counts[c];
        if n < columns.len() + 1 {
            warnings.push(format!(
                "class {} has {n} samples for {} features; covariance is singular before the ridge",
                c + 1,
                columns.len()
            ));
        }
        let (mean, cov) = class_moments(&samples, c, &columns);
        let (covariance, lambda) = regularize(cov, &cfg.ridge)?;
        classes.push(ClassGaussian::new(mean.clone(), covariance, lambda)?);
        for (i, &col) in columns.iter().enumerate() {
            let (skewness, excess_kurtosis) = shape_moments(samples.column(c, col), mean[i], n);
            normality.push(NormalityCheck { class: c + 1, entry: index_set.entries()[i], skewness, excess_kurtosis });
        }
    }
    let priors = match &cfg.priors {
        Some(p) if p.len() != samples.n_classes => {
            return Err(Error::Config(format!("{} priors for {} classes", p.len(), samples.n_classes)))
        }
        Some(p) => p.clone(),
        None => vec![1.0 / samples.n_classes as f64; samples.n_classes],
    };
    let model = ClassModel::new(
        cfg.window_length,
        samples.channels,
        cfg.scale_cap()?,
        index_set,
        priors,
        classes,
        cfg.smoother(),
        cfg.ridge,
    )?;
    let summary = TrainingSummary {
        discrepancy: table,
        counts: samples.counts.clone(),
        normality,
        coherence: samples.coherence,
        warnings,
    };
    Ok((model, summary))
}

fn class_moments(samples: &TrainingSamples, class: usize, columns: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let n = samples.counts[class];
    let width = samples.candidates.len();
    let rows = samples.per_class[class].chunks_exact(width);
    let mut mean = vec![0.0; columns.len()];
    for row in rows.clone() {
        for (m, &c) in mean.iter_mut().zip(columns) {
            *m += row[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let d = columns.len();
    let mut cov = DMatrix::zeros(d, d);
    if n > 1 {
        let mut centred = vec![0.0; d];
        for row in rows {
            for (i, &c) in columns.iter().enumerate() {
                centred[i] = row[c] - mean[i];
            }
            for a in 0..d {
                for b in a..d {
                    cov[(a, b)] += centred[a] * centred[b];
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
    }
    (mean, cov)
}

/// Adds `λ I` starting from `scale · tr(Σ)/d`, growing tenfold until the
/// condition number is acceptable.
fn regularize(cov: DMatrix<f64>, policy: &RidgePolicy) -> Result<(DMatrix<f64>, f64)> {
    let d = cov.nrows();
    let trace = cov.trace();
    let mut lambda = if trace > 0.0 { policy.scale * trace / d as f64 } else { policy.scale };
    for _ in 0..MAX_RIDGE_STEPS {
        let mut reg = cov.clone();
        for i in 0..d {
            reg[(i, i)] += lambda;
        }
        if condition_number(&reg) <= policy.max_condition {
            return Ok((reg, lambda));
        }
        lambda *= 10.0;
    }
    Err(Error::Conditioning { condition: condition_number(&cov) })
}

fn shape_moments(values: impl Iterator<Item = f64>, mean: f64, n: usize) -> (f64, f64) {
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let n = n as f64;
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 <= 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

#[derive(Serialize, Deserialize)]
struct IndexDoc {
    j: usize,
    p: usize,
    q: usize,
}

#[derive(Serialize, Deserialize)]
struct ClassDoc {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RegularizationDoc {
    scale: f64,
    max_condition: f64,
    lambda: Vec<f64>,
}

/// On-disk layout. Channel indices are 1-based here.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    w: usize,
    #[serde(rename = "J")]
    levels: usize,
    n_classes: usize,
    channels: usize,
    scale_cap: usize,
    index_set: Vec<IndexDoc>,
    proportion: f64,
    priors: Vec<f64>,
    classes: Vec<ClassDoc>,
    smoother: SmootherConfig,
    filter: String,
    regularization: RegularizationDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Value>,
}

impl ModelDocument {
    fn from_model(m: &ClassModel) -> Self {
        Self {
            version: MODEL_VERSION,
            w: m.window_length,
            levels: m.levels,
            n_classes: m.n_classes(),
            channels: m.channels,
            scale_cap: m.scale_cap,
            index_set: m.index_set.entries().iter().map(|e| IndexDoc { j: e.scale, p: e.p + 1, q: e.q + 1 }).collect(),
            proportion: m.index_set.proportion(),
            priors: m.priors.clone(),
            classes: m
                .classes
                .iter()
                .map(|g| ClassDoc {
                    mean: g.mean().to_vec(),
                    covariance: g.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
                })
                .collect(),
            smoother: m.smoother,
            filter: "haar".into(),
            regularization: RegularizationDoc {
                scale: m.ridge.scale,
                max_condition: m.ridge.max_condition,
                lambda: m.classes.iter().map(|g| g.lambda).collect(),
            },
            provenance: m.provenance.clone(),
        }
    }

    fn into_model(self) -> Result<ClassModel> {
        if self.version != MODEL_VERSION {
            return Err(Error::Validation(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                self.version
            )));
        }
        if self.filter != "haar" {
            return Err(Error::Validation(format!("unsupported filter {:?}", self.filter)));
        }
        if levels_for(self.w)? != self.levels {
            return Err(Error::Validation(format!("J = {} does not match w = {}", self.levels, self.w)));
        }
        if self.classes.len() != self.n_classes || self.regularization.lambda.len() != self.n_classes {
            return Err(Error::Validation(format!("expected {} classes", self.n_classes)));
        }
        let entries = self
            .index_set
            .iter()
            .map(|e| {
                if e.p == 0 || e.q == 0 {
                    Err(Error::Validation("channel indices are 1-based".into()))
                } else {
                    Ok(IndexEntry::new(e.j, e.p - 1, e.q - 1))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let index_set = IndexSet::new(entries, self.proportion)?;
        let d = index_set.len();
        let classes = self
            .classes
            .into_iter()
            .zip(self.regularization.lambda)
            .map(|(c, lambda)| {
                if c.covariance.len() != d || c.covariance.iter().any(|r| r.len() != d) {
                    return Err(Error::Shape(format!("covariance must be {d} x {d}")));
                }
                let cov = DMatrix::from_fn(d, d, |a, b| c.covariance[a][b]);
                ClassGaussian::new(c.mean, cov, lambda)
            })
            .collect::<Result<Vec<_>>>()?;
        let ridge = RidgePolicy { scale: self.regularization.scale, max_condition: self.regularization.max_condition };
        let model = ClassModel::new(
            self.w,
            self.channels,
            self.scale_cap,
            index_set,
            self.priors,
            classes,
            self.smoother,
            ridge,
        )?;
        Ok(match self.provenance {
            Some(p) => model.with_provenance(p),
            None => model,
        })
    }
}
