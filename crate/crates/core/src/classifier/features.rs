use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::config::ClassifierConfig;
use crate::data::{LabelledSeries, MultivariateSeries};
use crate::error::{Error, Result};
use crate::spectra::{fisher_z, window_coherence, CoherenceDiagnostics, SmootherConfig, SpectralTensor};
use crate::wavelet::{inner_product_matrix, InnerProductMatrix, WaveletFilter};

/// One feature: scale `j` and channel pair `p < q` (0-based channels).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexEntry {
    pub scale: usize,
    pub p: usize,
    pub q: usize,
}

impl IndexEntry {
    pub fn new(scale: usize, p: usize, q: usize) -> Self {
        Self { scale, p, q }
    }
}

/// The discriminative indices and the proportion that selected them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexSet {
    entries: Vec<IndexEntry>,
    proportion: f64,
}

impl IndexSet {
    pub fn new(entries: Vec<IndexEntry>, proportion: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("index set is empty".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.p >= e.q || e.scale == 0 {
                return Err(Error::Validation(format!("invalid index entry {e:?}")));
            }
            if entries[..i].contains(e) {
                return Err(Error::Validation(format!("duplicate index entry {e:?}")));
            }
        }
        Ok(Self { entries, proportion })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn proportion(&self) -> f64 {
        self.proportion
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscrepancyRow {
    pub entry: IndexEntry,
    pub value: f64,
}

/// `Δ_j^{(p,q)}` for every candidate index, in candidate order.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancyTable {
    pub rows: Vec<DiscrepancyRow>,
    /// Indices where some class pair had zero pooled variance but
    /// different means.
    pub infinite: usize,
}

/// `Σ_{c<g} |m_c - m_g| / sqrt(v_c + v_g)`. A pair with zero variance and
/// distinct means contributes `+∞`; equal means contribute nothing.
/// The flag reports whether any pair was infinite.
pub fn pairwise_discrepancy(means: &[f64], variances: &[f64]) -> (f64, bool) {
    let mut total = 0.0;
    let mut infinite = false;
    for c in 0..means.len() {
        for g in c + 1..means.len() {
            let diff = (means[c] - means[g]).abs();
            let spread = (variances[c] + variances[g]).sqrt();
            if diff == 0.0 {
                continue;
            }
            if spread == 0.0 {
                infinite = true;
                total = f64::INFINITY;
            } else {
                total += diff / spread;
            }
        }
    }
    (total, infinite)
}

/// The `⌈proportion · N⌉` indices of largest discrepancy. Ties go to the
/// smaller scale, then to the lexicographically smaller channel pair.
pub fn select_indices(table: &DiscrepancyTable, proportion: f64) -> Result<IndexSet> {
    if table.rows.is_empty() {
        return Err(Error::Validation("discrepancy table is empty".into()));
    }
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(Error::Config(format!("proportion {proportion} must lie in (0, 1]")));
    }
    let n = table.rows.len();
    let keep = ((proportion * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut rows = table.rows.clone();
    rows.sort_by(|a, b| match b.value.total_cmp(&a.value) {
        Ordering::Equal => a.entry.cmp(&b.entry),
        o => o,
    });
    IndexSet::new(rows.into_iter().take(keep).map(|r| r.entry).collect(), proportion)
}

/// Fisher-z coherence tensor of one window via the batch route.
pub(crate) fn window_fisher_z(
    window: &MultivariateSeries,
    inner: &InnerProductMatrix,
    smoother: &SmootherConfig,
) -> Result<(SpectralTensor, CoherenceDiagnostics)> {
    let (rho, diag) = window_coherence(window, inner, smoother)?;
    Ok((fisher_z(&rho), diag))
}

/// Every `(scale, p < q)` with `scale <= cap`, in index order.
pub(crate) fn candidate_indices(cap: usize, channels: usize) -> Vec<IndexEntry> {
    let mut out = Vec::new();
    for scale in 1..=cap {
        for p in 0..channels {
            for q in p + 1..channels {
                out.push(IndexEntry::new(scale, p, q));
            }
        }
    }
    out
}

/// Per-class Fisher-z samples over all candidate indices, one sample per
/// labelled location of every training window.
pub(crate) struct TrainingSamples {
    pub candidates: Vec<IndexEntry>,
    pub n_classes: usize,
    pub channels: usize,
    /// `per_class[c]` is row-major, `counts[c]` rows by `candidates.len()`.
    pub per_class: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    pub coherence: CoherenceDiagnostics,
}

impl TrainingSamples {
    pub fn column(&self, class: usize, index: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.candidates.len();
        self.per_class[class].iter().skip(index).step_by(n).copied()
    }

    fn mean_var(&self, class: usize, index: usize) -> (f64, f64) {
        let n = self.counts[class];
        let mean = self.column(class, index).sum::<f64>() / n as f64;
        let var = if n > 1 {
            self.column(class, index).map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        (mean, var)
    }
}

pub(crate) fn collect_samples(train: &[LabelledSeries], cfg: &ClassifierConfig) -> Result<TrainingSamples> {
    cfg.validate()?;
    let first = train.first().ok_or_else(|| Error::Validation("no training signals".into()))?;
    let channels = first.series().channels();
    if channels < 2 {
        return Err(Error::Shape("coherence needs at least two channels".into()));
    }
    let w = cfg.window_length;
    for (i, sig) in train.iter().enumerate() {
        if sig.series().channels() != channels {
            return Err(Error::Shape(format!(
                "training signal {} has {} channels, signal 1 has {channels}",
                i + 1,
                sig.series().channels()
            )));
        }
        if sig.series().len() < w {
            return Err(Error::Length { needed: w, got: sig.series().len() });
        }
    }
    let n_classes = match cfg.n_classes {
        Some(n) => n,
        None => train.iter().map(LabelledSeries::max_label).max().unwrap_or(0),
    };
    if n_classes < 2 {
        return Err(Error::Validation("need at least two classes".into()));
    }

    let levels = cfg.levels()?;
    let smoother = cfg.smoother();
    let inner = inner_product_matrix(levels, &WaveletFilter::haar())?;
    let candidates = candidate_indices(cfg.scale_cap()?, channels);
    let mut per_class = vec![Vec::new(); n_classes];
    let mut counts = vec![0; n_classes];
    let mut diag = CoherenceDiagnostics::default();
    for sig in train {
        let labels = sig.labels();
        if let Some(&bad) = labels.iter().find(|&&l| l > n_classes) {
            return Err(Error::Validation(format!("label {bad} exceeds {n_classes} classes")));
        }
        for start in (0..=sig.series().len() - w).step_by(w) {
            let window = sig.series().slice(start, w)?;
            let (zeta, d) = window_fisher_z(&window, &inner, &smoother)?;
            diag.merge(d);
            for k in 0..w {
                let c = labels[start + k] - 1;
                per_class[c].extend(candidates.iter().map(|e| zeta.get(e.scale, k, e.p, e.q)));
                counts[c] += 1;
            }
        }
    }
    if let Some(missing) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(missing + 1));
    }
    Ok(TrainingSamples { candidates, n_classes, channels, per_class, counts, coherence: diag })
}

pub(crate) fn discrepancy_from_samples(samples: &TrainingSamples) -> DiscrepancyTable {
    let mut infinite = 0;
    let rows = samples
        .candidates
        .iter()
        .enumerate()
        .map(|(i, &entry)| {
            let (means, vars): (Vec<f64>, Vec<f64>) = (0..samples.n_classes).map(|c| samples.mean_var(c, i)).unzip();
            let (value, inf) = pairwise_discrepancy(&means, &vars);
            infinite += usize::from(inf);
            DiscrepancyRow { entry, value }
        })
        .collect();
    DiscrepancyTable { rows, infinite }
}

/// Discrepancy of every candidate index over the training signals.
pub fn discrepancy(train: &[LabelledSeries], cfg: &ClassifierConfig) -> Result<DiscrepancyTable> {
    Ok(discrepancy_from_samples(&collect_samples(train, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: &[(usize, usize, usize, f64)]) -> DiscrepancyTable {
        DiscrepancyTable {
            rows: values
                .iter()
                .map(|&(j, p, q, value)| DiscrepancyRow { entry: IndexEntry::new(j, p, q), value })
                .collect(),
            infinite: 0,
        }
    }

    #[test]
    fn identical_class_distributions_have_zero_discrepancy() {
        assert_eq!(pairwise_discrepancy(&[0.4, 0.4], &[0.2, 0.2]), (0.0, false));
    }

    #[test]
    fn unit_separation() {
        let (d, inf) = pairwise_discrepancy(&[1.0, 0.0], &[0.5, 0.5]);
        assert!(!inf);
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn three_classes_sum_their_pairs() {
        // unit pooled variances, so the pair terms are the mean gaps 1, 3, 2
        let (d, _) = pairwise_discrepancy(&[0.0, 1.0, 3.0], &[0.5, 0.5, 0.5]);
        assert!((d - 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_infinite() {
        let (d, inf) = pairwise_discrepancy(&[1.0, 0.0], &[0.0, 0.0]);
        assert!(inf);
        assert_eq!(d, f64::INFINITY);
    }

    #[test]
    fn full_proportion_keeps_everything_sorted() {
        let t = table(&[(1, 0, 1, 0.5), (1, 0, 2, 2.0), (2, 0, 1, 1.0)]);
        let set = select_indices(&t, 1.0).unwrap();
        assert_eq!(set.entries(), &[IndexEntry::new(1, 0, 2), IndexEntry::new(2, 0, 1), IndexEntry::new(1, 0, 1)]);
    }

    #[test]
    fn small_proportion_keeps_the_argmax() {
        let t = table(&[(1, 0, 1, 0.5), (1, 0, 2, 2.0), (2, 0, 1, 1.0)]);
        let set = select_indices(&t, 0.1).unwrap();
        assert_eq!(set.entries(), &[IndexEntry::new(1, 0, 2)]);
    }

    #[test]
    fn ties_prefer_finer_scale() {
        let t = table(&[(2, 0, 1, 3.0), (1, 1, 2, 3.0), (1, 0, 2, 1.0)]);
        let set = select_indices(&t, 0.5).unwrap();
        assert_eq!(set.entries(), &[IndexEntry::new(1, 1, 2), IndexEntry::new(2, 0, 1)]);
    }

    #[test]
    fn empty_table_is_an_error() {
        assert!(select_indices(&table(&[]), 0.5).is_err());
    }

    #[test]
    fn candidate_layout() {
        let c = candidate_indices(2, 3);
        assert_eq!(c.len(), 6);
        assert_eq!(c[0], IndexEntry::new(1, 0, 1));
        assert_eq!(c[5], IndexEntry::new(2, 1, 2));
    }

    #[test]
    fn index_set_rejects_bad_entries() {
        assert!(IndexSet::new(vec![IndexEntry::new(1, 1, 1)], 0.1).is_err());
        assert!(IndexSet::new(vec![IndexEntry::new(1, 0, 1), IndexEntry::new(1, 0, 1)], 0.1).is_err());
        assert!(IndexSet::new(vec![], 0.1).is_err());
    }
}
