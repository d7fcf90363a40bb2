use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::window_fisher_z;
use super::model::{window_posterior, ClassModel};
use crate::data::{format_f64, MultivariateSeries};
use crate::error::{Error, Result};
use crate::online::{SlidingTransform, DEFAULT_REBUILD_INTERVAL};
use crate::spectra::{coherence_value, project_positive_definite, CoherenceDiagnostics, EdgeRule};
use crate::wavelet::{inner_product_matrix, WaveletFilter};

/// Counters collected while classifying a stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationDiagnostics {
    pub windows: usize,
    /// Locations whose posterior fell back to uniform.
    pub fallback_locations: usize,
    pub coherence: CoherenceDiagnostics,
}

/// Per-time-point class probabilities and hard labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilitySeries {
    n_classes: usize,
    probabilities: Vec<f64>,
    labels: Vec<usize>,
    diagnostics: ClassificationDiagnostics,
}

impl ProbabilitySeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Probability vector at time `t`; entry `c - 1` is class `c`.
    pub fn at(&self, t: usize) -> &[f64] {
        &self.probabilities[t * self.n_classes..(t + 1) * self.n_classes]
    }

    /// Argmax class (1-based) per time point, ties to the lower class.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn diagnostics(&self) -> &ClassificationDiagnostics {
        &self.diagnostics
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probabilities.iter().zip(&other.probabilities).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// CSV with header `t,p_1,...,p_Nc,label`; `t` counts from 0.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_classes).map(|c| format!("p_{c}")));
        header.push("label".into());
        wtr.write_record(&header).map_err(csv_io)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.at(t).iter().map(|&p| format_f64(p)));
            row.push(self.labels[t].to_string());
            wtr.write_record(&row).map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Running sums of per-window posteriors, divided at the end by the number
/// of windows that covered each time point.
#[derive(Clone, Debug, Default)]
pub struct ProbabilityAccumulator {
    n_classes: usize,
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl ProbabilityAccumulator {
    pub fn new(n_classes: usize) -> Self {
        Self { n_classes, sums: Vec::new(), counts: Vec::new() }
    }

    pub fn add(&mut self, t: usize, probabilities: &[f64]) {
        debug_assert_eq!(probabilities.len(), self.n_classes);
        if t >= self.counts.len() {
            self.counts.resize(t + 1, 0);
            self.sums.resize((t + 1) * self.n_classes, 0.0);
        }
        self.counts[t] += 1;
        for (s, p) in self.sums[t * self.n_classes..].iter_mut().zip(probabilities) {
            *s += p;
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn finish(self, diagnostics: ClassificationDiagnostics) -> ProbabilitySeries {
        let nc = self.n_classes;
        let mut probabilities = self.sums;
        let mut labels = Vec::with_capacity(self.counts.len());
        for (t, &n) in self.counts.iter().enumerate() {
            let row = &mut probabilities[t * nc..(t + 1) * nc];
            row.iter_mut().for_each(|p| *p /= n as f64);
            let mut best = 0;
            for c in 1..nc {
                if row[c] > row[best] {
                    best = c;
                }
            }
            labels.push(best + 1);
        }
        ProbabilitySeries { n_classes: nc, probabilities, labels, diagnostics }
    }
}

fn check_stream(x: &MultivariateSeries, model: &ClassModel) -> Result<()> {
    if x.channels() != model.channels() {
        return Err(Error::Shape(format!("stream has {} channels, model expects {}", x.channels(), model.channels())));
    }
    if x.len() < model.window_length() {
        return Err(Error::Length { needed: model.window_length(), got: x.len() });
    }
    Ok(())
}

/// Reference path: every window is transformed and smoothed from scratch.
pub fn classify_batch(x: &MultivariateSeries, model: &ClassModel) -> Result<ProbabilitySeries> {
    check_stream(x, model)?;
    let w = model.window_length();
    let inner = inner_product_matrix(model.levels(), &WaveletFilter::haar())?;
    let entries = model.index_set().entries();
    let mut acc = ProbabilityAccumulator::new(model.n_classes());
    let mut diag = ClassificationDiagnostics::default();
    let mut z = vec![0.0; entries.len()];
    for start in 0..=x.len() - w {
        let (zeta, d) = window_fisher_z(&x.slice(start, w)?, &inner, model.smoother())?;
        diag.coherence.merge(d);
        diag.windows += 1;
        for k in 0..w {
            for (zi, e) in z.iter_mut().zip(entries) {
                *zi = zeta.get(e.scale, k, e.p, e.q);
            }
            let post = window_posterior(&z, model)?;
            diag.fallback_locations += usize::from(post.fallback);
            acc.add(start + k, &post.probabilities);
        }
    }
    Ok(acc.finish(diag))
}

/// Moving-window classifier fed one multivariate sample at a time.
///
/// Each channel keeps a [`SlidingTransform`]. For every channel pair the
/// model needs (the selected cross pairs and their two auto pairs) and
/// every scale, a ring holds the circular `(2M+1)`-point moving sum of the
/// detail products, stored at the transforms' physical positions. A slide
/// changes the scale-`l` details only at the last `2^l` locations, so only
/// moving sums within `M` of those are recomputed.
#[derive(Clone, Debug)]
pub struct OnlineClassifier<'m> {
    model: &'m ClassModel,
    transforms: Vec<SlidingTransform>,
    pairs: Vec<(usize, usize)>,
    // [pair][scale - 1][physical location]
    sums: Vec<Vec<Vec<f64>>>,
    // distinct selected scales, ascending
    scales: Vec<usize>,
    zeta: Vec<f64>,
    start: usize,
    accumulator: ProbabilityAccumulator,
    diagnostics: ClassificationDiagnostics,
}

impl<'m> OnlineClassifier<'m> {
    /// Starts from the first `w` samples and scores that window.
    pub fn new(model: &'m ClassModel, first_window: &MultivariateSeries) -> Result<Self> {
        check_stream(first_window, model)?;
        let w = model.window_length();
        let window = first_window.slice(0, w)?;
        let transforms = (0..window.channels())
            .map(|p| {
                SlidingTransform::new(window.channel(p))
                    .map(|t| t.with_rebuild_interval(Some(DEFAULT_REBUILD_INTERVAL)))
            })
            .collect::<Result<Vec<_>>>()?;

        let channels = window.channels();
        let mut pairs = Vec::new();
        if model.smoother().positive_definite {
            // the projection needs every entry of each matrix
            for p in 0..channels {
                pairs.extend((p..channels).map(|q| (p, q)));
            }
        } else {
            for e in model.index_set().entries() {
                pairs.extend([(e.p, e.q), (e.p, e.p), (e.q, e.q)]);
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut scales: Vec<usize> = model.index_set().entries().iter().map(|e| e.scale).collect();
        scales.sort_unstable();
        scales.dedup();

        let levels = model.levels();
        let mut me = Self {
            model,
            transforms,
            sums: vec![vec![vec![0.0; w]; levels]; pairs.len()],
            pairs,
            scales,
            zeta: vec![0.0; model.index_set().len() * w],
            start: 0,
            accumulator: ProbabilityAccumulator::new(model.n_classes()),
            diagnostics: ClassificationDiagnostics::default(),
        };
        me.refresh_all_sums();
        me.score_window()?;
        for t in w..first_window.len() {
            let sample: Vec<f64> = (0..first_window.channels()).map(|p| first_window.get(p, t)).collect();
            me.push(&sample)?;
        }
        Ok(me)
    }

    /// Stream index of the oldest sample in the current window.
    pub fn window_start(&self) -> usize {
        self.start
    }

    pub fn model(&self) -> &ClassModel {
        self.model
    }

    /// Fisher-z value of index entry `i` at logical location `k` of the
    /// current window.
    pub fn zeta(&self, i: usize, k: usize) -> f64 {
        self.zeta[i * self.model.window_length() + k]
    }

    /// Slides the window by one sample and scores the new window.
    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.transforms.len() {
            return Err(Error::Shape(format!(
                "sample has {} channels, model expects {}",
                sample.len(),
                self.transforms.len()
            )));
        }
        if let Some(v) = sample.iter().find(|v| !v.is_finite()) {
            return Err(Error::Value(format!("stream sample {v}")));
        }
        for (tr, &x) in self.transforms.iter_mut().zip(sample) {
            tr.slide(x)?;
        }
        self.start += 1;
        let count = self.transforms[0].slide_count();
        if count.is_multiple_of(DEFAULT_REBUILD_INTERVAL) {
            self.refresh_all_sums();
        } else {
            self.refresh_tail_sums();
        }
        self.score_window()
    }

    /// Averages the posteriors collected so far.
    pub fn finish(self) -> ProbabilitySeries {
        self.accumulator.finish(self.diagnostics)
    }

    fn product(&self, pair: usize, scale: usize, phys: usize) -> f64 {
        let (p, q) = self.pairs[pair];
        self.transforms[p].detail_ring(scale)[phys] * self.transforms[q].detail_ring(scale)[phys]
    }

    fn refresh_all_sums(&mut self) {
        let w = self.model.window_length();
        let m = self.model.smoother().bandwidth;
        for pair in 0..self.pairs.len() {
            for scale in 1..=self.model.levels() {
                self.refresh_range(pair, scale, 0, w, m);
            }
        }
    }

    /// Recomputes the moving sums whose inputs moved or changed: logical
    /// locations `w - 2^l - M ..= w - 1 + M` (mod `w`) at each scale `l`, and
    /// with truncated edges also the first `M` locations.
    fn refresh_tail_sums(&mut self) {
        let w = self.model.window_length();
        let m = self.model.smoother().bandwidth;
        let truncated = self.model.smoother().edge == EdgeRule::Truncated;
        for pair in 0..self.pairs.len() {
            for scale in 1..=self.model.levels() {
                let changed = 1usize << scale;
                if changed + 2 * m >= w {
                    self.refresh_range(pair, scale, 0, w, m);
                } else if truncated {
                    self.refresh_range(pair, scale, 0, m, m);
                    self.refresh_range(pair, scale, w - changed - m, changed + m, m);
                } else {
                    self.refresh_range(pair, scale, w - changed - m, changed + 2 * m, m);
                }
            }
        }
    }

    /// Rewrites `len` consecutive logical moving sums starting at `first`,
    /// seeding with a direct sum and then sliding.
    fn refresh_range(&mut self, pair: usize, scale: usize, first: usize, len: usize, m: usize) {
        if len == 0 {
            return;
        }
        let w = self.model.window_length();
        let tr = &self.transforms[0];
        let phys = |k: usize| tr.physical(k % w);
        let mut out = Vec::with_capacity(len);
        match self.model.smoother().edge {
            EdgeRule::Periodic => {
                let mut acc: f64 = (first + w - m..=first + w + m).map(|k| self.product(pair, scale, phys(k))).sum();
                out.push((phys(first), acc));
                for k in first + 1..first + len {
                    acc += self.product(pair, scale, phys(k + w + m)) - self.product(pair, scale, phys(k + w - m - 1));
                    out.push((phys(k), acc));
                }
            }
            EdgeRule::Truncated => {
                let hi = (first + m).min(w - 1);
                let mut acc: f64 = (first.saturating_sub(m)..=hi).map(|k| self.product(pair, scale, phys(k))).sum();
                out.push((phys(first), acc));
                for k in first + 1..first + len {
                    if k + m < w {
                        acc += self.product(pair, scale, phys(k + m));
                    }
                    if k > m {
                        acc -= self.product(pair, scale, phys(k - m - 1));
                    }
                    out.push((phys(k), acc));
                }
            }
        }
        let ring = &mut self.sums[pair][scale - 1];
        for (i, v) in out {
            ring[i] = v;
        }
    }

    fn score_window(&mut self) -> Result<()> {
        let model = self.model;
        let cfg = model.smoother();
        let w = model.window_length();
        let channels = self.transforms.len();
        let rows = model.inverse_rows();
        let tr = &self.transforms[0];
        let norms: Vec<f64> = (0..w).map(|k| 1.0 / cfg.edge.cover(k, w, cfg.bandwidth) as f64).collect();
        let mut zeta = std::mem::take(&mut self.zeta);
        let mut m = vec![0.0; channels * channels];
        for &j in &self.scales {
            for k in 0..w {
                let phys = tr.physical(k);
                for (pair, &(p, q)) in self.pairs.iter().enumerate() {
                    let v = rows[j - 1].iter().zip(&self.sums[pair]).map(|(a, s)| a * s[phys]).sum::<f64>() * norms[k];
                    m[p * channels + q] = v;
                    m[q * channels + p] = v;
                }
                if cfg.positive_definite && project_positive_definite(&mut m, channels, cfg.eps_power) {
                    self.diagnostics.coherence.projected += 1;
                }
                for (i, e) in model.index_set().entries().iter().enumerate().filter(|(_, e)| e.scale == j) {
                    let rho = coherence_value(
                        m[e.p * channels + e.q],
                        m[e.p * channels + e.p],
                        m[e.q * channels + e.q],
                        cfg,
                        &mut self.diagnostics.coherence,
                    );
                    zeta[i * w + k] = rho.atanh();
                }
            }
        }
        let d = model.index_set().len();
        let mut z = vec![0.0; d];
        for k in 0..w {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = zeta[i * w + k];
            }
            let post = window_posterior(&z, model)?;
            self.diagnostics.fallback_locations += usize::from(post.fallback);
            self.accumulator.add(self.start + k, &post.probabilities);
        }
        self.zeta = zeta;
        self.diagnostics.windows += 1;
        Ok(())
    }
}

/// Moving-window classification with incremental transforms and local
/// re-smoothing.
pub fn classify_online(x: &MultivariateSeries, model: &ClassModel) -> Result<ProbabilitySeries> {
    Ok(OnlineClassifier::new(model, x)?.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train, ClassifierConfig};
    use crate::simgen::{generate_plan, make_training_set, stream_rng, ClassProcess};

    #[test]
    fn online_matches_batch_for_every_smoother_variant() {
        let process = ClassProcess::preset("mvn3").unwrap();
        let w = 64;
        let training = make_training_set(&process, w, 5).unwrap();
        let stream = generate_plan(&process, &[(1, 100), (2, 90), (3, 70)], &mut stream_rng(5, 1)).unwrap();
        for (pd, corrected, edge) in [
            (true, true, EdgeRule::Periodic),
            (false, true, EdgeRule::Periodic),
            (true, false, EdgeRule::Truncated),
            (false, true, EdgeRule::Truncated),
        ] {
            let mut sm = crate::spectra::SmootherConfig::new(6);
            sm.positive_definite = pd;
            sm.bias_correction = corrected;
            sm.edge = edge;
            let cfg = ClassifierConfig::new(w).with_smoother(sm).with_proportion(0.5);
            let model = train(&training, &cfg).unwrap();
            let batch = classify_batch(stream.series(), &model).unwrap();
            let online = classify_online(stream.series(), &model).unwrap();
            assert!(batch.max_abs_diff(&online) < 1e-10, "{pd} {corrected} {edge:?}");
            assert_eq!(batch.labels(), online.labels());
        }
    }

    #[test]
    fn accumulator_divides_by_cover_count() {
        let mut acc = ProbabilityAccumulator::new(2);
        acc.add(0, &[1.0, 0.0]);
        acc.add(1, &[1.0, 0.0]);
        acc.add(1, &[0.0, 1.0]);
        let s = acc.finish(ClassificationDiagnostics::default());
        assert_eq!(s.at(0), &[1.0, 0.0]);
        assert_eq!(s.at(1), &[0.5, 0.5]);
        // exact tie goes to class 1
        assert_eq!(s.labels(), &[1, 1]);
    }

    #[test]
    fn csv_layout() {
        let mut acc = ProbabilityAccumulator::new(3);
        acc.add(0, &[0.25, 0.5, 0.25]);
        let mut buf = Vec::new();
        acc.finish(ClassificationDiagnostics::default()).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,p_1,p_2,p_3,label\n0,0.25,0.5,0.25,2\n");
    }
}
