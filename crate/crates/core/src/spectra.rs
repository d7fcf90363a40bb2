//! Wavelet periodogram, its bias-corrected and smoothed form, coherence and
//! Fisher-z transformed coherence, all indexed by scale and location.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultivariateSeries;
use crate::error::{Error, Result};
use crate::wavelet::{ndwt, CoefficientPyramid, InnerProductMatrix, WaveletFilter};

pub const DEFAULT_EPS_POWER: f64 = 1e-10;
pub const DEFAULT_EPS_RHO: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Raw,
    Smoothed,
    Coherence,
    FisherZ,
}

/// `P × P` matrices for every scale `1..=J` and location `0..w`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTensor {
    kind: SpectrumKind,
    scales: usize,
    locations: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SpectralTensor {
    fn zeros(kind: SpectrumKind, scales: usize, locations: usize, channels: usize) -> Self {
        Self { kind, scales, locations, channels, values: vec![0.0; scales * locations * channels * channels] }
    }

    /// Builds a tensor from a closure over `(scale, location, p, q)`; used
    /// for synthetic inputs.
    pub fn from_fn(
        kind: SpectrumKind,
        scales: usize,
        locations: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(kind, scales, locations, channels);
        for j in 1..=scales {
            for k in 0..locations {
                for p in 0..channels {
                    for q in 0..channels {
                        let i = t.index(j, k, p, q);
                        t.values[i] = f(j, k, p, q);
                    }
                }
            }
        }
        t
    }

    fn index(&self, j: usize, k: usize, p: usize, q: usize) -> usize {
        (((j - 1) * self.locations + k) * self.channels + p) * self.channels + q
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn scales(&self) -> usize {
        self.scales
    }

    pub fn locations(&self) -> usize {
        self.locations
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Entry `(p, q)` at scale `j` (1-based) and location `k`.
    pub fn get(&self, j: usize, k: usize, p: usize, q: usize) -> f64 {
        self.values[self.index(j, k, p, q)]
    }

    /// Row-major `P × P` slice at scale `j`, location `k`.
    pub fn slice(&self, j: usize, k: usize) -> &[f64] {
        let start = self.index(j, k, 0, 0);
        &self.values[start..start + self.channels * self.channels]
    }

    fn set_sym(&mut self, j: usize, k: usize, p: usize, q: usize, v: f64) {
        let a = self.index(j, k, p, q);
        let b = self.index(j, k, q, p);
        self.values[a] = v;
        self.values[b] = v;
    }

    /// Linear combination `a·self + b·other`, for tensors of equal shape.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if (self.scales, self.locations, self.channels) != (other.scales, other.locations, other.channels) {
            return Err(Error::Shape("tensors differ in shape".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { values, ..self.clone() })
    }

    /// Mean over locations of entry `(p, q)` at scale `j`.
    pub fn location_mean(&self, j: usize, p: usize, q: usize) -> f64 {
        (0..self.locations).map(|k| self.get(j, k, p, q)).sum::<f64>() / self.locations as f64
    }

    /// Long-format CSV dump with header `j,k,p,q,value` (channels 1-based).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,k,p,q,value")?;
        for j in 1..=self.scales {
            for k in 0..self.locations {
                for p in 0..self.channels {
                    for q in 0..self.channels {
                        writeln!(out, "{j},{k},{},{},{:?}", p + 1, q + 1, self.get(j, k, p, q))?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rectangular smoother half-width and the numerical floors used when
/// forming coherence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    /// Half-width `M`; the kernel spans `2M + 1` locations.
    #[serde(rename = "M")]
    pub bandwidth: usize,
    #[serde(default = "default_eps_power")]
    pub eps_power: f64,
    #[serde(default = "default_eps_rho")]
    pub eps_rho: f64,
    /// Project each `P × P` estimate onto the positive definite cone
    /// (eigenvalues floored at `eps_power`) before forming coherence.
    #[serde(default = "default_true")]
    pub positive_definite: bool,
    /// Apply `A^{-1}` to the raw periodogram. Without it the estimate
    /// keeps the cross-scale leakage of the raw periodogram.
    #[serde(default = "default_true")]
    pub bias_correction: bool,
    #[serde(default)]
    pub edge: EdgeRule,
}

/// How the smoothing window is completed near the window edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    /// Wrap around, so every location averages exactly `2M + 1` values.
    #[default]
    Periodic,
    /// Average only the in-window locations.
    Truncated,
}

impl EdgeRule {
    /// Number of locations averaged at `k` in a window of length `w`.
    pub fn cover(self, k: usize, w: usize, half_width: usize) -> usize {
        match self {
            EdgeRule::Periodic => 2 * half_width + 1,
            EdgeRule::Truncated => (k + half_width).min(w - 1) + 1 - k.saturating_sub(half_width),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_eps_power() -> f64 {
    DEFAULT_EPS_POWER
}

fn default_eps_rho() -> f64 {
    DEFAULT_EPS_RHO
}

/// `floor(w^0.7 / 2)`. Exact powers of two land on integers, so a small
/// guard keeps e.g. `w = 1024` at 64 rather than 63.
pub fn default_bandwidth(w: usize) -> usize {
    ((w as f64).powf(0.7) / 2.0 + 1e-9).floor() as usize
}

impl SmootherConfig {
    pub fn new(bandwidth: usize) -> Self {
        Self {
            bandwidth,
            eps_power: DEFAULT_EPS_POWER,
            eps_rho: DEFAULT_EPS_RHO,
            positive_definite: true,
            bias_correction: true,
            edge: EdgeRule::Periodic,
        }
    }

    pub fn for_window(w: usize) -> Self {
        Self::new(default_bandwidth(w))
    }

    pub fn span(&self) -> usize {
        2 * self.bandwidth + 1
    }

    pub fn validate(&self, w: usize) -> Result<()> {
        if self.span() > w {
            return Err(Error::Config(format!("smoothing span 2M+1 = {} exceeds window length {w}", self.span())));
        }
        for (name, eps) in [("eps_power", self.eps_power), ("eps_rho", self.eps_rho)] {
            if !(eps > 0.0 && eps <= 1e-3) {
                return Err(Error::Config(format!("{name} = {eps} must lie in (0, 1e-3]")));
            }
        }
        Ok(())
    }
}

/// `I_{j,k} = d_{j,k} d_{j,k}^T` from one pyramid per channel.
pub fn raw_periodogram(pyramids: &[CoefficientPyramid]) -> Result<SpectralTensor> {
    let first = pyramids.first().ok_or_else(|| Error::Shape("no channel pyramids".into()))?;
    let (levels, w) = (first.levels(), first.window_length());
    if let Some(bad) = pyramids.iter().position(|p| p.levels() != levels || p.window_length() != w) {
        return Err(Error::Shape(format!("channel {} pyramid differs from channel 1", bad + 1)));
    }
    let channels = pyramids.len();
    let mut out = SpectralTensor::zeros(SpectrumKind::Raw, levels, w, channels);
    for j in 1..=levels {
        for k in 0..w {
            for p in 0..channels {
                let dp = pyramids[p].detail(j)[k];
                for (q, pq) in pyramids.iter().enumerate().skip(p) {
                    out.set_sym(j, k, p, q, dp * pq.detail(j)[k]);
                }
            }
        }
    }
    Ok(out)
}

/// Circular moving sums `out[k] = Σ_{m=k-M}^{k+M} values[m mod n]`.
pub(crate) fn circular_window_sums(values: &[f64], half_width: usize) -> Vec<f64> {
    let n = values.len() as i64;
    let m = half_width as i64;
    let at = |i: i64| values[i.rem_euclid(n) as usize];
    let mut out = Vec::with_capacity(values.len());
    let mut acc: f64 = (-m..=m).map(at).sum();
    out.push(acc);
    for k in 1..n {
        acc += at(k + m) - at(k - m - 1);
        out.push(acc);
    }
    out
}

/// Moving sums over `[k-M, k+M] ∩ [0, n)`.
pub(crate) fn truncated_window_sums(values: &[f64], half_width: usize) -> Vec<f64> {
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    let mut acc: f64 = values[..=half_width.min(n - 1)].iter().sum();
    out.push(acc);
    for k in 1..n {
        if k + half_width < n {
            acc += values[k + half_width];
        }
        if k > half_width {
            acc -= values[k - half_width - 1];
        }
        out.push(acc);
    }
    out
}

/// `Ŝ_{j,k} = (2M+1)^{-1} Σ_{m=k-M}^{k+M} Σ_l (A^{-1})_{jl} I_{l,m}`, with
/// the location sum wrapping periodically within the window unless the
/// edge rule says otherwise.
pub fn correct_and_smooth(
    raw: &SpectralTensor,
    inner: &InnerProductMatrix,
    cfg: &SmootherConfig,
) -> Result<SpectralTensor> {
    if inner.order() != raw.scales {
        return Err(Error::Shape(format!(
            "inner-product matrix has order {}, periodogram has {} scales",
            inner.order(),
            raw.scales
        )));
    }
    cfg.validate(raw.locations)?;
    let (levels, w, channels) = (raw.scales, raw.locations, raw.channels);
    let norms: Vec<f64> = (0..w).map(|k| 1.0 / cfg.edge.cover(k, w, cfg.bandwidth) as f64).collect();
    let mut out = SpectralTensor::zeros(SpectrumKind::Smoothed, levels, w, channels);
    let mut corrected = vec![0.0; w];
    for j in 1..=levels {
        for p in 0..channels {
            for q in p..channels {
                for (m, c) in corrected.iter_mut().enumerate() {
                    *c = if cfg.bias_correction {
                        (1..=levels).map(|l| inner.inverse_entry(j, l) * raw.get(l, m, p, q)).sum()
                    } else {
                        raw.get(j, m, p, q)
                    };
                }
                let sums = match cfg.edge {
                    EdgeRule::Periodic => circular_window_sums(&corrected, cfg.bandwidth),
                    EdgeRule::Truncated => truncated_window_sums(&corrected, cfg.bandwidth),
                };
                for (k, s) in sums.into_iter().enumerate() {
                    out.set_sym(j, k, p, q, s * norms[k]);
                }
            }
        }
    }
    Ok(out)
}

/// Counts of floor and clamp activations while forming coherence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceDiagnostics {
    pub floored_power: usize,
    pub clamped: usize,
    /// Matrices that needed eigenvalue flooring.
    #[serde(default)]
    pub projected: usize,
}

impl CoherenceDiagnostics {
    pub fn merge(&mut self, other: Self) {
        self.floored_power += other.floored_power;
        self.clamped += other.clamped;
        self.projected += other.projected;
    }
}

/// Coherence of one entry from the three spectral values it depends on.
pub(crate) fn coherence_value(
    cross: f64,
    power_p: f64,
    power_q: f64,
    cfg: &SmootherConfig,
    diag: &mut CoherenceDiagnostics,
) -> f64 {
    let floor = |v: f64, diag: &mut CoherenceDiagnostics| {
        if v < cfg.eps_power {
            diag.floored_power += 1;
            cfg.eps_power
        } else {
            v
        }
    };
    let pp = floor(power_p, diag);
    let qq = floor(power_q, diag);
    let rho = cross / (pp * qq).sqrt();
    let bound = 1.0 - cfg.eps_rho;
    if rho > bound {
        diag.clamped += 1;
        bound
    } else if rho < -bound {
        diag.clamped += 1;
        -bound
    } else {
        rho
    }
}

/// Replaces the row-major symmetric `P × P` matrix in `m` by `V max(Λ, tol) Vᵀ`
/// when its smallest eigenvalue is below `tol`. Returns whether it changed.
pub(crate) fn project_positive_definite(m: &mut [f64], p: usize, tol: f64) -> bool {
    let eig = DMatrix::from_row_slice(p, p, m).symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= tol) {
        return false;
    }
    let floored = eig.eigenvalues.map(|l| l.max(tol));
    let v = &eig.eigenvectors;
    let fixed = v * DMatrix::from_diagonal(&floored) * v.transpose();
    for a in 0..p {
        for b in 0..p {
            // symmetrize against rounding in the reconstruction
            m[a * p + b] = 0.5 * (fixed[(a, b)] + fixed[(b, a)]);
        }
    }
    true
}

/// Nearest-in-spectrum positive definite version of every `Ŝ_{j,k}`, with
/// the number of matrices that needed flooring.
pub fn positive_definite(smoothed: &SpectralTensor, tol: f64) -> (SpectralTensor, usize) {
    let mut out = smoothed.clone();
    let p = smoothed.channels;
    let mut changed = 0;
    for block in out.values.chunks_exact_mut(p * p) {
        changed += usize::from(project_positive_definite(block, p, tol));
    }
    (out, changed)
}

/// `ρ = D Ŝ D` with `D = diag(Ŝ_pp^{-1/2})`. With `positive_definite` set,
/// each `Ŝ_{j,k}` is first projected so its eigenvalues are at least
/// `eps_power`. Diagonal powers are then floored at `eps_power` and
/// off-diagonals clamped to `±(1 - eps_rho)`.
pub fn coherence(smoothed: &SpectralTensor, cfg: &SmootherConfig) -> (SpectralTensor, CoherenceDiagnostics) {
    let (levels, w, channels) = (smoothed.scales, smoothed.locations, smoothed.channels);
    let mut out = SpectralTensor::zeros(SpectrumKind::Coherence, levels, w, channels);
    let mut diag = CoherenceDiagnostics::default();
    let mut m = vec![0.0; channels * channels];
    for j in 1..=levels {
        for k in 0..w {
            m.copy_from_slice(smoothed.slice(j, k));
            if cfg.positive_definite && project_positive_definite(&mut m, channels, cfg.eps_power) {
                diag.projected += 1;
            }
            for p in 0..channels {
                out.set_sym(j, k, p, p, 1.0);
                for q in p + 1..channels {
                    let rho =
                        coherence_value(m[p * channels + q], m[p * channels + p], m[q * channels + q], cfg, &mut diag);
                    out.set_sym(j, k, p, q, rho);
                }
            }
        }
    }
    (out, diag)
}

/// Coherence at every scale and location of one window, from the Haar
/// NDWT of each channel. `inner` must have one row per scale.
pub fn window_coherence(
    window: &MultivariateSeries,
    inner: &InnerProductMatrix,
    cfg: &SmootherConfig,
) -> Result<(SpectralTensor, CoherenceDiagnostics)> {
    let haar = WaveletFilter::haar();
    let pyramids = (0..window.channels()).map(|p| ndwt(window.channel(p), &haar)).collect::<Result<Vec<_>>>()?;
    let smoothed = correct_and_smooth(&raw_periodogram(&pyramids)?, inner, cfg)?;
    Ok(coherence(&smoothed, cfg))
}

/// Elementwise `atanh` of the off-diagonal coherences; the diagonal is set to 0.
pub fn fisher_z(rho: &SpectralTensor) -> SpectralTensor {
    let (levels, w, channels) = (rho.scales, rho.locations, rho.channels);
    let mut out = SpectralTensor::zeros(SpectrumKind::FisherZ, levels, w, channels);
    for j in 1..=levels {
        for k in 0..w {
            for p in 0..channels {
                for q in p + 1..channels {
                    out.set_sym(j, k, p, q, rho.get(j, k, p, q).atanh());
                }
            }
        }
    }
    out
}
