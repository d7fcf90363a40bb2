//! Wavelet filters, the periodic nondecimated transform of one window,
//! discrete autocorrelation wavelets and their inner-product matrix.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const ENERGY_TOLERANCE: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

/// Quadrature mirror filter pair `(h, g)` with `g_k = (-1)^k h_{N-1-k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletFilter {
    name: String,
    low_pass: Vec<f64>,
    high_pass: Vec<f64>,
}

impl WaveletFilter {
    /// `h = (1/√2, 1/√2)`, `g = (1/√2, -1/√2)`.
    pub fn haar() -> Self {
        Self {
            name: "haar".into(),
            low_pass: vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            high_pass: vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
        }
    }

    /// Extremal-phase Daubechies filter with `taps` coefficients
    /// (2 = Haar, 4, 6 or 8).
    pub fn daubechies(taps: usize) -> Result<Self> {
        let h: Vec<f64> = match taps {
            2 => return Ok(Self::haar()),
            4 => {
                let s3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / norm, (3.0 + s3) / norm, (3.0 - s3) / norm, (1.0 - s3) / norm]
            }
            6 => vec![
                0.332_670_552_950_082_6,
                0.806_891_509_311_092_5,
                0.459_877_502_118_491_5,
                -0.135_011_020_010_254_6,
                -0.085_441_273_882_026_7,
                0.035_226_291_885_709_5,
            ],
            8 => vec![
                0.230_377_813_308_896_4,
                0.714_846_570_552_915_4,
                0.630_880_767_929_858_7,
                -0.027_983_769_416_859_9,
                -0.187_034_811_719_093_1,
                0.030_841_381_835_560_7,
                0.032_883_011_666_885_2,
                -0.010_597_401_785_069_0,
            ],
            other => return Err(Error::Domain(format!("no Daubechies table for {other} taps (have 2, 4, 6, 8)"))),
        };
        let mut filter = Self::from_low_pass(format!("d{taps}"), h)?;
        // tabulated digits carry ~1e-16 error; renormalize to unit energy
        let e = filter.low_pass.iter().map(|v| v * v).sum::<f64>().sqrt();
        filter.low_pass.iter_mut().for_each(|v| *v /= e);
        filter.high_pass.iter_mut().for_each(|v| *v /= e);
        Ok(filter)
    }

    /// Builds the pair from a low-pass filter; the high-pass filter is its
    /// quadrature mirror.
    pub fn from_low_pass(name: impl Into<String>, low_pass: Vec<f64>) -> Result<Self> {
        if low_pass.len() < 2 {
            return Err(Error::Domain("filter needs at least two taps".into()));
        }
        let energy: f64 = low_pass.iter().map(|v| v * v).sum();
        if (energy - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("low-pass energy {energy} is not 1")));
        }
        let n = low_pass.len();
        let high_pass = (0..n).map(|k| if k % 2 == 0 { low_pass[n - 1 - k] } else { -low_pass[n - 1 - k] }).collect();
        Ok(Self { name: name.into(), low_pass, high_pass })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn low_pass(&self) -> &[f64] {
        &self.low_pass
    }

    pub fn high_pass(&self) -> &[f64] {
        &self.high_pass
    }

    /// Number of nonzero low-pass taps, `N_h`.
    pub fn support(&self) -> usize {
        self.low_pass.iter().filter(|v| **v != 0.0).count()
    }

    pub fn is_haar(&self) -> bool {
        self.low_pass.len() == 2
            && (self.low_pass[0] - FRAC_1_SQRT_2).abs() < ENERGY_TOLERANCE
            && (self.low_pass[1] - FRAC_1_SQRT_2).abs() < ENERGY_TOLERANCE
    }
}

/// Returns `J` when `w = 2^J` with `J >= 1`.
pub fn levels_for(w: usize) -> Result<usize> {
    if w < 2 || !w.is_power_of_two() {
        return Err(Error::Size(w));
    }
    Ok(w.trailing_zeros() as usize)
}

/// Smooth and detail coefficients of one window at every level.
///
/// `smooth(0)` is the window itself and `smooth(n)` the result of `n`
/// low-pass passes; `detail(s)` holds the coefficients at scale `s`, with
/// scale 1 the finest. Every vector has length `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientPyramid {
    levels: usize,
    smooth: Vec<Vec<f64>>,
    detail: Vec<Vec<f64>>,
}

impl CoefficientPyramid {
    pub(crate) fn from_parts(smooth: Vec<Vec<f64>>, detail: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(smooth.len(), detail.len() + 1);
        Self { levels: detail.len(), smooth, detail }
    }

    /// Number of decomposition levels `J`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn window_length(&self) -> usize {
        self.smooth[0].len()
    }

    /// Smooth coefficients after `n` low-pass passes, `0 <= n <= J`.
    pub fn smooth(&self, n: usize) -> &[f64] {
        &self.smooth[n]
    }

    /// Detail coefficients at scale `s`, `1 <= s <= J`.
    pub fn detail(&self, scale: usize) -> &[f64] {
        &self.detail[scale - 1]
    }

    /// Largest absolute elementwise difference over all levels.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.levels, other.levels, "pyramids differ in depth");
        let pairs = self.smooth.iter().zip(&other.smooth).chain(self.detail.iter().zip(&other.detail));
        pairs.flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs())).fold(0.0, f64::max)
    }
}

/// Periodic nondecimated transform of a window of length `w = 2^J`.
///
/// Level `s` applies the filters dilated by `2^(s-1)` to the previous
/// smooth, looking forward and wrapping at the window end, so for Haar
/// the finest details are `d_1[k] = (x[k] - x[(k+1) mod w]) / √2`.
pub fn ndwt(x: &[f64], filter: &WaveletFilter) -> Result<CoefficientPyramid> {
    let levels = levels_for(x.len())?;
    let mask = x.len() - 1;
    let mut smooth = Vec::with_capacity(levels + 1);
    let mut detail = Vec::with_capacity(levels);
    smooth.push(x.to_vec());
    for s in 1..=levels {
        let step = 1usize << (s - 1);
        let prev = &smooth[s - 1];
        let mut c = vec![0.0; x.len()];
        let mut d = vec![0.0; x.len()];
        for k in 0..x.len() {
            let (mut cs, mut ds) = (0.0, 0.0);
            for (m, (h, g)) in filter.low_pass.iter().zip(&filter.high_pass).enumerate() {
                let v = prev[(k + step * m) & mask];
                cs += h * v;
                ds += g * v;
            }
            c[k] = cs;
            d[k] = ds;
        }
        smooth.push(c);
        detail.push(d);
    }
    Ok(CoefficientPyramid::from_parts(smooth, detail))
}

/// Discrete nondecimated wavelet `ψ_j` of length `(2^j - 1)(N_h - 1) + 1`,
/// built by `ψ_1 = g` and `ψ_{j+1,n} = Σ_k h_{n-2k} ψ_{j,k}`.
pub fn discrete_wavelet(j: usize, filter: &WaveletFilter) -> Result<Vec<f64>> {
    if j < 1 {
        return Err(Error::Domain("wavelet scale starts at 1".into()));
    }
    let mut psi = filter.high_pass.clone();
    for _ in 1..j {
        let len = 2 * (psi.len() - 1) + filter.low_pass.len();
        let mut next = vec![0.0; len];
        for (k, p) in psi.iter().enumerate() {
            for (i, h) in filter.low_pass.iter().enumerate() {
                next[2 * k + i] += h * p;
            }
        }
        psi = next;
    }
    Ok(psi)
}

/// Autocorrelation wavelet `Ψ_j(τ) = Σ_k ψ_{j,k} ψ_{j,k+τ}`, stored for
/// `τ = -(N_j - 1) ..= N_j - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AutocorrelationWavelet {
    scale: usize,
    values: Vec<f64>,
}

impl AutocorrelationWavelet {
    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Largest `|τ|` with a stored value.
    pub fn max_lag(&self) -> usize {
        self.values.len() / 2
    }

    pub fn at(&self, tau: i64) -> f64 {
        let idx = tau + self.max_lag() as i64;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    /// Values in lag order from `-max_lag` to `max_lag`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn autocorrelation_wavelet(j: usize, filter: &WaveletFilter) -> Result<AutocorrelationWavelet> {
    let psi = discrete_wavelet(j, filter)?;
    let n = psi.len();
    let values = (0..2 * n - 1)
        .map(|i| {
            let tau = i as i64 - (n as i64 - 1);
            (0..n as i64)
                .filter_map(|k| {
                    let other = k + tau;
                    (0..n as i64).contains(&other).then(|| psi[k as usize] * psi[other as usize])
                })
                .sum()
        })
        .collect();
    Ok(AutocorrelationWavelet { scale: j, values })
}

/// `A_{jl} = Σ_τ Ψ_j(τ) Ψ_l(τ)` for `1 <= j, l <= J`, with its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerProductMatrix {
    entries: DMatrix<f64>,
    inverse: DMatrix<f64>,
    condition: f64,
}

impl InnerProductMatrix {
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    /// `A_{jl}` with 1-based scales.
    pub fn entry(&self, j: usize, l: usize) -> f64 {
        self.entries[(j - 1, l - 1)]
    }

    /// `(A^{-1})_{jl}` with 1-based scales.
    pub fn inverse_entry(&self, j: usize, l: usize) -> f64 {
        self.inverse[(j - 1, l - 1)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    /// Ratio of extreme eigenvalues of `A`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Rows of `A^{-1}` as plain vectors, row `j - 1` for scale `j`.
    pub fn inverse_rows(&self) -> Vec<Vec<f64>> {
        (0..self.order()).map(|r| self.inverse.row(r).iter().copied().collect()).collect()
    }
}

pub fn inner_product_matrix(levels: usize, filter: &WaveletFilter) -> Result<InnerProductMatrix> {
    if levels < 1 {
        return Err(Error::Domain("inner-product matrix needs J >= 1".into()));
    }
    let psis: Vec<AutocorrelationWavelet> =
        (1..=levels).map(|j| autocorrelation_wavelet(j, filter)).collect::<Result<_>>()?;
    let mut a = DMatrix::zeros(levels, levels);
    for j in 0..levels {
        for l in j..levels {
            // Ψ_j has the shorter support; sum over its lags
            let lag = psis[j].max_lag() as i64;
            let v: f64 = (-lag..=lag).map(|t| psis[j].at(t) * psis[l].at(t)).sum();
            a[(j, l)] = v;
            a[(l, j)] = v;
        }
    }
    let eig = a.clone().symmetric_eigen();
    let (lo, hi) =
        eig.eigenvalues.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Conditioning { condition });
    }
    let inverse = a.clone().cholesky().ok_or(Error::Conditioning { condition })?.inverse();
    Ok(InnerProductMatrix { entries: a, inverse, condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const S: f64 = FRAC_1_SQRT_2;

    #[test]
    fn haar_finest_details_of_ramp() {
        let p = ndwt(&[1.0, 2.0, 3.0, 4.0], &WaveletFilter::haar()).unwrap();
        let want = [-S, -S, -S, 3.0 * S];
        for (got, want) in p.detail(1).iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        assert_eq!(p.levels(), 2);
    }

    #[test]
    fn constant_window_has_zero_details() {
        let p = ndwt(&[3.5; 16], &WaveletFilter::haar()).unwrap();
        for s in 1..=4 {
            assert!(p.detail(s).iter().all(|&d| d == 0.0), "scale {s}");
        }
    }

    #[test]
    fn impulse_details_have_unit_energy_per_scale() {
        // each scale's details of a unit impulse hold the squared taps of ψ_j
        let p = ndwt(&[1.0, 0.0, 0.0, 0.0], &WaveletFilter::haar()).unwrap();
        for s in 1..=2 {
            let energy: f64 = p.detail(s).iter().map(|d| d * d).sum();
            assert_abs_diff_eq!(energy, 1.0, epsilon = 1e-14);
        }
        let coarse: f64 = p.smooth(2).iter().map(|c| c * c).sum();
        assert_abs_diff_eq!(coarse, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(matches!(ndwt(&[1.0; 6], &WaveletFilter::haar()), Err(Error::Size(6))));
        assert!(matches!(ndwt(&[1.0], &WaveletFilter::haar()), Err(Error::Size(1))));
    }

    #[test]
    fn haar_autocorrelation_at_scale_one() {
        let psi = autocorrelation_wavelet(1, &WaveletFilter::haar()).unwrap();
        assert_eq!(psi.max_lag(), 1);
        assert_abs_diff_eq!(psi.at(-1), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.at(0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.at(1), -0.5, epsilon = 1e-15);
        assert_eq!(psi.at(2), 0.0);
    }

    #[test]
    fn autocorrelation_is_symmetric_with_unit_peak() {
        for filter in
            [WaveletFilter::haar(), WaveletFilter::daubechies(4).unwrap(), WaveletFilter::daubechies(8).unwrap()]
        {
            for j in 1..=5 {
                let psi = autocorrelation_wavelet(j, &filter).unwrap();
                assert_abs_diff_eq!(psi.at(0), 1.0, epsilon = 1e-12);
                let lag = psi.max_lag() as i64;
                assert!((lag as usize) < (1 << j) * (filter.support() - 1) + 1);
                for t in 1..=lag {
                    assert_abs_diff_eq!(psi.at(t), psi.at(-t), epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn scale_zero_is_a_domain_error() {
        assert!(matches!(autocorrelation_wavelet(0, &WaveletFilter::haar()), Err(Error::Domain(_))));
    }

    #[test]
    fn haar_inner_product_entries() {
        let a = inner_product_matrix(1, &WaveletFilter::haar()).unwrap();
        assert_abs_diff_eq!(a.entry(1, 1), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.inverse_entry(1, 1), 2.0 / 3.0, epsilon = 1e-15);

        // closed form for Haar: A_jj = (2^{2j} + 5) / (3 · 2^j)
        let a = inner_product_matrix(6, &WaveletFilter::haar()).unwrap();
        for j in 1..=6 {
            let p = (1u64 << j) as f64;
            assert_abs_diff_eq!(a.entry(j, j), (p * p + 5.0) / (3.0 * p), epsilon = 1e-10);
            for l in 1..=6 {
                assert_eq!(a.entry(j, l), a.entry(l, j));
            }
        }
    }

    #[test]
    fn inverse_is_accurate_up_to_sixteen_levels() {
        let a = inner_product_matrix(16, &WaveletFilter::haar()).unwrap();
        let prod = a.entries() * a.inverse();
        let err = (prod - DMatrix::identity(16, 16)).abs().max();
        assert!(err <= 1e-10, "max error {err}");
    }

    #[test]
    fn daubechies_filters_have_unit_energy() {
        for taps in [4, 6, 8] {
            let f = WaveletFilter::daubechies(taps).unwrap();
            let h: f64 = f.low_pass().iter().map(|v| v * v).sum();
            let g: f64 = f.high_pass().iter().map(|v| v * v).sum();
            assert_abs_diff_eq!(h, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(g, 1.0, epsilon = 1e-14);
            assert_eq!(f.support(), taps);
        }
        assert!(WaveletFilter::daubechies(5).is_err());
    }
}
