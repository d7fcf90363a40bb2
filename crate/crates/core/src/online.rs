//! Sliding-window Haar NDWT with constant work per new sample.
//!
//! Every level is kept in a ring indexed through a shared rotating offset,
//! so the circular shift of a slide costs nothing. After the shift only the
//! positions whose filter support reaches the wrapped sample change:
//!
//! * level 0 (the window itself): the last position, which receives `x_new`;
//! * level `n >= 1`: the last `2^n` positions. Writing `δ = x_new - x_0` and
//!   `a = 2^{-n/2}`, the smooth coefficient at `w - k` gains `a·δ` for
//!   `k = 1..=2^n`, while the scale-`n` detail gains `a·δ` for
//!   `k = 1..=2^(n-1)` and loses `a·δ` for `k = 2^(n-1)+1..=2^n`.
//!
//! A position holds a (smooth, detail) pair, so one slide writes
//! `1 + Σ_{n=1}^{J} 2^n = 2^(J+1) - 1` positions.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::wavelet::{levels_for, ndwt, CoefficientPyramid, WaveletFilter};

/// Slides between batch rebuilds unless configured otherwise.
pub const DEFAULT_REBUILD_INTERVAL: u64 = 1 << 16;

/// Number of coefficient positions rewritten per slide for `J` levels.
pub fn updated_coefficient_count(levels: usize) -> usize {
    (1usize << (levels + 1)) - 1
}

#[derive(Clone, Debug)]
pub struct SlidingTransform {
    levels: usize,
    mask: usize,
    offset: usize,
    // smooth[0] is the window ring buffer
    smooth: Vec<Vec<f64>>,
    detail: Vec<Vec<f64>>,
    gains: Vec<f64>,
    slide_count: u64,
    rebuild_interval: Option<u64>,
    last_writes: usize,
}

impl SlidingTransform {
    /// Applies the batch Haar transform to the first window.
    pub fn new(window: &[f64]) -> Result<Self> {
        let levels = levels_for(window.len())?;
        if let Some(v) = window.iter().find(|v| !v.is_finite()) {
            return Err(Error::Value(format!("window sample {v}")));
        }
        let pyramid = ndwt(window, &WaveletFilter::haar())?;
        let smooth = (0..=levels).map(|n| pyramid.smooth(n).to_vec()).collect();
        let detail = (1..=levels).map(|s| pyramid.detail(s).to_vec()).collect();
        let gains = (0..=levels).map(|n| FRAC_1_SQRT_2.powi(n as i32)).collect();
        Ok(Self {
            levels,
            mask: window.len() - 1,
            offset: 0,
            smooth,
            detail,
            gains,
            slide_count: 0,
            rebuild_interval: Some(DEFAULT_REBUILD_INTERVAL),
            last_writes: 0,
        })
    }

    /// Rebuild from a batch transform every `interval` slides; `None`
    /// disables rebuilding.
    pub fn with_rebuild_interval(mut self, interval: Option<u64>) -> Self {
        self.rebuild_interval = interval.filter(|&r| r > 0);
        self
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn window_length(&self) -> usize {
        self.mask + 1
    }

    pub fn slide_count(&self) -> u64 {
        self.slide_count
    }

    /// Positions written by the most recent slide, excluding batch rebuilds.
    pub fn last_slide_writes(&self) -> usize {
        self.last_writes
    }

    /// Physical ring index of logical location `k`. Shared by every level,
    /// which lets callers keep their own per-location rings in step.
    pub fn physical(&self, k: usize) -> usize {
        (k + self.offset) & self.mask
    }

    /// Current rotation of the ring buffers.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn sample(&self, k: usize) -> f64 {
        self.smooth[0][self.physical(k)]
    }

    pub fn smooth_at(&self, n: usize, k: usize) -> f64 {
        self.smooth[n][self.physical(k)]
    }

    /// Detail coefficient at scale `1..=J`, logical location `k`.
    pub fn detail_at(&self, scale: usize, k: usize) -> f64 {
        self.detail[scale - 1][self.physical(k)]
    }

    /// Raw ring storage for scale `1..=J`; index it with [`Self::physical`].
    pub fn detail_ring(&self, scale: usize) -> &[f64] {
        &self.detail[scale - 1]
    }

    /// Window contents, oldest sample first.
    pub fn window(&self) -> Vec<f64> {
        (0..=self.mask).map(|k| self.sample(k)).collect()
    }

    /// Materializes the pyramid in logical order.
    pub fn pyramid(&self) -> CoefficientPyramid {
        let unroll = |ring: &Vec<f64>| (0..=self.mask).map(|k| ring[self.physical(k)]).collect();
        CoefficientPyramid::from_parts(
            self.smooth.iter().map(unroll).collect(),
            self.detail.iter().map(unroll).collect(),
        )
    }

    /// Drops the oldest sample and appends `x_new`.
    pub fn slide(&mut self, x_new: f64) -> Result<()> {
        if !x_new.is_finite() {
            return Err(Error::Value(format!("new sample {x_new}")));
        }
        let w = self.mask + 1;
        let oldest = self.sample(0);
        let delta = x_new - oldest;
        self.offset = (self.offset + 1) & self.mask;
        self.slide_count += 1;

        let last = self.physical(w - 1);
        self.smooth[0][last] = x_new;
        let mut writes = 1;

        for n in 1..=self.levels {
            let step = self.gains[n] * delta;
            let span = 1usize << n;
            let half = span >> 1;
            let (smooth, detail) = (&mut self.smooth[n], &mut self.detail[n - 1]);
            for k in 1..=span {
                let idx = (w - k + self.offset) & self.mask;
                smooth[idx] += step;
                if k <= half {
                    detail[idx] += step;
                } else {
                    detail[idx] -= step;
                }
            }
            writes += span;
        }
        self.last_writes = writes;

        if self.rebuild_interval.is_some_and(|r| self.slide_count.is_multiple_of(r)) {
            self.rebuild();
        }
        Ok(())
    }

    /// Recomputes every level from the window with the batch transform,
    /// keeping the current rotation.
    pub fn rebuild(&mut self) {
        let pyramid = ndwt(&self.window(), &WaveletFilter::haar()).expect("window length is a power of two");
        for n in 0..=self.levels {
            for (k, v) in pyramid.smooth(n).iter().enumerate() {
                let idx = self.physical(k);
                self.smooth[n][idx] = *v;
            }
        }
        for s in 1..=self.levels {
            for (k, v) in pyramid.detail(s).iter().enumerate() {
                let idx = self.physical(k);
                self.detail[s - 1][idx] = *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_the_closed_form() {
        assert_eq!(updated_coefficient_count(1), 3);
        assert_eq!(updated_coefficient_count(8), 511);
        assert_eq!(updated_coefficient_count(11), 4095);
    }

    #[test]
    fn zero_window_has_zero_pyramid() {
        let st = SlidingTransform::new(&[0.0; 8]).unwrap();
        let p = st.pyramid();
        for s in 1..=3 {
            assert!(p.detail(s).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn init_matches_batch_transform() {
        let st = SlidingTransform::new(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let batch = ndwt(&[1.0, 2.0, 3.0, 4.0], &WaveletFilter::haar()).unwrap();
        assert_eq!(st.pyramid(), batch);
    }

    #[test]
    fn single_sample_window_is_rejected() {
        assert!(matches!(SlidingTransform::new(&[1.0]), Err(Error::Size(1))));
        assert!(matches!(SlidingTransform::new(&[1.0; 12]), Err(Error::Size(12))));
    }

    #[test]
    fn constant_window_is_unchanged_by_same_sample() {
        let mut st = SlidingTransform::new(&[2.0; 16]).unwrap();
        let before = st.pyramid();
        st.slide(2.0).unwrap();
        assert_eq!(st.pyramid(), before);
    }

    #[test]
    fn slide_matches_batch_and_counts_writes() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let mut st = SlidingTransform::new(&xs[..16]).unwrap();
        for (i, &x) in xs[16..].iter().enumerate() {
            st.slide(x).unwrap();
            let batch = ndwt(&xs[i + 1..i + 17], &WaveletFilter::haar()).unwrap();
            assert!(st.pyramid().max_abs_diff(&batch) <= 1e-12);
            assert_eq!(st.window(), xs[i + 1..i + 17].to_vec());
            assert_eq!(st.last_slide_writes(), updated_coefficient_count(4));
        }
    }

    #[test]
    fn non_finite_sample_is_rejected() {
        let mut st = SlidingTransform::new(&[0.0; 4]).unwrap();
        assert!(matches!(st.slide(f64::INFINITY), Err(Error::Value(_))));
        assert_eq!(st.slide_count(), 0);
    }

    #[test]
    fn periodic_rebuild_keeps_rotation() {
        let mut st = SlidingTransform::new(&[1.0, -1.0, 0.5, 2.0]).unwrap().with_rebuild_interval(Some(3));
        let xs = [0.3, -0.7, 1.1, 0.2, 0.9, -0.4, 0.05];
        for &x in &xs {
            st.slide(x).unwrap();
        }
        let batch = ndwt(&st.window(), &WaveletFilter::haar()).unwrap();
        assert!(st.pyramid().max_abs_diff(&batch) <= 1e-14);
        assert_eq!(st.window(), vec![0.2, 0.9, -0.4, 0.05]);
    }
}
