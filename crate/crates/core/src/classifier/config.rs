use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SmootherConfig;
use crate::wavelet::levels_for;

/// Ridge added to each class covariance: start from
/// `scale · trace(Σ) / |M|` and multiply by ten until the condition number
/// is at most `max_condition`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgePolicy {
    pub scale: f64,
    pub max_condition: f64,
}

impl Default for RidgePolicy {
    fn default() -> Self {
        Self { scale: 1e-6, max_condition: 1e8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub window_length: usize,
    /// Fraction of candidate indices kept as classification features.
    pub proportion: f64,
    /// `None` selects `SmootherConfig::for_window(window_length)`.
    pub smoother: Option<SmootherConfig>,
    /// Finest scales eligible as features; `None` means `J - 2`.
    pub scale_cap: Option<usize>,
    /// Class priors; `None` means uniform.
    pub priors: Option<Vec<f64>>,
    /// Number of classes; `None` takes the largest training label.
    pub n_classes: Option<usize>,
    pub ridge: RidgePolicy,
}

pub const DEFAULT_PROPORTION: f64 = 0.1;

impl ClassifierConfig {
    pub fn new(window_length: usize) -> Self {
        Self {
            window_length,
            proportion: DEFAULT_PROPORTION,
            smoother: None,
            scale_cap: None,
            priors: None,
            n_classes: None,
            ridge: RidgePolicy::default(),
        }
    }

    pub fn with_proportion(mut self, proportion: f64) -> Self {
        self.proportion = proportion;
        self
    }

    pub fn with_smoother(mut self, smoother: SmootherConfig) -> Self {
        self.smoother = Some(smoother);
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: usize) -> Self {
        let mut s = self.smoother();
        s.bandwidth = bandwidth;
        self.smoother = Some(s);
        self
    }

    pub fn with_scale_cap(mut self, cap: usize) -> Self {
        self.scale_cap = Some(cap);
        self
    }

    pub fn levels(&self) -> Result<usize> {
        levels_for(self.window_length)
    }

    pub fn smoother(&self) -> SmootherConfig {
        self.smoother.unwrap_or_else(|| SmootherConfig::for_window(self.window_length))
    }

    /// Resolved scale cap (at least 1).
    pub fn scale_cap(&self) -> Result<usize> {
        let levels = self.levels()?;
        Ok(self.scale_cap.unwrap_or(levels.saturating_sub(2)).clamp(1, levels))
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.levels()?;
        if self.window_length < 8 {
            return Err(Error::Config(format!("window length {} must be at least 8", self.window_length)));
        }
        if !(self.proportion > 0.0 && self.proportion <= 1.0) {
            return Err(Error::Config(format!("proportion {} must lie in (0, 1]", self.proportion)));
        }
        if let Some(cap) = self.scale_cap {
            if cap == 0 || cap > levels {
                return Err(Error::Config(format!("scale cap {cap} must lie in 1..={levels}")));
            }
        }
        self.smoother().validate(self.window_length)?;
        if let Some(p) = &self.priors {
            validate_priors(p)?;
        }
        if !(self.ridge.scale > 0.0 && self.ridge.max_condition > 1.0) {
            return Err(Error::Config("ridge scale must be positive and max condition above 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn validate_priors(priors: &[f64]) -> Result<()> {
    if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Config("priors must be finite and nonnegative".into()));
    }
    let sum: f64 = priors.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("priors sum to {sum}, not 1")));
    }
    Ok(())
}
