//! Coherence-based Bayes classification of multivariate streams.
//!
//! Training turns each labelled signal into Fisher-z coherence samples, one
//! per location, ranks `(scale, channel pair)` indices by how well they
//! separate the classes, and fits one Gaussian per class on the chosen
//! indices. Classification slides a window over the stream, scores every
//! location of every window, and averages the per-window posteriors of
//! each time point.

mod config;
mod features;
mod model;
mod stream;

pub use config::{ClassifierConfig, RidgePolicy};
pub use features::{
    discrepancy, pairwise_discrepancy, select_indices, DiscrepancyRow, DiscrepancyTable, IndexEntry, IndexSet,
};
pub use model::{
    normalize_log_scores, train, train_with_summary, window_posterior, ClassGaussian, ClassModel, NormalityCheck,
    Posterior, TrainingSummary, MODEL_VERSION,
};
pub use stream::{
    classify_batch, classify_online, ClassificationDiagnostics, OnlineClassifier, ProbabilityAccumulator,
    ProbabilitySeries,
};

/// Number of label switches whose new class persists for more than
/// `min_duration` points.
///
/// A short excursion that returns to the previous class is not a change:
/// runs of `min_duration` points or fewer are skipped, and a switch is
/// counted only when a long run differs from the last long run.
pub fn count_class_changes(labels: &[usize], min_duration: usize) -> usize {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &l in labels {
        match runs.last_mut() {
            Some((label, len)) if *label == l => *len += 1,
            _ => runs.push((l, 1)),
        }
    }
    let mut established = None;
    let mut changes = 0;
    for &(label, len) in &runs {
        if len <= min_duration {
            continue;
        }
        match established {
            None => established = Some(label),
            Some(prev) if prev != label => {
                changes += 1;
                established = Some(label);
            }
            _ => {}
        }
    }
    changes
}

/// Persistence threshold used when counting detected changes.
pub const DEFAULT_MIN_DURATION: usize = 4;

#[cfg(test)]
mod tests {
    use super::*;

    fn runs(spec: &[(usize, usize)]) -> Vec<usize> {
        spec.iter().flat_map(|&(l, n)| std::iter::repeat_n(l, n)).collect()
    }

    #[test]
    fn single_switch() {
        assert_eq!(count_class_changes(&runs(&[(1, 100), (2, 100)]), 4), 1);
    }

    #[test]
    fn short_blip_is_ignored() {
        assert_eq!(count_class_changes(&runs(&[(1, 50), (2, 3), (1, 50)]), 4), 0);
        // exactly min_duration points does not persist "more than" four
        assert_eq!(count_class_changes(&runs(&[(1, 50), (2, 4), (1, 50)]), 4), 0);
        assert_eq!(count_class_changes(&runs(&[(1, 50), (2, 5), (1, 50)]), 4), 2);
    }

    #[test]
    fn nine_switches_of_a_hundred() {
        let segs: Vec<(usize, usize)> = (0..10).map(|i| (1 + i % 3, if i == 9 { 124 } else { 100 })).collect();
        assert_eq!(count_class_changes(&runs(&segs), 4), 9);
    }

    #[test]
    fn leading_blip_does_not_count() {
        assert_eq!(count_class_changes(&runs(&[(2, 3), (1, 100)]), 4), 0);
        assert_eq!(count_class_changes(&[1], 4), 0);
    }
}
