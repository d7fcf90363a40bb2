//! Property checks shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use std::sync::OnceLock;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use wavecoh::classifier::{normalize_log_scores, train, window_posterior, ClassModel, ClassifierConfig};
use wavecoh::data::{
    detrend_first_difference, parse_csv, write_labelled, CsvSeries, LabelledSeries, MultivariateSeries,
};
use wavecoh::evalkit::v_measure;
use wavecoh::online::{updated_coefficient_count, SlidingTransform};
use wavecoh::simgen::{make_training_set, ClassProcess};
use wavecoh::spectra::{fisher_z, window_coherence, SmootherConfig, SpectralTensor, SpectrumKind};
use wavecoh::wavelet::{inner_product_matrix, levels_for, ndwt, WaveletFilter};

pub type Check = Result<(), TestCaseError>;

/// A small model trained once and shared by the posterior checks.
pub fn small_model() -> &'static ClassModel {
    static MODEL: OnceLock<ClassModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let training = make_training_set(&ClassProcess::mvn3(), 32, 17).expect("training set");
        train(&training, &ClassifierConfig::new(32).with_proportion(1.0)).expect("model")
    })
}

pub fn series_strategy(
    channels: usize,
    len: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = MultivariateSeries> {
    len.prop_flat_map(move |n| prop::collection::vec(prop::collection::vec(-50.0..50.0f64, n), channels))
        .prop_map(|c| MultivariateSeries::from_channels(c).expect("rectangular"))
}

pub fn window_strategy() -> impl Strategy<Value = (MultivariateSeries, usize)> {
    (3usize..=6).prop_flat_map(|log_w| {
        let w = 1usize << log_w;
        (series_strategy(3, w..=w), 0..=(w - 1) / 2)
    })
}

pub fn scores_are_normalized(scores: Vec<f64>) -> Check {
    let post = normalize_log_scores(&scores);
    let sum: f64 = post.probabilities.iter().sum();
    prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
    prop_assert!(post.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
    Ok(())
}

pub fn posterior_is_normalized(zeta: Vec<f64>) -> Check {
    let model = small_model();
    let z: Vec<f64> = zeta.into_iter().cycle().take(model.index_set().len()).collect();
    let post = window_posterior(&z, model).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let sum: f64 = post.probabilities.iter().sum();
    prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
    Ok(())
}

pub fn coherence_is_well_formed(window: MultivariateSeries, bandwidth: usize, corrected: bool) -> Check {
    let levels = levels_for(window.len()).expect("power of two");
    let inner = inner_product_matrix(levels, &WaveletFilter::haar()).expect("inner products");
    let mut cfg = SmootherConfig::new(bandwidth);
    cfg.bias_correction = corrected;
    let (rho, _) = window_coherence(&window, &inner, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let bound = 1.0 - cfg.eps_rho;
    for j in 1..=levels {
        for k in 0..window.len() {
            for p in 0..3 {
                prop_assert_eq!(rho.get(j, k, p, p), 1.0);
                for q in 0..3 {
                    let v = rho.get(j, k, p, q);
                    prop_assert_eq!(v, rho.get(j, k, q, p));
                    if p != q {
                        prop_assert!(v.abs() <= bound, "rho {v} at ({j}, {k}, {p}, {q})");
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn fisher_z_is_odd(values: Vec<f64>) -> Check {
    let n = values.len();
    let entry = |sign: f64| {
        let values = values.clone();
        SpectralTensor::from_fn(
            SpectrumKind::Coherence,
            1,
            n,
            2,
            move |_, k, p, q| {
                if p == q {
                    1.0
                } else {
                    sign * values[k]
                }
            },
        )
    };
    let (plus, minus) = (fisher_z(&entry(1.0)), fisher_z(&entry(-1.0)));
    for k in 0..n {
        let (a, b) = (plus.get(1, k, 0, 1), minus.get(1, k, 0, 1));
        prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        prop_assert_eq!(plus.get(1, k, 0, 0), 0.0);
    }
    Ok(())
}

fn relabel(labels: &[usize], perm: &[usize]) -> Vec<usize> {
    labels.iter().map(|&l| perm[l - 1]).collect()
}

pub fn v_measure_is_permutation_invariant(truth: Vec<usize>, fuzz: Vec<(usize, usize)>, perm: Vec<usize>) -> Check {
    let mut predicted = truth.clone();
    for (i, l) in fuzz {
        let at = i % predicted.len();
        predicted[at] = l;
    }
    let v = v_measure(&truth, &predicted).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((0.0..=1.0).contains(&v), "V = {v}");
    let relabelled = relabel(&predicted, &perm);
    let v_perm = v_measure(&truth, &relabelled).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((v - v_perm).abs() <= 1e-12, "{v} vs {v_perm}");
    let v_truth = v_measure(&relabel(&truth, &perm), &predicted).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((v - v_truth).abs() <= 1e-12);
    Ok(())
}

pub fn label_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<(usize, usize)>, Vec<usize>)> {
    (
        prop::collection::vec(1usize..=4, 1..200),
        prop::collection::vec((0usize..1000, 1usize..=4), 0..60),
        Just(vec![1usize, 2, 3, 4]).prop_shuffle(),
    )
}

pub fn detrend_contract(x: MultivariateSeries) -> Check {
    let d = detrend_first_difference(&x).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(d.len(), x.len() - 1);
    prop_assert_eq!(d.channels(), x.channels());
    for p in 0..x.channels() {
        let mut level = x.get(p, 0);
        for t in 0..d.len() {
            prop_assert_eq!(d.get(p, t), x.get(p, t + 1) - x.get(p, t));
            level += d.get(p, t);
            prop_assert!((level - x.get(p, t + 1)).abs() <= 1e-9 * (1.0 + x.get(p, t + 1).abs()));
        }
    }
    Ok(())
}

pub fn labelled_strategy() -> impl Strategy<Value = LabelledSeries> {
    (1usize..=4, 1usize..=40)
        .prop_flat_map(|(p, n)| {
            let value =
                prop_oneof![prop::num::f64::NORMAL, prop::num::f64::SUBNORMAL, Just(0.0), Just(-0.0), -1e3..1e3f64,];
            (prop::collection::vec(prop::collection::vec(value, n), p), prop::collection::vec(1usize..=5, n))
        })
        .prop_map(|(c, labels)| LabelledSeries::new(MultivariateSeries::from_channels(c).unwrap(), labels).unwrap())
}

pub fn csv_round_trip(x: LabelledSeries) -> Check {
    let mut buf = Vec::new();
    write_labelled(&x, &mut buf).map_err(|e| TestCaseError::fail(e.to_string()))?;
    match parse_csv(buf.as_slice(), true, None).map_err(|e| TestCaseError::fail(e.to_string()))? {
        CsvSeries::Labelled(back) => {
            prop_assert_eq!(back.labels(), x.labels());
            for p in 0..x.series().channels() {
                for (a, b) in back.series().channel(p).iter().zip(x.series().channel(p)) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
        CsvSeries::Unlabelled(_) => return Err(TestCaseError::fail("labels lost")),
    }
    Ok(())
}

pub fn sliding_matches_batch(window: Vec<f64>, stream: Vec<f64>) -> Check {
    let mut tr = SlidingTransform::new(&window).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let haar = WaveletFilter::haar();
    for &x in &stream {
        tr.slide(x).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let batch = ndwt(&tr.window(), &haar).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(tr.pyramid().max_abs_diff(&batch) <= 1e-10);
        prop_assert_eq!(tr.last_slide_writes(), updated_coefficient_count(tr.levels()));
    }
    Ok(())
}

pub fn sliding_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..=7).prop_flat_map(|log_w| {
        (prop::collection::vec(-10.0..10.0f64, 1usize << log_w), prop::collection::vec(-10.0..10.0f64, 1..40))
    })
}
