//! Seeded generators for class-switching multivariate streams.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64(seed)` and
//! split by `set_stream(stream)`. Standard normals are drawn one time
//! point at a time, channels in order, and coloured by the lower Cholesky
//! factor of the target covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::{LabelledSeries, MultivariateSeries};
use crate::error::{Error, Result};

/// Samples discarded before a stream starts, so the recursions forget
/// their zero initial lags.
pub const BURN_IN: usize = 50;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProcessKind {
    /// Independent draws from `N(0, Σ_c)`.
    Mvn,
    /// `X_t = Z_t + Θ₁ Z_{t-1} + Θ₂ Z_{t-2}` with standard normal `Z`.
    Vma,
    /// `X_t = Φ₁ X_{t-1} + Φ₂ X_{t-2} + ε_t`, `ε_t ~ N(0, Σ_ε)`.
    Var,
}

/// Parameters of one class. `lags` is empty for `Mvn`; `innovation` is the
/// covariance of the driving noise (identity for `Vma`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassParameters {
    pub lags: Vec<DMatrix<f64>>,
    pub innovation: DMatrix<f64>,
    factor: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassProcess {
    kind: ProcessKind,
    channels: usize,
    classes: Vec<ClassParameters>,
}

fn square(rows: &[[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| rows[i][j])
}

fn cholesky_factor(m: &DMatrix<f64>, class: usize) -> Result<DMatrix<f64>> {
    if (m - m.transpose()).amax() > 0.0 {
        return Err(Error::Validation(format!("class {class} covariance is not symmetric")));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Validation(format!("class {class} covariance is not positive definite")))
}

impl ClassProcess {
    fn build(kind: ProcessKind, lags: Vec<Vec<DMatrix<f64>>>, innovations: Vec<DMatrix<f64>>) -> Result<Self> {
        let channels = innovations.first().map(|m| m.nrows()).unwrap_or(0);
        if innovations.len() < 2 {
            return Err(Error::Validation("a process needs at least two classes".into()));
        }
        let mut classes = Vec::with_capacity(innovations.len());
        for (c, (lags, innovation)) in lags.into_iter().zip(innovations).enumerate() {
            let class = c + 1;
            if innovation.shape() != (channels, channels) || lags.iter().any(|m| m.shape() != (channels, channels)) {
                return Err(Error::Shape(format!("class {class} matrices must be {channels} x {channels}")));
            }
            let factor = cholesky_factor(&innovation, class)?;
            classes.push(ClassParameters { lags, innovation, factor });
        }
        let process = Self { kind, channels, classes };
        if kind == ProcessKind::Var {
            for c in 1..=process.n_classes() {
                let radius = process.companion_radius(c);
                if radius >= 1.0 {
                    return Err(Error::Stability { class: c, radius });
                }
            }
        }
        Ok(process)
    }

    pub fn mvn(covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        let lags = vec![Vec::new(); covariances.len()];
        Self::build(ProcessKind::Mvn, lags, covariances)
    }

    /// One `[Θ₁, Θ₂]` pair per class.
    pub fn vma(coefficients: Vec<[DMatrix<f64>; 2]>) -> Result<Self> {
        let p = coefficients.first().map(|c| c[0].nrows()).unwrap_or(0);
        let noise = vec![DMatrix::identity(p, p); coefficients.len()];
        Self::build(ProcessKind::Vma, coefficients.into_iter().map(Vec::from).collect(), noise)
    }

    /// One `[Φ₁, Φ₂]` pair and one noise covariance per class.
    pub fn var(coefficients: Vec<[DMatrix<f64>; 2]>, noise: Vec<DMatrix<f64>>) -> Result<Self> {
        if coefficients.len() != noise.len() {
            return Err(Error::Validation("one noise covariance per class is required".into()));
        }
        Self::build(ProcessKind::Var, coefficients.into_iter().map(Vec::from).collect(), noise)
    }

    /// Three trivariate normal classes differing in cross-channel correlation.
    pub fn mvn3() -> Self {
        Self::mvn(vec![
            square(&[[1.0, 0.0, 0.3], [0.0, 1.0, 0.7], [0.3, 0.7, 1.0]]),
            square(&[[1.0, 0.6, 0.1], [0.6, 1.0, -0.4], [0.1, -0.4, 1.0]]),
            square(&[[1.0, -0.5, -0.2], [-0.5, 1.0, 0.1], [-0.2, 0.1, 1.0]]),
        ])
        .expect("preset is valid")
    }

    /// Three trivariate second-order moving-average classes.
    pub fn vma3() -> Self {
        Self::vma(vec![
            [
                square(&[[1.0, 0.0, 0.6], [0.0, 1.0, 0.3], [0.6, 0.3, 1.0]]),
                square(&[[1.0, 0.2, 0.9], [0.2, 1.0, 0.5], [0.9, 0.5, 1.0]]),
            ],
            [
                square(&[[1.0, -0.7, -0.3], [-0.7, 1.0, 0.4], [-0.3, 0.4, 1.0]]),
                square(&[[1.0, 0.9, -0.3], [0.9, 1.0, 0.0], [-0.3, 0.0, 1.0]]),
            ],
            [
                square(&[[1.0, -0.4, 0.2], [-0.4, 1.0, -0.6], [0.2, -0.6, 1.0]]),
                square(&[[1.0, 0.1, -0.5], [0.1, 1.0, -0.3], [-0.5, -0.3, 1.0]]),
            ],
        ])
        .expect("preset is valid")
    }

    /// Three trivariate second-order autoregressive classes.
    pub fn var3() -> Self {
        Self::var(
            vec![
                [
                    square(&[[0.2, 0.3, 0.0], [0.3, 0.5, 0.0], [0.0, 0.0, 0.0]]),
                    square(&[[0.6, -0.1, 0.0], [-0.1, -0.3, 0.0], [0.0, 0.0, 0.0]]),
                ],
                [
                    square(&[[0.0, 0.0, 0.0], [0.0, 0.4, -0.4], [0.0, -0.4, 0.4]]),
                    square(&[[0.0, 0.0, 0.0], [0.0, -0.6, 0.2], [0.0, 0.2, 0.3]]),
                ],
                [
                    square(&[[-0.1, 0.0, 0.4], [0.0, 0.0, 0.0], [0.4, 0.0, -0.5]]),
                    square(&[[0.2, 0.0, -0.2], [0.0, 0.0, 0.0], [-0.2, 0.0, -0.3]]),
                ],
            ],
            vec![
                square(&[[3.0, 0.3, 0.9], [0.3, 3.0, 1.4], [0.9, 1.4, 3.0]]),
                square(&[[2.0, 1.3, 0.4], [1.3, 1.8, 0.3], [0.4, 0.3, 2.0]]),
                square(&[[5.0, 3.3, 2.5], [3.3, 4.5, 2.8], [2.5, 2.8, 3.5]]),
            ],
        )
        .expect("preset is valid")
    }

    pub const PRESETS: [&'static str; 3] = ["mvn3", "vma3", "var3"];

    /// One of [`ClassProcess::PRESETS`].
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "mvn3" => Ok(Self::mvn3()),
            "vma3" => Ok(Self::vma3()),
            "var3" => Ok(Self::var3()),
            other => Err(Error::Config(format!(
                "unknown process preset {other:?}; expected one of {}",
                Self::PRESETS.join(", ")
            ))),
        }
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Parameters of class `c` (1-based).
    pub fn class(&self, c: usize) -> &ClassParameters {
        &self.classes[c - 1]
    }

    /// Spectral radius of the lag companion matrix of class `c`; zero for
    /// processes without autoregressive lags.
    pub fn companion_radius(&self, c: usize) -> f64 {
        if self.kind != ProcessKind::Var {
            return 0.0;
        }
        companion_matrix(&self.class(c).lags).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// `[[Φ₁, Φ₂, …], [I, 0, …], …]`.
pub fn companion_matrix(lags: &[DMatrix<f64>]) -> DMatrix<f64> {
    let p = lags[0].nrows();
    let order = lags.len();
    let mut f = DMatrix::zeros(p * order, p * order);
    for (i, phi) in lags.iter().enumerate() {
        f.view_mut((0, i * p), (p, p)).copy_from(phi);
    }
    for i in 1..order {
        f.view_mut((i * p, (i - 1) * p), (p, p)).fill_with_identity();
    }
    f
}

/// Consecutive class segments of a switching stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    segments: Vec<usize>,
}

impl Scenario {
    pub fn new(segments: Vec<usize>) -> Result<Self> {
        if segments.is_empty() || segments.contains(&0) {
            return Err(Error::Validation("segment lengths must be positive".into()));
        }
        Ok(Self { segments })
    }

    /// 1: nine changes, segments of 100 over 1024 points. 2: segments
    /// alternating 100 and 300, five changes over 1024. 3: segments of 300,
    /// six changes over 2048. The last segment takes up the remainder.
    pub fn preset(id: u8) -> Result<Self> {
        let segments = match id {
            1 => [vec![100; 9], vec![124]].concat(),
            2 => vec![100, 300, 100, 300, 100, 124],
            3 => [vec![300; 6], vec![248]].concat(),
            _ => return Err(Error::Config(format!("unknown scenario {id}; expected 1, 2 or 3"))),
        };
        Self::new(segments)
    }

    pub fn segments(&self) -> &[usize] {
        &self.segments
    }

    pub fn total_length(&self) -> usize {
        self.segments.iter().sum()
    }

    pub fn n_changes(&self) -> usize {
        self.segments.len() - 1
    }
}

/// Stateful sampler that carries lagged values across class switches.
struct Sampler<'a> {
    process: &'a ClassProcess,
    // most recent first: lags[0] is t-1
    lags: [DVector<f64>; 2],
}

impl<'a> Sampler<'a> {
    fn new(process: &'a ClassProcess) -> Self {
        let zero = DVector::zeros(process.channels);
        Self { process, lags: [zero.clone(), zero] }
    }

    fn draw<R: Rng>(&mut self, class: usize, rng: &mut R) -> DVector<f64> {
        let p = self.process.channels;
        let params = self.process.class(class);
        let white = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let shock = &params.factor * &white;
        match self.process.kind {
            ProcessKind::Mvn => shock,
            ProcessKind::Vma => {
                let x = &shock + &params.lags[0] * &self.lags[0] + &params.lags[1] * &self.lags[1];
                self.push(shock);
                x
            }
            ProcessKind::Var => {
                let x = shock + &params.lags[0] * &self.lags[0] + &params.lags[1] * &self.lags[1];
                self.push(x.clone());
                x
            }
        }
    }

    fn push(&mut self, v: DVector<f64>) {
        self.lags.swap(0, 1);
        self.lags[0] = v;
    }
}

/// Draws a stream whose class follows `plan`, a list of `(class, length)`.
pub fn generate_plan<R: Rng>(process: &ClassProcess, plan: &[(usize, usize)], rng: &mut R) -> Result<LabelledSeries> {
    if let Some(&(c, _)) = plan.iter().find(|(c, _)| *c == 0 || *c > process.n_classes()) {
        return Err(Error::Validation(format!("class {c} is not defined by the process")));
    }
    let total: usize = plan.iter().map(|(_, n)| n).sum();
    let p = process.channels;
    let mut sampler = Sampler::new(process);
    if let Some(&(first, _)) = plan.first() {
        for _ in 0..BURN_IN {
            sampler.draw(first, rng);
        }
    }
    let mut channels = vec![Vec::with_capacity(total); p];
    let mut labels = Vec::with_capacity(total);
    for &(class, len) in plan {
        for _ in 0..len {
            let x = sampler.draw(class, rng);
            for (ch, v) in channels.iter_mut().zip(x.iter()) {
                ch.push(*v);
            }
            labels.push(class);
        }
    }
    LabelledSeries::new(MultivariateSeries::from_channels(channels)?, labels)
}

/// Random class plan for a scenario: the first class is uniform, every
/// later one uniform over the classes other than its predecessor.
pub fn class_plan<R: Rng>(n_classes: usize, scenario: &Scenario, rng: &mut R) -> Vec<(usize, usize)> {
    let mut plan = Vec::with_capacity(scenario.segments.len());
    let mut class = rng.random_range(1..=n_classes);
    for (i, &len) in scenario.segments.iter().enumerate() {
        if i > 0 {
            let step = rng.random_range(1..n_classes);
            class = (class - 1 + step) % n_classes + 1;
        }
        plan.push((class, len));
    }
    plan
}

pub fn generate_with_rng<R: Rng>(process: &ClassProcess, scenario: &Scenario, rng: &mut R) -> Result<LabelledSeries> {
    let plan = class_plan(process.n_classes(), scenario, rng);
    generate_plan(process, &plan, rng)
}

/// A labelled switching stream drawn from stream 1 of `seed`; together with
/// [`make_training_set`] on the same seed this is replication 0 of a study.
pub fn generate(process: &ClassProcess, scenario: &Scenario, seed: u64) -> Result<LabelledSeries> {
    generate_with_rng(process, scenario, &mut stream_rng(seed, 1))
}

/// Ten signals of length `w`: two pure signals per class (for three
/// classes) and four with three segments of lengths `w/4, w/4, w/2`
/// rotated across them.
pub fn make_training_set_with_rng<R: Rng>(
    process: &ClassProcess,
    w: usize,
    rng: &mut R,
) -> Result<Vec<LabelledSeries>> {
    if !w.is_power_of_two() || w < 4 {
        return Err(Error::Size(w));
    }
    let nc = process.n_classes();
    let mut out = Vec::with_capacity(10);
    for class in 1..=nc {
        for _ in 0..2 {
            out.push(generate_plan(process, &[(class, w)], rng)?);
        }
    }
    let lengths = [w / 4, w / 4, w / 2];
    let orders = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1]];
    for (i, order) in orders.iter().enumerate() {
        let plan: Vec<(usize, usize)> = (0..3).map(|s| (order[s] % nc + 1, lengths[(s + 3 - i % 3) % 3])).collect();
        out.push(generate_plan(process, &plan, rng)?);
    }
    Ok(out)
}

pub fn make_training_set(process: &ClassProcess, w: usize, seed: u64) -> Result<Vec<LabelledSeries>> {
    make_training_set_with_rng(process, w, &mut stream_rng(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::count_class_changes;

    fn sample_cov(x: &MultivariateSeries, start: usize, len: usize) -> DMatrix<f64> {
        let p = x.channels();
        let mean: Vec<f64> =
            (0..p).map(|a| x.channel(a)[start..start + len].iter().sum::<f64>() / len as f64).collect();
        DMatrix::from_fn(p, p, |a, b| {
            (start..start + len).map(|t| (x.get(a, t) - mean[a]) * (x.get(b, t) - mean[b])).sum::<f64>()
                / (len - 1) as f64
        })
    }

    /// Stationary covariance of a VAR(2) from `vec Γ = (I - F⊗F)⁻¹ vec Q`.
    fn lyapunov_covariance(params: &ClassParameters) -> DMatrix<f64> {
        let f = companion_matrix(&params.lags);
        let n = f.nrows();
        let p = params.innovation.nrows();
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (p, p)).copy_from(&params.innovation);
        let kron = f.kronecker(&f);
        let lhs = DMatrix::identity(n * n, n * n) - kron;
        let vec_q = DVector::from_column_slice(q.as_slice());
        let vec_g = lhs.lu().solve(&vec_q).unwrap();
        DMatrix::from_column_slice(n, n, vec_g.as_slice()).view((0, 0), (p, p)).into_owned()
    }

    #[test]
    fn presets_match_the_published_matrices() {
        let fixture: serde_json::Value = serde_json::from_str(include_str!("../tests/fixtures/presets.json")).unwrap();
        let as_matrix = |v: &serde_json::Value| {
            let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone()).unwrap();
            DMatrix::from_fn(3, 3, |i, j| rows[i][j])
        };
        for (name, process) in
            [("mvn3", ClassProcess::mvn3()), ("vma3", ClassProcess::vma3()), ("var3", ClassProcess::var3())]
        {
            let classes = fixture[name].as_array().unwrap();
            assert_eq!(classes.len(), 3);
            for (c, spec) in classes.iter().enumerate() {
                let params = process.class(c + 1);
                let lags = spec["lags"].as_array().unwrap();
                assert_eq!(params.lags.len(), lags.len(), "{name} class {}", c + 1);
                for (have, want) in params.lags.iter().zip(lags) {
                    assert_eq!(*have, as_matrix(want), "{name} class {}", c + 1);
                }
                assert_eq!(params.innovation, as_matrix(&spec["innovation"]), "{name} class {}", c + 1);
            }
        }
    }

    #[test]
    fn var_presets_are_stable() {
        let p = ClassProcess::var3();
        let radii: Vec<f64> = (1..=3).map(|c| p.companion_radius(c)).collect();
        for r in &radii {
            assert!(*r < 1.0);
        }
        assert!((radii[0] - 0.909).abs() < 1e-3, "{radii:?}");
    }

    #[test]
    fn explosive_var_is_rejected() {
        let phi = DMatrix::identity(2, 2) * 1.1;
        let err = ClassProcess::var(
            vec![[phi.clone(), DMatrix::zeros(2, 2)], [phi * 0.1, DMatrix::zeros(2, 2)]],
            vec![DMatrix::identity(2, 2); 2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stability { class: 1, .. }));
    }

    #[test]
    fn non_spd_covariance_is_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(ClassProcess::mvn(vec![bad, DMatrix::identity(2, 2)]).is_err());
    }

    #[test]
    fn scenarios_have_the_stated_shape() {
        for (id, t, changes) in [(1, 1024, 9), (2, 1024, 5), (3, 2048, 6)] {
            let s = Scenario::preset(id).unwrap();
            assert_eq!(s.total_length(), t);
            assert_eq!(s.n_changes(), changes);
        }
        assert!(Scenario::preset(4).is_err());
    }

    #[test]
    fn scenario_three_labels_have_seven_runs() {
        let x = generate(&ClassProcess::mvn3(), &Scenario::preset(3).unwrap(), 11).unwrap();
        assert_eq!(x.series().len(), 2048);
        assert_eq!(count_class_changes(x.labels(), 4), 6);
        let runs = 1 + x.labels().windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(runs, 7);
    }

    #[test]
    fn same_seed_same_stream() {
        let s = Scenario::preset(1).unwrap();
        for p in [ClassProcess::mvn3(), ClassProcess::vma3(), ClassProcess::var3()] {
            assert_eq!(generate(&p, &s, 5).unwrap(), generate(&p, &s, 5).unwrap());
            assert_ne!(generate(&p, &s, 5).unwrap(), generate(&p, &s, 6).unwrap());
        }
    }

    #[test]
    fn streams_are_independent() {
        let a: f64 = stream_rng(1, 0).random();
        let b: f64 = stream_rng(1, 1).random();
        assert_ne!(a, b);
    }

    #[test]
    fn mvn_segment_covariance_is_close() {
        let p = ClassProcess::mvn3();
        let x = generate_plan(&p, &[(1, 20_000)], &mut stream_rng(3, 0)).unwrap();
        let cov = sample_cov(x.series(), 0, 20_000);
        // standard error of a unit-variance correlation estimate is ~0.007
        assert!((cov - &p.class(1).innovation).amax() < 0.05);
    }

    #[test]
    fn var_long_run_covariance_solves_lyapunov() {
        let p = ClassProcess::var3();
        for c in 1..=3 {
            let gamma = lyapunov_covariance(p.class(c));
            let n = 200_000;
            let x = generate_plan(&p, &[(c, n)], &mut stream_rng(9, c as u64)).unwrap();
            let cov = sample_cov(x.series(), 0, n);
            let scale = gamma.diagonal().max();
            assert!((cov - &gamma).amax() < 0.05 * scale, "class {c}: {gamma}");
        }
    }

    #[test]
    fn vma_covariance_matches_moving_average_formula() {
        let p = ClassProcess::vma3();
        let params = p.class(2);
        let want = DMatrix::identity(3, 3)
            + &params.lags[0] * params.lags[0].transpose()
            + &params.lags[1] * params.lags[1].transpose();
        let x = generate_plan(&p, &[(2, 100_000)], &mut stream_rng(4, 0)).unwrap();
        let cov = sample_cov(x.series(), 0, 100_000);
        assert!((cov - &want).amax() < 0.05 * want.diagonal().max());
    }

    #[test]
    fn successive_segments_switch_class() {
        let s = Scenario::preset(1).unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..50 {
            let plan = class_plan(3, &s, &mut rng);
            assert!(plan.windows(2).all(|w| w[0].0 != w[1].0));
        }
    }

    #[test]
    fn training_set_composition() {
        let set = make_training_set(&ClassProcess::vma3(), 256, 1).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.iter().all(|s| s.series().len() == 256));
        for s in &set[..6] {
            assert!(s.labels().iter().all(|&l| l == s.labels()[0]));
        }
        for s in &set[6..] {
            let mut seen: Vec<usize> = s.labels().to_vec();
            seen.dedup();
            assert_eq!(seen.len(), 3);
            let mut classes = seen.clone();
            classes.sort_unstable();
            assert_eq!(classes, vec![1, 2, 3]);
        }
    }
}
