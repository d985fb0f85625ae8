//! Gaussian-process smoothing of compound time courses.
//!
//! Each compound and condition gets its own GP with a squared-exponential
//! kernel in log time plus white noise. The length scale is fixed, the
//! signal variance is shared per data type and the noise variance is fitted
//! per compound by maximum likelihood.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CompoundSeries, Condition, SeriesKey, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, SquareMatrix};

pub const DEFAULT_LENGTH_SCALE: f64 = 2.0;

/// Search interval for `ln(noise_variance)`.
pub const LOG_NOISE_BOUNDS: (f64, f64) = (-12.0, 4.0);
/// Search interval for `ln(signal_variance)` in the joint fit.
pub const LOG_SIGNAL_BOUNDS: (f64, f64) = (-8.0, 6.0);
const GOLDEN_TOLERANCE: f64 = 1e-4;
const COARSE_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, length_scale: f64, noise_variance: f64) -> Result<Self> {
        let p = Self {
            signal_variance,
            length_scale,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("signal_variance", self.signal_variance),
            ("length_scale", self.length_scale),
            ("noise_variance", self.noise_variance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn squared_exponential(&self, t1: f64, t2: f64) -> f64 {
        let d = t1 - t2;
        self.signal_variance * (-d * d / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Kernel value; the white-noise term only applies when both arguments are the same observation.
pub fn kernel_eval(params: &KernelParams, t1: f64, t2: f64, same_point: bool) -> f64 {
    let k = params.squared_exponential(t1, t2);
    if same_point {
        k + params.noise_variance
    } else {
        k
    }
}

fn gram_matrix(params: &KernelParams, inputs: &[f64]) -> SquareMatrix {
    SquareMatrix::from_fn(inputs.len(), |i, j| kernel_eval(params, inputs[i], inputs[j], i == j))
}

fn lml_from_factor(factor: &Cholesky, targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    let v = factor.solve_lower(targets);
    let fit: f64 = v.iter().map(|x| x * x).sum();
    -0.5 * fit - 0.5 * factor.log_det() - 0.5 * n * (2.0 * PI).ln()
}

/// Log marginal likelihood of zero-mean `targets` under `params`.
pub fn log_marginal_likelihood(params: &KernelParams, inputs: &[f64], targets: &[f64]) -> Result<f64> {
    let factor = Cholesky::factor_with_jitter(&gram_matrix(params, inputs))?;
    Ok(lml_from_factor(&factor, targets))
}

fn centered(series: &CompoundSeries) -> (Vec<f64>, Vec<f64>, f64) {
    let inputs = series.log_times();
    let values = series.values();
    let center = values.iter().sum::<f64>() / values.len().max(1) as f64;
    let targets = values.iter().map(|v| v - center).collect();
    (inputs, targets, center)
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
fn golden_max(mut lo: f64, mut hi: f64, tol: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coarse grid scan followed by golden-section refinement around the best grid point.
fn maximize_1d(bounds: (f64, f64), f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let (lo, hi) = bounds;
    let steps = ((hi - lo) / COARSE_STEP).round() as usize;
    let mut best = (lo, f64::NEG_INFINITY);
    for i in 0..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let a = (best.0 - COARSE_STEP).max(lo);
    let b = (best.0 + COARSE_STEP).min(hi);
    let refined = golden_max(a, b, GOLDEN_TOLERANCE, f);
    if refined.1 >= best.1 {
        refined
    } else {
        best
    }
}

/// Maximum-likelihood noise variance with signal variance and length scale held fixed.
pub fn fit_noise_mle(
    series: &CompoundSeries,
    signal_variance: f64,
    length_scale: f64,
) -> Result<KernelParams> {
    if series.len() < 2 {
        return Err(Error::Domain(format!(
            "{}: need at least 2 observations, have {}",
            series.compound_id,
            series.len()
        )));
    }
    KernelParams::new(signal_variance, length_scale, 1.0)?;
    let (inputs, targets, _) = centered(series);
    let mut failure = None;
    let mut objective = |log_noise: f64| {
        let p = KernelParams {
            signal_variance,
            length_scale,
            noise_variance: log_noise.exp(),
        };
        match log_marginal_likelihood(&p, &inputs, &targets) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    };
    let (log_noise, value) = maximize_1d(LOG_NOISE_BOUNDS, &mut objective);
    if !value.is_finite() {
        return Err(failure.unwrap_or_else(|| {
            Error::Numerical(format!("{}: likelihood is not finite", series.compound_id))
        }));
    }
    KernelParams::new(signal_variance, length_scale, log_noise.exp())
}

/// Joint maximum-likelihood fit of signal and noise variance (length scale fixed).
pub fn fit_joint_mle(series: &CompoundSeries, length_scale: f64) -> Result<KernelParams> {
    if series.len() < 2 {
        return Err(Error::Domain(format!(
            "{}: need at least 2 observations",
            series.compound_id
        )));
    }
    let (inputs, targets, _) = centered(series);
    let lml = |ls: f64, ln: f64| {
        let p = KernelParams {
            signal_variance: ls.exp(),
            length_scale,
            noise_variance: ln.exp(),
        };
        log_marginal_likelihood(&p, &inputs, &targets).unwrap_or(f64::NEG_INFINITY)
    };
    let grid = |b: (f64, f64)| {
        let steps = ((b.1 - b.0) / COARSE_STEP).round() as usize;
        (0..=steps).map(move |i| b.0 + (b.1 - b.0) * i as f64 / steps as f64)
    };
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    for ls in grid(LOG_SIGNAL_BOUNDS) {
        for ln in grid(LOG_NOISE_BOUNDS) {
            let v = lml(ls, ln);
            if v > best.2 {
                best = (ls, ln, v);
            }
        }
    }
    if !best.2.is_finite() {
        return Err(Error::Numerical(format!(
            "{}: likelihood is not finite anywhere on the search grid",
            series.compound_id
        )));
    }
    let (mut ls, mut ln) = (best.0, best.1);
    let clamp = |x: f64, b: (f64, f64)| x.clamp(b.0, b.1);
    for _ in 0..4 {
        let s_lo = clamp(ls - COARSE_STEP, LOG_SIGNAL_BOUNDS);
        let s_hi = clamp(ls + COARSE_STEP, LOG_SIGNAL_BOUNDS);
        ls = golden_max(s_lo, s_hi, GOLDEN_TOLERANCE, &mut |x| lml(x, ln)).0;
        let n_lo = clamp(ln - COARSE_STEP, LOG_NOISE_BOUNDS);
        let n_hi = clamp(ln + COARSE_STEP, LOG_NOISE_BOUNDS);
        ln = golden_max(n_lo, n_hi, GOLDEN_TOLERANCE, &mut |x| lml(ls, x)).0;
    }
    KernelParams::new(ls.exp(), length_scale, ln.exp())
}

/// How the shared signal variance of one data type is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum SignalVariancePolicy {
    Fixed { value: f64 },
    /// Mean of joint-MLE optima over a seeded random subsample of series.
    MeanOfOptima { subsample: usize },
}

impl Default for SignalVariancePolicy {
    fn default() -> Self {
        SignalVariancePolicy::MeanOfOptima { subsample: 200 }
    }
}

/// Resolves the shared signal variance for a collection of series.
pub fn shared_signal_variance(
    series: &[&CompoundSeries],
    policy: SignalVariancePolicy,
    length_scale: f64,
    seed: u64,
) -> Result<f64> {
    match policy {
        SignalVariancePolicy::Fixed { value } => {
            KernelParams::new(value, length_scale, 1.0)?;
            Ok(value)
        }
        SignalVariancePolicy::MeanOfOptima { subsample } => {
            if series.is_empty() {
                return Err(Error::Domain("no series to estimate signal variance from".into()));
            }
            let mut idx: Vec<usize> = (0..series.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            idx.shuffle(&mut rng);
            idx.truncate(subsample.max(1));
            idx.sort_unstable();
            let mut total = 0.0;
            let mut count = 0usize;
            for i in idx {
                match fit_joint_mle(series[i], length_scale) {
                    Ok(p) => {
                        total += p.signal_variance;
                        count += 1;
                    }
                    Err(e) => log::warn!("skipping {} in signal variance estimate: {e}", series[i].compound_id),
                }
            }
            if count == 0 {
                return Err(Error::Numerical("no series produced a signal variance optimum".into()));
            }
            Ok(total / count as f64)
        }
    }
}

/// Fitted GP regression model for one compound and condition.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub compound_id: String,
    pub condition: Condition,
    pub params: KernelParams,
    pub train_inputs: Vec<f64>,
    /// Targets after subtracting `center`.
    pub train_targets: Vec<f64>,
    pub center: f64,
    factor: Cholesky,
    alpha: Vec<f64>,
}

impl GpModel {
    pub fn fit(series: &CompoundSeries, params: KernelParams) -> Result<Self> {
        params.validate()?;
        if series.len() < 2 {
            return Err(Error::Domain(format!(
                "{}: need at least 2 observations",
                series.compound_id
            )));
        }
        let (inputs, targets, center) = centered(series);
        Self::from_parts(series.compound_id.clone(), series.condition, params, inputs, targets, center)
    }

    /// Builds a model from zero-mean training data and an explicit center.
    pub fn from_parts(
        compound_id: String,
        condition: Condition,
        params: KernelParams,
        train_inputs: Vec<f64>,
        train_targets: Vec<f64>,
        center: f64,
    ) -> Result<Self> {
        if train_inputs.len() != train_targets.len() {
            return Err(Error::Usage("inputs and targets differ in length".into()));
        }
        let gram = gram_matrix(&params, &train_inputs);
        let factor = Cholesky::factor_with_jitter(&gram).map_err(|e| {
            Error::Numerical(format!("{compound_id} ({condition}): {e}"))
        })?;
        let alpha = factor.solve(&train_targets);
        Ok(Self {
            compound_id,
            condition,
            params,
            train_inputs,
            train_targets,
            center,
            factor,
            alpha,
        })
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn gram_matrix(&self) -> SquareMatrix {
        gram_matrix(&self.params, &self.train_inputs)
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from_factor(&self.factor, &self.train_targets)
    }

    fn cross(&self, t: f64) -> Vec<f64> {
        self.train_inputs
            .iter()
            .map(|&x| self.params.squared_exponential(t, x))
            .collect()
    }

    /// Posterior mean and latent variance at a single point.
    pub fn predict(&self, t: f64) -> (f64, f64) {
        let k = self.cross(t);
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>() + self.center;
        let v = self.factor.solve_lower(&k);
        let var = self.params.signal_variance - v.iter().map(|x| x * x).sum::<f64>();
        (mean, var.max(0.0))
    }

    /// Posterior mean and latent-function SD on every grid point.
    pub fn posterior(&self, grid: &TimeGrid) -> GpSummary {
        let (mean, sd) = grid
            .points()
            .iter()
            .map(|&t| {
                let (m, v) = self.predict(t);
                (m, v.sqrt())
            })
            .unzip();
        GpSummary {
            compound_id: self.compound_id.clone(),
            condition: self.condition,
            mean,
            sd,
        }
    }

    /// Joint posterior mean and covariance of the latent function on the grid.
    pub fn posterior_covariance(&self, grid: &TimeGrid) -> (Vec<f64>, SquareMatrix) {
        let pts = grid.points();
        let mut mean = Vec::with_capacity(pts.len());
        let mut vs = Vec::with_capacity(pts.len());
        for &t in pts {
            let k = self.cross(t);
            mean.push(k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>() + self.center);
            vs.push(self.factor.solve_lower(&k));
        }
        let n = pts.len();
        let mut cov = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = vs[i].iter().zip(&vs[j]).map(|(a, b)| a * b).sum();
                let c = self.params.squared_exponential(pts[i], pts[j]) - dot;
                cov.set(i, j, c);
                cov.set(j, i, c);
            }
        }
        (mean, cov)
    }

    pub fn sampler(&self, grid: &TimeGrid) -> Result<PosteriorSampler> {
        let (mean, cov) = self.posterior_covariance(grid);
        let factor = Cholesky::factor_with_jitter(&cov).map_err(|e| {
            Error::Sampling(format!("{} ({}): {e}", self.compound_id, self.condition))
        })?;
        Ok(PosteriorSampler { mean, factor })
    }

    /// One joint posterior draw of the latent function on the grid.
    pub fn sample_function(&self, grid: &TimeGrid, seed: u64) -> Result<Vec<f64>> {
        Ok(self.sampler(grid)?.sample_seeded(seed))
    }

    pub fn to_record(&self) -> GpFitRecord {
        GpFitRecord {
            compound_id: self.compound_id.clone(),
            condition: self.condition,
            params: self.params,
            center: self.center,
            inputs: self.train_inputs.clone(),
            targets: self.train_targets.clone(),
        }
    }
}

/// Factored posterior covariance on a fixed grid, reusable for many draws.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    mean: Vec<f64>,
    factor: Cholesky,
}

impl PosteriorSampler {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Jitter added to the covariance diagonal to make it factorizable.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.mean.len()).map(|_| StandardNormal.sample(rng)).collect();
        self.factor
            .mul_lower(&z)
            .into_iter()
            .zip(&self.mean)
            .map(|(d, m)| d + m)
            .collect()
    }

    pub fn sample_seeded(&self, seed: u64) -> Vec<f64> {
        self.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Everything needed to rebuild a [`GpModel`] bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFitRecord {
    pub compound_id: String,
    pub condition: Condition,
    pub params: KernelParams,
    pub center: f64,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl GpFitRecord {
    pub fn rebuild(&self) -> Result<GpModel> {
        GpModel::from_parts(
            self.compound_id.clone(),
            self.condition,
            self.params,
            self.inputs.clone(),
            self.targets.clone(),
            self.center,
        )
    }
}

/// Fits every series with a shared signal variance and per-series noise MLE.
pub fn fit_all(
    groups: &BTreeMap<SeriesKey, CompoundSeries>,
    policy: SignalVariancePolicy,
    length_scale: f64,
    seed: u64,
) -> Result<(f64, BTreeMap<SeriesKey, GpModel>)> {
    use rayon::prelude::*;

    let series: Vec<&CompoundSeries> = groups.values().collect();
    let signal = shared_signal_variance(&series, policy, length_scale, seed)?;
    let fitted: Vec<Result<(SeriesKey, GpModel)>> = groups
        .par_iter()
        .map(|(key, s)| {
            let params = fit_noise_mle(s, signal, length_scale)?;
            Ok((key.clone(), GpModel::fit(s, params)?))
        })
        .collect();
    let mut out = BTreeMap::new();
    for r in fitted {
        let (k, m) = r?;
        out.insert(k, m);
    }
    Ok((signal, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSummary {
    pub compound_id: String,
    pub condition: Condition,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSeries {
    pub compound_id: String,
    pub values: Vec<f64>,
}

impl RatioSeries {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }
}

/// Pointwise treated minus control posterior mean.
pub fn log_ratio(treated: &GpSummary, control: &GpSummary) -> Result<RatioSeries> {
    if treated.compound_id != control.compound_id {
        return Err(Error::Usage(format!(
            "log ratio of different compounds: {} vs {}",
            treated.compound_id, control.compound_id
        )));
    }
    if treated.mean.len() != control.mean.len() {
        return Err(Error::Usage("summaries are on different grids".into()));
    }
    Ok(RatioSeries {
        compound_id: treated.compound_id.clone(),
        values: treated
            .mean
            .iter()
            .zip(&control.mean)
            .map(|(u, c)| u - c)
            .collect(),
    })
}

/// Trapezoidal area of `max(0, |μ_u − μ_c| − k (σ_u + σ_c))` over the grid.
pub fn sd_band_score(treated: &GpSummary, control: &GpSummary, k: f64, grid: &TimeGrid) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("band width k must be positive, got {k}")));
    }
    let n = grid.len();
    if treated.mean.len() != n || control.mean.len() != n {
        return Err(Error::Usage("summaries do not match the grid".into()));
    }
    let gap: Vec<f64> = (0..n)
        .map(|i| {
            let d = (treated.mean[i] - control.mean[i]).abs();
            (d - k * (treated.sd[i] + control.sd[i])).max(0.0)
        })
        .collect();
    let pts = grid.points();
    Ok((0..n - 1)
        .map(|i| 0.5 * (gap[i] + gap[i + 1]) * (pts[i + 1] - pts[i]))
        .sum())
}

/// Compound ids by descending score, ties lexicographic, truncated to `top_n`.
pub fn rank_compounds(scores: &BTreeMap<String, f64>, top_n: usize) -> Vec<String> {
    let mut items: Vec<(&String, f64)> = scores.iter().map(|(k, v)| (k, *v)).collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    items.into_iter().take(top_n).map(|(k, _)| k.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(f64, f64)]) -> CompoundSeries {
        CompoundSeries {
            compound_id: "G".into(),
            condition: Condition::Treated,
            observations: points.to_vec(),
        }
    }

    fn summary(mean: Vec<f64>, sd: Vec<f64>) -> GpSummary {
        GpSummary {
            compound_id: "G".into(),
            condition: Condition::Control,
            mean,
            sd,
        }
    }

    #[test]
    fn kernel_examples() {
        let p = KernelParams::new(1.0, 2.0, 0.1).unwrap();
        assert!((kernel_eval(&p, 0.3, 0.3, true) - 1.1).abs() < 1e-15);
        assert!((kernel_eval(&p, 0.0, 2.0, false) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((kernel_eval(&p, 0.0, 2.0, false) - 0.6065).abs() < 1e-4);
        assert!(KernelParams::new(0.0, 2.0, 0.1).is_err());
    }

    #[test]
    fn constant_observations_push_noise_to_lower_bound() {
        let s = series(&[(0.0, 3.0), (0.5, 3.0), (1.0, 3.0), (2.0, 3.0), (3.0, 3.0)]);
        let p = fit_noise_mle(&s, 1.0, 2.0).unwrap();
        assert!((p.noise_variance.ln() - LOG_NOISE_BOUNDS.0).abs() < 1e-3, "{p:?}");
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let s = series(&[(0.0, 1.0), (0.5, -1.0)]);
        let m = GpModel::fit(&s, KernelParams::new(0.7, 2.0, 0.01).unwrap()).unwrap();
        let (mean, var) = m.predict(500.0);
        assert!((mean - m.center).abs() < 1e-12);
        assert!((var.sqrt() - 0.7f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn posterior_outputs_grid_length() {
        let s = series(&[(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)]);
        let m = GpModel::fit(&s, KernelParams::new(1.0, 2.0, 0.05).unwrap()).unwrap();
        let grid = TimeGrid::new(48.0).unwrap();
        let summary = m.posterior(&grid);
        assert_eq!(summary.mean.len(), 101);
        assert!(summary.sd.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn equal_seeds_give_equal_samples() {
        let s = series(&[(0.0, 1.0), (1.0, 2.0), (3.0, 1.5)]);
        let m = GpModel::fit(&s, KernelParams::new(1.0, 2.0, 0.05).unwrap()).unwrap();
        let grid = TimeGrid::new(48.0).unwrap();
        assert_eq!(m.sample_function(&grid, 9).unwrap(), m.sample_function(&grid, 9).unwrap());
        assert_ne!(m.sample_function(&grid, 9).unwrap(), m.sample_function(&grid, 10).unwrap());
    }

    #[test]
    fn log_ratio_cases() {
        let a = summary(vec![1.0, 2.0], vec![0.1, 0.1]);
        let r = log_ratio(&a, &a).unwrap();
        assert_eq!(r.values, vec![0.0, 0.0]);
        let b = summary(vec![2.0, 3.0], vec![0.1, 0.1]);
        assert_eq!(log_ratio(&b, &a).unwrap().values, vec![1.0, 1.0]);
        let mut c = a.clone();
        c.compound_id = "other".into();
        assert!(matches!(log_ratio(&c, &a), Err(Error::Usage(_))));
    }

    #[test]
    fn sd_band_constant_gap() {
        let grid = TimeGrid::new(48.0).unwrap();
        let u = summary(vec![3.0; 101], vec![0.5; 101]);
        let c = summary(vec![0.0; 101], vec![0.5; 101]);
        let score = sd_band_score(&u, &c, 2.0, &grid).unwrap();
        assert!((score - grid.span()).abs() < 1e-12);
        assert_eq!(sd_band_score(&u, &u, 1.0, &grid).unwrap(), 0.0);
        assert!(sd_band_score(&u, &c, 0.0, &grid).is_err());
    }

    #[test]
    fn ranking_order_and_ties() {
        let scores: BTreeMap<String, f64> = [("A".to_string(), 2.0), ("B".to_string(), 5.0)].into();
        assert_eq!(rank_compounds(&scores, 2), vec!["B", "A"]);
        let ties: BTreeMap<String, f64> = [("B".to_string(), 1.0), ("A".to_string(), 1.0)].into();
        assert_eq!(rank_compounds(&ties, 5), vec!["A", "B"]);
        assert_eq!(rank_compounds(&scores, 1), vec!["B"]);
    }
}
