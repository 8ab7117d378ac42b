//! Independent mutual information estimators for validating the main
//! pipeline: a kernel-smoothing mixed-pair estimator, a quadrature oracle
//! for Gaussian class mixtures and a plug-in histogram oracle.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{JoinedDataset, TokenId};
use crate::density::{default_bandwidth_grid, entropy_mc, fit_kde, DensityError, Points};
use crate::predictor::{conditional_xent, train_head, MlpConfig, PredictiveFamily, PredictorError};

/// Name of the group that collects classes below the size floor.
pub const POOLED_LABEL: &str = "<other>";

const QUADRATURE_TOLERANCE: f64 = 1e-6;
const QUADRATURE_PANELS: usize = 64;
const QUADRATURE_MAX_DEPTH: u32 = 40;
const QUADRATURE_RANGE_SDS: f64 = 10.0;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("class `{label}` has {n} training points, need at least {need}")]
    InsufficientClassData { label: String, n: usize, need: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("quadrature did not reach tolerance{}: {message}", if instance.is_empty() { String::new() } else { format!(" for instance `{instance}`") })]
    Quadrature { instance: String, message: String },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// One draw of a discrete label and a continuous value.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPairSample {
    pub label: String,
    pub value: Vec<f64>,
}

/// Fractions of every class used to fit, select the bandwidth (or stop
/// training) and evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub heldout: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.5,
            heldout: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedPairConfig {
    /// Classes with fewer samples are pooled into [`POOLED_LABEL`].
    pub min_class_size: usize,
    pub fractions: SplitFractions,
    pub seed: u64,
    /// Head used by [`pipeline_mi`].
    pub head: MlpConfig,
}

impl Default for MixedPairConfig {
    fn default() -> Self {
        Self {
            min_class_size: 50,
            fractions: SplitFractions::default(),
            seed: 0,
            head: MlpConfig {
                n_layers: 1,
                hidden_units: 16,
                learning_rate: 1e-2,
                batch_size: 256,
                max_epochs: 100,
                patience: 5,
                ..Default::default()
            },
        }
    }
}

/// Samples grouped into classes and split three ways within each class.
struct Prepared {
    dim: usize,
    groups: Vec<String>,
    /// Group index per sample.
    group_of: Vec<usize>,
    /// Sample indices per group, per part (train, held-out, eval).
    parts: Vec<[Vec<usize>; 3]>,
    counts: Vec<usize>,
}

impl Prepared {
    fn new(samples: &[MixedPairSample], cfg: &MixedPairConfig) -> Result<Self> {
        let f = cfg.fractions;
        if !(f.train > 0.0 && f.heldout > 0.0 && f.train + f.heldout < 1.0) {
            return Err(BaselineError::Parameter(format!(
                "split fractions must be positive and leave room for evaluation, got {} and {}",
                f.train, f.heldout
            )));
        }
        let dim = samples.first().map(|s| s.value.len()).unwrap_or(0);
        if dim == 0 {
            return Err(BaselineError::Parameter("no samples or zero-dimensional values".into()));
        }
        if samples
            .iter()
            .any(|s| s.value.len() != dim || s.value.iter().any(|v| !v.is_finite()))
        {
            return Err(BaselineError::Parameter(
                "values must be finite with a common dimension".into(),
            ));
        }
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            by_label.entry(s.label.as_str()).or_default().push(i);
        }
        let mut grouped: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (label, idx) in by_label {
            let key = if idx.len() < cfg.min_class_size {
                POOLED_LABEL
            } else {
                label
            };
            grouped.entry(key.to_string()).or_default().extend(idx);
        }
        if grouped.len() < 2 {
            return Err(BaselineError::Parameter(format!(
                "need at least 2 classes after pooling, got {}",
                grouped.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut group_of = vec![0; samples.len()];
        let mut groups = Vec::new();
        let mut parts = Vec::new();
        let mut counts = Vec::new();
        for (g, (label, mut idx)) in grouped.into_iter().enumerate() {
            idx.sort_unstable();
            idx.shuffle(&mut rng);
            let n = idx.len();
            let n_train = (f.train * n as f64).round() as usize;
            let n_held = ((f.heldout * n as f64).round() as usize).max(1);
            if n_train < dim + 2 || n_train + n_held >= n {
                return Err(BaselineError::InsufficientClassData {
                    label,
                    n: n_train,
                    need: dim + 2,
                });
            }
            for &i in &idx {
                group_of[i] = g;
            }
            let eval = idx.split_off(n_train + n_held);
            let held = idx.split_off(n_train);
            parts.push([idx, held, eval]);
            groups.push(label);
            counts.push(n);
        }
        Ok(Self {
            dim,
            groups,
            group_of,
            parts,
            counts,
        })
    }

    fn points(&self, samples: &[MixedPairSample], idx: &[usize]) -> Points {
        let data = idx.iter().flat_map(|&i| samples[i].value.iter().copied()).collect();
        Points::new(self.dim, data).expect("dimensions were checked")
    }

    fn union(&self, part: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self.parts.iter().flat_map(|p| p[part].iter().copied()).collect();
        all.sort_unstable();
        all
    }

    fn kde_entropy(&self, samples: &[MixedPairSample], train: &[usize], held: &[usize], eval: &[usize]) -> Result<f64> {
        let train = self.points(samples, train);
        let grid = default_bandwidth_grid(train.len(), self.dim);
        let model = fit_kde(&train, &self.points(samples, held), &grid)?;
        Ok(entropy_mc(&model, &self.points(samples, eval))?)
    }

    fn marginal_entropy(&self, samples: &[MixedPairSample]) -> Result<f64> {
        self.kde_entropy(samples, &self.union(0), &self.union(1), &self.union(2))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedPairEstimate {
    pub mi_nats: f64,
    pub h_nats: f64,
    pub h_cond_nats: f64,
    /// Class label and size after pooling.
    pub classes: Vec<(String, usize)>,
}

/// Kernel-smoothing estimate `H(values) − Σ_c p̂(c)·H(values | c)`, every
/// entropy from a KDE whose bandwidth is chosen on a held-out slice of the
/// same class and evaluated on a disjoint slice.
pub fn ks_mixed_mi(samples: &[MixedPairSample], cfg: &MixedPairConfig) -> Result<MixedPairEstimate> {
    let prep = Prepared::new(samples, cfg)?;
    ks_from_prepared(samples, &prep)
}

fn ks_from_prepared(samples: &[MixedPairSample], prep: &Prepared) -> Result<MixedPairEstimate> {
    let h = prep.marginal_entropy(samples)?;
    let class_h: Vec<f64> = prep
        .parts
        .par_iter()
        .map(|[train, held, eval]| prep.kde_entropy(samples, train, held, eval))
        .collect::<Result<_>>()?;
    let total: usize = prep.counts.iter().sum();
    let h_cond: f64 = class_h
        .iter()
        .zip(&prep.counts)
        .map(|(hc, &n)| n as f64 / total as f64 * hc)
        .sum();
    Ok(MixedPairEstimate {
        mi_nats: h - h_cond,
        h_nats: h,
        h_cond_nats: h_cond,
        classes: prep.groups.iter().cloned().zip(prep.counts.iter().copied()).collect(),
    })
}

/// The main pipeline on mixed pairs: KDE entropy of the values minus the
/// held-out cross-entropy of a head trained on one-hot label embeddings.
pub fn pipeline_mi(samples: &[MixedPairSample], cfg: &MixedPairConfig) -> Result<MixedPairEstimate> {
    let prep = Prepared::new(samples, cfg)?;
    pipeline_from_prepared(samples, &prep, cfg, None)
}

fn pipeline_from_prepared(
    samples: &[MixedPairSample],
    prep: &Prepared,
    cfg: &MixedPairConfig,
    h_known: Option<f64>,
) -> Result<MixedPairEstimate> {
    let h = match h_known {
        Some(h) => h,
        None => prep.marginal_entropy(samples)?,
    };
    let n_groups = prep.groups.len();
    let joined = |idx: &[usize]| {
        let ids = idx.iter().map(|&i| TokenId::new("sample", i as u32)).collect();
        let mut inputs = vec![0.0; idx.len() * n_groups];
        for (r, &i) in idx.iter().enumerate() {
            inputs[r * n_groups + prep.group_of[i]] = 1.0;
        }
        let targets = idx.iter().flat_map(|&i| samples[i].value.iter().copied()).collect();
        JoinedDataset::from_parts(ids, n_groups, inputs, prep.dim, targets)
    };
    let family = if prep.dim == 1 {
        PredictiveFamily::GaussianScalar
    } else {
        PredictiveFamily::GaussianDiag { k: prep.dim }
    };
    let head = train_head(&joined(&prep.union(0)), &joined(&prep.union(1)), &cfg.head, family)?;
    let h_cond = conditional_xent(&head, &joined(&prep.union(2)))?;
    Ok(MixedPairEstimate {
        mi_nats: h - h_cond,
        h_nats: h,
        h_cond_nats: h_cond,
        classes: prep.groups.iter().cloned().zip(prep.counts.iter().copied()).collect(),
    })
}

/// Exact mixed-pair MI of a label with class probabilities `probs` and
/// Gaussian class-conditional values `N(means[c], sds[c]²)`.
pub fn quadrature_mi_oracle(probs: &[f64], means: &[f64], sds: &[f64]) -> Result<f64> {
    if probs.is_empty() || probs.len() != means.len() || probs.len() != sds.len() {
        return Err(BaselineError::Parameter(
            "probs, means and sds must be non-empty and equally long".into(),
        ));
    }
    if probs.iter().any(|&p| !(p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(BaselineError::Parameter(
            "class probabilities must be non-negative and sum to 1".into(),
        ));
    }
    if sds.iter().any(|&s| !(s > 0.0 && s.is_finite())) || means.iter().any(|m| !m.is_finite()) {
        return Err(BaselineError::Parameter("sds must be positive and means finite".into()));
    }
    let lo = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m - QUADRATURE_RANGE_SDS * s)
        .fold(f64::INFINITY, f64::min);
    let hi = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m + QUADRATURE_RANGE_SDS * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let density = |x: f64| -> f64 {
        probs
            .iter()
            .zip(means.iter().zip(sds))
            .map(|(p, (m, s))| {
                let z = (x - m) / s;
                p * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum()
    };
    let integrand = |x: f64| {
        let p = density(x);
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    };
    let h_mix = adaptive_simpson(integrand, lo, hi, QUADRATURE_TOLERANCE)?;
    let h_cond: f64 = probs
        .iter()
        .zip(sds)
        .map(|(p, s)| p * crate::predictor::gaussian_entropy(*s))
        .sum();
    Ok(h_mix - h_cond)
}

/// Adaptive Simpson over fixed panels; the tolerance is split evenly
/// across panels and halved at each refinement.
fn adaptive_simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn refine(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> std::result::Result<f64, String> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(format!("interval [{a}, {b}] still has error {}", delta.abs() / 15.0));
        }
        Ok(refine(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + refine(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    let width = (hi - lo) / QUADRATURE_PANELS as f64;
    let panel_tol = tol / QUADRATURE_PANELS as f64;
    let mut total = 0.0;
    for i in 0..QUADRATURE_PANELS {
        let a = lo + i as f64 * width;
        let b = if i + 1 == QUADRATURE_PANELS { hi } else { a + width };
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        total += refine(
            &f,
            a,
            b,
            fa,
            fm,
            fb,
            simpson(fa, fm, fb, a, b),
            panel_tol,
            QUADRATURE_MAX_DEPTH,
        )
        .map_err(|message| BaselineError::Quadrature {
            instance: String::new(),
            message,
        })?;
    }
    Ok(total)
}

/// Plug-in MI of (label, bin) with `n_bins` equal-width bins over the range
/// of scalar values.
pub fn histogram_mi_oracle(samples: &[MixedPairSample], n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(BaselineError::Parameter("n_bins must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(BaselineError::Parameter("no samples".into()));
    }
    if samples.iter().any(|s| s.value.len() != 1 || !s.value[0].is_finite()) {
        return Err(BaselineError::Parameter(
            "histogram oracle needs finite scalar values".into(),
        ));
    }
    if n_bins == 1 {
        return Ok(0.0);
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s.value[0]), hi.max(s.value[0]))
    });
    if hi <= lo {
        return Err(BaselineError::Degenerate("all values are equal".into()));
    }
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        let next = labels.len();
        labels.entry(&s.label).or_insert(next);
    }
    let mut joint = vec![0usize; labels.len() * n_bins];
    for s in samples {
        let bin = (((s.value[0] - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1);
        joint[labels[s.label.as_str()] * n_bins + bin] += 1;
    }
    let n = samples.len() as f64;
    let mut label_tot = vec![0usize; labels.len()];
    let mut bin_tot = vec![0usize; n_bins];
    for (i, &c) in joint.iter().enumerate() {
        label_tot[i / n_bins] += c;
        bin_tot[i % n_bins] += c;
    }
    let mut terms = Vec::new();
    for (i, &c) in joint.iter().enumerate() {
        if c > 0 {
            let pxy = c as f64 / n;
            let px = label_tot[i / n_bins] as f64 / n;
            let py = bin_tot[i % n_bins] as f64 / n;
            terms.push(pxy * (pxy / (px * py)).ln());
        }
    }
    Ok(crate::stats::pairwise_sum(&terms))
}

/// A Gaussian class mixture used as a validation instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: String,
    pub class_probs: Vec<f64>,
    pub class_means: Vec<f64>,
    pub class_sds: Vec<f64>,
    pub n: usize,
    pub seed: u64,
}

impl Instance {
    /// Two equiprobable unit-variance classes at `±separation / 2`.
    pub fn two_gaussians(separation: f64, n: usize, seed: u64) -> Self {
        Self {
            name: format!("two_gaussians_sep{separation}"),
            class_probs: vec![0.5, 0.5],
            class_means: vec![-separation / 2.0, separation / 2.0],
            class_sds: vec![1.0, 1.0],
            n,
            seed,
        }
    }

    /// Draws `n` labelled samples; labels are `c0`, `c1`, ...
    pub fn sample(&self) -> Vec<MixedPairSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let pick = WeightedIndex::new(&self.class_probs).expect("valid class probabilities");
        let normals: Vec<Normal<f64>> = self
            .class_means
            .iter()
            .zip(&self.class_sds)
            .map(|(&m, &s)| Normal::new(m, s).expect("valid sd"))
            .collect();
        (0..self.n)
            .map(|_| {
                let c = pick.sample(&mut rng);
                MixedPairSample {
                    label: format!("c{c}"),
                    value: vec![normals[c].sample(&mut rng)],
                }
            })
            .collect()
    }

    pub fn oracle_mi(&self) -> Result<f64> {
        quadrature_mi_oracle(&self.class_probs, &self.class_means, &self.class_sds).map_err(|e| match e {
            BaselineError::Quadrature { message, .. } => BaselineError::Quadrature {
                instance: self.name.clone(),
                message,
            },
            other => other,
        })
    }
}

/// Two-Gaussian instances at separations 0, 1, 2 and 4 plus a
/// four-class null with unequal class probabilities.
pub fn default_suite(n: usize, seed: u64) -> Vec<Instance> {
    let mut suite: Vec<Instance> = [0.0, 1.0, 2.0, 4.0]
        .iter()
        .enumerate()
        .map(|(i, &sep)| Instance::two_gaussians(sep, n, seed.wrapping_add(i as u64)))
        .collect();
    suite.push(Instance {
        name: "null_four_classes".into(),
        class_probs: vec![0.4, 0.3, 0.2, 0.1],
        class_means: vec![0.0; 4],
        class_sds: vec![1.0; 4],
        n,
        seed: seed.wrapping_add(4),
    });
    suite
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceReport {
    pub instance: String,
    pub oracle_mi: f64,
    pub ks_mi: f64,
    pub pipeline_mi: f64,
    pub histogram_mi: f64,
}

impl InstanceReport {
    pub fn abs_gap_ks(&self) -> f64 {
        (self.ks_mi - self.oracle_mi).abs()
    }

    pub fn abs_gap_pipeline(&self) -> f64 {
        (self.pipeline_mi - self.oracle_mi).abs()
    }
}

/// Bins used for the histogram estimate in suite reports.
pub const SUITE_HISTOGRAM_BINS: usize = 16;

/// Runs the oracle, the kernel-smoothing estimator, the pipeline and the
/// histogram oracle on every instance. Both estimators share the split and
/// the marginal entropy.
pub fn run_suite(instances: &[Instance], cfg: &MixedPairConfig) -> Result<Vec<InstanceReport>> {
    if instances.is_empty() {
        return Err(BaselineError::Parameter("the validation suite has no instances".into()));
    }
    instances
        .iter()
        .map(|inst| {
            let oracle_mi = inst.oracle_mi()?;
            let samples = inst.sample();
            let prep = Prepared::new(&samples, cfg)?;
            let ks = ks_from_prepared(&samples, &prep)?;
            let pipe = pipeline_from_prepared(&samples, &prep, cfg, Some(ks.h_nats))?;
            Ok(InstanceReport {
                instance: inst.name.clone(),
                oracle_mi,
                ks_mi: ks.mi_nats,
                pipeline_mi: pipe.mi_nats,
                histogram_mi: histogram_mi_oracle(&samples, SUITE_HISTOGRAM_BINS)?,
            })
        })
        .collect()
}

/// Writes `instance,oracle_mi,ks_mi,pipeline_mi,abs_gap_ks,abs_gap_pipeline`
/// after a `# header` comment line.
pub fn write_validation_report<W: Write>(mut out: W, header: &str, rows: &[InstanceReport]) -> Result<()> {
    writeln!(out, "# {header}")?;
    writeln!(out, "instance,oracle_mi,ks_mi,pipeline_mi,abs_gap_ks,abs_gap_pipeline")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.instance,
            r.oracle_mi,
            r.ks_mi,
            r.pipeline_mi,
            r.abs_gap_ks(),
            r.abs_gap_pipeline()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pair(label: &str, v: f64) -> MixedPairSample {
        MixedPairSample {
            label: label.into(),
            value: vec![v],
        }
    }

    #[test]
    fn quadrature_trivial_cases() {
        assert!(quadrature_mi_oracle(&[1.0], &[0.3], &[2.0]).unwrap().abs() < 1e-6);
        assert!(
            quadrature_mi_oracle(&[0.5, 0.5], &[1.0, 1.0], &[0.7, 0.7])
                .unwrap()
                .abs()
                < 1e-6
        );
    }

    #[test]
    fn quadrature_far_apart_classes_give_ln2() {
        // reference from an independent adaptive integration of the same mixture
        let mi = quadrature_mi_oracle(&[0.5, 0.5], &[-3.0, 3.0], &[1.0, 1.0]).unwrap();
        assert!((mi - 0.689_297_933).abs() < 1e-6, "{mi}");
        assert!(std::f64::consts::LN_2 - mi < 0.005);
        let mi = quadrature_mi_oracle(&[0.5, 0.5], &[-30.0, 30.0], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(mi, std::f64::consts::LN_2, epsilon = 2e-6);
    }

    #[test]
    fn quadrature_rejects_bad_input() {
        assert!(quadrature_mi_oracle(&[0.5, 0.6], &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(quadrature_mi_oracle(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(quadrature_mi_oracle(&[], &[], &[]).is_err());
    }

    #[test]
    fn quadrature_is_monotone_in_separation() {
        let mis: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|&s| Instance::two_gaussians(s, 1, 0).oracle_mi().unwrap())
            .collect();
        assert!(mis.windows(2).all(|w| w[0] < w[1]), "{mis:?}");
    }

    #[test]
    fn simpson_integrates_a_gaussian() {
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert_relative_eq!(adaptive_simpson(f, -10.0, 10.0, 1e-10).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn histogram_deterministic_channel() {
        let s = vec![pair("a", 0.0), pair("b", 1.0), pair("a", 0.0), pair("b", 1.0)];
        assert_relative_eq!(
            histogram_mi_oracle(&s, 2).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        assert_eq!(histogram_mi_oracle(&s, 1).unwrap(), 0.0);
        assert!(histogram_mi_oracle(&s, 0).is_err());
        let constant = vec![pair("a", 1.0), pair("b", 1.0)];
        assert!(matches!(
            histogram_mi_oracle(&constant, 4),
            Err(BaselineError::Degenerate(_))
        ));
    }

    #[test]
    fn histogram_independence() {
        let inst = Instance {
            name: "indep".into(),
            class_probs: vec![0.5, 0.5],
            class_means: vec![0.0, 0.0],
            class_sds: vec![1.0, 1.0],
            n: 50_000,
            seed: 12,
        };
        let mi = histogram_mi_oracle(&inst.sample(), 16).unwrap();
        assert!((0.0..0.01).contains(&mi), "{mi}");
    }

    #[test]
    fn single_label_is_rejected() {
        let s: Vec<_> = (0..200).map(|i| pair("a", i as f64)).collect();
        assert!(matches!(
            ks_mixed_mi(&s, &MixedPairConfig::default()),
            Err(BaselineError::Parameter(_))
        ));
    }

    #[test]
    fn small_classes_are_pooled() {
        let mut s: Vec<_> = (0..300).map(|i| pair("big", (i as f64 * 0.37).sin())).collect();
        s.extend((0..30).map(|i| pair("rare1", (i as f64 * 0.11).cos())));
        s.extend((0..30).map(|i| pair("rare2", (i as f64 * 0.23).cos())));
        let est = ks_mixed_mi(&s, &MixedPairConfig::default()).unwrap();
        assert_eq!(est.classes, vec![("<other>".to_string(), 60), ("big".to_string(), 300)]);
        assert!(est.mi_nats.is_finite());
    }

    #[test]
    fn tiny_pooled_class_is_insufficient() {
        let cfg = MixedPairConfig::default();
        let mut s: Vec<_> = (0..300).map(|i| pair("big", (i as f64 * 0.37).sin())).collect();
        s.push(pair("rare", 0.5));
        s.push(pair("rare2", 0.1));
        assert!(matches!(
            ks_mixed_mi(&s, &cfg),
            Err(BaselineError::InsufficientClassData { .. })
        ));
    }

    #[test]
    fn suite_report_format() {
        let rows = vec![InstanceReport {
            instance: "x".into(),
            oracle_mi: 0.5,
            ks_mi: 0.25,
            pipeline_mi: 0.75,
            histogram_mi: 0.0,
        }];
        let mut buf = Vec::new();
        write_validation_report(&mut buf, "seed=1", &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# seed=1\ninstance,oracle_mi,ks_mi,pipeline_mi,abs_gap_ks,abs_gap_pipeline\nx,0.5,0.25,0.75,0.25,0.25\n"
        );
        assert!(run_suite(&[], &MixedPairConfig::default()).is_err());
    }

    #[test]
    fn small_suite_runs_and_is_reproducible() {
        let inst = [Instance::two_gaussians(2.0, 2_000, 5)];
        let cfg = MixedPairConfig::default();
        let a = run_suite(&inst, &cfg).unwrap();
        let b = run_suite(&inst, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a[0].abs_gap_ks() < 0.1, "{:?}", a[0]);
        assert!(a[0].abs_gap_pipeline() < 0.1, "{:?}", a[0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn histogram_mi_is_bounded_by_label_entropy(vals in proptest::collection::vec((0usize..3, -5.0f64..5.0), 5..200), bins in 2usize..20) {
            let s: Vec<_> = vals.iter().map(|&(l, v)| pair(&format!("l{l}"), v)).collect();
            prop_assume!(vals.iter().any(|v| v.1 != vals[0].1));
            let mi = histogram_mi_oracle(&s, bins).unwrap();
            let mut counts = [0usize; 3];
            vals.iter().for_each(|v| counts[v.0] += 1);
            let n = vals.len() as f64;
            let h: f64 = counts.iter().filter(|&&c| c > 0).map(|&c| -(c as f64 / n) * (c as f64 / n).ln()).sum();
            prop_assert!(mi >= -1e-12 && mi <= h + 1e-12);
        }
    }
}
