//! The network, its backward pass and the training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_dataset, conditional_xent, MlpConfig, PredictiveFamily, PredictorError, Result, TargetScaling, TrainedHead,
};
use crate::corpus::JoinedDataset;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Dense layer; `weights` is `outputs × inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

/// He-uniform weights, zero biases.
pub(crate) fn init_layers(input_dim: usize, config: &MlpConfig, n_out: usize, seed: u64) -> Vec<Layer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![input_dim];
    sizes.extend(std::iter::repeat_n(config.hidden_units, config.n_layers));
    sizes.push(n_out);
    sizes
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let limit = (6.0 / inputs as f64).sqrt();
            Layer {
                inputs,
                outputs,
                weights: (0..inputs * outputs)
                    .map(|_| rng.random_range(-limit..limit) as f32)
                    .collect(),
                biases: vec![0.0; outputs],
            }
        })
        .collect()
}

/// Working copy of the parameters in f64. Values always equal the f32
/// master weights, so what is trained is exactly what is stored.
struct Params {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Params {
    fn from_layers(layers: &[Layer]) -> Self {
        Self {
            w: layers
                .iter()
                .map(|l| l.weights.iter().map(|&v| v as f64).collect())
                .collect(),
            b: layers
                .iter()
                .map(|l| l.biases.iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }

    fn zeros_like(layers: &[Layer]) -> Self {
        Self {
            w: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            b: layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn fill(&mut self, v: f64) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|x| x.fill(v));
    }
}

fn dense(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(o, bias)| {
        let row = &w[o * n_in..(o + 1) * n_in];
        bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// Raw network output for one input, dropout off.
pub(crate) fn infer(layers: &[Layer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = layers.len() - 1;
    for (i, l) in layers.iter().enumerate() {
        let mut z = Vec::with_capacity(l.outputs);
        for o in 0..l.outputs {
            let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
            let s: f64 = row.iter().zip(&a).map(|(&w, v)| w as f64 * v).sum();
            z.push(l.biases[o] as f64 + s);
        }
        if i < last {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    a
}

/// Forward and backward pass for one row, adding to `grad`. Returns the
/// row's NLL in standardized units.
#[allow(clippy::too_many_arguments)]
fn accumulate_row(
    p: &Params,
    layers: &[Layer],
    family: PredictiveFamily,
    x: &[f64],
    target: &[f64],
    dropout: f64,
    rng: &mut ChaCha8Rng,
    grad: &mut Params,
    acts: &mut Vec<Vec<f64>>,
) -> f64 {
    let n_layers = layers.len();
    acts.resize(n_layers + 1, Vec::new());
    acts[0].clear();
    acts[0].extend_from_slice(x);
    let keep_scale = 1.0 / (1.0 - dropout);
    for l in 0..n_layers {
        let (before, after) = acts.split_at_mut(l + 1);
        dense(&p.w[l], &p.b[l], &before[l], &mut after[0]);
        if l + 1 < n_layers {
            for v in after[0].iter_mut() {
                *v = v.max(0.0);
                if dropout > 0.0 {
                    *v *= if rng.random::<f64>() < dropout { 0.0 } else { keep_scale };
                }
            }
        }
    }
    let raw = &acts[n_layers];
    let params = family.params_from_raw(raw);
    let (nll, pgrad) = family.nll_grad_unchecked(&params, target);
    let mut delta = family.raw_grad(raw, &pgrad);
    for l in (0..n_layers).rev() {
        let input = &acts[l];
        let n_in = input.len();
        for (o, d) in delta.iter().enumerate() {
            if *d == 0.0 {
                continue;
            }
            grad.b[l][o] += d;
            let row = &mut grad.w[l][o * n_in..(o + 1) * n_in];
            for (g, a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
        }
        if l > 0 {
            // Units that were zeroed by ReLU or dropout have activation 0 and
            // pass no gradient. Surviving dropout units carry the keep scale.
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &p.w[l][o * n_in..(o + 1) * n_in];
                for (pv, w) in prev.iter_mut().zip(row) {
                    *pv += d * w;
                }
            }
            for (pv, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *pv = 0.0;
                } else if dropout > 0.0 {
                    *pv *= keep_scale;
                }
            }
            delta = prev;
        }
    }
    nll
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn step(&mut self, layers: &mut [Layer], p: &mut Params, grad: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let update = |w: &mut f64, master: &mut f32, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let step = lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            *master = (*w - step) as f32;
            *w = *master as f64;
        };
        for (l, layer) in layers.iter_mut().enumerate() {
            for i in 0..layer.weights.len() {
                update(
                    &mut p.w[l][i],
                    &mut layer.weights[i],
                    grad.w[l][i],
                    &mut self.m.w[l][i],
                    &mut self.v.w[l][i],
                );
            }
            for i in 0..layer.biases.len() {
                update(
                    &mut p.b[l][i],
                    &mut layer.biases[i],
                    grad.b[l][i],
                    &mut self.m.b[l][i],
                    &mut self.v.b[l][i],
                );
            }
        }
    }
}

fn validate_data(family: PredictiveFamily, data: &JoinedDataset, name: &str) -> Result<()> {
    if data.is_empty() {
        return Err(PredictorError::Parameter(format!("{name} set is empty")));
    }
    for i in 0..data.len() {
        let t = data.target(i);
        if t.iter().any(|v| !v.is_finite()) || data.input(i).iter().any(|v| !v.is_finite()) {
            return Err(PredictorError::Parameter(format!(
                "{name} row {} has a non-finite value",
                data.token_ids[i]
            )));
        }
        if family == PredictiveFamily::GammaScalar && !(t[0] > 0.0) {
            return Err(PredictorError::Support {
                row: data.token_ids[i].to_string(),
                value: t[0],
            });
        }
    }
    Ok(())
}

/// Trains a head by minibatch Adam on mean NLL plus `l2·Σw²` (weights
/// only), keeping the weights with the lowest validation cross-entropy and
/// stopping after `patience` epochs without improvement.
pub fn train_head(
    train: &JoinedDataset,
    val: &JoinedDataset,
    config: &MlpConfig,
    family: PredictiveFamily,
) -> Result<TrainedHead> {
    config.validate()?;
    check_dataset(train.input_dim, family, train)?;
    check_dataset(train.input_dim, family, val)?;
    validate_data(family, train, "train")?;
    validate_data(family, val, "validation")?;

    let k = family.target_dim();
    let scaling = TargetScaling::fit(family, train.targets(), k);
    let std_targets: Vec<Vec<f64>> = (0..train.len()).map(|i| scaling.to_standard(train.target(i))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_seed: u64 = rng.random();
    let mut head = TrainedHead {
        config: config.clone(),
        family,
        input_dim: train.input_dim,
        layers: init_layers(train.input_dim, config, family.n_params(), init_seed),
        scaling,
        val_xent_nats: f64::INFINITY,
        val_history: Vec::new(),
        context_type: None,
        zscore_ref: None,
    };
    let mut params = Params::from_layers(&head.layers);
    let mut grad = Params::zeros_like(&head.layers);
    let mut adam = Adam {
        m: Params::zeros_like(&head.layers),
        v: Params::zeros_like(&head.layers),
        t: 0,
    };
    let mut acts = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_layers = head.layers.clone();
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad.fill(0.0);
            let mut loss = 0.0;
            for &i in batch {
                loss += accumulate_row(
                    &params,
                    &head.layers,
                    family,
                    train.input(i),
                    &std_targets[i],
                    config.dropout_p,
                    &mut rng,
                    &mut grad,
                    &mut acts,
                );
            }
            if !loss.is_finite() {
                return Err(PredictorError::TrainingDiverged { epoch });
            }
            let inv = 1.0 / batch.len() as f64;
            for l in 0..head.layers.len() {
                for (g, w) in grad.w[l].iter_mut().zip(&params.w[l]) {
                    *g = *g * inv + 2.0 * config.l2_lambda * w;
                }
                grad.b[l].iter_mut().for_each(|g| *g *= inv);
            }
            adam.step(&mut head.layers, &mut params, &grad, config.learning_rate);
        }
        let val_xent = match conditional_xent(&head, val) {
            Ok(v) if v.is_finite() => v,
            _ => return Err(PredictorError::TrainingDiverged { epoch }),
        };
        head.val_history.push(val_xent);
        if val_xent < head.val_xent_nats {
            head.val_xent_nats = val_xent;
            best_layers.clone_from(&head.layers);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    head.layers = best_layers;
    Ok(head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenId;
    use rand_distr::{Distribution, Normal};

    fn dataset(inputs: Vec<f64>, d: usize, targets: Vec<f64>, k: usize) -> JoinedDataset {
        let n = targets.len() / k;
        let ids = (0..n as u32).map(|i| TokenId::new("u", i)).collect();
        JoinedDataset::from_parts(ids, d, inputs, k, targets)
    }

    /// Total standardized NLL of one row as a function of the parameters.
    fn row_loss(p: &Params, layers: &[Layer], family: PredictiveFamily, x: &[f64], t: &[f64]) -> f64 {
        let mut acts = Vec::new();
        let mut g = Params::zeros_like(layers);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        accumulate_row(p, layers, family, x, t, 0.0, &mut rng, &mut g, &mut acts)
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let config = MlpConfig {
            n_layers: 2,
            hidden_units: 5,
            ..Default::default()
        };
        for family in [
            PredictiveFamily::GaussianScalar,
            PredictiveFamily::GammaScalar,
            PredictiveFamily::GaussianDiag { k: 3 },
        ] {
            let mut layers = init_layers(4, &config, family.n_params(), 3);
            for l in &mut layers {
                l.biases.iter_mut().enumerate().for_each(|(i, b)| *b = 0.05 * i as f32);
            }
            let p = Params::from_layers(&layers);
            let x = [0.3, -0.7, 1.1, 0.2];
            let t: Vec<f64> = (0..family.target_dim()).map(|j| 0.8 + 0.3 * j as f64).collect();
            let mut grad = Params::zeros_like(&layers);
            let mut acts = Vec::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            accumulate_row(&p, &layers, family, &x, &t, 0.0, &mut rng, &mut grad, &mut acts);
            let h = 1e-6;
            for l in 0..layers.len() {
                for i in (0..p.w[l].len()).step_by(3) {
                    let mut plus = Params::from_layers(&layers);
                    let mut minus = Params::from_layers(&layers);
                    plus.w[l][i] += h;
                    minus.w[l][i] -= h;
                    let fd = (row_loss(&plus, &layers, family, &x, &t) - row_loss(&minus, &layers, family, &x, &t))
                        / (2.0 * h);
                    let g = grad.w[l][i];
                    assert!(
                        (fd - g).abs() <= 1e-5 * g.abs().max(1.0),
                        "{family} layer {l} w{i}: {g} vs {fd}"
                    );
                }
                for i in 0..p.b[l].len() {
                    let mut plus = Params::from_layers(&layers);
                    let mut minus = Params::from_layers(&layers);
                    plus.b[l][i] += h;
                    minus.b[l][i] -= h;
                    let fd = (row_loss(&plus, &layers, family, &x, &t) - row_loss(&minus, &layers, family, &x, &t))
                        / (2.0 * h);
                    let g = grad.b[l][i];
                    assert!(
                        (fd - g).abs() <= 1e-5 * g.abs().max(1.0),
                        "{family} layer {l} b{i}: {g} vs {fd}"
                    );
                }
            }
        }
    }

    fn linear_problem(n: usize, seed: u64) -> JoinedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| nd.sample(&mut rng)).collect();
            targets.push(x[0] + 0.1 * nd.sample(&mut rng));
            inputs.extend(x);
        }
        dataset(inputs, 3, targets, 1)
    }

    #[test]
    fn training_is_reproducible_and_keeps_best() {
        let train = linear_problem(600, 1);
        let val = linear_problem(200, 2);
        let config = MlpConfig {
            hidden_units: 16,
            batch_size: 32,
            max_epochs: 15,
            dropout_p: 0.1,
            seed: 4,
            ..Default::default()
        };
        let a = train_head(&train, &val, &config, PredictiveFamily::GaussianScalar).unwrap();
        let b = train_head(&train, &val, &config, PredictiveFamily::GaussianScalar).unwrap();
        assert_eq!(a, b);
        let min = a.val_history.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(a.val_xent_nats, min);
        assert_eq!(conditional_xent(&a, &val).unwrap(), min);
        assert!(a.val_xent_nats < 0.5, "{}", a.val_xent_nats);
    }

    #[test]
    fn huge_learning_rate_is_flagged() {
        let train = linear_problem(300, 1);
        let val = linear_problem(100, 2);
        let config = MlpConfig {
            learning_rate: 1e3,
            max_epochs: 10,
            ..Default::default()
        };
        match train_head(&train, &val, &config, PredictiveFamily::GaussianScalar) {
            Err(PredictorError::TrainingDiverged { .. }) => {}
            Ok(head) => {
                let baseline = super::super::constant_xent(PredictiveFamily::GaussianScalar, val.targets()).unwrap();
                assert!(head.val_xent_nats > baseline, "{} vs {baseline}", head.val_xent_nats);
            }
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let train = linear_problem(10, 1);
        let empty = dataset(vec![], 3, vec![], 1);
        let cfg = MlpConfig::default();
        assert!(train_head(&train, &empty, &cfg, PredictiveFamily::GaussianScalar).is_err());
        assert!(train_head(&train, &train, &cfg, PredictiveFamily::GaussianDiag { k: 2 }).is_err());
        let neg = dataset(vec![0.0; 6], 3, vec![1.0, -1.0], 1);
        assert!(matches!(
            train_head(&neg, &neg, &cfg, PredictiveFamily::GammaScalar),
            Err(PredictorError::Support { .. })
        ));
    }
}
