//! Dense rectified-linear network trained with Adam on mean absolute error.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "aquaperc-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Held-out fraction.
    pub test_split: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 25,
            test_split: 0.2,
            batch_size: 64,
            learning_rate: 1e-3,
            hidden: vec![128, 128],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Domain("epochs and batch size must be at least 1".into()));
        }
        if !(self.test_split > 0.0 && self.test_split < 1.0) {
            return Err(Error::Domain(format!("test split {} outside (0, 1)", self.test_split)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain("learning rate must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Domain("hidden layers need at least one unit".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.biases.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// Network plus the input standardization fitted on its training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    dims: Vec<usize>,
    #[serde(flatten)]
    extra: serde_json::Map<String, serde_json::Value>,
    network: Mlp,
}

/// Activations kept for back-propagation.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// Layer inputs: the standardized input, then each hidden activation.
    acts: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// Parameter gradients in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros_like(m: &Mlp) -> Self {
        Grads {
            weights: m.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: m.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn scale(&mut self, k: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }
}

impl Mlp {
    /// He-initialized weights, zero biases, identity standardization.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Domain(format!("invalid layer sizes {dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive sigma");
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                    biases: vec![0.0; w[1]],
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            input_mean: vec![0.0; dims[0]],
            input_scale: vec![1.0; dims[0]],
        })
    }

    /// All parameters zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let mut m = Mlp::new(dims, 0)?;
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        Ok(m)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].inputs];
        d.extend(self.layers.iter().map(|l| l.outputs));
        d
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn unstandardize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.input_mean.iter().zip(&self.input_scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Fits mean and scale per feature; constant features keep scale 1.
    pub fn fit_standardization(&mut self, rows: &[&[f64]]) {
        let n = rows.len().max(1) as f64;
        let k = self.n_inputs();
        for j in 0..k {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[j] = mean;
            self.input_scale[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
    }

    /// Raw network output for a standardized input.
    pub fn forward_standardized(&self, z: &[f64]) -> Trace {
        let mut acts = vec![z.to_vec()];
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(acts.last().expect("input present"), &mut out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
                acts.push(std::mem::take(&mut out));
            }
        }
        Trace { acts, output: out }
    }

    /// Raw output, without the non-negativity clamp.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_standardized(&self.standardize(x)).output
    }

    /// Output clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Domain(format!(
                "model takes {} inputs, got {}",
                self.n_inputs(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("model inputs must be finite".into()));
        }
        Ok(self.forward(x).into_iter().map(|v| v.max(0.0)).collect())
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative
    /// with respect to the output is `d_out`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut Grads) {
        let mut delta = d_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.acts[li];
            let gw = &mut grads.weights[li];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[li][o] += d;
                if *d != 0.0 {
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                }
            }
            if li == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
            }
            // ReLU: activations are zero exactly where the unit was off.
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn zero_grads(&self) -> Grads {
        Grads::zeros_like(self)
    }

    /// Versioned JSON; `extra` holds caller metadata such as input names.
    pub fn to_json(&self, extra: serde_json::Map<String, serde_json::Value>) -> Result<String> {
        let doc = ModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dims: self.dims(),
            extra,
            network: self.clone(),
        };
        serde_json::to_string(&doc).map_err(|e| Error::Numeric(format!("model to JSON: {e}")))
    }

    pub fn from_json(text: &str, origin: &str) -> Result<(Self, serde_json::Map<String, serde_json::Value>)> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::parse(
                origin,
                format!("unsupported model format {} v{}", doc.format, doc.version),
            ));
        }
        let m = doc.network;
        let consistent = !m.layers.is_empty()
            && m.dims() == doc.dims
            && m.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && m.layers.iter().all(|l| l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs)
            && m.input_mean.len() == m.n_inputs()
            && m.input_scale.len() == m.n_inputs()
            && m.is_finite();
        if !consistent {
            return Err(Error::parse(origin, "inconsistent or non-finite model parameters"));
        }
        Ok((m, doc.extra))
    }

    pub fn save(&self, path: &Path, extra: serde_json::Map<String, serde_json::Value>) -> Result<()> {
        std::fs::write(path, self.to_json(extra)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Map<String, serde_json::Value>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

struct Adam {
    m: Grads,
    v: Grads,
    step: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(model: &Mlp, lr: f64) -> Self {
        Adam {
            m: model.zero_grads(),
            v: model.zero_grads(),
            step: 0,
            lr,
        }
    }

    fn update(&mut self, model: &mut Mlp, g: &Grads) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let groups = [
                (&mut layer.weights, &g.weights[li], &mut self.m.weights[li], &mut self.v.weights[li]),
                (&mut layer.biases, &g.biases[li], &mut self.m.biases[li], &mut self.v.biases[li]),
            ];
            for (params, grad, m, v) in groups {
                for i in 0..params.len() {
                    m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * grad[i];
                    v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
                    params[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub train_mae: f64,
    pub test_mae: f64,
    /// Mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Minimum number of rows accepted by [`train_mlp`].
pub const MIN_ROWS: usize = 100;

/// True when no epoch's loss exceeds the previous one by more than
/// `band` times the first epoch's loss.
pub fn loss_is_monotone(epoch_loss: &[f64], band: f64) -> bool {
    let tol = band * epoch_loss.first().copied().unwrap_or(0.0);
    epoch_loss.windows(2).all(|w| w[1] <= w[0] + tol)
}

/// Mean absolute error of clamped predictions over all outputs.
pub fn mae(model: &Mlp, xs: &[&[f64]], ys: &[&[f64]]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in xs.iter().zip(ys) {
        let p = model.predict(x)?;
        sum += p.iter().zip(y.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        n += y.len();
    }
    Ok(sum / n.max(1) as f64)
}

/// Shuffled train/test split of `0..n`, identical for a given seed.
pub fn split_indices(n: usize, test_split: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5917));
    let n_test = ((n as f64) * test_split).round() as usize;
    let test = idx[..n_test].to_vec();
    (idx[n_test..].to_vec(), test)
}

/// Trains a fresh network on `(inputs, targets)` pairs.
pub fn train_mlp(xs: &[Vec<f64>], ys: &[Vec<f64>], cfg: &TrainConfig) -> Result<(Mlp, TrainMetrics)> {
    cfg.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::Domain("inputs and targets differ in length".into()));
    }
    if xs.len() < MIN_ROWS {
        return Err(Error::Domain(format!(
            "training needs at least {MIN_ROWS} rows, got {}",
            xs.len()
        )));
    }
    let n_in = xs[0].len();
    let n_out = ys[0].len();
    if xs.iter().any(|x| x.len() != n_in) || ys.iter().any(|y| y.len() != n_out) {
        return Err(Error::Domain("ragged training rows".into()));
    }
    if xs.iter().flatten().chain(ys.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("training data must be finite".into()));
    }
    let (train_idx, test_idx) = split_indices(xs.len(), cfg.test_split, cfg.seed);
    let mut dims = vec![n_in];
    dims.extend(&cfg.hidden);
    dims.push(n_out);
    let mut model = Mlp::new(&dims, cfg.seed)?;
    // Start from the best constant predictor under absolute error: zero
    // output weights, biases at the per-output training median.
    let out = model.layers.last_mut().expect("at least one layer");
    out.weights.iter_mut().for_each(|w| *w = 0.0);
    for (o, b) in out.biases.iter_mut().enumerate() {
        let mut col: Vec<f64> = train_idx.iter().map(|&i| ys[i][o]).collect();
        col.sort_by(f64::total_cmp);
        *b = col[col.len() / 2];
    }
    let train_x: Vec<&[f64]> = train_idx.iter().map(|&i| xs[i].as_slice()).collect();
    model.fit_standardization(&train_x);
    let zs: Vec<Vec<f64>> = train_idx.iter().map(|&i| model.standardize(&xs[i])).collect();

    let mut adam = Adam::new(&model, cfg.learning_rate);
    let mut order: Vec<usize> = (0..zs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut grads = model.zero_grads();
    let mut d_out = vec![0.0; n_out];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.scale(0.0);
            let norm = 1.0 / (batch.len() * n_out) as f64;
            for &k in batch {
                let trace = model.forward_standardized(&zs[k]);
                let y = &ys[train_idx[k]];
                for (o, d) in d_out.iter_mut().enumerate() {
                    let err = trace.output[o] - y[o];
                    total += err.abs();
                    *d = err.signum() * norm;
                }
                model.backward(&trace, &d_out, &mut grads);
            }
            adam.update(&mut model, &grads);
        }
        let loss = total / (zs.len() * n_out) as f64;
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::Training(format!("non-finite loss at epoch {}", epoch + 1)));
        }
        epoch_loss.push(loss);
    }
    let pick = |idx: &[usize]| -> (Vec<&[f64]>, Vec<&[f64]>) {
        idx.iter().map(|&i| (xs[i].as_slice(), ys[i].as_slice())).unzip()
    };
    let (trx, try_) = pick(&train_idx);
    let (tex, tey) = pick(&test_idx);
    let metrics = TrainMetrics {
        train_mae: mae(&model, &trx, &try_)?,
        test_mae: mae(&model, &tex, &tey)?,
        epoch_loss,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
    };
    Ok((model, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_data(n: usize, seed: u64, f: impl Fn(&[f64]) -> Vec<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys = xs.iter().map(|x| f(x)).collect();
        (xs, ys)
    }

    /// Loss `sum_o w_o * out_o`, smooth away from ReLU kinks.
    fn probe_loss(m: &Mlp, z: &[f64], w: &[f64]) -> f64 {
        m.forward_standardized(z).output.iter().zip(w).map(|(o, w)| o * w).sum()
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut model = Mlp::new(&[20, 128, 128, 3], 7).unwrap();
        for l in &mut model.layers {
            l.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
        let h = 1e-6;
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let z: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = model.zero_grads();
            model.backward(&model.forward_standardized(&z), &w, &mut g);
            for _ in 0..10 {
                let li = rng.random_range(0..model.layers.len());
                let is_bias = rng.random_bool(0.3);
                let len = if is_bias { model.layers[li].biases.len() } else { model.layers[li].weights.len() };
                let pi = rng.random_range(0..len);
                let analytic = if is_bias { g.biases[li][pi] } else { g.weights[li][pi] };
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let p = if is_bias { &mut m.layers[li].biases[pi] } else { &mut m.layers[li].weights[pi] };
                    *p += delta;
                    probe_loss(&m, &z, &w)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = Mlp::zeros(&[20, 128, 128, 3]).unwrap();
        assert_eq!(m.predict(&[0.3; 20]).unwrap(), vec![0.0; 3]);
        assert!(m.predict(&[0.3; 19]).is_err());
        assert!(m.predict(&[f64::NAN; 20]).is_err());
    }

    #[test]
    fn learns_a_constant() {
        let (xs, _) = random_data(400, 1, |_| vec![]);
        let ys = vec![vec![0.2, 0.05, 0.1]; xs.len()];
        let (_, m) = train_mlp(&xs, &ys, &TrainConfig::default()).unwrap();
        assert!(m.test_mae < 1e-3, "{m:?}");
    }

    #[test]
    fn learns_a_linear_map() {
        let (xs, ys) = random_data(4000, 2, |x| {
            vec![
                0.5 + 0.1 * x[0] - 0.05 * x[1],
                0.3 + 0.2 * x[2],
                0.4 + 0.1 * (x[3] + x[4]),
            ]
        });
        let (_, m) = train_mlp(&xs, &ys, &TrainConfig::default()).unwrap();
        assert!(m.test_mae < 0.01, "{m:?}");
        assert!(loss_is_monotone(&m.epoch_loss, 0.05), "{:?}", m.epoch_loss);
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let (xs, ys) = random_data(300, 3, |x| vec![x[0].abs(), x[1] * x[2]]);
        let cfg = TrainConfig {
            epochs: 3,
            hidden: vec![16, 16],
            ..TrainConfig::default()
        };
        let (a, ma) = train_mlp(&xs, &ys, &cfg).unwrap();
        let (b, mb) = train_mlp(&xs, &ys, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let (c, _) = train_mlp(&xs, &ys, &TrainConfig { seed: 9, ..cfg.clone() }).unwrap();
        assert_ne!(a, c);

        let mut extra = serde_json::Map::new();
        extra.insert("note".into(), "x".into());
        let text = a.to_json(extra.clone()).unwrap();
        let (back, meta) = Mlp::from_json(&text, "mem").unwrap();
        assert_eq!(back, a);
        assert_eq!(meta, extra);
        assert!(Mlp::from_json(&text.replace(MODEL_FORMAT, "other"), "mem").is_err());
    }

    #[test]
    fn rejects_small_and_bad_inputs() {
        let (xs, ys) = random_data(50, 4, |x| vec![x[0]]);
        assert!(matches!(train_mlp(&xs, &ys, &TrainConfig::default()), Err(Error::Domain(_))));
        let (xs, ys) = random_data(200, 4, |x| vec![x[0]]);
        let bad = TrainConfig {
            test_split: 1.0,
            ..TrainConfig::default()
        };
        assert!(train_mlp(&xs, &ys, &bad).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let (xs, _) = random_data(200, 5, |_| vec![]);
        let ys = vec![vec![1e308]; xs.len()];
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 1e300,
            hidden: vec![4],
            ..TrainConfig::default()
        };
        assert!(matches!(train_mlp(&xs, &ys, &cfg), Err(Error::Training(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn standardization_round_trips(vals in proptest::collection::vec(-1e3f64..1e3, 20)) {
            let (xs, _) = random_data(50, 6, |_| vec![]);
            let mut m = Mlp::new(&[5, 4, 1], 0).unwrap();
            let rows: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
            m.fit_standardization(&rows);
            let x = &vals[..5];
            let back = m.unstandardize(&m.standardize(x));
            for (a, b) in back.iter().zip(x) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn predictions_are_lipschitz(i in 0usize..20, eps in 1e-6f64..1e-3) {
            let m = Mlp::new(&[20, 32, 3], 11).unwrap();
            let x = vec![0.1; 20];
            let mut y = x.clone();
            y[i] += eps;
            // Product of layer operator-norm bounds (Frobenius) gives L.
            let l: f64 = m.layers.iter().map(|l| l.weights.iter().map(|w| w * w).sum::<f64>().sqrt()).product();
            let (a, b) = (m.predict(&x).unwrap(), m.predict(&y).unwrap());
            let dist = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            prop_assert!(dist <= l * eps * (1.0 + 1e-9));
        }
    }
}
