use std::fmt;

use ndarray::{Array1, Array2, Array3, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::distribution::{Support, ValueDistribution};
use crate::config::RainbowConfig;
use crate::error::{BvrError, Result};
use crate::mdp::{Observation, OBS_DIM};
use crate::tactics::TacticAction;

/// Floating-point type the network runs at: f32 for training, f64 for
/// gradient checks.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum LayerKind {
    Dense = 0,
    Noisy = 1,
}

impl LayerKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Dense),
            1 => Some(Self::Noisy),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Sampled,
    Zero,
}

/// Affine layer y = x·Wᵀ + b. Noisy layers carry σ-parameters of the same
/// shapes; the effective weights are μ + σ ⊙ (ε_out ⊗ ε_in).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<F> {
    pub kind: LayerKind,
    /// rows = outputs, cols = inputs
    pub weight: Array2<F>,
    pub bias: Array1<F>,
    pub weight_sigma: Option<Array2<F>>,
    pub bias_sigma: Option<Array1<F>>,
}

impl<F: Scalar> Layer<F> {
    pub fn dense(weight: Array2<F>, bias: Array1<F>) -> Self {
        Self {
            kind: LayerKind::Dense,
            weight,
            bias,
            weight_sigma: None,
            bias_sigma: None,
        }
    }

    pub fn noisy(weight: Array2<F>, bias: Array1<F>, weight_sigma: Array2<F>, bias_sigma: Array1<F>) -> Self {
        Self {
            kind: LayerKind::Noisy,
            weight,
            bias,
            weight_sigma: Some(weight_sigma),
            bias_sigma: Some(bias_sigma),
        }
    }

    fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, noisy: bool, sigma0: f64, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let uni = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let weight = Array2::from_shape_fn((outputs, inputs), |_| F::of(uni.sample(rng)));
        let bias = Array1::from_shape_fn(outputs, |_| F::of(uni.sample(rng)));
        if noisy {
            let s = F::of(sigma0 * bound);
            Self::noisy(
                weight,
                bias,
                Array2::from_elem((outputs, inputs), s),
                Array1::from_elem(outputs, s),
            )
        } else {
            Self::dense(weight, bias)
        }
    }

    pub fn rows(&self) -> usize {
        self.weight.nrows()
    }

    pub fn cols(&self) -> usize {
        self.weight.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
            weight_sigma: self.weight_sigma.as_ref().map(|a| Array2::zeros(a.raw_dim())),
            bias_sigma: self.bias_sigma.as_ref().map(|a| Array1::zeros(a.raw_dim())),
        }
    }

    /// Parameter tensors in storage order: weights, biases, then σ-parameters.
    pub fn tensors(&self) -> Vec<&[F]> {
        let mut out = vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ];
        if let (Some(ws), Some(bs)) = (&self.weight_sigma, &self.bias_sigma) {
            out.push(ws.as_slice().expect("standard layout"));
            out.push(bs.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ];
        if let (Some(ws), Some(bs)) = (&mut self.weight_sigma, &mut self.bias_sigma) {
            out.push(ws.as_slice_mut().expect("standard layout"));
            out.push(bs.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn effective(&self, noise: Option<&LayerNoise<F>>) -> Option<(Array2<F>, Array1<F>)> {
        let (noise, ws, bs) = match (noise, &self.weight_sigma, &self.bias_sigma) {
            (Some(n), Some(ws), Some(bs)) => (n, ws, bs),
            _ => return None,
        };
        let mut w = self.weight.clone();
        Zip::indexed(&mut w).and(ws).for_each(|(o, i), w, &s| {
            *w += s * noise.eps_out[o] * noise.eps_in[i];
        });
        let mut b = self.bias.clone();
        Zip::from(&mut b)
            .and(bs)
            .and(&noise.eps_out)
            .for_each(|b, &s, &e| *b += s * e);
        Some((w, b))
    }
}

/// Factorized Gaussian noise for one layer: f(x) = sign(x)·√|x|.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNoise<F> {
    pub eps_in: Array1<F>,
    pub eps_out: Array1<F>,
}

impl<F: Scalar> LayerNoise<F> {
    fn sample<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut f = || {
            let x: f64 = StandardNormal.sample(rng);
            F::of(x.signum() * x.abs().sqrt())
        };
        let eps_in = Array1::from_shape_fn(inputs, |_| f());
        let eps_out = Array1::from_shape_fn(outputs, |_| f());
        Self { eps_in, eps_out }
    }
}

/// One noise draw for every noisy layer of a network; `None` entries are
/// dense layers or zero-noise mode.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkNoise<F> {
    pub layers: Vec<Option<LayerNoise<F>>>,
}

impl<F: Scalar> NetworkNoise<F> {
    pub fn zero(params: &NetworkParams<F>) -> Self {
        Self {
            layers: vec![None; params.layer_count()],
        }
    }

    pub fn sample<R: Rng + ?Sized>(params: &NetworkParams<F>, rng: &mut R) -> Self {
        Self {
            layers: params
                .layers()
                .map(|l| match l.kind {
                    LayerKind::Noisy => Some(LayerNoise::sample(l.cols(), l.rows(), rng)),
                    LayerKind::Dense => None,
                })
                .collect(),
        }
    }

    pub fn for_mode<R: Rng + ?Sized>(params: &NetworkParams<F>, mode: NoiseMode, rng: &mut R) -> Self {
        match mode {
            NoiseMode::Sampled => Self::sample(params, rng),
            NoiseMode::Zero => Self::zero(params),
        }
    }
}

/// MLP trunk with rectifier activations, then either a dueling pair of heads
/// (value: K outputs, advantage: |A|·K outputs) or a single |A|·K head.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<F> {
    pub trunk: Vec<Layer<F>>,
    pub value: Option<Layer<F>>,
    pub advantage: Layer<F>,
    pub support: Support,
    pub actions: usize,
}

impl<F: Scalar> NetworkParams<F> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, actions: usize, cfg: &RainbowConfig, rng: &mut R) -> Self {
        let atoms = cfg.effective_atoms();
        let mut trunk = Vec::with_capacity(cfg.hidden.len());
        let mut width = obs_dim;
        for &h in &cfg.hidden {
            trunk.push(Layer::init(width, h, cfg.noisy, cfg.noisy_sigma0, rng));
            width = h;
        }
        let value = cfg
            .dueling
            .then(|| Layer::init(width, atoms, cfg.noisy, cfg.noisy_sigma0, rng));
        let advantage = Layer::init(width, actions * atoms, cfg.noisy, cfg.noisy_sigma0, rng);
        Self {
            trunk,
            value,
            advantage,
            support: Support::new(atoms, cfg.v_min, cfg.v_max),
            actions,
        }
    }

    /// Default action-space network for the 16-dim observation.
    pub fn for_env<R: Rng + ?Sized>(cfg: &RainbowConfig, rng: &mut R) -> Self {
        Self::new(OBS_DIM, TacticAction::COUNT, cfg, rng)
    }

    /// Assembles a network from a flat layer list, inferring the dueling split
    /// from shapes.
    pub fn from_layers(layers: Vec<Layer<F>>, support: Support) -> Result<Self> {
        let k = support.len();
        let n = layers.len();
        if n == 0 {
            return Err(BvrError::Shape("network has no layers".into()));
        }
        let last = &layers[n - 1];
        if !last.rows().is_multiple_of(k) || last.rows() == 0 {
            return Err(BvrError::Shape(format!(
                "output width {} is not a multiple of {k} atoms",
                last.rows()
            )));
        }
        let actions = last.rows() / k;
        let dueling = n >= 2 && layers[n - 2].rows() == k && layers[n - 2].cols() == last.cols() && last.cols() != k;
        let mut layers = layers;
        let advantage = layers.pop().expect("non-empty");
        let value = if dueling { layers.pop() } else { None };
        let params = Self {
            trunk: layers,
            value,
            advantage,
            support,
            actions,
        };
        params.check_shapes()?;
        Ok(params)
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.advantage).cols()
    }

    pub fn atoms(&self) -> usize {
        self.support.len()
    }

    pub fn is_distributional(&self) -> bool {
        self.support.len() > 1
    }

    pub fn is_dueling(&self) -> bool {
        self.value.is_some()
    }

    pub fn layer_count(&self) -> usize {
        self.trunk.len() + self.value.is_some() as usize + 1
    }

    /// Layers in canonical order: trunk, value head, advantage head.
    pub fn layers(&self) -> impl Iterator<Item = &Layer<F>> {
        self.trunk
            .iter()
            .chain(self.value.iter())
            .chain(std::iter::once(&self.advantage))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<F>> {
        self.trunk
            .iter_mut()
            .chain(self.value.iter_mut())
            .chain(std::iter::once(&mut self.advantage))
    }

    pub fn tensors(&self) -> Vec<&[F]> {
        self.layers().flat_map(Layer::tensors).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        self.layers_mut().flat_map(Layer::tensors_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            trunk: self.trunk.iter().map(Layer::zeros_like).collect(),
            value: self.value.as_ref().map(Layer::zeros_like),
            advantage: self.advantage.zeros_like(),
            support: self.support.clone(),
            actions: self.actions,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Scalar>(&self) -> NetworkParams<G> {
        let layer = |l: &Layer<F>| Layer {
            kind: l.kind,
            weight: l.weight.mapv(|v| G::of(v.f64())),
            bias: l.bias.mapv(|v| G::of(v.f64())),
            weight_sigma: l.weight_sigma.as_ref().map(|a| a.mapv(|v| G::of(v.f64()))),
            bias_sigma: l.bias_sigma.as_ref().map(|a| a.mapv(|v| G::of(v.f64()))),
        };
        NetworkParams {
            trunk: self.trunk.iter().map(layer).collect(),
            value: self.value.as_ref().map(layer),
            advantage: layer(&self.advantage),
            support: self.support.clone(),
            actions: self.actions,
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let k = self.atoms();
        let mut width = self.obs_dim();
        for (i, l) in self.trunk.iter().enumerate() {
            if l.cols() != width {
                return Err(BvrError::Shape(format!(
                    "trunk layer {i} expects {} inputs, previous width is {width}",
                    l.cols()
                )));
            }
            width = l.rows();
        }
        let check = |name: &str, l: &Layer<F>, rows: usize| {
            if l.cols() != width || l.rows() != rows {
                return Err(BvrError::Shape(format!(
                    "{name} head is {}x{}, expected {rows}x{width}",
                    l.rows(),
                    l.cols()
                )));
            }
            Ok(())
        };
        if let Some(v) = &self.value {
            check("value", v, k)?;
        }
        check("advantage", &self.advantage, self.actions * k)?;
        for l in self.layers() {
            if l.bias.len() != l.rows() {
                return Err(BvrError::Shape("bias length differs from rows".into()));
            }
            let sigma_ok = match l.kind {
                LayerKind::Dense => l.weight_sigma.is_none() && l.bias_sigma.is_none(),
                LayerKind::Noisy => {
                    l.weight_sigma.as_ref().is_some_and(|s| s.dim() == l.weight.dim())
                        && l.bias_sigma.as_ref().is_some_and(|s| s.len() == l.rows())
                }
            };
            if !sigma_ok {
                return Err(BvrError::Shape("σ-parameters inconsistent with layer kind".into()));
            }
        }
        Ok(())
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass<F> {
    /// activations[0] is the input batch; activations[l + 1] is the output of
    /// trunk layer l after the rectifier.
    pub activations: Vec<Array2<F>>,
    /// Effective (noise-applied) weights per layer, `None` when equal to μ.
    effective: Vec<Option<(Array2<F>, Array1<F>)>>,
    /// batch × actions × atoms
    pub logits: Array3<F>,
    /// Softmax over atoms in distributional mode; equal to `logits` otherwise.
    pub probs: Array3<F>,
}

impl<F: Scalar> ForwardPass<F> {
    pub fn batch_size(&self) -> usize {
        self.logits.dim().0
    }

    /// Q(s_b, a) for every batch row and action.
    pub fn q_values(&self, support: &Support) -> Array2<F> {
        let (b, a, k) = self.probs.dim();
        if k == 1 {
            return self.probs.index_axis(Axis(2), 0).to_owned();
        }
        let atoms: Vec<F> = support.atoms().iter().map(|&z| F::of(z)).collect();
        Array2::from_shape_fn((b, a), |(i, j)| {
            let mut q = F::zero();
            for (n, z) in atoms.iter().enumerate() {
                q += self.probs[(i, j, n)] * *z;
            }
            q
        })
    }
}

fn affine<F: Scalar>(x: &Array2<F>, layer: &Layer<F>, eff: &Option<(Array2<F>, Array1<F>)>) -> Array2<F> {
    let (w, b) = match eff {
        Some((w, b)) => (w, b),
        None => (&layer.weight, &layer.bias),
    };
    let mut y = x.dot(&w.t());
    y += b;
    y
}

/// Runs a batch (rows = observations) through the network.
pub fn forward_batch<F: Scalar>(
    params: &NetworkParams<F>,
    x: &Array2<F>,
    noise: &NetworkNoise<F>,
) -> Result<ForwardPass<F>> {
    if x.ncols() != params.obs_dim() {
        return Err(BvrError::Shape(format!(
            "observation width {} but network expects {}",
            x.ncols(),
            params.obs_dim()
        )));
    }
    if noise.layers.len() != params.layer_count() {
        return Err(BvrError::Shape("noise draw does not match layer count".into()));
    }
    let effective: Vec<_> = params
        .layers()
        .zip(&noise.layers)
        .map(|(l, n)| l.effective(n.as_ref()))
        .collect();

    let mut activations = Vec::with_capacity(params.trunk.len() + 1);
    activations.push(x.clone());
    for (i, layer) in params.trunk.iter().enumerate() {
        let mut h = affine(&activations[i], layer, &effective[i]);
        h.mapv_inplace(|v| v.max(F::zero()));
        activations.push(h);
    }
    let h = activations.last().expect("input present");
    let batch = x.nrows();
    let (a, k) = (params.actions, params.atoms());
    let head = params.trunk.len();
    let adv_idx = params.layer_count() - 1;
    let adv = affine(h, &params.advantage, &effective[adv_idx])
        .into_shape_with_order((batch, a, k))
        .map_err(|e| BvrError::Shape(e.to_string()))?;

    let logits = match &params.value {
        Some(vl) => {
            let v = affine(h, vl, &effective[head]);
            let mean = adv.mean_axis(Axis(1)).expect("at least one action");
            let mut out = adv;
            for b in 0..batch {
                for j in 0..a {
                    for n in 0..k {
                        out[(b, j, n)] += v[(b, n)] - mean[(b, n)];
                    }
                }
            }
            out
        }
        None => adv,
    };

    let probs = if k > 1 {
        let mut p = logits.clone();
        for mut row in p.lanes_mut(Axis(2)) {
            let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        p
    } else {
        logits.clone()
    };

    Ok(ForwardPass {
        activations,
        effective,
        logits,
        probs,
    })
}

/// Backpropagates dL/dlogits (batch × actions × atoms) through the network.
/// Gradients come back in a zero-initialised copy of the parameter layout.
pub fn backward<F: Scalar>(
    params: &NetworkParams<F>,
    noise: &NetworkNoise<F>,
    pass: &ForwardPass<F>,
    dlogits: &Array3<F>,
) -> NetworkParams<F> {
    let mut grads = params.zeros_like();
    let (batch, a, k) = dlogits.dim();
    let head_in = pass.activations.last().expect("input present");
    let trunk_len = params.trunk.len();
    let adv_idx = params.layer_count() - 1;

    let (dv, dadv) = if params.value.is_some() {
        let dv = dlogits.sum_axis(Axis(1));
        let mean = dlogits.mean_axis(Axis(1)).expect("at least one action");
        let mut dadv = dlogits.clone();
        for b in 0..batch {
            for j in 0..a {
                for n in 0..k {
                    dadv[(b, j, n)] -= mean[(b, n)];
                }
            }
        }
        (Some(dv), dadv)
    } else {
        (None, dlogits.clone())
    };
    let dadv = dadv
        .into_shape_with_order((batch, a * k))
        .expect("contiguous gradient");

    let mut dh = layer_backward(
        &params.advantage,
        noise.layers[adv_idx].as_ref(),
        &pass.effective[adv_idx],
        head_in,
        &dadv,
        &mut grads.advantage,
    );
    if let (Some(vl), Some(dv)) = (&params.value, dv) {
        dh += &layer_backward(
            vl,
            noise.layers[trunk_len].as_ref(),
            &pass.effective[trunk_len],
            head_in,
            &dv,
            grads.value.as_mut().expect("value head"),
        );
    }
    for l in (0..trunk_len).rev() {
        Zip::from(&mut dh)
            .and(&pass.activations[l + 1])
            .for_each(|d, &h| {
                if h <= F::zero() {
                    *d = F::zero();
                }
            });
        dh = layer_backward(
            &params.trunk[l],
            noise.layers[l].as_ref(),
            &pass.effective[l],
            &pass.activations[l],
            &dh,
            &mut grads.trunk[l],
        );
    }
    grads
}

fn layer_backward<F: Scalar>(
    layer: &Layer<F>,
    noise: Option<&LayerNoise<F>>,
    eff: &Option<(Array2<F>, Array1<F>)>,
    x: &Array2<F>,
    dy: &Array2<F>,
    grad: &mut Layer<F>,
) -> Array2<F> {
    let dw = dy.t().dot(x);
    let db = dy.sum_axis(Axis(0));
    if let (Some(n), Some(gws), Some(gbs)) = (noise, &mut grad.weight_sigma, &mut grad.bias_sigma) {
        Zip::indexed(gws).and(&dw).for_each(|(o, i), g, &d| {
            *g += d * n.eps_out[o] * n.eps_in[i];
        });
        Zip::from(gbs).and(&db).and(&n.eps_out).for_each(|g, &d, &e| *g += d * e);
    }
    grad.weight += &dw;
    grad.bias += &db;
    let w = eff.as_ref().map(|(w, _)| w).unwrap_or(&layer.weight);
    dy.dot(w)
}

fn obs_row<F: Scalar>(obs: &Observation) -> Array2<F> {
    Array2::from_shape_fn((1, OBS_DIM), |(_, i)| F::of(obs.0[i]))
}

/// Per-action return distributions for one observation.
pub fn forward<F: Scalar, R: Rng + ?Sized>(
    params: &NetworkParams<F>,
    obs: &Observation,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<Vec<ValueDistribution>> {
    if !obs.is_valid() {
        return Err(BvrError::Shape("observation is not finite".into()));
    }
    let noise = NetworkNoise::for_mode(params, mode, rng);
    let pass = forward_batch(params, &obs_row(obs), &noise)?;
    Ok((0..params.actions)
        .map(|a| {
            let probs = (0..params.atoms()).map(|n| pass.probs[(0, a, n)].f64()).collect();
            ValueDistribution::new(&params.support, probs)
        })
        .collect())
}

/// Q-values for one observation.
pub fn action_values<F: Scalar, R: Rng + ?Sized>(
    params: &NetworkParams<F>,
    obs: &Observation,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let noise = NetworkNoise::for_mode(params, mode, rng);
    action_values_with(params, obs, &noise)
}

/// Q-values for one observation under a given noise draw.
pub fn action_values_with<F: Scalar>(
    params: &NetworkParams<F>,
    obs: &Observation,
    noise: &NetworkNoise<F>,
) -> Result<Vec<f64>> {
    let pass = forward_batch(params, &obs_row(obs), noise)?;
    Ok(pass.q_values(&params.support).row(0).iter().map(|q| q.f64()).collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy action: sampled noise while training, zero noise for evaluation.
pub fn select_action<F: Scalar, R: Rng + ?Sized>(
    params: &NetworkParams<F>,
    obs: &Observation,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<TacticAction> {
    let q = action_values(params, obs, mode, rng)?;
    Ok(TacticAction::from_index(argmax(&q)).expect("network has one output per tactic"))
}
