//! Noise estimator `eps_hat = f(y_noisy, y_d, level)`.
//!
//! Structure per residual layer `l` with dilation `d_l`:
//!
//! ```text
//! h   = x + fc_l(e)                          level embedding as a channel bias
//! z   = dilconv_l(h) + u_l                   u_l: conditioner contribution
//! g   = tanh(z[..C]) * sigmoid(z[C..])
//! x'  = (x + res_l(g)) / sqrt(2),  skip += skip_l(g)
//! ```
//!
//! The conditioner stream starts from the linearly interpolated `y_d`
//! projected to `C` channels. Its dilated convolutions are chained from the
//! last layer to the first (`u_l = condconv_l(c_{l+1})`,
//! `c_l = tanh(u_l[..C])`), so the contribution reaching layer 1 has already
//! seen every dilation once and then passes through every main convolution
//! again. The reach on `y_d` is `2 * sum(d) - d_1` per side, against
//! `sum(d)` for the noisy input.

use crate::diffusion::NoiseLevel;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Backend, Eager, Graph, Tensor, Var};

use super::{noise_level_embedding, ModelConfig};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSlots {
    pub emb_w: usize,
    pub emb_b: usize,
    pub dil_w: usize,
    pub dil_b: usize,
    pub cond_w: usize,
    pub cond_b: usize,
    pub res_w: usize,
    pub res_b: usize,
    pub skip_w: usize,
    pub skip_b: usize,
}

/// Index of every parameter tensor in the flat parameter list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub input_w: usize,
    pub input_b: usize,
    pub cond_in_w: usize,
    pub cond_in_b: usize,
    pub emb1_w: usize,
    pub emb1_b: usize,
    pub emb2_w: usize,
    pub emb2_b: usize,
    pub layers: Vec<LayerSlots>,
    pub skip_out_w: usize,
    pub skip_out_b: usize,
    pub out_w: usize,
    pub out_b: usize,
}

struct Spec {
    names: Vec<String>,
    shapes: Vec<Vec<usize>>,
}

impl Spec {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.names.len() - 1
    }

    fn conv(&mut self, name: &str, c_out: usize, c_in: usize, k: usize) -> (usize, usize) {
        (self.add(format!("{name}.weight"), vec![c_out, c_in, k]), self.add(format!("{name}.bias"), vec![c_out]))
    }

    fn fc(&mut self, name: &str, n_out: usize, n_in: usize) -> (usize, usize) {
        (self.add(format!("{name}.weight"), vec![n_out, n_in]), self.add(format!("{name}.bias"), vec![n_out]))
    }
}

fn build_layout(cfg: &ModelConfig) -> (ParamLayout, Spec) {
    let c = cfg.channels;
    let k = cfg.kernel_size;
    let hid = cfg.embedding_hidden;
    let mut s = Spec { names: Vec::new(), shapes: Vec::new() };
    let (input_w, input_b) = s.conv("input_proj", c, 1, 1);
    let (cond_in_w, cond_in_b) = s.conv("cond_proj", c, 1, 1);
    let (emb1_w, emb1_b) = s.fc("embedding.fc1", hid, cfg.embedding_dim);
    let (emb2_w, emb2_b) = s.fc("embedding.fc2", hid, hid);
    let layers = (0..cfg.n_layers)
        .map(|l| {
            let p = format!("layers.{l}");
            let (emb_w, emb_b) = s.fc(&format!("{p}.embedding_proj"), c, hid);
            let (dil_w, dil_b) = s.conv(&format!("{p}.dilated_conv"), 2 * c, c, k);
            let (cond_w, cond_b) = s.conv(&format!("{p}.cond_conv"), 2 * c, c, k);
            let (res_w, res_b) = s.conv(&format!("{p}.residual_proj"), c, c, 1);
            let (skip_w, skip_b) = s.conv(&format!("{p}.skip_proj"), c, c, 1);
            LayerSlots { emb_w, emb_b, dil_w, dil_b, cond_w, cond_b, res_w, res_b, skip_w, skip_b }
        })
        .collect();
    let (skip_out_w, skip_out_b) = s.conv("output.skip_conv", c, c, 1);
    let (out_w, out_b) = s.conv("output.final_conv", 1, c, 1);
    let layout = ParamLayout {
        input_w,
        input_b,
        cond_in_w,
        cond_in_b,
        emb1_w,
        emb1_b,
        emb2_w,
        emb2_b,
        layers,
        skip_out_w,
        skip_out_b,
        out_w,
        out_b,
    };
    (layout, s)
}

/// Samples on each side of a position that can influence one output sample,
/// `(noisy_input, conditioner)`, both in output-rate samples and excluding the
/// spread of the interpolation itself.
pub fn receptive_field(config: &ModelConfig) -> (usize, usize) {
    let d = config.dilations();
    let half = config.kernel_size / 2;
    let main: usize = d.iter().map(|&v| v * half).sum();
    (main, 2 * main - d[0] * half)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NuWaveNetwork<T> {
    config: ModelConfig,
    layout: ParamLayout,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> NuWaveNetwork<T> {
    /// Fan-in scaled uniform initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for every weight and bias, except the final projection which starts at
    /// zero so the untrained network predicts no noise.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (layout, spec) = build_layout(&config);
        let mut params = Vec::with_capacity(spec.shapes.len());
        let mut fan_in = 1;
        for (i, shape) in spec.shapes.iter().enumerate() {
            if shape.len() > 1 {
                fan_in = shape[1..].iter().product();
            }
            let n: usize = shape.iter().product();
            let data = if i == layout.out_w || i == layout.out_b {
                vec![T::zero(); n]
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.uniform(-bound, bound).map(T::lit)).collect::<Result<_>>()?
            };
            params.push(Tensor::new(shape.clone(), data)?);
        }
        Ok(Self { config, layout, names: spec.names, params })
    }

    /// Rebuilds a network from named tensors, checking names and shapes
    /// against the layout implied by `config`.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let (layout, spec) = build_layout(&config);
        if named.len() != spec.names.len() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} parameter tensors, found {}",
                spec.names.len(),
                named.len()
            )));
        }
        let mut params = Vec::with_capacity(named.len());
        for ((name, t), (want_name, want_shape)) in named.into_iter().zip(spec.names.iter().zip(&spec.shapes)) {
            if &name != want_name || t.shape() != want_shape.as_slice() {
                return Err(Error::ConfigMismatch(format!(
                    "tensor {name} {:?} does not match expected {want_name} {want_shape:?}",
                    t.shape()
                )));
            }
            t.check_finite("checkpoint parameter")?;
            params.push(t);
        }
        Ok(Self { config, layout, names: spec.names, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn named_params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.params)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> NuWaveNetwork<U> {
        NuWaveNetwork {
            config: self.config.clone(),
            layout: self.layout.clone(),
            names: self.names.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    fn check_lengths(&self, noisy_len: usize, cond_len: usize) -> Result<()> {
        if noisy_len == 0 || cond_len == 0 || noisy_len != self.config.ratio * cond_len {
            return Err(Error::Shape(format!(
                "noisy input of {noisy_len} samples needs a {}x longer conditioner than {cond_len}",
                self.config.ratio
            )));
        }
        Ok(())
    }

    /// The network evaluated on an arbitrary backend, with `params` the
    /// backend handles for [`Self::params`] in order.
    pub fn forward_on<B: Backend<T>>(
        &self,
        be: &mut B,
        params: &[B::Value],
        y_noisy: &[T],
        y_d: &[T],
        level: NoiseLevel<T>,
    ) -> Result<B::Value> {
        self.check_lengths(y_noisy.len(), y_d.len())?;
        if params.len() != self.params.len() {
            return Err(Error::ConfigMismatch(format!(
                "{} parameter handles for {} tensors",
                params.len(),
                self.params.len()
            )));
        }
        let cfg = &self.config;
        let lay = &self.layout;
        let p = |i: usize| &params[i];
        let c = cfg.channels;
        let len = y_noisy.len();
        let dilations = cfg.dilations();

        let noisy = be.input(Tensor::new(vec![1, len], y_noisy.to_vec())?);
        let cond = be.input(Tensor::new(vec![1, y_d.len()], y_d.to_vec())?);
        let emb = be.input(Tensor::vector(noise_level_embedding(level, cfg))?);

        let x0 = be.conv1d(&noisy, p(lay.input_w), p(lay.input_b), 1)?;
        let mut x = be.silu(&x0)?;

        let e1 = be.linear(&emb, p(lay.emb1_w), p(lay.emb1_b))?;
        let e1 = be.silu(&e1)?;
        let e2 = be.linear(&e1, p(lay.emb2_w), p(lay.emb2_b))?;
        let e = be.silu(&e2)?;

        let up = be.interp(&cond, cfg.ratio, len)?;
        let mut stream = be.conv1d(&up, p(lay.cond_in_w), p(lay.cond_in_b), 1)?;
        let mut contributions = Vec::with_capacity(cfg.n_layers);
        for (slots, &d) in lay.layers.iter().zip(&dilations).rev() {
            let u = be.conv1d(&stream, p(slots.cond_w), p(slots.cond_b), d)?;
            let head = be.narrow(&u, 0, c)?;
            stream = be.tanh(&head)?;
            contributions.push(u);
        }
        contributions.reverse();

        let mut skip_sum: Option<B::Value> = None;
        let res_scale = T::one() / T::lit(2.0).sqrt();
        for ((slots, &d), u) in lay.layers.iter().zip(&dilations).zip(&contributions) {
            let bias = be.linear(&e, p(slots.emb_w), p(slots.emb_b))?;
            let h = be.add_channel_bias(&x, &bias)?;
            let z = be.conv1d(&h, p(slots.dil_w), p(slots.dil_b), d)?;
            let z = be.add(&z, u)?;
            let filter = be.narrow(&z, 0, c)?;
            let filter = be.tanh(&filter)?;
            let gate = be.narrow(&z, c, c)?;
            let gate = be.sigmoid(&gate)?;
            let g = be.mul(&filter, &gate)?;
            let res = be.conv1d(&g, p(slots.res_w), p(slots.res_b), 1)?;
            let skip = be.conv1d(&g, p(slots.skip_w), p(slots.skip_b), 1)?;
            let merged = be.add(&x, &res)?;
            x = be.scale(&merged, res_scale)?;
            skip_sum = Some(match skip_sum {
                None => skip,
                Some(acc) => be.add(&acc, &skip)?,
            });
        }

        let skip_sum = skip_sum.expect("at least one layer");
        let o = be.scale(&skip_sum, T::one() / T::from_usize_lossy(cfg.n_layers).sqrt())?;
        let o = be.conv1d(&o, p(lay.skip_out_w), p(lay.skip_out_b), 1)?;
        let o = be.silu(&o)?;
        let o = be.conv1d(&o, p(lay.out_w), p(lay.out_b), 1)?;
        be.reshape(&o, vec![len])
    }

    /// Eager evaluation: estimated noise with the length of `y_noisy`.
    pub fn forward(&self, y_noisy: &[T], y_d: &[T], level: NoiseLevel<T>) -> Result<Vec<T>> {
        let mut be = Eager;
        let handles: Vec<_> = self.params.iter().map(|t| Backend::<T>::param(&mut be, t)).collect();
        let out = self.forward_on(&mut be, &handles, y_noisy, y_d, level)?;
        let out = std::rc::Rc::try_unwrap(out).unwrap_or_else(|rc| (*rc).clone());
        Ok(out.into_data())
    }

    /// Records the forward pass on `graph`; returns the output and the
    /// parameter handles (in [`Self::params`] order) for differentiation.
    pub fn forward_graph(
        &self,
        graph: &mut Graph<T>,
        y_noisy: &[T],
        y_d: &[T],
        level: NoiseLevel<T>,
    ) -> Result<(Var, Vec<Var>)> {
        let handles: Vec<Var> = self.params.iter().map(|t| graph.param(t)).collect();
        let out = self.forward_on(graph, &handles, y_noisy, y_d, level)?;
        Ok((out, handles))
    }
}
