use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConvLayerConfig, ModelConfig, TemporalPooling, Variant};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::layers::{
    bidirectional_backward, bidirectional_forward, conv_block_backward, conv_block_forward,
    dense_backward, dense_forward, scaled_uniform_init, temporal_mean_pool, temporal_mean_pool_backward, uniform_init, Activation,
    BiConvLstmCache, ConvBlockCache, ConvLstmParams, CONVLSTM_PARAM_NAMES,
};
use crate::scalar::Scalar;
use crate::tensor::{
    conv1d_backward, conv1d_forward, global_spatial_avg_pool, global_spatial_avg_pool_backward,
    relu, relu_backward, Tensor,
};

const DIRECTIONS: [&str; 2] = ["fwd", "bwd"];

fn conv_paths(prefix: &str, i: usize) -> (String, String) {
    (format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias"))
}

fn clstm_prefix(layer: usize, dir: &str) -> String {
    format!("clstm.{layer}.{dir}")
}

/// Initializes every trainable tensor of `config`; deterministic in `seed`.
pub fn build<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    let chain = config.shape_chain()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::new();

    fn add_cnn<T: Scalar>(
        params: &mut ModelParams<T>,
        prefix: &str,
        layers: &[ConvLayerConfig],
        mut c_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<usize> {
        for (i, layer) in layers.iter().enumerate() {
            let spec = layer.spec(c_in);
            let (w, b) = conv_paths(prefix, i);
            let weights = scaled_uniform_init(&spec.weight_dims(), spec.fan_in(), layer.activation.init_gain(), rng);
            params.insert(w, weights)?;
            params.insert(b, Tensor::zeros(&[layer.out_channels]))?;
            c_in = layer.out_channels;
        }
        Ok(c_in)
    }

    let c_spatial = add_cnn(&mut params, "spatial", &config.spatial_cnn, config.input_channels, &mut rng)?;
    match config.variant {
        Variant::Clstm => {
            let h = config.clstm.hidden_channels;
            let mut c_in = c_spatial;
            for l in 0..config.clstm.num_bidirectional_layers {
                for dir in DIRECTIONS {
                    let p = ConvLstmParams::<T>::init(c_in, h, config.clstm.kernel, &mut rng);
                    for (name, t) in p.named() {
                        params.insert(format!("{}.{name}", clstm_prefix(l, dir)), t.clone())?;
                    }
                }
                c_in = 2 * h;
            }
            add_cnn(&mut params, "head", &config.head_cnn, c_in, &mut rng)?;
        }
        Variant::Conv1d => {
            let tc = &config.temporal_conv;
            let dims = [tc.out_channels, c_spatial, tc.kernel];
            let gain = Activation::Relu.init_gain();
            params.insert("temporal.weight", scaled_uniform_init(&dims, c_spatial * tc.kernel, gain, &mut rng))?;
            params.insert("temporal.bias", Tensor::zeros(&[tc.out_channels]))?;
        }
    }
    let f = chain.features;
    let k = config.num_classes;
    params.insert("dense.weight", uniform_init(&[k, f], f, &mut rng))?;
    params.insert("dense.bias", Tensor::zeros(&[k]))?;
    Ok(params)
}

/// Number of scalars `build` creates for `config`, from the config alone.
pub fn parameter_count(config: &ModelConfig) -> Result<usize> {
    let chain = config.shape_chain()?;
    let cnn = |layers: &[ConvLayerConfig], mut c_in: usize| {
        let mut n = 0;
        for l in layers {
            n += l.out_channels * c_in * l.kernel.pow(3) + l.out_channels;
            c_in = l.out_channels;
        }
        (n, c_in)
    };
    let (mut n, c_spatial) = cnn(&config.spatial_cnn, config.input_channels);
    match config.variant {
        Variant::Clstm => {
            let (h, k3) = (config.clstm.hidden_channels, config.clstm.kernel.pow(3));
            let mut c_in = c_spatial;
            for _ in 0..config.clstm.num_bidirectional_layers {
                n += 2 * (4 * h * c_in * k3 + 4 * h * h * k3 + 4 * h);
                c_in = 2 * h;
            }
            n += cnn(&config.head_cnn, c_in).0;
        }
        Variant::Conv1d => {
            let tc = &config.temporal_conv;
            n += tc.out_channels * c_spatial * tc.kernel + tc.out_channels;
        }
    }
    n += config.num_classes * chain.features + config.num_classes;
    Ok(n)
}

fn clstm_params<T: Scalar>(params: &ModelParams<T>, layer: usize, dir: &str) -> Result<ConvLstmParams<T>> {
    let prefix = clstm_prefix(layer, dir);
    let mut p = ConvLstmParams::zeros(1, 1, 1);
    for name in CONVLSTM_PARAM_NAMES {
        *p.get_mut(name).expect("known") = params.get(&format!("{prefix}.{name}"))?.clone();
    }
    p.validate()?;
    Ok(p)
}

enum VariantCache<T> {
    Clstm {
        layers: Vec<BiConvLstmCache<T>>,
        head: Vec<Vec<ConvBlockCache<T>>>,
        head_dims: Vec<usize>,
    },
    Conv1d {
        pooled_dims: Vec<usize>,
        /// `[F, T]` input of the temporal convolution.
        temporal_input: Tensor<T>,
        /// `[C, T]` post-ReLU output.
        temporal_activated: Tensor<T>,
    },
}

/// Everything `backward` needs from one forward pass.
pub struct ForwardCache<T> {
    training: bool,
    variant: Variant,
    steps: usize,
    spatial: Vec<Vec<ConvBlockCache<T>>>,
    inner: VariantCache<T>,
    /// `[T, F]` features entering temporal pooling.
    pool_input: Tensor<T>,
    dense_input: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn training(&self) -> bool {
        self.training
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

fn check_sequence<T: Scalar>(config: &ModelConfig, sequence: &Tensor<T>) -> Result<usize> {
    let d = sequence.dims();
    let [sd, sh, sw] = config.input_spatial;
    if d.len() != 5 || d[1] != config.input_channels || d[2..] != [sd, sh, sw] {
        return Err(Error::invalid(format!(
            "sequence {:?} does not match model input [T, {}, {sd}, {sh}, {sw}]",
            d, config.input_channels
        )));
    }
    Ok(d[0])
}

#[allow(clippy::type_complexity)]
fn cnn_forward<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    prefix: &str,
    layers: &[ConvLayerConfig],
    input: Tensor<T>,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, Vec<ConvBlockCache<T>>)> {
    let mut x = input;
    let mut caches = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let (w, b) = conv_paths(prefix, i);
        let spec = layer.spec(x.dims()[0]);
        let (y, cache) = conv_block_forward(
            &x,
            params.get(&w)?,
            params.get(&b)?,
            &spec,
            layer.activation,
            layer.dropout,
            rng,
            training,
        )?;
        caches.push(cache);
        x = y;
    }
    Ok((x, caches))
}

fn cnn_backward<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &str,
    layers: &[ConvLayerConfig],
    caches: &[ConvBlockCache<T>],
    grad: Tensor<T>,
    grads: &mut ModelParams<T>,
) -> Result<Tensor<T>> {
    let mut g = grad;
    for (i, layer) in layers.iter().enumerate().rev() {
        let (w, b) = conv_paths(prefix, i);
        let cache = &caches[i];
        let spec = layer.spec(cache.input.dims()[0]);
        let cg = conv_block_backward(params.get(&w)?, &spec, cache, &g)?;
        grads.accumulate_at(&w, &cg.weights)?;
        grads.accumulate_at(&b, &cg.bias)?;
        g = cg.input;
    }
    Ok(g)
}

fn pool_forward<T: Scalar>(mode: TemporalPooling, seq: &Tensor<T>) -> Result<Tensor<T>> {
    match mode {
        TemporalPooling::Mean => temporal_mean_pool(seq),
        TemporalPooling::Max => {
            let f = seq.dims()[1];
            let mut out = seq.data()[..f].to_vec();
            for row in seq.data().chunks_exact(f).skip(1) {
                for (o, &x) in out.iter_mut().zip(row) {
                    if x > *o {
                        *o = x;
                    }
                }
            }
            Tensor::new(&[f], out)
        }
    }
}

fn pool_backward<T: Scalar>(mode: TemporalPooling, seq: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    match mode {
        TemporalPooling::Mean => temporal_mean_pool_backward(seq.dims()[0], grad),
        TemporalPooling::Max => {
            let f = seq.dims()[1];
            let mut best = vec![0usize; f];
            for (t, row) in seq.data().chunks_exact(f).enumerate() {
                for (j, &x) in row.iter().enumerate() {
                    if x > seq.data()[best[j] * f + j] {
                        best[j] = t;
                    }
                }
            }
            let mut out = Tensor::zeros(seq.dims());
            for (j, &t) in best.iter().enumerate() {
                out.data_mut()[t * f + j] = grad.data()[j];
            }
            Ok(out)
        }
    }
}

/// Dispatches on `config.variant`.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    sequence: &Tensor<T>,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let steps = check_sequence(config, sequence)?;
    let mut spatial_caches = Vec::with_capacity(steps);
    let mut feats = Vec::with_capacity(steps);
    for t in 0..steps {
        let (y, c) = cnn_forward(params, "spatial", &config.spatial_cnn, sequence.outer(t), training, rng)?;
        feats.push(y);
        spatial_caches.push(c);
    }

    let (pool_input, inner) = match config.variant {
        Variant::Clstm => {
            let mut seq = feats;
            let mut layers = Vec::with_capacity(config.clstm.num_bidirectional_layers);
            for l in 0..config.clstm.num_bidirectional_layers {
                let fwd = clstm_params(params, l, DIRECTIONS[0])?;
                let bwd = clstm_params(params, l, DIRECTIONS[1])?;
                let (out, cache) = bidirectional_forward(&seq, &fwd, &bwd)?;
                layers.push(cache);
                seq = out;
            }
            let mut head = Vec::with_capacity(steps);
            let mut rows = Vec::with_capacity(steps);
            let mut head_dims = Vec::new();
            for x in seq {
                let (y, c) = cnn_forward(params, "head", &config.head_cnn, x, training, rng)?;
                head_dims = y.dims().to_vec();
                let n = y.len();
                rows.push(y.reshape(&[n])?);
                head.push(c);
            }
            (
                Tensor::stack(&rows)?,
                VariantCache::Clstm {
                    layers,
                    head,
                    head_dims,
                },
            )
        }
        Variant::Conv1d => {
            let pooled_dims = feats[0].dims().to_vec();
            let rows = feats
                .iter()
                .map(global_spatial_avg_pool)
                .collect::<Result<Vec<_>>>()?;
            let temporal_input = Tensor::stack(&rows)?.transpose2()?;
            let k = config.temporal_conv.kernel;
            let conv = conv1d_forward(
                &temporal_input,
                params.get("temporal.weight")?,
                params.get("temporal.bias")?,
                1,
                (k - 1) / 2,
            )?;
            let temporal_activated = relu(&conv);
            (
                temporal_activated.transpose2()?,
                VariantCache::Conv1d {
                    pooled_dims,
                    temporal_input,
                    temporal_activated,
                },
            )
        }
    };

    let dense_input = pool_forward(config.temporal_pooling, &pool_input)?;
    let logits = dense_forward(&dense_input, params.get("dense.weight")?, params.get("dense.bias")?)?;
    Ok((
        logits,
        ForwardCache {
            training,
            variant: config.variant,
            steps,
            spatial: spatial_caches,
            inner,
            pool_input,
            dense_input,
        },
    ))
}

fn expect_variant(config: &ModelConfig, v: Variant) -> Result<()> {
    if config.variant != v {
        return Err(Error::invalid(format!(
            "model is configured as {}, not {v}",
            config.variant
        )));
    }
    Ok(())
}

/// Spatial CNN → stacked bidirectional ConvLSTM → head CNN → pool → dense.
pub fn forward_clstm<T: Scalar, R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    sequence: &Tensor<T>,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    expect_variant(config, Variant::Clstm)?;
    forward(config, params, sequence, training, rng)
}

/// Spatial CNN → global average pool → temporal 1-D conv → pool → dense.
pub fn forward_conv1d<T: Scalar, R: Rng + ?Sized>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    sequence: &Tensor<T>,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    expect_variant(config, Variant::Conv1d)?;
    forward(config, params, sequence, training, rng)
}

/// Gradients of `sum(grad_logits ⊙ logits)` for every parameter path.
/// The cache must come from a training-mode forward.
pub fn backward<T: Scalar>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    grad_logits: &Tensor<T>,
) -> Result<ModelParams<T>> {
    if !cache.training {
        return Err(Error::InvalidState(
            "backward needs a cache from a training-mode forward".into(),
        ));
    }
    if cache.variant != config.variant {
        return Err(Error::InvalidState(format!(
            "cache was produced by a {} model, config is {}",
            cache.variant, config.variant
        )));
    }
    let mut grads = params.zeros_like();
    let dg = dense_backward(&cache.dense_input, params.get("dense.weight")?, grad_logits)?;
    grads.accumulate_at("dense.weight", &dg.weights)?;
    grads.accumulate_at("dense.bias", &dg.bias)?;
    let g_pool = pool_backward(config.temporal_pooling, &cache.pool_input, &dg.input)?;
    let steps = cache.steps;

    let g_spatial: Vec<Tensor<T>> = match &cache.inner {
        VariantCache::Clstm {
            layers,
            head,
            head_dims,
        } => {
            let mut g_seq = Vec::with_capacity(steps);
            for t in 0..steps {
                let g = g_pool.outer(t).reshape(head_dims)?;
                g_seq.push(cnn_backward(params, "head", &config.head_cnn, &head[t], g, &mut grads)?);
            }
            for (l, layer_cache) in layers.iter().enumerate().rev() {
                let fwd = clstm_params(params, l, DIRECTIONS[0])?;
                let bwd = clstm_params(params, l, DIRECTIONS[1])?;
                let bg = bidirectional_backward(&fwd, &bwd, layer_cache, &g_seq)?;
                for (dir, p) in DIRECTIONS.iter().zip([&bg.forward, &bg.backward]) {
                    let prefix = clstm_prefix(l, dir);
                    for (name, t) in p.named() {
                        grads.accumulate_at(&format!("{prefix}.{name}"), t)?;
                    }
                }
                g_seq = bg.input;
            }
            g_seq
        }
        VariantCache::Conv1d {
            pooled_dims,
            temporal_input,
            temporal_activated,
        } => {
            let g = relu_backward(temporal_activated, &g_pool.transpose2()?)?;
            let k = config.temporal_conv.kernel;
            let cg = conv1d_backward(temporal_input, params.get("temporal.weight")?, 1, (k - 1) / 2, &g)?;
            grads.accumulate_at("temporal.weight", &cg.weights)?;
            grads.accumulate_at("temporal.bias", &cg.bias)?;
            let g_rows = cg.input.transpose2()?;
            (0..steps)
                .map(|t| global_spatial_avg_pool_backward(pooled_dims, &g_rows.outer(t)))
                .collect::<Result<Vec<_>>>()?
        }
    };

    for (t, g) in g_spatial.into_iter().enumerate() {
        cnn_backward(params, "spatial", &config.spatial_cnn, &cache.spatial[t], g, &mut grads)?;
    }
    Ok(grads)
}

/// A configuration bundled with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Network<T> {
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = build(&config, seed)?;
        Ok(Network { config, params })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        sequence: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        forward(&self.config, &self.params, sequence, training, rng)
    }

    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<ModelParams<T>> {
        backward(&self.config, &self.params, cache, grad_logits)
    }

    /// Eval-mode logits; dropout is the identity so no randomness is drawn.
    pub fn logits(&self, sequence: &Tensor<T>) -> Result<Tensor<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(sequence, false, &mut rng)?.0)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}
