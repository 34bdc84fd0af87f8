//! 64-bit central finite-difference checks of every backward pass.
//!
//! Each check contracts the component's output with a fixed random tensor
//! `r`, so the scalar objective is `L = sum(r ⊙ f(x))` and the analytic
//! gradient is `backward(r)`. Up to [`SAMPLES`] scalars per input and
//! parameter tensor are perturbed by ±[`STEP`].

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::{
    bidirectional_backward, bidirectional_forward, conv_block_backward, conv_block_forward,
    convlstm_backward_through_time, convlstm_sequence_forward, dense_backward, dense_forward,
    temporal_mean_pool, temporal_mean_pool_backward, Activation, ConvLstmParams, CONVLSTM_PARAM_NAMES,
};
use crate::models::{backward, build, forward, ModelConfig, ModelParams, Variant};
use crate::tensor::{
    conv1d_backward, conv1d_forward, conv3d_backward, conv3d_forward, dropout_backward,
    dropout_forward, global_spatial_avg_pool, global_spatial_avg_pool_backward, hadamard,
    hadamard_backward, relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward,
    ConvGrads, ConvSpec, Tensor,
};

pub const STEP: f64 = 1e-5;
pub const SAMPLES: usize = 24;
pub const TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error, so exact zeros compare absolutely.
pub const FLOOR: f64 = 1e-6;

pub const COMPONENTS: [&str; 12] = [
    "conv3d",
    "conv1d",
    "elementwise",
    "pool",
    "dropout",
    "dense",
    "temporal",
    "conv_block",
    "convlstm",
    "bidirectional",
    "model-clstm",
    "model-conv1d",
];

pub type Conv3dBackward =
    fn(&Tensor<f64>, &Tensor<f64>, &ConvSpec, &Tensor<f64>) -> Result<ConvGrads<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentReport {
    pub component: String,
    pub max_rel_error: f64,
    /// Tensor holding the worst scalar.
    pub worst: String,
    pub scalars_checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

struct Checker {
    rng: ChaCha8Rng,
    max_rel: f64,
    worst: String,
    checked: usize,
}

impl Checker {
    fn new(seed: u64) -> Self {
        Checker {
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_rel: 0.0,
            worst: String::new(),
            checked: 0,
        }
    }

    fn random(&mut self, dims: &[usize]) -> Tensor<f64> {
        let rng = &mut self.rng;
        Tensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    /// Compares `analytic` with central differences of `objective` around `x`.
    fn check(
        &mut self,
        name: &str,
        x: &Tensor<f64>,
        analytic: &Tensor<f64>,
        objective: &mut dyn FnMut(&Tensor<f64>) -> Result<f64>,
    ) -> Result<()> {
        x.expect_same_dims(analytic)?;
        let n = x.len();
        let picks = if n <= SAMPLES {
            (0..n).collect::<Vec<_>>()
        } else {
            sample(&mut self.rng, n, SAMPLES).into_vec()
        };
        let mut probe = x.clone();
        for i in picks {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + STEP;
            let plus = objective(&probe)?;
            probe.data_mut()[i] = orig - STEP;
            let minus = objective(&probe)?;
            probe.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let rel = relative_error(analytic.data()[i], numeric);
            self.checked += 1;
            if rel > self.max_rel || self.worst.is_empty() {
                self.max_rel = self.max_rel.max(rel);
                self.worst = name.to_string();
            }
        }
        Ok(())
    }

    fn finish(self, component: &str) -> ComponentReport {
        ComponentReport {
            component: component.to_string(),
            max_rel_error: self.max_rel,
            worst: self.worst,
            scalars_checked: self.checked,
            passed: self.max_rel <= TOLERANCE,
        }
    }
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    a.expect_same_dims(b)?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum())
}

fn dot_seq(a: &[Tensor<f64>], b: &[Tensor<f64>]) -> Result<f64> {
    a.iter().zip(b).map(|(x, y)| dot(x, y)).sum()
}

/// Conv3d gradients computed by `backward_fn`, so a faulty implementation can be checked.
pub fn check_conv3d_with(backward_fn: Conv3dBackward, seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    for spec in [ConvSpec::cubic(2, 3, 3, 2, 1), ConvSpec::same(3, 2, 3), ConvSpec::cubic(2, 2, 2, 1, 0)] {
        let x = c.random(&[spec.in_channels, 5, 4, 5]);
        let w = c.random(&spec.weight_dims());
        let b = c.random(&[spec.out_channels]);
        let r = c.random(&conv3d_forward(&x, &w, &b, &spec)?.dims().to_vec());
        let g = backward_fn(&x, &w, &spec, &r)?;
        c.check("input", &x, &g.input, &mut |p| dot(&conv3d_forward(p, &w, &b, &spec)?, &r))?;
        c.check("weights", &w, &g.weights, &mut |p| dot(&conv3d_forward(&x, p, &b, &spec)?, &r))?;
        c.check("bias", &b, &g.bias, &mut |p| dot(&conv3d_forward(&x, &w, p, &spec)?, &r))?;
    }
    Ok(c.finish("conv3d"))
}

fn check_conv1d(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    for (stride, padding, k) in [(1, 1, 3), (2, 0, 2), (1, 0, 1)] {
        let x = c.random(&[3, 7]);
        let w = c.random(&[2, 3, k]);
        let b = c.random(&[2]);
        let r = c.random(&conv1d_forward(&x, &w, &b, stride, padding)?.dims().to_vec());
        let g = conv1d_backward(&x, &w, stride, padding, &r)?;
        c.check("input", &x, &g.input, &mut |p| dot(&conv1d_forward(p, &w, &b, stride, padding)?, &r))?;
        c.check("weights", &w, &g.weights, &mut |p| dot(&conv1d_forward(&x, p, &b, stride, padding)?, &r))?;
        c.check("bias", &b, &g.bias, &mut |p| dot(&conv1d_forward(&x, &w, p, stride, padding)?, &r))?;
    }
    Ok(c.finish("conv1d"))
}

fn check_elementwise(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let dims = [2, 3, 4];
    let x = c.random(&dims).map(|v| 3.0 * v);
    let r = c.random(&dims);
    let g = sigmoid_backward(&sigmoid(&x), &r)?;
    c.check("sigmoid", &x, &g, &mut |p| dot(&sigmoid(p), &r))?;
    let g = tanh_backward(&tanh(&x), &r)?;
    c.check("tanh", &x, &g, &mut |p| dot(&tanh(p), &r))?;
    // keep ReLU inputs away from the kink
    let xr = x.map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
    let g = relu_backward(&relu(&xr), &r)?;
    c.check("relu", &xr, &g, &mut |p| dot(&relu(p), &r))?;
    let y = c.random(&dims);
    let (ga, gb) = hadamard_backward(&x, &y, &r)?;
    c.check("hadamard.a", &x, &ga, &mut |p| dot(&hadamard(p, &y)?, &r))?;
    c.check("hadamard.b", &y, &gb, &mut |p| dot(&hadamard(&x, p)?, &r))?;
    Ok(c.finish("elementwise"))
}

fn check_pool(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let x = c.random(&[3, 2, 3, 4]);
    let r = c.random(&[3]);
    let g = global_spatial_avg_pool_backward(x.dims(), &r)?;
    c.check("input", &x, &g, &mut |p| dot(&global_spatial_avg_pool(p)?, &r))?;
    Ok(c.finish("pool"))
}

fn check_dropout(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let x = c.random(&[4, 5]);
    let r = c.random(&[4, 5]);
    let run = |p: &Tensor<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        dropout_forward(p, 0.3, &mut rng, true)
    };
    let (_, mask) = run(&x)?;
    let g = dropout_backward(&mask, &r)?;
    c.check("input", &x, &g, &mut |p| dot(&run(p)?.0, &r))?;
    Ok(c.finish("dropout"))
}

fn check_dense(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let x = c.random(&[7]);
    let w = c.random(&[3, 7]);
    let b = c.random(&[3]);
    let r = c.random(&[3]);
    let g = dense_backward(&x, &w, &r)?;
    c.check("input", &x, &g.input, &mut |p| dot(&dense_forward(p, &w, &b)?, &r))?;
    c.check("weights", &w, &g.weights, &mut |p| dot(&dense_forward(&x, p, &b)?, &r))?;
    c.check("bias", &b, &g.bias, &mut |p| dot(&dense_forward(&x, &w, p)?, &r))?;
    Ok(c.finish("dense"))
}

fn check_temporal(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let x = c.random(&[5, 4]);
    let r = c.random(&[4]);
    let g = temporal_mean_pool_backward(5, &r)?;
    c.check("input", &x, &g, &mut |p| dot(&temporal_mean_pool(p)?, &r))?;
    Ok(c.finish("temporal"))
}

fn check_conv_block(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let spec = ConvSpec::cubic(2, 3, 3, 2, 1);
    let x = c.random(&[2, 4, 5, 4]);
    let w = c.random(&spec.weight_dims());
    let b = c.random(&[3]);
    for activation in [Activation::Relu, Activation::Identity] {
        let run = |x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
            conv_block_forward(x, w, b, &spec, activation, 0.25, &mut rng, true)
        };
        let (y, cache) = run(&x, &w, &b)?;
        let r = c.random(y.dims());
        let g = conv_block_backward(&w, &spec, &cache, &r)?;
        c.check("input", &x, &g.input, &mut |p| dot(&run(p, &w, &b)?.0, &r))?;
        c.check("weights", &w, &g.weights, &mut |p| dot(&run(&x, p, &b)?.0, &r))?;
        c.check("bias", &b, &g.bias, &mut |p| dot(&run(&x, &w, p)?.0, &r))?;
    }
    Ok(c.finish("conv_block"))
}

fn random_clstm(c: &mut Checker, in_channels: usize, hidden: usize) -> ConvLstmParams<f64> {
    let mut p = ConvLstmParams::init(in_channels, hidden, 3, &mut c.rng);
    for name in CONVLSTM_PARAM_NAMES {
        if name.starts_with("b_") {
            let t = p.get_mut(name).expect("known name");
            let rng = &mut c.rng;
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
    }
    p
}

fn with_param(p: &ConvLstmParams<f64>, name: &str, value: &Tensor<f64>) -> ConvLstmParams<f64> {
    let mut q = p.clone();
    *q.get_mut(name).expect("known name") = value.clone();
    q
}

fn check_convlstm(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let (steps, cin, hidden) = (3, 2, 3);
    let params = random_clstm(&mut c, cin, hidden);
    let xs: Vec<Tensor<f64>> = (0..steps).map(|_| c.random(&[cin, 3, 3, 3])).collect();
    let rs: Vec<Tensor<f64>> = (0..steps).map(|_| c.random(&[hidden, 3, 3, 3])).collect();
    let (_, cache) = convlstm_sequence_forward(&xs, &params)?;
    let (gx, gp) = convlstm_backward_through_time(&params, &cache, &rs)?;
    for t in 0..steps {
        c.check(&format!("x[{t}]"), &xs[t], &gx[t], &mut |p| {
            let mut seq = xs.clone();
            seq[t] = p.clone();
            dot_seq(&convlstm_sequence_forward(&seq, &params)?.0, &rs)
        })?;
    }
    for name in CONVLSTM_PARAM_NAMES {
        let value = params.get(name).expect("known name");
        let grad = gp.get(name).expect("known name");
        c.check(name, value, grad, &mut |p| {
            dot_seq(&convlstm_sequence_forward(&xs, &with_param(&params, name, p))?.0, &rs)
        })?;
    }
    Ok(c.finish("convlstm"))
}

fn check_bidirectional(seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let (steps, cin, hidden) = (3, 2, 2);
    let fwd = random_clstm(&mut c, cin, hidden);
    let bwd = random_clstm(&mut c, cin, hidden);
    let xs: Vec<Tensor<f64>> = (0..steps).map(|_| c.random(&[cin, 2, 3, 2])).collect();
    let rs: Vec<Tensor<f64>> = (0..steps).map(|_| c.random(&[2 * hidden, 2, 3, 2])).collect();
    let (_, cache) = bidirectional_forward(&xs, &fwd, &bwd)?;
    let g = bidirectional_backward(&fwd, &bwd, &cache, &rs)?;
    for t in 0..steps {
        c.check(&format!("x[{t}]"), &xs[t], &g.input[t], &mut |p| {
            let mut seq = xs.clone();
            seq[t] = p.clone();
            dot_seq(&bidirectional_forward(&seq, &fwd, &bwd)?.0, &rs)
        })?;
    }
    for name in CONVLSTM_PARAM_NAMES {
        c.check(
            &format!("fwd.{name}"),
            fwd.get(name).expect("known name"),
            g.forward.get(name).expect("known name"),
            &mut |p| dot_seq(&bidirectional_forward(&xs, &with_param(&fwd, name, p), &bwd)?.0, &rs),
        )?;
        c.check(
            &format!("bwd.{name}"),
            bwd.get(name).expect("known name"),
            g.backward.get(name).expect("known name"),
            &mut |p| dot_seq(&bidirectional_forward(&xs, &fwd, &with_param(&bwd, name, p))?.0, &rs),
        )?;
    }
    Ok(c.finish("bidirectional"))
}

/// End-to-end check of a tiny model in training mode with fixed dropout masks.
fn check_model(variant: Variant, seed: u64) -> Result<ComponentReport> {
    let mut c = Checker::new(seed);
    let config = ModelConfig::tiny(variant);
    let mut params: ModelParams<f64> = build(&config, seed)?;
    // non-zero biases so every bias gradient path is exercised
    for (_, t) in params.iter_mut() {
        if t.rank() == 1 {
            let rng = &mut c.rng;
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.2..0.2));
        }
    }
    let [d, h, w] = config.input_spatial;
    let seq = c.random(&[config.crop_length, config.input_channels, d, h, w]);
    let r = c.random(&[config.num_classes]);
    let run = |params: &ModelParams<f64>, seq: &Tensor<f64>| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1234);
        forward(&config, params, seq, true, &mut rng)
    };
    let (_, cache) = run(&params, &seq)?;
    let grads = backward(&config, &params, &cache, &r)?;
    let paths: Vec<String> = params.paths().map(str::to_string).collect();
    for path in &paths {
        let value = params.get(path)?.clone();
        let mut probe = params.clone();
        c.check(path, &value, grads.get(path)?, &mut |p| {
            *probe.get_mut(path)? = p.clone();
            dot(&run(&probe, &seq)?.0, &r)
        })?;
    }
    let name = match variant {
        Variant::Clstm => "model-clstm",
        Variant::Conv1d => "model-conv1d",
    };
    Ok(c.finish(name))
}

pub fn check_component(component: &str, seed: u64) -> Result<ComponentReport> {
    match component {
        "conv3d" => check_conv3d_with(conv3d_backward, seed),
        "conv1d" => check_conv1d(seed),
        "elementwise" => check_elementwise(seed),
        "pool" => check_pool(seed),
        "dropout" => check_dropout(seed),
        "dense" => check_dense(seed),
        "temporal" => check_temporal(seed),
        "conv_block" => check_conv_block(seed),
        "convlstm" => check_convlstm(seed),
        "bidirectional" => check_bidirectional(seed),
        "model-clstm" => check_model(Variant::Clstm, seed),
        "model-conv1d" => check_model(Variant::Conv1d, seed),
        other => Err(Error::Config(format!(
            "unknown gradcheck component {other:?}; expected one of {}",
            COMPONENTS.join(", ")
        ))),
    }
}

pub fn check_all(seed: u64) -> Result<Vec<ComponentReport>> {
    COMPONENTS.iter().map(|c| check_component(c, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cheap_components_pass() {
        for name in ["conv1d", "elementwise", "pool", "dropout", "dense", "temporal"] {
            let r = check_component(name, 1).unwrap();
            assert!(r.passed, "{r:?}");
            assert!(r.scalars_checked > 0);
        }
    }

    #[test]
    fn unknown_component() {
        assert!(matches!(check_component("gru", 0), Err(Error::Config(_))));
    }
}
