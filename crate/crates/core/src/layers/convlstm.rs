//! Volumetric convolutional LSTM cell.
//!
//! ```text
//! i_t = σ(W_xi * X_t + W_hi * H_{t-1} + b_i)
//! f_t = σ(W_xf * X_t + W_hf * H_{t-1} + b_f)
//! o_t = σ(W_xo * X_t + W_ho * H_{t-1} + b_o)
//! g_t = tanh(W_xc * X_t + W_hc * H_{t-1} + b_c)
//! C_t = f_t ⊙ C_{t-1} + i_t ⊙ g_t
//! H_t = o_t ⊙ tanh(C_t)
//! ```
//!
//! All eight kernels are stride-1 same-padded 3-D convolutions, so hidden and
//! cell states keep the input's spatial extent. Internally the four input and
//! four recurrent kernels are packed into one `[4h, C_in + h, k, k, k]` kernel
//! applied to the channel concatenation `[X_t; H_{t-1}]`.

use rand::Rng;

use super::uniform_init;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{conv3d_backward, conv3d_forward, sigmoid, tanh, ConvSpec, Tensor};

/// Gate order used for packing: input, forget, output, candidate.
const GATES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams<T> {
    pub w_xi: Tensor<T>,
    pub w_xf: Tensor<T>,
    pub w_xo: Tensor<T>,
    pub w_xc: Tensor<T>,
    pub w_hi: Tensor<T>,
    pub w_hf: Tensor<T>,
    pub w_ho: Tensor<T>,
    pub w_hc: Tensor<T>,
    pub b_i: Tensor<T>,
    pub b_f: Tensor<T>,
    pub b_o: Tensor<T>,
    pub b_c: Tensor<T>,
}

pub const PARAM_NAMES: [&str; 12] = [
    "w_xi", "w_xf", "w_xo", "w_xc", "w_hi", "w_hf", "w_ho", "w_hc", "b_i", "b_f", "b_o", "b_c",
];

impl<T: Scalar> ConvLstmParams<T> {
    pub fn zeros(in_channels: usize, hidden: usize, kernel: usize) -> Self {
        let wx = [hidden, in_channels, kernel, kernel, kernel];
        let wh = [hidden, hidden, kernel, kernel, kernel];
        ConvLstmParams {
            w_xi: Tensor::zeros(&wx),
            w_xf: Tensor::zeros(&wx),
            w_xo: Tensor::zeros(&wx),
            w_xc: Tensor::zeros(&wx),
            w_hi: Tensor::zeros(&wh),
            w_hf: Tensor::zeros(&wh),
            w_ho: Tensor::zeros(&wh),
            w_hc: Tensor::zeros(&wh),
            b_i: Tensor::zeros(&[hidden]),
            b_f: Tensor::zeros(&[hidden]),
            b_o: Tensor::zeros(&[hidden]),
            b_c: Tensor::zeros(&[hidden]),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` kernels, forget bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(in_channels: usize, hidden: usize, kernel: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(in_channels, hidden, kernel);
        let k3 = kernel * kernel * kernel;
        for name in &PARAM_NAMES[..8] {
            let t = p.get_mut(name).expect("known name");
            let fan_in = t.dims()[1] * k3;
            *t = uniform_init(t.dims(), fan_in, rng);
        }
        p.b_f = Tensor::full(&[hidden], T::one());
        p
    }

    pub fn hidden(&self) -> usize {
        self.b_i.len()
    }

    pub fn in_channels(&self) -> usize {
        self.w_xi.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.w_xi.dims()[2]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        Some(match name {
            "w_xi" => &self.w_xi,
            "w_xf" => &self.w_xf,
            "w_xo" => &self.w_xo,
            "w_xc" => &self.w_xc,
            "w_hi" => &self.w_hi,
            "w_hf" => &self.w_hf,
            "w_ho" => &self.w_ho,
            "w_hc" => &self.w_hc,
            "b_i" => &self.b_i,
            "b_f" => &self.b_f,
            "b_o" => &self.b_o,
            "b_c" => &self.b_c,
            _ => return None,
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        Some(match name {
            "w_xi" => &mut self.w_xi,
            "w_xf" => &mut self.w_xf,
            "w_xo" => &mut self.w_xo,
            "w_xc" => &mut self.w_xc,
            "w_hi" => &mut self.w_hi,
            "w_hf" => &mut self.w_hf,
            "w_ho" => &mut self.w_ho,
            "w_hc" => &mut self.w_hc,
            "b_i" => &mut self.b_i,
            "b_f" => &mut self.b_f,
            "b_o" => &mut self.b_o,
            "b_c" => &mut self.b_c,
            _ => return None,
        })
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor<T>)> {
        PARAM_NAMES.iter().map(move |&n| (n, self.get(n).expect("known name")))
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h, k) = (self.in_channels(), self.hidden(), self.kernel());
        if k % 2 == 0 {
            return Err(Error::invalid(format!("ConvLSTM kernel must be odd, got {k}")));
        }
        let wx = [h, c, k, k, k];
        let wh = [h, h, k, k, k];
        for (name, t) in self.named() {
            let expected: &[usize] = match name.as_bytes()[..3] {
                [b'w', b'_', b'x'] => &wx,
                [b'w', b'_', b'h'] => &wh,
                _ => &[h],
            };
            if t.dims() != expected {
                return Err(Error::invalid(format!(
                    "ConvLSTM parameter {name} has dims {:?}, expected {expected:?}",
                    t.dims()
                )));
            }
        }
        Ok(())
    }

    fn pack(&self) -> Result<Packed<T>> {
        self.validate()?;
        let (c, h, k) = (self.in_channels(), self.hidden(), self.kernel());
        let k3 = k * k * k;
        let (xs, hs) = (c * k3, h * k3);
        let mut w = Vec::with_capacity(GATES * h * (xs + hs));
        let mut b = Vec::with_capacity(GATES * h);
        let gates = [
            (&self.w_xi, &self.w_hi, &self.b_i),
            (&self.w_xf, &self.w_hf, &self.b_f),
            (&self.w_xo, &self.w_ho, &self.b_o),
            (&self.w_xc, &self.w_hc, &self.b_c),
        ];
        for (wx, wh, bias) in gates {
            for o in 0..h {
                w.extend_from_slice(&wx.data()[o * xs..(o + 1) * xs]);
                w.extend_from_slice(&wh.data()[o * hs..(o + 1) * hs]);
            }
            b.extend_from_slice(bias.data());
        }
        let spec = ConvSpec::same(c + h, GATES * h, k);
        Ok(Packed {
            weights: Tensor::new(&spec.weight_dims(), w)?,
            bias: Tensor::new(&[GATES * h], b)?,
            spec,
            in_channels: c,
            hidden: h,
        })
    }

    fn unpack(packed_w: &Tensor<T>, packed_b: &Tensor<T>, c: usize, h: usize, k: usize) -> Result<Self> {
        let k3 = k * k * k;
        let (xs, hs) = (c * k3, h * k3);
        let mut out = Self::zeros(c, h, k);
        let names = [
            ("w_xi", "w_hi", "b_i"),
            ("w_xf", "w_hf", "b_f"),
            ("w_xo", "w_ho", "b_o"),
            ("w_xc", "w_hc", "b_c"),
        ];
        let w = packed_w.data();
        for (q, (nx, nh, nb)) in names.into_iter().enumerate() {
            let mut wx = Vec::with_capacity(h * xs);
            let mut wh = Vec::with_capacity(h * hs);
            for o in 0..h {
                let row = &w[(q * h + o) * (xs + hs)..(q * h + o + 1) * (xs + hs)];
                wx.extend_from_slice(&row[..xs]);
                wh.extend_from_slice(&row[xs..]);
            }
            *out.get_mut(nx).expect("known") = Tensor::new(&[h, c, k, k, k], wx)?;
            *out.get_mut(nh).expect("known") = Tensor::new(&[h, h, k, k, k], wh)?;
            *out.get_mut(nb).expect("known") =
                Tensor::new(&[h], packed_b.data()[q * h..(q + 1) * h].to_vec())?;
        }
        Ok(out)
    }
}

struct Packed<T> {
    weights: Tensor<T>,
    bias: Tensor<T>,
    spec: ConvSpec,
    in_channels: usize,
    hidden: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState<T> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
}

impl<T: Scalar> ConvLstmState<T> {
    pub fn zeros(hidden: usize, spatial: [usize; 3]) -> Self {
        let dims = [hidden, spatial[0], spatial[1], spatial[2]];
        ConvLstmState {
            h: Tensor::zeros(&dims),
            c: Tensor::zeros(&dims),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateActivations<T> {
    pub i: Tensor<T>,
    pub f: Tensor<T>,
    pub o: Tensor<T>,
    /// Candidate `tanh(W_xc * X_t + W_hc * H_{t-1} + b_c)`.
    pub g: Tensor<T>,
}

fn step_packed<T: Scalar>(
    x: &Tensor<T>,
    prev: &ConvLstmState<T>,
    packed: &Packed<T>,
) -> Result<(ConvLstmState<T>, GateActivations<T>, Tensor<T>)> {
    let xd = x.dims();
    if xd.len() != 4 || xd[0] != packed.in_channels {
        return Err(Error::invalid(format!(
            "ConvLSTM input {:?} does not have {} channels",
            xd, packed.in_channels
        )));
    }
    if prev.h.dims() != prev.c.dims()
        || prev.h.dims()[0] != packed.hidden
        || prev.h.dims()[1..] != xd[1..]
    {
        return Err(Error::invalid(format!(
            "ConvLSTM state {:?}/{:?} incompatible with input {:?} and hidden {}",
            prev.h.dims(),
            prev.c.dims(),
            xd,
            packed.hidden
        )));
    }
    let z = Tensor::concat_outer(&[x, &prev.h])?;
    let pre = conv3d_forward(&z, &packed.weights, &packed.bias, &packed.spec)?;
    let h = packed.hidden;
    let mut parts = pre.split_outer(&[h; GATES])?.into_iter();
    let mut next = || parts.next().expect("four gates");
    let i = sigmoid(&next());
    let f = sigmoid(&next());
    let o = sigmoid(&next());
    let g = tanh(&next());

    let mut c = prev.c.clone();
    for (((cv, &fv), &iv), &gv) in c.data_mut().iter_mut().zip(f.data()).zip(i.data()).zip(g.data()) {
        *cv = fv * *cv + iv * gv;
    }
    let h_next = c.zip_map(&o, |cv, ov| ov * cv.tanh())?;
    Ok((ConvLstmState { h: h_next, c }, GateActivations { i, f, o, g }, z))
}

/// One cell update; returns the new state and the gate activations.
pub fn convlstm_step<T: Scalar>(
    x: &Tensor<T>,
    prev: &ConvLstmState<T>,
    params: &ConvLstmParams<T>,
) -> Result<(ConvLstmState<T>, GateActivations<T>)> {
    let packed = params.pack()?;
    let (state, gates, _) = step_packed(x, prev, &packed)?;
    Ok((state, gates))
}

struct StepCache<T> {
    /// `[X_t; H_{t-1}]`.
    z: Tensor<T>,
    gates: GateActivations<T>,
    c_prev: Tensor<T>,
    tanh_c: Tensor<T>,
}

pub struct ConvLstmCache<T> {
    steps: Vec<StepCache<T>>,
    in_channels: usize,
    hidden: usize,
    kernel: usize,
}

impl<T> ConvLstmCache<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs the cell over `sequence` from a zero state, returning every `H_t`.
pub fn convlstm_sequence_forward<T: Scalar>(
    sequence: &[Tensor<T>],
    params: &ConvLstmParams<T>,
) -> Result<(Vec<Tensor<T>>, ConvLstmCache<T>)> {
    let first = sequence
        .first()
        .ok_or_else(|| Error::invalid("ConvLSTM sequence must have at least one step"))?;
    if first.rank() != 4 {
        return Err(Error::invalid(format!(
            "ConvLSTM steps must be [C, D, H, W], got {:?}",
            first.dims()
        )));
    }
    let packed = params.pack()?;
    let sp = [first.dims()[1], first.dims()[2], first.dims()[3]];
    let mut state = ConvLstmState::zeros(packed.hidden, sp);
    let mut outputs = Vec::with_capacity(sequence.len());
    let mut steps = Vec::with_capacity(sequence.len());
    for x in sequence {
        let (next, gates, z) = step_packed(x, &state, &packed)?;
        let c_prev = std::mem::replace(&mut state, next).c;
        steps.push(StepCache {
            z,
            gates,
            c_prev,
            tanh_c: state.c.map(|v| v.tanh()),
        });
        outputs.push(state.h.clone());
    }
    Ok((
        outputs,
        ConvLstmCache {
            steps,
            in_channels: packed.in_channels,
            hidden: packed.hidden,
            kernel: params.kernel(),
        },
    ))
}

/// Backpropagation through time. `grad_h[t]` is the loss gradient flowing
/// into `H_t` from outside the recurrence. Returns the gradient for each
/// input step and the parameter gradients summed over all steps.
pub fn convlstm_backward_through_time<T: Scalar>(
    params: &ConvLstmParams<T>,
    cache: &ConvLstmCache<T>,
    grad_h: &[Tensor<T>],
) -> Result<(Vec<Tensor<T>>, ConvLstmParams<T>)> {
    if grad_h.len() != cache.steps.len() {
        return Err(Error::InvalidState(format!(
            "ConvLSTM cache holds {} steps but {} output gradients were given",
            cache.steps.len(),
            grad_h.len()
        )));
    }
    if params.in_channels() != cache.in_channels
        || params.hidden() != cache.hidden
        || params.kernel() != cache.kernel
    {
        return Err(Error::InvalidState(
            "ConvLSTM cache was produced with different parameter shapes".into(),
        ));
    }
    let packed = params.pack()?;
    let (c, h) = (cache.in_channels, cache.hidden);
    let mut gw = Tensor::zeros(packed.weights.dims());
    let mut gb = Tensor::zeros(packed.bias.dims());
    let mut grad_x = vec![None; grad_h.len()];
    let state_dims = cache.steps[0].c_prev.dims().to_vec();
    let mut dh_next = Tensor::<T>::zeros(&state_dims);
    let mut dc_next = Tensor::<T>::zeros(&state_dims);
    let one = T::one();

    for (t, step) in cache.steps.iter().enumerate().rev() {
        grad_h[t].expect_same_dims(&dh_next)?;
        let n = dh_next.len();
        let GateActivations { i, f, o, g } = &step.gates;
        let (i, f, o, g) = (i.data(), f.data(), o.data(), g.data());
        let tc = step.tanh_c.data();
        let cp = step.c_prev.data();
        let gh = grad_h[t].data();
        let mut pre = vec![T::zero(); GATES * n];
        let (da_i, rest) = pre.split_at_mut(n);
        let (da_f, rest) = rest.split_at_mut(n);
        let (da_o, da_c) = rest.split_at_mut(n);
        for e in 0..n {
            let dh = gh[e] + dh_next.data()[e];
            let dc = dc_next.data()[e] + dh * o[e] * (one - tc[e] * tc[e]);
            da_o[e] = dh * tc[e] * o[e] * (one - o[e]);
            da_i[e] = dc * g[e] * i[e] * (one - i[e]);
            da_f[e] = dc * cp[e] * f[e] * (one - f[e]);
            da_c[e] = dc * i[e] * (one - g[e] * g[e]);
            dc_next.data_mut()[e] = dc * f[e];
        }
        let mut pre_dims = state_dims.clone();
        pre_dims[0] = GATES * h;
        let grads = conv3d_backward(&step.z, &packed.weights, &packed.spec, &Tensor::new(&pre_dims, pre)?)?;
        gw.accumulate(&grads.weights)?;
        gb.accumulate(&grads.bias)?;
        let mut split = grads.input.split_outer(&[c, h])?.into_iter();
        grad_x[t] = split.next();
        dh_next = split.next().expect("hidden part");
    }
    let grads = ConvLstmParams::unpack(&gw, &gb, c, h, cache.kernel)?;
    Ok((grad_x.into_iter().map(|g| g.expect("filled")).collect(), grads))
}
