//! Scalar transcriptions and randomized fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volstm::layers::{convlstm_step, ConvLstmParams, ConvLstmState};
use volstm::tensor::{conv3d_forward, ConvSpec};
use volstm::Tensor;

pub fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
}

/// Seven nested loops over (out channel, z, y, x, in channel, kz, ky, kx) with zero padding.
pub fn naive_conv3d(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, spec: &ConvSpec) -> Tensor<f64> {
    let [c_in, d, h, wd] = [x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]];
    let n = [d, h, wd];
    let out: Vec<usize> = (0..3)
        .map(|a| (n[a] + 2 * spec.padding[a] - spec.kernel[a]) / spec.stride[a] + 1)
        .collect();
    let mut y = Tensor::zeros(&[spec.out_channels, out[0], out[1], out[2]]);
    for o in 0..spec.out_channels {
        for oz in 0..out[0] {
            for oy in 0..out[1] {
                for ox in 0..out[2] {
                    let mut acc = b.data()[o];
                    for c in 0..c_in {
                        for kz in 0..spec.kernel[0] {
                            for ky in 0..spec.kernel[1] {
                                for kx in 0..spec.kernel[2] {
                                    let iz = (oz * spec.stride[0] + kz) as isize - spec.padding[0] as isize;
                                    let iy = (oy * spec.stride[1] + ky) as isize - spec.padding[1] as isize;
                                    let ix = (ox * spec.stride[2] + kx) as isize - spec.padding[2] as isize;
                                    if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += w.get(&[o, c, kz, ky, kx])
                                        * x.get(&[c, iz as usize, iy as usize, ix as usize]);
                                }
                            }
                        }
                    }
                    y.set(&[o, oz, oy, ox], acc);
                }
            }
        }
    }
    y
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_rel(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data().iter().zip(b.data()).map(|(&x, &y)| rel(x, y)).fold(0.0, f64::max)
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Scalar evaluation of the cell equations: every pre-activation is
/// `b + sum(W_x * X) + sum(W_h * H)` accumulated voxel by voxel.
pub fn naive_step(
    x: &Tensor<f64>,
    h: &Tensor<f64>,
    c: &Tensor<f64>,
    p: &ConvLstmParams<f64>,
) -> (Tensor<f64>, Tensor<f64>) {
    let k = p.w_xi.dims()[2];
    let r = (k / 2) as isize;
    let hid = p.b_i.len();
    let cin = x.dims()[0];
    let [d, hh, w] = [x.dims()[1], x.dims()[2], x.dims()[3]];
    let pre = |wx: &Tensor<f64>, wh: &Tensor<f64>, b: &Tensor<f64>, o: usize, z: usize, y: usize, xx: usize| {
        let mut acc = b.data()[o];
        for (src, wt, chans) in [(x, wx, cin), (h, wh, hid)] {
            for ch in 0..chans {
                for kz in 0..k {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iz = z as isize + kz as isize - r;
                            let iy = y as isize + ky as isize - r;
                            let ix = xx as isize + kx as isize - r;
                            if iz < 0 || iy < 0 || ix < 0 || iz >= d as isize || iy >= hh as isize || ix >= w as isize {
                                continue;
                            }
                            acc += wt.get(&[o, ch, kz, ky, kx]) * src.get(&[ch, iz as usize, iy as usize, ix as usize]);
                        }
                    }
                }
            }
        }
        acc
    };
    let mut c_next = c.clone();
    let mut h_next = h.clone();
    for o in 0..hid {
        for z in 0..d {
            for y in 0..hh {
                for xx in 0..w {
                    let i = sigmoid(pre(&p.w_xi, &p.w_hi, &p.b_i, o, z, y, xx));
                    let f = sigmoid(pre(&p.w_xf, &p.w_hf, &p.b_f, o, z, y, xx));
                    let og = sigmoid(pre(&p.w_xo, &p.w_ho, &p.b_o, o, z, y, xx));
                    let g = pre(&p.w_xc, &p.w_hc, &p.b_c, o, z, y, xx).tanh();
                    let cv = f * c.get(&[o, z, y, xx]) + i * g;
                    c_next.set(&[o, z, y, xx], cv);
                    h_next.set(&[o, z, y, xx], og * cv.tanh());
                }
            }
        }
    }
    (h_next, c_next)
}

pub fn random_params(rng: &mut ChaCha8Rng, cin: usize, hid: usize, k: usize) -> ConvLstmParams<f64> {
    let mut p = ConvLstmParams::<f64>::zeros(cin, hid, k);
    for name in volstm::layers::CONVLSTM_PARAM_NAMES {
        let t = p.get_mut(name).unwrap();
        *t = random(rng, &t.dims().to_vec());
    }
    p
}

/// Worst relative error of `conv3d_forward` against [`naive_conv3d`] over `instances` random cases.
pub fn conv3d_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let k = [rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3)];
        let stride = [rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2)];
        let padding = [rng.gen_range(0..=1), rng.gen_range(0..=1), rng.gen_range(0..=1)];
        let spec = ConvSpec {
            kernel: k,
            stride,
            padding,
            in_channels: rng.gen_range(1..=3),
            out_channels: rng.gen_range(1..=3),
        };
        let dims = [
            spec.in_channels,
            rng.gen_range(k[0]..=6),
            rng.gen_range(k[1]..=6),
            rng.gen_range(k[2]..=6),
        ];
        let x = random(&mut rng, &dims);
        let w = random(&mut rng, &spec.weight_dims());
        let b = random(&mut rng, &[spec.out_channels]);
        let fast = conv3d_forward(&x, &w, &b, &spec).unwrap();
        worst = worst.max(max_rel(&fast, &naive_conv3d(&x, &w, &b, &spec)));
    }
    worst
}


/// Worst relative error of `convlstm_step` against [`naive_step`] over `instances` random cases.
pub fn step_oracle_error(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let cin = rng.gen_range(1..=3);
        let hid = rng.gen_range(1..=3);
        let k = if rng.gen_bool(0.5) { 1 } else { 3 };
        let sp = [rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4)];
        let p = random_params(&mut rng, cin, hid, k);
        let x = random(&mut rng, &[cin, sp[0], sp[1], sp[2]]);
        let prev = ConvLstmState {
            h: random(&mut rng, &[hid, sp[0], sp[1], sp[2]]),
            c: random(&mut rng, &[hid, sp[0], sp[1], sp[2]]),
        };
        let (state, _) = convlstm_step(&x, &prev, &p).unwrap();
        let (h, c) = naive_step(&x, &prev.h, &prev.c, &p);
        worst = worst.max(max_rel(&state.h, &h)).max(max_rel(&state.c, &c));
    }
    worst
}

fn scaled(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| scale * rng.gen_range(-1.0..1.0))
}

/// Runs `calls` random `convlstm_step`s and returns a description of every broken invariant:
/// gates in range, `|h| <= o`, `|c_t| <= f|c_{t-1}| + i|g|`, spatial dims preserved,
/// and a single-voxel input change reaching only voxels within the kernel radius.
pub fn gate_invariant_violations(calls: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for call in 0..calls {
        let cin = rng.gen_range(1..=3);
        let hid = rng.gen_range(1..=4);
        let k = if rng.gen_bool(0.5) { 1 } else { 3 };
        let sp = [rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=5)];
        let scale = [0.5, 2.0, 8.0][rng.gen_range(0..3)];
        let mut p = ConvLstmParams::<f64>::zeros(cin, hid, k);
        for name in volstm::layers::CONVLSTM_PARAM_NAMES {
            let t = p.get_mut(name).unwrap();
            *t = scaled(&mut rng, &t.dims().to_vec(), scale);
        }
        let x = scaled(&mut rng, &[cin, sp[0], sp[1], sp[2]], scale);
        let prev = ConvLstmState {
            h: scaled(&mut rng, &[hid, sp[0], sp[1], sp[2]], 1.0),
            c: scaled(&mut rng, &[hid, sp[0], sp[1], sp[2]], scale),
        };
        let (state, gates) = match convlstm_step(&x, &prev, &p) {
            Ok(v) => v,
            Err(e) => {
                bad.push(format!("call {call}: {e}"));
                continue;
            }
        };
        let dims = [hid, sp[0], sp[1], sp[2]];
        let before = bad.len();
        for (name, t) in [("h", &state.h), ("c", &state.c), ("i", &gates.i), ("f", &gates.f), ("o", &gates.o), ("g", &gates.g)] {
            if t.dims() != dims {
                bad.push(format!("call {call}: {name} has dims {:?}, expected {dims:?}", t.dims()));
            }
        }
        if bad.len() > before {
            continue;
        }
        for v in 0..state.h.len() {
            let (i, f, o, g) = (gates.i.data()[v], gates.f.data()[v], gates.o.data()[v], gates.g.data()[v]);
            if ![i, f, o].iter().all(|s| (0.0..=1.0).contains(s)) || !(-1.0..=1.0).contains(&g) {
                bad.push(format!("call {call}: gate out of range at {v}: i={i} f={f} o={o} g={g}"));
            }
            if state.h.data()[v].abs() > o {
                bad.push(format!("call {call}: |h| exceeds o at {v}"));
            }
            let bound = f * prev.c.data()[v].abs() + i * g.abs();
            if state.c.data()[v].abs() > bound * (1.0 + 1e-12) {
                bad.push(format!("call {call}: |c| exceeds f|c_prev| + i|g| at {v}"));
            }
        }

        let at = [rng.gen_range(0..sp[0]), rng.gen_range(0..sp[1]), rng.gen_range(0..sp[2])];
        let mut bumped = x.clone();
        let ch = rng.gen_range(0..cin);
        bumped.set(&[ch, at[0], at[1], at[2]], x.get(&[ch, at[0], at[1], at[2]]) + 1.0);
        let (moved, _) = convlstm_step(&bumped, &prev, &p).unwrap();
        let r = k / 2;
        for o in 0..hid {
            for z in 0..sp[0] {
                for y in 0..sp[1] {
                    for xx in 0..sp[2] {
                        let far = [z, y, xx].iter().zip(at).any(|(&a, b)| a.abs_diff(b) > r);
                        let idx = [o, z, y, xx];
                        if far && moved.h.get(&idx) != state.h.get(&idx) {
                            bad.push(format!("call {call}: input at {at:?} reached voxel {:?}", [z, y, xx]));
                        }
                    }
                }
            }
        }
    }
    bad
}

/// A `conv3d_backward` with the input gradient's sign flipped.
pub fn sign_flipped_conv3d_backward(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    spec: &ConvSpec,
    grad_out: &Tensor<f64>,
) -> volstm::Result<volstm::tensor::ConvGrads<f64>> {
    let mut g = volstm::tensor::conv3d_backward(input, weights, spec, grad_out)?;
    g.input.scale_in_place(-1.0);
    Ok(g)
}

/// Checks that every fold partitions `0..n` into disjoint train/validation/test
/// sets, that the test parts partition `0..n`, and that each label's test
/// counts differ by at most one across folds.
pub fn fold_violations(labels: &[u8], folds: &[volstm::training::Fold]) -> Vec<String> {
    let n = labels.len();
    let mut bad = Vec::new();
    let mut tested = vec![0usize; n];
    for f in folds {
        let mut seen = vec![0usize; n];
        for &i in f.train.iter().chain(&f.validation).chain(&f.test) {
            seen[i] += 1;
        }
        if seen.iter().any(|&c| c != 1) {
            bad.push(format!("fold {} does not partition the subjects", f.index));
        }
        for &i in &f.test {
            tested[i] += 1;
        }
    }
    if tested.iter().any(|&c| c != 1) {
        bad.push("test parts do not partition the subjects".into());
    }
    for label in [0u8, 1] {
        let counts: Vec<usize> = folds
            .iter()
            .map(|f| f.test.iter().filter(|&&i| labels[i] == label).count())
            .collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        if hi - lo > 1 {
            bad.push(format!("label {label} test counts {counts:?} differ by more than one"));
        }
    }
    bad
}

/// Arithmetic mean of the per-crop softmax outputs, summed left to right.
pub fn crop_mean(network: &volstm::models::Network<f32>, series: &Tensor<f32>, crop: usize) -> Vec<f32> {
    let starts = volstm::training::crop_starts(series.dims()[0], crop).unwrap();
    let probs: Vec<Tensor<f32>> = starts
        .iter()
        .map(|&s| volstm::optim::softmax(&network.logits(&series.narrow_outer(s, crop).unwrap()).unwrap()))
        .collect();
    (0..probs[0].len())
        .map(|c| probs.iter().map(|p| p.data()[c]).fold(0.0f32, |a, b| a + b) / starts.len() as f32)
        .collect()
}
