//! Synthetic 4-D cohorts with a controllable class signal.
//!
//! Every subject gets spatially smoothed Gaussian background noise with unit
//! standard deviation. The class signal, with peak amplitude `snr`, depends on
//! [`SignalMode`]:
//!
//! * `Spatial`: class 1 carries a static Gaussian blob; class 0 does not.
//! * `Temporal`: every voxel oscillates; the period differs by class.
//! * `Spatiotemporal`: both classes carry a blob sweeping along the H axis
//!   one grid step per frame and wrapping around (a sawtooth), from a random
//!   grid position shared by all subjects; class 1 sweeps towards increasing H and class 0
//!   towards decreasing H. Every single frame is drawn from the same
//!   distribution for both classes, so only the order of frames separates
//!   them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SubjectRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalMode {
    Spatial,
    Temporal,
    Spatiotemporal,
}

impl std::str::FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spatial" => Ok(SignalMode::Spatial),
            "temporal" => Ok(SignalMode::Temporal),
            "spatiotemporal" | "spatio-temporal" => Ok(SignalMode::Spatiotemporal),
            other => Err(Error::invalid(format!("unknown signal mode {other:?}"))),
        }
    }
}

/// Affine intensity distortion applied to every subject of one site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteShift {
    pub name: String,
    pub offset: f64,
    pub gain: f64,
}

impl SiteShift {
    pub fn neutral(name: impl Into<String>) -> Self {
        SiteShift {
            name: name.into(),
            offset: 0.0,
            gain: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub subjects: usize,
    /// Fraction of subjects with label 1.
    pub class_balance: f64,
    pub spatial: [usize; 3],
    /// Inclusive range of series lengths.
    pub t_range: (usize, usize),
    pub mode: SignalMode,
    pub snr: f64,
    /// Subjects are assigned to sites round-robin.
    pub sites: Vec<SiteShift>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            subjects: 40,
            class_balance: 0.5,
            spatial: [12, 14, 12],
            t_range: (60, 120),
            mode: SignalMode::Spatiotemporal,
            snr: 3.0,
            sites: vec![SiteShift::neutral("site0")],
            seed: 0,
        }
    }
}

/// Timesteps per sweep in `Spatiotemporal` mode.
pub const SWEEP_PERIOD: f64 = 10.0;
/// Oscillation periods (class 0, class 1) in `Temporal` mode.
pub const TEMPORAL_PERIODS: [f64; 2] = [12.0, 5.0];

impl SyntheticSpec {
    pub fn class_counts(&self) -> (usize, usize) {
        let positives = (self.subjects as f64 * self.class_balance).round() as usize;
        (self.subjects - positives.min(self.subjects), positives.min(self.subjects))
    }

    pub fn validate(&self) -> Result<()> {
        let (n0, n1) = self.class_counts();
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(Error::invalid(format!(
                "class balance {} must lie strictly between 0 and 1",
                self.class_balance
            )));
        }
        if n0 < 2 || n1 < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 subjects per class, got {n0} / {n1}"
            )));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::invalid(format!("snr must be positive and finite, got {}", self.snr)));
        }
        if self.spatial.contains(&0) {
            return Err(Error::invalid(format!("spatial dims {:?} must be >= 1", self.spatial)));
        }
        let (lo, hi) = self.t_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!("series length range {lo}..={hi} is empty")));
        }
        if self.sites.is_empty() {
            return Err(Error::invalid("at least one site is required"));
        }
        Ok(())
    }

    fn blob_sigma(&self) -> f64 {
        let m = *self.spatial.iter().min().expect("three axes") as f64;
        (m / 8.0).max(1.0)
    }
}

/// Smooths one axis of a `[D, H, W]` volume with `[1/4, 1/2, 1/4]`, reflecting at the borders.
fn smooth_axis(v: &mut [f64], dims: [usize; 3], axis: usize) {
    let n = dims[axis];
    if n < 2 {
        return;
    }
    let stride = match axis {
        0 => dims[1] * dims[2],
        1 => dims[2],
        _ => 1,
    };
    let mut line = vec![0.0; n];
    let outer: usize = dims.iter().product::<usize>() / n;
    for l in 0..outer {
        let base = match axis {
            0 => l,
            1 => (l / dims[2]) * dims[1] * dims[2] + l % dims[2],
            _ => l * dims[2],
        };
        for (i, x) in line.iter_mut().enumerate() {
            *x = v[base + i * stride];
        }
        for i in 0..n {
            let left = line[if i == 0 { 1 } else { i - 1 }];
            let right = line[if i + 1 == n { n - 2 } else { i + 1 }];
            v[base + i * stride] = 0.25 * left + 0.5 * line[i] + 0.25 * right;
        }
    }
}

/// Standard deviation of white unit noise after the three smoothing passes.
fn smoothed_std(dims: [usize; 3]) -> f64 {
    let per_axis = |n: usize| if n < 2 { 1.0 } else { 0.375f64 };
    dims.iter().map(|&n| per_axis(n)).product::<f64>().sqrt()
}

fn gaussian_blob(out: &mut [f64], dims: [usize; 3], center: [f64; 3], sigma: [f64; 3], amplitude: f64) {
    let inv = sigma.map(|s| 1.0 / (2.0 * s * s));
    let mut idx = 0;
    for z in 0..dims[0] {
        for y in 0..dims[1] {
            for x in 0..dims[2] {
                let q = (z as f64 - center[0]).powi(2) * inv[0]
                    + (y as f64 - center[1]).powi(2) * inv[1]
                    + (x as f64 - center[2]).powi(2) * inv[2];
                out[idx] += amplitude * (-q).exp();
                idx += 1;
            }
        }
    }
}

fn generate_subject(spec: &SyntheticSpec, index: usize, label: u8) -> SubjectRecord<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let dims = spec.spatial;
    let voxels: usize = dims.iter().product();
    let t_len = rng.gen_range(spec.t_range.0..=spec.t_range.1);
    let phase: f64 = rng.gen_range(0.0..1.0);
    let site = &spec.sites[index % spec.sites.len()];
    let norm = 1.0 / smoothed_std(dims);
    let sigma = spec.blob_sigma();
    let centre = dims.map(|n| (n as f64 - 1.0) / 2.0);
    let static_blob = [
        centre[0] * 0.6,
        centre[1] * 0.7,
        centre[2] * 1.3,
    ];
    let lo = sigma.min(centre[1]);
    let span = (dims[1] as f64 - 1.0) - 2.0 * lo;

    let mut data = Vec::with_capacity(t_len * voxels);
    let mut frame = vec![0.0f64; voxels];
    for t in 0..t_len {
        for v in frame.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        for axis in 0..3 {
            smooth_axis(&mut frame, dims, axis);
        }
        for v in frame.iter_mut() {
            *v *= norm;
        }
        match spec.mode {
            SignalMode::Spatial => {
                if label == 1 {
                    gaussian_blob(&mut frame, dims, static_blob, [sigma; 3], spec.snr);
                }
            }
            SignalMode::Temporal => {
                let period = TEMPORAL_PERIODS[label as usize];
                let s = spec.snr * (std::f64::consts::TAU * (t as f64 / period + phase)).sin();
                frame.iter_mut().for_each(|v| *v += s);
            }
            SignalMode::Spatiotemporal => {
                let dir = if label == 1 { 1.0 } else { -1.0 };
                let start = (phase * SWEEP_PERIOD).floor();
                let u = ((start + dir * t as f64) / SWEEP_PERIOD).rem_euclid(1.0);
                let c = [centre[0], lo + u * span, centre[2]];
                gaussian_blob(&mut frame, dims, c, [2.0 * sigma, sigma, 2.0 * sigma], spec.snr);
            }
        }
        data.extend(frame.iter().map(|&v| (site.gain * v + site.offset) as f32));
    }
    SubjectRecord {
        id: format!("sub-{:04}", index + 1),
        series: Tensor::new(&[t_len, 1, dims[0], dims[1], dims[2]], data).expect("consistent dims"),
        label,
        site: site.name.clone(),
    }
}

/// Deterministic in `spec`; subjects are generated independently.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<SubjectRecord<f32>>> {
    spec.validate()?;
    let (n0, n1) = spec.class_counts();
    let mut labels: Vec<u8> = std::iter::repeat(1).take(n1).chain(std::iter::repeat(0).take(n0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    labels.shuffle(&mut rng);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| generate_subject(spec, i, label))
        .collect())
}
