//! Statistical properties of the generated cohorts.

use statrs::distribution::{ContinuousCDF, StudentsT};
use volstm::data::{generate, SignalMode, SyntheticSpec};

/// Two-sided Welch t-test p-value.
fn welch_p(a: &[f64], b: &[f64]) -> f64 {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, var)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()))
}

fn cohort(mode: SignalMode, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let spec = SyntheticSpec {
        mode,
        seed,
        subjects: 40,
        ..SyntheticSpec::default()
    };
    let records = generate(&spec).unwrap();
    let voxels: usize = spec.spatial.iter().product();
    let (mut mean0, mut mean1, mut vox0, mut vox1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in &records {
        let frame_means: Vec<f64> = r
            .series
            .data()
            .chunks(voxels)
            .map(|f| f.iter().map(|&v| v as f64).sum::<f64>() / voxels as f64)
            .collect();
        let voxel_means: Vec<f64> = (0..voxels)
            .map(|v| r.series.data()[v..].iter().step_by(voxels).map(|&x| x as f64).sum::<f64>() / r.len() as f64)
            .collect();
        if r.label == 0 {
            mean0.extend(frame_means);
            vox0.push(voxel_means);
        } else {
            mean1.extend(frame_means);
            vox1.push(voxel_means);
        }
    }
    (mean0, mean1, vox0, vox1)
}

#[test]
fn spatiotemporal_frame_means_do_not_separate_classes() {
    for seed in [7, 8, 9] {
        let (m0, m1, ..) = cohort(SignalMode::Spatiotemporal, seed);
        let p = welch_p(&m0, &m1);
        assert!(p > 0.05, "seed {seed}: p = {p}");
    }
}

#[test]
fn spatiotemporal_time_averaged_voxels_do_not_separate_classes() {
    let (.., v0, v1) = cohort(SignalMode::Spatiotemporal, 7);
    let voxels = v0[0].len();
    let significant = (0..voxels)
        .filter(|&v| {
            let a: Vec<f64> = v0.iter().map(|s| s[v]).collect();
            let b: Vec<f64> = v1.iter().map(|s| s[v]).collect();
            welch_p(&a, &b) < 0.001
        })
        .count();
    assert!(significant * 100 < voxels, "{significant} of {voxels} voxels separate at p < 0.001");
}

#[test]
fn spatial_blob_voxels_do_separate_classes() {
    let (.., v0, v1) = cohort(SignalMode::Spatial, 7);
    let best = (0..v0[0].len())
        .map(|v| {
            let a: Vec<f64> = v0.iter().map(|s| s[v]).collect();
            let b: Vec<f64> = v1.iter().map(|s| s[v]).collect();
            welch_p(&a, &b)
        })
        .fold(1.0, f64::min);
    assert!(best < 1e-6, "best p = {best}");
}
