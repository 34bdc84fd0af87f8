use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;

use super::config::TrainConfig;
use super::crops::{evaluate_subject, sample_crop};
use super::metrics::metrics;
use super::report::{epoch_line, EpochRecord, FoldMetrics, SubjectPrediction, TrainReport, ValidationPoint};
use super::split::Fold;
use crate::data::SubjectRecord;
use crate::error::{Error, Result};
use crate::models::{backward, build, forward, ModelConfig, ModelParams, Network};
use crate::optim::{softmax_cross_entropy, AdamConfig, AdamState};
use crate::scalar::Scalar;

const TAG_EPOCH: u64 = 1;
const TAG_DROPOUT: u64 = 2;

/// Independent generator for every `(tag, a, b)` under one run seed.
fn stream_rng(seed: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_mut(8).zip([seed, tag, a, b]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn thread_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Lists every subject shorter than `crop_length`.
pub fn check_lengths<T: Scalar>(records: &[SubjectRecord<T>], crop_length: usize) -> Result<()> {
    let short: Vec<String> = records
        .iter()
        .filter(|r| r.len() < crop_length)
        .map(|r| format!("subject {:?} has {} timesteps, crop length is {crop_length}", r.id, r.len()))
        .collect();
    if short.is_empty() {
        Ok(())
    } else {
        Err(Error::Ingestion(short))
    }
}

pub struct TrainOutcome<T> {
    /// The snapshot with the highest validation accuracy (earliest on ties),
    /// or the final parameters when there is no validation set.
    pub network: Network<T>,
    pub report: TrainReport,
}

pub fn train<T: Scalar>(
    model: &ModelConfig,
    config: &TrainConfig,
    train_set: &[&SubjectRecord<T>],
    validation: &[&SubjectRecord<T>],
) -> Result<TrainOutcome<T>> {
    train_with_progress(model, config, train_set, validation, &mut |_| {})
}

/// As [`train`], passing each log line to `progress` as soon as it is known.
pub fn train_with_progress<T: Scalar>(
    model: &ModelConfig,
    config: &TrainConfig,
    train_set: &[&SubjectRecord<T>],
    validation: &[&SubjectRecord<T>],
    progress: &mut dyn FnMut(&str),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    model.shape_chain()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    for r in train_set.iter().chain(validation) {
        if r.len() < config.crop_length {
            return Err(Error::Data(format!(
                "subject {:?} has {} timesteps, crop length is {}",
                r.id,
                r.len(),
                config.crop_length
            )));
        }
    }
    let pool = thread_pool(config.workers)?;
    let crop = config.crop_length;
    let seed = config.seed;
    let mut params: ModelParams<T> = build(model, seed)?;
    let mut adam = AdamState::new(AdamConfig::with_lr(config.lr), &params)?;
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ModelParams<T>)> = None;

    for epoch in 1..=config.epochs {
        let mut rng = stream_rng(seed, TAG_EPOCH, epoch as u64, 0);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);
        let starts = order
            .iter()
            .map(|&i| sample_crop(train_set[i].len(), crop, &mut rng))
            .collect::<Result<Vec<_>>>()?;

        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let base = b * config.batch_size;
            let params_ref = &params;
            let results: Vec<Result<(f64, ModelParams<T>)>> = pool.install(|| {
                chunk
                    .par_iter()
                    .enumerate()
                    .map(|(j, &i)| {
                        let pos = base + j;
                        let record = train_set[i];
                        let input = record.series.narrow_outer(starts[pos], crop)?;
                        let mut drng = stream_rng(seed, TAG_DROPOUT, epoch as u64, pos as u64);
                        let (logits, cache) = forward(model, params_ref, &input, true, &mut drng)?;
                        let (loss, g) = softmax_cross_entropy(&logits, record.label as usize)?;
                        Ok((loss.as_f64(), backward(model, params_ref, &cache, &g)?))
                    })
                    .collect()
            });
            let mut batch_loss = 0.0;
            let mut grads: Option<ModelParams<T>> = None;
            for r in results {
                let (loss, g) = r?;
                batch_loss += loss;
                match grads.as_mut() {
                    Some(total) => total.accumulate(&g)?,
                    None => grads = Some(g),
                }
            }
            let mut grads = grads.expect("non-empty batch");
            grads.scale(T::of(1.0 / chunk.len() as f64));
            if !batch_loss.is_finite() || !grads.all_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss or gradient in epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            adam.step(&mut params, &grads)?;
            if !params.all_finite() {
                return Err(Error::Divergence(format!("parameters became non-finite in epoch {epoch}")));
            }
            loss_sum += batch_loss;
        }

        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / train_set.len() as f64,
        };
        report.epochs.push(record);
        let mut point = None;
        if !validation.is_empty() && (epoch % config.validate_every == 0 || epoch == config.epochs) {
            let net = Network {
                config: model.clone(),
                params: params.clone(),
            };
            let preds = predict_in(&pool, &net, validation, crop)?;
            let m = metrics(
                &preds.iter().map(|p| p.probabilities.clone()).collect::<Vec<_>>(),
                &preds.iter().map(|p| p.label).collect::<Vec<_>>(),
            )?;
            let v = ValidationPoint {
                epoch,
                accuracy: m.accuracy,
                f1: m.f1,
            };
            if best.as_ref().map_or(true, |(acc, _)| m.accuracy > *acc) {
                best = Some((m.accuracy, net.params));
                report.best_epoch = Some(epoch);
                report.best_accuracy = Some(m.accuracy);
            }
            report.validations.push(v);
            point = Some(v);
        }
        progress(&epoch_line(&record, point.as_ref()));
    }

    let params = best.map_or(params, |(_, p)| p);
    Ok(TrainOutcome {
        network: Network {
            config: model.clone(),
            params,
        },
        report,
    })
}

fn predict_in<T: Scalar>(
    pool: &ThreadPool,
    network: &Network<T>,
    records: &[&SubjectRecord<T>],
    crop_length: usize,
) -> Result<Vec<SubjectPrediction>> {
    pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let p = evaluate_subject(network, &r.series, crop_length)?;
                Ok(SubjectPrediction {
                    id: r.id.clone(),
                    label: r.label,
                    probabilities: p.data().iter().map(|v| v.as_f64()).collect(),
                })
            })
            .collect()
    })
}

/// Crop-averaged predictions for every record, in input order.
pub fn predict<T: Scalar>(
    network: &Network<T>,
    records: &[&SubjectRecord<T>],
    crop_length: usize,
    workers: usize,
) -> Result<Vec<SubjectPrediction>> {
    predict_in(&thread_pool(workers.max(1))?, network, records, crop_length)
}

pub struct FoldOutcome<T> {
    pub metrics: FoldMetrics,
    pub report: TrainReport,
    pub network: Network<T>,
}

/// Trains on `fold.train`, selects on `fold.validation` and scores the
/// retained snapshot on `fold.test`. The run seed is offset by the fold index.
pub fn run_fold<T: Scalar>(
    model: &ModelConfig,
    config: &TrainConfig,
    records: &[SubjectRecord<T>],
    fold: &Fold,
    progress: &mut dyn FnMut(&str),
) -> Result<FoldOutcome<T>> {
    let pick = |idx: &[usize]| -> Result<Vec<&SubjectRecord<T>>> {
        idx.iter()
            .map(|&i| {
                records
                    .get(i)
                    .ok_or_else(|| Error::invalid(format!("fold refers to subject {i} of {}", records.len())))
            })
            .collect()
    };
    let cfg = TrainConfig {
        seed: config.seed.wrapping_add(fold.index as u64),
        ..config.clone()
    };
    let outcome = train_with_progress(model, &cfg, &pick(&fold.train)?, &pick(&fold.validation)?, progress)?;
    let predictions = predict(&outcome.network, &pick(&fold.test)?, cfg.crop_length, cfg.workers)?;
    let m = metrics(
        &predictions.iter().map(|p| p.probabilities.clone()).collect::<Vec<_>>(),
        &predictions.iter().map(|p| p.label).collect::<Vec<_>>(),
    )?;
    Ok(FoldOutcome {
        metrics: FoldMetrics {
            fold: fold.index,
            accuracy: m.accuracy,
            f1: m.f1,
            best_epoch: outcome.report.best_epoch,
            predictions,
        },
        report: outcome.report,
        network: outcome.network,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SignalMode, SyntheticSpec};
    use crate::models::Variant;
    use crate::training::kfold_split;

    fn cohort() -> Vec<SubjectRecord<f32>> {
        generate(&SyntheticSpec {
            subjects: 8,
            spatial: [6, 6, 6],
            t_range: (6, 9),
            mode: SignalMode::Spatial,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn quick(workers: usize) -> TrainConfig {
        TrainConfig {
            epochs: 4,
            batch_size: 3,
            crop_length: 4,
            validate_every: 2,
            lr: 1e-3,
            seed: 9,
            workers,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn reproducible_across_worker_counts() {
        let data = cohort();
        let refs: Vec<_> = data.iter().collect();
        let model = ModelConfig::tiny(Variant::Clstm);
        let a = train(&model, &quick(1), &refs[..6], &refs[6..]).unwrap();
        let b = train(&model, &quick(3), &refs[..6], &refs[6..]).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.network.params.checksum(), b.network.params.checksum());
        assert_eq!(a.report.epochs.len(), 4);
        assert_eq!(a.report.validations.len(), 2);
    }

    #[test]
    fn zero_lr_keeps_initial_parameters() {
        let data = cohort();
        let refs: Vec<_> = data.iter().collect();
        let model = ModelConfig::tiny(Variant::Conv1d);
        let cfg = TrainConfig { lr: 0.0, ..quick(1) };
        let out = train(&model, &cfg, &refs[..6], &refs[6..]).unwrap();
        assert_eq!(out.network.params, build::<f32>(&model, cfg.seed).unwrap());
        let accs: Vec<f64> = out.report.validations.iter().map(|v| v.accuracy).collect();
        assert!(accs.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(out.report.best_epoch, Some(2));
    }

    #[test]
    fn short_subjects_listed() {
        let data = cohort();
        let err = check_lengths(&data, 8).unwrap_err();
        match err {
            Error::Ingestion(list) => assert!(!list.is_empty()),
            e => panic!("{e}"),
        }
        assert!(check_lengths(&data, 6).is_ok());
    }

    #[test]
    fn fold_run_scores_test_subjects() {
        let data = cohort();
        let labels: Vec<u8> = data.iter().map(|r| r.label).collect();
        let folds = kfold_split(&labels, 4, 0, true).unwrap();
        let out = run_fold(&ModelConfig::tiny(Variant::Conv1d), &quick(1), &data, &folds[1], &mut |_| {}).unwrap();
        assert_eq!(out.metrics.predictions.len(), folds[1].test.len());
        for p in &out.metrics.predictions {
            assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        }
    }
}
