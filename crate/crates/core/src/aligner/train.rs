use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{example_seed, AlignerConfig, AlignerModel, EncodedPair};
use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::numerics::{adam_update, AdamConfig, AdamState, Real};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-utterance summed cross-entropy over the epoch's batches.
    pub train_loss: f64,
    /// Per-symbol dev cross-entropy (nats), EOS included.
    pub dev_cross_entropy: f64,
    pub dev_perplexity: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_cross_entropy: f64,
    pub stopped_early: bool,
}

/// Batches of similar source length; membership is shuffled within equal
/// lengths and batch order is shuffled, both from the epoch's seed.
fn make_batches(pairs: &[EncodedPair], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&i| pairs[i].source.len());
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

fn dev_cross_entropy<F: Real>(model: &AlignerModel<F>, dev: &[EncodedPair]) -> Result<f64> {
    use rayon::prelude::*;
    let losses: Vec<f64> = dev
        .par_iter()
        .map(|p| model.pair_loss(p).map(Real::to_f64))
        .collect::<Result<Vec<_>>>()?;
    let symbols: usize = dev.iter().map(|p| p.target.len() + 1).sum();
    Ok(losses.iter().sum::<f64>() / symbols as f64)
}

pub fn train(train: &ParallelCorpus, dev: &ParallelCorpus, cfg: &AlignerConfig) -> Result<(AlignerModel<f32>, TrainingLog)> {
    train_with_progress(train, dev, cfg, |_| {})
}

/// Adam training with early stopping on dev cross-entropy; returns the
/// best-dev parameters.
pub fn train_with_progress(
    train: &ParallelCorpus,
    dev: &ParallelCorpus,
    cfg: &AlignerConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<(AlignerModel<f32>, TrainingLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("empty training corpus".into()));
    }
    if dev.is_empty() {
        return Err(Error::Data("empty dev corpus".into()));
    }
    if dev.ul_vocab != train.ul_vocab {
        return Err(Error::Data("train and dev corpora disagree on the UL symbol inventory".into()));
    }
    let mut model: AlignerModel<f32> =
        AlignerModel::new(cfg.clone(), train.wrl_vocab.clone(), train.ul_vocab.clone())?;
    let train_pairs = train
        .utterances
        .iter()
        .map(|u| model.encode_pair(u))
        .collect::<Result<Vec<_>>>()?;
    let dev_pairs = dev
        .utterances
        .iter()
        .map(|u| model.encode_pair(u))
        .collect::<Result<Vec<_>>>()?;

    let adam = AdamConfig {
        lr: cfg.learning_rate,
        ..Default::default()
    };
    let mut state = AdamState::new(model.params());
    let mut log = TrainingLog {
        best_dev_cross_entropy: dev_cross_entropy(&model, &dev_pairs)?,
        ..Default::default()
    };
    let mut best = model.params().clone();
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(example_seed(cfg.seed, epoch, usize::MAX, 0));
        let batches = make_batches(&train_pairs, cfg.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let pairs: Vec<&EncodedPair> = batch.iter().map(|&i| &train_pairs[i]).collect();
            let seeds: Vec<u64> = (0..pairs.len()).map(|k| example_seed(cfg.seed, epoch, b, k)).collect();
            let step_err = |e: Error| match e {
                Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}, step {}: {m}", b + 1)),
                other => other,
            };
            let (loss, mut grads) = model.batch_gradients(&pairs, Some(&seeds)).map_err(step_err)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("epoch {epoch}, step {}: loss is {loss}", b + 1)));
            }
            grads.clip_global_norm(cfg.clip_norm as f32);
            adam_update(model.params_mut(), &grads, &mut state, &adam).map_err(step_err)?;
            loss_sum += loss as f64 * pairs.len() as f64;
        }
        let dev_ce = dev_cross_entropy(&model, &dev_pairs)?;
        let improved = dev_ce < log.best_dev_cross_entropy;
        if improved {
            log.best_dev_cross_entropy = dev_ce;
            log.best_epoch = epoch;
            best = model.params().clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / train_pairs.len() as f64,
            dev_cross_entropy: dev_ce,
            dev_perplexity: dev_ce.exp(),
            improved,
        };
        progress(&rec);
        log.epochs.push(rec);
        if since_best >= cfg.patience {
            log.stopped_early = true;
            break;
        }
    }
    *model.params_mut() = best;
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ParallelUtterance;

    fn repeated(n: usize) -> ParallelCorpus {
        let utts = (0..n)
            .map(|i| {
                ParallelUtterance::new(
                    format!("u{i}"),
                    "a b c a d".split(' ').map(String::from).collect(),
                    vec!["x".into(), "y".into()],
                )
                .unwrap()
            })
            .collect();
        ParallelCorpus::from_utterances(utts).unwrap()
    }

    #[test]
    fn memorizes_a_repeated_pair() {
        let corpus = repeated(8);
        let dev = corpus.subset(&[0]);
        let cfg = AlignerConfig {
            hidden_size: 16,
            batch_size: 4,
            learning_rate: 0.01,
            max_epochs: 200,
            patience: 200,
            ..Default::default()
        };
        let (_, log) = train(&corpus, &dev, &cfg).unwrap();
        let best = log.epochs[log.best_epoch - 1].dev_perplexity;
        assert!(best < 1.05, "dev perplexity {best}");
    }

    #[test]
    fn empty_corpus_rejected() {
        let corpus = repeated(2);
        let empty = corpus.subset(&[]);
        assert!(train(&empty, &corpus, &AlignerConfig::default()).is_err());
    }

    #[test]
    fn training_is_reproducible() {
        let corpus = repeated(6);
        let dev = corpus.subset(&[1, 2]);
        let cfg = AlignerConfig {
            hidden_size: 8,
            batch_size: 4,
            max_epochs: 3,
            ..Default::default()
        };
        let (a, la) = train(&corpus, &dev, &cfg).unwrap();
        let (b, lb) = train(&corpus, &dev, &cfg).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a.params(), b.params());
    }
}
