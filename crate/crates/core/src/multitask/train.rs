use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::autodiff::{Grads, ParamStore};
use super::tensor::Matrix;
use super::tiny::{ExampleNll, TinyTransformer};
use super::{combine_losses, AdamConfig, LossBreakdown, Mode, ModelError, Seq2SeqBackend, TrainConfig};
use crate::exec::Exec;
use crate::sequencing::TrainingExample;
use crate::text::derive_seed;

/// A backend whose parameters can be optimized.
pub trait TrainableBackend: Seq2SeqBackend + Clone {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;

    /// Summed NLLs for one example; accumulates the gradient of
    /// `summary_weight * ds + commonsense_weight * cs` into `grads` if given.
    fn example_loss(
        &self,
        example: &TrainingExample,
        summary_weight: f64,
        commonsense_weight: Option<f64>,
        grads: Option<&mut Grads>,
    ) -> Result<ExampleNll, ModelError>;
}

impl TrainableBackend for TinyTransformer {
    fn params(&self) -> &ParamStore {
        self.store()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.store_mut()
    }

    fn example_loss(
        &self,
        example: &TrainingExample,
        summary_weight: f64,
        commonsense_weight: Option<f64>,
        grads: Option<&mut Grads>,
    ) -> Result<ExampleNll, ModelError> {
        TinyTransformer::example_loss(self, example, summary_weight, commonsense_weight, grads)
    }
}

/// Linear warmup from 0 to `lr` over `warmup` steps, then linear decay to 0
/// at `total`. Steps count from 1.
pub fn learning_rate_at(step: usize, total: usize, warmup: usize, lr: f64) -> f64 {
    let step = step.min(total);
    if step <= warmup {
        if warmup == 0 {
            lr
        } else {
            lr * step as f64 / warmup as f64
        }
    } else {
        lr * (total - step) as f64 / (total - warmup) as f64
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = store.zero_grads().0;
        Adam {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (i, p) in store.params.iter_mut().enumerate() {
            let g = &grads.0[i].data;
            let m = &mut self.m[i].data;
            let v = &mut self.v[i].data;
            for (j, w) in p.value.data.iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                *w -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<B> {
    pub log: Vec<LossBreakdown>,
    /// Score returned by the epoch-end hook, per epoch.
    pub epoch_scores: Vec<Option<f64>>,
    /// Highest-scoring epoch (1-based) and its weights; earliest wins ties.
    pub best: Option<(usize, B)>,
}

/// Summed NLLs and token counts over a batch, plus the gradient.
fn batch_gradient<B: TrainableBackend>(
    model: &B,
    batch: &[&TrainingExample],
    config: &TrainConfig,
    exec: Exec,
) -> Result<(Grads, ExampleNll), ModelError> {
    let lambda = config.effective_lambda();
    let with_cs = config.mode == Mode::SickPlusPlus;
    let ds_tokens: usize = batch.iter().map(|e| e.summary_ids.len()).sum();
    let cs_tokens: usize = batch.iter().map(|e| e.commonsense_ids.len()).sum();
    let summary_weight = lambda / ds_tokens.max(1) as f64;
    let commonsense_weight = with_cs.then(|| (1.0 - lambda) / cs_tokens.max(1) as f64);

    let chunks: Vec<&[&TrainingExample]> = batch.chunks(config.grad_chunk).collect();
    let parts = exec.try_map(&chunks, |chunk| {
        let mut grads = model.params().zero_grads();
        let mut sums = ExampleNll::default();
        for ex in chunk.iter() {
            let nll = model.example_loss(ex, summary_weight, commonsense_weight, Some(&mut grads))?;
            sums.summary_sum += nll.summary_sum;
            sums.summary_tokens += nll.summary_tokens;
            sums.commonsense_sum += nll.commonsense_sum;
            sums.commonsense_tokens += nll.commonsense_tokens;
        }
        Ok::<_, ModelError>((grads, sums))
    })?;

    let mut parts = parts.into_iter();
    let (mut grads, mut sums) = parts.next().expect("batch is non-empty");
    for (g, s) in parts {
        grads.add_assign(&g);
        sums.summary_sum += s.summary_sum;
        sums.summary_tokens += s.summary_tokens;
        sums.commonsense_sum += s.commonsense_sum;
        sums.commonsense_tokens += s.commonsense_tokens;
    }
    Ok((grads, sums))
}

/// Optimize `model` on `corpus` with Adam on the combined loss, logging
/// every step. `on_epoch_end` runs after each epoch (1-based) and may
/// return a dev score used to keep the best weights.
pub fn train<B, F>(
    config: &TrainConfig,
    corpus: &[TrainingExample],
    model: &mut B,
    exec: Exec,
    mut on_epoch_end: F,
) -> Result<TrainOutcome<B>, ModelError>
where
    B: TrainableBackend,
    F: FnMut(usize, &B) -> Result<Option<f64>, ModelError>,
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let lambda = config.effective_lambda();
    let steps_per_epoch = corpus.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut adam = Adam::new(config.adam, model.params());
    let mut outcome = TrainOutcome {
        log: Vec::with_capacity(total_steps),
        epoch_scores: Vec::with_capacity(config.epochs),
        best: None,
    };
    let mut best_score = f64::NEG_INFINITY;
    let mut step = 0;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("epoch:{epoch}")));
        order.shuffle(&mut rng);

        for batch_ids in order.chunks(config.batch_size) {
            step += 1;
            let batch: Vec<&TrainingExample> = batch_ids.iter().map(|&i| &corpus[i]).collect();
            let (grads, sums) = batch_gradient(model, &batch, config, exec)?;
            let l_ds = sums.summary_sum / sums.summary_tokens as f64;
            let l_cs = if sums.commonsense_tokens == 0 {
                0.0
            } else {
                sums.commonsense_sum / sums.commonsense_tokens as f64
            };
            let l_total = combine_losses(l_ds, l_cs, lambda)?;
            if !l_total.is_finite() {
                return Err(ModelError::NonFiniteLoss { step });
            }
            let lr = learning_rate_at(step, total_steps, config.warmup_steps, config.learning_rate);
            adam.step(model.params_mut(), &grads, lr);
            outcome.log.push(LossBreakdown {
                step,
                epoch,
                l_ds,
                l_cs,
                l_total,
                lambda,
                lr,
            });
        }

        let score = on_epoch_end(epoch, model)?;
        if let Some(s) = score {
            if s > best_score {
                best_score = s;
                outcome.best = Some((epoch, model.clone()));
            }
        }
        outcome.epoch_scores.push(score);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitask::autodiff::ParamGroup;
    use crate::multitask::TinyConfig;
    use crate::sequencing::Segment;

    fn tiny() -> TinyTransformer {
        TinyTransformer::new(
            TinyConfig {
                vocab_size: 20,
                d_model: 16,
                heads: 2,
                encoder_layers: 1,
                decoder_layers: 1,
                ffn_dim: 16,
                max_input_positions: 16,
                max_output_positions: 8,
            },
            11,
        )
        .unwrap()
    }

    fn corpus() -> Vec<TrainingExample> {
        (0..6u32)
            .map(|i| TrainingExample {
                id: format!("t{i}"),
                input_ids: vec![1, 6 + i, 7 + i, 4, 12 + i, 5, 2],
                input_segments: vec![Segment::Special; 7],
                summary_ids: vec![6 + i, 2],
                commonsense_ids: vec![12 + i, 2],
            })
            .collect()
    }

    fn config(mode: Mode, lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            learning_rate: 1e-2,
            batch_size: 4,
            warmup_steps: 2,
            epochs: 2,
            mode,
            grad_chunk: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schedule_ramps_then_decays() {
        assert!((learning_rate_at(300, 10_000, 600, 3e-6) - 1.5e-6).abs() < 1e-20);
        assert_eq!(learning_rate_at(600, 1200, 600, 3e-6), 3e-6);
        assert!((learning_rate_at(900, 1200, 600, 3e-6) - 1.5e-6).abs() < 1e-20);
        assert_eq!(learning_rate_at(1200, 1200, 600, 3e-6), 0.0);
        assert_eq!(learning_rate_at(1, 4, 0, 1.0), 0.75);
    }

    #[test]
    fn logged_total_is_exact_combination() {
        let mut m = tiny();
        let out = train(&config(Mode::SickPlusPlus, 0.66), &corpus(), &mut m, Exec::Sequential, |_, _| Ok(None)).unwrap();
        assert_eq!(out.log.len(), 4);
        for r in &out.log {
            assert_eq!(r.l_total, 0.66 * r.l_ds + (1.0 - 0.66) * r.l_cs);
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let cfg = config(Mode::SickPlusPlus, 0.66);
        let mut a = tiny();
        let mut b = tiny();
        let la = train(&cfg, &corpus(), &mut a, Exec::Sequential, |_, _| Ok(None)).unwrap().log;
        let lb = train(&cfg, &corpus(), &mut b, Exec::Parallel, |_, _| Ok(None)).unwrap().log;
        assert_eq!(la, lb);
        assert_eq!(a.store(), b.store());
    }

    #[test]
    fn sick_matches_sick_plus_plus_at_lambda_one() {
        let mut sick = tiny();
        let mut plus = tiny();
        let corpus = corpus();
        let mut a = Vec::new();
        let mut b = Vec::new();
        train(&config(Mode::Sick, 0.3), &corpus, &mut sick, Exec::Sequential, |_, m| {
            a.push(m.store().clone());
            Ok(None)
        })
        .unwrap();
        train(&config(Mode::SickPlusPlus, 1.0), &corpus, &mut plus, Exec::Sequential, |_, m| {
            b.push(m.store().clone());
            Ok(None)
        })
        .unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            for (pa, pb) in sa.params.iter().zip(&sb.params) {
                if pa.group != ParamGroup::CommonsenseDecoder {
                    assert_eq!(pa.value, pb.value, "{}", pa.name);
                }
            }
        }
    }

    #[test]
    fn best_epoch_is_kept() {
        let mut m = tiny();
        let scores = [0.2, 0.5];
        let out = train(&config(Mode::SickPlusPlus, 0.66), &corpus(), &mut m, Exec::Sequential, |e, _| {
            Ok(Some(scores[e - 1]))
        })
        .unwrap();
        assert_eq!(out.best.as_ref().unwrap().0, 2);
        assert_eq!(out.epoch_scores, vec![Some(0.2), Some(0.5)]);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let mut m = tiny();
        let r = train(&config(Mode::Sick, 1.0), &[], &mut m, Exec::Sequential, |_, _| Ok(None));
        assert!(matches!(r, Err(ModelError::EmptyCorpus)));
    }
}
