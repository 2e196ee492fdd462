use commonsum::evaluation::{data_efficiency_sweep, evaluate_corpus, nested_subsets, OneHotEmbedder};
use commonsum::multitask::{
    summarize_text, train, DecodeConfig, DecoderHead, Mode, Seq2SeqBackend, TinyConfig, TinyTransformer,
    TrainConfig,
};
use commonsum::sequencing::{Tokenizer, TrainingExample, WordTokenizer};
use commonsum::{toy, Exec};

fn small_model(tokenizer: &WordTokenizer, seed: u64) -> TinyTransformer {
    TinyTransformer::new(
        TinyConfig {
            vocab_size: tokenizer.vocab_size(),
            d_model: 32,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            ffn_dim: 64,
            ..TinyConfig::default()
        },
        seed,
    )
    .unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        warmup_steps: 2,
        epochs,
        seed: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn checkpoint_survives_training_round_trip() {
    let (examples, tokenizer) = toy::prepared(16, 2, Exec::Parallel).unwrap();
    let mut model = small_model(&tokenizer, 2);
    let outcome = train(&config(2), &examples, &mut model, Exec::Parallel, |_, _| Ok(None)).unwrap();
    assert_eq!(outcome.log.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weights.bin");
    model.save(&path).unwrap();
    let loaded = TinyTransformer::load(&path).unwrap();
    assert_eq!(loaded.fingerprint(), model.fingerprint());
    assert_eq!(loaded.store(), model.store());

    let input = examples[0].input();
    let a = model.encode(input).unwrap();
    let b = loaded.encode(input).unwrap();
    let prefix = [tokenizer.specials().bos];
    assert_eq!(
        model.next_token_logprobs(DecoderHead::Summary, &a, &prefix).unwrap(),
        loaded.next_token_logprobs(DecoderHead::Summary, &b, &prefix).unwrap()
    );
}

#[test]
fn inference_never_runs_the_commonsense_decoder() {
    let (examples, tokenizer) = toy::prepared(8, 3, Exec::Parallel).unwrap();
    let mut model = small_model(&tokenizer, 3);
    train(&config(1), &examples, &mut model, Exec::Sequential, |_, _| Ok(None)).unwrap();
    let fresh = model.clone();
    let cfg = DecodeConfig {
        beam: 3,
        max_output_len: 12,
    };
    for ex in &examples[..3] {
        let out = summarize_text(&fresh, &tokenizer, ex.input(), cfg).unwrap();
        assert!(out.ids.len() <= cfg.max_output_len);
    }
    assert!(fresh.decoder_invocations(DecoderHead::Summary) > 0);
    assert_eq!(fresh.decoder_invocations(DecoderHead::Commonsense), 0);
}

#[test]
fn sick_mode_ignores_commonsense_targets() {
    let (mut examples, tokenizer) = toy::prepared(8, 4, Exec::Parallel).unwrap();
    let sick = TrainConfig {
        mode: Mode::Sick,
        ..config(1)
    };
    let mut with_targets = small_model(&tokenizer, 4);
    let log_a = train(&sick, &examples, &mut with_targets, Exec::Parallel, |_, _| Ok(None)).unwrap().log;
    for ex in &mut examples {
        ex.commonsense_ids.clear();
    }
    let mut without_targets = small_model(&tokenizer, 4);
    let log_b = train(&sick, &examples, &mut without_targets, Exec::Parallel, |_, _| Ok(None)).unwrap().log;
    assert_eq!(log_a, log_b);
    assert!(log_a.iter().all(|s| s.l_cs == 0.0 && s.l_total == s.l_ds));

    let multitask = config(1);
    let mut model = small_model(&tokenizer, 4);
    assert!(train(&multitask, &examples, &mut model, Exec::Parallel, |_, _| Ok(None)).is_err());
}

#[test]
fn sweep_trains_on_nested_prefixes() {
    let (examples, tokenizer) = toy::prepared(12, 5, Exec::Parallel).unwrap();
    let references = toy::corpus(12, commonsum::corpus::Split::Train, 5);
    let fractions = [0.25, 0.5, 1.0];
    let subsets = nested_subsets(examples.len(), &fractions, 5).unwrap();
    let mut seen = Vec::new();
    let points = data_efficiency_sweep(&fractions, examples.len(), 5, |fraction, indices| {
        seen.push(indices.to_vec());
        let subset: Vec<TrainingExample> = indices.iter().map(|&i| examples[i].clone()).collect();
        let mut model = small_model(&tokenizer, 5);
        train(&config(1), &subset, &mut model, Exec::Parallel, |_, _| Ok(None))?;
        let outputs: std::collections::HashMap<String, String> = subset
            .iter()
            .map(|ex| {
                let d = summarize_text(&model, &tokenizer, ex.input(), DecodeConfig { beam: 2, max_output_len: 8 })?;
                Ok((ex.id.clone(), d.text))
            })
            .collect::<Result<_, commonsum::multitask::ModelError>>()?;
        let refs = commonsum::corpus::Corpus::new(
            "toy",
            commonsum::corpus::Split::Train,
            references
                .examples
                .iter()
                .filter(|e| subset.iter().any(|s| s.id == e.dialogue.id))
                .cloned()
                .collect(),
        )
        .unwrap();
        assert!(fraction > 0.0);
        evaluate_corpus(&outputs, &refs, &OneHotEmbedder::new(), &model.fingerprint(), Exec::Parallel)
    })
    .unwrap();
    assert_eq!(seen, subsets);
    assert_eq!(points.iter().map(|p| p.example_count).collect::<Vec<_>>(), vec![3, 6, 12]);
    for w in seen.windows(2) {
        assert!(w[0].iter().all(|i| w[1].contains(i)));
    }
}
