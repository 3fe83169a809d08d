use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtqa::autodiff::AdamState;
use rtqa::corpus::{LabeledExample, Vocabulary};
use rtqa::span::{top_k_answers, Answer, QaModel};
use rtqa::training::*;

mod common;
use common::{enumerable_instance, qa_encoder as tiny, toy_data, TwoQuestions};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn em_f1_fixture() {
    assert_eq!(common::metric_mismatches(), Vec::<usize>::new());
    for (p, g, _, _) in common::EM_F1_CASES {
        assert!(exact_match(p, g) <= f1(p, g) + 1e-12);
    }
}

#[test]
fn beta_triples_matches_recomputation() {
    let (got, want) = common::beta_triples_oracle();
    assert!(close(got, want, 1e-9), "{got} vs {want}");
}

#[test]
fn beta_triples_edge_cases() {
    let (vocab, ex) = toy_data(3, 1);
    let model = QaModel::new(tiny(vocab.len()), 5).unwrap();
    assert!(beta_triples(&model, &[], &BetaConfig::default()).is_err());

    // Margin shape counts triples at or above the threshold.
    let triples: Vec<LabeledExample> = ex.into_iter().take(5).collect();
    let probs: Vec<f64> = triples
        .iter()
        .map(|t| {
            let d = model.qa_distribution(&t.context, &t.question).unwrap();
            d.prob(&Answer::Span(t.answer.unwrap()))
        })
        .collect();
    let mu = {
        let mut p = probs.clone();
        p.sort_by(f64::total_cmp);
        (p[1] + p[2]) / 2.0
    };
    let cfg = BetaConfig {
        shape: BetaShape::Margin,
        margin: mu,
        ..BetaConfig::default()
    };
    let expect = probs.iter().filter(|&&p| p >= mu).count() as f64 / 5.0;
    assert_eq!(beta_triples(&model, &triples, &cfg).unwrap(), expect);
    assert_eq!(expect, 0.6);
}

#[test]
fn exhaustive_beta_matches_double_sum() {
    let (got, want) = common::beta_double_sum_oracle();
    assert!(close(got, want, 1e-9), "{got} vs {want}");
}

#[test]
fn monte_carlo_beta_concentrates_with_more_samples() {
    let (c, extractor, qa) = enumerable_instance();
    let exact = beta_expectation_exhaustive(
        &[c.clone()],
        &extractor,
        &TwoQuestions,
        &qa,
        &BetaConfig {
            k_top: 2,
            ..BetaConfig::default()
        },
    )
    .unwrap();
    let spread = |samples: usize| {
        let cfg = BetaConfig {
            variant: BetaVariant::Expectation,
            k_top: 2,
            samples_per_context: samples,
            ..BetaConfig::default()
        };
        let runs: Vec<f64> = (0..40)
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                beta_expectation(&[c.clone()], &extractor, &TwoQuestions, &qa, &cfg, &mut rng).unwrap()
            })
            .collect();
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        let var = runs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (runs.len() - 1) as f64;
        (mean, var)
    };
    let (m10, v10) = spread(10);
    let (m100, v100) = spread(100);
    assert!(v100 < v10, "variance {v100} at 100 draws vs {v10} at 10");
    assert!((m100 - exact).abs() < (m10 - exact).abs() + 3.0 * v10.sqrt());
    assert!((m100 - exact).abs() < 4.0 * (v100 / 40.0).sqrt() + 1e-9, "mean {m100} vs exact {exact}");
}

#[test]
fn perfect_reanswer_gives_zero_beta() {
    let (c, extractor, mut qa) = enumerable_instance();
    // One proposed answer, and a QA model trained until it is certain of it
    // for both questions.
    let cfg = BetaConfig {
        variant: BetaVariant::Expectation,
        k_top: 1,
        ..BetaConfig::default()
    };
    let d = extractor.answer_distribution(&c).unwrap();
    let a = top_k_answers(&d, 1)[0];
    let data: Vec<LabeledExample> = [5, 6].iter().map(|&q| LabeledExample::with_answer(c.clone(), vec![q], a)).collect();
    let train = TrainConfig {
        batch_size: 2,
        lr: 0.05,
        epochs: 300,
        seed: 0,
        dropout: 0.0,
    };
    let mut state = AdamState::new(&qa.params, train.adam());
    train_qa(&mut qa, &data, &train, &mut state).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let b = beta_expectation(&[c], &extractor, &TwoQuestions, &qa, &cfg, &mut rng).unwrap();
    assert!(b <= 0.0 && b > -1e-3, "{b}");
}

fn toy_split() -> (Vocabulary, Vec<LabeledExample>, Vec<LabeledExample>, Vec<LabeledExample>) {
    let (vocab, ex) = toy_data(11, 6);
    let labeled = ex[..24].to_vec();
    let synthetic = ex[24..72].to_vec();
    let dev = ex[72..].to_vec();
    (vocab, labeled, synthetic, dev)
}

#[test]
fn lambda_zero_is_bit_identical_to_supervised_training() {
    assert!(common::lambda_zero_bit_identical(0.0));
    assert!(common::lambda_zero_bit_identical(0.2));
}

#[test]
fn margin_shape_cannot_train() {
    let (vocab, labeled, synthetic, _) = toy_split();
    let mut m = QaModel::new(tiny(vocab.len()), 1).unwrap();
    let train = TrainConfig::toy(1, 0);
    let mut s = AdamState::new(&m.params, train.adam());
    let beta = BetaConfig {
        shape: BetaShape::Margin,
        ..BetaConfig::default()
    };
    let err = train_combined(&mut m, &labeled, &synthetic, &train, &beta, &mut s).unwrap_err();
    assert!(err.to_string().contains("not differentiable"));
}

#[test]
fn large_lambda_raises_beta() {
    let (vocab, labeled, synthetic, _) = toy_split();
    let train = TrainConfig {
        batch_size: 4,
        lr: 3e-3,
        epochs: 8,
        seed: 2,
        dropout: 0.0,
    };
    let run = |lambda: f64| {
        let mut m = QaModel::new(tiny(vocab.len()), 4).unwrap();
        let mut s = AdamState::new(&m.params, train.adam());
        let beta = BetaConfig {
            lambda,
            ..BetaConfig::default()
        };
        let log = train_combined(&mut m, &labeled, &synthetic, &train, &beta, &mut s).unwrap();
        assert!(log.losses.iter().chain(&log.betas).all(|v| v.is_finite()));
        beta_triples(&m, &synthetic, &BetaConfig::default()).unwrap()
    };
    let (b0, b5) = (run(0.0), run(5.0));
    assert!(b5 > b0, "beta with lambda 5: {b5}, lambda 0: {b0}");
}

#[test]
fn staged_training_without_labels_stops_after_pretraining() {
    let (vocab, _, synthetic, dev) = toy_split();
    let cfg = StagedConfig {
        pretrain: TrainConfig {
            batch_size: 8,
            lr: 3e-3,
            epochs: 3,
            seed: 1,
            dropout: 0.0,
        },
        finetune: TrainConfig::toy(2, 1),
    };
    let mut staged = QaModel::new(tiny(vocab.len()), 9).unwrap();
    let mut plain = staged.clone();
    let report = train_staged(&mut staged, &synthetic, &[], &dev, &vocab, &cfg).unwrap();
    let mut s = AdamState::new(&plain.params, cfg.pretrain.adam());
    train_qa(&mut plain, &synthetic, &cfg.pretrain, &mut s).unwrap();
    assert_eq!(staged.params.flat_values(), plain.params.flat_values());
    assert!(report.beta_after_pretrain > report.beta_init);
    assert_eq!(report.beta_final, report.beta_after_pretrain);
    assert!(report.finetune_losses.is_empty());
    assert!(train_staged(&mut staged, &[], &synthetic, &dev, &vocab, &cfg).is_err());
}

#[test]
fn qa_loss_decreases_on_a_repeated_batch() {
    let (vocab, labeled, _, _) = toy_split();
    let batch = labeled[..4].to_vec();
    let mut m = QaModel::new(tiny(vocab.len()), 3).unwrap();
    let train = TrainConfig {
        batch_size: 4,
        lr: 1e-3,
        epochs: 10,
        seed: 0,
        dropout: 0.0,
    };
    let mut s = AdamState::new(&m.params, train.adam());
    let log = train_qa(&mut m, &batch, &train, &mut s).unwrap();
    assert_eq!(log.losses.len(), 10);
    assert!(log.losses.windows(2).all(|w| w[1] < w[0]), "{:?}", log.losses);
}

#[test]
fn learning_curve_rows_and_csv() {
    let (vocab, labeled, synthetic, dev) = toy_split();
    let staged = StagedConfig {
        pretrain: TrainConfig::toy(1, 0),
        finetune: TrainConfig::toy(1, 0),
    };
    let cfg = CurveConfig {
        sizes: vec![0, 8, 16],
        seeds: vec![1, 2],
        encoder: tiny(vocab.len()),
        staged,
        beta_probe: 4,
        wall_clock: false,
    };
    let arms = vec![
        CurveArm {
            arm: Arm::Rt,
            pool: synthetic[..20].to_vec(),
        },
        CurveArm {
            arm: Arm::NoRt,
            pool: synthetic.clone(),
        },
    ];
    let rows = learning_curve(&arms, &labeled, &dev, &vocab, &cfg).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 2);
    let keys: Vec<(usize, &str, u64)> = rows.iter().map(|r| (r.size, r.arm.as_str(), r.seed)).collect();
    assert_eq!(keys[..4], [(0, "rt", 1), (0, "rt", 2), (0, "no-rt", 1), (0, "no-rt", 2)]);
    for r in &rows {
        assert!((0.0..=1.0).contains(&r.em) && (0.0..=1.0).contains(&r.f1) && r.em <= r.f1 + 1e-12);
        assert_eq!(r.wall_s, 0.0);
    }

    // Size 0 is the labeled-only baseline.
    let mut base = QaModel::new(cfg.encoder, 2).unwrap();
    finetune_only(&mut base, &labeled, &TrainConfig { seed: 2, ..staged.finetune }).unwrap();
    let s = evaluate_qa(&base, &dev, &vocab).unwrap();
    assert_eq!((rows[1].em, rows[1].f1), (s.em, s.f1));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    write_metrics_csv(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("arm,size,seed,em,f1,beta,wall_s\n"));
    assert_eq!(read_metrics_csv(&path).unwrap(), rows);

    let bad = CurveConfig {
        sizes: vec![8, 0],
        ..cfg
    };
    assert!(learning_curve(&arms, &labeled, &dev, &vocab, &bad).is_err());
}
