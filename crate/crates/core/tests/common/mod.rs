//! Oracles shared by the component tests and the acceptance target.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtqa::autodiff::{kernels, ParamStore, Tape, Tensor, Var};
use rtqa::corpus::TokenId;
use rtqa::encoder::{pack_context, pack_qgen_input, pack_question_context, Encoder, EncoderConfig};
use rtqa::qgen::{question_targets, NextTokenModel, QGenConfig, QGenMode, QuestionGenerator};
use rtqa::span::{
    enumerate_spans, Answer, AnswerExtractor, IndependentHead, JointHead, QaHead, QaModel, Span, SpanDistribution,
    SpanModelConfig, SpanScoring,
};

/// First token id that is not reserved.
pub const FIRST_WORD: TokenId = 5;

pub fn tiny_encoder(vocab: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab,
        hidden: 8,
        layers: 2,
        heads: 2,
        ff: 12,
        max_positions: 32,
    }
}

/// Ordinary tokens with a length drawn from `lens`.
pub fn random_tokens(rng: &mut impl Rng, lens: std::ops::Range<usize>, vocab: usize) -> Vec<TokenId> {
    let len = rng.gen_range(lens);
    (0..len).map(|_| rng.gen_range(FIRST_WORD..vocab)).collect()
}

pub fn random_span(rng: &mut impl Rng, ctx_len: usize, max_len: usize) -> Span {
    let start = rng.gen_range(0..ctx_len);
    let end = rng.gen_range(start..ctx_len.min(start + max_len));
    Span { start, end }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

/// Encoder with every head used by the models, sharing one parameter store.
pub struct FullStack {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub joint: JointHead,
    pub independent: IndependentHead,
    pub qa: QaHead,
}

impl FullStack {
    pub fn new(cfg: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(cfg, &mut store, "encoder", &mut rng).unwrap();
        let joint = JointHead::new(&mut store, "joint", cfg.hidden, cfg.hidden, &mut rng);
        let independent = IndependentHead::new(&mut store, "independent", cfg.hidden, &mut rng);
        let qa = QaHead::new(&mut store, "qa", cfg.hidden, &mut rng);
        // Non-trivial norms and biases so their gradients are exercised away
        // from the identity initialization.
        for (id, name, _) in store.iter().map(|(i, n, t)| (i, n.to_string(), t.clone())).collect::<Vec<_>>() {
            if name.contains("norm") || name.ends_with("bias") {
                for v in store.get_mut(id).data_mut() {
                    *v += rng.gen_range(-0.3..0.3);
                }
            }
        }
        Self {
            store,
            encoder,
            joint,
            independent,
            qa,
        }
    }
}

/// A scalar that routes through every head: span losses for both scorers,
/// the QA loss with a NULL target and a span target, and a language-model
/// loss over the question slot of the generation layout.
pub struct GradProblem {
    pub context: Vec<TokenId>,
    pub question: Vec<TokenId>,
    pub gold: Span,
    pub slot_len: usize,
}

impl GradProblem {
    pub fn random(rng: &mut impl Rng, vocab: usize) -> Self {
        let context = random_tokens(rng, 3..7, vocab);
        let question = random_tokens(rng, 1..4, vocab);
        let gold = random_span(rng, context.len(), 3);
        Self {
            context,
            question,
            gold,
            slot_len: 5,
        }
    }

    pub fn loss(&self, m: &FullStack, tape: &mut Tape) -> Var {
        let s = &m.store;
        let spans = enumerate_spans(self.context.len(), 3);
        let target = spans.binary_search(&self.gold).unwrap();

        let input = pack_context(&self.context, None).unwrap();
        let h = m.encoder.encode(tape, s, &input).unwrap();
        let ctx = tape.slice(h, 0, input.context_start, self.context.len()).unwrap();
        let joint = m.joint.score_spans(tape, s, ctx, &spans).unwrap();
        let l_joint = tape.cross_entropy(joint, target).unwrap();
        let indep = m.independent.score_spans(tape, s, ctx, &spans).unwrap();
        let l_indep = tape.cross_entropy(indep, target).unwrap();

        let input = pack_question_context(&self.question, &self.context).unwrap();
        let h = m.encoder.encode(tape, s, &input).unwrap();
        let ctx = tape.slice(h, 0, input.context_start, self.context.len()).unwrap();
        let all = enumerate_spans(self.context.len(), self.context.len());
        let qa = m.qa.score_answers(tape, s, ctx, &all).unwrap();
        let l_null = tape.cross_entropy(qa, all.len()).unwrap();
        let l_span = tape.cross_entropy(qa, all.binary_search(&self.gold).unwrap()).unwrap();

        let targets = question_targets(&self.question, self.slot_len);
        let input = pack_qgen_input(&targets[..targets.len() - 1], &self.context, self.gold, self.slot_len).unwrap();
        let h = m.encoder.encode(tape, s, &input).unwrap();
        let rows = tape.slice(h, 0, 0, targets.len()).unwrap();
        let logits = m.encoder.lm_logits(tape, s, rows).unwrap();
        let per = tape.cross_entropy_rows(logits, &targets).unwrap();
        let l_lm = tape.mean(per).unwrap();

        let mut total = l_joint;
        for l in [l_indep, l_null, l_span, l_lm] {
            total = tape.add(total, l).unwrap();
        }
        total
    }

    fn value(&self, m: &FullStack) -> f64 {
        let mut tape = Tape::inference();
        let l = self.loss(m, &mut tape);
        tape.value(l).item()
    }
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub failed: usize,
    pub worst_rel: f64,
    pub tensors: usize,
}

/// Central differences on `per_tensor` random coordinates of every
/// parameter tensor. A coordinate passes when
/// `|analytic - numeric| <= rel_tol * max(|analytic|, |numeric|) + 1e-9`;
/// the absolute floor only matters for gradients that are zero.
pub fn gradcheck(seed: u64, per_tensor: usize, rel_tol: f64) -> GradReport {
    let vocab = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FullStack::new(tiny_encoder(vocab), seed);
    let problem = GradProblem::random(&mut rng, vocab);

    m.store.zero_grad();
    let mut tape = Tape::new();
    let l = problem.loss(&m, &mut tape);
    let grads = tape.backward(l).unwrap();
    grads.accumulate_into(&tape, &mut m.store, 1.0);
    drop(tape);

    let ids: Vec<_> = m.store.ids().collect();
    let mut report = GradReport {
        tensors: ids.len(),
        ..GradReport::default()
    };
    let eps = 1e-5;
    for id in ids {
        let n = m.store.get(id).numel();
        let analytic = m.store.get(id).grad().expect("parameters track gradients").to_vec();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.gen_range(0..n)).collect()
        };
        for c in coords {
            let orig = m.store.get(id).data()[c];
            m.store.get_mut(id).data_mut()[c] = orig + eps;
            let up = problem.value(&m);
            m.store.get_mut(id).data_mut()[c] = orig - eps;
            let down = problem.value(&m);
            m.store.get_mut(id).data_mut()[c] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[c];
            let diff = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-7 {
                report.worst_rel = report.worst_rel.max(diff / scale);
            }
            report.checked += 1;
            if diff > rel_tol * scale + 1e-9 {
                report.failed += 1;
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Normalization

#[derive(Debug, Default)]
pub struct NormReport {
    pub distributions: usize,
    pub attention_rows: usize,
    pub worst: f64,
}

impl NormReport {
    fn see(&mut self, total: f64) {
        self.worst = self.worst.max((total - 1.0).abs());
    }
}

/// `cases` random instances: span distributions from both extractor
/// scorings and the QA model on random inputs, distributions from raw
/// scores with extreme ranges, and every attention row of every layer.
pub fn normalization_suite(cases: usize, seed: u64) -> NormReport {
    let vocab = 14;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = tiny_encoder(vocab);
    let models: Vec<(AnswerExtractor, QaModel)> = (0..4)
        .map(|i| {
            let scoring = if i % 2 == 0 { SpanScoring::Joint } else { SpanScoring::Independent };
            let cfg = SpanModelConfig {
                max_answer_len: 4,
                scoring,
            };
            (AnswerExtractor::new(enc, cfg, seed + i).unwrap(), QaModel::new(enc, seed + i).unwrap())
        })
        .collect();
    let mut report = NormReport::default();
    for case in 0..cases {
        let (ex, qa) = &models[case % models.len()];
        let ctx = random_tokens(&mut rng, 1..12, vocab);
        let q = random_tokens(&mut rng, 0..6, vocab);

        for d in [ex.answer_distribution(&ctx).unwrap(), qa.qa_distribution(&ctx, &q).unwrap()] {
            report.see(d.probs().iter().sum());
            report.distributions += 1;
        }

        let n = rng.gen_range(1..200);
        let range = 10f64.powi(rng.gen_range(0..4));
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-range..range)).collect();
        let answers = vec![Answer::Null; n];
        let d = SpanDistribution::from_scores(answers, &scores).unwrap();
        report.see(d.probs().iter().sum());
        report.distributions += 1;

        let input = match case % 3 {
            0 => pack_context(&ctx, None).unwrap(),
            1 => pack_question_context(&q, &ctx).unwrap(),
            _ => {
                let answer = random_span(&mut rng, ctx.len(), 3);
                pack_qgen_input(&q, &ctx, answer, 6).unwrap()
            }
        };
        for map in qa.encoder.attention_maps(&qa.params, &input).unwrap() {
            let width = *map.shape().last().unwrap();
            for row in map.data().chunks(width) {
                report.see(row.iter().sum());
                report.attention_rows += 1;
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Mask causality

fn slot_rows(m: &QuestionGenerator, prefix: &[TokenId], answer: Span, ctx: &[TokenId]) -> Tensor {
    let mut tape = Tape::inference();
    let h = m.slot_hidden(&mut tape, prefix, answer, ctx).unwrap();
    tape.value(h).clone()
}

fn context_rows(m: &QuestionGenerator, prefix: &[TokenId], answer: Span, ctx: &[TokenId]) -> Tensor {
    let input = pack_qgen_input(prefix, ctx, answer, m.config.slot_len).unwrap();
    let mut tape = Tape::inference();
    let h = m.encoder.encode(&mut tape, &m.params, &input).unwrap();
    let rows = tape.slice(h, 0, input.context_start, ctx.len()).unwrap();
    tape.value(rows).clone()
}

#[derive(Debug, Default)]
pub struct CausalityReport {
    pub cases: usize,
    pub context_violations: usize,
    pub future_violations: usize,
}

/// Mutation tests on random generators of both architectures: (a) the
/// context rows of the generation layout do not change when the question
/// prefix is replaced, (b) slot row `i` does not change when tokens after
/// position `i` are replaced. Both compared with exact equality.
pub fn mask_causality_suite(cases: usize, seed: u64) -> CausalityReport {
    let vocab = 14;
    let slot = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = tiny_encoder(vocab);
    let models: Vec<QuestionGenerator> = [QGenMode::EncoderOnly, QGenMode::Seq2Seq, QGenMode::EncoderOnly]
        .iter()
        .enumerate()
        .map(|(i, &mode)| QuestionGenerator::new(enc, QGenConfig { slot_len: slot, mode }, seed + i as u64).unwrap())
        .collect();
    let mut report = CausalityReport::default();
    for case in 0..cases {
        let m = &models[case % models.len()];
        let ctx = random_tokens(&mut rng, 1..10, vocab);
        let answer = random_span(&mut rng, ctx.len(), 4);
        let q = random_tokens(&mut rng, 0..slot, vocab);

        if m.decoder.is_none() {
            let other = random_tokens(&mut rng, 0..slot, vocab);
            if context_rows(m, &q, answer, &ctx).data() != context_rows(m, &other, answer, &ctx).data() {
                report.context_violations += 1;
            }
        }

        // Row i sees slot tokens 0..=i, i.e. CLS and q[..i]; rows past the
        // prefix hold PAD and are not predictions.
        let i = rng.gen_range(0..=q.len());
        let mut mutated: Vec<TokenId> = q.iter().copied().take(i).collect();
        mutated.extend(random_tokens(&mut rng, 0..slot - i, vocab));
        let (a, b) = (slot_rows(m, &q, answer, &ctx), slot_rows(m, &mutated, answer, &ctx));
        if (0..=i).any(|r| a.row(r) != b.row(r)) {
            report.future_violations += 1;
        }
        report.cases += 1;
    }
    report
}

// ---------------------------------------------------------------------------
// Single-pass vs incremental question losses

/// Number of `(example, position)` pairs where the masked single-pass loss
/// differs (bitwise) from the loss of an incremental pass on the prefix,
/// and the number of examples checked.
pub fn training_trick_suite(examples: usize, seed: u64) -> (usize, usize) {
    let vocab = 14;
    let slot = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc = tiny_encoder(vocab);
    let mut mismatches = 0;
    for e in 0..examples {
        let mode = if e % 2 == 0 { QGenMode::EncoderOnly } else { QGenMode::Seq2Seq };
        let m = QuestionGenerator::new(enc, QGenConfig { slot_len: slot, mode }, seed + e as u64).unwrap();
        let ctx = random_tokens(&mut rng, 1..10, vocab);
        let q = random_tokens(&mut rng, 0..slot + 2, vocab);
        let answer = random_span(&mut rng, ctx.len(), 4);
        let mut tape = Tape::inference();
        let per = m.position_losses(&mut tape, &q, answer, &ctx).unwrap();
        let single = tape.data(per).to_vec();
        let targets = question_targets(&q, slot);
        for (i, &t) in targets.iter().enumerate() {
            let logits = m.next_token_logits(&targets[..i], answer, &ctx).unwrap();
            if single[i] != -kernels::log_softmax(logits.data())[t] {
                mismatches += 1;
            }
        }
    }
    (mismatches, examples)
}

// ---------------------------------------------------------------------------
// Mock next-token models

pub const ANY_SPAN: Span = Span { start: 0, end: 0 };

/// Deterministic pseudo-random logits as a function of the prefix.
pub struct HashLm {
    pub vocab: usize,
    pub len: usize,
    pub end: Option<TokenId>,
    pub salt: u64,
}

impl NextTokenModel for HashLm {
    fn max_len(&self) -> usize {
        self.len
    }

    fn next_log_probs(&self, prefix: &[TokenId], _: Span, _: &[TokenId]) -> rtqa::Result<Vec<f64>> {
        let mut h = self.salt;
        for &t in prefix {
            h = h.wrapping_mul(6364136223846793005).wrapping_add(t as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        let logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Ok(kernels::log_softmax(&logits))
    }

    fn end_token(&self) -> Option<TokenId> {
        self.end
    }

    fn allowed(&self, _: TokenId) -> bool {
        true
    }
}

/// The same logits at every step.
pub struct FixedLm {
    pub len: usize,
    pub logits: Vec<f64>,
}

impl NextTokenModel for FixedLm {
    fn max_len(&self) -> usize {
        self.len
    }

    fn next_log_probs(&self, _: &[TokenId], _: Span, _: &[TokenId]) -> rtqa::Result<Vec<f64>> {
        Ok(kernels::log_softmax(&self.logits))
    }

    fn end_token(&self) -> Option<TokenId> {
        None
    }

    fn allowed(&self, _: TokenId) -> bool {
        true
    }
}

/// Best complete sequence by enumerating every continuation; ties go to the
/// lexicographically smallest sequence.
pub fn brute_force<M: NextTokenModel>(m: &M, vocab: usize) -> (Vec<TokenId>, f64) {
    fn go<M: NextTokenModel>(m: &M, vocab: usize, prefix: &mut Vec<TokenId>, score: f64, best: &mut (Vec<TokenId>, f64)) {
        let done = prefix.len() == m.max_len() || (m.end_token().is_some() && prefix.last().copied() == m.end_token());
        if done {
            if score > best.1 || (score == best.1 && *prefix < best.0) {
                *best = (prefix.clone(), score);
            }
            return;
        }
        let lp = m.next_log_probs(prefix, ANY_SPAN, &[]).unwrap();
        for t in 0..vocab {
            prefix.push(t);
            go(m, vocab, prefix, score + lp[t], best);
            prefix.pop();
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(m, vocab, &mut Vec::new(), 0.0, &mut best);
    best
}

// ---------------------------------------------------------------------------
// Metrics and β

/// `(prediction, gold, EM, F1)` scored by hand after lowercasing, stripping
/// punctuation and dropping a/an/the.
pub const EM_F1_CASES: [(Option<&str>, Option<&str>, f64, f64); 20] = [
    (Some("1903"), Some("1903"), 1.0, 1.0),
    (Some("over 90,000"), Some("90,000"), 0.0, 2.0 / 3.0),
    (None, None, 1.0, 1.0),
    (None, Some("1903"), 0.0, 0.0),
    (Some("1903"), None, 0.0, 0.0),
    (Some("The Boston Red Sox"), Some("boston red sox"), 1.0, 1.0),
    (Some("Red Sox."), Some("red sox"), 1.0, 1.0),
    (Some("boston"), Some("boston red sox"), 0.0, 0.5),
    (Some("red sox boston"), Some("boston red sox"), 0.0, 1.0),
    (Some("pittsburgh pirates"), Some("boston red sox"), 0.0, 0.0),
    (Some("a"), Some("the"), 1.0, 1.0),
    (Some("an apple"), Some("apple"), 1.0, 1.0),
    (Some("in 1903"), Some("1903"), 0.0, 2.0 / 3.0),
    (Some("the world series in 1903"), Some("world series"), 0.0, 2.0 * 0.5 * 1.0 / 1.5),
    (Some("sox sox"), Some("sox"), 0.0, 2.0 * 0.5 * 1.0 / 1.5),
    (Some("sox"), Some("sox sox"), 0.0, 2.0 * 1.0 * 0.5 / 1.5),
    (Some("MIT"), Some("mit"), 1.0, 1.0),
    (Some("  extra   spaces "), Some("extra spaces"), 1.0, 1.0),
    // "a" is an article, so the prediction is "b c d": p = 2/3, r = 1/3.
    (Some("a b c d"), Some("c d e f g h"), 0.0, 4.0 / 9.0),
    (Some("!!"), Some("?"), 1.0, 1.0),
];

/// Indices of fixture cases whose EM or F1 (1e-12) disagree.
pub fn metric_mismatches() -> Vec<usize> {
    use rtqa::training::{exact_match, f1};
    EM_F1_CASES
        .iter()
        .enumerate()
        .filter(|(_, (p, g, em, f))| exact_match(*p, *g) != *em || (f1(*p, *g) - f).abs() > 1e-12)
        .map(|(i, _)| i)
        .collect()
}

pub fn qa_encoder(vocab: usize) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab,
        hidden: 8,
        layers: 1,
        heads: 2,
        ff: 16,
        max_positions: 64,
    }
}

pub fn toy_data(seed: u64, docs: usize) -> (rtqa::corpus::Vocabulary, Vec<rtqa::corpus::LabeledExample>) {
    let w = rtqa::corpus::generate_toy_world(seed, docs, &rtqa::corpus::ToyConfig::default()).unwrap();
    let ex = w.labeled_examples().into_iter().map(|e| e.example).collect();
    (w.vocab, ex)
}

/// `(beta_triples, recomputation)` on toy triples plus one unanswerable:
/// the mean over triples of `log_softmax(answer scores)` at the target.
pub fn beta_triples_oracle() -> (f64, f64) {
    use rtqa::corpus::LabeledExample;
    use rtqa::training::{beta_triples, BetaConfig};
    let (vocab, ex) = toy_data(3, 2);
    let model = QaModel::new(qa_encoder(vocab.len()), 5).unwrap();
    let mut triples: Vec<LabeledExample> = ex.into_iter().take(6).collect();
    triples.push(LabeledExample::unanswerable(triples[0].context.clone(), triples[1].question.clone()));
    let got = beta_triples(&model, &triples, &BetaConfig::default()).unwrap();
    let mut sum = 0.0;
    for t in &triples {
        let mut tape = Tape::inference();
        let (answers, scores) = model.answer_scores(&mut tape, &t.context, &t.question).unwrap();
        let lp = kernels::log_softmax(tape.data(scores));
        let target = t.answer.map_or(Answer::Null, Answer::Span);
        let idx = answers.iter().position(|a| *a == target).unwrap();
        sum += lp[idx];
    }
    (got, sum / triples.len() as f64)
}

/// Generator with one question token from `{5, 6}` whose probabilities
/// depend on the answer, so every question is enumerable.
pub struct TwoQuestions;

impl NextTokenModel for TwoQuestions {
    fn max_len(&self) -> usize {
        1
    }

    fn next_log_probs(&self, _: &[TokenId], answer: Span, _: &[TokenId]) -> rtqa::Result<Vec<f64>> {
        let mut logits = vec![-3.0; 8];
        logits[5] = 0.4 * answer.start as f64;
        logits[6] = -0.3 * answer.end as f64;
        Ok(kernels::log_softmax(&logits))
    }

    fn end_token(&self) -> Option<TokenId> {
        None
    }

    fn allowed(&self, t: TokenId) -> bool {
        t == 5 || t == 6
    }
}

pub fn enumerable_instance() -> (Vec<TokenId>, AnswerExtractor, QaModel) {
    let context = vec![9, 10, 11, 12];
    let cfg = SpanModelConfig {
        max_answer_len: 2,
        ..SpanModelConfig::default()
    };
    let extractor = AnswerExtractor::new(qa_encoder(16), cfg, 21).unwrap();
    let qa = QaModel::new(qa_encoder(16), 22).unwrap();
    (context, extractor, qa)
}

/// `(exhaustive expectation β, hand double sum)` on the enumerable
/// instance: `Σ_a p(a|c) Σ_q p(q|a,c) log p(a|c,q)` over the two best
/// spans (renormalized) and both questions, written out in closed form.
pub fn beta_double_sum_oracle() -> (f64, f64) {
    use rtqa::span::top_k_answers;
    use rtqa::training::{beta_expectation_exhaustive, BetaConfig, BetaVariant};
    let (c, extractor, qa) = enumerable_instance();
    let cfg = BetaConfig {
        variant: BetaVariant::Expectation,
        k_top: 2,
        ..BetaConfig::default()
    };
    let got = beta_expectation_exhaustive(&[c.clone()], &extractor, &TwoQuestions, &qa, &cfg).unwrap();
    let d = extractor.answer_distribution(&c).unwrap();
    let top = top_k_answers(&d, 2);
    let pa: Vec<f64> = top.iter().map(|&s| d.prob(&Answer::Span(s))).collect();
    let za: f64 = pa.iter().sum();
    let mut want = 0.0;
    for (a, p) in top.iter().zip(&pa) {
        let (l5, l6) = (0.4 * a.start as f64, -0.3 * a.end as f64);
        let z = l5.exp() + l6.exp();
        for (q, pq) in [(5usize, l5.exp() / z), (6, l6.exp() / z)] {
            let dq = qa.qa_distribution(&c, &[q]).unwrap();
            want += p / za * pq * dq.log_prob(&Answer::Span(*a));
        }
    }
    (got, want)
}

/// Whether the combined objective with λ = 0 leaves every parameter
/// bit-identical to plain supervised training.
pub fn lambda_zero_bit_identical(dropout: f64) -> bool {
    use rtqa::autodiff::AdamState;
    use rtqa::training::{train_combined, train_qa, BetaConfig, TrainConfig};
    let (vocab, ex) = toy_data(11, 6);
    let (labeled, synthetic) = (&ex[..24], &ex[24..72]);
    let train = TrainConfig {
        batch_size: 5,
        lr: 3e-3,
        epochs: 2,
        seed: 7,
        dropout,
    };
    let mut a = QaModel::new(qa_encoder(vocab.len()), 1).unwrap();
    let mut b = a.clone();
    let mut sa = AdamState::new(&a.params, train.adam());
    let mut sb = AdamState::new(&b.params, train.adam());
    train_qa(&mut a, labeled, &train, &mut sa).unwrap();
    let beta = BetaConfig {
        lambda: 0.0,
        ..BetaConfig::default()
    };
    train_combined(&mut b, labeled, synthetic, &train, &beta, &mut sb).unwrap();
    let same = a.params.flat_values().iter().zip(b.params.flat_values()).all(|(p, q)| p.to_bits() == q.to_bits());
    same
}
