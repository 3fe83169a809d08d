//! Roundtrip generation: sample an answer from an unlabeled window, generate
//! a question for it, re-answer the question, and keep the triple only when
//! both answers agree. Kept questions paired with other windows of the same
//! page become unanswerable negatives.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledExample, TokenId, Window};
use crate::error::{contract, Error, Result};
use crate::qgen::{beam_search, greedy_decode, sample_decode_with, DecodeResult, QuestionGenerator};
use crate::span::{top_k_answers, Answer, AnswerExtractor, QaModel, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Identical `(start, end)`.
    SpanExact,
    /// Identical token text, wherever it occurs.
    TextNormalized,
}

impl MatchMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "span-exact" => Some(MatchMode::SpanExact),
            "text-normalized" => Some(MatchMode::TextNormalized),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum QuestionDecoding {
    Greedy,
    Beam { width: usize },
    Sample { temperature: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Answers are drawn uniformly from this many most probable spans.
    pub k_top: usize,
    /// Target fraction of negatives in the emitted set.
    pub negatives_ratio: f64,
    pub match_mode: MatchMode,
    pub decoding: QuestionDecoding,
    pub seed: u64,
    /// Names the model triple that produced the data.
    pub source_tag: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_top: 10,
            negatives_ratio: 0.0,
            match_mode: MatchMode::TextNormalized,
            decoding: QuestionDecoding::Greedy,
            seed: 0,
            source_tag: "default".into(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_top == 0 {
            return Err(contract("k_top must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.negatives_ratio) {
            return Err(contract("negatives ratio must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Positive,
    Negative,
}

/// One generated record. For positives `answer` is the sampled span and
/// `reanswer` the QA model's prediction (`None` = NULL); negatives carry no
/// answer and expect NULL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTriple {
    pub doc_id: usize,
    pub window_id: usize,
    pub context_tokens: Vec<TokenId>,
    pub question_tokens: Vec<TokenId>,
    pub answer_start: Option<usize>,
    pub answer_end: Option<usize>,
    pub reanswer_start: Option<usize>,
    pub reanswer_end: Option<usize>,
    pub kept: bool,
    pub label: Label,
    pub match_mode: MatchMode,
    pub source_tag: String,
    /// Window the question was generated from; differs from `window_id`
    /// only for negatives.
    pub source_window_id: usize,
    #[serde(default)]
    pub diagnostic: Option<String>,
}

impl SyntheticTriple {
    pub fn answer(&self) -> Option<Span> {
        Some(Span {
            start: self.answer_start?,
            end: self.answer_end?,
        })
    }

    pub fn reanswer(&self) -> Answer {
        match (self.reanswer_start, self.reanswer_end) {
            (Some(start), Some(end)) => Answer::Span(Span { start, end }),
            _ => Answer::Null,
        }
    }

    /// The QA training example this record stands for.
    pub fn to_example(&self) -> LabeledExample {
        LabeledExample {
            context: self.context_tokens.clone(),
            question: self.question_tokens.clone(),
            answer: self.answer(),
        }
    }
}

/// Whether the re-predicted answer agrees with the sampled one.
pub fn answers_match(a: Span, reanswer: Answer, context: &[TokenId], mode: MatchMode) -> bool {
    let Answer::Span(b) = reanswer else {
        return false;
    };
    match mode {
        MatchMode::SpanExact => a == b,
        MatchMode::TextNormalized => {
            a.within(context.len()) && b.within(context.len()) && a.slice(context) == b.slice(context)
        }
    }
}

/// Uniform draw among the `k_top` most probable extractor spans.
pub fn sample_answer<R: Rng + ?Sized>(
    window: &[TokenId],
    extractor: &AnswerExtractor,
    k_top: usize,
    rng: &mut R,
) -> Result<Span> {
    if window.is_empty() {
        return Err(contract("cannot sample an answer from an empty window"));
    }
    let d = extractor.answer_distribution(window)?;
    let top = top_k_answers(&d, k_top);
    Ok(top[rng.gen_range(0..top.len())])
}

fn decode_question<R: Rng + ?Sized>(
    qgen: &QuestionGenerator,
    answer: Span,
    context: &[TokenId],
    decoding: QuestionDecoding,
    rng: &mut R,
) -> Result<DecodeResult> {
    match decoding {
        QuestionDecoding::Greedy => greedy_decode(qgen, answer, context),
        QuestionDecoding::Beam { width } => beam_search(qgen, answer, context, width)
            .map(|mut r| r.swap_remove(0)),
        QuestionDecoding::Sample { temperature } => sample_decode_with(qgen, answer, context, temperature, rng),
    }
}

/// The three models of one generation run.
#[derive(Clone, Copy)]
pub struct ModelTriple<'a> {
    pub extractor: &'a AnswerExtractor,
    pub qgen: &'a QuestionGenerator,
    pub qa: &'a QaModel,
}

/// Answer → question → re-answer → match for one window.
pub fn generate_triple<R: Rng + ?Sized>(
    window: &Window,
    models: ModelTriple<'_>,
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<SyntheticTriple> {
    let context = &window.tokens;
    let answer = sample_answer(context, models.extractor, cfg.k_top, rng)?;
    let decoded = decode_question(models.qgen, answer, context, cfg.decoding, rng)?;
    let question = decoded.question().to_vec();
    let mut t = SyntheticTriple {
        doc_id: window.doc_id,
        window_id: window.window_id,
        context_tokens: context.clone(),
        question_tokens: question.clone(),
        answer_start: Some(answer.start),
        answer_end: Some(answer.end),
        reanswer_start: None,
        reanswer_end: None,
        kept: false,
        label: Label::Positive,
        match_mode: cfg.match_mode,
        source_tag: cfg.source_tag.clone(),
        source_window_id: window.window_id,
        diagnostic: None,
    };
    if question.is_empty() {
        t.diagnostic = Some("empty question".into());
        return Ok(t);
    }
    let reanswer = models.qa.qa_predict(context, &question)?;
    if let Answer::Span(s) = reanswer {
        t.reanswer_start = Some(s.start);
        t.reanswer_end = Some(s.end);
    }
    t.kept = answers_match(answer, reanswer, context, cfg.match_mode);
    Ok(t)
}

/// Number of negatives that makes them `ratio` of the emitted set.
pub fn negative_count(positives: usize, ratio: f64) -> usize {
    if ratio <= 0.0 {
        return 0;
    }
    (positives as f64 * ratio / (1.0 - ratio)).round() as usize
}

/// Pairs kept questions with a uniformly chosen window of the same page
/// that does not overlap the question's source window. Returns the
/// negatives and the number of kept triples that had no such window.
pub fn sample_negatives<R: Rng + ?Sized>(
    kept: &[SyntheticTriple],
    windows: &[Window],
    cfg: &PipelineConfig,
    rng: &mut R,
) -> Result<(Vec<SyntheticTriple>, usize)> {
    cfg.validate()?;
    let find = |doc: usize, id: usize| windows.iter().find(|w| w.doc_id == doc && w.window_id == id);
    let mut eligible = Vec::new();
    let mut skipped = 0;
    for t in kept {
        let Some(src) = find(t.doc_id, t.source_window_id) else {
            skipped += 1;
            continue;
        };
        let partners: Vec<&Window> = windows
            .iter()
            .filter(|w| w.page == src.page && !(w.doc_id == src.doc_id && w.overlaps(src)))
            .collect();
        if partners.is_empty() {
            skipped += 1;
        } else {
            eligible.push((t, partners));
        }
    }
    let wanted = negative_count(kept.len(), cfg.negatives_ratio);
    let mut out = Vec::with_capacity(wanted);
    if eligible.is_empty() {
        return Ok((out, skipped));
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.shuffle(rng);
    for j in 0..wanted {
        let (t, partners) = &eligible[order[j % order.len()]];
        let w = partners[rng.gen_range(0..partners.len())];
        out.push(SyntheticTriple {
            doc_id: w.doc_id,
            window_id: w.window_id,
            context_tokens: w.tokens.clone(),
            question_tokens: t.question_tokens.clone(),
            answer_start: None,
            answer_end: None,
            reanswer_start: None,
            reanswer_end: None,
            kept: true,
            label: Label::Negative,
            match_mode: cfg.match_mode,
            source_tag: cfg.source_tag.clone(),
            source_window_id: t.source_window_id,
            diagnostic: None,
        });
    }
    Ok((out, skipped))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub attempted: usize,
    pub kept: usize,
    pub discarded: usize,
    pub negatives: usize,
    /// Windows no triple could be generated for.
    pub skipped: usize,
    /// Kept questions whose page offered no non-overlapping window.
    pub negatives_skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    /// Positives in window order, then negatives.
    pub triples: Vec<SyntheticTriple>,
    pub summary: PipelineSummary,
}

impl PipelineOutput {
    pub fn kept(&self) -> impl Iterator<Item = &SyntheticTriple> {
        self.triples.iter().filter(|t| t.label == Label::Positive && t.kept)
    }

    pub fn discarded(&self) -> impl Iterator<Item = &SyntheticTriple> {
        self.triples.iter().filter(|t| t.label == Label::Positive && !t.kept)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &SyntheticTriple> {
        self.triples.iter().filter(|t| t.label == Label::Negative)
    }
}

fn window_rng(seed: u64, w: &Window) -> ChaCha8Rng {
    let key = (w.doc_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (w.window_id as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    ChaCha8Rng::seed_from_u64(seed ^ key)
}

/// One attempt per window, then negatives. Each window draws from its own
/// generator derived from the seed and its ids, so results do not depend
/// on processing order.
pub fn run_pipeline(windows: &[Window], models: ModelTriple<'_>, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(contract("no windows to generate from"));
    }
    let mut summary = PipelineSummary::default();
    let mut triples = Vec::with_capacity(windows.len());
    for w in windows {
        summary.attempted += 1;
        let mut rng = window_rng(cfg.seed, w);
        match generate_triple(w, models, cfg, &mut rng) {
            Ok(t) => {
                if t.kept {
                    summary.kept += 1;
                } else {
                    summary.discarded += 1;
                }
                triples.push(t);
            }
            Err(Error::Contract(msg)) => {
                log::warn!("window {}/{} skipped: {msg}", w.doc_id, w.window_id);
                summary.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let kept: Vec<SyntheticTriple> = triples.iter().filter(|t| t.kept).cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4E45_4741_5449_5645);
    let (negatives, negatives_skipped) = sample_negatives(&kept, windows, cfg, &mut rng)?;
    summary.negatives = negatives.len();
    summary.negatives_skipped = negatives_skipped;
    triples.extend(negatives);
    Ok(PipelineOutput { triples, summary })
}

/// Sidecar summary path for a dataset file: `data.jsonl` → `data.summary.json`.
pub fn summary_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("summary.json")
}

/// Writes the triples as JSON lines and the summary next to them.
pub fn write_output(out: &PipelineOutput, path: &Path) -> Result<()> {
    let emit = |written: usize, source: std::io::Error| Error::Emit {
        path: path.to_path_buf(),
        written,
        source,
    };
    let file = File::create(path).map_err(|e| emit(0, e))?;
    let mut w = BufWriter::new(file);
    for (i, t) in out.triples.iter().enumerate() {
        let line = serde_json::to_string(t)?;
        writeln!(w, "{line}").map_err(|e| emit(i, e))?;
    }
    w.flush().map_err(|e| emit(out.triples.len(), e))?;
    let summary = serde_json::to_string_pretty(&out.summary)?;
    std::fs::write(summary_path(path), summary + "\n").map_err(|e| emit(out.triples.len(), e))?;
    Ok(())
}

pub fn read_triples(path: &Path) -> Result<Vec<SyntheticTriple>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                msg: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

/// Fraction of `triples` whose answer equals `gold(triple)`; `None` when
/// the set is empty.
pub fn gold_precision<'a, I, F>(triples: I, mut gold: F) -> Option<f64>
where
    I: IntoIterator<Item = &'a SyntheticTriple>,
    F: FnMut(&SyntheticTriple) -> Option<Span>,
{
    let mut n = 0usize;
    let mut hits = 0usize;
    for t in triples {
        n += 1;
        if t.answer().is_some() && gold(t) == t.answer() {
            hits += 1;
        }
    }
    (n > 0).then(|| hits as f64 / n as f64)
}
