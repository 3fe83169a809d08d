use rand::Rng;

use super::dist::Span;
use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::encoder::Linear;
use crate::error::{contract, Result};

fn check_span(tape: &Tape, hidden: Var, span: Span) -> Result<()> {
    let rows = tape.shape(hidden)[0];
    if span.start > span.end || !span.within(rows) {
        return Err(contract(format!("span {span:?} outside {rows} context rows")));
    }
    Ok(())
}

fn endpoints(spans: &[Span]) -> (Vec<usize>, Vec<usize>) {
    spans.iter().map(|s| (s.start, s.end)).unzip()
}

/// Joint span scorer: an MLP with one hidden layer applied to
/// `concat(h[s], h[e])`.
#[derive(Clone, Debug)]
pub struct JointHead {
    /// `[2h×m]`; the first `h` rows act on the start representation.
    pub hidden_weight: ParamId,
    pub hidden_bias: ParamId,
    pub out_weight: ParamId,
    pub out_bias: ParamId,
    pub width: usize,
}

impl JointHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, width: usize, mlp: usize, rng: &mut R) -> Self {
        let std_in = (1.0 / (2 * width) as f64).sqrt();
        let std_out = (1.0 / mlp as f64).sqrt();
        Self {
            hidden_weight: store.add_normal(format!("{name}.hidden.weight"), &[2 * width, mlp], std_in, rng),
            hidden_bias: store.add_zeros(format!("{name}.hidden.bias"), &[mlp]),
            out_weight: store.add_normal(format!("{name}.out.weight"), &[mlp, 1], std_out, rng),
            out_bias: store.add_zeros(format!("{name}.out.bias"), &[1]),
            width,
        }
    }

    fn finish(&self, tape: &mut Tape, store: &ParamStore, pre: Var) -> Result<Var> {
        let b1 = tape.param(store, self.hidden_bias);
        let z = tape.add(pre, b1)?;
        let z = tape.gelu(z)?;
        let w2 = tape.param(store, self.out_weight);
        let out = tape.matmul(z, w2)?;
        let b2 = tape.param(store, self.out_bias);
        tape.add(out, b2)
    }

    /// Scores of all `spans` over context representations `hidden` `[n×h]`,
    /// as an `[N]` vector. The concatenation is never materialized: the
    /// hidden-layer pre-activation is split into a start half and an end half
    /// computed once per position and gathered per span.
    pub fn score_spans(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, spans: &[Span]) -> Result<Var> {
        for &s in spans {
            check_span(tape, hidden, s)?;
        }
        let w = tape.param(store, self.hidden_weight);
        let w_start = tape.slice(w, 0, 0, self.width)?;
        let w_end = tape.slice(w, 0, self.width, self.width)?;
        let by_start = tape.matmul(hidden, w_start)?;
        let by_end = tape.matmul(hidden, w_end)?;
        let (starts, ends) = endpoints(spans);
        let a = tape.embedding(by_start, &starts)?;
        let b = tape.embedding(by_end, &ends)?;
        let pre = tape.add(a, b)?;
        let out = self.finish(tape, store, pre)?;
        tape.reshape(out, &[spans.len()])
    }
}

/// `MLP_J(concat(h[s], h[e]))` for one span, computed literally.
pub fn score_joint(tape: &mut Tape, store: &ParamStore, head: &JointHead, hidden: Var, span: Span) -> Result<Var> {
    check_span(tape, hidden, span)?;
    let hs = tape.slice(hidden, 0, span.start, 1)?;
    let he = tape.slice(hidden, 0, span.end, 1)?;
    let joined = tape.concat(&[hs, he], 1)?;
    let w = tape.param(store, head.hidden_weight);
    let pre = tape.matmul(joined, w)?;
    let out = head.finish(tape, store, pre)?;
    tape.reshape(out, &[])
}

/// Independent span scorer: separate start and end affine maps `h → 1`.
#[derive(Clone, Debug)]
pub struct IndependentHead {
    pub start: Linear,
    pub end: Linear,
}

impl IndependentHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, width: usize, rng: &mut R) -> Self {
        Self {
            start: Linear::new(store, &format!("{name}.start"), width, 1, rng),
            end: Linear::new(store, &format!("{name}.end"), width, 1, rng),
        }
    }

    /// Per-position start and end scores, each `[n×1]`.
    pub fn endpoint_scores(&self, tape: &mut Tape, store: &ParamStore, hidden: Var) -> Result<(Var, Var)> {
        let s = self.start.forward(tape, store, hidden)?;
        let e = self.end.forward(tape, store, hidden)?;
        Ok((s, e))
    }

    /// `start(h[s]) + end(h[e])` for every span, as an `[N×1]` column.
    fn score_column(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, spans: &[Span]) -> Result<Var> {
        for &s in spans {
            check_span(tape, hidden, s)?;
        }
        let (s, e) = self.endpoint_scores(tape, store, hidden)?;
        let (starts, ends) = endpoints(spans);
        let a = tape.embedding(s, &starts)?;
        let b = tape.embedding(e, &ends)?;
        tape.add(a, b)
    }

    pub fn score_spans(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, spans: &[Span]) -> Result<Var> {
        let col = self.score_column(tape, store, hidden, spans)?;
        tape.reshape(col, &[spans.len()])
    }
}

/// `start(h[s]) + end(h[e])` for one span.
pub fn score_independent(
    tape: &mut Tape,
    store: &ParamStore,
    head: &IndependentHead,
    hidden: Var,
    span: Span,
) -> Result<Var> {
    check_span(tape, hidden, span)?;
    let hs = tape.slice(hidden, 0, span.start, 1)?;
    let he = tape.slice(hidden, 0, span.end, 1)?;
    let a = head.start.forward(tape, store, hs)?;
    let b = head.end.forward(tape, store, he)?;
    let sum = tape.add(a, b)?;
    tape.reshape(sum, &[])
}

/// Independent start/end scorer plus a learned NULL score.
#[derive(Clone, Debug)]
pub struct QaHead {
    pub affine: IndependentHead,
    pub null_bias: ParamId,
}

impl QaHead {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, width: usize, rng: &mut R) -> Self {
        Self {
            affine: IndependentHead::new(store, name, width, rng),
            null_bias: store.add_zeros(format!("{name}.null_bias"), &[1, 1]),
        }
    }

    /// Scores of `spans` followed by the NULL score, as an `[N+1]` vector.
    pub fn score_answers(&self, tape: &mut Tape, store: &ParamStore, hidden: Var, spans: &[Span]) -> Result<Var> {
        let col = self.affine.score_column(tape, store, hidden, spans)?;
        let null = tape.param(store, self.null_bias);
        let all = tape.concat(&[col, null], 0)?;
        tape.reshape(all, &[spans.len() + 1])
    }
}
