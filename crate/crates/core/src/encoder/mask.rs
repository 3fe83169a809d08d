use crate::autodiff::Tensor;

/// Additive score for disallowed attention; `exp` of it underflows to an
/// exact zero.
pub const MASKED_SCORE: f64 = -1e9;

/// Square boolean matrix; `(i, j)` is true iff query `i` may attend to key `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    /// Every position attends everywhere.
    pub fn full(size: usize) -> Self {
        Self {
            size,
            allowed: vec![true; size * size],
        }
    }

    /// Position `i` attends to positions `0..=i`.
    pub fn causal(size: usize) -> Self {
        let mut m = Self {
            size,
            allowed: vec![false; size * size],
        };
        for i in 0..size {
            for j in 0..=i {
                m.set(i, j, true);
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        self.allowed[query * self.size + key]
    }

    pub fn set(&mut self, query: usize, key: usize, on: bool) {
        self.allowed[query * self.size + key] = on;
    }

    pub fn row_is_empty(&self, query: usize) -> bool {
        !self.allowed[query * self.size..(query + 1) * self.size]
            .iter()
            .any(|&b| b)
    }

    /// Keys allowed for `query`, in order.
    pub fn allowed_keys(&self, query: usize) -> Vec<usize> {
        (0..self.size).filter(|&k| self.allows(query, k)).collect()
    }

    /// `0` where allowed, [`MASKED_SCORE`] elsewhere, as an `[S×S]` tensor.
    pub fn additive(&self) -> Tensor {
        let data = self
            .allowed
            .iter()
            .map(|&a| if a { 0.0 } else { MASKED_SCORE })
            .collect();
        Tensor::new(vec![self.size, self.size], data).expect("square by construction")
    }
}

/// Mask for the question-generation layout `[question slot | context]`:
/// question position `p` sees question positions `<= p` and the whole
/// context; context positions see only the context.
pub fn build_qgen_mask(question_len: usize, ctx_len: usize) -> AttentionMask {
    let n = question_len + ctx_len;
    let mut m = AttentionMask {
        size: n,
        allowed: vec![false; n * n],
    };
    for q in 0..question_len {
        for k in 0..=q {
            m.set(q, k, true);
        }
        for c in question_len..n {
            m.set(q, c, true);
        }
    }
    for c in question_len..n {
        for k in question_len..n {
            m.set(c, k, true);
        }
    }
    m
}
