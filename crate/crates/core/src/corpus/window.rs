use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::error::{contract, Result};

/// A contiguous slice of a source document used as an unlabeled context.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub doc_id: usize,
    pub window_id: usize,
    /// Page the document came from; all windows of a document share it.
    pub page: String,
    /// Offset of the first token within the document.
    pub start: usize,
    pub tokens: Vec<TokenId>,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.tokens.len()
    }

    /// True when the two windows share a token position of the same document.
    pub fn overlaps(&self, other: &Window) -> bool {
        self.doc_id == other.doc_id && self.start < other.end() && other.start < self.end()
    }
}

/// Windows of at most `w_max` tokens starting every `stride` tokens. The last
/// (possibly short) window ends exactly at the end of the document.
pub fn extract_windows(
    doc_id: usize,
    page: &str,
    doc: &[TokenId],
    w_max: usize,
    stride: usize,
) -> Result<Vec<Window>> {
    if w_max == 0 || stride == 0 || stride > w_max {
        return Err(contract(format!(
            "window size {w_max} and stride {stride} must satisfy 1 <= stride <= size"
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < doc.len() {
        let end = (start + w_max).min(doc.len());
        out.push(Window {
            doc_id,
            window_id: out.len(),
            page: page.to_string(),
            start,
            tokens: doc[start..end].to_vec(),
        });
        if end == doc.len() {
            break;
        }
        start += stride;
    }
    Ok(out)
}
