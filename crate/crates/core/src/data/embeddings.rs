use std::fs;
use std::path::Path;

use super::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Overwrites rows of a `(vocab, dim)` table from a text embedding file.
///
/// The file starts with a `count dim` header followed by `token v1 ... vdim`
/// lines. Tokens absent from the vocabulary are skipped, vocabulary tokens
/// absent from the file keep their current row, and the padding row is
/// zeroed. Returns the number of rows written.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary, table: &mut Tensor<f32>) -> Result<usize> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = table.shape()[1];
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.into(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty embedding file".into()))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let file_dim: usize = match head.as_slice() {
        [_, d] => d
            .parse()
            .map_err(|_| parse_err(1, format!("bad header `{header}`")))?,
        _ => return Err(parse_err(1, format!("bad header `{header}`"))),
    };
    if file_dim != dim {
        return Err(Error::shape(format!(
            "embedding file has dim {file_dim}, model expects {dim}"
        )));
    }
    let mut written = 0;
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<f32> = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(i + 1, e.to_string()))?;
        if values.len() != dim {
            return Err(parse_err(
                i + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if let Some(id) = vocab.get(token) {
            if id != PAD_ID && id < table.shape()[0] {
                table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
                written += 1;
            }
        }
    }
    table.data_mut()[..dim].fill(0.0);
    Ok(written)
}
