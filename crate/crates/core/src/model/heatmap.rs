use super::encoder::Activations;
use super::params::conv_specs;
use super::ModelConfig;
use crate::data::StackedInstance;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Cosine similarity between response tokens (rows) and context tokens
/// (columns) at one layer.
#[derive(Debug, Clone)]
pub struct Heatmap {
    pub layer: String,
    /// `(slot, word)` of each row.
    pub response_positions: Vec<(usize, usize)>,
    /// `(slot, word)` of each column, in chronological order.
    pub context_positions: Vec<(usize, usize)>,
    pub values: Vec<Vec<f64>>,
}

/// Tags accepted by [`heatmap`]: the embedding layer, every `G` tensor,
/// and the `conv@i` aliases for the convolution outputs.
pub fn layer_tags() -> Vec<String> {
    let mut tags = vec!["G".to_string()];
    tags.extend((1..=13).map(|i| format!("G{i}")));
    tags.extend((1..=11).map(|i| format!("conv@{i}")));
    tags
}

/// Maps a user-facing tag to the activation it reads.
pub fn resolve_layer(tag: &str) -> Result<String> {
    if tag == "embedding" {
        return Ok("G".into());
    }
    if let Some(i) = tag.strip_prefix("conv@") {
        let specs = conv_specs(&ModelConfig::default());
        if let Some(spec) = i.parse::<usize>().ok().and_then(|i| specs.get(i.wrapping_sub(1))) {
            return Ok(spec.output.to_string());
        }
    } else if layer_tags().iter().any(|t| t == tag) {
        return Ok(tag.to_string());
    }
    Err(Error::invalid(format!(
        "unknown layer tag `{tag}`; valid tags: embedding, {}",
        layer_tags().join(", ")
    )))
}

/// Similarity matrix for `tag` over the valid tokens of `input`.
///
/// Token-level layers give each token its own vector; utterance-level
/// layers (`G11`..`G13`) give every token its utterance's vector. A pair
/// involving a zero vector has similarity 0.
pub fn heatmap<S: Scalar>(
    acts: &Activations<S>,
    tag: &str,
    input: &StackedInstance,
) -> Result<Heatmap> {
    let key = resolve_layer(tag)?;
    let tensor = acts
        .get(&key)
        .ok_or_else(|| Error::invalid(format!("layer `{tag}` was not captured (ablated?)")))?;
    let (turns, words) = (input.layout.turns, input.layout.words);
    let shape = tensor.shape();
    let dim = *shape.last().expect("rank >= 1");
    let per_token = match shape {
        [t, l, _] if *t == turns && *l == words => true,
        [n, _] if *n == turns * words => true,
        [t, _] if *t == turns => false,
        _ => {
            return Err(Error::shape(format!(
                "layer `{tag}` has shape {shape:?}, not a per-token or per-utterance map"
            )))
        }
    };
    let vector = |t: usize, j: usize| -> Vec<f64> {
        let row = if per_token { t * words + j } else { t };
        tensor.data()[row * dim..(row + 1) * dim]
            .iter()
            .map(|x| x.as_f64())
            .collect()
    };
    let positions = |slots: std::ops::Range<usize>| -> Vec<(usize, usize)> {
        slots
            .flat_map(|t| (0..words).map(move |j| (t, j)))
            .filter(|&(t, j)| input.is_valid(t, j))
            .collect()
    };
    let response_positions = positions(turns - 1..turns);
    let context_positions = positions(0..turns - 1);
    let ctx: Vec<Vec<f64>> = context_positions.iter().map(|&(t, j)| vector(t, j)).collect();
    let resp: Vec<Vec<f64>> = response_positions.iter().map(|&(t, j)| vector(t, j)).collect();
    let values = similarity_matrix(&resp, &ctx);
    Ok(Heatmap {
        layer: tag.to_string(),
        response_positions,
        context_positions,
        values,
    })
}

/// `out[i][j]` = cosine of `rows[i]` and `cols[j]`, 0 when either is zero.
pub fn similarity_matrix(rows: &[Vec<f64>], cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| cols.iter().map(|c| cosine(r, c)).collect())
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}
