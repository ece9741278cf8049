//! Embedding extraction with a trained autoencoder.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward, AutoencoderParams};
use crate::vecmath::{l2_normalize, FaceVector};

/// Which activations become the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingTap {
    /// Encoder output (the smallest layer).
    #[default]
    Bottleneck,
    /// Full reconstruction, same dimension as the input.
    DecoderOutput,
}

impl fmt::Display for EmbeddingTap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingTap::Bottleneck => "bottleneck",
            EmbeddingTap::DecoderOutput => "output",
        })
    }
}

impl FromStr for EmbeddingTap {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bottleneck" => Ok(EmbeddingTap::Bottleneck),
            "output" => Ok(EmbeddingTap::DecoderOutput),
            other => Err(format!("unknown tap `{other}` (expected bottleneck|output)")),
        }
    }
}

pub fn extract_embedding(
    p: &AutoencoderParams,
    x: &FaceVector,
    tap: EmbeddingTap,
) -> Result<FaceVector> {
    match tap {
        EmbeddingTap::Bottleneck => {
            let code = p.encode(x.as_slice())?;
            Ok(FaceVector::from_vec_unchecked(code))
        }
        EmbeddingTap::DecoderOutput => Ok(forward(p, x)?.1),
    }
}

/// Extracts every vector in order. With `normalize`, each embedding is
/// scaled to unit length; an all-zero embedding is reported as
/// [`Error::DeadEmbedding`] with its index.
pub fn extract_all(
    p: &AutoencoderParams,
    dataset: &[FaceVector],
    tap: EmbeddingTap,
    normalize: bool,
) -> Result<Vec<FaceVector>> {
    let results: Vec<Result<FaceVector>> = dataset
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let e = extract_embedding(p, x, tap).map_err(|e| Error::AtIndex {
                index,
                source: Box::new(e),
            })?;
            if normalize {
                l2_normalize(&e).map_err(|_| Error::DeadEmbedding { index })
            } else {
                Ok(e)
            }
        })
        .collect();
    // first failure in dataset order
    results.into_iter().collect()
}
