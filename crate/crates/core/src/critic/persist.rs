//! Binary persistence for trained critics.
//!
//! Format: one JSON header line `{schema, scheme/url, dimension, seed}`
//! followed by the raw little-endian f64 payload — the bias, then
//! `dimension` weights.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::features::{FeatureExtractor, FeatureScheme};
use super::LinearCritic;

const CRITIC_SCHEMA: &str = "raggym.critic.v1";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("critic file io: {0}")]
    Io(#[from] std::io::Error),

    #[error("critic file header: {0}")]
    Header(String),

    #[error("critic payload has {got} weights, header says {expected}")]
    PayloadMismatch { expected: usize, got: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    #[serde(flatten)]
    scheme: FeatureScheme,
    dimension: usize,
    seed: u64,
}

/// Writes the critic and its training seed to `path`.
pub fn save_critic(critic: &LinearCritic, seed: u64, path: &Path) -> Result<(), PersistError> {
    let header = Header {
        schema: CRITIC_SCHEMA.to_string(),
        scheme: critic.extractor.scheme.clone(),
        dimension: critic.extractor.dimension,
        seed,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &header).map_err(|e| PersistError::Header(e.to_string()))?;
    file.write_all(b"\n")?;
    file.write_all(&critic.bias.to_le_bytes())?;
    for w in &critic.weights {
        file.write_all(&w.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a critic written by [`save_critic`]; returns it with its seed.
pub fn load_critic(path: &Path) -> Result<(LinearCritic, u64), PersistError> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: Header = serde_json::from_str(header_line.trim_end())
        .map_err(|e| PersistError::Header(e.to_string()))?;
    if header.schema != CRITIC_SCHEMA {
        return Err(PersistError::Header(format!(
            "unsupported schema {:?}",
            header.schema
        )));
    }
    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    let expected_bytes = (header.dimension + 1) * 8;
    if payload.len() != expected_bytes {
        return Err(PersistError::PayloadMismatch {
            expected: header.dimension,
            got: payload.len().saturating_sub(8) / 8,
        });
    }
    let mut chunks = payload.chunks_exact(8);
    let bias = f64::from_le_bytes(chunks.next().expect("payload length checked").try_into().unwrap());
    let weights: Vec<f64> = chunks
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((
        LinearCritic {
            weights,
            bias,
            extractor: FeatureExtractor {
                scheme: header.scheme,
                dimension: header.dimension,
            },
        },
        header.seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("critic.bin");
        let mut critic = LinearCritic::zeroed(FeatureExtractor::hashed_bow(64));
        critic.bias = -0.25;
        for (i, w) in critic.weights.iter_mut().enumerate() {
            *w = i as f64 * 0.5 - 3.0;
        }
        save_critic(&critic, 42, &path).unwrap();
        let (loaded, seed) = load_critic(&path).unwrap();
        assert_eq!(loaded, critic);
        assert_eq!(seed, 42);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("critic.bin");
        let critic = LinearCritic::zeroed(FeatureExtractor::hashed_bow(16));
        save_critic(&critic, 0, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            load_critic(&path),
            Err(PersistError::PayloadMismatch { .. })
        ));
    }
}
