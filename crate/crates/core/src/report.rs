//! JSON report envelope.
//!
//! The body is everything that depends only on inputs, config and seed. It is
//! hashed as compact JSON; timings live outside it.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) fn serialize_matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    rows.serialize(s)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope<'a, B: Serialize> {
    pub body: &'a B,
    pub body_sha256: String,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Hex SHA-256 of the compact JSON encoding of `body`.
pub fn body_hash<B: Serialize>(body: &B) -> Result<String> {
    let bytes = serde_json::to_vec(body).map_err(|e| Error::Numerical(format!("report: {e}")))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Pretty JSON for the whole envelope.
pub fn render<B: Serialize>(body: &B, timings_ms: BTreeMap<String, f64>) -> Result<String> {
    let env = ReportEnvelope {
        body,
        body_sha256: body_hash(body)?,
        timings_ms,
    };
    let mut out =
        serde_json::to_string_pretty(&env).map_err(|e| Error::Numerical(format!("report: {e}")))?;
    out.push('\n');
    Ok(out)
}

/// Fraction to percent for display only.
pub fn pct(x: f64) -> f64 {
    x * 100.0
}
