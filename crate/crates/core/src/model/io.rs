//! JSON file formats.
//!
//! Matrices are arrays of rows, each row an array of `[re, im]` pairs. Every
//! file carries `"schema": "higgs-torus/1"`; readers accept files without the
//! field and reject any other value. Floats are written in shortest
//! round-trip form and parsed with correct rounding, so values survive a
//! write/read cycle bit for bit.

use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use super::{ChangeOfTrivialization, GaugeTransform, HiggsDatum};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Tolerances};

pub const SCHEMA: &str = "higgs-torus/1";

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Num(f64),
    Text(String),
}

impl Scalar {
    fn finite<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            Scalar::Num(x) if x.is_finite() => Ok(x),
            Scalar::Num(_) => Err(E::custom("non-finite entry")),
            Scalar::Text(s) => {
                let lowered = s.trim().trim_start_matches(['+', '-']).to_ascii_lowercase();
                if matches!(lowered.as_str(), "nan" | "inf" | "infinity") {
                    Err(E::custom("non-finite entry"))
                } else {
                    Err(E::custom(format!("expected a number, found string {s:?}")))
                }
            }
        }
    }
}

/// `#[serde(with = "...")]` adapter for a single matrix.
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> =
            m.row_iter().map(|row| row.iter().map(|z| [z.re, z.im]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ComplexMatrix, D::Error> {
        let rows: Vec<Vec<[Scalar; 2]>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let mut entries = Vec::with_capacity(nrows * ncols);
        for row in rows {
            for [re, im] in row {
                entries.push(num_complex::Complex64::new(re.finite()?, im.finite()?));
            }
        }
        Ok(ComplexMatrix::from_row_iterator(nrows, ncols, entries))
    }
}

/// `#[serde(with = "...")]` adapter for a sequence of matrices.
pub mod matrices {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct One(#[serde(with = "matrix")] ComplexMatrix);

    pub fn serialize<S: Serializer>(ms: &[ComplexMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(ms.iter().map(|m| One(m.clone())))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ComplexMatrix>, D::Error> {
        Ok(Vec::<One>::deserialize(d)?.into_iter().map(|o| o.0).collect())
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema: &'static str,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with a schema tag and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(&Versioned { schema: SCHEMA, body: value })
        .expect("in-memory JSON serialization cannot fail");
    out.push(b'\n');
    out
}

/// Scans JSON text for bare `NaN` / `Infinity` tokens outside strings.
fn has_bare_nonfinite(text: &str) -> bool {
    let bytes = text.as_bytes();
    let mut in_string = false;
    let mut escaped = false;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
        } else if b == b'"' {
            in_string = true;
        } else if text[i..].starts_with("NaN") || text[i..].starts_with("Infinity") {
            return true;
        }
        i += 1;
    }
    false
}

/// Parses a versioned JSON document.
pub fn from_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Parse("input is not UTF-8".into()))?;
    let mut value: Value = serde_json::from_str(text).map_err(|e| {
        if has_bare_nonfinite(text) {
            Error::Parse("non-finite entry".into())
        } else {
            Error::Parse(e.to_string())
        }
    })?;
    if let Value::Object(map) = &mut value {
        match map.remove("schema") {
            None => {}
            Some(Value::String(s)) if s == SCHEMA => {}
            Some(other) => return Err(Error::Parse(format!("unsupported schema {other}, expected {SCHEMA:?}"))),
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn serialize(datum: &HiggsDatum) -> Vec<u8> {
    to_json(datum)
}

/// Parses and validates a Higgs datum file.
pub fn parse(bytes: &[u8], tol: &Tolerances) -> Result<HiggsDatum> {
    let datum: HiggsDatum = from_json(bytes)?;
    if datum.blocks.is_empty() {
        return Err(Error::Parse("empty blocks list".into()));
    }
    datum.validate(tol).into_result()?;
    Ok(datum)
}

#[derive(Serialize, Deserialize)]
struct GaugeFile {
    #[serde(with = "matrices")]
    blocks: Vec<ComplexMatrix>,
}

pub fn serialize_gauge(gauge: &GaugeTransform) -> Vec<u8> {
    to_json(&GaugeFile { blocks: gauge.blocks().to_vec() })
}

pub fn parse_gauge(bytes: &[u8]) -> Result<GaugeTransform> {
    let file: GaugeFile = from_json(bytes)?;
    GaugeTransform::new(file.blocks)
}

#[derive(Serialize, Deserialize)]
struct TrivializationFile {
    #[serde(with = "matrix")]
    matrix: ComplexMatrix,
}

pub fn serialize_trivialization(change: &ChangeOfTrivialization) -> Vec<u8> {
    to_json(&TrivializationFile { matrix: change.matrix().clone() })
}

pub fn parse_trivialization(bytes: &[u8], tol: &Tolerances) -> Result<ChangeOfTrivialization> {
    let file: TrivializationFile = from_json(bytes)?;
    ChangeOfTrivialization::new(file.matrix, tol)
}
