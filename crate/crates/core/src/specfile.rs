//! JSON model files.
//!
//! ```json
//! { "types": 2, "erosion": [0, 0], "conservative": true,
//!   "dislocation": { "1": [ { "rate": 1, "fragments": [[0.6, 1], [0.4, 2]] } ],
//!                    "2": [ { "rate": 1, "fragments": [["1/2", 2], [0.3, 1], [0.2, 1]] } ] } }
//! ```
//!
//! Masses are decimal numbers or exact `"p/q"` strings. A type missing from
//! `dislocation` never dislocates.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{DislocationAtom, FragmentationSpec, SpecViolation, ValidationReport};
use crate::partitions::{FragmentType, TypedMassPartition};

/// Malformed file: location of the problem and what was expected there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}, field `{}`: {}",
            self.line, self.column, self.field, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecFileError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at {0}")]
    Parse(ParseError),
    #[error("invalid model: {0}")]
    Validation(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mass(f64);

impl<'de> Deserialize<'de> for Mass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(x) => Ok(Mass(x)),
            Raw::Text(s) => parse_fraction(&s).map(Mass).map_err(de::Error::custom),
        }
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let bad = || format!("mass {s:?} is neither a number nor a fraction \"p/q\"");
    let (p, q) = s.split_once('/').ok_or_else(bad)?;
    let p: u64 = p.trim().parse().map_err(|_| bad())?;
    let q: u64 = q.trim().parse().map_err(|_| bad())?;
    if q == 0 {
        return Err(format!("mass {s:?} has a zero denominator"));
    }
    Ok(p as f64 / q as f64)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtom {
    rate: f64,
    fragments: Vec<(Mass, FragmentType)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    types: usize,
    erosion: Vec<f64>,
    conservative: bool,
    dislocation: BTreeMap<String, Vec<RawAtom>>,
}

#[derive(Serialize)]
struct OutAtom {
    rate: f64,
    fragments: Vec<(f64, FragmentType)>,
}

#[derive(Serialize)]
struct OutSpec {
    types: usize,
    erosion: Vec<f64>,
    conservative: bool,
    dislocation: BTreeMap<String, Vec<OutAtom>>,
}

/// Parses and validates a model from JSON text. All violations are reported together.
pub fn parse_spec_str(text: &str) -> Result<FragmentationSpec, SpecFileError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        if let Some(name) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            path = match path.as_str() {
                "." => name.to_string(),
                parent => format!("{parent}.{name}"),
            };
        }
        SpecFileError::Parse(ParseError {
            line: inner.line(),
            column: inner.column(),
            field: path,
            message,
        })
    })?;

    let k = raw.types;
    let mut dislocation = vec![Vec::new(); k];
    let mut violations = Vec::new();
    for (key, atoms) in raw.dislocation {
        let ty = match key.parse::<usize>() {
            Ok(ty) if (1..=k).contains(&ty) => ty,
            _ => {
                let (line, column) = locate_key(text, &key);
                return Err(SpecFileError::Parse(ParseError {
                    line,
                    column,
                    field: format!("dislocation.{key}"),
                    message: format!("type key must be an integer in 1..={k}"),
                }));
            }
        };
        for (atom, a) in atoms.into_iter().enumerate() {
            let pairs = a.fragments.iter().map(|&(Mass(m), t)| (m, t));
            match TypedMassPartition::new(pairs, k) {
                Ok(outcome) => dislocation[ty - 1].push(DislocationAtom::new(a.rate, outcome)),
                Err(e) => violations.push(SpecViolation::InvalidOutcome {
                    ty,
                    atom,
                    reason: e.to_string(),
                }),
            }
        }
    }
    let spec = FragmentationSpec {
        k,
        erosion: raw.erosion,
        dislocation,
        conservative: raw.conservative,
    };
    if let Err(report) = spec.validate() {
        violations.extend(report.violations);
    }
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(SpecFileError::Validation(ValidationReport { violations }))
    }
}

/// Line and column of the first occurrence of `"key"` in the text.
fn locate_key(text: &str, key: &str) -> (usize, usize) {
    let needle = format!("\"{key}\"");
    match text.find(&needle) {
        Some(offset) => {
            let before = &text[..offset];
            let line = before.matches('\n').count() + 1;
            let column = offset - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            (line, column)
        }
        None => (0, 0),
    }
}

pub fn read_spec_file(path: &Path) -> Result<FragmentationSpec, SpecFileError> {
    let text = std::fs::read_to_string(path).map_err(|e| SpecFileError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec_str(&text)
}

/// Canonical JSON form of a model; [`parse_spec_str`] reads it back unchanged.
pub fn spec_to_json(spec: &FragmentationSpec) -> String {
    let out = OutSpec {
        types: spec.k,
        erosion: spec.erosion.clone(),
        conservative: spec.conservative,
        dislocation: spec
            .dislocation
            .iter()
            .enumerate()
            .filter(|(_, atoms)| !atoms.is_empty())
            .map(|(i, atoms)| {
                let list = atoms
                    .iter()
                    .map(|a| OutAtom {
                        rate: a.weight,
                        fragments: a.outcome.parts().iter().map(|p| (p.mass, p.ty)).collect(),
                    })
                    .collect();
                ((i + 1).to_string(), list)
            })
            .collect(),
    };
    serde_json::to_string_pretty(&out).expect("model serializes")
}
