//! The JSON report emitted by every curvature computation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

pub const SCHEMA: &str = "curvlab/1";

/// A real number that may be infinite. Finite values are JSON numbers;
/// non-finite ones are the strings `"inf"`, `"-inf"` and `"nan"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or one of \"inf\", \"-inf\", \"nan\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v {
                    "inf" => Ok(Real(f64::INFINITY)),
                    "-inf" => Ok(Real(f64::NEG_INFINITY)),
                    "nan" => Ok(Real(f64::NAN)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mode {
    ExactPencil,
    Sampled { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub site: String,
    pub value: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub schema: String,
    pub kind: String,
    pub bound: Real,
    pub per_site: Vec<Site>,
    pub witness: Option<Value>,
    pub mode: Mode,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
}

impl CurvatureReport {
    pub fn new(kind: &str, mode: Mode) -> Self {
        CurvatureReport {
            schema: SCHEMA.to_string(),
            kind: kind.to_string(),
            bound: Real(f64::INFINITY),
            per_site: Vec::new(),
            witness: None,
            mode,
            tolerances: BTreeMap::new(),
            details: BTreeMap::new(),
        }
    }

    pub fn bound(&self) -> f64 {
        self.bound.0
    }

    pub fn tol(mut self, name: &str, v: f64) -> Self {
        self.tolerances.insert(name.to_string(), v);
        self
    }

    pub fn detail(mut self, name: &str, v: Value) -> Self {
        self.details.insert(name.to_string(), v);
        self
    }

    /// Fill `per_site` and set `bound` to the minimum entry.
    pub fn with_sites(mut self, sites: Vec<(String, f64)>) -> Self {
        self.bound = Real(sites.iter().map(|s| s.1).fold(f64::INFINITY, f64::min));
        self.per_site = sites
            .into_iter()
            .map(|(site, v)| Site {
                site,
                value: Real(v),
            })
            .collect();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

pub fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

pub fn cvec_json(v: &DVector<Complex64>) -> Value {
    Value::Array(v.iter().map(|&z| complex_json(z)).collect())
}

pub fn rvec_json(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| json!(x)).collect())
}

/// Row-major nested arrays of `[re, im]` pairs.
pub fn cmat_json(m: &DMatrix<Complex64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|r| Value::Array((0..m.ncols()).map(|k| complex_json(m[(r, k)])).collect()))
            .collect(),
    )
}

/// Parse a row-major nested array of `[re, im]` pairs (plain numbers are
/// accepted as real entries).
pub fn parse_cmat(v: &Value) -> Result<DMatrix<Complex64>, String> {
    let rows = v.as_array().ok_or("matrix must be an array of rows")?;
    let nr = rows.len();
    let mut data = Vec::new();
    let mut nc = None;
    for (r, row) in rows.iter().enumerate() {
        let row = row.as_array().ok_or(format!("row {r} is not an array"))?;
        if *nc.get_or_insert(row.len()) != row.len() {
            return Err(format!("row {r} has inconsistent length"));
        }
        for (k, entry) in row.iter().enumerate() {
            let z = match entry {
                Value::Number(x) => Complex64::new(x.as_f64().unwrap_or(f64::NAN), 0.0),
                Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
                    (Some(a), Some(b)) => Complex64::new(a, b),
                    _ => return Err(format!("entry ({r},{k}) is not numeric")),
                },
                _ => return Err(format!("entry ({r},{k}) must be [re, im]")),
            };
            data.push(z);
        }
    }
    Ok(DMatrix::from_row_slice(nr, nc.unwrap_or(0), &data))
}
