//! Specification files and tabular outputs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{polytope_spec, SafetyMatrix};
use crate::network::{matrix_from_rows, matrix_to_rows};

/// On-disk safety specification.
///
/// `{"type": "polytope", "C": [[...]], "d": [...]}` requires `C f(x) ≤ d`;
/// `{"type": "matrices", "S": [[[...]]]}` lists symmetric matrices over
/// `[x; y; 1]` whose quadratic forms must be nonpositive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpecFile {
    Polytope {
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        d: Vec<f64>,
    },
    Matrices {
        #[serde(rename = "S")]
        s: Vec<Vec<Vec<f64>>>,
    },
}

impl SpecFile {
    pub fn polytope(c: &DMatrix<f64>, d: &[f64]) -> Self {
        SpecFile::Polytope {
            c: matrix_to_rows(c),
            d: d.to_vec(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Safety matrices for a network with `n_x` inputs and `n_y` outputs.
    pub fn matrices(&self, n_x: usize, n_y: usize) -> Result<Vec<SafetyMatrix>> {
        match self {
            SpecFile::Polytope { c, d } => {
                let c = matrix_from_rows(c, "specification rows")?;
                if c.ncols() != n_y && c.nrows() > 0 {
                    return Err(Error::DimensionMismatch {
                        context: "specification rows",
                        expected: n_y,
                        actual: c.ncols(),
                    });
                }
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("specification offsets"));
                }
                polytope_spec(n_x, &c, d)
            }
            SpecFile::Matrices { s } => s
                .iter()
                .map(|rows| {
                    let m = matrix_from_rows(rows, "safety matrix")?;
                    let dim = n_x + n_y + 1;
                    if m.shape() != (dim, dim) {
                        return Err(Error::DimensionMismatch {
                            context: "safety matrix",
                            expected: dim,
                            actual: m.nrows(),
                        });
                    }
                    SafetyMatrix::constant(&m)
                })
                .collect(),
        }
    }
}

/// CSV with one row per direction: `c1,...,ck,h`.
pub fn reach_csv(directions: &DMatrix<f64>, h: &[f64]) -> String {
    let k = directions.ncols();
    let mut out: Vec<String> = (1..=k).map(|i| format!("c{i}")).collect();
    out.push("h".into());
    let mut text = out.join(",");
    text.push('\n');
    for (row, hv) in directions.row_iter().zip(h) {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        fields.push(hv.to_string());
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    text
}
