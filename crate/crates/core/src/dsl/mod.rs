//! A small text format for systems `𝔸u = f` subject to `𝒞f = 0`.
//!
//! ```text
//! # div-curl with a scalar constraint
//! dim 3
//! operator A {
//!   from 3 to 4
//!   rows: d1 u1 + d2 u2 + d3 u3
//!         d2 u3 - d3 u2; d3 u1 - d1 u3; d1 u2 - d2 u1
//! }
//! constraint C {
//!   from 4 to 1
//!   rows: d1 f1 + d2 f2 + d3 f3
//! }
//! ```
//!
//! Derivatives are `d1..dn` with optional powers `d1^2`; components are `u1..`
//! or `f1..` (the letters are interchangeable). Coefficients are integers or
//! `a/b` rationals. A factor in parentheses multiplies the following component,
//! as in `(d1^4 + d2^4) u1`. Rows are separated by `;` or line breaks and each
//! row must be homogeneous. `#` starts a comment.

mod lexer;
mod parser;
mod printer;

use thiserror::Error;

use crate::operator::OperatorSpec;

pub use parser::{parse_operator, parse_system};
pub use printer::{print_operator, print_rows, print_system};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File(std::path::PathBuf),
    Inline,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceText {
    pub content: String,
    pub origin: Origin,
}

impl SourceText {
    pub fn inline(content: impl Into<String>) -> Self {
        SourceText {
            content: content.into(),
            origin: Origin::Inline,
        }
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        Ok(SourceText {
            content: std::fs::read_to_string(path)?,
            origin: Origin::File(path.to_path_buf()),
        })
    }
}

/// `𝔸: V → E` with an optional constraint `𝒞: E → F`, all on `R^n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemSpec {
    pub n: usize,
    pub a_name: String,
    pub a: OperatorSpec,
    pub c_name: Option<String>,
    pub c: Option<OperatorSpec>,
}

impl SystemSpec {
    pub fn new(a: OperatorSpec, c: Option<OperatorSpec>) -> Result<Self, ParseError> {
        let n = a.space_dim();
        if let Some(c) = &c {
            if c.source_dim() != a.target_dim() {
                return Err(ParseError::DimensionMismatch {
                    line: 0,
                    msg: format!(
                        "operator maps into R^{} but the constraint acts on R^{}",
                        a.target_dim(),
                        c.source_dim()
                    ),
                });
            }
            if c.space_dim() != n {
                return Err(ParseError::DimensionMismatch {
                    line: 0,
                    msg: "operator and constraint live on different spaces".into(),
                });
            }
        }
        Ok(SystemSpec {
            n,
            a_name: "A".into(),
            a,
            c_name: c.as_ref().map(|_| "C".into()),
            c,
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: row {row} mixes derivative orders {orders:?}")]
    NonHomogeneousRow {
        line: usize,
        row: usize,
        orders: Vec<u32>,
    },
    #[error("line {line}: component {name} exceeds the declared dimension {dim}")]
    UnknownComponent { line: usize, name: String, dim: usize },
    #[error("line {line}: derivative d{index} exceeds the space dimension {dim}")]
    UnknownDerivative { line: usize, index: usize, dim: usize },
    #[error("line {line}: dimension mismatch: {msg}")]
    DimensionMismatch { line: usize, msg: String },
    #[error("line {line}: duplicate {what} block")]
    DuplicateBlock { line: usize, what: String },
    #[error("missing {0}")]
    Missing(String),
    #[error("input is empty")]
    Empty,
}
