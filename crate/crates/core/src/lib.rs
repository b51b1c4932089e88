pub mod conditions;
pub mod dsl;
pub mod ellipticity;
pub mod error;
pub mod linalg;
pub mod matpoly;
pub mod operator;
pub mod poly;
pub mod quadrature;
pub mod rational;
pub mod report;
pub mod sturm;
pub mod witness;

pub use error::{AnalysisError, Result};
