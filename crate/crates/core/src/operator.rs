//! Constant-coefficient linear differential operators.
//!
//! An operator from `R^s` to `R^t` on `R^n` is stored as a sparse map from
//! multi-indices `α` to coefficient matrices `C_α` (`t × s`), so that
//! `C f = Σ_α C_α ∂^α f`. Rows may have different orders; an operator is
//! homogeneous when every nonzero row has the same order.
//!
//! The symbol uses the real convention `∂^α ↦ ξ^α`. The Fourier symbol
//! differs by the factor `i^{|α|}`, which never changes kernels or images;
//! code that needs actual Fourier multipliers applies that phase explicitly.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::linalg::RatMatrix;
use crate::matpoly::MatrixPolynomial;
use crate::poly::{MultiIndex, Polynomial};
use crate::error::{AnalysisError, Result};
use crate::rational::{q, Q};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperatorSpec {
    space_dim: usize,
    source_dim: usize,
    target_dim: usize,
    coeffs: BTreeMap<MultiIndex, RatMatrix>,
}

impl OperatorSpec {
    pub fn zero(space_dim: usize, source_dim: usize, target_dim: usize) -> Self {
        OperatorSpec {
            space_dim,
            source_dim,
            target_dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// Adds `c ∂^α` acting on source component `col` into target row `row`.
    pub fn add_term(&mut self, row: usize, col: usize, alpha: MultiIndex, c: Q) {
        assert!(row < self.target_dim && col < self.source_dim);
        assert_eq!(alpha.len(), self.space_dim);
        if c.is_zero() {
            return;
        }
        let (t, s) = (self.target_dim, self.source_dim);
        let m = self
            .coeffs
            .entry(alpha.clone())
            .or_insert_with(|| RatMatrix::zeros(t, s));
        m[(row, col)] += c;
        if m.is_zero() {
            self.coeffs.remove(&alpha);
        }
    }

    /// Coefficient extraction from a symbol, inverse to [`OperatorSpec::symbol`].
    pub fn from_symbol(sym: &MatrixPolynomial) -> Self {
        let mut op = OperatorSpec::zero(sym.nvars(), sym.ncols(), sym.nrows());
        for i in 0..sym.nrows() {
            for j in 0..sym.ncols() {
                for (a, c) in sym.get(i, j).terms() {
                    op.add_term(i, j, a.clone(), c.clone());
                }
            }
        }
        op
    }

    pub fn space_dim(&self) -> usize {
        self.space_dim
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        self.target_dim
    }

    pub fn coeffs(&self) -> &BTreeMap<MultiIndex, RatMatrix> {
        &self.coeffs
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> RatMatrix {
        self.coeffs
            .get(alpha)
            .cloned()
            .unwrap_or_else(|| RatMatrix::zeros(self.target_dim, self.source_dim))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The polynomial entry in row `row`, column `col` of the symbol.
    pub fn entry(&self, row: usize, col: usize) -> Polynomial {
        Polynomial::from_terms(
            self.space_dim,
            self.coeffs
                .iter()
                .map(|(a, m)| (a.clone(), m[(row, col)].clone())),
        )
    }

    /// `𝒞(ξ) = Σ_α C_α ξ^α`.
    pub fn symbol(&self) -> MatrixPolynomial {
        MatrixPolynomial::from_fn(self.target_dim, self.source_dim, self.space_dim, |i, j| {
            self.entry(i, j)
        })
    }

    /// Order of each row; `None` for a zero row.
    pub fn row_degrees(&self) -> Vec<Option<u32>> {
        let mut out: Vec<Option<u32>> = vec![None; self.target_dim];
        for (a, m) in &self.coeffs {
            for (i, slot) in out.iter_mut().enumerate() {
                if m.row(i).iter().any(|c| !c.is_zero()) {
                    *slot = Some(slot.map_or(a.degree(), |d| d.max(a.degree())));
                }
            }
        }
        out
    }

    /// Whether each row only involves derivatives of a single order.
    pub fn rows_are_homogeneous(&self) -> bool {
        (0..self.target_dim).all(|i| {
            let mut degs = self
                .coeffs
                .iter()
                .filter(|(_, m)| m.row(i).iter().any(|c| !c.is_zero()))
                .map(|(a, _)| a.degree());
            match degs.next() {
                None => true,
                Some(d) => degs.all(|e| e == d),
            }
        })
    }

    /// Common order of all nonzero rows, `Some(0)` for the zero operator,
    /// `None` when the rows disagree.
    pub fn order(&self) -> Option<u32> {
        if !self.rows_are_homogeneous() {
            return None;
        }
        let mut it = self.row_degrees().into_iter().flatten();
        let Some(d) = it.next() else {
            return Some(0);
        };
        it.all(|e| e == d).then_some(d)
    }

    pub fn max_order(&self) -> u32 {
        self.coeffs.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// All coefficient matrices stacked vertically; its kernel is
    /// `⋂_ξ ker 𝒞(ξ)` because the monomials `ξ^α` are linearly independent.
    pub fn coefficient_stack(&self) -> RatMatrix {
        let blocks: Vec<&RatMatrix> = self.coeffs.values().collect();
        RatMatrix::vstack(self.source_dim, &blocks)
    }

    /// `g ∘ 𝒞` for a constant `g` acting on the target.
    pub fn compose_left(&self, g: &RatMatrix) -> OperatorSpec {
        assert_eq!(g.ncols(), self.target_dim);
        self.map_coeffs(g.nrows(), self.source_dim, |m| g.mul(m))
    }

    /// `𝒞 ∘ g` for a constant `g` acting on the source.
    pub fn compose_right(&self, g: &RatMatrix) -> OperatorSpec {
        assert_eq!(g.nrows(), self.source_dim);
        self.map_coeffs(self.target_dim, g.ncols(), |m| m.mul(g))
    }

    pub fn scale(&self, c: &Q) -> OperatorSpec {
        self.map_coeffs(self.target_dim, self.source_dim, |m| m.scale(c))
    }

    pub fn add(&self, other: &OperatorSpec) -> OperatorSpec {
        assert_eq!(
            (self.space_dim, self.source_dim, self.target_dim),
            (other.space_dim, other.source_dim, other.target_dim)
        );
        let mut out = self.clone();
        for (a, m) in &other.coeffs {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.add_term(i, j, a.clone(), m[(i, j)].clone());
                }
            }
        }
        out
    }

    /// Rows of `self` followed by rows of `other` (same source).
    pub fn stack(&self, other: &OperatorSpec) -> OperatorSpec {
        assert_eq!(
            (self.space_dim, self.source_dim),
            (other.space_dim, other.source_dim)
        );
        let mut out = OperatorSpec::zero(
            self.space_dim,
            self.source_dim,
            self.target_dim + other.target_dim,
        );
        for (src, offset) in [(self, 0), (other, self.target_dim)] {
            for (a, m) in &src.coeffs {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        out.add_term(offset + i, j, a.clone(), m[(i, j)].clone());
                    }
                }
            }
        }
        out
    }

    fn map_coeffs(
        &self,
        target_dim: usize,
        source_dim: usize,
        f: impl Fn(&RatMatrix) -> RatMatrix,
    ) -> OperatorSpec {
        OperatorSpec {
            space_dim: self.space_dim,
            source_dim,
            target_dim,
            coeffs: self
                .coeffs
                .iter()
                .map(|(a, m)| (a.clone(), f(m)))
                .filter(|(_, m)| !m.is_zero())
                .collect(),
        }
    }
}

/// Exact polynomial data derived from an operator symbol `𝔸(ξ)`:
/// the Gram matrix `G = 𝔸*𝔸`, its determinant and adjugate, and the
/// numerator `adj G · 𝔸*` of the pseudo-inverse `𝔸† = adj G · 𝔸* / det G`.
#[derive(Clone, Debug)]
pub struct SymbolData {
    pub symbol: MatrixPolynomial,
    pub gram: MatrixPolynomial,
    pub det_gram: Polynomial,
    pub adj_gram: MatrixPolynomial,
    pub pinv_numerator: MatrixPolynomial,
}

impl SymbolData {
    pub fn new(op: &OperatorSpec) -> Self {
        let symbol = op.symbol();
        let adjoint = symbol.transpose();
        let gram = adjoint.mul(&symbol);
        let (det_gram, adj_gram) = gram.det_adj();
        let pinv_numerator = adj_gram.mul(&adjoint);
        SymbolData {
            symbol,
            gram,
            det_gram,
            adj_gram,
            pinv_numerator,
        }
    }
}

/// `G(ξ) = 𝔸*(ξ)𝔸(ξ)`.
pub fn gram(op: &OperatorSpec) -> MatrixPolynomial {
    let s = op.symbol();
    s.transpose().mul(&s)
}

/// The operator `L` with symbol `det G(ξ)·Id − 𝔸(ξ) adj G(ξ) 𝔸*(ξ)`.
///
/// `L(ξ)𝔸(ξ) = 0` identically, and where `det G(ξ) ≠ 0` the matrix
/// `L(ξ)/det G(ξ)` is the orthogonal projector onto `(im 𝔸(ξ))^⊥`, so
/// `ker L(ξ) = im 𝔸(ξ)`. Every nonzero entry has degree `2k·dim V`.
pub fn annihilator_symbol(data: &SymbolData) -> MatrixPolynomial {
    let e = data.symbol.nrows();
    let nvars = data.symbol.nvars();
    let det_id = MatrixPolynomial::identity(e, nvars).scale_poly(&data.det_gram);
    det_id.sub(&data.symbol.mul(&data.pinv_numerator))
}

/// Exact annihilator `L(D)` of an elliptic operator, see [`annihilator_symbol`].
///
/// Fails with `NotElliptic` if `det G` vanishes at one of a fixed set of
/// nonzero rational probe points.
pub fn annihilator(op: &OperatorSpec) -> Result<OperatorSpec> {
    let data = SymbolData::new(op);
    annihilator_from_data(op.space_dim(), &data)
}

pub fn annihilator_from_data(space_dim: usize, data: &SymbolData) -> Result<OperatorSpec> {
    for xi in probe_points(space_dim) {
        if data.det_gram.eval(&xi).is_zero() {
            return Err(AnalysisError::NotElliptic { xi });
        }
    }
    Ok(OperatorSpec::from_symbol(&annihilator_symbol(data)))
}

/// Deterministic nonzero rational points: the coordinate axes, the all-ones
/// vector and a few integer vectors with mixed signs.
pub fn probe_points(n: usize) -> Vec<Vec<Q>> {
    let mut pts = Vec::new();
    for i in 0..n {
        let mut v = vec![q(0); n];
        v[i] = q(1);
        pts.push(v);
    }
    pts.push(vec![q(1); n]);
    const SEEDS: [i64; 7] = [3, -2, 5, 1, -7, 4, 2];
    for s in 0..6 {
        pts.push(
            (0..n)
                .map(|i| q(SEEDS[(i * 3 + s) % SEEDS.len()] + (i as i64 % 2)))
                .collect(),
        );
    }
    pts.retain(|v| v.iter().any(|c| !c.is_zero()));
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_r2() -> OperatorSpec {
        let mut op = OperatorSpec::zero(2, 1, 2);
        op.add_term(0, 0, MultiIndex::unit(2, 0), q(1));
        op.add_term(1, 0, MultiIndex::unit(2, 1), q(1));
        op
    }

    #[test]
    fn symbol_roundtrips_through_coefficients() {
        let op = gradient_r2();
        let sym = op.symbol();
        assert_eq!(sym.get(0, 0), &Polynomial::var(2, 0));
        assert_eq!(sym.get(1, 0), &Polynomial::var(2, 1));
        assert_eq!(OperatorSpec::from_symbol(&sym), op);
    }

    #[test]
    fn row_degrees_and_order() {
        let mut op = OperatorSpec::zero(2, 2, 3);
        op.add_term(0, 0, MultiIndex::zero(2), q(1));
        op.add_term(1, 1, MultiIndex::unit(2, 0), q(1));
        assert_eq!(op.row_degrees(), vec![Some(0), Some(1), None]);
        assert!(op.rows_are_homogeneous());
        assert_eq!(op.order(), None);
        op.add_term(0, 1, MultiIndex::unit(2, 1), q(2));
        assert!(!op.rows_are_homogeneous());
        assert_eq!(gradient_r2().order(), Some(1));
        assert_eq!(OperatorSpec::zero(2, 1, 1).order(), Some(0));
    }

    #[test]
    fn cancelling_terms_leave_no_coefficient() {
        let mut op = OperatorSpec::zero(2, 1, 1);
        op.add_term(0, 0, MultiIndex::unit(2, 0), q(3));
        op.add_term(0, 0, MultiIndex::unit(2, 0), q(-3));
        assert!(op.is_zero());
    }
}
