//! Exact algebraic conditions: intersections of symbol images and kernels,
//! the homogenization of mixed-order constraints, and the left-inverse
//! construction behind the potential field.

use std::collections::BTreeMap;

use num_traits::Zero;
use serde::Serialize;

use crate::error::{AnalysisError, Result};
use crate::linalg::{RatMatrix, Subspace};
use crate::matpoly::MatrixPolynomial;
use crate::operator::{annihilator_from_data, OperatorSpec, SymbolData};
use crate::poly::{MultiIndex, Polynomial};
use crate::rational::{format_q, Q};

/// Replaces each row by its monomial multiples up to the maximal order.
pub fn homogenize(c: &OperatorSpec) -> OperatorSpec {
    homogenize_to(c, c.max_order())
}

/// Brings every row to order `l`. A row of order `d < l` becomes the block
/// of rows `ξ^γ C_j(ξ)`, `|γ| = l − d`, in canonical multi-index order. A row
/// mixing orders is first split into its homogeneous parts, which leaves the
/// kernel intersection unchanged. Zero rows are kept as they are.
pub fn homogenize_to(c: &OperatorSpec, l: u32) -> OperatorSpec {
    assert!(l >= c.max_order(), "target order below the operator order");
    let n = c.space_dim();
    if c.rows_are_homogeneous() && c.row_degrees().iter().all(|d| d.is_none_or(|d| d == l)) {
        return c.clone();
    }
    let mut rows: Vec<BTreeMap<MultiIndex, Vec<Q>>> = Vec::new();
    for i in 0..c.target_dim() {
        let mut by_degree: BTreeMap<u32, BTreeMap<MultiIndex, Vec<Q>>> = BTreeMap::new();
        for (a, m) in c.coeffs() {
            let r = m.row(i);
            if r.iter().any(|x| !x.is_zero()) {
                by_degree
                    .entry(a.degree())
                    .or_default()
                    .insert(a.clone(), r.to_vec());
            }
        }
        if by_degree.is_empty() {
            rows.push(BTreeMap::new());
            continue;
        }
        for (d, part) in by_degree {
            for g in MultiIndex::all_of_degree(n, l - d) {
                rows.push(part.iter().map(|(a, r)| (a.add(&g), r.clone())).collect());
            }
        }
    }
    let mut out = OperatorSpec::zero(n, c.source_dim(), rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        for (a, r) in row {
            for (j, v) in r.into_iter().enumerate() {
                out.add_term(i, j, a.clone(), v);
            }
        }
    }
    out
}

/// `K_C = ⋂_{ξ≠0} ker 𝒞(ξ)`, the common kernel of all coefficient matrices
/// of the homogenized constraint.
pub fn kernel_intersection(c: &OperatorSpec) -> Subspace {
    let h = homogenize(c);
    if h.is_zero() {
        return Subspace::full(c.source_dim());
    }
    Subspace::kernel(&h.coefficient_stack())
}

/// `I_A = ⋂_{ξ≠0} im 𝔸(ξ)`, the common kernel of the coefficients of the
/// exact annihilator.
pub fn image_intersection(a: &OperatorSpec) -> Result<Subspace> {
    image_intersection_from_data(a.space_dim(), &SymbolData::new(a))
}

pub fn image_intersection_from_data(space_dim: usize, data: &SymbolData) -> Result<Subspace> {
    let l = annihilator_from_data(space_dim, data)?;
    if l.is_zero() {
        return Ok(Subspace::full(l.source_dim()));
    }
    Ok(Subspace::kernel(&l.coefficient_stack()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcVerdict {
    pub holds: bool,
    pub intersection: Subspace,
    /// First canonical basis vector of `I_A ∩ K_C` when the condition fails.
    pub witness: Option<Vec<Q>>,
}

pub fn check_cc(i_a: &Subspace, k_c: &Subspace) -> CcVerdict {
    let intersection = i_a.intersect(k_c);
    let witness = intersection.basis().first().cloned();
    CcVerdict {
        holds: witness.is_none(),
        intersection,
        witness,
    }
}

/// Maps `K_β: F → E` indexed by `|β| = l` with `Σ_β K_β L_β = Π`, the
/// orthogonal projector onto `im M*`. In particular the sum restricts to the
/// identity on `im M*`, and so does its transpose `Σ_β L_β* K_β*`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeftInverseFamily {
    pub order: u32,
    pub space_dim: usize,
    /// `im M*` as a subspace of `E`.
    pub range: Subspace,
    /// Coefficients `L_β` of the homogenized operator.
    pub l_coeffs: BTreeMap<MultiIndex, RatMatrix>,
    pub maps: BTreeMap<MultiIndex, RatMatrix>,
}

pub fn left_inverse_family(l: &OperatorSpec, m: &RatMatrix) -> Result<LeftInverseFamily> {
    let e = l.source_dim();
    let f = l.target_dim();
    if m.ncols() != e {
        return Err(AnalysisError::DimensionMismatch(format!(
            "M acts on R^{} but the operator acts on R^{e}",
            m.ncols()
        )));
    }
    let h = homogenize(l);
    let order = h.max_order();
    let kernel = kernel_intersection(&h);
    for v in kernel.basis() {
        if m.mul_vec(v).iter().any(|x| !x.is_zero()) {
            return Err(AnalysisError::HypothesisFailed(format!(
                "M does not annihilate the kernel intersection: M({}) != 0",
                v.iter().map(format_q).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    let betas = MultiIndex::all_of_degree(h.space_dim(), order);
    let l_coeffs: BTreeMap<MultiIndex, RatMatrix> =
        betas.iter().map(|b| (b.clone(), h.coeff(b))).collect();
    let range = Subspace::span(e, &m.to_rows());
    let r = range.dim();
    let mut maps = BTreeMap::new();
    if r == 0 {
        for b in &betas {
            maps.insert(b.clone(), RatMatrix::zeros(e, f));
        }
        return Ok(LeftInverseFamily {
            order,
            space_dim: h.space_dim(),
            range,
            l_coeffs,
            maps,
        });
    }
    let blocks: Vec<&RatMatrix> = l_coeffs.values().collect();
    let t = RatMatrix::vstack(e, &blocks);
    let b = range.basis_matrix();
    let bt = b.transpose();
    let b_pinv = bt.mul(&b).inverse().expect("basis has full rank").mul(&bt);
    // Factor T = Z·Q with Q a row basis, then X = B⁺Q*(QQ*)⁻¹(Z*Z)⁻¹Z*
    // solves X·T = B⁺ because the rows of B⁺ lie in the row space of T.
    let (rr, piv) = t.rref();
    let qm = RatMatrix::from_row_vectors(e, &rr.to_rows()[..piv.len()]);
    let qt = qm.transpose();
    let qqt_inv = qm.mul(&qt).inverse().expect("row basis");
    let z = t.mul(&qt).mul(&qqt_inv);
    let zt = z.transpose();
    let ztz_inv = zt.mul(&z).inverse().expect("Z has full column rank");
    let x = b_pinv.mul(&qt).mul(&qqt_inv).mul(&ztz_inv).mul(&zt);
    let k_all = b.mul(&x);
    for (idx, beta) in betas.iter().enumerate() {
        let cols: Vec<usize> = (idx * f..(idx + 1) * f).collect();
        maps.insert(beta.clone(), k_all.select_columns(&cols));
    }
    Ok(LeftInverseFamily {
        order,
        space_dim: h.space_dim(),
        range,
        l_coeffs,
        maps,
    })
}

impl LeftInverseFamily {
    /// `Σ_β K_β L_β` as an exact matrix on `E`.
    pub fn composition(&self) -> RatMatrix {
        let e = self.range.ambient_dim();
        self.maps
            .iter()
            .fold(RatMatrix::zeros(e, e), |acc, (b, k)| acc.add(&k.mul(&self.l_coeffs[b])))
    }

    /// Whether `Σ_β K_β L_β` restricts to the identity on `im M*`.
    pub fn verify(&self) -> bool {
        let b = self.range.basis_matrix();
        self.composition().mul(&b) == b
    }
}

/// `P(x) = Σ_β x^β/β! K_β*`, an `F × E` polynomial matrix.
pub fn potential_field(k: &LeftInverseFamily) -> MatrixPolynomial {
    let e = k.range.ambient_dim();
    let f = k.l_coeffs.values().next().map_or(0, RatMatrix::nrows);
    let mut p = MatrixPolynomial::zeros(f, e, k.space_dim);
    for (beta, km) in &k.maps {
        let w = beta.factorial().recip();
        for i in 0..f {
            for j in 0..e {
                let c = &km[(j, i)] * &w;
                if !c.is_zero() {
                    let entry = p.get(i, j) + &Polynomial::monomial(k.space_dim, beta.clone(), c);
                    p.set(i, j, entry);
                }
            }
        }
    }
    p
}

/// `𝓛*P = Σ_β L_β* ∂^β P`, computed by symbolic differentiation.
pub fn adjoint_applied(k: &LeftInverseFamily, p: &MatrixPolynomial) -> MatrixPolynomial {
    let e = k.range.ambient_dim();
    let mut out = MatrixPolynomial::zeros(e, e, k.space_dim);
    for (beta, lb) in &k.l_coeffs {
        let d = MatrixPolynomial::from_fn(p.nrows(), p.ncols(), k.space_dim, |i, j| {
            p.get(i, j).derivative_multi(beta)
        });
        let lt = MatrixPolynomial::from_fn(lb.ncols(), lb.nrows(), k.space_dim, |i, j| {
            Polynomial::constant(k.space_dim, lb[(j, i)].clone())
        });
        out = out.add(&lt.mul(&d));
    }
    out
}

/// Checks `𝓛*P = Id` on `im M*`: the field must be constant and fix every
/// basis vector of the range.
pub fn verify_potential(k: &LeftInverseFamily, p: &MatrixPolynomial) -> bool {
    let s = adjoint_applied(k, p);
    let zero = vec![Q::zero(); k.space_dim];
    let constant = s.eval(&zero);
    let b = k.range.basis_matrix();
    let is_constant = s.entries().all(|q| q.terms().all(|(a, _)| a.degree() == 0));
    is_constant && constant.mul(&b) == b
}

/// JSON view of a left-inverse family.
#[derive(Clone, Debug, Serialize)]
pub struct LeftInverseJson {
    pub order: u32,
    pub range_basis: Vec<Vec<String>>,
    pub maps: Vec<(String, Vec<Vec<String>>)>,
    pub identity_holds: bool,
    pub potential_identity_holds: bool,
}

impl LeftInverseFamily {
    pub fn to_json(&self) -> LeftInverseJson {
        let p = potential_field(self);
        LeftInverseJson {
            order: self.order,
            range_basis: self.range.to_strings(),
            maps: self
                .maps
                .iter()
                .map(|(b, k)| (crate::poly::monomial_string(b, "d"), k.to_strings()))
                .collect(),
            identity_holds: self.verify(),
            potential_identity_holds: verify_potential(self, &p),
        }
    }
}
