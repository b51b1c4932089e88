//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Terms are keyed by [`MultiIndex`] and kept in a `BTreeMap`, so iteration
//! and printing order is deterministic: graded by total degree, then
//! lexicographically with higher powers of earlier variables first
//! (`x1^2 < x1 x2 < x2^2`).

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};

use crate::rational::{format_q, q, to_f64, Q};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The multi-index of the single variable `x_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.len(), other.len());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `α!` as an exact integer.
    pub fn factorial(&self) -> Q {
        let mut acc = Q::one();
        for &e in &self.0 {
            for m in 2..=e {
                acc *= q(m as i64);
            }
        }
        acc
    }

    /// Number of ordered index tuples that collapse to this multi-index,
    /// `|α|! / α!`.
    pub fn multiplicity(&self) -> f64 {
        let mut num = 1.0;
        for m in 2..=self.degree() {
            num *= m as f64;
        }
        let mut den = 1.0;
        for &e in &self.0 {
            for m in 2..=e {
                den *= m as f64;
            }
        }
        num / den
    }

    /// All multi-indices in `n` variables with total degree `d`, in the canonical order.
    pub fn all_of_degree(n: usize, d: u32) -> Vec<MultiIndex> {
        fn rec(n: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
            if prefix.len() + 1 == n {
                prefix.push(d);
                out.push(MultiIndex(prefix.clone()));
                prefix.pop();
                return;
            }
            for e in (0..=d).rev() {
                prefix.push(e);
                rec(n, d - e, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        if n == 0 {
            if d == 0 {
                out.push(MultiIndex(Vec::new()));
            }
            return out;
        }
        rec(n, d, &mut Vec::with_capacity(n), &mut out);
        out
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&e, &xi)| acc * xi.powi(e as i32))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<MultiIndex, Q>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Q) -> Self {
        Self::monomial(nvars, MultiIndex::zero(nvars), c)
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Q::one())
    }

    pub fn monomial(nvars: usize, alpha: MultiIndex, c: Q) -> Self {
        assert_eq!(alpha.len(), nvars, "multi-index length mismatch");
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(alpha, c);
        }
        Polynomial { nvars, terms }
    }

    /// The coordinate function `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        Self::monomial(nvars, MultiIndex::unit(nvars, i), Q::one())
    }

    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (MultiIndex, Q)>) -> Self {
        let mut p = Polynomial::zero(nvars);
        for (a, c) in terms {
            p.add_term(a, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Q)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> Q {
        self.terms.get(alpha).cloned().unwrap_or_else(Q::zero)
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: Q) {
        assert_eq!(alpha.len(), self.nvars, "multi-index length mismatch");
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(alpha) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    /// Largest total degree of a stored term; `None` for the zero polynomial.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(MultiIndex::degree).max()
    }

    /// Common total degree of all terms, if the polynomial is homogeneous and nonzero.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(MultiIndex::degree);
        let d = it.next()?;
        it.all(|e| e == d).then_some(d)
    }

    pub fn scale(&self, c: &Q) -> Polynomial {
        if c.is_zero() {
            return Polynomial::zero(self.nvars);
        }
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(a, v)| (a.clone(), v * c)).collect(),
        }
    }

    pub fn mul_monomial(&self, alpha: &MultiIndex) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(a, v)| (a.add(alpha), v.clone()))
                .collect(),
        }
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        assert_eq!(x.len(), self.nvars);
        let mut acc = Q::zero();
        for (a, c) in &self.terms {
            let mut t = c.clone();
            for (&e, xi) in a.exponents().iter().zip(x) {
                for _ in 0..e {
                    t *= xi;
                }
            }
            acc += t;
        }
        acc
    }

    /// Partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (a, c) in &self.terms {
            let e = a.exponents()[i];
            if e == 0 {
                continue;
            }
            let mut b = a.exponents().to_vec();
            b[i] -= 1;
            out.add_term(MultiIndex::new(b), c * q(e as i64));
        }
        out
    }

    /// `∂^β p`.
    pub fn derivative_multi(&self, beta: &MultiIndex) -> Polynomial {
        let mut p = self.clone();
        for (i, &e) in beta.exponents().iter().enumerate() {
            for _ in 0..e {
                p = p.derivative(i);
            }
        }
        p
    }

    pub fn compile(&self) -> CompiledPolynomial {
        CompiledPolynomial {
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.exponents().to_vec(), to_f64(c)))
                .collect(),
        }
    }

    /// Coefficients of the univariate polynomial obtained by fixing all but
    /// one variable; `fixed[i] = None` marks the free variable.
    pub fn restrict_univariate(&self, fixed: &[Option<Q>]) -> Vec<Q> {
        assert_eq!(fixed.len(), self.nvars);
        let free = fixed
            .iter()
            .position(Option::is_none)
            .expect("one variable must stay free");
        let mut coeffs: Vec<Q> = Vec::new();
        for (a, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in a.exponents().iter().enumerate() {
                if let Some(v) = &fixed[i] {
                    for _ in 0..e {
                        t *= v;
                    }
                }
            }
            let d = a.exponents()[free] as usize;
            if coeffs.len() <= d {
                coeffs.resize(d + 1, Q::zero());
            }
            coeffs[d] += t;
        }
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        coeffs
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (a, c) in &rhs.terms {
            out.add_term(a.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (a, c) in &rhs.terms {
            out.add_term(a.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(a, c)| (a.clone(), -c.clone())).collect(),
        }
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (a, c) in &self.terms {
            for (b, d) in &rhs.terms {
                out.add_term(a.add(b), c * d);
            }
        }
        out
    }
}

impl fmt::Display for Polynomial {
    /// Prints in DSL style with `d1..dn` as variables, e.g. `d1^2 - 1/2 d1 d2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (idx, (a, c)) in self.terms.iter().enumerate() {
            let neg = c < &Q::zero();
            let mag = if neg { -c.clone() } else { c.clone() };
            match (idx, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let mono = monomial_string(a, "d");
            if mono.is_empty() {
                write!(f, "{}", format_q(&mag))?;
            } else if mag.is_one() {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{} {mono}", format_q(&mag))?;
            }
        }
        Ok(())
    }
}

/// `d1^2 d3` style rendering of a multi-index; empty for the zero index.
pub fn monomial_string(alpha: &MultiIndex, var: &str) -> String {
    alpha
        .exponents()
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(i, &e)| {
            if e == 1 {
                format!("{var}{}", i + 1)
            } else {
                format!("{var}{}^{e}", i + 1)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Floating-point evaluator for a fixed polynomial.
///
/// Monomials are formed by repeated multiplication in a fixed order, so
/// evaluating at `-x` gives exactly `±` the value at `x` for homogeneous input.
#[derive(Clone, Debug)]
pub struct CompiledPolynomial {
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPolynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = *c;
            for (&k, &xi) in e.iter().zip(x) {
                for _ in 0..k {
                    t *= xi;
                }
            }
            acc += t;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}
