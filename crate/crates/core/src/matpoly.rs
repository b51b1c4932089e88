//! Matrices whose entries are [`Polynomial`]s.

use std::collections::HashMap;

use crate::linalg::RatMatrix;
use crate::poly::{CompiledPolynomial, Polynomial};
use crate::rational::Q;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixPolynomial {
    rows: usize,
    cols: usize,
    nvars: usize,
    entries: Vec<Polynomial>,
}

impl MatrixPolynomial {
    pub fn zeros(rows: usize, cols: usize, nvars: usize) -> Self {
        MatrixPolynomial {
            rows,
            cols,
            nvars,
            entries: vec![Polynomial::zero(nvars); rows * cols],
        }
    }

    pub fn identity(n: usize, nvars: usize) -> Self {
        let mut m = Self::zeros(n, n, nvars);
        for i in 0..n {
            m.set(i, i, Polynomial::one(nvars));
        }
        m
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        nvars: usize,
        mut f: impl FnMut(usize, usize) -> Polynomial,
    ) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let p = f(i, j);
                assert_eq!(p.nvars(), nvars);
                entries.push(p);
            }
        }
        MatrixPolynomial {
            rows,
            cols,
            nvars,
            entries,
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn get(&self, i: usize, j: usize) -> &Polynomial {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, p: Polynomial) {
        assert_eq!(p.nvars(), self.nvars);
        self.entries[i * self.cols + j] = p;
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Polynomial::is_zero)
    }

    pub fn entries(&self) -> impl Iterator<Item = &Polynomial> {
        self.entries.iter()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, self.nvars, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, rhs: &MatrixPolynomial) -> MatrixPolynomial {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in product");
        Self::from_fn(self.rows, rhs.cols, self.nvars, |i, j| {
            let mut acc = Polynomial::zero(self.nvars);
            for k in 0..self.cols {
                let (a, b) = (self.get(i, k), rhs.get(k, j));
                if !a.is_zero() && !b.is_zero() {
                    acc = &acc + &(a * b);
                }
            }
            acc
        })
    }

    pub fn add(&self, rhs: &MatrixPolynomial) -> MatrixPolynomial {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| {
            self.get(i, j) + rhs.get(i, j)
        })
    }

    pub fn sub(&self, rhs: &MatrixPolynomial) -> MatrixPolynomial {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| {
            self.get(i, j) - rhs.get(i, j)
        })
    }

    pub fn scale_poly(&self, p: &Polynomial) -> MatrixPolynomial {
        Self::from_fn(self.rows, self.cols, self.nvars, |i, j| self.get(i, j) * p)
    }

    pub fn eval(&self, xi: &[Q]) -> RatMatrix {
        assert_eq!(xi.len(), self.nvars);
        let mut m = RatMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = self.get(i, j).eval(xi);
            }
        }
        m
    }

    /// Common degree of all nonzero entries, if there is one.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let mut deg = None;
        for p in &self.entries {
            if p.is_zero() {
                continue;
            }
            let d = p.homogeneous_degree()?;
            match deg {
                None => deg = Some(d),
                Some(e) if e != d => return None,
                _ => {}
            }
        }
        deg
    }

    /// Determinant and adjugate, `G·adj G = det G · Id`.
    ///
    /// Minors are expanded along their first row and memoized by the set of
    /// surviving columns, so an `m × m` determinant costs `O(m 2^m)` polynomial
    /// products rather than `m!`.
    pub fn det_adj(&self) -> (Polynomial, MatrixPolynomial) {
        assert_eq!(self.rows, self.cols, "det_adj needs a square matrix");
        let m = self.rows;
        let all_rows: Vec<usize> = (0..m).collect();
        let all_cols: Vec<usize> = (0..m).collect();
        let det = self.minor_det(&all_rows, &all_cols);
        if m == 0 {
            return (det, MatrixPolynomial::zeros(0, 0, self.nvars));
        }
        let adj = Self::from_fn(m, m, self.nvars, |i, j| {
            // adj(G)_{ij} = (-1)^{i+j} det(G with row j and column i removed)
            let rows: Vec<usize> = (0..m).filter(|&r| r != j).collect();
            let cols: Vec<usize> = (0..m).filter(|&c| c != i).collect();
            let minor = self.minor_det(&rows, &cols);
            if (i + j) % 2 == 0 {
                minor
            } else {
                -&minor
            }
        });
        (det, adj)
    }

    pub fn det(&self) -> Polynomial {
        assert_eq!(self.rows, self.cols);
        let idx: Vec<usize> = (0..self.rows).collect();
        self.minor_det(&idx, &idx)
    }

    fn minor_det(&self, rows: &[usize], cols: &[usize]) -> Polynomial {
        let mut memo: HashMap<u64, Polynomial> = HashMap::new();
        let mask: u64 = cols.iter().fold(0, |acc, &c| acc | (1 << c));
        self.det_rec(rows, mask, &mut memo)
    }

    fn det_rec(&self, rows: &[usize], mask: u64, memo: &mut HashMap<u64, Polynomial>) -> Polynomial {
        if rows.is_empty() {
            return Polynomial::one(self.nvars);
        }
        if let Some(p) = memo.get(&mask) {
            return p.clone();
        }
        let r = rows[0];
        let mut acc = Polynomial::zero(self.nvars);
        let mut sign_positive = true;
        for c in 0..self.cols {
            if mask & (1 << c) == 0 {
                continue;
            }
            let entry = self.get(r, c);
            if !entry.is_zero() {
                let sub = self.det_rec(&rows[1..], mask & !(1 << c), memo);
                if !sub.is_zero() {
                    let term = entry * &sub;
                    acc = if sign_positive { &acc + &term } else { &acc - &term };
                }
            }
            sign_positive = !sign_positive;
        }
        memo.insert(mask, acc.clone());
        acc
    }

    pub fn compile(&self) -> CompiledMatrix {
        CompiledMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(Polynomial::compile).collect(),
        }
    }
}

/// Floating-point evaluator for a [`MatrixPolynomial`].
#[derive(Clone, Debug)]
pub struct CompiledMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<CompiledPolynomial>,
}

impl CompiledMatrix {
    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    /// Row-major values at `x`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.entries) {
            *o = p.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut buf = vec![0.0; self.rows * self.cols];
        self.eval_into(x, &mut buf);
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &buf)
    }
}
