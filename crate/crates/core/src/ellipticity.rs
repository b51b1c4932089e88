//! Deciding whether `𝔸(ξ)` is injective for every `ξ ≠ 0`, i.e. whether
//! `det G(ξ) > 0` on the unit sphere.
//!
//! One and two variables are decided exactly. From three variables on the
//! answer is a semi-decision: an exact search over small integer directions,
//! then a sampled minimization of `det G` on the sphere.

use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{AnalysisError, Result};
use crate::linalg::Subspace;
use crate::operator::{OperatorSpec, SymbolData};
use crate::rational::{approx_f64, format_q, q, to_f64, Q};
use crate::sturm::{real_roots, RealRoot};

#[derive(Clone, Debug, PartialEq)]
pub enum Ellipticity {
    Yes,
    /// `𝔸(xi)·kernel = 0`. When `exact` is false the point is a rational
    /// approximation of an irrational zero.
    No {
        xi: Vec<Q>,
        kernel: Vec<Q>,
        exact: bool,
    },
    /// Normalized minimum of `det G` over the sphere stayed above the threshold.
    NumericallyPositive { min: f64 },
    Inconclusive { min: f64, xi: Vec<f64> },
}

impl Ellipticity {
    pub fn is_elliptic(&self) -> bool {
        matches!(self, Ellipticity::Yes | Ellipticity::NumericallyPositive { .. })
    }

    pub fn is_decided(&self) -> bool {
        !matches!(self, Ellipticity::Inconclusive { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Ellipticity::Yes => "Yes",
            Ellipticity::No { .. } => "No",
            Ellipticity::NumericallyPositive { .. } => "NumericallyPositive",
            Ellipticity::Inconclusive { .. } => "Inconclusive",
        }
    }

    pub fn to_json(&self) -> EllipticityJson {
        let mut out = EllipticityJson {
            verdict: self.label(),
            xi: None,
            kernel: None,
            exact: None,
            min: None,
        };
        match self {
            Ellipticity::Yes => {}
            Ellipticity::No { xi, kernel, exact } => {
                out.xi = Some(xi.iter().map(format_q).collect());
                out.kernel = Some(kernel.iter().map(format_q).collect());
                out.exact = Some(*exact);
            }
            Ellipticity::NumericallyPositive { min } => out.min = Some(*min),
            Ellipticity::Inconclusive { min, .. } => out.min = Some(*min),
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityJson {
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllipticityOptions {
    /// Threshold on `min det G / max det G` over the sampled sphere.
    pub threshold: f64,
    pub samples: usize,
    /// Number of best samples refined by local search.
    pub starts: usize,
    pub seed: u64,
}

impl Default for EllipticityOptions {
    fn default() -> Self {
        EllipticityOptions {
            threshold: 1e-9,
            samples: 10_000,
            starts: 8,
            seed: 0,
        }
    }
}

pub fn is_elliptic(a: &OperatorSpec, opts: &EllipticityOptions) -> Result<Ellipticity> {
    is_elliptic_with(a, &SymbolData::new(a), opts)
}

pub fn is_elliptic_with(
    a: &OperatorSpec,
    data: &SymbolData,
    opts: &EllipticityOptions,
) -> Result<Ellipticity> {
    if a.order().is_none() {
        return Err(AnalysisError::NotHomogeneous(a.row_degrees()));
    }
    let n = a.space_dim();
    if a.source_dim() == 0 {
        return Ok(Ellipticity::Yes);
    }
    if data.det_gram.is_zero() {
        let mut e1 = vec![q(0); n];
        e1[0] = q(1);
        return Ok(witness(data, vec![e1]).expect("symbol is singular everywhere"));
    }
    match n {
        1 => Ok(Ellipticity::Yes),
        2 => Ok(decide_plane(data)),
        _ => Ok(search(data, opts)),
    }
}

/// Candidate order: smaller support first, then descending lexicographic.
fn candidate_key(v: &[Q]) -> (usize, Vec<std::cmp::Reverse<Q>>) {
    (
        v.iter().filter(|x| !x.is_zero()).count(),
        v.iter().cloned().map(std::cmp::Reverse).collect(),
    )
}

/// Among exact zeros of `det G`, the one whose kernel's first echelon basis
/// vector has the earliest pivot; ties go to candidate order.
fn witness(data: &SymbolData, mut zeros: Vec<Vec<Q>>) -> Option<Ellipticity> {
    zeros.sort_by_key(|v| candidate_key(v));
    let mut best: Option<(usize, Vec<Q>, Vec<Q>)> = None;
    for xi in zeros {
        let ker = Subspace::kernel(&data.symbol.eval(&xi));
        let Some(v) = ker.basis().first() else { continue };
        let pivot = v.iter().position(|x| !x.is_zero()).expect("nonzero basis vector");
        if best.as_ref().is_none_or(|(p, _, _)| pivot < *p) {
            best = Some((pivot, xi, v.clone()));
        }
    }
    best.map(|(_, xi, kernel)| Ellipticity::No {
        xi,
        kernel,
        exact: true,
    })
}

/// Two variables: zeros of `det G` on the circle are `(0, 1)` or `(1, t)`
/// with `t` a real root of `det G(1, t)`.
fn decide_plane(data: &SymbolData) -> Ellipticity {
    let det = &data.det_gram;
    let mut zeros = Vec::new();
    if det.eval(&[q(0), q(1)]).is_zero() {
        zeros.push(vec![q(0), q(1)]);
    }
    let uni = det.restrict_univariate(&[Some(q(1)), None]);
    let width = Q::new(1.into(), (1u64 << 40).into());
    let mut irrational = None;
    for r in real_roots(&uni, &width) {
        match r {
            RealRoot::Rational(t) => zeros.push(vec![q(1), t]),
            RealRoot::Interval(..) => {
                irrational.get_or_insert(r.approx());
            }
        }
    }
    if let Some(w) = witness(data, zeros) {
        return w;
    }
    match irrational {
        None => Ellipticity::Yes,
        Some(t) => {
            let xi = vec![q(1), t];
            let kernel = numeric_kernel(data, &xi.iter().map(to_f64).collect::<Vec<_>>());
            Ellipticity::No {
                xi,
                kernel,
                exact: false,
            }
        }
    }
}

/// Eigenvector of `𝔸*𝔸` for its smallest eigenvalue, rationalized.
fn numeric_kernel(data: &SymbolData, xi: &[f64]) -> Vec<Q> {
    let m = data.symbol.compile().eval(xi);
    let eig = nalgebra::SymmetricEigen::new(m.transpose() * &m);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let col = eig.eigenvectors.column(imin);
    let scale = col.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
    col.iter().map(|x| approx_f64(x / scale, 1_000_000)).collect()
}

/// Vectors with entries in {-1, 0, 1} whose first nonzero entry is 1.
fn sign_candidates(n: usize, max_support: usize) -> Vec<Vec<Q>> {
    let mut out = Vec::new();
    let total = 3usize.pow(n as u32);
    for code in 1..total {
        let mut c = code;
        let v: Vec<i64> = (0..n)
            .map(|_| {
                let d = (c % 3) as i64 - 1;
                c /= 3;
                d
            })
            .collect();
        let first = v.iter().find(|&&x| x != 0).copied().unwrap_or(0);
        let support = v.iter().filter(|&&x| x != 0).count();
        if first == 1 && support <= max_support {
            out.push(v.into_iter().map(q).collect());
        }
    }
    out
}

fn normalize(x: &mut [f64]) {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= r);
}

fn search(data: &SymbolData, opts: &EllipticityOptions) -> Ellipticity {
    let n = data.symbol.nvars();
    let det = &data.det_gram;
    let max_support = if n <= 7 { n } else { 3 };
    let zeros: Vec<Vec<Q>> = sign_candidates(n, max_support)
        .into_iter()
        .filter(|v| det.eval(v).is_zero())
        .collect();
    if let Some(w) = witness(data, zeros) {
        return w;
    }
    let f = det.compile();
    let eval = |x: &[f64]| f.eval(x);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut samples: Vec<(f64, Vec<f64>)> = Vec::with_capacity(opts.samples);
    for _ in 0..opts.samples {
        let mut x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut x);
        samples.push((eval(&x), x));
    }
    let scale = samples.iter().fold(0.0f64, |m, s| m.max(s.0.abs()));
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for (v, x) in samples.into_iter().take(opts.starts) {
        let r = pattern_search(&eval, v, x);
        if r.0 < best.0 {
            best = r;
        }
    }
    let min = best.0 / scale;
    if min > opts.threshold {
        return Ellipticity::NumericallyPositive { min };
    }
    if let Some(w) = rationalize(data, &best.1) {
        return w;
    }
    Ellipticity::Inconclusive { min, xi: best.1 }
}

/// Coordinate pattern search on the sphere with halving steps.
fn pattern_search(f: &impl Fn(&[f64]) -> f64, mut fx: f64, mut x: Vec<f64>) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut h = 0.25;
    let mut trial = vec![0.0; n];
    while h > 1e-12 {
        let mut improved = false;
        for i in 0..n {
            for s in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                trial[i] += s * h;
                normalize(&mut trial);
                let ft = f(&trial);
                if ft < fx {
                    fx = ft;
                    x.copy_from_slice(&trial);
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (fx, x)
}

/// Tries small-denominator rationalizations of a numerical minimizer.
fn rationalize(data: &SymbolData, x: &[f64]) -> Option<Ellipticity> {
    let big = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut zeros = Vec::new();
    for den in [1, 8, 64, 1024] {
        let v: Vec<Q> = x.iter().map(|c| approx_f64(c / big, den)).collect();
        if v.iter().any(|c| !c.is_zero()) && data.det_gram.eval(&v).is_zero() {
            let first = v.iter().find(|c| !c.is_zero()).cloned().unwrap_or_else(Q::one);
            let sign = if first < Q::zero() { -Q::one() } else { Q::one() };
            zeros.push(v.into_iter().map(|c| c * &sign).collect());
        }
    }
    witness(data, zeros)
}
