//! Quadrature on the unit sphere and the moment map
//! `M e = ∫_{S^{n-1}} 𝔸†(ξ)e ⊗ ξ^{⊗(k-n)} dσ(ξ)`.
//!
//! Rules are products: a uniform circle for the last two coordinates and,
//! for every further coordinate `t`, Gauss nodes for the weight
//! `(1 - t²)^{(d-3)/2}` that appears when `S^{d-1}` is sliced along `t`.
//! Nodes are stored as consecutive pairs `(p, -p)`, the second obtained by
//! exact negation, and sums run pair by pair. A homogeneous integrand of odd
//! parity therefore integrates to exactly `0.0`.
//!
//! The symmetric tensor factor `ξ^{⊗(k-n)}` is stored in the monomial basis
//! `ξ^γ`, `|γ| = k - n`, in canonical multi-index order. The monomial `ξ^γ`
//! stands for `|γ|!/γ!` equal entries of the full tensor, and norms use those
//! multiplicities so they agree with the Frobenius norm of the full tensor.
//!
//! The output carries the Fourier phase of the fundamental solution: with the
//! real symbol convention, the map is multiplied by `(-1)^{n/2}` for even `n`.
//! For `-Δ = -∂₁² - ∂₂²` on the plane this gives `M = 2π Id`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{AnalysisError, Result};
use crate::matpoly::CompiledMatrix;
use crate::operator::{OperatorSpec, SymbolData};
use crate::poly::{CompiledPolynomial, MultiIndex, Polynomial};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub n: usize,
    pub level: u32,
    /// Flat node coordinates, `n` per node; nodes `2i` and `2i+1` are antipodal.
    pub nodes: Vec<f64>,
    /// One weight per antipodal pair (the weight of each of its two nodes).
    pub pair_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.n..(i + 1) * self.n]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.pair_weights[i / 2]
    }

    pub fn total_weight(&self) -> f64 {
        2.0 * pairwise_sum(&self.pair_weights)
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = BlockSum::new(1);
        for (p, w) in self.pair_weights.iter().enumerate() {
            let s = f(self.node(2 * p)) + f(self.node(2 * p + 1));
            acc.push(&[w * s]);
        }
        acc.finish()[0]
    }
}

/// Surface area `2π^{n/2}/Γ(n/2)` of `S^{n-1}`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma_half(n as u32)
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half(m: u32) -> f64 {
    assert!(m > 0);
    let mut g = if m.is_multiple_of(2) { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if m.is_multiple_of(2) { 1.0 } else { 0.5 };
    while 2.0 * x < m as f64 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Number of nodes per factor at a refinement level: `2^level` on the circle
/// and `2^(level-1)` for each slicing coordinate.
pub fn rule_size(n: usize, level: u32) -> usize {
    let circle = 1usize << level;
    let slice = 1usize << level.saturating_sub(1).max(1);
    circle * slice.pow(n.saturating_sub(2) as u32)
}

pub fn build_rule(n: usize, level: u32) -> QuadratureRule {
    assert!(n >= 2, "the sphere rule needs n >= 2");
    assert!(level >= 1);
    let (pts, w) = product_rule(n, level);
    // `product_rule` lists a half-set H with S = H ∪ (-H); emit (p, -p) pairs.
    let mut nodes = Vec::with_capacity(2 * pts.len() * n);
    for p in &pts {
        nodes.extend_from_slice(p);
        nodes.extend(p.iter().map(|x| -x));
    }
    QuadratureRule {
        n,
        level,
        nodes,
        pair_weights: w,
    }
}

/// Half of a product rule on `S^{n-1}`, closed under negation after adding
/// the antipodes.
fn product_rule(n: usize, level: u32) -> (Vec<Vec<f64>>, Vec<f64>) {
    if n == 2 {
        let m = 1usize << level;
        let w = 2.0 * std::f64::consts::PI / m as f64;
        let pts = (0..m / 2)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                vec![th.cos(), th.sin()]
            })
            .collect();
        return (pts, vec![w; m / 2]);
    }
    let sub = full_rule(n - 1, level);
    let m = 1usize << level.saturating_sub(1).max(1);
    let (t, tw) = gegenbauer(m, (n as f64 - 3.0) / 2.0);
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    // Negative t half with the full lower sphere; antipodes cover t > 0.
    for i in 0..m / 2 {
        let s = (1.0 - t[i] * t[i]).sqrt();
        for (eta, w) in &sub {
            let mut p = Vec::with_capacity(n);
            p.push(t[i]);
            p.extend(eta.iter().map(|x| s * x));
            pts.push(p);
            wts.push(tw[i] * w);
        }
    }
    (pts, wts)
}

/// The complete (not halved) rule on `S^{d-1}`, as (node, weight) pairs.
fn full_rule(d: usize, level: u32) -> Vec<(Vec<f64>, f64)> {
    let (half, w) = product_rule(d, level);
    let mut out = Vec::with_capacity(2 * half.len());
    for (p, w) in half.into_iter().zip(w) {
        let neg: Vec<f64> = p.iter().map(|x| -x).collect();
        out.push((p, w));
        out.push((neg, w));
    }
    out
}

/// `m`-point Gauss rule for the weight `(1 - t²)^a` on `[-1, 1]` by the
/// Golub–Welsch eigenvalue method, symmetrized so that nodes come in exact
/// `±t` pairs. Nodes are returned in increasing order.
pub fn gegenbauer(m: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let lam = a + 0.5;
    let mut jac = DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let kf = k as f64;
        let beta = kf * (kf + 2.0 * lam - 1.0) / (4.0 * (kf + lam) * (kf + lam - 1.0));
        jac[(k, k - 1)] = beta.sqrt();
        jac[(k - 1, k)] = beta.sqrt();
    }
    let mu0 = std::f64::consts::PI.sqrt() * gamma_half((2.0 * a + 2.0).round() as u32)
        / gamma_half((2.0 * a + 3.0).round() as u32);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut t: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let ti = 0.5 * (t[i] - t[j]);
        let wi = 0.5 * (w[i] + w[j]);
        (t[i], t[j], w[i], w[j]) = (ti, -ti, wi, wi);
    }
    if m % 2 == 1 {
        t[m / 2] = 0.0;
    }
    (t, w)
}

/// Summation in fixed blocks followed by a pairwise tree over block totals,
/// so the result depends only on the input order.
struct BlockSum {
    width: usize,
    current: Vec<f64>,
    count: usize,
    blocks: Vec<Vec<f64>>,
}

const BLOCK: usize = 256;

impl BlockSum {
    fn new(width: usize) -> Self {
        BlockSum {
            width,
            current: vec![0.0; width],
            count: 0,
            blocks: Vec::new(),
        }
    }

    fn push(&mut self, v: &[f64]) {
        for (c, x) in self.current.iter_mut().zip(v) {
            *c += x;
        }
        self.count += 1;
        if self.count == BLOCK {
            self.blocks.push(std::mem::replace(&mut self.current, vec![0.0; self.width]));
            self.count = 0;
        }
    }

    fn finish(mut self) -> Vec<f64> {
        if self.count > 0 || self.blocks.is_empty() {
            self.blocks.push(self.current);
        }
        let mut level = self.blocks;
        while level.len() > 1 {
            level = level
                .chunks(2)
                .map(|c| match c {
                    [a, b] => a.iter().zip(b).map(|(x, y)| x + y).collect(),
                    [a] => a.clone(),
                    _ => unreachable!(),
                })
                .collect();
        }
        level.pop().expect("at least one block")
    }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    let mut acc = BlockSum::new(1);
    for &x in xs {
        acc.push(&[x]);
    }
    acc.finish()[0]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureOptions {
    /// Relative agreement required between two successive levels.
    pub tol: f64,
    /// Largest admissible node count.
    pub max_nodes: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            tol: 1e-8,
            max_nodes: 1 << 22,
        }
    }
}

/// The moment map as a real matrix from `E` to `V ⊗ Sym^{k-n}`.
#[derive(Clone, Debug)]
pub struct MomentMap {
    pub n: usize,
    pub k: u32,
    pub dim_v: usize,
    pub dim_e: usize,
    /// Monomial basis of the symmetric factor.
    pub gammas: Vec<MultiIndex>,
    /// Rows indexed by `(v, γ)` with `v` major.
    pub matrix: DMatrix<f64>,
    /// Change between the last two refinement levels (Frobenius norm).
    pub error: f64,
    pub level: u32,
    pub nodes: usize,
    /// `area · max_nodes |𝔸†(ξ)e ⊗ ξ^{k-n}|` over unit `e`, the reference
    /// magnitude for the zero test.
    pub scale: f64,
}

impl MomentMap {
    pub fn apply(&self, e: &[f64]) -> Vec<f64> {
        assert_eq!(e.len(), self.dim_e);
        let v = nalgebra::DVector::from_column_slice(e);
        (&self.matrix * v).iter().copied().collect()
    }

    /// Norm of a tensor in the monomial basis, weighted by multiplicities.
    pub fn tensor_norm(&self, t: &[f64]) -> f64 {
        let g = self.gammas.len();
        t.iter()
            .enumerate()
            .map(|(r, x)| self.gammas[r % g].multiplicity() * x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_of(&self, e: &[f64]) -> f64 {
        self.tensor_norm(&self.apply(e))
    }
}

/// Floating-point evaluators for `adj G·𝔸*`, `det G` and the monomials `ξ^γ`.
struct Integrand {
    numer: CompiledMatrix,
    det: CompiledPolynomial,
    gammas: Vec<CompiledPolynomial>,
    dim_v: usize,
    dim_e: usize,
}

impl Integrand {
    /// Writes `𝔸†(ξ)[:, e] ξ^γ` for all `(v, γ, e)` into `out` and returns
    /// `(det G(ξ), max_e |𝔸†(ξ)e|)`.
    fn eval(&self, xi: &[f64], numer: &mut [f64], out: &mut [f64]) -> (f64, f64) {
        self.numer.eval_into(xi, numer);
        let d = self.det.eval(xi);
        let g = self.gammas.len();
        let mono: Vec<f64> = self.gammas.iter().map(|m| m.eval(xi)).collect();
        let mut max_col = 0.0f64;
        for e in 0..self.dim_e {
            let mut col = 0.0;
            for v in 0..self.dim_v {
                let a = numer[v * self.dim_e + e] / d;
                col += a * a;
                for (gi, m) in mono.iter().enumerate() {
                    out[((v * g + gi) * self.dim_e) + e] = a * m;
                }
            }
            max_col = max_col.max(col.sqrt());
        }
        (d, max_col)
    }
}

fn check_order(a: &OperatorSpec) -> Result<u32> {
    let k = a.order().ok_or_else(|| AnalysisError::NotHomogeneous(a.row_degrees()))?;
    if (k as usize) < a.space_dim() {
        return Err(AnalysisError::OrderTooLow {
            order: k,
            dim: a.space_dim(),
        });
    }
    Ok(k)
}

/// Moment map evaluated with a single rule.
pub fn moment_map_with_rule(
    a: &OperatorSpec,
    data: &SymbolData,
    rule: &QuadratureRule,
) -> Result<MomentMap> {
    let k = check_order(a)?;
    let n = a.space_dim();
    let (dim_v, dim_e) = (a.source_dim(), a.target_dim());
    let gammas = MultiIndex::all_of_degree(n, k - n as u32);
    let integrand = Integrand {
        numer: data.pinv_numerator.compile(),
        det: data.det_gram.compile(),
        gammas: gammas
            .iter()
            .map(|g| Polynomial::monomial(n, g.clone(), crate::rational::one()).compile())
            .collect(),
        dim_v,
        dim_e,
    };
    let width = dim_v * gammas.len() * dim_e;
    let mut numer = vec![0.0; dim_v * dim_e];
    let mut plus = vec![0.0; width];
    let mut minus = vec![0.0; width];
    let mut pair = vec![0.0; width];
    let mut acc = BlockSum::new(width);
    let mut max_mag = 0.0f64;
    let mut dets = Vec::with_capacity(rule.len());
    for (p, w) in rule.pair_weights.iter().enumerate() {
        let (d1, m1) = integrand.eval(rule.node(2 * p), &mut numer, &mut plus);
        let (d2, m2) = integrand.eval(rule.node(2 * p + 1), &mut numer, &mut minus);
        dets.push(d1);
        dets.push(d2);
        max_mag = max_mag.max(m1).max(m2);
        for ((s, x), y) in pair.iter_mut().zip(&plus).zip(&minus) {
            *s = w * (x + y);
        }
        acc.push(&pair);
    }
    let dmax = dets.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if let Some(&dmin) = dets.iter().min_by(|x, y| x.abs().total_cmp(&y.abs())) {
        if dmax == 0.0 || dmin.abs() < 1e-12 * dmax {
            return Err(AnalysisError::NearSingularSymbol { det: dmin });
        }
    }
    let phase = if n.is_multiple_of(2) && !(n / 2).is_multiple_of(2) { -1.0 } else { 1.0 };
    let sums = acc.finish();
    let rows = dim_v * gammas.len();
    let matrix = DMatrix::from_fn(rows, dim_e, |r, e| phase * sums[r * dim_e + e]);
    Ok(MomentMap {
        n,
        k,
        dim_v,
        dim_e,
        gammas,
        matrix,
        error: f64::NAN,
        level: rule.level,
        nodes: rule.len(),
        scale: sphere_area(n) * max_mag,
    })
}

/// Moment map refined until two successive levels agree to `opts.tol`
/// relative to the reference scale.
pub fn moment_map(a: &OperatorSpec, data: &SymbolData, opts: &QuadratureOptions) -> Result<MomentMap> {
    check_order(a)?;
    let n = a.space_dim();
    let mut level = if n == 2 { 5 } else { 3 };
    let mut prev: Option<MomentMap> = None;
    let mut last_change = f64::INFINITY;
    while rule_size(n, level) <= opts.max_nodes {
        let rule = build_rule(n, level);
        let mut cur = moment_map_with_rule(a, data, &rule)?;
        if let Some(p) = &prev {
            let change = (&cur.matrix - &p.matrix).norm();
            let reference = cur.matrix.norm().max(cur.scale);
            cur.error = change;
            if change <= opts.tol * reference {
                return Ok(cur);
            }
            last_change = change / reference.max(f64::MIN_POSITIVE);
        }
        prev = Some(cur);
        level += 1;
    }
    Err(AnalysisError::QuadratureNotConverged {
        change: last_change,
        tol: opts.tol,
        level: level - 1,
    })
}
