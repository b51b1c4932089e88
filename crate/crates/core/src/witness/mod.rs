//! Spectral experiments on the periodic grid: solve `𝔸u = f` mode by mode
//! and watch `‖D^{k-j}u‖ / ‖f‖_{L¹}` as the data concentrates.
//!
//! Two data families are available. The Dirac family uses a Gaussian
//! `ρ_ε·e` of unit mass pointing in a fixed direction `e`. The constrained
//! family draws a fixed random combination of `ε²∂_a∂_b ρ_ε` in every
//! component and projects each Fourier mode onto `ker 𝒞(ξ)`.
//!
//! Fourier multipliers use `∂^α ↦ (iξ)^α`, so the symbol of `𝔸` on the mode
//! `ξ` is `i^k 𝔸(ξ)` with `𝔸(ξ)` the real symbol.

mod grid;

pub use grid::{Grid, NdFft};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::conditions::{homogenize, kernel_intersection};
use crate::dsl::SystemSpec;
use crate::ellipticity::{is_elliptic_with, EllipticityOptions};
use crate::error::AnalysisError;
use crate::matpoly::CompiledMatrix;
use crate::operator::{OperatorSpec, SymbolData};
use crate::poly::MultiIndex;
use crate::rational::{format_q, to_f64, Q};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum WitnessError {
    #[error("epsilon {eps} is below the resolution limit {min} (two grid spacings)")]
    EpsilonTooSmall { eps: f64, min: f64 },
    #[error("residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

pub type Result<T> = std::result::Result<T, WitnessError>;

/// Derivative gap: `D^{k-j}u` in `L^{n/(n-j)}`, or `D^{k-n}u` in `L^∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormIndex {
    Finite(u32),
    Infinity,
}

impl Serialize for NormIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormIndex::Finite(j) => s.serialize_u32(*j),
            NormIndex::Infinity => s.serialize_str("inf"),
        }
    }
}

impl std::str::FromStr for NormIndex {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(NormIndex::Infinity),
            t => t
                .parse::<u32>()
                .map(NormIndex::Finite)
                .map_err(|_| format!("expected a positive integer or 'inf', got '{t}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Dirac,
    Constrained,
}

#[derive(Clone, Debug)]
pub struct WitnessConfig {
    pub system: SystemSpec,
    /// Direction `e ∈ E` of the Dirac family.
    pub direction: Option<Vec<Q>>,
    pub family: Family,
    pub epsilons: Vec<f64>,
    pub j: NormIndex,
    pub grid: usize,
    pub seed: u64,
    /// Relative L² residual above which a Dirac row is not reported.
    pub residual_tol: f64,
    /// Fail with `ResidualTooLarge` instead of recording a diagnostic.
    pub strict: bool,
    pub growth_factor: f64,
    pub flatness: f64,
    /// Center of the mollified Dirac mass.
    pub center: Vec<f64>,
}

impl WitnessConfig {
    pub fn new(system: SystemSpec, family: Family) -> Self {
        let n = system.n;
        let k = system.a.order().unwrap_or(0);
        let j = if k as usize >= n {
            NormIndex::Infinity
        } else {
            NormIndex::Finite(1)
        };
        WitnessConfig {
            system,
            direction: None,
            family,
            epsilons: vec![0.4, 0.2, 0.1, 0.05],
            j,
            grid: 256,
            seed: 0,
            residual_tol: 1e-8,
            strict: false,
            growth_factor: 2.0,
            flatness: 0.10,
            center: vec![0.0; n],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Classification {
    Growing,
    Bounded,
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessRow {
    pub epsilon: f64,
    /// `None` when the data is not in the range of the operator.
    pub ratio: Option<f64>,
    pub residual: f64,
    pub f_l1: f64,
    /// Size of the mean that was removed from `f`.
    pub mean_removed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessResult {
    pub rows: Vec<WitnessRow>,
    pub classification: Classification,
    /// Fit of the ratio against `log(1/ε)`, for the `L^∞` case.
    pub fit: Option<LogFit>,
    pub diagnostics: Vec<String>,
}

impl WitnessResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,ratio,residual\n");
        for r in &self.rows {
            let ratio = r.ratio.map(|x| x.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{:e}\n", r.epsilon, ratio, r.residual));
        }
        s
    }
}

/// `Σ_k ρ̂_ε(k) e^{ik·x}` coefficients of the periodized unit-mass Gaussian
/// centered at `center`; the Nyquist bins are zero.
pub fn gaussian_coefficients(grid: &Grid, eps: f64, center: &[f64]) -> Vec<Complex64> {
    let norm = (2.0 * std::f64::consts::PI).powi(grid.n as i32);
    grid.frequencies()
        .into_iter()
        .map(|k| match k {
            None => Complex64::new(0.0, 0.0),
            Some(k) => {
                let k2: f64 = k.iter().map(|x| x * x).sum();
                let phase: f64 = -k.iter().zip(center).map(|(a, b)| a * b).sum::<f64>();
                Complex64::from_polar((-0.5 * eps * eps * k2).exp() / norm, phase)
            }
        })
        .collect()
}

fn check_eps(grid: &Grid, eps: f64) -> Result<()> {
    let min = 2.0 * grid.spacing();
    if eps < min {
        return Err(WitnessError::EpsilonTooSmall { eps, min });
    }
    Ok(())
}

/// Mollified Dirac mass `ρ_ε e` as Fourier coefficients, one array per
/// component of `e` (normalized to unit length).
pub fn mollified_dirac(
    grid: &Grid,
    eps: f64,
    e: &[f64],
    center: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    check_eps(grid, eps)?;
    let len = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len == 0.0 {
        return Err(WitnessError::InvalidConfig("direction must be nonzero".into()));
    }
    let rho = gaussian_coefficients(grid, eps, center);
    Ok(e.iter()
        .map(|&c| rho.iter().map(|r| r * (c / len)).collect())
        .collect())
}

/// Projects every nonzero mode of `fhat` onto `ker 𝒞(ξ)`; `c` is homogenized
/// first so that the kernel does not depend on `|ξ|`.
pub fn constrain_field(grid: &Grid, fhat: &mut [Vec<Complex64>], c: &OperatorSpec) {
    let h = homogenize(c);
    if h.is_zero() {
        return;
    }
    let sym = h.symbol().compile();
    let scale = h
        .coeffs()
        .values()
        .flat_map(|m| m.to_rows().into_iter().flatten())
        .map(|q| to_f64(&q).abs())
        .fold(0.0f64, f64::max);
    let dim = fhat.len();
    let tol = 1e-10 * scale * scale;
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    for (p, k) in grid.frequencies().into_iter().enumerate() {
        let Some(k) = k else { continue };
        let r = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            continue;
        }
        let unit: Vec<f64> = k.iter().map(|x| x / r).collect();
        let m = sym.eval(&unit);
        let eig = nalgebra::SymmetricEigen::new(m.transpose() * &m);
        for (slot, comp) in v.iter_mut().zip(fhat.iter_mut()) {
            *slot = std::mem::take(&mut comp[p]);
        }
        for (col, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > tol {
                continue;
            }
            let w = eig.eigenvectors.column(col);
            let dot: Complex64 = (0..dim).map(|i| v[i] * w[i]).sum();
            for i in 0..dim {
                fhat[i][p] += dot * w[i];
            }
        }
    }
}

/// Per-mode data of an elliptic operator on a grid.
pub struct SpectralSolver {
    grid: Grid,
    k: u32,
    dim_v: usize,
    dim_e: usize,
    freqs: Vec<Option<Vec<f64>>>,
    /// `𝔸†(ξ̂)` per mode (row-major `dim_v × dim_e`), empty for skipped modes.
    pinv: Vec<Vec<f64>>,
    symbol: Vec<Vec<f64>>,
    fft: NdFft,
}

pub struct Solution {
    /// `û` per component of `V`.
    pub uhat: Vec<Vec<Complex64>>,
    /// Relative L² norm of `f - 𝔸u`.
    pub residual: f64,
    /// Magnitude of the removed mean of `f`.
    pub mean_removed: f64,
}

impl SpectralSolver {
    pub fn new(grid: &Grid, a: &OperatorSpec, data: &SymbolData) -> Result<Self> {
        let k = a
            .order()
            .ok_or_else(|| AnalysisError::NotHomogeneous(a.row_degrees()))?;
        let numer: CompiledMatrix = data.pinv_numerator.compile();
        let sym = data.symbol.compile();
        let det = data.det_gram.compile();
        let freqs = grid.frequencies();
        let mut pinv = Vec::with_capacity(freqs.len());
        let mut symbol = Vec::with_capacity(freqs.len());
        let (dim_v, dim_e) = (a.source_dim(), a.target_dim());
        let mut buf = vec![0.0; dim_v * dim_e];
        let mut sbuf = vec![0.0; dim_v * dim_e];
        for f in &freqs {
            match f {
                Some(k) if k.iter().any(|&x| x != 0.0) => {
                    let r = k.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let unit: Vec<f64> = k.iter().map(|x| x / r).collect();
                    let d = det.eval(&unit);
                    if d.abs() < 1e-12 {
                        return Err(AnalysisError::NearSingularSymbol { det: d }.into());
                    }
                    numer.eval_into(&unit, &mut buf);
                    sym.eval_into(&unit, &mut sbuf);
                    pinv.push(buf.iter().map(|x| x / d).collect());
                    symbol.push(sbuf.clone());
                }
                _ => {
                    pinv.push(Vec::new());
                    symbol.push(Vec::new());
                }
            }
        }
        Ok(SpectralSolver {
            grid: grid.clone(),
            k,
            dim_v,
            dim_e,
            freqs,
            pinv,
            symbol,
            fft: NdFft::new(grid),
        })
    }

    pub fn fft(&self) -> &NdFft {
        &self.fft
    }

    /// Least-squares solution `û = (i^k 𝔸(ξ))† f̂` on every nonzero mode;
    /// the zero mode of `f` is dropped.
    pub fn solve(&self, fhat: &[Vec<Complex64>]) -> Solution {
        assert_eq!(fhat.len(), self.dim_e);
        let len = self.grid.len();
        let mut uhat = vec![vec![Complex64::new(0.0, 0.0); len]; self.dim_v];
        let phase = Complex64::new(0.0, -1.0).powu(self.k);
        let mut res2 = 0.0;
        let mut f2 = 0.0;
        let mut mean2 = 0.0;
        let mut au = vec![Complex64::new(0.0, 0.0); self.dim_e];
        for p in 0..len {
            let pinv = &self.pinv[p];
            if pinv.is_empty() {
                if self.freqs[p].is_some() {
                    mean2 += fhat.iter().map(|c| c[p].norm_sqr()).sum::<f64>();
                }
                continue;
            }
            let k = self.freqs[p].as_ref().expect("regular mode");
            let r = k.iter().map(|x| x * x).sum::<f64>().sqrt();
            let scale = phase / r.powi(self.k as i32);
            for (v, u) in uhat.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for (e, f) in fhat.iter().enumerate() {
                    s += f[p] * pinv[v * self.dim_e + e];
                }
                u[p] = s * scale;
            }
            // Residual of the unit-direction problem: f̂ − 𝔸(ξ̂)𝔸†(ξ̂)f̂.
            for (e, slot) in au.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for v in 0..self.dim_v {
                    let mut t = Complex64::new(0.0, 0.0);
                    for (e2, f) in fhat.iter().enumerate() {
                        t += f[p] * pinv[v * self.dim_e + e2];
                    }
                    s += t * self.symbol[p][e * self.dim_v + v];
                }
                *slot = s;
            }
            for (e, f) in fhat.iter().enumerate() {
                res2 += (f[p] - au[e]).norm_sqr();
                f2 += f[p].norm_sqr();
            }
        }
        Solution {
            uhat,
            residual: if f2 > 0.0 { (res2 / f2).sqrt() } else { 0.0 },
            mean_removed: mean2.sqrt(),
        }
    }

    /// Grid values of all partial derivatives `∂^γ u_v`, `|γ| = order`, with
    /// their tensor multiplicities.
    pub fn derivatives(&self, uhat: &[Vec<Complex64>], order: u32) -> Vec<(f64, Vec<f64>)> {
        let gammas = MultiIndex::all_of_degree(self.grid.n, order);
        let ipow = Complex64::new(0.0, 1.0).powu(order);
        let mut out = Vec::new();
        for u in uhat {
            for g in &gammas {
                let coeffs: Vec<Complex64> = u
                    .iter()
                    .zip(&self.freqs)
                    .map(|(c, k)| match k {
                        Some(k) => c * ipow * g.eval_f64(k),
                        None => Complex64::new(0.0, 0.0),
                    })
                    .collect();
                out.push((g.multiplicity(), self.fft.values(&coeffs)));
            }
        }
        out
    }
}

/// Pointwise Euclidean norm of a vector field given as component arrays with
/// weights (tensor multiplicities).
fn pointwise_norm(fields: &[(f64, Vec<f64>)], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (w, f) in fields {
        for (o, x) in out.iter_mut().zip(f) {
            *o += w * x * x;
        }
    }
    out.iter_mut().for_each(|x| *x = x.sqrt());
    out
}

fn lp_norm(values: &[f64], p: f64, cell: f64) -> f64 {
    (values.iter().map(|x| x.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
}

fn max_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn classify(ratios: &[Option<f64>], growth: f64, flatness: f64) -> Classification {
    let Some(r) = ratios.iter().copied().collect::<Option<Vec<f64>>>() else {
        return Classification::Indeterminate;
    };
    if r.len() < 2 {
        return Classification::Indeterminate;
    }
    let increasing = r.windows(2).all(|w| w[1] > w[0]);
    if increasing && r[r.len() - 1] / r[0] > growth {
        return Classification::Growing;
    }
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    let variation: f64 = r.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    if variation < flatness * mean {
        Classification::Bounded
    } else {
        Classification::Indeterminate
    }
}

/// Least-squares line through `(log(1/ε), ratio)`.
pub fn fit_log(eps: &[f64], ratios: &[f64]) -> LogFit {
    let x: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = ratios.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(ratios).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ratios.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LogFit {
        slope,
        intercept: my - slope * mx,
        r2,
    }
}

fn validate(cfg: &WitnessConfig) -> Result<(u32, Grid)> {
    let sys = &cfg.system;
    let n = sys.n;
    let k = sys
        .a
        .order()
        .ok_or_else(|| AnalysisError::NotHomogeneous(sys.a.row_degrees()))?;
    let grid = Grid { n, size: cfg.grid };
    if cfg.grid < 16 || !cfg.grid.is_power_of_two() {
        return Err(WitnessError::InvalidConfig(format!(
            "grid size must be a power of two of at least 16, got {}",
            cfg.grid
        )));
    }
    if (cfg.grid as f64).powi(n as i32) > (1u64 << 24) as f64 {
        return Err(WitnessError::InvalidConfig(format!(
            "grid {}^{n} exceeds the memory budget of 2^24 points",
            cfg.grid
        )));
    }
    match cfg.j {
        NormIndex::Finite(j) => {
            let max = k.min(n as u32 - 1);
            if j == 0 || j > max {
                return Err(WitnessError::InvalidConfig(format!(
                    "j must lie in 1..={max} for k = {k}, n = {n}"
                )));
            }
        }
        NormIndex::Infinity if (k as usize) < n => {
            return Err(WitnessError::InvalidConfig(format!(
                "the L^inf experiment needs k >= n, got k = {k}, n = {n}"
            )));
        }
        NormIndex::Infinity => {}
    }
    if cfg.epsilons.is_empty() || cfg.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(WitnessError::InvalidConfig(
            "epsilons must be a nonempty strictly decreasing list".into(),
        ));
    }
    for &e in &cfg.epsilons {
        check_eps(&grid, e)?;
    }
    if cfg.center.len() != n {
        return Err(WitnessError::InvalidConfig("center has the wrong dimension".into()));
    }
    Ok((k, grid))
}

fn fmt_vec(v: &[Q]) -> String {
    format!("({})", v.iter().map(format_q).collect::<Vec<_>>().join(", "))
}

pub fn blowup_experiment(cfg: &WitnessConfig) -> Result<WitnessResult> {
    let (k, grid) = validate(cfg)?;
    let sys = &cfg.system;
    let n = sys.n;
    let data = SymbolData::new(&sys.a);
    let ell = is_elliptic_with(&sys.a, &data, &EllipticityOptions::default())?;
    if let crate::ellipticity::Ellipticity::No { xi, .. } = &ell {
        return Err(AnalysisError::NotElliptic { xi: xi.clone() }.into());
    }
    if !ell.is_elliptic() {
        return Err(WitnessError::InvalidConfig(
            "ellipticity of the operator could not be established".into(),
        ));
    }
    let solver = SpectralSolver::new(&grid, &sys.a, &data)?;
    let dim_e = sys.a.target_dim();
    let mut diagnostics = Vec::new();
    let (order, p) = match cfg.j {
        NormIndex::Finite(j) => (k - j, Some(n as f64 / (n as f64 - j as f64))),
        NormIndex::Infinity => (k - n as u32, None),
    };
    let direction: Vec<f64> = match cfg.family {
        Family::Dirac => {
            let e = cfg.direction.clone().ok_or_else(|| {
                WitnessError::InvalidConfig("the Dirac family needs a direction e".into())
            })?;
            if e.len() != dim_e {
                return Err(WitnessError::InvalidConfig(format!(
                    "direction has {} entries but E has dimension {dim_e}",
                    e.len()
                )));
            }
            if let Some(c) = &sys.c {
                if !kernel_intersection(c).contains(&e) {
                    diagnostics.push(format!(
                        "CONSTRAINT_VIOLATION: e = {} is not in the kernel intersection of the constraint",
                        fmt_vec(&e)
                    ));
                }
            }
            e.iter().map(to_f64).collect()
        }
        Family::Constrained => Vec::new(),
    };
    // Fixed random mixing of the second-derivative profiles, shared by all ε.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    let mix: Vec<Vec<f64>> = (0..dim_e)
        .map(|_| pairs.iter().map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut rows = Vec::new();
    for &eps in &cfg.epsilons {
        let mut fhat = match cfg.family {
            Family::Dirac => mollified_dirac(&grid, eps, &direction, &cfg.center)?,
            Family::Constrained => {
                let rho = gaussian_coefficients(&grid, eps, &cfg.center);
                let freqs = grid.frequencies();
                let mut f: Vec<Vec<Complex64>> = mix
                    .iter()
                    .map(|w| {
                        rho.iter()
                            .zip(&freqs)
                            .map(|(r, k)| match k {
                                None => Complex64::new(0.0, 0.0),
                                Some(k) => {
                                    let s: f64 = pairs
                                        .iter()
                                        .zip(w)
                                        .map(|(&(a, b), c)| -c * eps * eps * k[a] * k[b])
                                        .sum();
                                    r * s
                                }
                            })
                            .collect()
                    })
                    .collect();
                if let Some(c) = &sys.c {
                    constrain_field(&grid, &mut f, c);
                }
                f
            }
        };
        // The L¹ norm is taken before the mean is removed, so that the Dirac
        // family is normalized by its mass rather than by a torus artifact.
        let f_vals: Vec<(f64, Vec<f64>)> =
            fhat.iter().map(|c| (1.0, solver.fft().values(c))).collect();
        let f_l1 = lp_norm(&pointwise_norm(&f_vals, grid.len()), 1.0, grid.cell());
        let mean = fhat.iter().map(|c| c[0].norm_sqr()).sum::<f64>().sqrt();
        for comp in fhat.iter_mut() {
            comp[0] = Complex64::new(0.0, 0.0);
        }
        let sol = solver.solve(&fhat);
        let ratio = if sol.residual > cfg.residual_tol {
            if cfg.strict {
                return Err(WitnessError::ResidualTooLarge {
                    residual: sol.residual,
                    tol: cfg.residual_tol,
                });
            }
            diagnostics.push(format!(
                "RESIDUAL_TOO_LARGE: at epsilon = {eps} the data is not in the range of the operator (relative residual {:e}); ratio not reported",
                sol.residual
            ));
            None
        } else {
            let d = solver.derivatives(&sol.uhat, order);
            let mag = pointwise_norm(&d, grid.len());
            let num = match p {
                Some(p) => lp_norm(&mag, p, grid.cell()),
                None => max_norm(&mag),
            };
            Some(num / f_l1)
        };
        rows.push(WitnessRow {
            epsilon: eps,
            ratio,
            residual: sol.residual,
            f_l1,
            mean_removed: mean,
        });
    }
    let ratios: Vec<Option<f64>> = rows.iter().map(|r| r.ratio).collect();
    let classification = classify(&ratios, cfg.growth_factor, cfg.flatness);
    let fit = match (cfg.j, ratios.iter().copied().collect::<Option<Vec<f64>>>()) {
        (NormIndex::Infinity, Some(r)) if r.len() >= 2 => Some(fit_log(&cfg.epsilons, &r)),
        _ => None,
    };
    Ok(WitnessResult {
        rows,
        classification,
        fit,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_operator, parse_system, SourceText};
    use crate::rational::q;

    fn op(text: &str, n: usize, s: usize) -> OperatorSpec {
        parse_operator(&SourceText::inline(text), n, s).unwrap()
    }

    const LAPLACE: &str = "dim 2\noperator A { from 2 to 2\n rows: -(d1^2 + d2^2) u1; -(d1^2 + d2^2) u2 }";

    #[test]
    fn dirac_has_unit_mass() {
        let g = Grid { n: 2, size: 64 };
        let f = mollified_dirac(&g, 0.3, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        let vals = NdFft::new(&g).values(&f[0]);
        let mass: f64 = vals.iter().sum::<f64>() * g.cell();
        assert!((mass - 1.0).abs() < 1e-12);
        assert!(matches!(
            mollified_dirac(&g, 0.1, &[1.0, 0.0], &[0.0, 0.0]),
            Err(WitnessError::EpsilonTooSmall { .. })
        ));
    }

    #[test]
    fn dirac_in_constraint_kernel_satisfies_constraint() {
        let g = Grid { n: 3, size: 16 };
        let c = op("rows: d1 f1 + d2 f2 + d3 f3", 3, 4);
        let f = mollified_dirac(&g, 0.8, &[0.0, 0.0, 0.0, 1.0], &[0.0; 3]).unwrap();
        let sym = c.symbol().compile();
        let mut worst = 0.0f64;
        for (p, k) in g.frequencies().iter().enumerate() {
            let Some(k) = k else { continue };
            let m = sym.eval(k);
            let s: Complex64 = (0..4).map(|i| f[i][p] * m[(0, i)]).sum();
            worst = worst.max(s.norm());
        }
        assert!(worst < 1e-12);
    }

    fn max_divergence(g: &Grid, f: &[Vec<Complex64>]) -> f64 {
        let fft = NdFft::new(g);
        let div: Vec<Complex64> = g
            .frequencies()
            .iter()
            .enumerate()
            .map(|(p, k)| match k {
                Some(k) => Complex64::new(0.0, 1.0) * (f[0][p] * k[0] + f[1][p] * k[1]),
                None => Complex64::new(0.0, 0.0),
            })
            .collect();
        max_norm(&fft.values(&div))
    }

    #[test]
    fn constrain_field_projects_onto_divergence_free_fields() {
        let g = Grid { n: 2, size: 32 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = gaussian_coefficients(&g, 0.5, &[1.0, 2.0]);
        let mut f: Vec<Vec<Complex64>> = (0..2)
            .map(|_| rho.iter().map(|r| r * rng.random_range(-1.0..1.0)).collect())
            .collect();
        let div = op("rows: d1 f1 + d2 f2", 2, 2);
        constrain_field(&g, &mut f, &div);
        assert!(max_divergence(&g, &f) < 1e-10);
        let before = f.clone();
        constrain_field(&g, &mut f, &div);
        for (a, b) in before.iter().flatten().zip(f.iter().flatten()) {
            assert!((a - b).norm() < 1e-12);
        }
        let full = op("rows: d1 f1; d1 f2; d2 f1; d2 f2", 2, 2);
        constrain_field(&g, &mut f, &full);
        for comp in &f {
            assert!(comp.iter().skip(1).all(|c| c.norm() == 0.0));
        }
    }

    #[test]
    fn laplacian_eigenfunction_is_reproduced() {
        let g = Grid { n: 2, size: 32 };
        let a = op("rows: -(d1^2 + d2^2) u1; -(d1^2 + d2^2) u2", 2, 2);
        let solver = SpectralSolver::new(&g, &a, &SymbolData::new(&a)).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|p| g.point(p)[0].sin()).collect();
        let fhat = vec![solver.fft().coefficients(&vals), vec![Complex64::new(0.0, 0.0); g.len()]];
        let sol = solver.solve(&fhat);
        assert!(sol.residual < 1e-12);
        let u = solver.fft().values(&sol.uhat[0]);
        for (x, y) in u.iter().zip(&vals) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_inverts_on_gradients() {
        let g = Grid { n: 2, size: 32 };
        let a = op("rows: d1 u1; d2 u1", 2, 1);
        let solver = SpectralSolver::new(&g, &a, &SymbolData::new(&a)).unwrap();
        let pot = |x: &[f64]| (x[0].sin() * x[1].cos()).exp();
        let vals: Vec<f64> = (0..g.len()).map(|p| pot(&g.point(p))).collect();
        let ghat = solver.fft().coefficients(&vals);
        let grad: Vec<Vec<Complex64>> = (0..2)
            .map(|d| {
                ghat.iter()
                    .zip(g.frequencies())
                    .map(|(c, k)| match k {
                        Some(k) => c * Complex64::new(0.0, k[d]),
                        None => Complex64::new(0.0, 0.0),
                    })
                    .collect()
            })
            .collect();
        let sol = solver.solve(&grad);
        assert!(sol.residual < 1e-12);
        let u = solver.fft().values(&sol.uhat[0]);
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        for (x, y) in u.iter().zip(&vals) {
            assert!((x - (y - mean)).abs() < 1e-10);
        }
    }

    #[test]
    fn classification_rules() {
        let s = |v: &[f64]| v.iter().map(|&x| Some(x)).collect::<Vec<_>>();
        assert_eq!(classify(&s(&[1.0, 1.5, 2.5]), 2.0, 0.1), Classification::Growing);
        assert_eq!(classify(&s(&[1.0, 1.02, 1.01]), 2.0, 0.1), Classification::Bounded);
        assert_eq!(classify(&s(&[1.0, 1.5, 1.2]), 2.0, 0.1), Classification::Indeterminate);
        assert_eq!(classify(&[Some(1.0), None], 2.0, 0.1), Classification::Indeterminate);
        let f = fit_log(&[0.4, 0.2, 0.1], &[1.0, 1.0 + 2f64.ln(), 1.0 + 4f64.ln()]);
        assert!((f.slope - 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplacian_dirac_ratios_grow() {
        let sys = parse_system(&SourceText::inline(LAPLACE)).unwrap();
        let mut cfg = WitnessConfig::new(sys, Family::Dirac);
        cfg.direction = Some(vec![q(1), q(0)]);
        cfg.grid = 64;
        cfg.epsilons = vec![0.8, 0.4, 0.2];
        let r = blowup_experiment(&cfg).unwrap();
        let ratios: Vec<f64> = r.rows.iter().map(|x| x.ratio.unwrap()).collect();
        assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
        assert!(r.fit.unwrap().slope > 0.0);
    }

    #[test]
    fn translation_does_not_change_ratios() {
        let sys = parse_system(&SourceText::inline(LAPLACE)).unwrap();
        let mut cfg = WitnessConfig::new(sys, Family::Dirac);
        cfg.direction = Some(vec![q(1), q(1)]);
        cfg.grid = 32;
        cfg.epsilons = vec![0.8, 0.5];
        let a = blowup_experiment(&cfg).unwrap();
        let h = 2.0 * std::f64::consts::PI / 32.0;
        cfg.center = vec![5.0 * h, 11.0 * h];
        let b = blowup_experiment(&cfg).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert!((x.ratio.unwrap() - y.ratio.unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_configurations() {
        let sys = parse_system(&SourceText::inline(LAPLACE)).unwrap();
        let mut cfg = WitnessConfig::new(sys, Family::Dirac);
        cfg.direction = Some(vec![q(1), q(0)]);
        cfg.grid = 48;
        assert!(matches!(blowup_experiment(&cfg), Err(WitnessError::InvalidConfig(_))));
        cfg.grid = 64;
        cfg.j = NormIndex::Finite(2);
        assert!(matches!(blowup_experiment(&cfg), Err(WitnessError::InvalidConfig(_))));
        cfg.j = NormIndex::Infinity;
        cfg.epsilons = vec![0.1, 0.2];
        assert!(matches!(blowup_experiment(&cfg), Err(WitnessError::InvalidConfig(_))));
        cfg.epsilons = vec![0.1];
        assert!(matches!(blowup_experiment(&cfg), Err(WitnessError::EpsilonTooSmall { .. })));
    }

    const DIV_CURL: &str = "dim 3\noperator A { from 3 to 4\n rows: d1 u1 + d2 u2 + d3 u3; d2 u3 - d3 u2; d3 u1 - d1 u3; d1 u2 - d2 u1 }\nconstraint C { from 4 to 1\n rows: d1 f1 + d2 f2 + d3 f3 }";

    #[test]
    fn dirac_outside_the_range_is_not_reported() {
        let sys = parse_system(&SourceText::inline(DIV_CURL)).unwrap();
        let mut cfg = WitnessConfig::new(sys, Family::Dirac);
        cfg.direction = Some(vec![q(0), q(0), q(0), q(1)]);
        cfg.grid = 16;
        cfg.epsilons = vec![1.2, 0.8];
        let r = blowup_experiment(&cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio.is_none() && row.residual > 0.5));
        assert_eq!(r.classification, Classification::Indeterminate);
        assert!(r.diagnostics.iter().all(|d| d.starts_with("RESIDUAL_TOO_LARGE")));
        assert_eq!(r.diagnostics.len(), 2);
        cfg.strict = true;
        assert!(matches!(blowup_experiment(&cfg), Err(WitnessError::ResidualTooLarge { .. })));
        cfg.strict = false;
        cfg.direction = Some(vec![q(1), q(0), q(0), q(0)]);
        let r = blowup_experiment(&cfg).unwrap();
        assert!(r.diagnostics[0].starts_with("CONSTRAINT_VIOLATION"));
        assert!(r.rows.iter().all(|row| row.residual < 1e-12 && row.ratio.is_some()));
    }

    #[test]
    fn single_mode_in_range_has_tiny_residual() {
        let g = Grid { n: 3, size: 16 };
        let sys = parse_system(&SourceText::inline(DIV_CURL)).unwrap();
        let solver = SpectralSolver::new(&g, &sys.a, &SymbolData::new(&sys.a)).unwrap();
        // f = A(cos(x1 + 2 x3) e2), i.e. the mode of u = e2 cos(k·x).
        let k = [1.0, 0.0, 2.0];
        let mut fhat = vec![vec![Complex64::new(0.0, 0.0); g.len()]; 4];
        let sym = sys.a.symbol().compile().eval(&k);
        for (p, kk) in g.frequencies().iter().enumerate() {
            let Some(kk) = kk else { continue };
            let sign = if kk[..] == k[..] { 1.0 } else if kk.iter().zip(&k).all(|(a, b)| *a == -b) { -1.0 } else { continue };
            for e in 0..4 {
                fhat[e][p] = Complex64::new(0.0, 0.5 * sign) * sym[(e, 1)];
            }
        }
        let sol = solver.solve(&fhat);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn doubling_the_grid_barely_moves_ratios() {
        let sys = parse_system(&SourceText::inline(LAPLACE)).unwrap();
        let mut cfg = WitnessConfig::new(sys, Family::Dirac);
        cfg.direction = Some(vec![q(1), q(0)]);
        cfg.epsilons = vec![0.8];
        cfg.grid = 64;
        let a = blowup_experiment(&cfg).unwrap().rows[0].ratio.unwrap();
        cfg.grid = 128;
        let b = blowup_experiment(&cfg).unwrap().rows[0].ratio.unwrap();
        assert!((a - b).abs() < 0.02 * b, "{a} {b}");
    }

    #[test]
    fn odd_dimension_has_flat_sup_norm_ratios() {
        let text = "dim 3\noperator A { from 1 to 1\n rows: (d1^4 + d2^4 + d3^4 + 2 d1^2 d2^2 + 2 d1^2 d3^2 + 2 d2^2 d3^2) u1 }";
        let sys = parse_system(&SourceText::inline(text)).unwrap();
        let mut cfg = WitnessConfig::new(sys, Family::Dirac);
        assert_eq!(cfg.j, NormIndex::Infinity);
        cfg.direction = Some(vec![q(1)]);
        cfg.grid = 64;
        cfg.epsilons = vec![0.4, 0.3, 0.2];
        let r = blowup_experiment(&cfg).unwrap();
        let ratios: Vec<f64> = r.rows.iter().map(|x| x.ratio.unwrap()).collect();
        // Logarithmic growth would keep the local slopes constant; here they
        // decay as the mass concentrates.
        let local: Vec<f64> = (1..ratios.len())
            .map(|i| (ratios[i] - ratios[i - 1]) / (cfg.epsilons[i - 1] / cfg.epsilons[i]).ln())
            .collect();
        assert!(local.windows(2).all(|w| w[1] < 0.9 * w[0]), "{local:?}");
    }

    #[test]
    fn csv_layout() {
        let r = WitnessResult {
            rows: vec![WitnessRow { epsilon: 0.5, ratio: None, residual: 0.25, f_l1: 1.0, mean_removed: 0.0 }],
            classification: Classification::Indeterminate,
            fit: None,
            diagnostics: vec![],
        };
        assert_eq!(r.to_csv(), "epsilon,ratio,residual\n0.5,,2.5e-1\n");
    }
}
