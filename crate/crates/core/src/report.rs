//! Full analysis of a system and its JSON report.

use serde::Serialize;

use crate::conditions::{check_cc, image_intersection_from_data, kernel_intersection, CcVerdict};
use crate::dsl::SystemSpec;
use crate::ellipticity::{is_elliptic_with, Ellipticity, EllipticityJson, EllipticityOptions};
use crate::error::{AnalysisError, Result};
use crate::linalg::Subspace;
use crate::operator::{OperatorSpec, SymbolData};
use crate::quadrature::{moment_map, MomentMap, QuadratureOptions};
use crate::rational::{format_q, to_f64, Q};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalysisOptions {
    pub ellipticity: EllipticityOptions,
    pub quadrature: QuadratureOptions,
    /// Relative threshold of the moment zero test.
    pub moment_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            ellipticity: EllipticityOptions::default(),
            quadrature: QuadratureOptions::default(),
            moment_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentEntry {
    pub e: Vec<Q>,
    pub norm: f64,
}

/// Weak cancellation on a subspace: `M e = 0` for every basis vector `e`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakVerdict {
    pub holds: bool,
    pub moments: Vec<MomentEntry>,
    /// Quadrature change between the last two levels, if quadrature ran.
    pub error: Option<f64>,
    pub nodes: Option<usize>,
}

/// `|M e| ≤ tol · scale · |e|`, where `scale` is the sphere area times the
/// largest integrand magnitude seen at the nodes.
pub fn weak_verdict(m: &MomentMap, s: &Subspace, tol: f64) -> WeakVerdict {
    let mut holds = true;
    let moments = s
        .basis()
        .iter()
        .map(|e| {
            let ef: Vec<f64> = e.iter().map(to_f64).collect();
            let len = ef.iter().map(|x| x * x).sum::<f64>().sqrt();
            let norm = m.norm_of(&ef);
            if norm > tol * m.scale * len {
                holds = false;
            }
            MomentEntry { e: e.clone(), norm }
        })
        .collect();
    WeakVerdict {
        holds,
        moments,
        error: Some(m.error),
        nodes: Some(m.nodes),
    }
}

pub fn vacuous() -> WeakVerdict {
    WeakVerdict {
        holds: true,
        moments: Vec::new(),
        error: None,
        nodes: None,
    }
}

/// Weak cancellation of `a` on `s` (`k ≥ n` required).
pub fn check_weak_cancellation(
    a: &OperatorSpec,
    data: &SymbolData,
    s: &Subspace,
    opts: &AnalysisOptions,
) -> Result<WeakVerdict> {
    let k = a.order().ok_or_else(|| AnalysisError::NotHomogeneous(a.row_degrees()))?;
    if (k as usize) < a.space_dim() {
        return Err(AnalysisError::OrderTooLow {
            order: k,
            dim: a.space_dim(),
        });
    }
    if s.is_zero() {
        return Ok(vacuous());
    }
    let m = moment_map(a, data, &opts.quadrature)?;
    Ok(weak_verdict(&m, s, opts.moment_tol))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub n: usize,
    pub order: u32,
    pub elliptic: Ellipticity,
    /// Absent when ellipticity is not established.
    pub i_a: Option<Subspace>,
    pub k_c: Subspace,
    pub canceling: Option<bool>,
    pub cocanceling: bool,
    pub cc: Option<CcVerdict>,
    /// Present only when `k ≥ n`.
    pub weak: Option<WeakVerdict>,
    pub cwc: Option<WeakVerdict>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ConditionReport {
    /// Every verdict in the report is decided (no inconclusive ellipticity).
    pub fn is_decided(&self) -> bool {
        self.elliptic.is_decided()
    }
}

fn fmt_vec(v: &[Q]) -> String {
    format!("({})", v.iter().map(format_q).collect::<Vec<_>>().join(", "))
}

pub fn analyze(sys: &SystemSpec, opts: &AnalysisOptions) -> Result<ConditionReport> {
    let a = &sys.a;
    let n = sys.n;
    let order = a.order().ok_or_else(|| AnalysisError::NotHomogeneous(a.row_degrees()))?;
    let data = SymbolData::new(a);
    let elliptic = is_elliptic_with(a, &data, &opts.ellipticity)?;
    let mut diagnostics = Vec::new();
    let k_c = match &sys.c {
        Some(c) => {
            if c.order().is_none() {
                diagnostics.push(Diagnostic {
                    code: "CONSTRAINT_HOMOGENIZED",
                    message: format!(
                        "constraint rows have orders {:?}; lower rows were padded with monomial multiples to order {}",
                        c.row_degrees().iter().map(|d| d.map_or(-1, |d| d as i64)).collect::<Vec<_>>(),
                        c.max_order()
                    ),
                });
            }
            kernel_intersection(c)
        }
        None => Subspace::full(a.target_dim()),
    };
    let cocanceling = k_c.is_zero();
    let mut report = ConditionReport {
        n,
        order,
        elliptic: elliptic.clone(),
        i_a: None,
        k_c,
        canceling: None,
        cocanceling,
        cc: None,
        weak: None,
        cwc: None,
        diagnostics,
    };
    match &elliptic {
        Ellipticity::No { xi, kernel, exact } => {
            report.diagnostics.push(Diagnostic {
                code: "NON_ELLIPTIC",
                message: format!(
                    "the cancellation conditions are only meaningful for elliptic operators, but the symbol of {} at xi = {} annihilates {}{}; image intersection, CC and CWC are not reported",
                    sys.a_name,
                    fmt_vec(xi),
                    fmt_vec(kernel),
                    if *exact { "" } else { " (approximate irrational direction)" }
                ),
            });
            return Ok(report);
        }
        Ellipticity::Inconclusive { min, .. } => {
            report.diagnostics.push(Diagnostic {
                code: "ELLIPTICITY_INCONCLUSIVE",
                message: format!(
                    "normalized minimum of det G on the sampled sphere is {min:e}, below the threshold {:e}; no rational zero was found",
                    opts.ellipticity.threshold
                ),
            });
            return Ok(report);
        }
        Ellipticity::NumericallyPositive { min } => report.diagnostics.push(Diagnostic {
            code: "ELLIPTICITY_NUMERICAL",
            message: format!(
                "ellipticity established numerically: normalized minimum of det G on the sphere is {min:e}"
            ),
        }),
        Ellipticity::Yes => {}
    }
    let i_a = image_intersection_from_data(n, &data)?;
    if i_a.dim() == a.target_dim() {
        report.diagnostics.push(Diagnostic {
            code: "ANNIHILATOR_TRIVIAL",
            message: "the annihilator is zero: the symbol is onto at every xi != 0".into(),
        });
    }
    let cc = check_cc(&i_a, &report.k_c);
    report.canceling = Some(i_a.is_zero());
    if (order as usize) >= n {
        let need_moments = !i_a.is_zero();
        let m = if need_moments {
            Some(moment_map(a, &data, &opts.quadrature)?)
        } else {
            None
        };
        let verdict = |s: &Subspace| match (&m, s.is_zero()) {
            (_, true) | (None, _) => vacuous(),
            (Some(m), false) => weak_verdict(m, s, opts.moment_tol),
        };
        report.weak = Some(verdict(&i_a));
        report.cwc = Some(verdict(&cc.intersection));
    } else {
        report.diagnostics.push(Diagnostic {
            code: "ORDER_BELOW_DIMENSION",
            message: format!(
                "order k = {order} is below n = {n}: weak cancellation and CWC do not apply"
            ),
        });
    }
    report.i_a = Some(i_a);
    report.cc = Some(cc);
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct CcJson {
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentJson {
    pub e: Vec<String>,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakJson {
    pub holds: bool,
    pub moments: Vec<MomentJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature_nodes: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportJson {
    pub n: usize,
    pub order: u32,
    pub elliptic: EllipticityJson,
    #[serde(rename = "I_A_basis", skip_serializing_if = "Option::is_none")]
    pub i_a_basis: Option<Vec<Vec<String>>>,
    #[serde(rename = "K_C_basis")]
    pub k_c_basis: Vec<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub canceling: Option<bool>,
    pub cocanceling: bool,
    #[serde(rename = "CC", skip_serializing_if = "Option::is_none")]
    pub cc: Option<CcJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak: Option<WeakJson>,
    #[serde(rename = "CWC", skip_serializing_if = "Option::is_none")]
    pub cwc: Option<WeakJson>,
    pub diagnostics: Vec<Diagnostic>,
}

fn weak_json(w: &WeakVerdict) -> WeakJson {
    WeakJson {
        holds: w.holds,
        moments: w
            .moments
            .iter()
            .map(|m| MomentJson {
                e: m.e.iter().map(format_q).collect(),
                norm: m.norm,
            })
            .collect(),
        quadrature_error: w.error,
        quadrature_nodes: w.nodes,
    }
}

impl ConditionReport {
    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            n: self.n,
            order: self.order,
            elliptic: self.elliptic.to_json(),
            i_a_basis: self.i_a.as_ref().map(Subspace::to_strings),
            k_c_basis: self.k_c.to_strings(),
            canceling: self.canceling,
            cocanceling: self.cocanceling,
            cc: self.cc.as_ref().map(|c| CcJson {
                holds: c.holds,
                witness: c.witness.as_ref().map(|w| w.iter().map(format_q).collect()),
            }),
            weak: self.weak.as_ref().map(weak_json),
            cwc: self.cwc.as_ref().map(weak_json),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Human-readable summary, one line per item.
    pub fn to_text(&self) -> String {
        let basis = |s: &Subspace| {
            if s.is_zero() {
                "{0}".to_string()
            } else {
                format!(
                    "span{{{}}}",
                    s.basis().iter().map(|v| fmt_vec(v)).collect::<Vec<_>>().join(", ")
                )
            }
        };
        let yes = |b: bool| if b { "yes" } else { "no" };
        let mut out = String::new();
        out.push_str(&format!("n = {}, order k = {}\n", self.n, self.order));
        out.push_str(&format!("elliptic: {}", self.elliptic.label()));
        match &self.elliptic {
            Ellipticity::No { xi, kernel, .. } => {
                out.push_str(&format!(" (xi = {}, kernel {})", fmt_vec(xi), fmt_vec(kernel)))
            }
            Ellipticity::NumericallyPositive { min } | Ellipticity::Inconclusive { min, .. } => {
                out.push_str(&format!(" (normalized min {min:e})"))
            }
            Ellipticity::Yes => {}
        }
        out.push('\n');
        if let Some(i) = &self.i_a {
            out.push_str(&format!("I_A = {}\n", basis(i)));
        }
        out.push_str(&format!("K_C = {}\n", basis(&self.k_c)));
        if let Some(c) = self.canceling {
            out.push_str(&format!("canceling: {}\n", yes(c)));
        }
        out.push_str(&format!("cocanceling: {}\n", yes(self.cocanceling)));
        if let Some(cc) = &self.cc {
            out.push_str(&format!("CC: {}", if cc.holds { "holds" } else { "fails" }));
            if let Some(w) = &cc.witness {
                out.push_str(&format!(" (witness {})", fmt_vec(w)));
            }
            out.push('\n');
        }
        for (name, w) in [("weakly canceling", &self.weak), ("CWC", &self.cwc)] {
            if let Some(w) = w {
                out.push_str(&format!("{name}: {}", if w.holds { "holds" } else { "fails" }));
                for m in &w.moments {
                    out.push_str(&format!("; |M {}| = {:.6e}", fmt_vec(&m.e), m.norm));
                }
                out.push('\n');
            }
        }
        for d in &self.diagnostics {
            out.push_str(&format!("note [{}]: {}\n", d.code, d.message));
        }
        out
    }
}
