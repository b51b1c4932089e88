//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Every criterion returns the serialized artifacts it checked so the
//! determinism criterion can rerun everything and compare bytes.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use cancelcheck_core::conditions::{
    homogenize, image_intersection, kernel_intersection, left_inverse_family, potential_field,
    verify_potential,
};
use cancelcheck_core::dsl::{parse_operator, parse_system, SourceText, SystemSpec};
use cancelcheck_core::ellipticity::{is_elliptic, Ellipticity, EllipticityOptions};
use cancelcheck_core::linalg::{RatMatrix, Subspace};
use cancelcheck_core::operator::{annihilator, OperatorSpec, SymbolData};
use cancelcheck_core::poly::MultiIndex;
use cancelcheck_core::quadrature::{moment_map, QuadratureOptions};
use cancelcheck_core::rational::{q, qr, Q};
use cancelcheck_core::report::{analyze, AnalysisOptions, ConditionReport};
use cancelcheck_core::witness::{blowup_experiment, Classification, Family, NormIndex, WitnessConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(String, String), String>;

const SEED: u64 = 20240611;

fn system(name: &str) -> SystemSpec {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "systems", name].iter().collect();
    let src = SourceText::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_system(&src).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn report(name: &str) -> Result<ConditionReport, String> {
    analyze(&system(name), &AnalysisOptions::default()).map_err(|e| format!("{name}: {e}"))
}

fn json(r: &ConditionReport) -> String {
    serde_json::to_string(&r.to_json()).unwrap()
}

fn unit(dim: usize, i: usize) -> Vec<Q> {
    (0..dim).map(|j| q((i == j) as i64)).collect()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let r = report("div_curl.sys")?;
    let i_a = r.i_a.clone().ok_or("I_A missing")?;
    ensure(r.k_c == Subspace::span(4, &[unit(4, 3)]), || format!("K_C = {:?}", r.k_c.to_strings()))?;
    ensure(i_a == Subspace::span(4, &[unit(4, 0)]), || format!("I_A = {:?}", i_a.to_strings()))?;
    ensure(!r.cocanceling, || "cocanceling should be false".into())?;
    ensure(r.canceling == Some(false), || "canceling should be false".into())?;
    ensure(r.cc.as_ref().is_some_and(|c| c.holds), || "CC should hold".into())?;
    Ok(("K_C = span{e4}, I_A = span{e1}, CC holds".into(), json(&r)))
}

fn criterion_2() -> Outcome {
    let mut art = String::new();
    for name in ["laplace_div_2d.sys", "laplace_div_3d.sys", "laplace_div_4d.sys"] {
        let r = report(name)?;
        ensure(r.cocanceling, || format!("{name}: not cocanceling"))?;
        ensure(r.cc.as_ref().is_some_and(|c| c.holds), || format!("{name}: CC fails"))?;
        art.push_str(&json(&r));
    }
    for name in ["laplace_div_2d.sys", "bilaplace_div_4d.sys"] {
        let r = report(name)?;
        let cwc = r.cwc.as_ref().ok_or_else(|| format!("{name}: CWC missing"))?;
        let inter = r.cc.as_ref().ok_or("CC missing")?.intersection.clone();
        ensure(cwc.holds && cwc.moments.is_empty() && inter.is_zero(), || {
            format!("{name}: CWC not vacuously true")
        })?;
        art.push_str(&json(&r));
    }
    Ok(("vector -Δ with div (n = 2, 3, 4) and (-Δ)^{n/2} (n = 2, 4)".into(), art))
}

fn criterion_3() -> Outcome {
    let a = system("laplace_2d.sys").a;
    let m = moment_map(&a, &SymbolData::new(&a), &QuadratureOptions::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let expect = if i == j { 2.0 * PI } else { 0.0 };
            worst = worst.max((m.matrix[(i, j)] - expect).abs() / (2.0 * PI));
        }
    }
    ensure(worst <= 1e-8, || format!("relative error {worst:e}"))?;
    let r = report("laplace_2d.sys")?;
    ensure(r.weak.as_ref().is_some_and(|w| !w.holds), || "weak cancellation should fail".into())?;
    Ok((format!("M = 2π·Id, relative error {worst:.1e}"), format!("{:?}{}", m.matrix, json(&r))))
}

fn random_entry(rng: &mut ChaCha8Rng, n: usize, k: u32, scale: i64) -> Vec<(MultiIndex, Q)> {
    MultiIndex::all_of_degree(n, k)
        .into_iter()
        .map(|a| (a, qr(rng.random_range(-2..=2), scale)))
        .collect()
}

/// `|ξ|^{2m}` as a list of terms.
fn radial(n: usize, m: u32) -> Vec<(MultiIndex, Q)> {
    MultiIndex::all_of_degree(n, 2 * m)
        .into_iter()
        .filter(|a| a.exponents().iter().all(|e| e % 2 == 0))
        .map(|a| {
            let half = MultiIndex::new(a.exponents().iter().map(|e| e / 2).collect());
            (a, multinomial(&half))
        })
        .collect()
}

/// Multinomial coefficient `|β|! / β!`.
fn multinomial(beta: &MultiIndex) -> Q {
    let fact = |m: u32| (1..=m as i64).product::<i64>();
    let den: i64 = beta.exponents().iter().map(|&e| fact(e)).product();
    qr(fact(beta.degree()), den)
}

/// Elliptic operator of order `k` on R^3: a radial principal part plus a
/// small random perturbation.
fn random_elliptic(rng: &mut ChaCha8Rng, k: u32) -> OperatorSpec {
    let n = 3;
    let (v, e) = if k.is_multiple_of(2) {
        let v = rng.random_range(1..=2usize);
        (v, v)
    } else {
        (1, 3)
    };
    let mut op = OperatorSpec::zero(n, v, e);
    for r in 0..e {
        for c in 0..v {
            for (a, x) in random_entry(rng, n, k, 16) {
                op.add_term(r, c, a, x);
            }
        }
    }
    if k.is_multiple_of(2) {
        for i in 0..v {
            for (a, x) in radial(n, k / 2) {
                op.add_term(i, i, a, x);
            }
        }
    } else {
        // ξ_i |ξ|^{k-1} in row i.
        for i in 0..3 {
            for (a, x) in radial(n, (k - 1) / 2) {
                op.add_term(i, 0, a.add(&MultiIndex::unit(n, i)), x);
            }
        }
    }
    op
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut art = String::new();
    let mut nontrivial = 0;
    for (i, k) in [3u32, 4, 5, 4, 3].into_iter().enumerate() {
        let a = random_elliptic(&mut rng, k);
        let ell = is_elliptic(&a, &EllipticityOptions::default()).map_err(|e| e.to_string())?;
        ensure(ell.is_elliptic(), || format!("operator {i} (k = {k}) not elliptic: {}", ell.label()))?;
        let data = SymbolData::new(&a);
        let m = moment_map(&a, &data, &QuadratureOptions::default()).map_err(|e| e.to_string())?;
        ensure(m.matrix.iter().all(|x| *x == 0.0), || format!("operator {i}: M is not bitwise zero"))?;
        let sys = SystemSpec::new(a, None).map_err(|e| e.to_string())?;
        let r = analyze(&sys, &AnalysisOptions::default()).map_err(|e| e.to_string())?;
        ensure(r.weak.as_ref().is_some_and(|w| w.holds), || format!("operator {i}: weak cancellation fails"))?;
        nontrivial += r.i_a.as_ref().is_some_and(|s| !s.is_zero()) as usize;
        art.push_str(&json(&r));
    }
    Ok((format!("5 random elliptic operators, n = 3, k ∈ {{3, 4, 5}}: M = 0 bitwise, {nontrivial} with I_A ≠ 0"), art))
}

fn random_xi(rng: &mut ChaCha8Rng, n: usize) -> Vec<Q> {
    loop {
        let xi: Vec<Q> = (0..n).map(|_| qr(rng.random_range(-9..=9), rng.random_range(1..=5))).collect();
        if xi.iter().any(|x| *x != q(0)) {
            return xi;
        }
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 5);
    let mut ops: Vec<OperatorSpec> = [
        "div_curl.sys",
        "gradient_2d.sys",
        "laplace_2d.sys",
        "laplace_div_3d.sys",
        "bilaplace_div_4d.sys",
    ]
    .iter()
    .map(|f| system(f).a)
    .collect();
    for k in [3, 4] {
        ops.push(random_elliptic(&mut rng, k));
    }
    let mut art = String::new();
    let mut checked = 0;
    for (idx, a) in ops.iter().enumerate() {
        let l = annihilator(a).map_err(|e| e.to_string())?;
        ensure(l.symbol().mul(&a.symbol()).is_zero(), || format!("operator {idx}: L·A ≠ 0"))?;
        let i_a = image_intersection(a).map_err(|e| e.to_string())?;
        let data = SymbolData::new(a);
        let (dim_e, dim_v) = (a.target_dim(), a.source_dim());
        let mut samples = 0;
        while samples < 20 {
            let xi = random_xi(&mut rng, a.space_dim());
            if data.det_gram.eval(&xi) == q(0) {
                continue;
            }
            samples += 1;
            let lx = l.symbol().eval(&xi);
            // ker L(ξ) = im A(ξ), so L(ξ) has rank dim E - dim V.
            ensure(lx.rank() == dim_e - dim_v && lx.nullspace().len() == dim_v, || {
                format!("operator {idx}: rank L(ξ) = {}", lx.rank())
            })?;
            let ax = a.symbol().eval(&xi);
            for e in i_a.basis() {
                ensure(ax.solve(e).is_some(), || format!("operator {idx}: I_A vector outside im A(ξ)"))?;
            }
            checked += 1;
        }
        art.push_str(&format!("{:?}", i_a.to_strings()));
    }
    Ok((format!("{} operators, {checked} exact samples", ops.len()), art))
}

/// Random constraint with a prescribed kernel: `C₀ ∘ P` for a random
/// rank-deficient `P`, optionally with lower-order terms.
fn random_constraint(rng: &mut ChaCha8Rng, inhomogeneous: bool) -> OperatorSpec {
    let n = rng.random_range(2..=3usize);
    let (e, f) = (3usize, rng.random_range(1..=2usize));
    let mut c0 = OperatorSpec::zero(n, e, f);
    let orders: &[u32] = if inhomogeneous { &[0, 1, 2] } else { &[1] };
    for r in 0..f {
        let degs: Vec<u32> = if inhomogeneous {
            vec![orders[rng.random_range(0..3)], 2]
        } else {
            vec![1]
        };
        for col in 0..e {
            for &d in &degs {
                for (a, x) in random_entry(rng, n, d, 1) {
                    c0.add_term(r, col, a, x);
                }
            }
        }
    }
    let rank = rng.random_range(1..=e);
    let rows: Vec<Vec<Q>> = (0..e)
        .map(|i| {
            (0..e)
                .map(|_| if i < rank { q(rng.random_range(-2..=2)) } else { q(0) })
                .collect()
        })
        .collect();
    c0.compose_right(&RatMatrix::from_rows(rows))
}

fn numeric_kernel(mats: &[nalgebra::DMatrix<f64>], cols: usize) -> (nalgebra::DMatrix<f64>, f64) {
    let rows: usize = mats.iter().map(|m| m.nrows()).sum();
    let mut stack = nalgebra::DMatrix::<f64>::zeros(rows.max(1), cols);
    let mut r0 = 0;
    for m in mats {
        let scale = m.norm().max(1e-300);
        stack.view_mut((r0, 0), (m.nrows(), cols)).copy_from(&(m / scale));
        r0 += m.nrows();
    }
    let gram = stack.transpose() * &stack;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(*b)).max(1.0);
    let keep: Vec<usize> = (0..cols).filter(|&i| eig.eigenvalues[i] <= 1e-10 * top).collect();
    let basis = nalgebra::DMatrix::from_fn(cols, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
    (basis, top)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut art = String::new();
    let mut dims = Vec::new();
    for t in 0..10 {
        let c = random_constraint(&mut rng, t % 2 == 1);
        let k_c = kernel_intersection(&c);
        let sym = c.symbol();
        let mut mats = Vec::new();
        for _ in 0..100 {
            let xi = random_xi(&mut rng, c.space_dim());
            let m = sym.eval(&xi);
            for v in k_c.basis() {
                ensure(m.mul_vec(v).iter().all(|x| *x == q(0)), || format!("constraint {t}: K_C ⊄ ker C(ξ)"))?;
            }
            mats.push(m.to_f64());
        }
        let (basis, _) = numeric_kernel(&mats, c.source_dim());
        ensure(basis.ncols() == k_c.dim(), || {
            format!("constraint {t}: numeric dim {} vs exact {}", basis.ncols(), k_c.dim())
        })?;
        // Numeric kernel inside K_C: residual after projecting onto K_C.
        if k_c.dim() > 0 {
            let qm = k_c.basis_matrix().to_f64().qr().q();
            let resid = &basis - &qm * (qm.transpose() * &basis);
            ensure(resid.norm() < 1e-8, || format!("constraint {t}: numeric kernel leaves K_C by {:e}", resid.norm()))?;
        }
        ensure(homogenize(&c).rows_are_homogeneous(), || format!("constraint {t}: homogenize"))?;
        dims.push(k_c.dim());
        art.push_str(&format!("{:?}", k_c.to_strings()));
    }
    Ok((format!("10 constraints (5 inhomogeneous), 100 samples each, dim K_C = {dims:?}"), art))
}

fn criterion_7() -> Outcome {
    let div = parse_operator(&SourceText::inline("rows: d1 f1 + d2 f2"), 2, 2).map_err(|e| e.to_string())?;
    let r4 = system("r4_example.sys").c.ok_or("constraint missing")?;
    let proj = RatMatrix::from_i64(&[&[1, 0, 0], &[0, 1, 0], &[0, 0, 0]]);
    let mut art = String::new();
    for (name, l, m) in [("div/Id", &div, RatMatrix::identity(2)), ("R^4 constraint", &r4, proj)] {
        let fam = left_inverse_family(l, &m).map_err(|e| format!("{name}: {e}"))?;
        ensure(fam.verify(), || format!("{name}: Σ K_β L_β ≠ Id on im M*"))?;
        let p = potential_field(&fam);
        ensure(verify_potential(&fam, &p), || format!("{name}: 𝓛*P ≠ Id on im M*"))?;
        art.push_str(&serde_json::to_string(&fam.to_json()).unwrap());
    }
    Ok(("div/Id and the R^4 constraint: zero rational residual".into(), art))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut cfg = WitnessConfig::new(system("laplace_2d.sys"), Family::Dirac);
    cfg.direction = Some(vec![q(1), q(0)]);
    cfg.grid = 256;
    cfg.epsilons = vec![0.4, 0.2, 0.1, 0.05];
    cfg.j = NormIndex::Infinity;
    cfg.seed = SEED;
    let r = blowup_experiment(&cfg).map_err(|e| e.to_string())?;
    let ratios: Vec<f64> = r.rows.iter().map(|x| x.ratio.ok_or("missing ratio")).collect::<Result<_, _>>()?;
    ensure(ratios.windows(2).all(|w| w[1] > w[0]), || format!("not increasing: {ratios:?}"))?;
    let growth = ratios[3] / ratios[0];
    ensure(growth >= 2.0, || format!("last/first = {growth}"))?;
    let fit = r.fit.ok_or("no fit")?;
    ensure(fit.slope > 0.0 && fit.r2 >= 0.95, || format!("slope {} r2 {}", fit.slope, fit.r2))?;
    ensure(r.classification == Classification::Growing, || "not GROWING".into())?;

    let mut c2 = WitnessConfig::new(system("laplace_div_2d.sys"), Family::Constrained);
    c2.grid = 256;
    c2.epsilons = vec![0.4, 0.2, 0.1, 0.05];
    c2.j = NormIndex::Finite(1);
    c2.seed = SEED;
    let b = blowup_experiment(&c2).map_err(|e| e.to_string())?;
    ensure(b.classification == Classification::Bounded, || format!("constrained: {:?}", b.rows))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 60.0, || format!("took {elapsed:.1}s"))?;
    Ok((
        format!(
            "ratios {:.4} → {:.4} (×{growth:.2}), slope {:.4}, R² {:.4}; constrained BOUNDED",
            ratios[0], ratios[3], fit.slope, fit.r2
        ),
        serde_json::to_string(&(r, b)).unwrap(),
    ))
}

fn criterion_9() -> Outcome {
    let r = report("r4_example.sys")?;
    match &r.elliptic {
        Ellipticity::No { xi, kernel, exact: true } => {
            ensure(*xi == vec![q(0), q(0), q(1), q(0)], || format!("witness {xi:?}"))?;
            ensure(*kernel == vec![q(1), q(0)], || format!("kernel {kernel:?}"))?;
        }
        other => return Err(format!("expected an exact No, got {}", other.label())),
    }
    ensure(r.diagnostics.iter().any(|d| d.code == "NON_ELLIPTIC"), || "missing diagnostic".into())?;
    Ok(("elliptic = No at ξ = (0,0,1,0), kernel (1,0), NON_ELLIPTIC flagged".into(), json(&r)))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("div-curl regression", criterion_1),
        ("divergence-free regime", criterion_2),
        ("moment map of -Δ on R^2", criterion_3),
        ("odd-dimension parity", criterion_4),
        ("annihilator correctness", criterion_5),
        ("kernel intersection oracle", criterion_6),
        ("left-inverse identity", criterion_7),
        ("witness blow-up", criterion_8),
        ("non-elliptic example detection", criterion_9),
    ];
    let mut failed = 0;
    let mut first_artifacts = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        match &out {
            Ok((detail, _)) => println!("PASS  {:>2}  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {e} [{secs:.1}s]", i + 1)
            }
        }
        first_artifacts.push(out.ok().map(|(_, a)| a));
    }
    let start = Instant::now();
    let mismatched: Vec<usize> = criteria
        .iter()
        .zip(&first_artifacts)
        .enumerate()
        .filter(|(_, ((_, f), first))| f().ok().map(|(_, a)| a) != **first)
        .map(|(i, _)| i + 1)
        .collect();
    let secs = start.elapsed().as_secs_f64();
    if mismatched.is_empty() && first_artifacts.iter().all(Option::is_some) {
        println!("PASS  10  determinism: reruns of 1-9 are byte-identical [{secs:.1}s]");
    } else {
        failed += 1;
        println!("FAIL  10  determinism: criteria {mismatched:?} differ between runs or failed [{secs:.1}s]");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
