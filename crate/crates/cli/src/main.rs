use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cancelcheck_core::conditions::homogenize;
use cancelcheck_core::dsl::{parse_system, print_operator, print_system, SourceText, SystemSpec};
use cancelcheck_core::ellipticity::{is_elliptic_with, Ellipticity};
use cancelcheck_core::operator::{annihilator_from_data, SymbolData};
use cancelcheck_core::poly::monomial_string;
use cancelcheck_core::quadrature::moment_map;
use cancelcheck_core::rational::{format_q, parse_q, Q};
use cancelcheck_core::report::{analyze, AnalysisOptions};
use cancelcheck_core::witness::{blowup_experiment, Classification, Family, NormIndex, WitnessConfig};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "cancelcheck", version, about = "Cancellation conditions for constrained elliptic systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full report: ellipticity, I_A, K_C, (co)canceling, CC and, for k >= n, weak cancellation and CWC.
    Check(CommonArgs),
    /// Print the exact annihilator L(D) of the operator in the input format.
    Annihilator(CommonArgs),
    /// Compute the moment map of the operator by sphere quadrature.
    Moment(CommonArgs),
    /// Print the system with its constraint replaced by the homogenized constraint.
    Homogenize(CommonArgs),
    /// Run a blow-up experiment on the periodic grid.
    Witness(WitnessArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// System file.
    input: PathBuf,
    /// Emit a JSON report instead of text.
    #[arg(long)]
    json: bool,
    /// Write the output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quadrature convergence tolerance (relative change between levels).
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Relative tolerance of the moment zero test.
    #[arg(long, default_value_t = 1e-8)]
    moment_tol: f64,
    /// Normalized threshold below which sampled ellipticity is inconclusive.
    #[arg(long, default_value_t = 1e-9)]
    ellipticity_threshold: f64,
    /// Number of random sphere samples in the numerical ellipticity test.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Largest quadrature rule tried before giving up.
    #[arg(long, default_value_t = 1 << 22)]
    max_nodes: usize,
    /// Seed for every random choice.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CommonArgs {
    fn options(&self) -> AnalysisOptions {
        let mut o = AnalysisOptions::default();
        o.quadrature.tol = self.tol;
        o.quadrature.max_nodes = self.max_nodes;
        o.moment_tol = self.moment_tol;
        o.ellipticity.threshold = self.ellipticity_threshold;
        o.ellipticity.samples = self.samples;
        o.ellipticity.seed = self.seed;
        o
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Dirac,
    Constrained,
}

#[derive(Args)]
struct WitnessArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Data family: mollified Dirac masses or constrained random fields.
    #[arg(long, value_enum, default_value = "dirac")]
    family: FamilyArg,
    /// Direction e of the Dirac family, comma separated rationals.
    #[arg(long)]
    direction: Option<String>,
    /// Grid points per axis (power of two, at least 16).
    #[arg(long, default_value_t = 256)]
    grid: usize,
    /// Decreasing list of mollification widths.
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05")]
    eps: Vec<f64>,
    /// Derivative gap j, or `inf` for the sup-norm experiment.
    #[arg(long)]
    j: Option<NormIndex>,
    /// Relative residual above which the data counts as outside the range.
    #[arg(long, default_value_t = 1e-8)]
    residual_tol: f64,
    /// Fail instead of recording a diagnostic when the residual is too large.
    #[arg(long)]
    strict: bool,
    /// Last-to-first ratio needed for GROWING.
    #[arg(long, default_value_t = 2.0)]
    growth: f64,
    /// Total variation relative to the mean allowed for BOUNDED.
    #[arg(long, default_value_t = 0.10)]
    flatness: f64,
}

/// Process outcome: the text to emit and the exit status.
struct Outcome {
    body: String,
    inconclusive: bool,
}

fn main() -> ExitCode {
    // Usage errors exit with 1 like every other error; 2 means inconclusive.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let common = match &cli.command {
        Command::Check(c)
        | Command::Annihilator(c)
        | Command::Moment(c)
        | Command::Homogenize(c) => c.clone(),
        Command::Witness(w) => w.common.clone(),
    };
    match run(&cli.command, &common) {
        Ok(out) => {
            if let Err(e) = emit(&common.out, &out.body) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(if out.inconclusive { 2 } else { 0 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn emit(out: &Option<PathBuf>, body: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, body),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<(SystemSpec, String), String> {
    let src = SourceText::from_file(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let hash = hex::encode(Sha256::digest(src.content.as_bytes()));
    let sys = parse_system(&src).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((sys, hash))
}

fn envelope(command: &str, hash: &str, settings: Value, result: Value) -> String {
    let v = json!({
        "tool": "cancelcheck",
        "version": VERSION,
        "command": command,
        "input_sha256": hash,
        "settings": settings,
        "result": result,
    });
    serde_json::to_string_pretty(&v).expect("serializable") + "\n"
}

fn header(command: &str, hash: &str, seed: u64) -> String {
    format!("# cancelcheck {VERSION} {command}, input sha256 {hash}, seed {seed}\n")
}

fn run(cmd: &Command, common: &CommonArgs) -> Result<Outcome, String> {
    let (sys, hash) = load(&common.input)?;
    let opts = common.options();
    let settings = serde_json::to_value(opts).expect("serializable");
    match cmd {
        Command::Check(_) => {
            let report = analyze(&sys, &opts).map_err(|e| e.to_string())?;
            let body = if common.json {
                let r = serde_json::to_value(report.to_json()).expect("serializable");
                envelope("check", &hash, settings, r)
            } else {
                header("check", &hash, common.seed) + &report.to_text()
            };
            Ok(Outcome {
                body,
                inconclusive: !report.is_decided(),
            })
        }
        Command::Annihilator(_) => annihilator(&sys, &hash, common, settings),
        Command::Moment(_) => moment(&sys, &hash, common, settings),
        Command::Homogenize(_) => {
            let h = SystemSpec {
                c: sys.c.as_ref().map(homogenize),
                ..sys.clone()
            };
            let text = print_system(&h);
            let note = match &sys.c {
                None => Some("no constraint block; nothing to homogenize"),
                Some(c) if c.rows_are_homogeneous() && c.order().is_some() => {
                    Some("constraint was already homogeneous")
                }
                _ => None,
            };
            let body = if common.json {
                envelope(
                    "homogenize",
                    &hash,
                    settings,
                    json!({ "system": text, "note": note }),
                )
            } else {
                let mut s = header("homogenize", &hash, common.seed);
                if let Some(n) = note {
                    s.push_str(&format!("# note: {n}\n"));
                }
                s + &text
            };
            Ok(Outcome {
                body,
                inconclusive: false,
            })
        }
        Command::Witness(w) => witness(sys, &hash, w),
    }
}

/// Ellipticity gate shared by the commands that need an elliptic operator.
fn require_elliptic(
    sys: &SystemSpec,
    data: &SymbolData,
    opts: &AnalysisOptions,
) -> Result<Option<Ellipticity>, String> {
    let ell = is_elliptic_with(&sys.a, data, &opts.ellipticity).map_err(|e| e.to_string())?;
    match &ell {
        Ellipticity::No { xi, kernel, .. } => Err(format!(
            "operator is not elliptic: symbol at xi = {} annihilates {}",
            fmt_vec(xi),
            fmt_vec(kernel)
        )),
        Ellipticity::Inconclusive { .. } => Ok(None),
        _ => Ok(Some(ell)),
    }
}

fn fmt_vec(v: &[Q]) -> String {
    format!("({})", v.iter().map(format_q).collect::<Vec<_>>().join(", "))
}

fn inconclusive(command: &str, hash: &str, common: &CommonArgs, settings: Value) -> Outcome {
    let msg = "ellipticity could not be decided; rerun with more samples or inspect the symbol";
    let body = if common.json {
        envelope(command, hash, settings, json!({ "inconclusive": msg }))
    } else {
        header(command, hash, common.seed) + &format!("# note: {msg}\n")
    };
    Outcome {
        body,
        inconclusive: true,
    }
}

fn annihilator(
    sys: &SystemSpec,
    hash: &str,
    common: &CommonArgs,
    settings: Value,
) -> Result<Outcome, String> {
    let opts = common.options();
    let data = SymbolData::new(&sys.a);
    if require_elliptic(sys, &data, &opts)?.is_none() {
        return Ok(inconclusive("annihilator", hash, common, settings));
    }
    let l = annihilator_from_data(sys.n, &data).map_err(|e| e.to_string())?;
    let note = l
        .is_zero()
        .then_some("not canceling: annihilator trivial");
    let text = print_operator("operator", "L", &l, 'f');
    let body = if common.json {
        envelope(
            "annihilator",
            hash,
            settings,
            json!({
                "from": l.source_dim(),
                "to": l.target_dim(),
                "order": l.order(),
                "operator": text,
                "note": note,
            }),
        )
    } else {
        let mut s = header("annihilator", hash, common.seed);
        if let Some(n) = note {
            s.push_str(&format!("# note: {n}\n"));
        }
        s.push_str(&format!("dim {}\n", sys.n));
        s + &text
    };
    Ok(Outcome {
        body,
        inconclusive: false,
    })
}

fn moment(
    sys: &SystemSpec,
    hash: &str,
    common: &CommonArgs,
    settings: Value,
) -> Result<Outcome, String> {
    let opts = common.options();
    let data = SymbolData::new(&sys.a);
    if require_elliptic(sys, &data, &opts)?.is_none() {
        return Ok(inconclusive("moment", hash, common, settings));
    }
    let m = moment_map(&sys.a, &data, &opts.quadrature).map_err(|e| e.to_string())?;
    let gammas: Vec<String> = m.gammas.iter().map(|g| monomial_string(g, "x")).collect();
    let rows: Vec<Value> = (0..m.matrix.nrows())
        .map(|r| {
            json!({
                "v": r / gammas.len() + 1,
                "monomial": gammas[r % gammas.len()],
                "values": m.matrix.row(r).iter().map(|x| x + 0.0).collect::<Vec<f64>>(),
            })
        })
        .collect();
    let columns: Vec<f64> = (0..m.dim_e)
        .map(|e| {
            let mut unit = vec![0.0; m.dim_e];
            unit[e] = 1.0;
            m.tensor_norm(&m.apply(&unit))
        })
        .collect();
    let body = if common.json {
        envelope(
            "moment",
            hash,
            settings,
            json!({
                "n": m.n,
                "order": m.k,
                "rows": rows,
                "column_norms": columns,
                "quadrature_error": m.error,
                "quadrature_level": m.level,
                "quadrature_nodes": m.nodes,
                "scale": m.scale,
            }),
        )
    } else {
        let mut s = header("moment", hash, common.seed);
        s.push_str(&format!(
            "moment map: {} x {} (rows v, monomial; columns e), {} nodes, level {}, error {:e}\n",
            m.matrix.nrows(),
            m.dim_e,
            m.nodes,
            m.level,
            m.error
        ));
        for r in 0..m.matrix.nrows() {
            let g = &gammas[r % gammas.len()];
            let label = if g.is_empty() { "1" } else { g.as_str() };
            let vals: Vec<String> = m.matrix.row(r).iter().map(|x| format!("{:.12e}", x + 0.0)).collect();
            s.push_str(&format!("v{} {label}: [{}]\n", r / gammas.len() + 1, vals.join(", ")));
        }
        for (e, c) in columns.iter().enumerate() {
            s.push_str(&format!("|M e{}| = {c:.12e}\n", e + 1));
        }
        s
    };
    Ok(Outcome {
        body,
        inconclusive: false,
    })
}

fn witness(sys: SystemSpec, hash: &str, w: &WitnessArgs) -> Result<Outcome, String> {
    let common = &w.common;
    let family = match w.family {
        FamilyArg::Dirac => Family::Dirac,
        FamilyArg::Constrained => Family::Constrained,
    };
    let mut cfg = WitnessConfig::new(sys, family);
    if let Some(d) = &w.direction {
        let e = d
            .split(',')
            .map(|t| parse_q(t.trim()).ok_or_else(|| format!("invalid direction entry '{t}'")))
            .collect::<Result<Vec<Q>, String>>()?;
        cfg.direction = Some(e);
    }
    cfg.grid = w.grid;
    cfg.epsilons = w.eps.clone();
    if let Some(j) = w.j {
        cfg.j = j;
    }
    cfg.seed = common.seed;
    cfg.residual_tol = w.residual_tol;
    cfg.strict = w.strict;
    cfg.growth_factor = w.growth;
    cfg.flatness = w.flatness;
    let result = blowup_experiment(&cfg).map_err(|e| e.to_string())?;
    let inconclusive = result.classification == Classification::Indeterminate;
    let body = if common.json {
        let settings = json!({
            "family": cfg.family,
            "direction": cfg.direction.as_ref().map(|e| e.iter().map(format_q).collect::<Vec<_>>()),
            "grid": cfg.grid,
            "epsilons": cfg.epsilons,
            "j": cfg.j,
            "seed": cfg.seed,
            "residual_tol": cfg.residual_tol,
            "strict": cfg.strict,
            "growth_factor": cfg.growth_factor,
            "flatness": cfg.flatness,
        });
        envelope(
            "witness",
            hash,
            settings,
            serde_json::to_value(&result).expect("serializable"),
        )
    } else {
        let mut s = header("witness", hash, common.seed);
        for d in &result.diagnostics {
            s.push_str(&format!("# note: {d}\n"));
        }
        let class = serde_json::to_value(result.classification).expect("serializable");
        s.push_str(&format!("# classification: {}\n", class.as_str().unwrap_or_default()));
        if let Some(f) = result.fit {
            s.push_str(&format!(
                "# fit against log(1/eps): slope {}, intercept {}, r2 {}\n",
                f.slope, f.intercept, f.r2
            ));
        }
        s + &result.to_csv()
    };
    Ok(Outcome { body, inconclusive })
}
