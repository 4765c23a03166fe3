use std::path::PathBuf;

use log::{info, warn};
use pucci_core::domain::{
    build_grid, homotopy_in_s, io::write_solution, radial_baseline, radial_seed, solve_semilinear, DiscreteSolution,
    HomotopySpec, PerturbedBall, SolveOptions,
};
use pucci_core::nondegeneracy::{
    mode_nondegeneracy, radial_nondegeneracy, scaling_mode_residual, sturm_cross_check, ModeProblem, DEFAULT_KERNEL_TOL,
};
use pucci_core::operators::{sobolev_exponent, EllipticityPair};
use pucci_core::radial::{
    critical_exponent, dirichlet_radial_solution, q_dirichlet_solution, DirichletOptions, DirichletSolution, ExponentOptions,
    QOperator, RadialError, RadialProblem,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExponentParams, Kind, Merged, Method, PerturbedParams, RadialParams, TableParams};
use crate::error::CliError;
use crate::output::{cache_key, csv_bytes, write_atomic, Diagnostics, RunFiles, Summary, VERSION};

/// What a command produced: the summary, auxiliary files, and the error to
/// exit with when only part of the work succeeded.
pub struct Produced {
    pub summary: Summary,
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub error: Option<CliError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandName {
    Exponent,
    Radial,
    Perturbed,
    Table,
}

impl CommandName {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandName::Exponent => "exponent",
            CommandName::Radial => "radial",
            CommandName::Perturbed => "perturbed",
            CommandName::Table => "table",
        }
    }
}

/// Resolves the configuration, serves a cached summary when allowed, and
/// otherwise runs the command and writes its outputs.
pub fn execute(command: CommandName, merged: &Merged) -> Result<Summary, CliError> {
    let params = match command {
        CommandName::Exponent => to_value(&merged.exponent()?),
        CommandName::Radial => to_value(&merged.radial()?),
        CommandName::Perturbed => to_value(&merged.perturbed()?),
        CommandName::Table => to_value(&merged.table()?),
    };
    let key = cache_key(command.as_str(), &params);
    let files = RunFiles::new(&merged.out_dir(), command.as_str(), &key);
    if merged.use_cache() {
        if let Some(summary) = files.cached() {
            info!("cache hit: {}", files.summary_path().display());
            return Ok(summary);
        }
    }
    let produced = match command {
        CommandName::Exponent => exponent(merged.exponent()?, params)?,
        CommandName::Radial => radial(merged.radial()?, params, &files)?,
        CommandName::Perturbed => perturbed(merged.perturbed()?, params, &files)?,
        CommandName::Table => table(merged.table()?, params, &files)?,
    };
    for (path, bytes) in &produced.files {
        write_atomic(path, bytes)?;
    }
    write_atomic(&files.summary_path(), produced.summary.to_json().as_bytes())?;
    info!("wrote {}", files.summary_path().display());
    match produced.error {
        Some(e) => {
            eprintln!("{}", produced.summary.to_json());
            Err(e)
        }
        None => Ok(produced.summary),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("parameters serialize")
}

fn summary(params: Value, result: Value, residual: f64, iters: usize) -> Summary {
    Summary {
        params,
        result,
        diagnostics: Diagnostics { residual, iters },
        version: VERSION.to_string(),
    }
}

/// Interval known to contain the critical exponent of `kind`; `None`
/// marks an unbounded side.
pub fn analytic_bounds(kind: Kind, dim: usize, e: &EllipticityPair) -> (Option<f64>, Option<f64>) {
    let sobolev = sobolev_exponent(dim);
    match kind {
        Kind::QPlus | Kind::PucciPlus => (sobolev, e.n_plus(dim).critical_exponent()),
        Kind::QMinus | Kind::PucciMinus => (e.n_minus(dim).critical_exponent(), sobolev),
    }
}

fn within(p: f64, (lo, hi): (Option<f64>, Option<f64>), tol: f64) -> bool {
    lo.map_or(true, |l| p >= l - tol) && hi.map_or(true, |h| p <= h + tol)
}

/// `Q±` reduce to `v'' + (Ñ-1)/r v' + v^p = 0`, which has no critical
/// exponent when `Ñ ≤ 2`.
fn no_finite_exponent(kind: Kind, dim: usize, e: &EllipticityPair) -> Option<String> {
    let n = match kind {
        Kind::QPlus => e.n_plus(dim),
        Kind::QMinus => e.n_minus(dim),
        _ => return None,
    };
    n.critical_exponent()
        .is_none()
        .then(|| format!("Ñ = {} <= 2: every p > 1 is subcritical, no finite critical exponent", n.value()))
}

#[derive(Debug, Clone, Serialize)]
struct ExponentRow {
    kind: Kind,
    lambda: f64,
    #[serde(rename = "Lambda")]
    big_lambda: f64,
    dim: usize,
    exponent: Option<f64>,
    bracket: Option<[f64; 2]>,
    bisections: usize,
    monotone: Option<bool>,
    sobolev: Option<f64>,
    q_plus_exponent: Option<f64>,
    q_minus_exponent: Option<f64>,
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
    bounds_respected: Option<bool>,
    note: Option<String>,
    error: Option<String>,
}

impl ExponentRow {
    fn new(kind: Kind, e: &EllipticityPair, dim: usize) -> Self {
        let (lower_bound, upper_bound) = analytic_bounds(kind, dim, e);
        Self {
            kind,
            lambda: e.lambda(),
            big_lambda: e.Lambda(),
            dim,
            exponent: None,
            bracket: None,
            bisections: 0,
            monotone: None,
            sobolev: sobolev_exponent(dim),
            q_plus_exponent: e.n_plus(dim).critical_exponent(),
            q_minus_exponent: e.n_minus(dim).critical_exponent(),
            lower_bound,
            upper_bound,
            bounds_respected: None,
            note: None,
            error: None,
        }
    }
}

fn exponent_row(kind: Kind, e: EllipticityPair, dim: usize, bracket: (f64, f64), tol: f64, rmax: f64) -> Result<ExponentRow, CliError> {
    let mut row = ExponentRow::new(kind, &e, dim);
    if let Some(note) = no_finite_exponent(kind, dim, &e) {
        return Err(CliError::Config(note));
    }
    let opts = ExponentOptions { tol, rmax, ..ExponentOptions::default() };
    let c = critical_exponent(kind.radial(dim, e), bracket, &opts)?;
    row.exponent = Some(c.value);
    row.bracket = Some([c.lo, c.hi]);
    row.bisections = c.bisections;
    row.monotone = Some(c.monotone);
    row.bounds_respected = Some(within(c.value, (row.lower_bound, row.upper_bound), tol));
    Ok(row)
}

fn exponent(params: ExponentParams, pv: Value) -> Result<Produced, CliError> {
    let e = EllipticityPair::new(params.lambda, params.big_lambda)?;
    let row = exponent_row(params.kind, e, params.dim, (params.p_lo, params.p_hi), params.tol, params.rmax)?;
    if row.monotone == Some(false) {
        warn!("crossing/positive classification switches more than once in the bracket");
    }
    let [lo, hi] = row.bracket.expect("bracket set on success");
    let iters = row.bisections;
    let mut result = to_value(&row);
    result["status"] = json!("ok");
    Ok(Produced { summary: summary(pv, result, hi - lo, iters), files: Vec::new(), error: None })
}

#[derive(Debug, Clone, Serialize)]
struct KernelSummary {
    n_tilde: f64,
    h_at_1: f64,
    h_max: f64,
    nondegenerate: bool,
    scaling_mode_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ModeSummary {
    k: u32,
    sigma: f64,
    a_at_1: f64,
    a_max: f64,
    nondegenerate: bool,
    sturm_passed: bool,
    first_zero: Option<f64>,
}

fn radial_solution(params: &RadialParams, e: EllipticityPair) -> Result<DirichletSolution, RadialError> {
    let opts = DirichletOptions { tol: params.tol, rmax: params.rmax, ..DirichletOptions::default() };
    match params.kind {
        Kind::QPlus => q_dirichlet_solution(&QOperator::plus(params.dim, e), params.p, &opts),
        Kind::QMinus => q_dirichlet_solution(&QOperator::minus(params.dim, e), params.p, &opts),
        Kind::PucciPlus | Kind::PucciMinus => {
            let problem = RadialProblem::new(params.kind.radial(params.dim, e), params.p)?;
            dirichlet_radial_solution(&problem, &opts)
        }
    }
}

fn radial(params: RadialParams, pv: Value, files: &RunFiles) -> Result<Produced, CliError> {
    let e = EllipticityPair::new(params.lambda, params.big_lambda)?;
    let sol = radial_solution(&params, e)?;
    let profile = &sol.profile;

    let q = match params.kind {
        Kind::QPlus => Some(QOperator::plus(params.dim, e)),
        Kind::QMinus => Some(QOperator::minus(params.dim, e)),
        _ => None,
    };
    let kernel = match &q {
        Some(q) => {
            let nt = q.n_tilde();
            let v = profile.scaled(q.radial_coeff().powf(-1.0 / (params.p - 1.0)));
            let report = radial_nondegeneracy(&v, nt, params.p, DEFAULT_KERNEL_TOL)?;
            let (_, scaling) = scaling_mode_residual(&v, nt, params.p)?;
            Some(KernelSummary {
                n_tilde: nt,
                h_at_1: report.h_at_1,
                h_max: report.h_max,
                nondegenerate: report.nondegenerate,
                scaling_mode_residual: scaling,
            })
        }
        None => None,
    };
    let mut modes = Vec::new();
    if params.kind == Kind::QPlus {
        for k in 1..=params.kmax {
            let mp = ModeProblem::new(k, params.dim, e, params.p, profile.clone())?;
            let report = mode_nondegeneracy(&mp, DEFAULT_KERNEL_TOL)?;
            let sturm = sturm_cross_check(&mp)?;
            modes.push(ModeSummary {
                k,
                sigma: report.sigma,
                a_at_1: report.a_at_1,
                a_max: report.a_max,
                nondegenerate: report.nondegenerate,
                sturm_passed: sturm.passed,
                first_zero: sturm.first_zero,
            });
        }
    }

    let profile_path = files.path("-profile.csv");
    let rows = (0..profile.len()).map(|i| {
        vec![profile.radii[i].to_string(), profile.values[i].to_string(), profile.derivs[i].to_string()]
    });
    let csv = csv_bytes(&pv, &["r", "u", "du"], rows)?;
    let result = json!({
        "status": "ok",
        "kind": params.kind,
        "u0": profile.values[0],
        "du_at_1": profile.derivs[profile.len() - 1],
        "r0_unscaled": sol.r0_unscaled,
        "gamma": sol.gamma,
        "profile_points": profile.len(),
        "profile_file": file_name(&profile_path),
        "kernel": kernel,
        "modes": modes,
        "modes_note": (params.kind != Kind::QPlus).then_some("mode analysis is available for q+ only"),
    });
    Ok(Produced {
        summary: summary(pv, result, sol.residual, 1),
        files: vec![(profile_path, csv)],
        error: None,
    })
}

fn file_name(p: &std::path::Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize)]
struct EpsilonCase {
    epsilon: f64,
    status: &'static str,
    delta: Option<f64>,
    residual: Option<f64>,
    newton_iters: Option<usize>,
    policy_updates: Option<usize>,
    min_interior: Option<f64>,
    homotopy_steps: Option<usize>,
    file: Option<String>,
    error: Option<String>,
}

fn perturbed(params: PerturbedParams, pv: Value, files: &RunFiles) -> Result<Produced, CliError> {
    let e = EllipticityPair::new(params.lambda, params.big_lambda)?;
    let op = params.operator();
    let baseline = radial_baseline(op, params.dim, &e, params.p)?;
    let opts = SolveOptions { tol: params.tol, ..SolveOptions::default() };

    let mut cases = Vec::with_capacity(params.eps.len());
    let mut out = Vec::new();
    let mut first_error: Option<CliError> = None;
    let mut previous: Option<Vec<f64>> = None;
    for (i, &eps) in params.eps.iter().enumerate() {
        let attempt = || -> Result<(DiscreteSolution, Option<usize>), CliError> {
            let grid = build_grid(&PerturbedBall::new(params.dim, eps, params.shape.into())?, params.nr, params.ntheta)?;
            match (&params.method, &params.homotopy) {
                (Method::Homotopy, Some(h)) => {
                    let spec = HomotopySpec {
                        e,
                        p_target: params.p,
                        steps: h.steps,
                        path: h.path,
                        max_refinements: h.max_refinements,
                    };
                    let res = homotopy_in_s(&grid, &spec, &opts)?;
                    Ok((res.solution, Some(res.steps.len())))
                }
                _ => {
                    let seed = previous.clone().unwrap_or_else(|| radial_seed(&grid, &baseline));
                    Ok((solve_semilinear(&grid, op, &e, params.p, &seed, &opts)?, None))
                }
            }
        };
        match attempt() {
            Ok((sol, homotopy_steps)) => {
                let delta = sol.radial_deviation(&baseline);
                info!("eps={eps}: residual {:.2e}, delta {delta:.4e}", sol.residual_norm);
                let path = files.path(&format!("-eps{i}.dat"));
                let mut bytes = Vec::new();
                let extra = [
                    ("params".to_string(), serde_json::to_string(&pv).expect("params serialize")),
                    ("version".to_string(), VERSION.to_string()),
                ];
                write_solution(&sol, &extra, &mut bytes)?;
                cases.push(EpsilonCase {
                    epsilon: eps,
                    status: "ok",
                    delta: Some(delta),
                    residual: Some(sol.residual_norm),
                    newton_iters: Some(sol.newton_iters),
                    policy_updates: Some(sol.policy_updates),
                    min_interior: Some(sol.min_interior()),
                    homotopy_steps,
                    file: Some(file_name(&path)),
                    error: None,
                });
                out.push((path, bytes));
                previous = Some(sol.values);
            }
            Err(err) => {
                warn!("eps={eps}: {err}");
                cases.push(EpsilonCase {
                    epsilon: eps,
                    status: "failed",
                    delta: None,
                    residual: None,
                    newton_iters: None,
                    policy_updates: None,
                    min_interior: None,
                    homotopy_steps: None,
                    file: None,
                    error: Some(err.to_string()),
                });
                first_error.get_or_insert(err);
            }
        }
    }

    let all_ok = first_error.is_none();
    let deltas: Vec<f64> = cases.iter().filter_map(|c| c.delta).collect();
    let delta_decreasing = all_ok.then(|| {
        params.eps.windows(2).zip(deltas.windows(2)).all(|(e, d)| e[1] >= e[0] || d[1] < d[0])
    });
    let table_rows = cases.iter().map(|c| {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            c.epsilon.to_string(),
            opt(c.delta),
            opt(c.residual),
            c.newton_iters.map(|n| n.to_string()).unwrap_or_default(),
            c.status.to_string(),
        ]
    });
    let delta_path = files.path("-delta.csv");
    out.push((delta_path.clone(), csv_bytes(&pv, &["epsilon", "delta", "residual", "newton_iters", "status"], table_rows)?));

    let residual = cases.iter().filter_map(|c| c.residual).fold(0.0, f64::max);
    let iters = cases.iter().filter_map(|c| c.newton_iters).sum();
    let result = json!({
        "status": if all_ok { "ok" } else { "failed" },
        "method": params.method,
        "baseline_u0": baseline.values[0],
        "cases": cases,
        "delta_decreasing": delta_decreasing,
        "delta_file": file_name(&delta_path),
    });
    Ok(Produced { summary: summary(pv, result, residual, iters), files: out, error: first_error })
}

fn table(params: TableParams, pv: Value, files: &RunFiles) -> Result<Produced, CliError> {
    let mut tuples = Vec::new();
    for &[l, big] in &params.pairs {
        for &dim in &params.dims {
            for &kind in &params.kinds {
                tuples.push((kind, EllipticityPair::new(l, big)?, dim));
            }
        }
    }
    let rows: Vec<ExponentRow> = tuples
        .par_iter()
        .map(|&(kind, e, dim)| {
            let bracket = pucci_core::radial::default_bracket(&kind.radial(dim, e));
            match exponent_row(kind, e, dim, bracket, params.tol, params.rmax) {
                Ok(row) => row,
                Err(err) => {
                    let mut row = ExponentRow::new(kind, &e, dim);
                    match err {
                        CliError::Config(msg) => row.note = Some(msg),
                        other => row.error = Some(other.to_string()),
                    }
                    row
                }
            }
        })
        .collect();

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let csv_rows = rows.iter().map(|r| {
        vec![
            r.kind.label().to_string(),
            r.lambda.to_string(),
            r.big_lambda.to_string(),
            r.dim.to_string(),
            opt(r.exponent),
            opt(r.lower_bound),
            opt(r.upper_bound),
            opt(r.sobolev),
            r.bounds_respected.map(|b| b.to_string()).unwrap_or_default(),
            r.note.clone().or_else(|| r.error.clone()).unwrap_or_default(),
        ]
    });
    let columns = ["kind", "lambda", "Lambda", "dim", "exponent", "lower_bound", "upper_bound", "sobolev", "bounds_respected", "note"];
    let table_path = files.path("-table.csv");
    let csv = csv_bytes(&pv, &columns, csv_rows)?;

    let residual = rows.iter().filter_map(|r| r.bracket.map(|[lo, hi]| hi - lo)).fold(0.0, f64::max);
    let iters = rows.iter().map(|r| r.bisections).sum();
    let result = json!({
        "status": if failed == 0 { "ok" } else { "failed" },
        "rows": rows,
        "table_file": file_name(&table_path),
    });
    let error = (failed > 0).then(|| CliError::Solver(format!("{failed} table rows failed")));
    Ok(Produced { summary: summary(pv, result, residual, iters), files: vec![(table_path, csv)], error })
}
