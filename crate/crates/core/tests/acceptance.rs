//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use pucci_core::domain::*;
use pucci_core::nondegeneracy::*;
use pucci_core::operators::*;
use pucci_core::radial::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }

    fn error(err: impl std::fmt::Display) -> Self {
        Self::new(false, format!("error: {err}"))
    }
}

fn exponent(kind: RadialKind) -> Result<f64, RadialError> {
    Ok(critical_exponent(kind, default_bracket(&kind), &ExponentOptions::default())?.value)
}

fn sobolev_recovery() -> Outcome {
    let mut worst = 0.0_f64;
    for n in [3usize, 4, 5, 6] {
        match exponent(RadialKind::dim_like(n as f64)) {
            Ok(p) => worst = worst.max((p - (n as f64 + 2.0) / (n as f64 - 2.0)).abs()),
            Err(e) => return Outcome::error(e),
        }
    }
    Outcome::new(worst <= 1e-3, format!("max |p - (N+2)/(N-2)| = {worst:.2e} over N = 3..6"))
}

fn q_plus_formula() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    while cases < 10 {
        let dim = rng.gen_range(3..=8usize);
        let l = rng.gen_range(0.5..2.0);
        let e = EllipticityPair::new(l, l * rng.gen_range(1.0..4.0)).unwrap();
        // p* blows up as Ñ₊ → 2; keep the shooting horizon meaningful
        if e.n_plus(dim).value() < 2.1 {
            continue;
        }
        let exact = e.n_plus(dim).critical_exponent().unwrap();
        cases += 1;
        match exponent(RadialKind::q_plus(dim, e)) {
            Ok(p) => worst = worst.max((p - exact).abs()),
            Err(err) => return Outcome::error(err),
        }
    }
    Outcome::new(worst <= 1e-3, format!("max |p - (Ñ₊+2)/(Ñ₊-2)| = {worst:.2e} over 10 random cases with Ñ₊ ≥ 2.1"))
}

fn pucci_bounds() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (l, big, n) in [(1.0, 2.0, 4usize), (1.0, 3.0, 5), (2.0, 3.0, 6)] {
        let e = EllipticityPair::new(l, big).unwrap();
        for kind in [RadialKind::PucciPlus { dim: n, e }, RadialKind::PucciMinus { dim: n, e }] {
            let (lo, hi) = kind.exponent_bounds().unwrap();
            let opts = ExponentOptions { tol: 1e-6, ..ExponentOptions::default() };
            let p = match critical_exponent(kind, default_bracket(&kind), &opts).map(|c| c.value) {
                Ok(p) => p,
                Err(err) => return Outcome::error(err),
            };
            let margin = (p - lo).min(hi - p);
            ok &= margin > 1e-2;
            let sign = if kind.label() == "pucci_plus" { "+" } else { "-" };
            parts.push(format!("M{sign}({l},{big},{n}) {p:.6} in ({lo:.6},{hi:.6}) margin {margin:.1e}"));
        }
    }
    Outcome::new(ok, parts.join("; "))
}

fn equal_constants_collapse() -> Outcome {
    let mut worst = 0.0_f64;
    for n in [3usize, 4, 5] {
        let e = EllipticityPair::isotropic(1.0).unwrap();
        for kind in [RadialKind::PucciPlus { dim: n, e }, RadialKind::PucciMinus { dim: n, e }] {
            match exponent(kind) {
                Ok(p) => worst = worst.max((p - sobolev_exponent(n).unwrap()).abs()),
                Err(err) => return Outcome::error(err),
            }
        }
    }
    Outcome::new(worst <= 2e-3, format!("max |p*± - p*_N| = {worst:.2e} at λ = Λ, N = 3..5"))
}

fn explicit_solution() -> Outcome {
    let problem = RadialProblem::new(RadialKind::dim_like(3.0), 5.0).unwrap();
    let radii: Vec<f64> = (1..=1000).map(|i| 0.01 * i as f64).collect();
    let profile = match trajectory(&problem, 1.0, &radii, 1e-12) {
        Ok(p) => p,
        Err(err) => return Outcome::error(err),
    };
    let reached = *profile.radii.last().unwrap() >= 10.0 - 1e-12;
    let err = profile
        .radii
        .iter()
        .zip(&profile.values)
        .map(|(&r, &v)| (v - (1.0 + r * r / 3.0).powf(-0.5)).abs())
        .fold(0.0, f64::max);
    Outcome::new(reached && err <= 1e-6, format!("sup |v - (1+r²/3)^(-1/2)| = {err:.2e} on [0, 10]"))
}

fn scaling_covariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.gen_range(2.2..6.0);
        let p = 1.0 + rng.gen_range(0.05..0.95) * 4.0 / (n - 2.0);
        let gamma = rng.gen_range(0.1..10.0);
        let problem = RadialProblem::new(RadialKind::dim_like(n), p).unwrap();
        let zero = |v0: f64| match shoot(&problem, v0, DEFAULT_RMAX, 1e-12).map(|o| o.classification) {
            Ok(Classification::Crossing { r0 }) => Ok(r0),
            Ok(_) => Err(format!("no crossing for Ñ={n:.3} p={p:.3}")),
            Err(err) => Err(err.to_string()),
        };
        match (zero(1.0), zero(gamma)) {
            (Ok(r1), Ok(rg)) => {
                let expected = gamma.powf((1.0 - p) / 2.0) * r1;
                worst = worst.max((rg - expected).abs() / expected);
            }
            (Err(err), _) | (_, Err(err)) => return Outcome::error(err),
        }
    }
    Outcome::new(worst <= 1e-6, format!("max relative deviation {worst:.2e} over 20 random (Ñ, p, γ)"))
}

fn nondegeneracy_suite() -> Outcome {
    let run = || -> Result<(f64, f64, f64, usize), NondegeneracyError> {
        let mut min_h = f64::INFINITY;
        let mut max_res = 0.0_f64;
        let mut min_ratio = f64::INFINITY;
        let mut degenerate = 0;
        for (l, big, n) in [(1.0, 2.0, 3usize), (1.0, 2.0, 4), (1.0, 2.0, 5), (2.0, 3.0, 6), (1.0, 1.0, 3)] {
            let e = EllipticityPair::new(l, big).unwrap();
            let nt = e.n_plus(n).value();
            let top = e.n_plus(n).critical_exponent().unwrap_or(8.0);
            for frac in [0.2, 0.5, 0.8] {
                let p = 1.0 + frac * (top - 1.0);
                let q = QOperator::plus(n, e);
                let sol = q_dirichlet_solution(&q, p, &DirichletOptions::default())?;
                let v = sol.profile.scaled(q.radial_coeff().powf(-1.0 / (p - 1.0)));
                let kernel = radial_nondegeneracy(&v, nt, p, DEFAULT_KERNEL_TOL)?;
                min_h = min_h.min(kernel.h_at_1.abs());
                max_res = max_res.max(scaling_mode_residual(&v, nt, p)?.1);
                for k in 1..=6 {
                    let mp = ModeProblem::new(k, n, e, p, sol.profile.clone())?;
                    let report = mode_nondegeneracy(&mp, DEFAULT_KERNEL_TOL)?;
                    min_ratio = min_ratio.min(report.a_at_1.abs() / report.a_max);
                    degenerate += usize::from(!report.nondegenerate);
                }
            }
        }
        Ok((min_h, max_res, min_ratio, degenerate))
    };
    match run() {
        Ok((h, res, ratio, bad)) => Outcome::new(
            h > 1e-3 && res <= 1e-6 && bad == 0,
            format!("min |h(1)| = {h:.3e}, max h₁ residual = {res:.2e}, min |a_k(1)|/max|a_k| = {ratio:.3e}, degenerate modes = {bad}"),
        ),
        Err(err) => Outcome::error(err),
    }
}

fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-3.0..3.0));
    SymMatrix::new((&b + b.transpose()) * 0.5).unwrap()
}

fn random_pair(rng: &mut ChaCha8Rng) -> EllipticityPair {
    let l = rng.gen_range(0.1..3.0);
    EllipticityPair::new(l, l * rng.gen_range(1.0..5.0)).unwrap()
}

fn operator_algebra() -> Outcome {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = [0usize; 4];
    for _ in 0..1000 {
        let n = rng.gen_range(2..=4);
        let e = random_pair(&mut rng);
        let m = random_sym(&mut rng, n);
        let scale = 1.0 + m.as_matrix().norm();
        let (plus, minus) = (pucci_plus(&m, &e), pucci_minus(&m, &e));

        // sandwich: Q diag(w) Qᵀ with λ ≤ w ≤ Λ
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(e.lambda()..=e.Lambda())));
        let a = &q * w * q.transpose();
        let a = SymMatrix::new((&a + a.transpose()) * 0.5).unwrap();
        let t = trace_product(&a, &m);
        failures[0] += usize::from(!(minus <= t + TOL * scale && t <= plus + TOL * scale));

        let s = rng.gen_range(0.0..10.0);
        let ms = m.scaled(s);
        let hom = (pucci_plus(&ms, &e) - s * plus).abs().max((pucci_minus(&ms, &e) - s * minus).abs());
        failures[1] += usize::from(hom > TOL * scale * s.max(1.0));

        failures[2] += usize::from((minus + pucci_plus(&m.scaled(-1.0), &e)).abs() > TOL * scale);

        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let p = SymMatrix::new(&b * b.transpose()).unwrap();
        let mp = m.add(&p);
        let tr = p.trace();
        let bound = TOL * (scale + tr);
        let ok = [pucci_plus(&mp, &e) - plus, pucci_minus(&mp, &e) - minus]
            .iter()
            .all(|&d| e.lambda() * tr <= d + bound && d <= e.Lambda() * tr + bound);
        failures[3] += usize::from(!ok);
    }
    Outcome::new(
        failures.iter().all(|&f| f == 0),
        format!(
            "failures out of 1000: sandwich {}, homogeneity {}, duality {}, ellipticity {}",
            failures[0], failures[1], failures[2], failures[3]
        ),
    )
}

fn perturbed_persistence() -> Outcome {
    let spec = ContinuationSpec {
        dim: 3,
        shape: Shape::Cos(2),
        kind: OperatorKind::QPlus,
        e: EllipticityPair::new(1.0, 2.0).unwrap(),
        p: 4.0,
        nr: 128,
        ntheta: 64,
    };
    match continuation_in_epsilon(&spec, &[0.1, 0.05, 0.025], &SolveOptions::default()) {
        Ok(c) => {
            let res = c.solutions.iter().map(|s| s.residual_norm).fold(0.0, f64::max);
            let min = c.solutions.iter().map(|s| s.min_interior()).fold(f64::INFINITY, f64::min);
            Outcome::new(
                res <= 1e-8 && min > 0.0 && c.delta_decreasing,
                format!(
                    "δ(0.1, 0.05, 0.025) = ({:.4e}, {:.4e}, {:.4e}), max residual {res:.2e}, min interior {min:.3e}",
                    c.deltas[0], c.deltas[1], c.deltas[2]
                ),
            )
        }
        Err(err) => Outcome::error(err),
    }
}

fn pucci_homotopy() -> Outcome {
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    let run = || -> Result<(f64, usize, f64), DomainError> {
        let grid = build_grid(&PerturbedBall::new(4, 0.05, Shape::Cos(2))?, 64, 32)?;
        let spec = HomotopySpec {
            e,
            p_target: 4.0,
            steps: 8,
            path: ExponentPath::default(),
            max_refinements: 4,
        };
        let h = homotopy_in_s(&grid, &spec, &SolveOptions::default())?;
        let u0 = radial_baseline(OperatorKind::PucciPlus, 4, &e, 4.0)?;
        let direct = solve_semilinear(&grid, OperatorKind::PucciPlus, &e, 4.0, &radial_seed(&grid, &u0), &SolveOptions::default())?;
        let diff = h.solution.values.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok((diff, h.steps.len(), h.solution.residual_norm))
    };
    match run() {
        Ok((diff, steps, res)) => Outcome::new(
            diff <= 1e-6,
            format!("{steps} steps on ε = 0.05 cos2, 64×32; sup |u_homotopy - u_direct| = {diff:.2e}, residual {res:.2e}"),
        ),
        Err(err) => Outcome::error(err),
    }
}

fn mesh_convergence() -> Outcome {
    let e = EllipticityPair::new(1.0, 2.0).unwrap();
    let run = || -> Result<Vec<f64>, DomainError> {
        let u0 = radial_baseline(OperatorKind::QPlus, 3, &e, 4.0)?;
        let mut errs = Vec::new();
        for (nr, nt) in [(32, 16), (64, 32), (128, 64)] {
            let grid = build_grid(&PerturbedBall::ball(3)?, nr, nt)?;
            let sol = solve_semilinear(&grid, OperatorKind::QPlus, &e, 4.0, &radial_seed(&grid, &u0), &SolveOptions::default())?;
            errs.push(sol.radial_deviation(&u0));
        }
        Ok(errs)
    };
    match run() {
        Ok(errs) => {
            let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
            Outcome::new(
                orders.iter().all(|&o| o >= 1.8),
                format!("errors {:.3e}, {:.3e}, {:.3e}; orders {:.2}, {:.2}", errs[0], errs[1], errs[2], orders[0], orders[1]),
            )
        }
        Err(err) => Outcome::error(err),
    }
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("Sobolev recovery", 5, sobolev_recovery),
        ("Q+ formula", 30, q_plus_formula),
        ("Pucci strict bounds", 60, pucci_bounds),
        ("collapse at lambda = Lambda", 60, equal_constants_collapse),
        ("explicit-solution oracle", 60, explicit_solution),
        ("scaling covariance", 60, scaling_covariance),
        ("non-degeneracy suite", 30, nondegeneracy_suite),
        ("operator algebra", 60, operator_algebra),
        ("perturbed-domain persistence", 300, perturbed_persistence),
        ("Pucci homotopy", 600, pucci_homotopy),
        ("mesh convergence", 300, mesh_convergence),
    ];
    let mut failed = Vec::new();
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let passed = outcome.passed && in_time;
        let time_note = if in_time { String::new() } else { format!(" (limit {limit} s exceeded)") };
        println!(
            "criterion {:>2} {:<30} {}  [{:.2} s]{time_note}  {}",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
        if !passed {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("all 11 criteria passed");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
