use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::discrete::{HessianStencils, NodeCoeffs};
use super::grid::{build_grid, MeridianGrid, PerturbedBall, Shape};
use super::sparse::BandedLu;
use super::DomainError;
use crate::operators::{sobolev_exponent, EllipticityPair};
use crate::radial::{
    critical_exponent, default_bracket, dirichlet_radial_solution, q_dirichlet_solution, DirichletOptions,
    ExponentOptions, QOperator, RadialKind, RadialProblem, RadialProfile,
};

/// Operators the domain solver discretizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    QPlus,
    PucciPlus,
}

impl OperatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::QPlus => "q_plus",
            OperatorKind::PucciPlus => "pucci_plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Sup-norm bound on `L_h u + (u₊)^p`.
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 60,
            divergence_window: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub grid: MeridianGrid,
    pub kind: OperatorKind,
    pub e: EllipticityPair,
    pub p: f64,
    pub values: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iters: usize,
    /// Iterations in which the eigenvalue sign pattern changed (always 0
    /// for `Q⁺`).
    pub policy_updates: usize,
    pub residual_history: Vec<f64>,
}

impl DiscreteSolution {
    /// Smallest value over the origin and interior rings.
    pub fn min_interior(&self) -> f64 {
        (0..self.grid.len())
            .filter(|&k| !self.grid.is_boundary(k))
            .map(|k| self.values[k])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |u_h - u₀(|x|)|` over all nodes, with `u₀ = 0` outside the unit
    /// ball.
    pub fn radial_deviation(&self, u0: &RadialProfile) -> f64 {
        (0..self.grid.len())
            .map(|k| {
                let (r, _) = self.grid.physical(k);
                let reference = if r < 1.0 { u0.value_at(r) } else { 0.0 };
                (self.values[k] - reference).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[inline]
fn pos_pow(v: f64, p: f64) -> f64 {
    if v > 0.0 {
        v.powf(p)
    } else {
        0.0
    }
}

/// The radial Dirichlet solution on the unit ball of `Q⁺` or `M⁺`.
pub fn radial_baseline(kind: OperatorKind, dim: usize, e: &EllipticityPair, p: f64) -> Result<RadialProfile, DomainError> {
    let opts = DirichletOptions::default();
    Ok(match kind {
        OperatorKind::QPlus => q_dirichlet_solution(&QOperator::plus(dim, *e), p, &opts)?.profile,
        OperatorKind::PucciPlus => {
            let problem = RadialProblem::new(RadialKind::PucciPlus { dim, e: *e }, p)?;
            dirichlet_radial_solution(&problem, &opts)?.profile
        }
    })
}

/// `U(s, θ) = u₀(s)`: the radial profile transplanted through the map.
pub fn radial_seed(grid: &MeridianGrid, u0: &RadialProfile) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let (i, _) = grid.node(k);
            if i == grid.nr {
                0.0
            } else {
                u0.value_at(grid.s(i)).max(0.0)
            }
        })
        .collect()
}

struct System<'a> {
    grid: &'a MeridianGrid,
    stencils: HessianStencils,
    e: EllipticityPair,
    p: f64,
    fixed: Option<Vec<NodeCoeffs>>,
}

impl System<'_> {
    fn coeffs(&self, u: &[f64]) -> Vec<NodeCoeffs> {
        match &self.fixed {
            Some(c) => c.clone(),
            None => self.stencils.pucci_plus_policy(u, &self.e),
        }
    }

    /// `G(u)`: the equation on interior rows and `u` on boundary rows.
    fn residual(&self, coeffs: &[NodeCoeffs], u: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|k| {
                if self.grid.is_boundary(k) {
                    u[k]
                } else {
                    self.stencils.apply_node(k, &coeffs[k], u) + pos_pow(u[k], self.p)
                }
            })
            .collect()
    }

    fn residual_norm(&self, u: &[f64]) -> f64 {
        let c = self.coeffs(u);
        sup(&self.residual(&c, u))
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

/// Newton's method on `G(u) = L_h u + (u₊)^p` with Jacobian
/// `L_h + p(u₊)^{p-1}`. For `M⁺`, `L_h` is the policy operator of the
/// current iterate (the maximizing coefficients in the eigenbasis of the
/// discrete Hessian), re-selected every step, so the iteration is policy
/// iteration with one Newton step per policy; it stops once the sign
/// pattern is unchanged and the residual is below `tol`. An iterate on
/// which the line search stalls is also accepted once the residual is at
/// the rounding level `64 eps ‖L_h‖∞ ‖u‖∞`.
pub fn solve_semilinear(
    grid: &MeridianGrid,
    kind: OperatorKind,
    e: &EllipticityPair,
    p: f64,
    init: &[f64],
    opts: &SolveOptions,
) -> Result<DiscreteSolution, DomainError> {
    if init.len() != grid.len() {
        return Err(DomainError::InvalidDomain(format!(
            "initial guess has {} values, grid has {}",
            init.len(),
            grid.len()
        )));
    }
    if !(p > 1.0) {
        return Err(DomainError::InvalidDomain(format!("exponent must exceed 1 (got {p})")));
    }
    let stencils = HessianStencils::new(grid);
    let fixed = match kind {
        OperatorKind::QPlus => Some(stencils.q_plus_coeffs(e)),
        OperatorKind::PucciPlus => None,
    };
    let sys = System { grid, stencils, e: *e, p, fixed };

    let mut u: Vec<f64> = init.to_vec();
    for k in 0..u.len() {
        if grid.is_boundary(k) {
            u[k] = 0.0;
        }
    }
    let mut history = Vec::new();
    let mut growth = 0usize;
    let mut policy_updates = 0usize;
    let mut pattern = match kind {
        OperatorKind::PucciPlus => Some(sys.stencils.sign_pattern(&u)),
        OperatorKind::QPlus => None,
    };
    let mut pattern_stable = false;
    // residual level attainable in floating point: ulp changes of u move
    // L_h u by about eps·‖L_h‖∞·‖u‖∞
    let mut floor = 0.0;
    let mut stalled = false;
    let scale0 = sup(&u).max(f64::MIN_POSITIVE);

    for iter in 0..=opts.max_iter {
        let coeffs = sys.coeffs(&u);
        let g = sys.residual(&coeffs, &u);
        let res = sup(&g);
        if let Some(&last) = history.last() {
            growth = if res > last { growth + 1 } else { 0 };
        }
        history.push(res);
        debug!("newton {iter}: residual {res:.3e}");
        if !res.is_finite() || growth >= opts.divergence_window {
            return Err(DomainError::Divergence { history });
        }
        let small = res <= opts.tol || (stalled && res <= floor);
        let converged = small && (pattern.is_none() || pattern_stable || iter == 0);
        if converged {
            let sol = DiscreteSolution {
                grid: grid.clone(),
                kind,
                e: *e,
                p,
                values: u,
                residual_norm: res,
                newton_iters: iter,
                policy_updates,
                residual_history: history,
            };
            return accept(sol, scale0);
        }
        if iter == opts.max_iter {
            break;
        }

        let lin = sys.stencils.assemble(&coeffs);
        floor = 64.0 * f64::EPSILON * lin.norm_inf() * sup(&u);
        let diag: Vec<f64> = (0..u.len())
            .map(|k| if grid.is_boundary(k) { 0.0 } else { p * pos_pow(u[k], p - 1.0) })
            .collect();
        let jac = lin.add_diagonal(&diag);
        let mut step: Vec<f64> = g.iter().map(|x| -x).collect();
        BandedLu::factor(&jac)?.solve(&mut step)?;

        // backtracking on the sup-norm residual
        let mut t = 1.0;
        let mut next = u.clone();
        loop {
            for k in 0..u.len() {
                next[k] = u[k] + t * step[k];
            }
            let trial = sys.residual_norm(&next);
            if trial < (1.0 - 1e-4 * t) * res {
                stalled = false;
                break;
            }
            if t < 1.0 / 64.0 {
                stalled = true;
                break;
            }
            t *= 0.5;
        }
        u.clone_from(&next);
        if let Some(old) = pattern.as_mut() {
            let new = sys.stencils.sign_pattern(&u);
            pattern_stable = new == *old;
            if !pattern_stable {
                policy_updates += 1;
                *old = new;
            }
        }
    }
    Err(DomainError::MaxIterations { residual: *history.last().unwrap(), history })
}

fn accept(sol: DiscreteSolution, scale0: f64) -> Result<DiscreteSolution, DomainError> {
    let max = sol.max_value();
    if max < 1e-8 * scale0 {
        return Err(DomainError::Collapse { max });
    }
    let min = sol.min_interior();
    if !(min > 0.0) {
        return Err(DomainError::PositivityFailure { min });
    }
    Ok(sol)
}

/// Solutions along a sequence of amplitudes together with their deviation
/// `δ(ε)` from the radial solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    pub epsilons: Vec<f64>,
    pub solutions: Vec<DiscreteSolution>,
    pub deltas: Vec<f64>,
    /// `δ` strictly decreases along the (decreasing) amplitudes.
    pub delta_decreasing: bool,
    pub baseline: RadialProfile,
}

#[derive(Debug, Clone)]
pub struct ContinuationSpec {
    pub dim: usize,
    pub shape: Shape,
    pub kind: OperatorKind,
    pub e: EllipticityPair,
    pub p: f64,
    pub nr: usize,
    pub ntheta: usize,
}

/// Solves on `Ω_ε` for each amplitude in turn, seeding each solve from
/// the previous one (the first from the radial solution). The grids share
/// `(s, θ)` nodes, so seeds transfer directly.
pub fn continuation_in_epsilon(spec: &ContinuationSpec, eps_list: &[f64], opts: &SolveOptions) -> Result<Continuation, DomainError> {
    if eps_list.is_empty() {
        return Err(DomainError::InvalidDomain("no amplitudes given".into()));
    }
    let baseline = radial_baseline(spec.kind, spec.dim, &spec.e, spec.p)?;
    let mut solutions: Vec<DiscreteSolution> = Vec::with_capacity(eps_list.len());
    let mut deltas = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let wrap = |source: DomainError| DomainError::ContinuationFailure { epsilon: eps, source: Box::new(source) };
        let dom = PerturbedBall::new(spec.dim, eps, spec.shape).map_err(wrap)?;
        let grid = build_grid(&dom, spec.nr, spec.ntheta).map_err(wrap)?;
        let seed = match solutions.last() {
            Some(prev) => prev.values.clone(),
            None => radial_seed(&grid, &baseline),
        };
        let sol = solve_semilinear(&grid, spec.kind, &spec.e, spec.p, &seed, opts).map_err(wrap)?;
        let delta = sol.radial_deviation(&baseline);
        info!("eps={eps}: residual {:.2e}, {} iterations, delta {delta:.4e}", sol.residual_norm, sol.newton_iters);
        deltas.push(delta);
        solutions.push(sol);
    }
    let delta_decreasing = eps_list.windows(2).zip(deltas.windows(2)).all(|(e, d)| e[1] >= e[0] || d[1] < d[0]);
    Ok(Continuation {
        epsilons: eps_list.to_vec(),
        solutions,
        deltas,
        delta_decreasing,
        baseline,
    })
}

/// How the exponent varies along the ellipticity path in the homotopy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum ExponentPath {
    /// Linear in `s` from `start` (at `s = Λ`) to the target (at `s = λ`),
    /// clipped below `clip·p*₊(s)`. Without a start, the path begins at
    /// the smaller of the target and `(1 + p*_N)/2`.
    Linear { start: Option<f64>, clip: f64 },
    /// The target exponent throughout, clipped below `clip·p*₊(s)`.
    Constant { clip: f64 },
}

impl Default for ExponentPath {
    fn default() -> Self {
        ExponentPath::Linear { start: None, clip: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyStep {
    pub s: f64,
    pub q: f64,
    pub critical: f64,
    pub newton_iters: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyResult {
    pub solution: DiscreteSolution,
    pub steps: Vec<HomotopyStep>,
}

#[derive(Debug, Clone)]
pub struct HomotopySpec {
    pub e: EllipticityPair,
    pub p_target: f64,
    pub steps: usize,
    pub path: ExponentPath,
    /// Halvings of a failed step before giving up.
    pub max_refinements: usize,
}

/// `p*₊` for the pair `(s, Λ)`.
fn critical_at(dim: usize, s: f64, big: f64) -> Result<f64, DomainError> {
    let pair = EllipticityPair::new(s, big)?;
    let kind = RadialKind::PucciPlus { dim, e: pair };
    let (lo, hi) = default_bracket(&kind);
    Ok(critical_exponent(kind, (lo, hi), &ExponentOptions::default())?.value)
}

/// Continues from the Laplacian `M⁺_{Λ,Λ} = ΛΔ` down to `M⁺_{λ,Λ}` along
/// `s ∈ [λ, Λ]`, re-solving `M⁺_{s,Λ}u + u^{q(s)} = 0` at each step from
/// the previous solution and ending at `q(λ) = p_target`. A failed step is
/// halved up to `max_refinements` times.
pub fn homotopy_in_s(grid: &MeridianGrid, spec: &HomotopySpec, opts: &SolveOptions) -> Result<HomotopyResult, DomainError> {
    let dim = grid.dim();
    let (l, big) = (spec.e.lambda(), spec.e.Lambda());
    if let Some(upper) = spec.e.n_plus(dim).critical_exponent() {
        if spec.p_target >= upper {
            return Err(DomainError::Precondition(format!(
                "p_target = {} is not below the upper bound (Ñ₊+2)/(Ñ₊-2) = {upper}",
                spec.p_target
            )));
        }
    }
    let crit_target = critical_at(dim, l, big)?;
    if spec.p_target >= crit_target {
        return Err(DomainError::Precondition(format!(
            "p_target = {} is not below the critical exponent {crit_target:.4}",
            spec.p_target
        )));
    }
    if spec.steps == 0 {
        return Err(DomainError::InvalidDomain("homotopy needs at least one step".into()));
    }

    let q_of = |s: f64, crit: f64| -> f64 {
        if s <= l {
            return spec.p_target;
        }
        let (raw, clip) = match spec.path {
            ExponentPath::Linear { start, clip } => {
                let q0 = start.unwrap_or_else(|| {
                    let sobolev = sobolev_exponent(dim).unwrap_or(f64::INFINITY);
                    spec.p_target.min(0.5 * (1.0 + sobolev))
                });
                let frac = if big > l { (big - s) / (big - l) } else { 1.0 };
                (q0 + (spec.p_target - q0) * frac, clip)
            }
            ExponentPath::Constant { clip } => (spec.p_target, clip),
        };
        raw.min(clip * crit).max(1.0 + 1e-3)
    };

    let solve_at = |s: f64, seed: Option<&[f64]>| -> Result<(DiscreteSolution, HomotopyStep), DomainError> {
        let crit = if s <= l { crit_target } else { critical_at(dim, s, big)? };
        let q = q_of(s, crit);
        let pair = EllipticityPair::new(s, big)?;
        let init = match seed {
            Some(u) => u.to_vec(),
            None => radial_seed(grid, &radial_baseline(OperatorKind::PucciPlus, dim, &pair, q)?),
        };
        let sol = solve_semilinear(grid, OperatorKind::PucciPlus, &pair, q, &init, opts)?;
        let step = HomotopyStep {
            s,
            q,
            critical: crit,
            newton_iters: sol.newton_iters,
            residual: sol.residual_norm,
        };
        info!("homotopy s={s:.4} q={q:.4} crit={crit:.4}: {} iterations", sol.newton_iters);
        Ok((sol, step))
    };

    let wrap = |s: f64| move |source: DomainError| DomainError::HomotopyFailure { s, source: Box::new(source) };
    let (mut current, first) = solve_at(big, None).map_err(wrap(big))?;
    let mut steps = vec![first];
    let mut s = big;
    let ds = (big - l) / spec.steps as f64;
    while s > l {
        let mut h = ds.min(s - l);
        let mut refinements = 0;
        loop {
            let target = if s - h <= l + 1e-12 * big { l } else { s - h };
            match solve_at(target, Some(&current.values)) {
                Ok((sol, step)) => {
                    current = sol;
                    steps.push(step);
                    s = target;
                    break;
                }
                Err(err) if refinements < spec.max_refinements => {
                    debug!("homotopy step to s={target:.4} failed ({err}); halving");
                    refinements += 1;
                    h *= 0.5;
                }
                Err(err) => return Err(wrap(target)(err)),
            }
        }
    }
    Ok(HomotopyResult { solution: current, steps })
}
