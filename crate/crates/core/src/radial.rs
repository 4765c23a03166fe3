//! Radial shooting for `Lu + u^p = 0` on balls.
//!
//! Three radial reductions are supported: the dimension-like Lane–Emden
//! equation `v'' + (Ñ-1)/r v' + v^p = 0` (which covers `Q±` after a
//! rescaling), and the piecewise-linear radial forms of `M±`, where the
//! Hessian of a radial function has eigenvalues `u''` (once) and `u'/r`
//! (multiplicity `N-1`).
//!
//! Trajectories start at the origin from a Taylor series and are
//! integrated in `r` up to the natural length `v0^{-(p-1)/2}`. Beyond that
//! they are continued in Emden–Fowler variables `t = ln r`,
//! `w = r^{2/(p-1)} v`, in which every equation here is autonomous. This
//! keeps classification horizons like `r = 1e100` cheap and accurate, which
//! bisection on `p` needs: near the threshold the first zero escapes to
//! infinity algebraically in `|p - p*|`.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{refine_crossing, rk4_fixed, Dopri, Flow, OdeError};
use crate::operators::{sobolev_exponent, DimensionLike, EllipticityPair};

/// Start radius of the series expansion, relative to the natural length.
pub const SERIES_START: f64 = 1e-8;
/// Default local error tolerance of the shooting integrator.
pub const DEFAULT_SHOOT_TOL: f64 = 1e-10;
/// Default classification horizon.
pub const DEFAULT_RMAX: f64 = 1e100;
/// Default bisection width for critical exponents.
pub const DEFAULT_EXPONENT_TOL: f64 = 1e-3;
/// Sup-norm bound on the re-integration defect of a Dirichlet profile.
pub const PROFILE_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadialError {
    #[error("invalid radial problem: {0}")]
    InvalidProblem(String),
    #[error("radius must be positive (got {0}); the origin is handled by the series start")]
    Origin(f64),
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("p = {p} is supercritical: trajectory stays positive up to r = {horizon:e}, no positive Dirichlet solution")]
    Supercritical { p: f64, horizon: f64 },
    #[error("invalid bracket [{lo}, {hi}]: both ends classify as {class}; widen the bracket")]
    InvalidBracket { lo: f64, hi: f64, class: &'static str },
    #[error("profile residual {residual:e} exceeds {limit:e}")]
    ResidualTooLarge { residual: f64, limit: f64 },
}

/// Which radial equation is being shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialKind {
    /// `v'' + (Ñ-1)/r v' + v^p = 0`.
    DimLike { n_tilde: DimensionLike },
    /// `M⁺(D²u) + u^p = 0` in dimension `dim`.
    PucciPlus { dim: usize, e: EllipticityPair },
    /// `M⁻(D²u) + u^p = 0` in dimension `dim`.
    PucciMinus { dim: usize, e: EllipticityPair },
}

impl RadialKind {
    pub fn dim_like(n_tilde: f64) -> Self {
        RadialKind::DimLike { n_tilde: DimensionLike(n_tilde) }
    }

    /// The reduced equation of `Q⁺` (dimension-like number `Ñ₊`).
    pub fn q_plus(dim: usize, e: EllipticityPair) -> Self {
        RadialKind::DimLike { n_tilde: e.n_plus(dim) }
    }

    /// The reduced equation of `Q⁻` (dimension-like number `Ñ₋`).
    pub fn q_minus(dim: usize, e: EllipticityPair) -> Self {
        RadialKind::DimLike { n_tilde: e.n_minus(dim) }
    }

    fn validate(&self) -> Result<(), RadialError> {
        match *self {
            RadialKind::DimLike { n_tilde } => {
                if !(n_tilde.0 > 1.0 && n_tilde.0.is_finite()) {
                    return Err(RadialError::InvalidProblem(format!("Ñ must exceed 1 (got {})", n_tilde.0)));
                }
            }
            RadialKind::PucciPlus { dim, .. } | RadialKind::PucciMinus { dim, .. } => {
                if dim < 2 {
                    return Err(RadialError::InvalidProblem(format!("dimension must be >= 2 (got {dim})")));
                }
            }
        }
        Ok(())
    }

    /// `c` in `v''(0) = -v(0)^p / c`.
    pub fn origin_coefficient(&self) -> f64 {
        match *self {
            RadialKind::DimLike { n_tilde } => n_tilde.0,
            // concave at the origin: every Hessian eigenvalue is negative
            RadialKind::PucciPlus { dim, e } => e.lambda() * dim as f64,
            RadialKind::PucciMinus { dim, e } => e.Lambda() * dim as f64,
        }
    }

    /// Known analytic bounds `(lower, upper)` on the critical exponent; for
    /// `DimLike` both equal the exact value.
    pub fn exponent_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            RadialKind::DimLike { n_tilde } => n_tilde.critical_exponent().map(|p| (p, p)),
            RadialKind::PucciPlus { dim, e } => {
                let upper = e.n_plus(dim).critical_exponent()?;
                Some((sobolev_exponent(dim)?, upper))
            }
            RadialKind::PucciMinus { dim, e } => {
                let lower = e.n_minus(dim).critical_exponent()?;
                Some((lower, sobolev_exponent(dim)?))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RadialKind::DimLike { .. } => "dimlike",
            RadialKind::PucciPlus { .. } => "pucci_plus",
            RadialKind::PucciMinus { .. } => "pucci_minus",
        }
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

/// `v'' = -(Ñ-1)/r v' - (v₊)^p`.
pub fn rhs_dimlike(r: f64, v: f64, dv: f64, n_tilde: f64, p: f64) -> Result<f64, RadialError> {
    if !(r > 0.0) {
        return Err(RadialError::Origin(r));
    }
    Ok(dimlike_accel(r, v, dv, n_tilde, p))
}

#[inline]
fn dimlike_accel(r: f64, v: f64, dv: f64, n_tilde: f64, p: f64) -> f64 {
    -(n_tilde - 1.0) / r * dv - pos_pow(v, p)
}

/// Solves `φ(u'') + (N-1)φ(u'/r) + (u₊)^p = 0` for `u''`, where
/// `φ(s) = weight(s)·s` is increasing and piecewise linear.
#[inline]
fn pucci_accel(r: f64, u: f64, du: f64, dim: usize, p: f64, weight: impl Fn(f64) -> f64) -> f64 {
    let s = du / r;
    let bracket = (dim as f64 - 1.0) * weight(s) * s + pos_pow(u, p);
    let target = -bracket;
    target / weight(target)
}

/// `u''` for the radial form of `M⁺(D²u) + u^p = 0`.
pub fn rhs_pucci_plus(r: f64, u: f64, du: f64, dim: usize, e: &EllipticityPair, p: f64) -> Result<f64, RadialError> {
    if !(r > 0.0) {
        return Err(RadialError::Origin(r));
    }
    Ok(pucci_accel(r, u, du, dim, p, |s| e.plus_weight(s)))
}

/// `u''` for the radial form of `M⁻(D²u) + u^p = 0`.
pub fn rhs_pucci_minus(r: f64, u: f64, du: f64, dim: usize, e: &EllipticityPair, p: f64) -> Result<f64, RadialError> {
    if !(r > 0.0) {
        return Err(RadialError::Origin(r));
    }
    Ok(pucci_accel(r, u, du, dim, p, |s| e.minus_weight(s)))
}

/// A radial equation together with its exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialProblem {
    pub kind: RadialKind,
    pub p: f64,
}

impl RadialProblem {
    pub fn new(kind: RadialKind, p: f64) -> Result<Self, RadialError> {
        kind.validate()?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(RadialError::InvalidProblem(format!("exponent must exceed 1 (got {p})")));
        }
        Ok(Self { kind, p })
    }

    /// Second derivative for `r > 0` (unchecked).
    #[inline]
    pub fn accel(&self, r: f64, v: f64, dv: f64) -> f64 {
        match &self.kind {
            RadialKind::DimLike { n_tilde } => dimlike_accel(r, v, dv, n_tilde.0, self.p),
            RadialKind::PucciPlus { dim, e } => pucci_accel(r, v, dv, *dim, self.p, |s| e.plus_weight(s)),
            RadialKind::PucciMinus { dim, e } => pucci_accel(r, v, dv, *dim, self.p, |s| e.minus_weight(s)),
        }
    }

    /// Emden–Fowler exponent `m = 2/(p-1)`.
    pub fn ef_exponent(&self) -> f64 {
        2.0 / (self.p - 1.0)
    }

    /// `w''` in Emden–Fowler variables. Relies on the radial right-hand
    /// sides being invariant under `(r, v) ↦ (κr, κ^{-m} v)`.
    #[inline]
    fn ef_accel(&self, m: f64, w: f64, dw: f64) -> f64 {
        self.accel(1.0, w, dw - m * w) + (2.0 * m + 1.0) * dw - m * (m + 1.0) * w
    }

    /// Natural length scale of the trajectory started at height `v0`.
    pub fn natural_length(&self, v0: f64) -> f64 {
        v0.powf(-(self.p - 1.0) / 2.0)
    }

    /// Taylor start `(r, v, v')` near the origin.
    pub fn series_start(&self, v0: f64) -> (f64, f64, f64) {
        let r0 = SERIES_START * self.natural_length(v0);
        let c = self.kind.origin_coefficient();
        let curv = -v0.powf(self.p) / c;
        (r0, v0 + 0.5 * curv * r0 * r0, curv * r0)
    }
}

/// Samples `(r, v(r), v'(r))` of a radial function.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

impl RadialProfile {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    fn push(&mut self, r: f64, v: f64, dv: f64) {
        self.radii.push(r);
        self.values.push(v);
        self.derivs.push(dv);
    }

    /// Checks `radii[0] = 0`, `derivs[0] = 0`, `values[0] > 0` and that the
    /// radii increase.
    pub fn check_invariants(&self) -> bool {
        !self.is_empty()
            && self.radii[0] == 0.0
            && self.derivs[0] == 0.0
            && self.values[0] > 0.0
            && self.radii.windows(2).all(|w| w[1] > w[0])
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
    }

    fn locate(&self, r: f64) -> usize {
        match self.radii.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => i.min(self.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.len() - 2),
        }
    }

    /// Cubic Hermite interpolation of `(v, v')` at `r` (clamped to the
    /// sampled range). The derivative is that of the interpolant.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let n = self.len();
        if n == 1 {
            return (self.values[0], self.derivs[0]);
        }
        let r = r.clamp(self.radii[0], self.radii[n - 1]);
        let i = self.locate(r);
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let h = r1 - r0;
        let t = (r - r0) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let deriv = (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / h;
        (value, deriv)
    }

    pub fn value_at(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    /// Multiplies values and derivatives by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            radii: self.radii.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            derivs: self.derivs.iter().map(|v| v * c).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Classification {
    /// First zero at `r0`.
    Crossing { r0: f64 },
    /// Positive on `[0, rmax]`.
    Positive { rmax: f64 },
}

impl Classification {
    pub fn crosses(&self) -> bool {
        matches!(self, Classification::Crossing { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Classification::Crossing { .. } => "crossing",
            Classification::Positive { .. } => "positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootOutcome {
    pub classification: Classification,
    /// Accepted integrator states, origin first. For a crossing the last
    /// entry is the refined first zero (value of either sign at rounding
    /// level, opposite to the preceding one).
    pub profile: RadialProfile,
    pub steps: usize,
}

struct Run {
    profile: RadialProfile,
    crossing: Option<f64>,
    steps: usize,
}

/// Drives the two-phase integration from the series start to `r_end`,
/// landing on every radius in `outputs`.
fn run(
    problem: &RadialProblem,
    v0: f64,
    r_end: f64,
    outputs: &[f64],
    detect_crossing: bool,
    record: bool,
    tol: f64,
) -> Result<Run, RadialError> {
    let (r0, vs, dvs) = problem.series_start(v0);
    let mut out = Run {
        profile: RadialProfile::default(),
        crossing: None,
        steps: 0,
    };
    out.profile.push(0.0, v0, 0.0);
    if record {
        out.profile.push(r0, vs, dvs);
    }
    let solver = Dopri::new(tol);

    // phase A in r
    let r_switch = problem.natural_length(v0).min(r_end);
    let f_r = |r: f64, y: &[f64; 2]| [y[1], problem.accel(r, y[0], y[1])];
    let first_b = outputs.partition_point(|&o| o <= r_switch);
    let outs_a: Vec<f64> = outputs[..first_b].iter().copied().filter(|&o| o > r0).collect();
    let mut crossing: Option<(f64, [f64; 2])> = None;
    let fin = solver.integrate(&f_r, r0, [vs, dvs], r_switch, &outs_a, |s| {
        if detect_crossing && s.y[0] <= 0.0 {
            crossing = Some(refine_crossing(&f_r, s.t_prev, &s.y_prev, s.t - s.t_prev, 0, 1e-15));
            return Flow::Stop;
        }
        if record {
            out.profile.push(s.t, s.y[0], s.y[1]);
        }
        Flow::Continue
    })?;
    out.steps += fin.accepted;
    if let Some((rc, y)) = crossing {
        out.profile.push(rc, y[0], y[1]);
        out.crossing = Some(rc);
        return Ok(out);
    }
    if r_switch >= r_end {
        return Ok(out);
    }

    // phase B in Emden–Fowler variables
    let m = problem.ef_exponent();
    let t0 = r_switch.ln();
    let t1 = r_end.ln();
    let [v, dv] = fin.y;
    let scale = r_switch.powf(m);
    let w0 = [scale * v, scale * (m * v + r_switch * dv)];
    let f_t = |_t: f64, y: &[f64; 2]| [y[1], problem.ef_accel(m, y[0], y[1])];
    let mut outs_b: Vec<f64> = Vec::with_capacity(outputs.len() - first_b);
    for &o in &outputs[first_b..] {
        let t = o.ln().min(t1);
        if t > t0 && outs_b.last().map_or(true, |&l| t > l) {
            outs_b.push(t);
        }
    }
    let to_r = |t: f64, y: &[f64; 2]| {
        let r = t.exp();
        let v = (-m * t).exp() * y[0];
        let dv = (-(m + 1.0) * t).exp() * (y[1] - m * y[0]);
        (r, v, dv)
    };
    let fin = solver.integrate(&f_t, t0, w0, t1, &outs_b, |s| {
        if detect_crossing && s.y[0] <= 0.0 {
            crossing = Some(refine_crossing(&f_t, s.t_prev, &s.y_prev, s.t - s.t_prev, 0, 1e-15));
            return Flow::Stop;
        }
        if record {
            let (r, v, dv) = to_r(s.t, &s.y);
            out.profile.push(r, v, dv);
        }
        Flow::Continue
    })?;
    out.steps += fin.accepted;
    if let Some((tc, y)) = crossing {
        let (r, v, dv) = to_r(tc, &y);
        out.profile.push(r, v, dv);
        out.crossing = Some(r);
    }
    Ok(out)
}

/// Integrates from the origin with `v(0) = v0`, `v'(0) = 0` until the first
/// zero or `rmax`.
pub fn shoot(problem: &RadialProblem, v0: f64, rmax: f64, tol: f64) -> Result<ShootOutcome, RadialError> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(RadialError::InvalidProblem(format!("initial height must be positive (got {v0})")));
    }
    if !(rmax > 0.0) || !(tol > 0.0) {
        return Err(RadialError::InvalidProblem("rmax and tol must be positive".into()));
    }
    let run = run(problem, v0, rmax, &[], true, true, tol)?;
    let classification = match run.crossing {
        Some(r0) => Classification::Crossing { r0 },
        None => Classification::Positive { rmax },
    };
    Ok(ShootOutcome { classification, profile: run.profile, steps: run.steps })
}

/// The shooting trajectory from `v(0) = v0` through every radius in
/// `radii` (increasing), stopping early at a first zero. The profile holds
/// the accepted integrator states as well as the requested radii.
pub fn trajectory(problem: &RadialProblem, v0: f64, radii: &[f64], tol: f64) -> Result<RadialProfile, RadialError> {
    if !(v0 > 0.0 && v0.is_finite()) || !(tol > 0.0) {
        return Err(RadialError::InvalidProblem("initial height and tol must be positive".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.first().map_or(true, |&r| !(r > 0.0)) {
        return Err(RadialError::InvalidProblem("radii must be positive and increasing".into()));
    }
    let r_end = *radii.last().unwrap();
    Ok(run(problem, v0, r_end, radii, true, true, tol)?.profile)
}

/// The unique positive Dirichlet solution on the unit ball. The profile
/// holds every accepted integrator state (so concentrated near-critical
/// solutions stay resolved) merged with a uniform grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletSolution {
    pub problem: RadialProblem,
    pub profile: RadialProfile,
    /// First zero of the trajectory that was rescaled.
    pub r0_unscaled: f64,
    /// Height the rescaled trajectory was started from.
    pub v0_unscaled: f64,
    /// The scaling factor `γ = r0^{2/(p-1)}`.
    pub gamma: f64,
    /// Dimensionless re-integration defect of the profile.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DirichletOptions {
    pub v0: f64,
    pub grid_points: usize,
    pub tol: f64,
    pub rmax: f64,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        Self {
            v0: 1.0,
            grid_points: 2001,
            tol: DEFAULT_SHOOT_TOL,
            rmax: DEFAULT_RMAX,
        }
    }
}

pub fn dirichlet_radial_solution(problem: &RadialProblem, opts: &DirichletOptions) -> Result<DirichletSolution, RadialError> {
    if opts.grid_points < 3 {
        return Err(RadialError::InvalidProblem("profile grid needs at least 3 points".into()));
    }
    let first = run(problem, opts.v0, opts.rmax, &[], true, false, opts.tol)?;
    let r0 = first.crossing.ok_or(RadialError::Supercritical { p: problem.p, horizon: opts.rmax })?;

    let n = opts.grid_points - 1;
    let outputs: Vec<f64> = (1..n).map(|j| r0 * j as f64 / n as f64).collect();
    let second = run(problem, opts.v0, r0, &outputs, false, true, opts.tol)?;
    let gamma = r0.powf(2.0 / (problem.p - 1.0));
    let mut profile = RadialProfile::default();
    let raw = &second.profile;
    for i in 0..raw.len() {
        let s = raw.radii[i] / r0;
        if i + 1 == raw.len() {
            profile.push(1.0, 0.0, gamma * r0 * raw.derivs[i]);
        } else if s < 1.0 - 1e-12 {
            profile.push(s, gamma * raw.values[i], gamma * r0 * raw.derivs[i]);
        }
    }
    let residual = profile_residual(problem, &profile);
    debug!("dirichlet profile: r0={r0:.12}, gamma={gamma:.6}, residual={residual:.3e}");
    if residual > PROFILE_RESIDUAL_TOL {
        return Err(RadialError::ResidualTooLarge { residual, limit: PROFILE_RESIDUAL_TOL });
    }
    Ok(DirichletSolution {
        problem: *problem,
        profile,
        r0_unscaled: r0,
        v0_unscaled: opts.v0,
        gamma,
        residual,
    })
}

/// Re-integrates each grid interval (after the first) with fixed-step RK4
/// from the stored state and returns the largest mismatch at the interval
/// end, componentwise relative to `scales`.
pub fn reintegration_defect<const D: usize, F>(radii: &[f64], states: &[[f64; D]], f: F, scales: [f64; D]) -> f64
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut worst = 0.0_f64;
    for i in 1..radii.len().saturating_sub(1) {
        let (ra, rb) = (radii[i], radii[i + 1]);
        let subs = (((rb - ra) / (2.5e-4 * rb)).ceil() as usize).clamp(2, 10_000);
        let y = rk4_fixed(&f, ra, states[i], rb, subs);
        for c in 0..D {
            worst = worst.max((y[c] - states[i + 1][c]).abs() / scales[c]);
        }
    }
    worst
}

/// Re-integration defect of a profile in its own equation, relative to
/// `max(1, ‖v‖∞)` and `max(1, ‖v'‖∞)`.
pub fn profile_residual(problem: &RadialProblem, profile: &RadialProfile) -> f64 {
    let f = |r: f64, y: &[f64; 2]| [y[1], problem.accel(r, y[0], y[1])];
    let states: Vec<[f64; 2]> = (0..profile.len()).map(|i| [profile.values[i], profile.derivs[i]]).collect();
    let vs = profile.max_abs_value().max(1.0);
    let ds = profile.derivs.iter().fold(1.0_f64, |a, &d| a.max(d.abs()));
    reintegration_defect(&profile.radii, &states, f, [vs, ds])
}

/// Radial operator `Q±` with its rescaling to the dimension-like equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QOperator {
    pub dim: usize,
    pub e: EllipticityPair,
    pub sign: QSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSign {
    Plus,
    Minus,
}

impl QOperator {
    pub fn plus(dim: usize, e: EllipticityPair) -> Self {
        Self { dim, e, sign: QSign::Plus }
    }

    pub fn minus(dim: usize, e: EllipticityPair) -> Self {
        Self { dim, e, sign: QSign::Minus }
    }

    /// Coefficient of `u''` in the radial form.
    pub fn radial_coeff(&self) -> f64 {
        match self.sign {
            QSign::Plus => self.e.Lambda(),
            QSign::Minus => self.e.lambda(),
        }
    }

    /// Coefficient of the tangential part `(N-1)u'/r + Δ_θ u / r²`.
    pub fn tangential_coeff(&self) -> f64 {
        match self.sign {
            QSign::Plus => self.e.lambda(),
            QSign::Minus => self.e.Lambda(),
        }
    }

    pub fn n_tilde(&self) -> f64 {
        self.tangential_coeff() * (self.dim as f64 - 1.0) / self.radial_coeff() + 1.0
    }

    pub fn kind(&self) -> RadialKind {
        RadialKind::dim_like(self.n_tilde())
    }
}

/// Dirichlet solution `u` of `c_rr u'' + c_t (N-1)/r u' + u^p = 0`, i.e. the
/// dimension-like profile multiplied by `c_rr^{1/(p-1)}`.
pub fn q_dirichlet_solution(q: &QOperator, p: f64, opts: &DirichletOptions) -> Result<DirichletSolution, RadialError> {
    let problem = RadialProblem::new(q.kind(), p)?;
    let mut sol = dirichlet_radial_solution(&problem, opts)?;
    sol.profile = sol.profile.scaled(q.radial_coeff().powf(1.0 / (p - 1.0)));
    Ok(sol)
}

/// Settings for `critical_exponent`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentOptions {
    pub tol: f64,
    pub rmax: f64,
    pub shoot_tol: f64,
    /// Number of evenly spaced exponents classified to check that the
    /// crossing/positive dichotomy switches only once in the bracket.
    pub scan_points: usize,
}

impl Default for ExponentOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_EXPONENT_TOL,
            rmax: DEFAULT_RMAX,
            shoot_tol: DEFAULT_SHOOT_TOL,
            scan_points: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponent {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub bisections: usize,
    /// `(p, crosses)` for the monotonicity scan.
    pub scan: Vec<(f64, bool)>,
    pub monotone: bool,
}

/// Shoots with `v0 = 1` and reports whether the trajectory crosses zero.
pub fn classify(kind: RadialKind, p: f64, rmax: f64, tol: f64) -> Result<Classification, RadialError> {
    let problem = RadialProblem::new(kind, p)?;
    let run = run(&problem, 1.0, rmax, &[], true, false, tol)?;
    Ok(match run.crossing {
        Some(r0) => Classification::Crossing { r0 },
        None => Classification::Positive { rmax },
    })
}

/// A bracket that is wide enough for every kind supported here.
pub fn default_bracket(kind: &RadialKind) -> (f64, f64) {
    let hi = kind
        .exponent_bounds()
        .map_or(60.0, |(_, upper)| (2.0 * upper + 1.0).max(20.0));
    (1.1, hi)
}

/// Bisection on `p` for the threshold between crossing (below) and
/// positive (above) trajectories.
pub fn critical_exponent(kind: RadialKind, bracket: (f64, f64), opts: &ExponentOptions) -> Result<CriticalExponent, RadialError> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 1.0 && hi > lo) {
        return Err(RadialError::InvalidProblem(format!("bracket must satisfy 1 < lo < hi (got [{lo}, {hi}])")));
    }
    let c_lo = classify(kind, lo, opts.rmax, opts.shoot_tol)?;
    let c_hi = classify(kind, hi, opts.rmax, opts.shoot_tol)?;
    if c_lo.crosses() == c_hi.crosses() || !c_lo.crosses() {
        let class = if c_lo.crosses() == c_hi.crosses() { c_lo.name() } else { "reversed" };
        return Err(RadialError::InvalidBracket { lo, hi, class });
    }

    let mut scan = Vec::with_capacity(opts.scan_points);
    if opts.scan_points >= 2 {
        for k in 0..opts.scan_points {
            let p = lo + (hi - lo) * k as f64 / (opts.scan_points - 1) as f64;
            scan.push((p, classify(kind, p, opts.rmax, opts.shoot_tol)?.crosses()));
        }
    }
    let switches = scan.windows(2).filter(|w| w[0].1 != w[1].1).count();
    let monotone = switches <= 1 && scan.first().map_or(true, |s| s.1) && scan.last().map_or(true, |s| !s.1);
    if !monotone {
        warn!("classification of {} is not monotone in p over [{lo}, {hi}]: {scan:?}", kind.label());
    } else {
        debug!("classification scan of {}: {scan:?}", kind.label());
    }

    let mut bisections = 0;
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if classify(kind, mid, opts.rmax, opts.shoot_tol)?.crosses() {
            lo = mid;
        } else {
            hi = mid;
        }
        bisections += 1;
    }
    Ok(CriticalExponent {
        value: 0.5 * (lo + hi),
        lo,
        hi,
        bisections,
        scan,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(l: f64, big: f64) -> EllipticityPair {
        EllipticityPair::new(l, big).unwrap()
    }

    #[test]
    fn rhs_examples() {
        assert_eq!(rhs_dimlike(1.0, 0.0, -1.0, 3.0, 3.0).unwrap(), 2.0);
        assert!(matches!(rhs_dimlike(0.0, 1.0, 0.0, 3.0, 3.0), Err(RadialError::Origin(_))));
        // negative heights do not feed the nonlinearity
        assert_eq!(rhs_dimlike(1.0, -2.0, 0.0, 3.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn pucci_rhs_reduces_to_laplacian_when_isotropic() {
        let e = pair(1.7, 1.7);
        for &(r, u, du) in &[(0.3, 0.9, -0.2), (2.0, 0.1, -0.05), (1.0, 0.5, 0.3)] {
            let m = rhs_pucci_plus(r, u, du, 3, &e, 3.0).unwrap();
            let l = rhs_dimlike(r, u, du, 3.0, 3.0).unwrap();
            // λ u'' = -(λ(N-1)/r u' + u^p)
            assert!((m - (l + pos_pow(u, 3.0) - pos_pow(u, 3.0) / 1.7)).abs() < 1e-14);
            assert!((rhs_pucci_minus(r, u, du, 3, &e, 3.0).unwrap() - m).abs() < 1e-14);
        }
    }

    #[test]
    fn pucci_rhs_regimes() {
        let e = pair(1.0, 2.0);
        // decreasing convex tail: Λu'' + λ(N-1)u'/r + u^p = 0
        let (r, u, du) = (1.5, 0.01, -0.4);
        let upp = rhs_pucci_plus(r, u, du, 3, &e, 3.0).unwrap();
        assert!(upp > 0.0);
        assert!((2.0 * upp + 1.0 * 2.0 * du / r + u.powi(3)).abs() < 1e-14);
        // concave core: λ(u'' + (N-1)u'/r) + u^p = 0
        let (r, u, du) = (0.1, 1.0, -0.01);
        let upp = rhs_pucci_plus(r, u, du, 3, &e, 3.0).unwrap();
        assert!(upp < 0.0);
        assert!((upp + 2.0 * du / r + u.powi(3)).abs() < 1e-13);
    }

    #[test]
    fn hermite_profile_interpolation_is_fourth_order() {
        let mk = |n: usize| {
            let mut p = RadialProfile::default();
            for i in 0..=n {
                let r = i as f64 / n as f64;
                p.push(r, r.cos(), -r.sin());
            }
            p
        };
        let err = |p: &RadialProfile| (0..97).map(|k| {
            let r = k as f64 / 96.3;
            (p.value_at(r) - r.cos()).abs()
        }).fold(0.0, f64::max);
        let (e1, e2) = (err(&mk(10)), err(&mk(20)));
        assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn invalid_problems() {
        assert!(RadialProblem::new(RadialKind::dim_like(0.5), 3.0).is_err());
        assert!(RadialProblem::new(RadialKind::dim_like(3.0), 1.0).is_err());
        let e = pair(1.0, 2.0);
        assert!(RadialProblem::new(RadialKind::PucciPlus { dim: 1, e }, 2.0).is_err());
        let prob = RadialProblem::new(RadialKind::dim_like(3.0), 3.0).unwrap();
        assert!(shoot(&prob, -1.0, 10.0, 1e-10).is_err());
    }

    #[test]
    fn subcritical_crossing_and_profile_invariants() {
        let prob = RadialProblem::new(RadialKind::dim_like(3.0), 3.0).unwrap();
        let out = shoot(&prob, 1.0, 50.0, 1e-10).unwrap();
        let Classification::Crossing { r0 } = out.classification else { panic!("expected crossing") };
        assert!(r0 > 1.0 && r0 < 10.0);
        assert!(out.profile.check_invariants());
        let signs = out.profile.values.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
        assert_eq!(signs, 1);
        assert_eq!(*out.profile.radii.last().unwrap(), r0);
    }

    #[test]
    fn low_dimension_always_crosses() {
        let prob = RadialProblem::new(RadialKind::dim_like(2.0), 7.0).unwrap();
        let sol = dirichlet_radial_solution(&prob, &DirichletOptions::default()).unwrap();
        assert!(sol.profile.values[0] > 0.0);
        assert!(sol.profile.values.last().unwrap().abs() < 1e-8);
    }

    #[test]
    fn supercritical_has_no_dirichlet_solution() {
        let prob = RadialProblem::new(RadialKind::dim_like(3.0), 5.0).unwrap();
        let err = dirichlet_radial_solution(&prob, &DirichletOptions::default()).unwrap_err();
        assert!(matches!(err, RadialError::Supercritical { .. }));
    }

    #[test]
    fn invalid_bracket_is_reported() {
        let kind = RadialKind::dim_like(3.0);
        let err = critical_exponent(kind, (6.0, 8.0), &ExponentOptions::default()).unwrap_err();
        assert!(matches!(err, RadialError::InvalidBracket { class: "positive", .. }));
        let err = critical_exponent(RadialKind::dim_like(2.0), (1.5, 30.0), &ExponentOptions::default()).unwrap_err();
        assert!(matches!(err, RadialError::InvalidBracket { class: "crossing", .. }));
    }

    #[test]
    fn q_operator_dimension_like_numbers() {
        let e = pair(1.0, 2.0);
        assert_eq!(QOperator::plus(5, e).n_tilde(), 3.0);
        assert_eq!(QOperator::minus(4, e).n_tilde(), 7.0);
        assert_eq!(QOperator::plus(5, e).kind(), RadialKind::q_plus(5, e));
    }
}
