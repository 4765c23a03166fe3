//! Kernel checks for the linearization of `Lu + u^p = 0` around the radial
//! Dirichlet solution: the radial equation and every spherical-harmonic
//! mode.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{Dopri, Flow, OdeError};
use crate::operators::EllipticityPair;
use crate::radial::{
    profile_residual, q_dirichlet_solution, reintegration_defect, DirichletOptions, QOperator, RadialError, RadialKind, RadialProblem,
    RadialProfile, PROFILE_RESIDUAL_TOL,
};

/// Relative threshold below which `h(1)` or `a_k(1)` counts as zero.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-6;
/// Integrator tolerance for the linearized equations.
const LINEAR_TOL: f64 = 1e-12;
const SERIES_START: f64 = 1e-8;
/// Start radius of the Frobenius solution of a mode equation.
pub const MODE_START: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NondegeneracyError {
    #[error("base profile residual {residual:e} exceeds {limit:e}")]
    InvalidBase { residual: f64, limit: f64 },
    #[error("mode k = 0 is the radial case; use radial_nondegeneracy")]
    RadialMode,
    #[error("indicial equation σ² + ({b})σ + ({c}) = 0 has no positive root")]
    NoPositiveRoot { b: f64, c: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Integration(#[from] OdeError),
}

/// `λ_k = -k(k+N-2)`, the eigenvalues of the Laplace–Beltrami operator on
/// `S^{N-1}`.
pub fn sphere_eigenvalue(k: u32, dim: usize) -> f64 {
    let k = k as f64;
    -k * (k + dim as f64 - 2.0)
}

/// Positive root of `σ² + (Ñ-2)σ + c = 0` (requires `c < 0`, or `c = 0`
/// with `Ñ < 2`).
pub fn indicial_root(n_tilde: f64, c: f64) -> Result<f64, NondegeneracyError> {
    let b = n_tilde - 2.0;
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Err(NondegeneracyError::NoPositiveRoot { b, c });
    }
    let sigma = 0.5 * (-b + disc.sqrt());
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(NondegeneracyError::NoPositiveRoot { b, c })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub h_at_1: f64,
    pub h_max: f64,
    pub nondegenerate: bool,
}

fn check_base(problem: &RadialProblem, v: &RadialProfile) -> Result<(), NondegeneracyError> {
    if !v.check_invariants() || v.len() < 5 {
        return Err(NondegeneracyError::InvalidInput("base profile must start at r = 0 with v(0) > 0".into()));
    }
    let residual = profile_residual(problem, v);
    if residual > PROFILE_RESIDUAL_TOL {
        return Err(NondegeneracyError::InvalidBase { residual, limit: PROFILE_RESIDUAL_TOL });
    }
    Ok(())
}

#[inline]
fn potential(v: &RadialProfile, r: f64, p: f64) -> f64 {
    let x = v.value_at(r);
    if x > 0.0 {
        p * x.powf(p - 1.0)
    } else {
        0.0
    }
}

/// Solves `h'' + (Ñ-1)/r h' + μ p v^{p-1} h = 0`, `h(0) = 1`, `h'(0) = 0` on
/// `[0, 1]` and returns `(h(1), max|h|)`.
pub fn linearized_at_one(v: &RadialProfile, n_tilde: f64, p: f64, mu: f64) -> Result<(f64, f64), NondegeneracyError> {
    let q0 = mu * potential(v, 0.0, p);
    let r0 = SERIES_START;
    let h0 = [1.0 - q0 * r0 * r0 / (2.0 * n_tilde), -q0 * r0 / n_tilde];
    let f = |r: f64, y: &[f64; 2]| [y[1], -(n_tilde - 1.0) / r * y[1] - mu * potential(v, r, p) * y[0]];
    let mut h_max = 1.0_f64;
    let fin = Dopri::new(LINEAR_TOL).integrate(&f, r0, h0, 1.0, &[], |s| {
        h_max = h_max.max(s.y[0].abs());
        Flow::Continue
    })?;
    Ok((fin.y[0], h_max))
}

/// Certifies that `h'' + (Ñ-1)/r h' + p v^{p-1} h = 0`, `h'(0) = h(1) = 0`
/// has only the trivial solution, where `v` is the Dirichlet solution of
/// `v'' + (Ñ-1)/r v' + v^p = 0`. Every solution with `h'(0) = 0` is a
/// multiple of the one with `h(0) = 1`, so `h(1) ≠ 0` suffices.
pub fn radial_nondegeneracy(v: &RadialProfile, n_tilde: f64, p: f64, tol: f64) -> Result<KernelReport, NondegeneracyError> {
    let problem = RadialProblem::new(RadialKind::dim_like(n_tilde), p)?;
    check_base(&problem, v)?;
    let (h_at_1, h_max) = linearized_at_one(v, n_tilde, p, 1.0)?;
    Ok(KernelReport {
        h_at_1,
        h_max,
        nondegenerate: h_at_1.abs() > tol * h_max,
    })
}

#[inline]
fn source(v: f64, p: f64) -> f64 {
    if v > 0.0 {
        v.powf(p)
    } else {
        0.0
    }
}

/// `v''` from the dimension-like equation, with the origin limit.
fn second_derivative(r: f64, v: f64, dv: f64, n_tilde: f64, p: f64) -> f64 {
    if r == 0.0 {
        -source(v, p) / n_tilde
    } else {
        -(n_tilde - 1.0) / r * dv - source(v, p)
    }
}

/// `h₁ = v + ((p-1)/2) r v'` (the derivative of the scaling family) and
/// its defect in the linearized equation: each grid interval is
/// re-integrated together with the base equation from the stored
/// `(v, v', h₁, h₁')` and compared with the stored end state, relative to
/// the sup of each component.
pub fn scaling_mode_residual(v: &RadialProfile, n_tilde: f64, p: f64) -> Result<(Vec<f64>, f64), NondegeneracyError> {
    if v.len() < 3 {
        return Err(NondegeneracyError::InvalidInput("profile too short".into()));
    }
    let c = 0.5 * (p - 1.0);
    let states: Vec<[f64; 4]> = (0..v.len())
        .map(|i| {
            let (r, x, dx) = (v.radii[i], v.values[i], v.derivs[i]);
            let ddx = second_derivative(r, x, dx, n_tilde, p);
            [x, dx, x + c * r * dx, (1.0 + c) * dx + c * r * ddx]
        })
        .collect();
    let f = |r: f64, y: &[f64; 4]| {
        let pot = p * source(y[0], p - 1.0);
        [
            y[1],
            -(n_tilde - 1.0) / r * y[1] - source(y[0], p),
            y[3],
            -(n_tilde - 1.0) / r * y[3] - pot * y[2],
        ]
    };
    let defect = reintegration_defect(&v.radii, &states, f, component_scales(&states));
    Ok((states.iter().map(|s| s[2]).collect(), defect))
}

fn component_scales<const D: usize>(states: &[[f64; D]]) -> [f64; D] {
    let mut scales = [f64::MIN_POSITIVE; D];
    for s in states {
        for c in 0..D {
            scales[c] = scales[c].max(s[c].abs());
        }
    }
    scales
}

/// The k-th spherical-harmonic component of the linearization of
/// `Q⁺u + u^p = 0` around its radial Dirichlet solution `u₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProblem {
    pub k: u32,
    pub dim: usize,
    pub e: EllipticityPair,
    pub p: f64,
    /// `u₀`, solving `Λu'' + λ(N-1)u'/r + u^p = 0`, `u'(0) = u(1) = 0`.
    pub base: RadialProfile,
}

impl ModeProblem {
    /// Validates the base profile against its radial equation.
    pub fn new(k: u32, dim: usize, e: EllipticityPair, p: f64, base: RadialProfile) -> Result<Self, NondegeneracyError> {
        if dim < 2 {
            return Err(NondegeneracyError::InvalidInput(format!("dimension must be >= 2 (got {dim})")));
        }
        let mp = Self { k, dim, e, p, base };
        let problem = RadialProblem::new(RadialKind::dim_like(mp.n_tilde()), p)?;
        check_base(&problem, &mp.reduced_base())?;
        Ok(mp)
    }

    /// Builds the base from the radial Dirichlet solution of `Q⁺`.
    pub fn from_dirichlet(k: u32, dim: usize, e: EllipticityPair, p: f64) -> Result<Self, NondegeneracyError> {
        let sol = q_dirichlet_solution(&QOperator::plus(dim, e), p, &DirichletOptions::default())?;
        Self::new(k, dim, e, p, sol.profile)
    }

    pub fn n_tilde(&self) -> f64 {
        self.e.n_plus(self.dim).value()
    }

    pub fn sphere_eigenvalue(&self) -> f64 {
        sphere_eigenvalue(self.k, self.dim)
    }

    /// `λλ_k/Λ`, the coefficient of `a/r²`.
    pub fn angular_coeff(&self) -> f64 {
        self.e.ratio() * self.sphere_eigenvalue()
    }

    /// `v = Λ^{-1/(p-1)} u₀`, which solves the dimension-like equation and
    /// satisfies `p v^{p-1} = p u₀^{p-1}/Λ`.
    pub fn reduced_base(&self) -> RadialProfile {
        self.base.scaled(self.e.Lambda().powf(-1.0 / (self.p - 1.0)))
    }

    fn rhs<'a>(&'a self, v: &'a RadialProfile) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] + 'a {
        let nt = self.n_tilde();
        let c = self.angular_coeff();
        let p = self.p;
        move |r, y| [y[1], -(nt - 1.0) / r * y[1] - c * y[0] / (r * r) - potential(v, r, p) * y[0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub k: u32,
    pub sigma: f64,
    pub a_at_1: f64,
    pub a_max: f64,
    pub nondegenerate: bool,
}

/// Integrates the Frobenius solution `a ~ r^σ` of the mode equation
/// `a'' + (Ñ-1)/r a' + (λλ_k/Λ) a/r² + p v^{p-1} a = 0` from `r = 1e-6` to
/// `1`, normalized to `a(1e-6) = 1`; the mode is non-degenerate when
/// `|a(1)| > tol·max|a|`. Solutions vanishing at the origin are multiples
/// of this one.
pub fn mode_nondegeneracy(mp: &ModeProblem, tol: f64) -> Result<ModeReport, NondegeneracyError> {
    if mp.k == 0 {
        return Err(NondegeneracyError::RadialMode);
    }
    let sigma = indicial_root(mp.n_tilde(), mp.angular_coeff())?;
    let v = mp.reduced_base();
    let f = mp.rhs(&v);
    let mut a_max = 1.0_f64;
    let fin = Dopri::new(LINEAR_TOL).integrate(&f, MODE_START, [1.0, sigma / MODE_START], 1.0, &[], |s| {
        a_max = a_max.max(s.y[0].abs());
        Flow::Continue
    })?;
    Ok(ModeReport {
        k: mp.k,
        sigma,
        a_at_1: fin.y[0],
        a_max,
        nondegenerate: fin.y[0].abs() > tol * a_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SturmReport {
    pub passed: bool,
    /// Relative re-integration defect of `w = u₀'` in its equation.
    pub w_residual: f64,
    /// Relative variation of the Wronskian identity along the grid.
    pub identity_drift: f64,
    /// First zero of the mode solution in `(0, 1]`, if any.
    pub first_zero: Option<f64>,
}

pub const STURM_TOL: f64 = 1e-6;

/// Checks the two ingredients of the comparison argument:
///
/// * `w = v'` solves `w'' + (Ñ-1)/r w' - (Ñ-1)/r² w + p v^{p-1} w = 0`;
/// * with `a` the mode solution, `r^{Ñ-1}(a'w - aw') + ∫₀^r s^{Ñ-3}
///   (λλ_k/Λ + Ñ - 1) a w ds` is constant.
pub fn sturm_cross_check(mp: &ModeProblem) -> Result<SturmReport, NondegeneracyError> {
    if mp.k == 0 {
        return Err(NondegeneracyError::RadialMode);
    }
    let v = mp.reduced_base();
    let nt = mp.n_tilde();
    let p = mp.p;

    // w = v' with w' = v'' from the equation
    let w_prof = RadialProfile {
        radii: v.radii.clone(),
        values: v.derivs.clone(),
        derivs: (0..v.len())
            .map(|i| second_derivative(v.radii[i], v.values[i], v.derivs[i], nt, p))
            .collect(),
    };
    let states: Vec<[f64; 4]> = (0..v.len())
        .map(|i| [v.values[i], v.derivs[i], w_prof.values[i], w_prof.derivs[i]])
        .collect();
    let f_w = |r: f64, y: &[f64; 4]| {
        let pot = p * source(y[0], p - 1.0);
        [
            y[1],
            -(nt - 1.0) / r * y[1] - source(y[0], p),
            y[3],
            -(nt - 1.0) / r * y[3] + (nt - 1.0) / (r * r) * y[2] - pot * y[2],
        ]
    };
    let w_residual = reintegration_defect(&v.radii, &states, f_w, component_scales(&states));

    let sigma = indicial_root(nt, mp.angular_coeff())?;
    let coupling = mp.angular_coeff() + nt - 1.0;
    let modal = mp.rhs(&v);
    let f = |r: f64, y: &[f64; 3]| {
        let [da, dda] = modal(r, &[y[0], y[1]]);
        let (w, _) = w_prof.eval(r);
        [da, dda, r.powf(nt - 3.0) * coupling * y[0] * w]
    };
    let outputs: Vec<f64> = v.radii.iter().copied().filter(|&r| r > MODE_START).collect();
    let mut samples = Vec::with_capacity(outputs.len());
    let mut first_zero = None;
    let mut prev = 1.0_f64;
    Dopri::new(LINEAR_TOL).integrate(&f, MODE_START, [1.0, sigma / MODE_START, 0.0], 1.0, &outputs, |s| {
        if first_zero.is_none() && prev > 0.0 && s.y[0] <= 0.0 {
            first_zero = Some(s.t);
        }
        prev = s.y[0];
        if s.output.is_some() {
            samples.push((s.t, s.y));
        }
        Flow::Continue
    })?;

    let mut identity = Vec::with_capacity(samples.len());
    let mut scale = 0.0_f64;
    for &(r, y) in &samples {
        let (w, dw) = w_prof.eval(r);
        let weight = r.powf(nt - 1.0);
        let wr = weight * (y[1] * w - y[0] * dw);
        scale = scale.max((weight * y[1] * w).abs()).max((weight * y[0] * dw).abs()).max(y[2].abs());
        identity.push(wr + y[2]);
    }
    let spread = identity.iter().fold(f64::NEG_INFINITY, |a, &x| a.max(x))
        - identity.iter().fold(f64::INFINITY, |a, &x| a.min(x));
    let identity_drift = if scale > 0.0 { spread / scale } else { 0.0 };

    Ok(SturmReport {
        passed: w_residual <= STURM_TOL && identity_drift <= STURM_TOL,
        w_residual,
        identity_drift,
        first_zero,
    })
}
