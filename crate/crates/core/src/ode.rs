//! Embedded Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! Steps can be forced to land on caller-supplied output points, and every
//! accepted step is handed to an observer that may stop the integration
//! (used for zero-crossing detection by the shooting code).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t={t:e} (h={h:e}); last valid state {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("non-finite state at t={t:e}; last valid state {state:?}")]
    NonFinite { t: f64, state: Vec<f64> },
    #[error("exceeded {max_steps} steps at t={t:e}")]
    MaxSteps { max_steps: usize, t: f64 },
    #[error("invalid integration interval [{t0}, {t1}]")]
    BadInterval { t0: f64, t1: f64 },
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// An accepted step `(t_prev, y_prev) → (t, y)`.
#[derive(Debug, Clone, Copy)]
pub struct Step<const D: usize> {
    pub t_prev: f64,
    pub y_prev: [f64; D],
    pub t: f64,
    pub y: [f64; D],
    /// Index into the output points when this step landed on one.
    pub output: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Finish<const D: usize> {
    pub t: f64,
    pub y: [f64; D],
    pub stopped: bool,
    pub accepted: usize,
    pub rejected: usize,
}

/// Adaptive Dormand–Prince 5(4) with mixed absolute/relative error control.
#[derive(Debug, Clone, Copy)]
pub struct Dopri {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h_init: Option<f64>,
    pub h_max: f64,
}

impl Dopri {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 2_000_000,
            h_init: None,
            h_max: f64::INFINITY,
        }
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Integrates from `t0` to `t_end`. `outputs` must be increasing and lie
    /// in `(t0, t_end]`; the integrator lands exactly on each of them.
    pub fn integrate<const D: usize, F, O>(
        &self,
        f: &F,
        t0: f64,
        y0: [f64; D],
        t_end: f64,
        outputs: &[f64],
        mut observer: O,
    ) -> Result<Finish<D>, OdeError>
    where
        F: Fn(f64, &[f64; D]) -> [f64; D],
        O: FnMut(&Step<D>) -> Flow,
    {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(OdeError::BadInterval { t0, t1: t_end });
        }
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y);
        let mut h = self.h_init.unwrap_or_else(|| self.initial_step(f, t, &y, &k1, t_end - t0));
        let mut next_out = outputs.iter().position(|&o| o > t0);
        let mut accepted = 0usize;
        let mut rejected = 0usize;
        let mut err_prev = 1e-4_f64;

        loop {
            if accepted + rejected >= self.max_steps {
                return Err(OdeError::MaxSteps { max_steps: self.max_steps, t });
            }
            h = h.min(self.h_max);
            let mut target = t_end;
            let mut out_idx = None;
            if let Some(k) = next_out {
                if outputs[k] <= t_end {
                    target = outputs[k];
                    out_idx = Some(k);
                }
            }
            let h_prop = h;
            let mut landing = false;
            if t + h >= target || (target - t - h) < 1e-12 * target.abs().max(1.0) {
                h = target - t;
                landing = true;
            }
            if h <= 1e-15 * t.abs().max(1e-300) || h < 1e-300 {
                return Err(OdeError::StepUnderflow { t, h, state: y.to_vec() });
            }

            let (y_new, k7, err) = self.trial(f, t, &y, &k1, h);
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if h < 1e-300 {
                    return Err(OdeError::NonFinite { t, state: y.to_vec() });
                }
                h *= 0.25;
                rejected += 1;
                continue;
            }
            if err <= 1.0 {
                let t_new = if landing { target } else { t + h };
                let step = Step {
                    t_prev: t,
                    y_prev: y,
                    t: t_new,
                    y: y_new,
                    output: if landing { out_idx } else { None },
                };
                accepted += 1;
                t = t_new;
                y = y_new;
                k1 = k7;
                if landing && out_idx.is_some() {
                    next_out = next_out.map(|k| k + 1).filter(|&k| k < outputs.len());
                }
                let flow = observer(&step);
                if flow == Flow::Stop {
                    return Ok(Finish { t, y, stopped: true, accepted, rejected });
                }
                if landing && (out_idx.is_none() || t >= t_end) {
                    return Ok(Finish { t, y, stopped: false, accepted, rejected });
                }
                // PI controller (Hairer's beta = 0.04)
                let fac = 0.9 * err.max(1e-10).powf(-0.17) * err_prev.powf(0.04);
                err_prev = err.max(1e-4);
                let grow = fac.clamp(0.2, 5.0);
                // a forced landing shortened h; do not let that shrink the next step
                h = if landing { h_prop.max(h * grow) } else { h * grow };
            } else {
                rejected += 1;
                let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                h *= fac;
            }
        }
    }

    fn initial_step<const D: usize, F>(&self, f: &F, t: f64, y: &[f64; D], k1: &[f64; D], span: f64) -> f64
    where
        F: Fn(f64, &[f64; D]) -> [f64; D],
    {
        let sc = |i: usize| self.atol + self.rtol * y[i].abs();
        let d0 = rms(|i| y[i] / sc(i), D);
        let d1 = rms(|i| k1[i] / sc(i), D);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        let mut y1 = [0.0; D];
        for i in 0..D {
            y1[i] = y[i] + h0 * k1[i];
        }
        let k2 = f(t + h0, &y1);
        let d2 = rms(|i| (k2[i] - k1[i]) / sc(i), D) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    }

    fn trial<const D: usize, F>(&self, f: &F, t: f64, y: &[f64; D], k1: &[f64; D], h: f64) -> ([f64; D], [f64; D], f64)
    where
        F: Fn(f64, &[f64; D]) -> [f64; D],
    {
        let (y_new, k7, errv) = dp_stages(f, t, y, k1, h);
        let err = rms(
            |i| errv[i] / (self.atol + self.rtol * y[i].abs().max(y_new[i].abs())),
            D,
        );
        (y_new, k7, err)
    }
}

fn rms(g: impl Fn(usize) -> f64, d: usize) -> f64 {
    ((0..d).map(|i| g(i) * g(i)).sum::<f64>() / d as f64).sqrt()
}

#[inline]
fn comb<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for &(c, k) in terms {
        if c != 0.0 {
            for i in 0..D {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

fn dp_stages<const D: usize, F>(f: &F, t: f64, y: &[f64; D], k1: &[f64; D], h: f64) -> ([f64; D], [f64; D], [f64; D])
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let k2 = f(t + C2 * h, &comb(y, h, &[(A21, k1)]));
    let k3 = f(t + C3 * h, &comb(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(t + C5 * h, &comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(t + h, &comb(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = comb(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y_new);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, k7, err)
}

/// A single fifth-order Dormand–Prince step of size `h` (no error control).
pub fn single_step<const D: usize, F>(f: &F, t: f64, y: &[f64; D], h: f64) -> [f64; D]
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let k1 = f(t, y);
    dp_stages(f, t, y, &k1, h).0
}

/// Locates `τ ∈ (0, h]` where component `comp` of a single step from
/// `(t, y)` changes sign, by bisection on the step length. The caller
/// guarantees `y[comp]` and the value after a full step have opposite signs.
pub fn refine_crossing<const D: usize, F>(f: &F, t: f64, y: &[f64; D], h: f64, comp: usize, rel_tol: f64) -> (f64, [f64; D])
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let sign0 = y[comp] > 0.0;
    let (mut lo, mut hi) = (0.0, h);
    let mut y_hi = single_step(f, t, y, h);
    let scale = (t + h).abs().max(h);
    for _ in 0..200 {
        if hi - lo <= rel_tol * scale {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let ym = single_step(f, t, y, mid);
        if (ym[comp] > 0.0) == sign0 {
            lo = mid;
        } else {
            hi = mid;
            y_hi = ym;
        }
    }
    (t + hi, y_hi)
}

/// Classical fixed-step RK4 from `t0` to `t1` with `n` steps. Used as an
/// independent cross-check of the adaptive integrator.
pub fn rk4_fixed<const D: usize, F>(f: &F, t0: f64, y0: [f64; D], t1: f64, n: usize) -> [f64; D]
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &comb(&y, h, &[(0.5, &k1)]));
        let k3 = f(t + 0.5 * h, &comb(&y, h, &[(0.5, &k2)]));
        let k4 = f(t + h, &comb(&y, h, &[(1.0, &k3)]));
        for i in 0..D {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}
