use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DomainError;

/// Minimum resolution in either direction.
pub const MIN_RESOLUTION: usize = 16;

/// Boundary perturbation `g(θ)` of the unit ball, a function of the polar
/// angle that is even about both poles and bounded by 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Shape {
    /// `cos(kθ)`.
    Cos(u32),
    /// `exp(-4(1 - cos θ))`, concentrated near the north pole.
    Bump,
}

impl Shape {
    /// `(g, g', g'')` at `theta`.
    pub fn eval(self, theta: f64) -> (f64, f64, f64) {
        match self {
            Shape::Cos(k) => {
                let k = k as f64;
                let (s, c) = (k * theta).sin_cos();
                (c, -k * s, -k * k * c)
            }
            Shape::Bump => {
                let (s, c) = theta.sin_cos();
                let g = (-4.0 * (1.0 - c)).exp();
                let d1 = -4.0 * s * g;
                let d2 = -4.0 * c * g + 16.0 * s * s * g;
                (g, d1, d2)
            }
        }
    }

    /// Largest `ε` with `1 + ε g > 0` everywhere.
    pub fn max_epsilon(self) -> f64 {
        match self {
            Shape::Cos(0) | Shape::Bump => f64::INFINITY,
            Shape::Cos(_) => 1.0,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Cos(k) => write!(f, "cos{k}"),
            Shape::Bump => write!(f, "bump"),
        }
    }
}

impl FromStr for Shape {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "bump" {
            return Ok(Shape::Bump);
        }
        s.strip_prefix("cos")
            .and_then(|k| k.parse().ok())
            .map(Shape::Cos)
            .ok_or_else(|| DomainError::InvalidDomain(format!("unknown shape '{s}' (expected cosK or bump)")))
    }
}

impl From<Shape> for String {
    fn from(s: Shape) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Shape {
    type Error = DomainError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Axisymmetric domain `{ r < ρ(θ) }` with `ρ = 1 + ε g(θ)`, `θ` the angle
/// from the symmetry axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedBall {
    pub dim: usize,
    pub epsilon: f64,
    pub shape: Shape,
    pub description: String,
}

impl PerturbedBall {
    pub fn new(dim: usize, epsilon: f64, shape: Shape) -> Result<Self, DomainError> {
        if dim < 2 {
            return Err(DomainError::InvalidDomain(format!("dimension must be >= 2 (got {dim})")));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(DomainError::InvalidDomain(format!("epsilon must be finite and >= 0 (got {epsilon})")));
        }
        Ok(Self {
            dim,
            epsilon,
            shape,
            description: format!("unit ball in R^{dim} with boundary r = 1 + {epsilon}*{shape}(theta)"),
        })
    }

    pub fn ball(dim: usize) -> Result<Self, DomainError> {
        Self::new(dim, 0.0, Shape::Cos(2))
    }

    /// `(ρ, ρ', ρ'')` at `theta`.
    pub fn rho(&self, theta: f64) -> (f64, f64, f64) {
        let (g, d1, d2) = self.shape.eval(theta);
        (1.0 + self.epsilon * g, self.epsilon * d1, self.epsilon * d2)
    }
}

/// Boundary-fitted grid `r = s ρ(θ)` with `s_i = i/nr` (`i = 0` is the
/// single origin node, `i = nr` the boundary) and cell-centred angles
/// `θ_j = (j + 1/2)π/nθ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeridianGrid {
    pub domain: PerturbedBall,
    pub nr: usize,
    pub ntheta: usize,
    rho: Vec<(f64, f64, f64)>,
}

impl MeridianGrid {
    pub fn hs(&self) -> f64 {
        1.0 / self.nr as f64
    }

    pub fn htheta(&self) -> f64 {
        PI / self.ntheta as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        i as f64 / self.nr as f64
    }

    pub fn theta(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.htheta()
    }

    /// `(ρ, ρ', ρ'')` at `θ_j`.
    pub fn rho(&self, j: usize) -> (f64, f64, f64) {
        self.rho[j]
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn len(&self) -> usize {
        1 + self.nr * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Unknown index of node `(i, j)`; every `j` maps to 0 at the origin.
    pub fn index(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * self.ntheta + j
        }
    }

    /// `(i, j)` of unknown `k` (`(0, 0)` for the origin).
    pub fn node(&self, k: usize) -> (usize, usize) {
        if k == 0 {
            (0, 0)
        } else {
            (1 + (k - 1) / self.ntheta, (k - 1) % self.ntheta)
        }
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        self.node(k).0 == self.nr
    }

    /// Physical polar coordinates `(r, θ)` of unknown `k`.
    pub fn physical(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            return (0.0, 0.0);
        }
        let (i, j) = self.node(k);
        (self.s(i) * self.rho[j].0, self.theta(j))
    }

    /// Meridian-plane Cartesian coordinates `(x, z)`, `z` along the axis.
    pub fn cartesian(&self, k: usize) -> (f64, f64) {
        let (r, t) = self.physical(k);
        (r * t.sin(), r * t.cos())
    }
}

/// Builds the grid after checking that the map `(s, θ) ↦ s ρ(θ)(sin θ, cos θ)`
/// is a diffeomorphism: `ρ > 0` on a fine angular sample and every grid
/// cell has positive oriented area.
pub fn build_grid(domain: &PerturbedBall, nr: usize, ntheta: usize) -> Result<MeridianGrid, DomainError> {
    if nr < MIN_RESOLUTION || ntheta < MIN_RESOLUTION {
        return Err(DomainError::InvalidDomain(format!(
            "resolution {nr}x{ntheta} is below {MIN_RESOLUTION}x{MIN_RESOLUTION}"
        )));
    }
    let fail = |reason: String| DomainError::GridFailure { epsilon: domain.epsilon, reason };
    let samples = 16 * ntheta;
    for k in 0..=samples {
        let theta = PI * k as f64 / samples as f64;
        let (rho, _, _) = domain.rho(theta);
        if !(rho > 0.0) {
            return Err(fail(format!("boundary radius {rho:.3e} <= 0 at theta = {theta:.4}")));
        }
    }
    let rho: Vec<_> = (0..ntheta).map(|j| domain.rho((j as f64 + 0.5) * PI / ntheta as f64)).collect();
    let grid = MeridianGrid { domain: domain.clone(), nr, ntheta, rho };

    // cells between consecutive rings and cell-centred angles, corners in (z, x)
    let corner = |i: usize, j: usize| {
        let r = grid.s(i) * grid.rho[j].0;
        let t = grid.theta(j);
        (r * t.cos(), r * t.sin())
    };
    for i in 0..nr {
        for j in 0..ntheta - 1 {
            let c = [corner(i, j), corner(i + 1, j), corner(i + 1, j + 1), corner(i, j + 1)];
            let area = 0.5
                * (0..4)
                    .map(|k| {
                        let (a, b) = (c[k], c[(k + 1) % 4]);
                        a.0 * b.1 - b.0 * a.1
                    })
                    .sum::<f64>();
            if !(area > 0.0) {
                return Err(fail(format!("cell ({i}, {j}) has non-positive area {area:.3e}")));
            }
        }
    }
    Ok(grid)
}
