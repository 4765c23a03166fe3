//! Finite-difference Hessians on a meridian grid and the operators built
//! from them.
//!
//! At an interior node the Hessian of an axisymmetric function is
//! represented in the frame `(e_r, e_θ, e_φ…)`: a symmetric 2×2 meridian
//! block plus the azimuthal eigenvalue `u_r/r + cot θ u_θ/r²` with
//! multiplicity `N-2`. Derivatives in `(r, θ)` follow from central
//! differences in the mapped coordinates `(s, θ)` by the chain rule through
//! `s = r/ρ(θ)`. At the origin the Hessian is `diag(u_xx,…,u_xx, u_zz)`,
//! obtained from a weighted least-squares quadratic fit to the first ring.
//!
//! Every operator is `tr(A D²u)` for a node-wise coefficient matrix `A`;
//! `Q⁺` uses `A = λI + (Λ-λ)e_r⊗e_r` and `M⁺` the maximizing `A` in the
//! eigenbasis of the discrete Hessian.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::grid::MeridianGrid;
use super::sparse::CsrMatrix;
use crate::operators::EllipticityPair;

/// A linear functional of the grid values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearForm(pub Vec<(usize, f64)>);

impl LinearForm {
    fn push(&mut self, col: usize, w: f64) {
        if w != 0.0 {
            self.0.push((col, w));
        }
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.0.iter().map(|&(c, w)| w * u[c]).sum()
    }

    /// `Σ w (u_c - u_center)`: equal to `eval` for forms that annihilate
    /// constants (all derivative stencils), but free of the cancellation
    /// between large weights near the origin.
    pub fn eval_rel(&self, u: &[f64], center: usize) -> f64 {
        let uc = u[center];
        self.0.iter().map(|&(c, w)| w * (u[c] - uc)).sum()
    }

    fn combine(terms: &[(f64, &LinearForm)]) -> LinearForm {
        let mut out = LinearForm::default();
        for &(a, f) in terms {
            if a != 0.0 {
                for &(c, w) in &f.0 {
                    out.push(c, a * w);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeHessian {
    /// Entries in the `(e_r, e_θ)` frame and the azimuthal eigenvalue.
    Meridian {
        rr: LinearForm,
        rt: LinearForm,
        tt: LinearForm,
        pp: LinearForm,
    },
    /// `u_xx` (multiplicity `N-1`) and `u_zz` at the origin.
    Origin { xx: LinearForm, zz: LinearForm },
    /// Dirichlet node.
    Boundary,
}

/// Coefficients of `tr(A D²u)` at one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NodeCoeffs {
    /// `A` in the `(e_r, e_θ)` frame plus the azimuthal weight.
    Meridian { arr: f64, art: f64, att: f64, app: f64 },
    Origin { axx: f64, azz: f64 },
    Boundary,
}

/// Discrete Hessians of every node of a grid.
#[derive(Debug, Clone)]
pub struct HessianStencils {
    pub dim: usize,
    pub nodes: Vec<NodeHessian>,
}

impl HessianStencils {
    pub fn new(grid: &MeridianGrid) -> Self {
        let mut nodes = Vec::with_capacity(grid.len());
        nodes.push(origin_hessian(grid));
        for k in 1..grid.len() {
            let (i, j) = grid.node(k);
            if i == grid.nr {
                nodes.push(NodeHessian::Boundary);
            } else {
                nodes.push(interior_hessian(grid, i, j));
            }
        }
        Self { dim: grid.dim(), nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Eigenvalues of the discrete Hessian at node `k` (all `N` of them;
    /// empty on the boundary).
    pub fn eigenvalues(&self, k: usize, u: &[f64]) -> Vec<f64> {
        let n = self.dim;
        match &self.nodes[k] {
            NodeHessian::Meridian { rr, rt, tt, pp } => {
                let (e1, e2, _) = sym2_eigen(rr.eval_rel(u, k), rt.eval_rel(u, k), tt.eval_rel(u, k));
                let mut out = vec![e1, e2];
                out.extend(std::iter::repeat(pp.eval_rel(u, k)).take(n - 2));
                out
            }
            NodeHessian::Origin { xx, zz } => {
                let mut out = vec![xx.eval_rel(u, k); n - 1];
                out.push(zz.eval_rel(u, k));
                out
            }
            NodeHessian::Boundary => Vec::new(),
        }
    }

    /// `tr(A D²u)` at node `k`.
    pub fn apply_node(&self, k: usize, c: &NodeCoeffs, u: &[f64]) -> f64 {
        let m = (self.dim - 2) as f64;
        match (&self.nodes[k], c) {
            (NodeHessian::Meridian { rr, rt, tt, pp }, NodeCoeffs::Meridian { arr, art, att, app }) => {
                arr * rr.eval_rel(u, k) + 2.0 * art * rt.eval_rel(u, k) + att * tt.eval_rel(u, k) + m * app * pp.eval_rel(u, k)
            }
            (NodeHessian::Origin { xx, zz }, NodeCoeffs::Origin { axx, azz }) => {
                (self.dim - 1) as f64 * axx * xx.eval_rel(u, k) + azz * zz.eval_rel(u, k)
            }
            (NodeHessian::Boundary, NodeCoeffs::Boundary) => 0.0,
            _ => panic!("coefficient kind does not match node {k}"),
        }
    }

    fn row(&self, k: usize, c: &NodeCoeffs) -> LinearForm {
        let m = (self.dim - 2) as f64;
        match (&self.nodes[k], c) {
            (NodeHessian::Meridian { rr, rt, tt, pp }, NodeCoeffs::Meridian { arr, art, att, app }) => {
                LinearForm::combine(&[(*arr, rr), (2.0 * art, rt), (*att, tt), (m * app, pp)])
            }
            (NodeHessian::Origin { xx, zz }, NodeCoeffs::Origin { axx, azz }) => {
                LinearForm::combine(&[((self.dim - 1) as f64 * axx, xx), (*azz, zz)])
            }
            (NodeHessian::Boundary, NodeCoeffs::Boundary) => LinearForm(vec![(k, 1.0)]),
            _ => panic!("coefficient kind does not match node {k}"),
        }
    }

    /// Sparse matrix of `u ↦ tr(A D²u)` with identity rows on the boundary.
    pub fn assemble(&self, coeffs: &[NodeCoeffs]) -> CsrMatrix {
        CsrMatrix::from_rows((0..self.len()).map(|k| self.row(k, &coeffs[k]).0).collect())
    }

    /// Coefficients of `Q⁺ = λΔ + (Λ-λ)∂²_rr`. At the origin, where `∂²_rr`
    /// has no limit, its average over directions `Δ/N` is used.
    pub fn q_plus_coeffs(&self, e: &EllipticityPair) -> Vec<NodeCoeffs> {
        let (l, big) = (e.lambda(), e.Lambda());
        let at_origin = l + (big - l) / self.dim as f64;
        self.nodes
            .iter()
            .map(|n| match n {
                NodeHessian::Meridian { .. } => NodeCoeffs::Meridian { arr: big, art: 0.0, att: l, app: l },
                NodeHessian::Origin { .. } => NodeCoeffs::Origin { axx: at_origin, azz: at_origin },
                NodeHessian::Boundary => NodeCoeffs::Boundary,
            })
            .collect()
    }

    /// The maximizing coefficients of `M⁺` for the current `u`: weight `Λ`
    /// on eigen-directions with positive eigenvalue, `λ` otherwise.
    pub fn pucci_plus_policy(&self, u: &[f64], e: &EllipticityPair) -> Vec<NodeCoeffs> {
        self.extremal_policy(u, e, true)
    }

    /// The minimizing coefficients of `M⁻`.
    pub fn pucci_minus_policy(&self, u: &[f64], e: &EllipticityPair) -> Vec<NodeCoeffs> {
        self.extremal_policy(u, e, false)
    }

    fn extremal_policy(&self, u: &[f64], e: &EllipticityPair, plus: bool) -> Vec<NodeCoeffs> {
        let w = |x: f64| if (x > 0.0) == plus { e.Lambda() } else { e.lambda() };
        self.nodes
            .iter()
            .enumerate()
            .map(|(k, n)| match n {
                NodeHessian::Meridian { rr, rt, tt, pp } => {
                    let (e1, e2, (c, s)) = sym2_eigen(rr.eval_rel(u, k), rt.eval_rel(u, k), tt.eval_rel(u, k));
                    let (a1, a2) = (w(e1), w(e2));
                    // A = a1 q1 q1ᵀ + a2 q2 q2ᵀ with q1 = (c, s), q2 = (-s, c)
                    NodeCoeffs::Meridian {
                        arr: a1 * c * c + a2 * s * s,
                        art: (a1 - a2) * c * s,
                        att: a1 * s * s + a2 * c * c,
                        app: w(pp.eval_rel(u, k)),
                    }
                }
                NodeHessian::Origin { xx, zz } => NodeCoeffs::Origin { axx: w(xx.eval_rel(u, k)), azz: w(zz.eval_rel(u, k)) },
                NodeHessian::Boundary => NodeCoeffs::Boundary,
            })
            .collect()
    }

    /// Sign pattern of the Hessian eigenvalues, the discrete state of a
    /// policy.
    pub fn sign_pattern(&self, u: &[f64]) -> Vec<bool> {
        (0..self.len()).flat_map(|k| self.eigenvalues(k, u).into_iter().map(|x| x > 0.0)).collect()
    }

    /// `tr(A D²u)` at every node (0 on the boundary).
    pub fn apply(&self, coeffs: &[NodeCoeffs], u: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|k| self.apply_node(k, &coeffs[k], u)).collect()
    }
}

/// Eigenvalues `e1 >= e2` of `[[a, b], [b, d]]` and the unit eigenvector
/// `(c, s)` of `e1`.
pub fn sym2_eigen(a: f64, b: f64, d: f64) -> (f64, f64, (f64, f64)) {
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let rad = half.hypot(b);
    let (e1, e2) = (mean + rad, mean - rad);
    if rad == 0.0 {
        return (e1, e2, (1.0, 0.0));
    }
    // angle of the leading eigenvector: tan 2φ = 2b/(a-d)
    let phi = 0.5 * b.atan2(half);
    (e1, e2, phi.cos_sin())
}

trait CosSin {
    fn cos_sin(self) -> (f64, f64);
}

impl CosSin for f64 {
    fn cos_sin(self) -> (f64, f64) {
        let (s, c) = self.sin_cos();
        (c, s)
    }
}

/// Column of node `(i, j)` with the symmetry conditions applied: `i = 0`
/// is the origin and angular neighbours beyond the poles mirror back.
fn neighbour(grid: &MeridianGrid, i: usize, j: isize) -> usize {
    let j = if j < 0 {
        (-1 - j) as usize
    } else if j as usize >= grid.ntheta {
        2 * grid.ntheta - 1 - j as usize
    } else {
        j as usize
    };
    grid.index(i, j)
}

fn interior_hessian(grid: &MeridianGrid, i: usize, j: usize) -> NodeHessian {
    let (hs, ht) = (grid.hs(), grid.htheta());
    let s = grid.s(i);
    let theta = grid.theta(j);
    let (rho, d1, d2) = grid.rho(j);
    let r = s * rho;
    let jj = j as isize;
    let at = |di: isize, dj: isize| neighbour(grid, (i as isize + di) as usize, jj + dj);

    let mut us = LinearForm::default();
    us.push(at(1, 0), 0.5 / hs);
    us.push(at(-1, 0), -0.5 / hs);
    let mut uss = LinearForm::default();
    uss.push(at(1, 0), 1.0 / (hs * hs));
    uss.push(at(0, 0), -2.0 / (hs * hs));
    uss.push(at(-1, 0), 1.0 / (hs * hs));
    let mut ut = LinearForm::default();
    ut.push(at(0, 1), 0.5 / ht);
    ut.push(at(0, -1), -0.5 / ht);
    let mut utt = LinearForm::default();
    utt.push(at(0, 1), 1.0 / (ht * ht));
    utt.push(at(0, 0), -2.0 / (ht * ht));
    utt.push(at(0, -1), 1.0 / (ht * ht));
    let mut ust = LinearForm::default();
    let q = 0.25 / (hs * ht);
    ust.push(at(1, 1), q);
    ust.push(at(1, -1), -q);
    ust.push(at(-1, 1), -q);
    ust.push(at(-1, -1), q);

    // s = r/ρ(θ): s_θ = -a, s_θθ = -b at fixed r
    let a = s * d1 / rho;
    let b = s * (d2 / rho - 2.0 * d1 * d1 / (rho * rho));
    let cot = theta.cos() / theta.sin();

    let u_r = LinearForm::combine(&[(1.0 / rho, &us)]);
    let u_t = LinearForm::combine(&[(1.0, &ut), (-a, &us)]);
    let u_rr = LinearForm::combine(&[(1.0 / (rho * rho), &uss)]);
    let u_rt = LinearForm::combine(&[(1.0 / rho, &ust), (-a / rho, &uss), (-d1 / (rho * rho), &us)]);
    let u_tt = LinearForm::combine(&[(1.0, &utt), (-2.0 * a, &ust), (a * a, &uss), (-b, &us)]);

    let rt = LinearForm::combine(&[(1.0 / r, &u_rt), (-1.0 / (r * r), &u_t)]);
    let tt = LinearForm::combine(&[(1.0 / (r * r), &u_tt), (1.0 / r, &u_r)]);
    let pp = LinearForm::combine(&[(1.0 / r, &u_r), (cot / (r * r), &u_t)]);
    NodeHessian::Meridian { rr: u_rr, rt, tt, pp }
}

/// Fits `u(x) - u(0) ≈ u_z z + (u_xx |x_⊥|² + u_zz z²)/2` to the first ring
/// by least squares with the spherical weights `sin^{N-2} θ`.
fn origin_hessian(grid: &MeridianGrid) -> NodeHessian {
    let n = grid.dim();
    let h = grid.hs();
    let mut normal = Matrix3::<f64>::zeros();
    let mut rows = Vec::with_capacity(grid.ntheta);
    for j in 0..grid.ntheta {
        let t = grid.theta(j);
        let r = h * grid.rho(j).0;
        let (st, ct) = t.sin_cos();
        let w = st.powi(n as i32 - 2);
        let basis = nalgebra::Vector3::new(r * ct, 0.5 * r * r * st * st, 0.5 * r * r * ct * ct);
        normal += w * basis * basis.transpose();
        rows.push((grid.index(1, j), w, basis));
    }
    let inv = normal.try_inverse().expect("first ring spans the quadratic fit");
    let mut xx = LinearForm::default();
    let mut zz = LinearForm::default();
    for (col, w, basis) in rows {
        let coef = inv * (w * basis);
        xx.push(col, coef[1]);
        xx.push(0, -coef[1]);
        zz.push(col, coef[2]);
        zz.push(0, -coef[2]);
    }
    NodeHessian::Origin { xx, zz }
}

/// Sparse `Q⁺` on the grid with identity rows on the boundary.
pub fn discretize_q_plus(grid: &MeridianGrid, e: &EllipticityPair) -> CsrMatrix {
    let st = HessianStencils::new(grid);
    st.assemble(&st.q_plus_coeffs(e))
}

/// `M⁺(D²_h u)` at every node (0 on the boundary).
pub fn pucci_fd_apply(grid: &MeridianGrid, u: &[f64], e: &EllipticityPair) -> Vec<f64> {
    let st = HessianStencils::new(grid);
    st.apply(&st.pucci_plus_policy(u, e), u)
}

/// `M⁻(D²_h u)` at every node (0 on the boundary).
pub fn pucci_minus_fd_apply(grid: &MeridianGrid, u: &[f64], e: &EllipticityPair) -> Vec<f64> {
    let st = HessianStencils::new(grid);
    st.apply(&st.pucci_minus_policy(u, e), u)
}

/// Samples `f(r, θ)` (physical polar coordinates) at every node.
pub fn sample(grid: &MeridianGrid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let (r, t) = grid.physical(k);
            f(r, t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::grid::{build_grid, PerturbedBall, Shape};

    fn pair() -> EllipticityPair {
        EllipticityPair::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn sym2_eigen_examples() {
        let (e1, e2, (c, s)) = sym2_eigen(2.0, 1.0, 2.0);
        assert!((e1 - 3.0).abs() < 1e-15 && (e2 - 1.0).abs() < 1e-15);
        assert!((c - s).abs() < 1e-15);
        let (e1, e2, (c, s)) = sym2_eigen(-1.0, 0.0, 4.0);
        assert_eq!((e1, e2), (4.0, -1.0));
        assert!(c.abs() < 1e-15 && (s.abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_has_identity_hessian_on_ball() {
        for dim in [3, 4] {
            let g = build_grid(&PerturbedBall::ball(dim).unwrap(), 16, 16).unwrap();
            let u = sample(&g, |r, _| 0.5 * r * r);
            let st = HessianStencils::new(&g);
            for k in 0..g.len() {
                if g.is_boundary(k) {
                    continue;
                }
                for x in st.eigenvalues(k, &u) {
                    assert!((x - 1.0).abs() < 1e-9, "node {k}: {x}");
                }
            }
            let m = pucci_fd_apply(&g, &u, &pair());
            assert!((m[5] - 2.0 * dim as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn q_plus_of_paraboloid() {
        let g = build_grid(&PerturbedBall::ball(3).unwrap(), 16, 16).unwrap();
        let u = sample(&g, |r, _| 1.0 - r * r);
        let lu = discretize_q_plus(&g, &pair()).matvec(&u);
        for k in 0..g.len() {
            if !g.is_boundary(k) {
                assert!((lu[k] + 8.0).abs() < 1e-8, "node {k}: {}", lu[k]);
            }
        }
    }

    #[test]
    fn isotropic_q_plus_is_scaled_laplacian() {
        let g = build_grid(&PerturbedBall::new(3, 0.1, Shape::Cos(3)).unwrap(), 16, 16).unwrap();
        let a = discretize_q_plus(&g, &EllipticityPair::isotropic(1.5).unwrap());
        let b = discretize_q_plus(&g, &EllipticityPair::isotropic(1.0).unwrap());
        for k in 0..g.len() {
            if g.is_boundary(k) {
                continue;
            }
            for (c, v) in a.row(k) {
                assert!((v - 1.5 * b.get(k, c)).abs() < 1e-9 * v.abs().max(1.0));
            }
        }
    }
}
