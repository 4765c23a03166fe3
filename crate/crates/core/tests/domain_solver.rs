use nalgebra::{Matrix3, SymmetricEigen};
use pucci_core::domain::discrete::sample;
use pucci_core::domain::io::{read_solution, write_solution};
use pucci_core::domain::sparse::{BandedLu, CsrMatrix};
use pucci_core::domain::*;
use pucci_core::operators::EllipticityPair;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pair() -> EllipticityPair {
    EllipticityPair::new(1.0, 2.0).unwrap()
}

fn grid(dim: usize, eps: f64, shape: Shape, nr: usize, nt: usize) -> MeridianGrid {
    build_grid(&PerturbedBall::new(dim, eps, shape).unwrap(), nr, nt).unwrap()
}

/// Axisymmetric test function `f(ρ, z) = exp(-(aρ² + bz²)) + cz` with
/// `ρ` the distance to the axis, and its derivatives
/// `(f_ρρ, f_ρz, f_zz, f_ρ/ρ)`.
struct Gaussian {
    a: f64,
    b: f64,
    c: f64,
}

impl Gaussian {
    fn value(&self, rho: f64, z: f64) -> f64 {
        (-(self.a * rho * rho + self.b * z * z)).exp() + self.c * z
    }

    fn second(&self, rho: f64, z: f64) -> (f64, f64, f64, f64) {
        let e = (-(self.a * rho * rho + self.b * z * z)).exp();
        let (a, b) = (self.a, self.b);
        (
            (-2.0 * a + 4.0 * a * a * rho * rho) * e,
            4.0 * a * b * rho * z * e,
            (-2.0 * b + 4.0 * b * b * z * z) * e,
            -2.0 * a * e,
        )
    }

    /// `λΔf + (Λ-λ) x̂ᵀD²f x̂` in dimension `n`; at the origin the radial
    /// second derivative is replaced by its directional average `Δf/n`.
    fn q_plus(&self, r: f64, theta: f64, n: usize, e: &EllipticityPair) -> f64 {
        let (rho, z) = (r * theta.sin(), r * theta.cos());
        let (frr, frz, fzz, fr_over) = self.second(rho, z);
        let lap = frr + fzz + (n as f64 - 2.0) * fr_over;
        let radial = if r == 0.0 {
            lap / n as f64
        } else {
            let (s, c) = theta.sin_cos();
            s * s * frr + 2.0 * s * c * frz + c * c * fzz
        };
        e.lambda() * lap + (e.Lambda() - e.lambda()) * radial
    }
}

/// `-L` on interior rows and the identity on boundary rows.
fn dirichlet_matrix(g: &MeridianGrid, e: &EllipticityPair) -> CsrMatrix {
    let l = discretize_q_plus(g, e);
    let rows = (0..l.n())
        .map(|i| {
            let sign = if g.is_boundary(i) { 1.0 } else { -1.0 };
            l.row(i).map(|(c, v)| (c, sign * v)).collect()
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

#[test]
fn assembled_q_plus_has_nonnegative_inverse() {
    for eps in [0.0, 0.05] {
        let g = grid(3, eps, Shape::Cos(2), 16, 16);
        let lu = BandedLu::factor(&dirichlet_matrix(&g, &pair())).unwrap();
        let n = g.len();
        let mut worst = 0.0_f64;
        let mut largest = 0.0_f64;
        for col in 0..n {
            let mut x = vec![0.0; n];
            x[col] = 1.0;
            lu.solve(&mut x).unwrap();
            for v in x {
                worst = worst.min(v);
                largest = largest.max(v);
            }
        }
        assert!(worst >= -1e-12 * largest, "eps={eps}: inverse entry {worst:e}");
    }
}

#[test]
fn nonpositive_source_gives_nonnegative_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = grid(3, 0.05, Shape::Cos(2), 32, 16);
    let l = discretize_q_plus(&g, &pair());
    let lu = BandedLu::factor(&l).unwrap();
    for _ in 0..5 {
        let mut u: Vec<f64> = (0..g.len()).map(|k| if g.is_boundary(k) { 0.0 } else { -rng.gen::<f64>() }).collect();
        lu.solve(&mut u).unwrap();
        assert!(u.iter().all(|&v| v >= -1e-14));
    }
}

#[test]
fn paraboloid_is_reproduced_on_the_ball() {
    let e = pair();
    for n in [3usize, 4] {
        let g = grid(n, 0.0, Shape::Cos(2), 16, 16);
        let u = sample(&g, |r, _| 1.0 - r * r);
        let lu = discretize_q_plus(&g, &e).matvec(&u);
        let expected = -2.0 * e.lambda() * n as f64 - 2.0 * (e.Lambda() - e.lambda());
        for k in (0..g.len()).filter(|&k| !g.is_boundary(k)) {
            assert!((lu[k] - expected).abs() < 1e-9, "N={n} node {k}: {}", lu[k]);
        }
    }
}

#[test]
fn equal_constants_give_scaled_laplacian() {
    let g = grid(3, 0.05, Shape::Bump, 16, 16);
    let iso = discretize_q_plus(&g, &EllipticityPair::isotropic(1.5).unwrap());
    let unit = discretize_q_plus(&g, &EllipticityPair::isotropic(1.0).unwrap());
    for k in (0..g.len()).filter(|&k| !g.is_boundary(k)) {
        for (c, v) in iso.row(k) {
            assert!((v - 1.5 * unit.get(k, c)).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}

/// Solves `L_h u_h = Q⁺u` with `u_h = u` on the boundary ring and returns
/// `max |u_h - u|`.
fn manufactured_error(n: usize, nr: usize, nt: usize) -> f64 {
    let e = pair();
    let f = Gaussian { a: 0.7, b: 1.3, c: 0.4 };
    let g = grid(n, 0.1, Shape::Cos(2), nr, nt);
    let exact = sample(&g, |r, t| f.value(r * t.sin(), r * t.cos()));
    let mut rhs: Vec<f64> = (0..g.len())
        .map(|k| {
            if g.is_boundary(k) {
                exact[k]
            } else {
                let (r, t) = g.physical(k);
                f.q_plus(r, t, n, &e)
            }
        })
        .collect();
    BandedLu::factor(&discretize_q_plus(&g, &e)).unwrap().solve(&mut rhs).unwrap();
    rhs.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

#[test]
fn manufactured_solution_converges_at_second_order() {
    for n in [3usize, 4] {
        let errs: Vec<f64> = [(16, 16), (32, 32), (64, 64)].iter().map(|&(a, b)| manufactured_error(n, a, b)).collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order > 1.8, "N={n}: errors {errs:?}");
        }
    }
}

/// Eigenvalues of the 3D Cartesian central-difference Hessian of `f` at
/// `(ρ, 0, z)`.
fn cartesian_hessian_eigs(f: &Gaussian, rho: f64, z: f64, h: f64) -> Vec<f64> {
    let u = |p: [f64; 3]| f.value((p[0] * p[0] + p[1] * p[1]).sqrt(), p[2]);
    let x = [rho, 0.0, z];
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let shift = |di: f64, dj: f64| {
                let mut p = x;
                p[i] += di;
                p[j] += dj;
                u(p)
            };
            m[(i, j)] = (shift(h, h) - shift(h, -h) - shift(-h, h) + shift(-h, -h)) / (4.0 * h * h);
        }
    }
    let mut eigs: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eigs
}

fn hessian_error(nr: usize, nt: usize, nodes: &[(f64, f64)]) -> f64 {
    let f = Gaussian { a: 0.9, b: 0.5, c: -0.3 };
    let g = grid(3, 0.05, Shape::Cos(3), nr, nt);
    let st = HessianStencils::new(&g);
    let u = sample(&g, |r, t| f.value(r * t.sin(), r * t.cos()));
    let mut worst = 0.0_f64;
    for &(s, t) in nodes {
        let i = (s * nr as f64).round() as usize;
        let j = ((t * nt as f64).floor() as usize).min(nt - 1);
        let k = g.index(i, j);
        let (x, z) = g.cartesian(k);
        let mut eigs = st.eigenvalues(k, &u);
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = cartesian_hessian_eigs(&f, x, z, 1e-4);
        for (a, b) in eigs.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[test]
fn meridian_hessian_matches_cartesian_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // 20 sample points in (s, θ/π), away from the boundary ring
    let nodes: Vec<(f64, f64)> = (0..20).map(|_| (rng.gen_range(0.1..0.9), rng.gen_range(0.0..1.0))).collect();
    let coarse = hessian_error(32, 32, &nodes);
    let fine = hessian_error(64, 64, &nodes);
    assert!(fine < 1e-2, "fine error {fine:e}");
    assert!(coarse / fine > 3.0, "errors {coarse:e} -> {fine:e}");
}

#[test]
fn q_plus_application_lies_between_discrete_extremals() {
    let e = pair();
    let g = grid(3, 0.1, Shape::Bump, 32, 16);
    let f = Gaussian { a: 1.1, b: 0.4, c: 0.2 };
    let u = sample(&g, |r, t| f.value(r * t.sin(), r * t.cos()) * (1.0 - r * r));
    let q = discretize_q_plus(&g, &e).matvec(&u);
    let plus = pucci_fd_apply(&g, &u, &e);
    let minus = pucci_minus_fd_apply(&g, &u, &e);
    for k in (0..g.len()).filter(|&k| !g.is_boundary(k)) {
        let tol = 1e-9 * (1.0 + q[k].abs());
        assert!(minus[k] <= q[k] + tol && q[k] <= plus[k] + tol, "node {k}: {} {} {}", minus[k], q[k], plus[k]);
    }
}

#[test]
fn half_square_has_unit_hessian() {
    let e = pair();
    let g = grid(3, 0.0, Shape::Cos(2), 16, 16);
    let u = sample(&g, |r, _| 0.5 * r * r);
    let out = pucci_fd_apply(&g, &u, &e);
    for k in (0..g.len()).filter(|&k| !g.is_boundary(k)) {
        assert!((out[k] - 3.0 * e.Lambda()).abs() < 1e-9, "node {k}: {}", out[k]);
    }
}

#[test]
fn large_amplitude_grid_is_rejected_or_valid() {
    let dom = PerturbedBall::new(3, 0.9, Shape::Cos(6)).unwrap();
    match build_grid(&dom, 32, 32) {
        Err(DomainError::GridFailure { epsilon, .. }) => assert_eq!(epsilon, 0.9),
        Ok(g) => assert!((0..g.ntheta).all(|j| g.rho(j).0 > 0.0)),
        Err(other) => panic!("unexpected error {other}"),
    }
    assert!(matches!(
        build_grid(&PerturbedBall::new(3, 1.2, Shape::Cos(2)).unwrap(), 16, 16),
        Err(DomainError::GridFailure { .. })
    ));
}

#[test]
fn solution_file_roundtrip() {
    let e = pair();
    let g = grid(3, 0.05, Shape::Cos(2), 16, 16);
    let u0 = radial_baseline(OperatorKind::QPlus, 3, &e, 3.0).unwrap();
    let sol = solve_semilinear(&g, OperatorKind::QPlus, &e, 3.0, &radial_seed(&g, &u0), &SolveOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_solution(&sol, &[("note".into(), "roundtrip".into())], &mut buf).unwrap();
    let (header, rows) = read_solution(buf.as_slice()).unwrap();
    assert_eq!(header["kind"], "q_plus");
    assert_eq!(header["shape"], "cos2");
    assert_eq!(header["note"], "roundtrip");
    assert_eq!(header["epsilon"].parse::<f64>().unwrap(), 0.05);
    assert_eq!(rows.len(), g.len());
    for (k, row) in rows.iter().enumerate() {
        let (r, t) = g.physical(k);
        assert_eq!(*row, [r, t, sol.values[k]]);
    }
}

#[test]
fn zero_amplitude_continuation_reproduces_the_ball_solve() {
    let e = pair();
    let spec = ContinuationSpec {
        dim: 3,
        shape: Shape::Cos(2),
        kind: OperatorKind::QPlus,
        e,
        p: 4.0,
        nr: 32,
        ntheta: 16,
    };
    let c = continuation_in_epsilon(&spec, &[0.0], &SolveOptions::default()).unwrap();
    let g = grid(3, 0.0, Shape::Cos(2), 32, 16);
    let direct = solve_semilinear(&g, OperatorKind::QPlus, &e, 4.0, &radial_seed(&g, &c.baseline), &SolveOptions::default()).unwrap();
    assert_eq!(c.solutions[0].values, direct.values);
    assert!(c.deltas[0] < 1e-2);
}

#[test]
fn pucci_continuation_deviation_decreases() {
    let spec = ContinuationSpec {
        dim: 4,
        shape: Shape::Cos(2),
        kind: OperatorKind::PucciPlus,
        e: pair(),
        p: 4.0,
        nr: 32,
        ntheta: 32,
    };
    let c = continuation_in_epsilon(&spec, &[0.1, 0.05, 0.025], &SolveOptions::default()).unwrap();
    assert!(c.delta_decreasing, "deltas {:?}", c.deltas);
    for s in &c.solutions {
        assert!(s.residual_norm <= 1e-8 && s.min_interior() > 0.0);
    }
}

#[test]
fn supercritical_exponent_gives_no_positive_solution() {
    // Ñ₊ = 2.5 for N = 4 and Λ = 2λ, so radial solutions exist only for p < 9
    let e = pair();
    let g = grid(4, 0.0, Shape::Cos(2), 32, 16);
    let seed_profile = radial_baseline(OperatorKind::QPlus, 4, &e, 8.0).unwrap();
    let seed = radial_seed(&g, &seed_profile);
    let out = solve_semilinear(&g, OperatorKind::QPlus, &e, 12.0, &seed, &SolveOptions::default());
    match out {
        Err(err) => assert!(err.is_solver_failure(), "{err}"),
        Ok(sol) => panic!("converged to a positive solution with max {:e}", sol.max_value()),
    }
}
