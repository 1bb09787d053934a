//! Shared generators and checks for the integration and acceptance suites.
#![allow(dead_code)]

use std::cell::Cell;

use nalgebra::Complex;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use zerostealth::attack::ThresholdSpec;
use zerostealth::lifting::{build_phi_star, LiftedCluster};
use zerostealth::numlin::{
    kernel_basis, mat_exp, min_norm_solve, zoh_pair, Matrix, Tolerances, Vector,
};
use zerostealth::plant::{LtiSystem, Rational, TimingGrid};
use zerostealth::scenario::Scenario;
use zerostealth::sim::simulate_holds;

/// Base seed for every randomized suite; override with `ZEROSTEALTH_SEED`.
pub fn base_seed() -> u64 {
    std::env::var("ZEROSTEALTH_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(20_240_611)
}

pub fn rng(offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base_seed().wrapping_add(offset))
}

pub fn runner(cases: u32, offset: u64) -> TestRunner {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&base_seed().wrapping_add(offset).to_le_bytes());
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::from_seed(RngAlgorithm::ChaCha, &seed),
    )
}

pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let d = (a - b).norm();
    let s = a.norm().max(b.norm());
    if s < 1e-14 {
        d
    } else {
        d / s
    }
}

pub fn rel_err_v(a: &Vector, b: &Vector) -> f64 {
    let d = (a - b).norm();
    let s = a.norm().max(b.norm());
    if s < 1e-14 {
        d
    } else {
        d / s
    }
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0) * scale)
}

/// Random plant, coprime `(α, β) <= (6, 6)`, offset with `δ ∈ [0, 1)` on a
/// 1/16 lattice. `A` has a mild negative shift so traces stay moderate.
pub struct RandomCase {
    pub sys: LtiSystem,
    pub grid: TimingGrid,
    pub t_a: f64,
    pub t_s: f64,
    pub offset: f64,
}

/// Shifts `a` so its spectral abscissa is `-margin`.
pub fn make_hurwitz(a: &mut Matrix, margin: f64) {
    let abscissa = a
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = abscissa + margin;
    for i in 0..a.nrows() {
        a[(i, i)] -= shift;
    }
}

/// Like [`random_case`] but with a Hurwitz `A` (spectral abscissa in
/// `[-0.5, -0.05]`).
pub fn random_stable_case(rng: &mut impl Rng) -> RandomCase {
    let mut case = random_case(rng);
    let mut a = case.sys.a().clone();
    make_hurwitz(&mut a, rng.gen_range(0.05..0.5));
    case.sys = LtiSystem::new(a, case.sys.b().clone(), case.sys.c().clone()).unwrap();
    case
}

pub fn random_case(rng: &mut impl Rng) -> RandomCase {
    let n = rng.gen_range(1..=6);
    let p = rng.gen_range(1..=3);
    let q = rng.gen_range(1..=2);
    let (alpha, beta) = loop {
        let a = rng.gen_range(1..=6i64);
        let b = rng.gen_range(1..=6i64);
        if *Rational::new(a, b).denom() == b {
            break (a, b);
        }
    };
    let t_a = [0.25, 0.5, 1.0][rng.gen_range(0..3)];
    let t_s = t_a * beta as f64 / alpha as f64;
    let offset = t_s * rng.gen_range(0..16) as f64 / 16.0;
    let mut a = random_matrix(rng, n, n, 0.8);
    for i in 0..n {
        a[(i, i)] -= 0.3;
    }
    let b = random_matrix(rng, n, p, 1.0);
    let c = random_matrix(rng, q, n, 1.0);
    let sys = LtiSystem::new(a, b, c).unwrap();
    let grid = TimingGrid::new(t_a, t_s, offset).unwrap();
    assert_eq!((grid.alpha() as i64, grid.beta() as i64), (alpha, beta));
    RandomCase {
        sys,
        grid,
        t_a,
        t_s,
        offset,
    }
}

pub fn scenario_of(case: &RandomCase, clusters: usize) -> Scenario {
    let mut sc = Scenario::random(0);
    sc.name = "random-case".into();
    sc.system = zerostealth::scenario::SystemSpec::from_system(&case.sys);
    sc.timing.t_a = case.t_a;
    sc.timing.t_s = case.t_s;
    sc.timing.offset = case.offset;
    sc.thresholds = ThresholdSpec::Linear { slope: 1.0 };
    sc.clusters = clusters;
    sc
}

/// Worst relative mismatch between the lifted predictions and the
/// simulator over `clusters` clusters of random holds.
pub fn lifted_vs_simulator(case: &RandomCase, rng: &mut impl Rng, clusters: usize) -> f64 {
    let (sys, grid) = (&case.sys, &case.grid);
    let lifted = LiftedCluster::build(sys, grid).unwrap();
    let beta = grid.beta();
    let i = rng.gen_range(1..=2 * beta as i64);
    let t_star = Rational::new(i, 2 * beta as i64);
    let spec = build_phi_star(sys, grid, t_star).unwrap();

    let holds: Vec<Vector> = (0..clusters * beta)
        .map(|_| Vector::from_fn(sys.p(), |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let t_k: Vec<f64> = (1..=clusters)
        .map(|k| {
            grid.seconds(Rational::from_integer(((k - 1) * beta) as i64) + spec.offset_ticks(beta))
        })
        .collect();
    let trace = simulate_holds(sys, grid, &holds, &t_k, 3).unwrap();
    let state_at = |t: f64| {
        trace.x[trace
            .index_of(t)
            .unwrap_or_else(|| panic!("no grid point at {t}"))]
        .clone()
    };

    let mut worst = 0.0f64;
    let mut x_c = Vector::zeros(sys.n());
    for k in 1..=clusters {
        let a_k = Vector::from_iterator(
            beta * sys.p(),
            holds[(k - 1) * beta..k * beta]
                .iter()
                .flat_map(|h| h.iter().cloned()),
        );
        let pred = lifted.predict_cluster(&x_c, &a_k).unwrap();
        for (l, (_, ticks)) in grid.schedule(k).sensing.iter().enumerate() {
            let sim = state_at(grid.seconds(*ticks));
            let lifted_x = pred.x_stack.rows(l * sys.n(), sys.n()).into_owned();
            worst = worst.max(rel_err_v(&lifted_x, &sim));
            let y_sim = sys.c() * &sim;
            let y_lift = pred.y_stack.rows(l * sys.q(), sys.q()).into_owned();
            worst = worst.max(rel_err_v(&y_lift, &y_sim));
        }
        let xa = spec.predict_disruption(&x_c, &a_k).unwrap();
        worst = worst.max(rel_err_v(&xa, &state_at(t_k[k - 1])));
        let end = grid.seconds(Rational::from_integer((k * beta) as i64));
        worst = worst.max(rel_err_v(&pred.x_c_next, &state_at(end)));
        x_c = pred.x_c_next;
    }
    worst
}

/// `C (sI − A)^{-1} B` evaluated in complex arithmetic.
pub fn transfer(sys: &LtiSystem, s: Complex<f64>) -> nalgebra::DMatrix<Complex<f64>> {
    let n = sys.n();
    let to_c = |m: &Matrix| m.map(|v| Complex::new(v, 0.0));
    let si_a = nalgebra::DMatrix::<Complex<f64>>::identity(n, n) * s - to_c(sys.a());
    let x = si_a
        .lu()
        .solve(&to_c(sys.b()))
        .expect("s is not an eigenvalue");
    to_c(sys.c()) * x
}

/// Checks `e^{As} e^{At} = e^{A(s+t)}` on random `A` (n <= 8) with norm
/// around one and `s, t ∈ [−2, 2]`.
pub fn check_expm_semigroup(cases: u32, offset: u64) -> Result<f64, String> {
    let worst = Cell::new(0.0f64);
    let strat = (1usize..=8, -2.0f64..2.0, -2.0f64..2.0, any::<u64>());
    runner(cases, offset)
        .run(&strat, |(n, s, t, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut r, n, n, 1.0 / (n as f64).sqrt());
            let lhs = mat_exp(&a, s).unwrap() * mat_exp(&a, t).unwrap();
            let rhs = mat_exp(&a, s + t).unwrap();
            let e = rel_err(&lhs, &rhs);
            worst.set(worst.get().max(e));
            prop_assert!(e <= 1e-10, "relative error {e:e}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(worst.get())
}

/// Checks `Bd(a + b) = Bd(b) + e^{Ab} Bd(a)`.
pub fn check_zoh_additivity(cases: u32, offset: u64) -> Result<f64, String> {
    let worst = Cell::new(0.0f64);
    let strat = (
        1usize..=6,
        1usize..=3,
        0.0f64..2.0,
        0.0f64..2.0,
        any::<u64>(),
    );
    runner(cases, offset)
        .run(&strat, |(n, p, ta, tb, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let a = random_matrix(&mut r, n, n, 1.0 / (n as f64).sqrt());
            let b = random_matrix(&mut r, n, p, 1.0);
            let (_, bd_ab) = zoh_pair(&a, &b, ta + tb).unwrap();
            let (_, bd_a) = zoh_pair(&a, &b, ta).unwrap();
            let (ad_b, bd_b) = zoh_pair(&a, &b, tb).unwrap();
            let e = rel_err(&bd_ab, &(bd_b + ad_b * bd_a));
            worst.set(worst.get().max(e));
            prop_assert!(e <= 1e-10, "relative error {e:e}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(worst.get())
}

/// Random matrix of prescribed rank with entries of order one.
fn random_low_rank(r: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    random_matrix(r, rows, rank, 1.0) * random_matrix(r, rank, cols, 1.0)
}

/// Kernel bases satisfy `‖MV‖_F <= residual_atol` and `VᵀV = I` to 1e−12.
pub fn check_kernel_orthonormal(cases: u32, offset: u64) -> Result<(f64, f64), String> {
    let tol = Tolerances::default();
    let (worst_res, worst_orth) = (Cell::new(0.0f64), Cell::new(0.0f64));
    let strat = (1usize..=8, 1usize..=10, any::<u64>());
    runner(cases, offset)
        .run(&strat, |(rows, cols, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let rank = r.gen_range(0..=rows.min(cols));
            let m = random_low_rank(&mut r, rows, cols, rank);
            let v = kernel_basis(&m, &tol).unwrap();
            prop_assert_eq!(v.ncols(), cols - rank);
            let res = (&m * &v).norm();
            let orth = (v.transpose() * &v - Matrix::identity(v.ncols(), v.ncols())).amax();
            worst_res.set(worst_res.get().max(res));
            worst_orth.set(worst_orth.get().max(orth));
            prop_assert!(res <= tol.residual_atol, "‖MV‖ = {res:e}");
            prop_assert!(orth <= 1e-12, "‖VᵀV − I‖ = {orth:e}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok((worst_res.get(), worst_orth.get()))
}

/// Minimum-norm solutions are orthogonal to `ker M` and solve consistent
/// systems.
pub fn check_min_norm(cases: u32, offset: u64) -> Result<(f64, f64), String> {
    let tol = Tolerances::default();
    let (worst_inner, worst_res) = (Cell::new(0.0f64), Cell::new(0.0f64));
    let strat = (1usize..=6, 1usize..=10, any::<u64>());
    runner(cases, offset)
        .run(&strat, |(rows, cols, seed)| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let rank = r.gen_range(1..=rows.min(cols));
            let m = random_low_rank(&mut r, rows, cols, rank);
            let x0 = Vector::from_fn(cols, |_, _| r.gen_range(-1.0..1.0));
            let b = &m * &x0;
            let x = min_norm_solve(&m, &b, &tol).unwrap();
            let res = (&m * &x - &b).norm();
            let kernel = kernel_basis(&m, &tol).unwrap();
            let inner = (kernel.transpose() * &x).amax();
            worst_inner.set(worst_inner.get().max(inner));
            worst_res.set(worst_res.get().max(res));
            prop_assert!(inner <= 1e-10, "⟨x, ker M⟩ = {inner:e}");
            prop_assert!(res <= 1e-10 * b.norm().max(1.0), "residual {res:e}");
            prop_assert!(x.norm() <= x0.norm() * (1.0 + 1e-12));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok((worst_inner.get(), worst_res.get()))
}
