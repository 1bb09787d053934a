//! Cluster-lifted description of the multirate error dynamics.
//!
//! One cluster spans `β` holds and `α` samples. Stacking the holds
//! `ā⟨k⟩ ∈ ℝ^{βp}` and the sampled states `x̃⟨k⟩ ∈ ℝ^{αn}` turns the multirate
//! system into the time-invariant recursion
//!
//! ```text
//! x̃⟨k⟩    = Ā_α x̃_c[k−1] + Π ā⟨k⟩
//! x̃_c[k]  = A_d^β x̃_c[k−1] + Φ_c ā⟨k⟩
//! x̃_a[k]  = Ā* x̃_c[k−1] + Φ* ā⟨k⟩
//! ```

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::numlin::{mat_exp, Matrix, Vector};
use crate::plant::{
    ad_block, bd_block, discretize, shifted_index, LtiSystem, Rational, TimingGrid,
};

#[derive(Debug, Clone)]
pub struct LiftedCluster {
    grid: TimingGrid,
    ad: Matrix,
    bd: Matrix,
    pi: Matrix,
    phi_c: Matrix,
    abar_alpha: Matrix,
    ad_beta: Matrix,
    /// `I_α ⊗ C`
    c_stack: Matrix,
    c_pi: Matrix,
    c_abar_alpha: Matrix,
}

impl LiftedCluster {
    pub fn build(sys: &LtiSystem, grid: &TimingGrid) -> Result<Self> {
        let (ad, bd) = discretize(sys, grid)?;
        let pi = build_pi(sys, grid)?;
        let phi_c = build_phi_c(sys, grid)?;
        let abar_alpha = build_abar_alpha(sys, grid)?;
        let ad_beta = ad.pow(grid.beta() as u32);
        let c_stack = Matrix::identity(grid.alpha(), grid.alpha()).kronecker(sys.c());
        let c_pi = &c_stack * &pi;
        let c_abar_alpha = &c_stack * &abar_alpha;
        Ok(Self {
            grid: grid.clone(),
            ad,
            bd,
            pi,
            phi_c,
            abar_alpha,
            ad_beta,
            c_stack,
            c_pi,
            c_abar_alpha,
        })
    }

    pub fn grid(&self) -> &TimingGrid {
        &self.grid
    }
    pub fn ad(&self) -> &Matrix {
        &self.ad
    }
    pub fn bd(&self) -> &Matrix {
        &self.bd
    }
    pub fn pi(&self) -> &Matrix {
        &self.pi
    }
    pub fn phi_c(&self) -> &Matrix {
        &self.phi_c
    }
    pub fn abar_alpha(&self) -> &Matrix {
        &self.abar_alpha
    }
    pub fn ad_beta(&self) -> &Matrix {
        &self.ad_beta
    }
    pub fn c_stack(&self) -> &Matrix {
        &self.c_stack
    }
    /// `𝒞Π`
    pub fn c_pi(&self) -> &Matrix {
        &self.c_pi
    }
    /// `𝒞Ā_α`
    pub fn c_abar_alpha(&self) -> &Matrix {
        &self.c_abar_alpha
    }
    pub fn n(&self) -> usize {
        self.ad.nrows()
    }
    pub fn p(&self) -> usize {
        self.bd.ncols()
    }
    /// Length of a stacked cluster input, `β p`.
    pub fn input_len(&self) -> usize {
        self.grid.beta() * self.p()
    }

    /// Exact lifted prediction for one cluster.
    pub fn predict_cluster(&self, x_c_prev: &Vector, a_k: &Vector) -> Result<ClusterPrediction> {
        self.check_dims(x_c_prev, a_k)?;
        let x_stack = &self.abar_alpha * x_c_prev + &self.pi * a_k;
        let y_stack = &self.c_stack * &x_stack;
        let x_c_next = &self.ad_beta * x_c_prev + &self.phi_c * a_k;
        Ok(ClusterPrediction {
            x_stack,
            y_stack,
            x_c_next,
        })
    }

    fn check_dims(&self, x_c_prev: &Vector, a_k: &Vector) -> Result<()> {
        if x_c_prev.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "terminal state",
                expected: self.n().to_string(),
                got: x_c_prev.len().to_string(),
            });
        }
        if a_k.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                context: "stacked cluster input",
                expected: self.input_len().to_string(),
                got: a_k.len().to_string(),
            });
        }
        Ok(())
    }
}

/// Stacked sampled states and outputs of one cluster plus its terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPrediction {
    pub x_stack: Vector,
    pub y_stack: Vector,
    pub x_c_next: Vector,
}

/// `Π ∈ ℝ^{αn×βp}`: block `(l, m)` maps hold `m − 1` of the cluster to the
/// state at the `l`-th sample.
pub fn build_pi(sys: &LtiSystem, grid: &TimingGrid) -> Result<Matrix> {
    let (n, p) = (sys.n(), sys.p());
    let (alpha, beta) = (grid.alpha(), grid.beta());
    let (_, bd) = discretize(sys, grid)?;
    let mut pi = Matrix::zeros(alpha * n, beta * p);
    for l in 1..=alpha {
        let l_delta = shifted_index(l as u64, grid.delta())?;
        let last_full = grid.floor_lr(l as u64) as usize;
        let row = (l - 1) * n;
        for m in 1..=last_full.min(beta) {
            let blk = ad_block(sys, grid, l_delta, Rational::from_integer(m as i64))? * &bd;
            pi.view_mut((row, (m - 1) * p), (n, p)).copy_from(&blk);
        }
        if last_full < beta {
            let blk = bd_block(sys, grid, l_delta, Rational::from_integer(last_full as i64))?;
            pi.view_mut((row, last_full * p), (n, p)).copy_from(&blk);
        }
    }
    Ok(pi)
}

/// `Ā_α`: vertical stack of `e^{A l_δ T_s}` for `l = 1..α`.
pub fn build_abar_alpha(sys: &LtiSystem, grid: &TimingGrid) -> Result<Matrix> {
    let n = sys.n();
    let alpha = grid.alpha();
    let mut out = Matrix::zeros(alpha * n, n);
    for l in 1..=alpha {
        let l_delta = shifted_index(l as u64, grid.delta())?;
        let blk = ad_block(sys, grid, l_delta, Rational::zero())?;
        out.view_mut(((l - 1) * n, 0), (n, n)).copy_from(&blk);
    }
    Ok(out)
}

/// `Φ_c = [A_d^{β−1}B_d | A_d^{β−2}B_d | ⋯ | B_d]`.
pub fn build_phi_c(sys: &LtiSystem, grid: &TimingGrid) -> Result<Matrix> {
    let (n, p) = (sys.n(), sys.p());
    let beta = grid.beta();
    let (ad, bd) = discretize(sys, grid)?;
    let mut out = Matrix::zeros(n, beta * p);
    let mut blk = bd;
    for m in (0..beta).rev() {
        out.view_mut((0, m * p), (n, p)).copy_from(&blk);
        blk = &ad * blk;
    }
    Ok(out)
}

/// Matrices describing the error state at the disruption instant
/// `t_k = (k − 1)βT_a + t* βT_a`.
#[derive(Debug, Clone)]
pub struct DisruptionSpec {
    t_star: Rational,
    phi_star: Matrix,
    abar_star: Matrix,
}

impl DisruptionSpec {
    /// Normalized disruption time in `(0, 1]`.
    pub fn t_star(&self) -> Rational {
        self.t_star
    }
    pub fn phi_star(&self) -> &Matrix {
        &self.phi_star
    }
    pub fn abar_star(&self) -> &Matrix {
        &self.abar_star
    }
    /// Offset of the disruption instant inside a cluster, in units of `T_a`.
    pub fn offset_ticks(&self, beta: usize) -> Rational {
        self.t_star * Rational::from_integer(beta as i64)
    }

    /// `x̃_a[k] = Ā* x̃_c[k−1] + Φ* ā⟨k⟩`.
    pub fn predict_disruption(&self, x_c_prev: &Vector, a_k: &Vector) -> Result<Vector> {
        if x_c_prev.len() != self.abar_star.ncols() {
            return Err(Error::DimensionMismatch {
                context: "terminal state",
                expected: self.abar_star.ncols().to_string(),
                got: x_c_prev.len().to_string(),
            });
        }
        if a_k.len() != self.phi_star.ncols() {
            return Err(Error::DimensionMismatch {
                context: "stacked cluster input",
                expected: self.phi_star.ncols().to_string(),
                got: a_k.len().to_string(),
            });
        }
        Ok(&self.abar_star * x_c_prev + &self.phi_star * a_k)
    }
}

pub fn validate_t_star(t_star: Rational) -> Result<()> {
    if t_star <= Rational::zero() || t_star > Rational::from_integer(1) {
        return Err(Error::DisruptionTimeOutOfRange(t_star.to_string()));
    }
    Ok(())
}

/// `Φ*` and `Ā*` for normalized disruption time `t* ∈ (0, 1]`.
pub fn build_phi_star(
    sys: &LtiSystem,
    grid: &TimingGrid,
    t_star: Rational,
) -> Result<DisruptionSpec> {
    validate_t_star(t_star)?;
    let (n, p) = (sys.n(), sys.p());
    let beta = grid.beta();
    let (_, bd) = discretize(sys, grid)?;
    let bt = t_star * Rational::from_integer(beta as i64);
    let last_full = bt.floor().to_integer() as usize;
    let mut phi = Matrix::zeros(n, beta * p);
    let zero = Rational::zero();
    for m in 1..=last_full {
        let blk = ad_block(sys, grid, zero, Rational::from_integer(m as i64) - bt)? * &bd;
        phi.view_mut((0, (m - 1) * p), (n, p)).copy_from(&blk);
    }
    if last_full < beta && !bt.is_integer() {
        let blk = bd_block(sys, grid, zero, bt.floor() - bt)?;
        phi.view_mut((0, last_full * p), (n, p)).copy_from(&blk);
    }
    let abar_star = mat_exp(sys.a(), grid.seconds(bt))?;
    Ok(DisruptionSpec {
        t_star,
        phi_star: phi,
        abar_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_state() -> (LtiSystem, TimingGrid) {
        let a = Matrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -5.0, -3.0, 0.0, 2.0, 0.0]);
        let b = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let c = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]);
        (
            LtiSystem::new(a, b, c).unwrap(),
            TimingGrid::new(1.0, 1.0, 0.0).unwrap(),
        )
    }

    fn toy(t_a: f64, t_s: f64, offset: f64) -> (LtiSystem, TimingGrid) {
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]);
        let b = Matrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        (
            LtiSystem::new(a, b, c).unwrap(),
            TimingGrid::new(t_a, t_s, offset).unwrap(),
        )
    }

    #[test]
    fn pi_equals_bd_for_unit_ratio() {
        let (sys, grid) = three_state();
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        assert!((lc.pi() - lc.bd()).amax() < 1e-15);
        let cpi = lc.c_pi();
        assert_eq!(cpi.shape(), (1, 2));
        assert!((cpi[(0, 0)] - 0.632).abs() < 5e-4);
        assert!((cpi[(0, 1)] - 0.231).abs() < 5e-4);
    }

    #[test]
    fn pi_integer_ratio_matches_phi_c() {
        let (sys, grid) = toy(0.25, 1.0, 0.0);
        assert_eq!((grid.alpha(), grid.beta()), (1, 4));
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        assert!((lc.pi() - lc.phi_c()).amax() < 1e-13);
        // Ā_α = A_d^N
        assert!((lc.abar_alpha() - lc.ad().pow(4)).amax() < 1e-13);
    }

    #[test]
    fn phi_c_small_beta() {
        let (sys, grid) = toy(1.0, 1.0, 0.0);
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        assert_eq!(lc.phi_c(), lc.bd());
        let (sys, grid) = toy(0.5, 1.0, 0.0);
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        let p = sys.p();
        let left = lc.phi_c().view((0, 0), (2, p)).into_owned();
        let right = lc.phi_c().view((0, p), (2, p)).into_owned();
        assert!((left - lc.ad() * lc.bd()).amax() < 1e-15);
        assert_eq!(&right, lc.bd());
    }

    #[test]
    fn pi_shape_and_zero_pattern_fractional_ratio() {
        let (sys, grid) = toy(1.0, 0.4, 0.3);
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        let (n, p) = (sys.n(), sys.p());
        assert_eq!(lc.pi().shape(), (5 * n, 2 * p));
        for l in 1..=5usize {
            let f = grid.floor_lr(l as u64) as usize;
            for m in (f + 2)..=2 {
                let blk = lc.pi().view(((l - 1) * n, (m - 1) * p), (n, p));
                assert!(blk.iter().all(|&v| v == 0.0), "block ({l},{m}) not zero");
            }
        }
    }

    #[test]
    fn abar_alpha_zero_dynamics() {
        let sys = LtiSystem::new(
            Matrix::zeros(2, 2),
            Matrix::identity(2, 1),
            Matrix::identity(1, 2),
        )
        .unwrap();
        let grid = TimingGrid::new(1.0, 0.4, 0.3).unwrap();
        let aa = build_abar_alpha(&sys, &grid).unwrap();
        for l in 0..5 {
            let blk = aa.view((2 * l, 0), (2, 2)).into_owned();
            assert!((blk - Matrix::identity(2, 2)).amax() < 1e-15);
        }
    }

    #[test]
    fn phi_star_cases() {
        let (sys, grid) = toy(0.25, 1.0, 0.0);
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        let full = build_phi_star(&sys, &grid, Rational::from_integer(1)).unwrap();
        assert!((full.phi_star() - lc.phi_c()).amax() < 1e-13);
        assert!((full.abar_star() - lc.ad_beta()).amax() < 1e-13);

        let first = build_phi_star(&sys, &grid, Rational::new(1, 4)).unwrap();
        let p = sys.p();
        assert!((first.phi_star().view((0, 0), (2, p)) - lc.bd()).amax() < 1e-15);
        assert!(first
            .phi_star()
            .view((0, p), (2, 3 * p))
            .iter()
            .all(|&v| v == 0.0));

        assert!(build_phi_star(&sys, &grid, Rational::zero()).is_err());
        assert!(build_phi_star(&sys, &grid, Rational::new(5, 4)).is_err());
    }

    #[test]
    fn predictions_trivial() {
        let (sys, grid) = toy(1.0, 0.4, 0.3);
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        let z = Vector::zeros(2);
        let pred = lc.predict_cluster(&z, &Vector::zeros(4)).unwrap();
        assert!(pred.x_stack.iter().all(|&v| v == 0.0));
        let x0 = Vector::from_vec(vec![1.0, -2.0]);
        let pred = lc.predict_cluster(&x0, &Vector::zeros(4)).unwrap();
        assert!((pred.x_stack - lc.abar_alpha() * &x0).amax() < 1e-15);
        assert!(lc.predict_cluster(&x0, &Vector::zeros(3)).is_err());

        let (sys, grid) = toy(1.0, 1.0, 0.0);
        let spec = build_phi_star(&sys, &grid, Rational::from_integer(1)).unwrap();
        let lc = LiftedCluster::build(&sys, &grid).unwrap();
        let a0 = Vector::from_vec(vec![0.7, -1.1]);
        let xa = spec.predict_disruption(&Vector::zeros(2), &a0).unwrap();
        assert!((xa - lc.bd() * &a0).amax() < 1e-15);
    }
}
