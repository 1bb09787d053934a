//! Feasibility analysis: the three input-redundancy conditions, the
//! disruption-time selection from a kernel witness, and the sufficient
//! conditions available for integer ratios without offset.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{build_phi_star, LiftedCluster};
use crate::numlin::{kernel_basis, range_basis, rank, spectral_norm, Matrix, Tolerances, Vector};
use crate::plant::{LtiSystem, Rational, TimingGrid};

/// Outcome of the condition (b) test for one disruption time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionCheck {
    pub t_star: String,
    pub holds: bool,
    /// `σ_max(Φ* V)` with `V` an orthonormal basis of `ker 𝒞Π`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerRatioDiagnostics {
    /// Kernel of `CΠ` not contained in the kernel of the block lower-triangular
    /// map to all hold-instant states.
    pub b_prime: bool,
    /// `ker C ∩ im Π ≠ {0}`
    pub b_double_prime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `q α < p β`, equivalently `q T_a < p T_s`.
    pub dimension_inequality: bool,
    pub c_pi_full_row_rank: bool,
    pub pi_full_row_rank: bool,
    pub rank_bd: usize,
    pub bd_full_column_rank: bool,
    /// Present only for `α = 1`, `δ = 0`.
    pub integer_ratio: Option<IntegerRatioDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub alpha: usize,
    pub beta: usize,
    pub delta: String,
    pub cond_a: bool,
    pub kernel_dim: usize,
    pub cond_b: bool,
    pub cond_b_checks: Vec<DisruptionCheck>,
    pub cond_c: bool,
    pub rank_c_pi: usize,
    pub rank_c_pi_aug: usize,
    pub suggested_t_star: Option<String>,
    pub i_star: Option<usize>,
    pub diagnostics: Diagnostics,
}

impl RedundancyReport {
    pub fn feasible(&self) -> bool {
        self.cond_a && self.cond_b && self.cond_c
    }

    /// First failing condition, for error messages.
    pub fn failing_condition(&self) -> Option<&'static str> {
        if !self.cond_a {
            Some("(a) ker CPi is trivial")
        } else if !self.cond_b {
            Some("(b) ker CPi is contained in ker Phi*")
        } else if !self.cond_c {
            Some("(c) im C*Abar_alpha is not contained in im CPi")
        } else {
            None
        }
    }
}

/// Result of the kernel-witness disruption-time selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DisruptionChoice {
    pub t_star: Rational,
    pub i_star: usize,
    pub witness: Vector,
}

fn disruption_gain(kernel: &Matrix, phi_star: &Matrix, tol: &Tolerances) -> (bool, f64) {
    if kernel.ncols() == 0 {
        return (false, 0.0);
    }
    let gain = spectral_norm(&(phi_star * kernel));
    let scale = spectral_norm(phi_star);
    (scale > 0.0 && gain > tol.rank_rtol * scale, gain)
}

/// Condition (b) for a single disruption time.
pub fn check_condition_b(
    sys: &LtiSystem,
    lifted: &LiftedCluster,
    t_star: Rational,
    tol: &Tolerances,
) -> Result<DisruptionCheck> {
    let kernel = kernel_basis(lifted.c_pi(), tol)?;
    let spec = build_phi_star(sys, lifted.grid(), t_star)?;
    let (holds, gain) = disruption_gain(&kernel, spec.phi_star(), tol);
    Ok(DisruptionCheck {
        t_star: t_star.to_string(),
        holds,
        gain,
    })
}

/// Index (1-based) of the first block of `z` with norm above
/// `rank_rtol * ||z||`, with that block's norm.
fn first_nonzero_block(z: &Vector, p: usize, tol: &Tolerances) -> Option<(usize, f64)> {
    let total = z.norm();
    (0..z.len() / p).find_map(|i| {
        let nrm = z.rows(i * p, p).norm();
        (nrm > tol.rank_rtol * total).then_some((i + 1, nrm))
    })
}

/// Disruption time `t* = i*/β` from a kernel witness whose first nonzero
/// block is `i*`. Requires `B_d` of full column rank.
pub fn select_disruption_time(
    lifted: &LiftedCluster,
    sys: &LtiSystem,
    grid: &TimingGrid,
    tol: &Tolerances,
) -> Result<DisruptionChoice> {
    let kernel = kernel_basis(lifted.c_pi(), tol)?;
    if kernel.ncols() == 0 {
        return Err(Error::NoRedundancy);
    }
    let p = sys.p();
    let rank_bd = rank(lifted.bd(), tol);
    if rank_bd < p {
        return Err(Error::RankDeficientBd { rank: rank_bd, p });
    }
    let mut best: Option<(usize, f64, usize)> = None;
    for (col, z) in kernel.column_iter().enumerate() {
        let z = z.into_owned();
        if let Some((i, nrm)) = first_nonzero_block(&z, p, tol) {
            let better = match best {
                None => true,
                Some((bi, bn, _)) => i < bi || (i == bi && nrm > bn),
            };
            if better {
                best = Some((i, nrm, col));
            }
        }
    }
    let (i_star, _, col) = best.ok_or(Error::NoRedundancy)?;
    Ok(DisruptionChoice {
        t_star: Rational::new(i_star as i64, grid.beta() as i64),
        i_star,
        witness: kernel.column(col).into_owned(),
    })
}

/// Smallest `t* ∈ {1/β, …, 1}` satisfying condition (b), or `None`.
pub fn scan_disruption_candidates(
    sys: &LtiSystem,
    lifted: &LiftedCluster,
    tol: &Tolerances,
) -> Result<Option<Rational>> {
    let beta = lifted.grid().beta() as i64;
    for i in 1..=beta {
        let t = Rational::new(i, beta);
        if check_condition_b(sys, lifted, t, tol)?.holds {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Automatic disruption time: kernel-witness selection, falling back to the
/// candidate scan when `B_d` is rank deficient.
pub fn auto_disruption_time(
    sys: &LtiSystem,
    lifted: &LiftedCluster,
    tol: &Tolerances,
) -> Result<(Rational, Option<usize>)> {
    match select_disruption_time(lifted, sys, lifted.grid(), tol) {
        Ok(choice) => Ok((choice.t_star, Some(choice.i_star))),
        Err(Error::RankDeficientBd { .. }) => scan_disruption_candidates(sys, lifted, tol)?
            .map(|t| (t, None))
            .ok_or(Error::InfeasibleEta),
        Err(e) => Err(e),
    }
}

/// Integer-ratio, zero-offset sufficient conditions. `None` when `α ≠ 1` or
/// `δ ≠ 0`.
pub fn check_integer_ratio_sufficient(
    sys: &LtiSystem,
    grid: &TimingGrid,
    lifted: &LiftedCluster,
    tol: &Tolerances,
) -> Result<Option<IntegerRatioDiagnostics>> {
    if grid.alpha() != 1 || !grid.delta().is_zero() {
        return Ok(None);
    }
    let (n, p) = (sys.n(), sys.p());
    let big_n = grid.beta();
    // Row block j (1-based) is [A_d^{j-1}B_d, ..., B_d, 0, ..., 0].
    let mut powers = Vec::with_capacity(big_n);
    let mut blk = lifted.bd().clone();
    for _ in 0..big_n {
        powers.push(blk.clone());
        blk = lifted.ad() * blk;
    }
    let mut toeplitz = Matrix::zeros(big_n * n, big_n * p);
    for j in 0..big_n {
        for m in 0..=j {
            toeplitz
                .view_mut((j * n, m * p), (n, p))
                .copy_from(&powers[j - m]);
        }
    }
    let kernel = kernel_basis(lifted.c_pi(), tol)?;
    let (b_prime, _) = disruption_gain(&kernel, &toeplitz, tol);

    let im_pi = range_basis(lifted.pi(), tol);
    let b_double_prime = if im_pi.ncols() == 0 {
        false
    } else {
        kernel_basis(&(sys.c() * &im_pi), tol)?.ncols() > 0
    };
    Ok(Some(IntegerRatioDiagnostics {
        b_prime,
        b_double_prime,
    }))
}

/// Evaluates all three conditions. With an empty candidate list the
/// disruption time is selected automatically; otherwise condition (b) must
/// hold for every listed `t*`.
pub fn check_assumption1(
    sys: &LtiSystem,
    grid: &TimingGrid,
    lifted: &LiftedCluster,
    t_star_candidates: &[Rational],
    tol: &Tolerances,
) -> Result<RedundancyReport> {
    let (n, p, q) = (sys.n(), sys.p(), sys.q());
    let (alpha, beta) = (grid.alpha(), grid.beta());
    let c_pi = lifted.c_pi();

    let kernel = kernel_basis(c_pi, tol)?;
    let kernel_dim = kernel.ncols();
    let cond_a = kernel_dim > 0;

    let (suggested, i_star) = if cond_a {
        match auto_disruption_time(sys, lifted, tol) {
            Ok((t, i)) => (Some(t), i),
            Err(Error::InfeasibleEta) | Err(Error::NoRedundancy) => (None, None),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };

    let candidates: Vec<Rational> = if t_star_candidates.is_empty() {
        suggested.into_iter().collect()
    } else {
        t_star_candidates.to_vec()
    };
    let cond_b_checks = candidates
        .iter()
        .map(|&t| check_condition_b(sys, lifted, t, tol))
        .collect::<Result<Vec<_>>>()?;
    let cond_b = !cond_b_checks.is_empty() && cond_b_checks.iter().all(|c| c.holds);

    // rank([M | V]) = rank(M) + rank((I - U Uᵀ) V) with U spanning im M.
    let c_abar = lifted.c_abar_alpha();
    let rank_c_pi = rank(c_pi, tol);
    let u = range_basis(c_pi, tol);
    let off_range = if u.ncols() == 0 {
        c_abar.clone()
    } else {
        c_abar - &u * (u.transpose() * c_abar)
    };
    let off_norm = spectral_norm(&off_range);
    let extra_rank = if off_norm <= tol.rank_rtol * spectral_norm(c_abar) + tol.residual_atol {
        0
    } else {
        rank(&off_range, tol)
    };
    let rank_c_pi_aug = rank_c_pi + extra_rank;
    let cond_c = extra_rank == 0;

    let rank_bd = rank(lifted.bd(), tol);
    let diagnostics = Diagnostics {
        dimension_inequality: q * alpha < p * beta,
        c_pi_full_row_rank: rank_c_pi == alpha * q,
        pi_full_row_rank: rank(lifted.pi(), tol) == alpha * n,
        rank_bd,
        bd_full_column_rank: rank_bd == p,
        integer_ratio: check_integer_ratio_sufficient(sys, grid, lifted, tol)?,
    };

    Ok(RedundancyReport {
        n,
        p,
        q,
        alpha,
        beta,
        delta: grid.delta().to_string(),
        cond_a,
        kernel_dim,
        cond_b,
        cond_b_checks,
        cond_c,
        rank_c_pi,
        rank_c_pi_aug,
        suggested_t_star: suggested.map(|t| t.to_string()),
        i_star,
        diagnostics,
    })
}
