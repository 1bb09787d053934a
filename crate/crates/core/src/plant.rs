//! Continuous-time plant and multirate timing geometry.
//!
//! Times inside a grid are carried as exact rationals in units of the hold
//! period `T_a`; seconds are derived by a single multiplication at the end so
//! that coincident instants compare equal bit-for-bit.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::numlin::{ensure_finite, mat_exp, zoh_pair, Matrix};

pub type Rational = Ratio<i64>;

/// Default bound on the denominators accepted when rationalizing `T_s/T_a`
/// and the normalized offset.
pub const DEFAULT_MAX_DENOMINATOR: i64 = 1000;

/// Relative tolerance for accepting a rational approximation.
pub const RATIO_RTOL: f64 = 1e-9;

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().expect("rational fits in f64")
}

/// Continuous-time triple `(A, B, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::NonSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                context: "B",
                expected: format!("{n}xp with p >= 1"),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                context: "C",
                expected: format!("qx{n} with q >= 1"),
                got: format!("{}x{}", c.nrows(), c.ncols()),
            });
        }
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        ensure_finite(&c, "C")?;
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn c(&self) -> &Matrix {
        &self.c
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn p(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn q(&self) -> usize {
        self.c.nrows()
    }
}

/// Best rational approximation of `x >= 0` by continued-fraction convergents.
/// Returns the convergent with the smallest denominator within
/// `rtol * max(|x|, 1)`, or `None` if none exists below `max_denominator`.
pub fn best_rational(x: f64, max_denominator: i64, rtol: f64) -> Option<Rational> {
    if !x.is_finite() || x < 0.0 || max_denominator < 1 {
        return None;
    }
    let tol = rtol * x.abs().max(1.0);
    let (mut h_prev, mut h) = (1i128, x.floor() as i128);
    let (mut k_prev, mut k) = (0i128, 1i128);
    let mut frac = x - x.floor();
    for _ in 0..64 {
        if (x - h as f64 / k as f64).abs() <= tol {
            return Some(Ratio::new(h as i64, k as i64));
        }
        if frac == 0.0 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as i128;
        let h_next = a * h + h_prev;
        let k_next = a * k + k_prev;
        if k_next > max_denominator as i128 || h_next > i64::MAX as i128 {
            break;
        }
        h_prev = h;
        h = h_next;
        k_prev = k;
        k = k_next;
    }
    None
}

/// Coprime `(α, β)` with `T_s / T_a ≈ β / α`.
pub fn rationalize(t_a: f64, t_s: f64, max_denominator: i64) -> Result<(i64, i64)> {
    if !(t_a > 0.0 && t_s > 0.0 && t_a.is_finite() && t_s.is_finite()) {
        return Err(Error::InvalidTiming(format!(
            "periods must be positive and finite (T_a = {t_a}, T_s = {t_s})"
        )));
    }
    let ratio = t_s / t_a;
    let r = best_rational(ratio, max_denominator, RATIO_RTOL).ok_or(Error::IrrationalRatio {
        ratio,
        max_denominator,
    })?;
    if r.is_zero() {
        return Err(Error::IrrationalRatio {
            ratio,
            max_denominator,
        });
    }
    Ok((*r.denom(), *r.numer()))
}

/// `j_δ := δ + ⌊j − δ⌋`: `(j − 1) + δ` when `δ > 0`, else `j`.
pub fn shifted_index(j: u64, delta: Rational) -> Result<Rational> {
    if j == 0 {
        return Err(Error::ZeroSampleIndex);
    }
    let j = Rational::from_integer(j as i64);
    Ok(delta + (j - delta).floor())
}

/// Hold period, sampling period and sensing offset, with the derived coprime
/// cluster structure `α T_s = β T_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingGrid {
    t_a: f64,
    t_s: f64,
    offset: f64,
    alpha: i64,
    beta: i64,
    delta: Rational,
}

impl TimingGrid {
    pub fn new(t_a: f64, t_s: f64, offset: f64) -> Result<Self> {
        Self::with_max_denominator(t_a, t_s, offset, DEFAULT_MAX_DENOMINATOR)
    }

    pub fn with_max_denominator(
        t_a: f64,
        t_s: f64,
        offset: f64,
        max_denominator: i64,
    ) -> Result<Self> {
        let (alpha, beta) = rationalize(t_a, t_s, max_denominator)?;
        if !(offset >= 0.0 && offset < t_s) {
            return Err(Error::InvalidTiming(format!(
                "offset {offset} must lie in [0, T_s = {t_s})"
            )));
        }
        let delta_f = offset / t_s;
        let delta = best_rational(delta_f, max_denominator, RATIO_RTOL).ok_or_else(|| {
            Error::InvalidTiming(format!(
                "normalized offset {delta_f} has no rational form with denominator <= {max_denominator}"
            ))
        })?;
        if delta >= Rational::from_integer(1) {
            return Err(Error::InvalidTiming(format!(
                "normalized offset {delta_f} rounds to 1"
            )));
        }
        Ok(Self {
            t_a,
            t_s,
            offset,
            alpha,
            beta,
            delta,
        })
    }

    pub fn t_a(&self) -> f64 {
        self.t_a
    }
    /// Sampling period as supplied.
    pub fn t_s(&self) -> f64 {
        self.t_s
    }
    pub fn offset(&self) -> f64 {
        self.offset
    }
    pub fn alpha(&self) -> usize {
        self.alpha as usize
    }
    pub fn beta(&self) -> usize {
        self.beta as usize
    }
    /// `R = T_s / T_a = β / α`.
    pub fn ratio(&self) -> Rational {
        Rational::new(self.beta, self.alpha)
    }
    /// Normalized offset `δ = Δ / T_s`.
    pub fn delta(&self) -> Rational {
        self.delta
    }
    /// Cluster length `β T_a` in seconds.
    pub fn cluster_len(&self) -> f64 {
        self.beta as f64 * self.t_a
    }

    /// Converts a time in units of `T_a` to seconds.
    pub fn seconds(&self, ticks: Rational) -> f64 {
        to_f64(ticks) * self.t_a
    }

    /// Time of the `j`-th sensing instant `j_δ T_s`, in units of `T_a`.
    pub fn sensing_ticks(&self, j: u64) -> Result<Rational> {
        Ok(shifted_index(j, self.delta)? * self.ratio())
    }

    /// Sensing instants `j_δ T_s <= end_ticks`, in order, as `(j, ticks)`.
    pub fn sensing_until(&self, end_ticks: Rational) -> Vec<(u64, Rational)> {
        let mut out = Vec::new();
        let mut j = 1u64;
        loop {
            let t = self.sensing_ticks(j).expect("j >= 1");
            if t > end_ticks {
                break;
            }
            out.push((j, t));
            j += 1;
        }
        out
    }

    /// Per-cluster schedule for cluster `k >= 1`.
    pub fn schedule(&self, k: usize) -> Schedule {
        assert!(k >= 1, "clusters are numbered from 1");
        let start = Rational::from_integer((k as i64 - 1) * self.beta);
        let actuation = (0..self.beta)
            .map(|i| start + Rational::from_integer(i))
            .collect();
        let sensing = (1..=self.alpha)
            .map(|l| {
                let j = ((k as i64 - 1) * self.alpha + l) as u64;
                (j, self.sensing_ticks(j).expect("j >= 1"))
            })
            .collect();
        Schedule {
            cluster: k,
            actuation,
            sensing,
        }
    }

    /// `⌊l_δ R⌋` computed exactly.
    pub fn floor_lr(&self, l: u64) -> i64 {
        let v = shifted_index(l, self.delta).expect("l >= 1") * self.ratio();
        v.floor().to_integer()
    }
}

/// Actuation and sensing instants of one cluster, in units of `T_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub cluster: usize,
    /// `(k − 1)β + i` for `i = 0..β`.
    pub actuation: Vec<Rational>,
    /// `(j, j_δ R)` for the α sensing samples of the cluster.
    pub sensing: Vec<(u64, Rational)>,
}

/// `A_d^{⟨l,m⟩} = e^{A (l T_s − m T_a)}`.
pub fn ad_block(sys: &LtiSystem, grid: &TimingGrid, l: Rational, m: Rational) -> Result<Matrix> {
    let ticks = l * grid.ratio() - m;
    mat_exp(sys.a(), grid.seconds(ticks))
}

/// `B_d^{⟨l,m⟩} = (∫_0^{l T_s − m T_a} e^{Aτ} dτ) B`.
pub fn bd_block(sys: &LtiSystem, grid: &TimingGrid, l: Rational, m: Rational) -> Result<Matrix> {
    let ticks = l * grid.ratio() - m;
    if ticks < Rational::zero() {
        return Err(Error::NegativeDuration(grid.seconds(ticks)));
    }
    Ok(zoh_pair(sys.a(), sys.b(), grid.seconds(ticks))?.1)
}

/// Plain hold discretization `(A_d, B_d)` over one period `T_a`.
pub fn discretize(sys: &LtiSystem, grid: &TimingGrid) -> Result<(Matrix, Matrix)> {
    zoh_pair(sys.a(), sys.b(), grid.t_a())
}
