//! Off-line synthesis of the zero-stealthy, disruptive hold sequence.
//!
//! Each cluster input is `ā⟨k⟩ = κ_k η + ζ⟨k⟩`: `η ∈ ker 𝒞Π` carries the
//! disruption, `ζ⟨k⟩` cancels the sampled free response of the previous
//! terminal state, and `κ_k` is the smallest gain meeting the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{DisruptionSpec, LiftedCluster};
use crate::numlin::{
    kernel_basis, min_norm_solve, normalize_sign, spectral_norm, svd, Tolerances, Vector,
};
use crate::plant::{Rational, TimingGrid};

/// Disruption thresholds `H_k`, `k >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdSpec {
    /// `H_k = slope * k`
    Linear {
        slope: f64,
    },
    Constant {
        value: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl ThresholdSpec {
    pub fn threshold(&self, k: usize) -> Result<f64> {
        let value = match self {
            ThresholdSpec::Linear { slope } => slope * k as f64,
            ThresholdSpec::Constant { value } => *value,
            ThresholdSpec::Explicit { values } => {
                *values.get(k.wrapping_sub(1)).ok_or_else(|| {
                    Error::scenario(
                        "thresholds.values",
                        format!("no threshold for cluster {k} ({} given)", values.len()),
                    )
                })?
            }
        };
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveThreshold { k, value });
        }
        Ok(value)
    }

    pub fn validate(&self, clusters: usize) -> Result<()> {
        (1..=clusters).try_for_each(|k| self.threshold(k).map(|_| ()))
    }
}

/// Per-cluster synthesis record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub k: usize,
    pub t_star: String,
    /// Disruption instant `t_k` in seconds.
    pub disruption_time: f64,
    pub threshold: f64,
    pub kappa: f64,
    pub zeta: Vec<f64>,
    /// Predicted `‖x̃_a[k]‖`.
    pub predicted_disruption_norm: f64,
    /// Predicted terminal state `x̃_c[k]`.
    pub x_c: Vec<f64>,
    /// Predicted `‖ỹ⟨k⟩‖` from the lifted model.
    pub predicted_output_norm: f64,
}

/// Synthesized attack: metadata plus the flat hold sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub n: usize,
    pub p: usize,
    pub alpha: usize,
    pub beta: usize,
    pub t_a: f64,
    pub t_s: f64,
    pub offset: f64,
    pub clusters: usize,
    pub kernel_dim: usize,
    /// How `η` was picked inside `ker 𝒞Π`.
    pub eta_rule: String,
    pub eta: Vec<f64>,
    pub records: Vec<ClusterRecord>,
    /// `ā[i]` held over `[i T_a, (i + 1) T_a)`.
    pub holds: Vec<Vec<f64>>,
    pub tolerances: Tolerances,
}

pub const ETA_RULE: &str = "max ||Phi* eta|| over unit vectors of ker CPi";

impl AttackPlan {
    /// All-zero plan over `clusters` clusters.
    pub fn zero(grid: &TimingGrid, n: usize, p: usize, clusters: usize) -> Self {
        let beta = grid.beta();
        Self {
            n,
            p,
            alpha: grid.alpha(),
            beta,
            t_a: grid.t_a(),
            t_s: grid.t_s(),
            offset: grid.offset(),
            clusters,
            kernel_dim: 0,
            eta_rule: "zero attack".into(),
            eta: vec![0.0; beta * p],
            records: Vec::new(),
            holds: vec![vec![0.0; p]; clusters * beta],
            tolerances: Tolerances::default(),
        }
    }

    pub fn hold(&self, i: usize) -> Vector {
        Vector::from_column_slice(&self.holds[i])
    }

    /// `ā⟨k⟩` for `k >= 1`.
    pub fn stacked(&self, k: usize) -> Vector {
        let start = (k - 1) * self.beta;
        Vector::from_iterator(
            self.beta * self.p,
            self.holds[start..start + self.beta]
                .iter()
                .flatten()
                .cloned(),
        )
    }

    /// Attack span `K β T_a` in seconds.
    pub fn duration(&self) -> f64 {
        (self.clusters * self.beta) as f64 * self.t_a
    }

    pub fn disruption_times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.disruption_time).collect()
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.threshold).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.holds.len() != self.clusters * self.beta {
            return Err(Error::scenario(
                "plan.holds",
                format!(
                    "expected {} holds, found {}",
                    self.clusters * self.beta,
                    self.holds.len()
                ),
            ));
        }
        if let Some(bad) = self.holds.iter().position(|h| h.len() != self.p) {
            return Err(Error::scenario(
                "plan.holds",
                format!("hold {bad} does not have {} entries", self.p),
            ));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,t");
        for j in 1..=self.p {
            out.push_str(&format!(",a_{j}"));
        }
        out.push('\n');
        for (i, h) in self.holds.iter().enumerate() {
            out.push_str(&format!("{i},{}", i as f64 * self.t_a));
            for v in h {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Unit `η ∈ ker 𝒞Π` maximizing `‖Φ* η‖`, sign-normalized.
pub fn choose_eta(
    lifted: &LiftedCluster,
    spec: &DisruptionSpec,
    tol: &Tolerances,
) -> Result<Vector> {
    let kernel = kernel_basis(lifted.c_pi(), tol)?;
    if kernel.ncols() == 0 {
        return Err(Error::NoRedundancy);
    }
    let restricted = spec.phi_star() * &kernel;
    let scale = spectral_norm(spec.phi_star());
    let dec = svd(&restricted)?;
    let top = dec.s.first().copied().unwrap_or(0.0);
    if scale == 0.0 || top <= tol.rank_rtol * scale {
        return Err(Error::InfeasibleEta);
    }
    let w = dec.v.column(0);
    let mut eta = &kernel * w;
    eta /= eta.norm();
    normalize_sign(&mut eta, tol.rank_rtol);
    Ok(eta)
}

/// Minimum-norm `ζ` with `𝒞Π ζ = −𝒞Ā_α x̃_c[k−1]`.
pub fn solve_zeta(lifted: &LiftedCluster, x_c_prev: &Vector, tol: &Tolerances) -> Result<Vector> {
    let rhs = -(lifted.c_abar_alpha() * x_c_prev);
    min_norm_solve(lifted.c_pi(), &rhs, tol)
}

/// Smallest admissible gain:
/// `κ = (H + ‖Ā* x̃_c[k−1] + Φ* ζ‖) / ‖Φ* η‖`.
pub fn choose_kappa(
    spec: &DisruptionSpec,
    x_c_prev: &Vector,
    zeta: &Vector,
    eta: &Vector,
    threshold: f64,
) -> Result<f64> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::NonPositiveThreshold {
            k: 0,
            value: threshold,
        });
    }
    let gain = (spec.phi_star() * eta).norm();
    let floor = 1e-14 * spectral_norm(spec.phi_star()) * eta.norm();
    if gain.is_nan() || gain <= floor || gain == 0.0 {
        return Err(Error::DegenerateDisruption(gain));
    }
    let drift = (spec.abar_star() * x_c_prev + spec.phi_star() * zeta).norm();
    Ok((threshold + drift) / gain)
}

/// Runs the attack-generation procedure for `clusters` clusters.
///
/// `specs` holds one disruption description used for every cluster, or one
/// per cluster.
pub fn synthesize(
    lifted: &LiftedCluster,
    specs: &[DisruptionSpec],
    thresholds: &ThresholdSpec,
    clusters: usize,
    tol: &Tolerances,
) -> Result<AttackPlan> {
    let grid = lifted.grid();
    let (n, p, beta) = (lifted.n(), lifted.p(), grid.beta());
    if specs.is_empty() || (specs.len() != 1 && specs.len() < clusters) {
        return Err(Error::scenario(
            "t_star",
            format!("need 1 or {clusters} disruption times, got {}", specs.len()),
        ));
    }
    thresholds.validate(clusters)?;

    let mut plan = AttackPlan::zero(grid, n, p, 0);
    plan.clusters = clusters;
    plan.tolerances = *tol;
    plan.eta_rule = ETA_RULE.into();
    plan.kernel_dim = kernel_basis(lifted.c_pi(), tol)?.ncols();
    if clusters == 0 {
        return Ok(plan);
    }

    // η depends only on Φ*, so compute it once per distinct disruption time.
    let mut etas: Vec<(Rational, Vector)> = Vec::new();
    let mut eta_for = |spec: &DisruptionSpec| -> Result<Vector> {
        if let Some((_, e)) = etas.iter().find(|(t, _)| *t == spec.t_star()) {
            return Ok(e.clone());
        }
        let e = choose_eta(lifted, spec, tol)?;
        etas.push((spec.t_star(), e.clone()));
        Ok(e)
    };

    let mut x_c = Vector::zeros(n);
    for k in 1..=clusters {
        let spec = if specs.len() == 1 {
            &specs[0]
        } else {
            &specs[k - 1]
        };
        let eta = eta_for(spec)?;
        if k == 1 {
            plan.eta = eta.iter().cloned().collect();
        }
        let h_k = thresholds.threshold(k)?;
        let zeta = solve_zeta(lifted, &x_c, tol)?;
        let kappa = choose_kappa(spec, &x_c, &zeta, &eta, h_k)?;
        let a_k = &eta * kappa + &zeta;

        let pred = lifted.predict_cluster(&x_c, &a_k)?;
        let x_a = spec.predict_disruption(&x_c, &a_k)?;
        let cluster_start = Rational::from_integer(((k - 1) * beta) as i64);
        let t_k = grid.seconds(cluster_start + spec.offset_ticks(beta));

        for i in 0..beta {
            plan.holds
                .push(a_k.rows(i * p, p).iter().cloned().collect());
        }
        plan.records.push(ClusterRecord {
            k,
            t_star: spec.t_star().to_string(),
            disruption_time: t_k,
            threshold: h_k,
            kappa,
            zeta: zeta.iter().cloned().collect(),
            predicted_disruption_norm: x_a.norm(),
            x_c: pred.x_c_next.iter().cloned().collect(),
            predicted_output_norm: pred.y_stack.norm(),
        });
        x_c = pred.x_c_next;
    }
    Ok(plan)
}
