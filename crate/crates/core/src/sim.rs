//! Exact continuous-time simulation of the error dynamics
//! `dx̃/dt = A x̃ + B a(t)`, `x̃(0) = 0`, under a piecewise-constant attack.
//!
//! Hold-start states are chained with the one-period zero-order-hold pair;
//! every other grid point is reached from the start of its hold in a single
//! closed-form step, so refining the plotting grid leaves event states
//! untouched.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::attack::AttackPlan;
use crate::error::{Error, Result};
use crate::numlin::{zoh_pair, Matrix, Vector};
use crate::plant::{LtiSystem, Rational, TimingGrid};

/// Default interior points per hold for plotting.
pub const DEFAULT_FINE_STEPS: usize = 20;
/// Default bound on the sampled residual norm for the stealth verdict.
pub const DEFAULT_STEALTH_TOL: f64 = 1e-8;
/// Default rounding floor: a sample also counts as silent when
/// `‖ỹ(t_j)‖ <= stealth_rtol * ‖x̃(t_j)‖`. Double precision cannot resolve
/// an exact cancellation `C x̃ = 0` below a few ulps of `‖x̃‖`.
pub const DEFAULT_STEALTH_RTOL: f64 = 1e-12;
/// Relative slack allowed on `‖x̃(t_k)‖ >= H_k` for rounding.
pub const DISRUPTION_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledOutput {
    pub j: u64,
    pub t: f64,
    pub y: Vec<f64>,
    /// `‖x̃(t)‖`, the scale of the rounding floor on `ỹ(t)`.
    pub x_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisruptionSample {
    pub k: usize,
    pub t: f64,
    pub norm: f64,
}

#[derive(Debug, Clone)]
struct Propagator {
    a: Matrix,
    b: Matrix,
    c: Matrix,
    holds: Vec<Vector>,
}

impl Propagator {
    fn input(&self, i: usize) -> Vector {
        self.holds
            .get(i)
            .cloned()
            .unwrap_or_else(|| Vector::zeros(self.b.ncols()))
    }
}

/// Dense error-state trajectory with sampled and disruption-time views.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub n: usize,
    pub q: usize,
    pub times: Vec<f64>,
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub is_sensing: Vec<bool>,
    pub is_actuation: Vec<bool>,
    pub is_disruption: Vec<bool>,
    pub sampled: Vec<SampledOutput>,
    pub disruption_samples: Vec<DisruptionSample>,
    hold_index: Vec<usize>,
    propagator: Option<Propagator>,
}

#[derive(Debug, Clone)]
struct Event {
    t: f64,
    ticks: Option<Rational>,
    sensing: Option<u64>,
    actuation: bool,
    disruption: Option<usize>,
}

impl Event {
    fn at(t: f64, ticks: Option<Rational>) -> Self {
        Self {
            t,
            ticks,
            sensing: None,
            actuation: false,
            disruption: None,
        }
    }
}

fn same_instant(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

struct ZohCache<'a> {
    a: &'a Matrix,
    b: &'a Matrix,
    map: HashMap<u64, (Matrix, Matrix)>,
}

impl<'a> ZohCache<'a> {
    fn new(a: &'a Matrix, b: &'a Matrix) -> Self {
        Self {
            a,
            b,
            map: HashMap::new(),
        }
    }

    fn get(&mut self, h: f64) -> Result<&(Matrix, Matrix)> {
        let key = h.to_bits();
        if !self.map.contains_key(&key) {
            let pair = zoh_pair(self.a, self.b, h)?;
            self.map.insert(key, pair);
        }
        Ok(&self.map[&key])
    }
}

/// Simulates the hold sequence `holds` (hold `i` active on
/// `[i T_a, (i + 1) T_a)` of `grid`) and samples on `grid`'s own sensing
/// instants. `disruption_times` (seconds) are added as flagged grid points.
pub fn simulate_holds(
    sys: &LtiSystem,
    grid: &TimingGrid,
    holds: &[Vector],
    disruption_times: &[f64],
    fine_steps_per_hold: usize,
) -> Result<SimTrace> {
    let (n, p, q) = (sys.n(), sys.p(), sys.q());
    if let Some(bad) = holds.iter().find(|h| h.len() != p) {
        return Err(Error::DimensionMismatch {
            context: "attack hold",
            expected: p.to_string(),
            got: bad.len().to_string(),
        });
    }
    let fine = fine_steps_per_hold.max(1) as i64;
    let horizon = holds.len();
    let end_ticks = Rational::from_integer(horizon as i64);
    let t_a = grid.t_a();

    let mut events = Vec::new();
    for i in 0..=horizon as i64 {
        let ticks = Rational::from_integer(i);
        let mut ev = Event::at(grid.seconds(ticks), Some(ticks));
        ev.actuation = (i as usize) < horizon;
        events.push(ev);
        if (i as usize) < horizon {
            for s in 1..fine {
                let ticks = Rational::new(i * fine + s, fine);
                events.push(Event::at(grid.seconds(ticks), Some(ticks)));
            }
        }
    }
    for (j, ticks) in grid.sensing_until(end_ticks) {
        let mut ev = Event::at(grid.seconds(ticks), Some(ticks));
        ev.sensing = Some(j);
        events.push(ev);
    }
    let end = grid.seconds(end_ticks);
    for (k, &t) in disruption_times.iter().enumerate() {
        if t > 0.0 && (t <= end || same_instant(t, end)) {
            let mut ev = Event::at(t, None);
            ev.disruption = Some(k + 1);
            events.push(ev);
        }
    }

    events.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .unwrap()
            .then_with(|| b.ticks.is_some().cmp(&a.ticks.is_some()))
    });
    let mut merged: Vec<Event> = Vec::with_capacity(events.len());
    for ev in events {
        match merged.last_mut() {
            Some(last) if same_instant(last.t, ev.t) => {
                if last.ticks.is_none() && ev.ticks.is_some() {
                    last.t = ev.t;
                    last.ticks = ev.ticks;
                }
                last.actuation |= ev.actuation;
                last.sensing = last.sensing.or(ev.sensing);
                last.disruption = last.disruption.or(ev.disruption);
            }
            _ => merged.push(ev),
        }
    }

    let mut cache = ZohCache::new(sys.a(), sys.b());
    let zero_input = Vector::zeros(p);
    let mut starts = Vec::with_capacity(horizon + 1);
    starts.push(Vector::zeros(n));
    for (i, hold) in holds.iter().enumerate() {
        let (phi, gamma) = cache.get(t_a)?;
        let next = phi * &starts[i] + gamma * hold;
        starts.push(next);
    }

    let mut trace = SimTrace {
        n,
        q,
        times: Vec::with_capacity(merged.len()),
        x: Vec::with_capacity(merged.len()),
        y: Vec::with_capacity(merged.len()),
        is_sensing: Vec::with_capacity(merged.len()),
        is_actuation: Vec::with_capacity(merged.len()),
        is_disruption: Vec::with_capacity(merged.len()),
        sampled: Vec::new(),
        disruption_samples: Vec::new(),
        hold_index: Vec::with_capacity(merged.len()),
        propagator: Some(Propagator {
            a: sys.a().clone(),
            b: sys.b().clone(),
            c: sys.c().clone(),
            holds: holds.to_vec(),
        }),
    };

    for ev in merged {
        let (i, h) = match ev.ticks {
            Some(ticks) => {
                let i = (ticks.floor().to_integer() as usize).min(horizon);
                let rem = ticks - Rational::from_integer(i as i64);
                (i, grid.seconds(rem))
            }
            None => {
                let i = ((ev.t / t_a).floor().max(0.0) as usize).min(horizon);
                (i, (ev.t - i as f64 * t_a).max(0.0))
            }
        };
        let x = if h == 0.0 {
            starts[i].clone()
        } else {
            let input = holds.get(i).unwrap_or(&zero_input);
            let (phi, gamma) = cache.get(h)?;
            phi * &starts[i] + gamma * input
        };
        let y = sys.c() * &x;
        if let Some(j) = ev.sensing {
            trace.sampled.push(SampledOutput {
                j,
                t: ev.t,
                y: y.iter().cloned().collect(),
                x_norm: x.norm(),
            });
        }
        if let Some(k) = ev.disruption {
            trace.disruption_samples.push(DisruptionSample {
                k,
                t: ev.t,
                norm: x.norm(),
            });
        }
        trace.times.push(ev.t);
        trace.is_sensing.push(ev.sensing.is_some());
        trace.is_actuation.push(ev.actuation);
        trace.is_disruption.push(ev.disruption.is_some());
        trace.hold_index.push(i);
        trace.x.push(x);
        trace.y.push(y);
    }
    Ok(trace)
}

/// Simulates `plan` on `grid_true` (which may differ from the design grid).
pub fn simulate_error(
    sys: &LtiSystem,
    grid_true: &TimingGrid,
    plan: &AttackPlan,
    fine_steps_per_hold: usize,
) -> Result<SimTrace> {
    plan.validate()?;
    if plan.n != sys.n() || plan.p != sys.p() {
        return Err(Error::DimensionMismatch {
            context: "plan vs system",
            expected: format!("n={}, p={}", sys.n(), sys.p()),
            got: format!("n={}, p={}", plan.n, plan.p),
        });
    }
    let holds: Vec<Vector> = (0..plan.holds.len()).map(|i| plan.hold(i)).collect();
    simulate_holds(
        sys,
        grid_true,
        &holds,
        &plan.disruption_times(),
        fine_steps_per_hold,
    )
}

impl SimTrace {
    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Largest sampled residual norm.
    pub fn max_sampled_residual(&self) -> f64 {
        self.sampled
            .iter()
            .map(|s| s.y.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Index into `times` of an exact grid instant, if present.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let idx = self
            .times
            .partition_point(|&s| s < t - 1e-12 * t.abs().max(1.0));
        (idx < self.times.len() && same_instant(self.times[idx], t)).then_some(idx)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.n {
            out.push_str(&format!(",x_{i}"));
        }
        for i in 1..=self.q {
            out.push_str(&format!(",y_{i}"));
        }
        out.push_str(",is_sensing,is_actuation,is_disruption\n");
        for idx in 0..self.times.len() {
            out.push_str(&format!("{}", self.times[idx]));
            for v in self.x[idx].iter().chain(self.y[idx].iter()) {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(
                ",{},{},{}\n",
                self.is_sensing[idx] as u8,
                self.is_actuation[idx] as u8,
                self.is_disruption[idx] as u8
            ));
        }
        out
    }

    /// Reloads a trace written by [`SimTrace::to_csv`]. The result supports
    /// verification but not probing.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let n = headers.iter().filter(|h| h.starts_with("x_")).count();
        let q = headers.iter().filter(|h| h.starts_with("y_")).count();
        if headers.len() != 1 + n + q + 3 || headers.get(0) != Some("t") {
            return Err(Error::scenario("trace", "unexpected CSV header"));
        }
        let mut trace = SimTrace {
            n,
            q,
            times: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            is_sensing: Vec::new(),
            is_actuation: Vec::new(),
            is_disruption: Vec::new(),
            sampled: Vec::new(),
            disruption_samples: Vec::new(),
            hold_index: Vec::new(),
            propagator: None,
        };
        let parse = |s: &str, line: usize| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::scenario("trace", format!("row {line}: {e}")))
        };
        let (mut j, mut k) = (0u64, 0usize);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| parse(s, line + 2))
                .collect::<Result<_>>()?;
            let t = vals[0];
            let x = Vector::from_column_slice(&vals[1..1 + n]);
            let y = Vector::from_column_slice(&vals[1 + n..1 + n + q]);
            let flags = &vals[1 + n + q..];
            let sensing = flags[0] != 0.0;
            let disruption = flags[2] != 0.0;
            if sensing {
                j += 1;
                trace.sampled.push(SampledOutput {
                    j,
                    t,
                    y: y.iter().cloned().collect(),
                    x_norm: x.norm(),
                });
            }
            if disruption {
                k += 1;
                trace.disruption_samples.push(DisruptionSample {
                    k,
                    t,
                    norm: x.norm(),
                });
            }
            trace.times.push(t);
            trace.x.push(x);
            trace.y.push(y);
            trace.is_sensing.push(sensing);
            trace.is_actuation.push(flags[1] != 0.0);
            trace.is_disruption.push(disruption);
        }
        Ok(trace)
    }
}

/// Outcome of one cluster's disruption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub k: usize,
    pub t_k: f64,
    pub norm: f64,
    pub threshold: f64,
    /// `‖x̃(t_k)‖ − H_k`
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub samples: usize,
    pub max_sampled_residual: f64,
    /// Largest `‖ỹ(t_j)‖ / ‖x̃(t_j)‖` over samples above `stealth_tol`;
    /// zero when every sample meets the absolute bound.
    pub max_relative_residual: f64,
    pub stealth_tol: f64,
    pub stealth_rtol: f64,
    /// Verdict with the absolute bound alone.
    pub absolute_stealthy: bool,
    pub stealthy: bool,
    pub disruptive: bool,
    pub clusters: Vec<ClusterVerdict>,
    pub first_detection_sample: Option<u64>,
    pub first_detection_time: Option<f64>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.stealthy && self.disruptive
    }
}

/// [`verify_with`] using [`DEFAULT_STEALTH_RTOL`].
pub fn verify(trace: &SimTrace, plan: &AttackPlan, stealth_tol: f64) -> VerificationReport {
    verify_with(trace, plan, stealth_tol, DEFAULT_STEALTH_RTOL)
}

/// Checks zero-stealthiness on the sampled outputs and the disruption
/// thresholds at the plan's disruption instants. A sample is silent when
/// `‖ỹ(t_j)‖ <= stealth_tol + stealth_rtol * ‖x̃(t_j)‖`.
pub fn verify_with(
    trace: &SimTrace,
    plan: &AttackPlan,
    stealth_tol: f64,
    stealth_rtol: f64,
) -> VerificationReport {
    let norms: Vec<f64> = trace
        .sampled
        .iter()
        .map(|s| s.y.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let max_sampled_residual = norms.iter().cloned().fold(0.0, f64::max);
    let max_relative_residual = norms
        .iter()
        .zip(&trace.sampled)
        .filter(|(&r, _)| r > stealth_tol)
        .map(|(r, s)| r / s.x_norm)
        .fold(0.0, f64::max);
    let first = norms
        .iter()
        .zip(&trace.sampled)
        .position(|(&r, s)| r > stealth_tol + stealth_rtol * s.x_norm);

    let clusters: Vec<ClusterVerdict> = plan
        .records
        .iter()
        .map(|rec| {
            let norm = trace
                .disruption_samples
                .iter()
                .find(|d| d.k == rec.k)
                .map(|d| d.norm)
                .unwrap_or(f64::NAN);
            ClusterVerdict {
                k: rec.k,
                t_k: rec.disruption_time,
                norm,
                threshold: rec.threshold,
                margin: norm - rec.threshold,
            }
        })
        .collect();
    let disruptive = !clusters.is_empty()
        && clusters
            .iter()
            .all(|c| c.norm >= c.threshold * (1.0 - DISRUPTION_RTOL));

    VerificationReport {
        samples: norms.len(),
        max_sampled_residual,
        max_relative_residual,
        stealth_tol,
        stealth_rtol,
        absolute_stealthy: max_sampled_residual <= stealth_tol,
        stealthy: first.is_none(),
        disruptive,
        clusters,
        first_detection_sample: first.map(|i| trace.sampled[i].j),
        first_detection_time: first.map(|i| trace.sampled[i].t),
    }
}

/// `ỹ` at arbitrary instants, propagated exactly from the nearest earlier
/// grid point.
pub fn intermittent_probe(trace: &SimTrace, probe_times: &[f64]) -> Result<Vec<Vector>> {
    let prop = trace
        .propagator
        .as_ref()
        .ok_or_else(|| Error::scenario("trace", "probing needs an in-memory simulated trace"))?;
    let end = trace.end_time();
    probe_times
        .iter()
        .map(|&t| {
            if !(t >= 0.0 && (t <= end || same_instant(t, end))) {
                return Err(Error::ProbeOutOfSpan { t, end });
            }
            let idx = trace.times.partition_point(|&s| s <= t).max(1) - 1;
            let h = t - trace.times[idx];
            if h <= 0.0 {
                return Ok(trace.y[idx].clone());
            }
            let (phi, gamma) = zoh_pair(&prop.a, &prop.b, h)?;
            let x = phi * &trace.x[idx] + gamma * prop.input(trace.hold_index[idx]);
            Ok(&prop.c * x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (LtiSystem, TimingGrid) {
        let a = Matrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.2]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        (
            LtiSystem::new(a, b, c).unwrap(),
            TimingGrid::new(1.0, 0.4, 0.3).unwrap(),
        )
    }

    #[test]
    fn zero_attack_stays_at_origin() {
        let (sys, grid) = toy();
        let plan = AttackPlan::zero(&grid, 2, 1, 3);
        let tr = simulate_error(&sys, &grid, &plan, 5).unwrap();
        assert!(tr.x.iter().all(|x| x.iter().all(|&v| v == 0.0)));
        let rep = verify(&tr, &plan, 1e-8);
        assert!(rep.stealthy);
        assert!(!rep.disruptive);
        assert_eq!(rep.samples, 15);
    }

    #[test]
    fn grid_times_strictly_increasing_and_unique() {
        let (sys, grid) = toy();
        let holds = vec![Vector::from_element(1, 1.0); 4];
        let tr = simulate_holds(&sys, &grid, &holds, &[1.0, 3.5], 4).unwrap();
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(tr.times[0], 0.0);
        assert_eq!(tr.is_actuation.iter().filter(|&&b| b).count(), 4);
        // 1.0 coincides with an actuation instant and is flagged once
        let i = tr.index_of(1.0).unwrap();
        assert!(tr.is_actuation[i] && tr.is_disruption[i]);
        assert_eq!(tr.disruption_samples.len(), 2);
        // sensing at 0.3, 0.7, ..., 3.9
        assert_eq!(tr.sampled.len(), 10);
        assert!((tr.sampled[0].t - 0.3).abs() < 1e-15);
    }

    #[test]
    fn probe_matches_grid_and_origin() {
        let (sys, grid) = toy();
        let holds = vec![Vector::from_element(1, 2.0), Vector::from_element(1, -1.0)];
        let tr = simulate_holds(&sys, &grid, &holds, &[], 3).unwrap();
        let s = &tr.sampled[2];
        let probed = intermittent_probe(&tr, &[s.t, 0.0]).unwrap();
        assert!((probed[0][0] - s.y[0]).abs() < 1e-15);
        assert_eq!(probed[1][0], 0.0);
        assert!(matches!(
            intermittent_probe(&tr, &[5.0]),
            Err(Error::ProbeOutOfSpan { .. })
        ));
        // a probe between grid points agrees with a finer simulation
        let fine = simulate_holds(&sys, &grid, &holds, &[], 1000).unwrap();
        let t = 1.2345;
        let idx = fine.index_of(1.235).unwrap();
        let p = intermittent_probe(&fine, &[t, 1.235]).unwrap();
        assert!((p[1][0] - fine.y[idx][0]).abs() < 1e-13);
        let q = intermittent_probe(&tr, &[t]).unwrap();
        assert!((p[0][0] - q[0][0]).abs() < 1e-13);
    }

    #[test]
    fn csv_roundtrip_preserves_verification() {
        let (sys, grid) = toy();
        let holds = vec![Vector::from_element(1, 0.5); 4];
        let tr = simulate_holds(&sys, &grid, &holds, &[1.5, 3.5], 2).unwrap();
        let csv = tr.to_csv();
        let back = SimTrace::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.x, tr.x);
        assert_eq!(back.sampled, tr.sampled);
        assert_eq!(back.disruption_samples, tr.disruption_samples);
        assert!(intermittent_probe(&back, &[0.1]).is_err());
    }

    #[test]
    fn rejects_wrong_hold_width() {
        let (sys, grid) = toy();
        let holds = vec![Vector::zeros(2)];
        assert!(simulate_holds(&sys, &grid, &holds, &[], 1).is_err());
    }
}
