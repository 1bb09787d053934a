//! Scenario documents, built-in demos and the end-to-end pipeline.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analyzer::{auto_disruption_time, check_assumption1, RedundancyReport};
use crate::attack::{synthesize, AttackPlan, ThresholdSpec};
use crate::error::{Error, Result};
use crate::lifting::{build_phi_star, DisruptionSpec, LiftedCluster};
use crate::numlin::{Matrix, Tolerances};
use crate::plant::{
    best_rational, LtiSystem, Rational, TimingGrid, DEFAULT_MAX_DENOMINATOR, RATIO_RTOL,
};
use crate::sim::{
    simulate_error, verify_with, SimTrace, VerificationReport, DEFAULT_FINE_STEPS,
    DEFAULT_STEALTH_RTOL, DEFAULT_STEALTH_TOL,
};

/// Denominator bound for the true clock of a mismatch run, which is usually
/// a poor rational.
pub const MISMATCH_MAX_DENOMINATOR: i64 = 1_000_000;

pub const DEMO_NAMES: [&str; 4] = [
    "three-state",
    "transfer-1x3",
    "transfer-1x3-mismatch",
    "x38-placeholder",
];

/// Older demo names, still accepted.
pub const DEMO_ALIASES: [(&str, &str); 3] = [
    ("sec4a", "three-state"),
    ("sec4c", "transfer-1x3"),
    ("sec4c-mismatch", "transfer-1x3-mismatch"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSpec {
    pub t_a: f64,
    pub t_s: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_denominator: Option<i64>,
}

/// `"auto"`, a single rational such as `"1/2"`, or one rational per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TStarSpec {
    Single(String),
    PerCluster(Vec<String>),
}

impl Default for TStarSpec {
    fn default() -> Self {
        TStarSpec::Single("auto".into())
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    Rational::from_str(s).ok().or_else(|| {
        s.parse::<f64>()
            .ok()
            .and_then(|x| best_rational(x, DEFAULT_MAX_DENOMINATOR, RATIO_RTOL))
    })
}

impl TStarSpec {
    pub fn is_auto(&self) -> bool {
        matches!(self, TStarSpec::Single(s) if s.trim().eq_ignore_ascii_case("auto"))
    }

    /// Explicit disruption times; empty for `"auto"`.
    pub fn explicit(&self) -> Result<Vec<Rational>> {
        let parse = |s: &String| {
            parse_rational(s)
                .ok_or_else(|| Error::scenario("t_star", format!("cannot parse `{s}` as p/q")))
        };
        match self {
            _ if self.is_auto() => Ok(Vec::new()),
            TStarSpec::Single(s) => Ok(vec![parse(s)?]),
            TStarSpec::PerCluster(v) => v.iter().map(parse).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub system: SystemSpec,
    pub timing: TimingSpec,
    pub thresholds: ThresholdSpec,
    #[serde(default)]
    pub t_star: TStarSpec,
    pub clusters: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_stealth_tol")]
    pub stealth_tol: f64,
    /// Relative rounding floor for the stealth verdict; 0 makes it purely
    /// absolute.
    #[serde(default = "default_stealth_rtol")]
    pub stealth_rtol: f64,
    #[serde(default = "default_fine_steps")]
    pub fine_steps: usize,
    /// True clock used for simulation when it differs from the design clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<TimingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<OutputSpec>,
}

fn default_stealth_tol() -> f64 {
    DEFAULT_STEALTH_TOL
}

fn default_stealth_rtol() -> f64 {
    DEFAULT_STEALTH_RTOL
}

fn default_fine_steps() -> usize {
    DEFAULT_FINE_STEPS
}

fn matrix_from_rows(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<Matrix> {
    if rows.len() != nrows {
        return Err(Error::scenario(
            field,
            format!("expected {nrows} rows, found {}", rows.len()),
        ));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::scenario(
                format!("{field}[{i}]"),
                format!("expected {ncols} columns, found {}", row.len()),
            ));
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::scenario(
                format!("{field}[{i}][{j}]"),
                "non-finite entry",
            ));
        }
    }
    Ok(Matrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().cloned(),
    ))
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

impl SystemSpec {
    pub fn from_system(sys: &LtiSystem) -> Self {
        Self {
            n: sys.n(),
            p: sys.p(),
            q: sys.q(),
            a: rows_of(sys.a()),
            b: rows_of(sys.b()),
            c: rows_of(sys.c()),
        }
    }

    pub fn build(&self) -> Result<LtiSystem> {
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::scenario("system", "n, p and q must all be >= 1"));
        }
        let a = matrix_from_rows("system.a", &self.a, self.n, self.n)?;
        let b = matrix_from_rows("system.b", &self.b, self.n, self.p)?;
        let c = matrix_from_rows("system.c", &self.c, self.q, self.n)?;
        LtiSystem::new(a, b, c)
    }
}

impl TimingSpec {
    pub fn build(&self, field: &str, default_max_den: i64) -> Result<TimingGrid> {
        TimingGrid::with_max_denominator(
            self.t_a,
            self.t_s,
            self.offset,
            self.max_denominator.unwrap_or(default_max_den),
        )
        .map_err(|e| Error::scenario(field, e.to_string()))
    }
}

/// Everything produced by one full pipeline run.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: RedundancyReport,
    pub plan: Option<AttackPlan>,
    pub trace: Option<SimTrace>,
    pub verification: Option<VerificationReport>,
}

/// Validated in-memory form of a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub system: LtiSystem,
    pub grid: TimingGrid,
    pub true_grid: TimingGrid,
    pub lifted: LiftedCluster,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::scenario(json_field(&e), e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.system.build()?;
        self.timing.build("timing", DEFAULT_MAX_DENOMINATOR)?;
        if let Some(m) = &self.mismatch {
            m.build("mismatch", MISMATCH_MAX_DENOMINATOR)?;
        }
        self.tolerances
            .validate()
            .map_err(|e| Error::scenario("tolerances", e.to_string()))?;
        self.thresholds
            .validate(self.clusters)
            .map_err(|e| Error::scenario("thresholds", e.to_string()))?;
        let explicit = self.t_star.explicit()?;
        if let TStarSpec::PerCluster(v) = &self.t_star {
            if v.len() < self.clusters {
                return Err(Error::scenario(
                    "t_star",
                    format!(
                        "{} disruption times for {} clusters",
                        v.len(),
                        self.clusters
                    ),
                ));
            }
        }
        for t in explicit {
            crate::lifting::validate_t_star(t)
                .map_err(|e| Error::scenario("t_star", e.to_string()))?;
        }
        if self.stealth_tol.is_nan() || self.stealth_tol <= 0.0 {
            return Err(Error::scenario("stealth_tol", "must be positive"));
        }
        if !(self.stealth_rtol >= 0.0 && self.stealth_rtol.is_finite()) {
            return Err(Error::scenario(
                "stealth_rtol",
                "must be finite and non-negative",
            ));
        }
        Ok(())
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let system = self.system.build()?;
        let grid = self.timing.build("timing", DEFAULT_MAX_DENOMINATOR)?;
        let true_grid = match &self.mismatch {
            Some(m) => m.build("mismatch", MISMATCH_MAX_DENOMINATOR)?,
            None => grid.clone(),
        };
        let lifted = LiftedCluster::build(&system, &grid)?;
        Ok(Prepared {
            system,
            grid,
            true_grid,
            lifted,
        })
    }

    pub fn analyze(&self, prep: &Prepared) -> Result<RedundancyReport> {
        check_assumption1(
            &prep.system,
            &prep.grid,
            &prep.lifted,
            &self.t_star.explicit()?,
            &self.tolerances,
        )
    }

    fn disruption_specs(&self, prep: &Prepared) -> Result<Vec<DisruptionSpec>> {
        let times = if self.t_star.is_auto() {
            vec![auto_disruption_time(&prep.system, &prep.lifted, &self.tolerances)?.0]
        } else {
            self.t_star.explicit()?
        };
        times
            .into_iter()
            .map(|t| build_phi_star(&prep.system, &prep.grid, t))
            .collect()
    }

    /// Runs the analyzer, then synthesizes. Infeasibility is reported as
    /// [`Error::Infeasible`] naming the failing condition.
    pub fn synthesize(&self, prep: &Prepared) -> Result<(RedundancyReport, AttackPlan)> {
        let report = self.analyze(prep)?;
        if let Some(cond) = report.failing_condition() {
            return Err(Error::Infeasible(cond.to_string()));
        }
        let specs = self.disruption_specs(prep)?;
        let plan = synthesize(
            &prep.lifted,
            &specs,
            &self.thresholds,
            self.clusters,
            &self.tolerances,
        )?;
        Ok((report, plan))
    }

    pub fn simulate(&self, prep: &Prepared, plan: &AttackPlan) -> Result<SimTrace> {
        simulate_error(&prep.system, &prep.true_grid, plan, self.fine_steps)
    }

    pub fn verify(&self, trace: &SimTrace, plan: &AttackPlan) -> VerificationReport {
        verify_with(trace, plan, self.stealth_tol, self.stealth_rtol)
    }

    /// Full pipeline. An infeasible scenario yields a report with no plan.
    pub fn run(&self) -> Result<ScenarioRun> {
        let prep = self.prepare()?;
        let report = self.analyze(&prep)?;
        if !report.feasible() {
            return Ok(ScenarioRun {
                report,
                plan: None,
                trace: None,
                verification: None,
            });
        }
        let (_, plan) = self.synthesize(&prep)?;
        let trace = self.simulate(&prep, &plan)?;
        let verification = self.verify(&trace, &plan);
        Ok(ScenarioRun {
            report,
            plan: Some(plan),
            trace: Some(trace),
            verification: Some(verification),
        })
    }

    /// Built-in scenarios.
    pub fn demo(name: &str) -> Result<Self> {
        if let Some((_, canonical)) = DEMO_ALIASES.iter().find(|(alias, _)| *alias == name) {
            return Self::demo(canonical);
        }
        match name {
            "three-state" => Ok(three_state()),
            "transfer-1x3" => Ok(transfer_example()),
            "transfer-1x3-mismatch" => {
                let mut sc = transfer_example();
                sc.name = "transfer-1x3-mismatch".into();
                sc.description =
                    "Plan designed for T_s = 0.4 s, simulated against a true sampling period of 0.4004 s.".into();
                sc.mismatch = Some(TimingSpec {
                    t_a: 1.0,
                    t_s: 0.4004,
                    offset: 0.3,
                    max_denominator: None,
                });
                Ok(sc)
            }
            "x38-placeholder" => Ok(x38_placeholder()),
            other => Err(Error::scenario(
                "demo",
                format!("unknown demo `{other}` (known: {})", DEMO_NAMES.join(", ")),
            )),
        }
    }

    /// Random scenario with `n <= 6`, `p <= 3`, `q <= 2`, coprime
    /// `α, β <= 6` and an offset on a 1/8 lattice.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=6usize);
        let p = rng.gen_range(1..=3usize);
        let q = rng.gen_range(1..=2usize);
        let (alpha, beta) = loop {
            let a = rng.gen_range(1..=6i64);
            let b = rng.gen_range(1..=6i64);
            if *Rational::new(a, b).denom() == b {
                break (a, b);
            }
        };
        let t_a = 0.5 / beta as f64 * rng.gen_range(1..=4) as f64;
        let t_s = t_a * beta as f64 / alpha as f64;
        let offset = t_s * rng.gen_range(0..8) as f64 / 8.0;
        let mut mat = |r: usize, c: usize, scale: f64| -> Vec<Vec<f64>> {
            (0..r)
                .map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0) * scale).collect())
                .collect()
        };
        let mut a = mat(n, n, 0.8);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] -= 0.5;
        }
        let b = mat(n, p, 1.0);
        let c = mat(q, n, 1.0);
        Scenario {
            name: format!("random-{seed}"),
            description: "Randomly generated test scenario (not physical data).".into(),
            system: SystemSpec { n, p, q, a, b, c },
            timing: TimingSpec {
                t_a,
                t_s,
                offset,
                max_denominator: None,
            },
            thresholds: ThresholdSpec::Linear { slope: 1.0 },
            t_star: TStarSpec::default(),
            clusters: 10,
            tolerances: Tolerances::default(),
            stealth_tol: DEFAULT_STEALTH_TOL,
            stealth_rtol: DEFAULT_STEALTH_RTOL,
            fine_steps: 4,
            mismatch: None,
            outputs: None,
        }
    }
}

/// Writes `report.json`, `plan.json`, `plan.csv`, `trace.csv` and
/// `verification.json` (whichever exist) into `dir`. Returns the paths written.
pub fn write_artifacts(run: &ScenarioRun, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put("report.json", serde_json::to_string_pretty(&run.report)?)?;
    if let Some(plan) = &run.plan {
        put("plan.json", serde_json::to_string_pretty(plan)?)?;
        put("plan.csv", plan.to_csv())?;
    }
    if let Some(trace) = &run.trace {
        put("trace.csv", trace.to_csv())?;
    }
    if let Some(v) = &run.verification {
        put("verification.json", serde_json::to_string_pretty(v)?)?;
    }
    Ok(written)
}

/// Runs scenarios concurrently, one thread each, preserving input order.
pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<ScenarioRun>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = scenarios
            .iter()
            .map(|sc| s.spawn(move || sc.run()))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Infeasible("worker panicked".into())))
            })
            .collect()
    })
}

fn json_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "scenario".into())
}

fn three_state() -> Scenario {
    Scenario {
        name: "three-state".into(),
        description: "Three-state plant, two inputs, one output, T_a = T_s = 1 s, no offset."
            .into(),
        system: SystemSpec {
            n: 3,
            p: 2,
            q: 1,
            a: vec![
                vec![-1.0, 0.0, 0.0],
                vec![0.0, -5.0, -3.0],
                vec![0.0, 2.0, 0.0],
            ],
            b: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]],
            c: vec![vec![1.0, 0.0, 1.0]],
        },
        timing: TimingSpec {
            t_a: 1.0,
            t_s: 1.0,
            offset: 0.0,
            max_denominator: None,
        },
        thresholds: ThresholdSpec::Linear { slope: 1.0 },
        t_star: TStarSpec::default(),
        clusters: 10,
        tolerances: Tolerances::default(),
        stealth_tol: DEFAULT_STEALTH_TOL,
        stealth_rtol: DEFAULT_STEALTH_RTOL,
        fine_steps: DEFAULT_FINE_STEPS,
        mismatch: None,
        outputs: None,
    }
}

/// Block-diagonal companion realization of
/// `[1/(s+1), 2/((s+2)(s+3)), 4/((s+4)(s+5))]`.
fn transfer_example() -> Scenario {
    Scenario {
        name: "transfer-1x3".into(),
        description:
            "Minimal realization of a 1x3 transfer matrix, T_a = 1 s, T_s = 0.4 s, offset 0.3 s."
                .into(),
        system: SystemSpec {
            n: 5,
            p: 3,
            q: 1,
            a: vec![
                vec![-1.0, 0.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0, 0.0],
                vec![0.0, -6.0, -5.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, 0.0, 1.0],
                vec![0.0, 0.0, 0.0, -20.0, -9.0],
            ],
            b: vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
            c: vec![vec![1.0, 2.0, 0.0, 4.0, 0.0]],
        },
        timing: TimingSpec {
            t_a: 1.0,
            t_s: 0.4,
            offset: 0.3,
            max_denominator: None,
        },
        thresholds: ThresholdSpec::Linear { slope: 10.0 },
        t_star: TStarSpec::default(),
        clusters: 20,
        tolerances: Tolerances::default(),
        stealth_tol: DEFAULT_STEALTH_TOL,
        stealth_rtol: DEFAULT_STEALTH_RTOL,
        fine_steps: DEFAULT_FINE_STEPS,
        mismatch: None,
        outputs: None,
    }
}

/// Synthetic plant with the X-38 dimensions (n = 11, p = 3, q = 9, R = 4).
/// The matrices are NOT vehicle data; they only exercise the same shapes.
fn x38_placeholder() -> Scenario {
    let (n, p, q) = (11usize, 3usize, 9usize);
    let a = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        -0.4 - 0.15 * i as f64
                    } else {
                        0.3 * ((i * 7 + j * 3) as f64).sin() / (1.0 + (i as f64 - j as f64).abs())
                    }
                })
                .collect()
        })
        .collect();
    let b = (0..n)
        .map(|i| {
            (0..p)
                .map(|j| ((i * 5 + j * 11 + 1) as f64).cos())
                .collect()
        })
        .collect();
    let c = (0..q)
        .map(|i| {
            (0..n)
                .map(|j| ((i * 3 + j * 13 + 2) as f64).sin())
                .collect()
        })
        .collect();
    Scenario {
        name: "x38-placeholder".into(),
        description: "PLACEHOLDER: synthetic matrices with X-38 dimensions (n=11, p=3, q=9, R=4); not vehicle data."
            .into(),
        system: SystemSpec { n, p, q, a, b, c },
        timing: TimingSpec {
            t_a: 0.04,
            t_s: 0.16,
            offset: 0.0,
            max_denominator: None,
        },
        thresholds: ThresholdSpec::Linear { slope: 0.5 },
        t_star: TStarSpec::default(),
        clusters: 25,
        tolerances: Tolerances::default(),
        stealth_tol: DEFAULT_STEALTH_TOL,
        stealth_rtol: DEFAULT_STEALTH_RTOL,
        fine_steps: 10,
        mismatch: None,
        outputs: None,
    }
}
