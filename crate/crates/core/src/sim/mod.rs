//! Scenario sampling, closed-loop multi-agent trials and benchmark metrics.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ParticleParams, SystemKind, SystemParams, SystemSpec};
use crate::error::{Error, Result};
use crate::neural::ValueNetwork;
use crate::planner::{plan_step, PlanConfig, PlanProblem, PlanStatus};
use crate::seed;
use crate::value::{BoundaryValue, ValueFunction};


/// Required boundary value between every pair of starts and of goals.
pub const CLEARANCE: f64 = 0.05;
const MAX_ATTEMPTS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub system: SystemSpec,
    pub starts: Vec<Vec<f64>>,
    pub goals: Vec<Vec<f64>>,
    pub seed: u64,
}

impl Scenario {
    pub fn agents(&self) -> usize {
        self.starts.len()
    }

    pub fn kind(&self) -> SystemKind {
        self.system.kind()
    }

    /// Sum of straight-line start-to-goal distances.
    pub fn straight_line_length(&self) -> f64 {
        self.starts.iter().zip(&self.goals).map(|(s, g)| norm(&self.system.agent_difference(g, s))).sum()
    }
}

/// System used for `m` agents of `kind`: particles live in a square of
/// side `0.5 m`.
pub fn workspace_system(kind: SystemKind, m: usize) -> Result<SystemSpec> {
    match kind {
        SystemKind::Particle => Ok(SystemSpec {
            params: SystemParams::Particle(ParticleParams {
                position_bounds: [0.0, 0.5 * m as f64],
                ..ParticleParams::default()
            }),
            ..SystemSpec::particle()
        }),
        SystemKind::SimpleArm if m == 2 => Ok(SystemSpec::simple_arm()),
        SystemKind::SimpleArm => Err(Error::InvalidInput("the dual-arm system has exactly two agents".into())),
        SystemKind::Air3d => Err(Error::InvalidInput("closed-loop trials support particle and simple_arm".into())),
    }
}

/// Boundary value between agents `i < j`.
pub fn pair_boundary(sys: &SystemSpec, states: &[Vec<f64>], i: usize, j: usize) -> f64 {
    sys.boundary_value(&sys.pair_state(i, &states[i], &states[j]))
}

fn min_pairwise(sys: &SystemSpec, states: &[Vec<f64>]) -> f64 {
    let mut min = f64::INFINITY;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            min = min.min(pair_boundary(sys, states, i, j));
        }
    }
    min
}

pub fn sample_scenario(kind: SystemKind, m: usize, seed: u64) -> Result<Scenario> {
    sample_scenario_in(workspace_system(kind, m)?, m, seed)
}

/// Rejection-sample starts and goals uniformly over the agent bounds of
/// `system` so that every pair keeps a boundary value above [`CLEARANCE`].
pub fn sample_scenario_in(system: SystemSpec, m: usize, seed: u64) -> Result<Scenario> {
    if m < 2 {
        return Err(Error::InvalidInput("a scenario needs at least two agents".into()));
    }
    if system.kind() == SystemKind::Air3d {
        return Err(Error::InvalidInput("closed-loop trials support particle and simple_arm".into()));
    }
    let mut rng = seed::rng(seed);
    let bounds = system.agent_bounds();
    let mut attempts = 0;
    let mut draw = || -> Result<Vec<Vec<f64>>> {
        let mut placed: Vec<Vec<f64>> = Vec::with_capacity(m);
        while placed.len() < m {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(Error::InfeasibleScenario(format!(
                    "could not place {m} agents after {MAX_ATTEMPTS} attempts"
                )));
            }
            let candidate: Vec<f64> = bounds.iter().map(|b| rng.random_range(b[0]..b[1])).collect();
            let clear = placed.iter().enumerate().all(|(i, other)| {
                system.boundary_value(&system.pair_state(i, other, &candidate)) > CLEARANCE
            });
            if clear {
                placed.push(candidate);
            }
        }
        Ok(placed)
    };
    let starts = draw()?;
    let goals = draw()?;
    Ok(Scenario { system, starts, goals, seed })
}

/// Clipped proportional control toward the goal, ignoring everyone else.
pub fn naive_planner(sys: &SystemSpec, x: &[f64], goal: &[f64], gain: f64) -> Vec<f64> {
    let bound = sys.control_bound();
    sys.agent_difference(goal, x).iter().map(|d| (gain * d).clamp(-bound, bound)).collect()
}

#[derive(Clone)]
pub enum Method {
    Nehmo { value: ValueSource, config: PlanConfig },
    Naive { gain: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Nehmo { .. } => "nehmo",
            Method::Naive { .. } => "naive",
        }
    }
}

/// Where the planner's value function comes from.
#[derive(Clone)]
pub enum ValueSource {
    /// `V = l` for the scenario's own system.
    Boundary,
    Network(Arc<ValueNetwork>),
}

impl ValueSource {
    fn resolve(&self, sys: &SystemSpec) -> Result<Arc<dyn ValueFunction>> {
        match self {
            ValueSource::Boundary => Ok(Arc::new(BoundaryValue::new(sys.clone()))),
            ValueSource::Network(net) if &net.system == sys => Ok(net.clone()),
            ValueSource::Network(net) => Err(Error::SystemMismatch(format!(
                "network for {} cannot plan a {} scenario with these parameters",
                net.system.kind().name(),
                sys.kind().name()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sim_dt: f64,
    pub time_limit: f64,
    /// Position distance (particles) or per-joint angle (arms) counting as
    /// arrival.
    pub goal_tolerance: f64,
    /// Hold the previous control for the measured planning wall time before
    /// switching to the new one.
    pub delay_by_wall_time: bool,
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { sim_dt: 0.01, time_limit: 30.0, goal_tolerance: 0.05, delay_by_wall_time: false, record_trace: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Collision,
    Timeout,
    /// The planner raised an error; not counted in SR/CR/timeout.
    Fault,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Timeout => "timeout",
            Outcome::Fault => "fault",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub agent: usize,
    pub state: Vec<f64>,
    pub control: Vec<f64>,
    pub margins: Vec<(usize, f64)>,
    pub status: Option<PlanStatus>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub optimal: usize,
    pub feasible_suboptimal: usize,
    pub fail_safe: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub outcome: Outcome,
    pub path_lengths: Vec<f64>,
    pub straight_line: Vec<f64>,
    /// Wall seconds of every individual planning call.
    pub plan_times: Vec<f64>,
    pub statuses: StatusCounts,
    pub sim_time: f64,
    pub min_boundary: f64,
    /// Every non-fail-safe plan predicted margins above epsilon.
    pub margins_respected: bool,
    pub fault: Option<String>,
    pub trace: Vec<TraceRow>,
}

impl TrialResult {
    pub fn mean_path_length(&self) -> f64 {
        self.path_lengths.iter().sum::<f64>() / self.path_lengths.len().max(1) as f64
    }

    pub fn mean_straight_line(&self) -> f64 {
        self.straight_line.iter().sum::<f64>() / self.straight_line.len().max(1) as f64
    }

    pub fn trace_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for row in &self.trace {
            out.push_str(&serde_json::to_string(row)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn reached(sys: &SystemSpec, x: &[f64], goal: &[f64], tol: f64) -> bool {
    let diff = sys.agent_difference(x, goal);
    match sys.kind() {
        SystemKind::SimpleArm => diff.iter().all(|d| d.abs() <= tol),
        _ => norm(&diff) <= tol,
    }
}

/// Run one closed-loop trial. Every `t_plan` each unfinished agent plans
/// against the current states of all others and holds the result until the
/// next replan; finished agents hold still. Collisions are checked every
/// `sim_dt` from the boundary function alone.
pub fn run_trial(scenario: &Scenario, method: &Method, sim: &SimConfig) -> Result<TrialResult> {
    let sys = &scenario.system;
    let m = scenario.agents();
    let (value, plan_config) = match method {
        Method::Nehmo { value, config } => {
            config.validate(sys)?;
            (Some(value.resolve(sys)?), Some(config))
        }
        Method::Naive { .. } => (None, None),
    };
    let replan_period = plan_config.map_or(sim.sim_dt, |c| c.t_plan);
    if !(sim.sim_dt > 0.0) || sim.sim_dt > replan_period + 1e-12 || plan_config.is_some_and(|c| sim.sim_dt > c.dt + 1e-12) {
        return Err(Error::InvalidInput("sim_dt must be positive and no larger than the planner step".into()));
    }
    let per_plan = (replan_period / sim.sim_dt).round() as usize;
    if (per_plan as f64 * sim.sim_dt - replan_period).abs() > 1e-9 {
        return Err(Error::InvalidInput("sim_dt must divide t_plan".into()));
    }
    let max_steps = (sim.time_limit / sim.sim_dt).round() as usize;
    let zero = vec![0.0; sys.control_dim()];

    let mut states = scenario.starts.clone();
    let mut done: Vec<bool> = (0..m).map(|i| reached(sys, &states[i], &scenario.goals[i], sim.goal_tolerance)).collect();
    let mut controls = vec![zero.clone(); m];
    // pending (control, sim steps until it applies) under delayed execution
    let mut pending: Vec<Option<(Vec<f64>, usize)>> = vec![None; m];
    let mut result = TrialResult {
        outcome: Outcome::Timeout,
        path_lengths: vec![0.0; m],
        straight_line: scenario
            .starts
            .iter()
            .zip(&scenario.goals)
            .map(|(s, g)| norm(&sys.agent_difference(g, s)))
            .collect(),
        plan_times: Vec::new(),
        statuses: StatusCounts::default(),
        sim_time: 0.0,
        min_boundary: min_pairwise(sys, &states),
        margins_respected: true,
        fault: None,
        trace: Vec::new(),
    };
    if done.iter().all(|d| *d) {
        result.outcome = Outcome::Success;
        return Ok(result);
    }

    for step in 0..max_steps {
        if step % per_plan == 0 {
            for i in 0..m {
                if done[i] {
                    controls[i] = zero.clone();
                    continue;
                }
                let (control, margins, status) = match method {
                    Method::Naive { gain } => (naive_planner(sys, &states[i], &scenario.goals[i], *gain), Vec::new(), None),
                    Method::Nehmo { config, .. } => {
                        let value = value.as_deref().expect("resolved value");
                        let problem = PlanProblem {
                            value,
                            agent: i,
                            own: states[i].clone(),
                            others: (0..m).filter(|&j| j != i).map(|j| (j, states[j].clone())).collect(),
                            goal: scenario.goals[i].clone(),
                            config,
                            seed: seed::derive(scenario.seed, (step * m + i) as u64),
                        };
                        let plan = match plan_step(&problem) {
                            Ok(plan) => plan,
                            Err(e) => {
                                result.outcome = Outcome::Fault;
                                result.fault = Some(e.to_string());
                                result.sim_time = step as f64 * sim.sim_dt;
                                return Ok(result);
                            }
                        };
                        result.plan_times.push(plan.solve_seconds);
                        match plan.status {
                            PlanStatus::Optimal => result.statuses.optimal += 1,
                            PlanStatus::FeasibleSuboptimal => result.statuses.feasible_suboptimal += 1,
                            PlanStatus::FailSafe => result.statuses.fail_safe += 1,
                        }
                        if plan.status != PlanStatus::FailSafe
                            && plan.margins.iter().any(|(_, v)| *v <= config.epsilon)
                        {
                            result.margins_respected = false;
                        }
                        if sim.delay_by_wall_time {
                            let delay = (plan.solve_seconds / sim.sim_dt).ceil() as usize;
                            pending[i] = Some((plan.control.clone(), delay));
                        }
                        (plan.control, plan.margins, Some(plan.status))
                    }
                };
                if sim.record_trace {
                    result.trace.push(TraceRow {
                        step,
                        time: step as f64 * sim.sim_dt,
                        agent: i,
                        state: states[i].clone(),
                        control: control.clone(),
                        margins,
                        status,
                    });
                }
                if pending[i].is_none() {
                    controls[i] = control;
                }
            }
        }
        for i in 0..m {
            if let Some((control, wait)) = pending[i].take() {
                if wait == 0 {
                    controls[i] = control;
                } else {
                    pending[i] = Some((control, wait - 1));
                }
            }
            if done[i] {
                continue;
            }
            let next = sys.propagate(&states[i], &controls[i], sim.sim_dt).state;
            result.path_lengths[i] += norm(&sys.agent_difference(&next, &states[i]));
            states[i] = next;
        }
        result.sim_time = (step + 1) as f64 * sim.sim_dt;
        let min_l = min_pairwise(sys, &states);
        result.min_boundary = result.min_boundary.min(min_l);
        if min_l < 0.0 {
            result.outcome = Outcome::Collision;
            return Ok(result);
        }
        for i in 0..m {
            if !done[i] && reached(sys, &states[i], &scenario.goals[i], sim.goal_tolerance) {
                done[i] = true;
                controls[i] = zero.clone();
                pending[i] = None;
            }
        }
        if done.iter().all(|d| *d) {
            result.outcome = Outcome::Success;
            return Ok(result);
        }
    }
    Ok(result)
}

/// One benchmark row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub agents: usize,
    pub trials: usize,
    pub success: usize,
    pub collision: usize,
    pub timeout: usize,
    pub fault: usize,
    pub time_mean_ms: f64,
    pub time_sd_ms: f64,
    pub pl_mean: f64,
    pub pl_sd: f64,
    /// Mean straight-line distance over the same successful trials.
    pub straight_mean: f64,
    pub fail_safe_fraction: f64,
}

impl MetricsRow {
    fn counted(&self) -> f64 {
        (self.trials - self.fault).max(1) as f64
    }

    pub fn success_rate(&self) -> f64 {
        100.0 * self.success as f64 / self.counted()
    }

    pub fn collision_rate(&self) -> f64 {
        100.0 * self.collision as f64 / self.counted()
    }

    pub fn timeout_rate(&self) -> f64 {
        100.0 * self.timeout as f64 / self.counted()
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricsRow {
    pub fn from_trials(method: &str, agents: usize, trials: &[TrialResult]) -> Self {
        let count = |o: Outcome| trials.iter().filter(|t| t.outcome == o).count();
        let times: Vec<f64> = trials.iter().flat_map(|t| t.plan_times.iter().map(|s| 1e3 * s)).collect();
        let (time_mean_ms, time_sd_ms) = mean_sd(&times);
        let successes: Vec<&TrialResult> = trials.iter().filter(|t| t.outcome == Outcome::Success).collect();
        let pls: Vec<f64> = successes.iter().map(|t| t.mean_path_length()).collect();
        let straight: Vec<f64> = successes.iter().map(|t| t.mean_straight_line()).collect();
        let (pl_mean, pl_sd) = mean_sd(&pls);
        let plans: usize = trials.iter().map(|t| t.statuses.optimal + t.statuses.feasible_suboptimal + t.statuses.fail_safe).sum();
        let fail_safes: usize = trials.iter().map(|t| t.statuses.fail_safe).sum();
        MetricsRow {
            method: method.to_string(),
            agents,
            trials: trials.len(),
            success: count(Outcome::Success),
            collision: count(Outcome::Collision),
            timeout: count(Outcome::Timeout),
            fault: count(Outcome::Fault),
            time_mean_ms,
            time_sd_ms,
            pl_mean,
            pl_sd,
            straight_mean: mean_sd(&straight).0,
            fail_safe_fraction: if plans == 0 { 0.0 } else { fail_safes as f64 / plans as f64 },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, method: &str, agents: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method && r.agents == agents)
    }

    pub fn to_csv(&self, zero_wall_time: bool) -> String {
        let mut out = String::from(
            "method,agents,trials,sr_pct,cr_pct,timeout_pct,faults,time_mean_ms,time_sd_ms,pl_mean,pl_sd,straight_mean,fail_safe_fraction\n",
        );
        for r in &self.rows {
            let (tm, ts) = if zero_wall_time { (0.0, 0.0) } else { (r.time_mean_ms, r.time_sd_ms) };
            out.push_str(&format!(
                "{},{},{},{:.1},{:.1},{:.1},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                r.method,
                r.agents,
                r.trials,
                r.success_rate(),
                r.collision_rate(),
                r.timeout_rate(),
                r.fault,
                tm,
                ts,
                r.pl_mean,
                r.pl_sd,
                r.straight_mean,
                r.fail_safe_fraction
            ));
        }
        out
    }
}

/// Seed of scenario `index` for `m` agents.
pub fn scenario_seed(master: u64, m: usize, index: usize) -> u64 {
    seed::derive(seed::derive_named(master, &format!("agents-{m}")), index as u64)
}

/// One trial of the benchmark matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub method: String,
    pub agents: usize,
    pub scenario: usize,
    pub seed: u64,
    pub result: TrialResult,
}

pub fn trials_csv(records: &[TrialRecord], zero_wall_time: bool) -> String {
    let mut out = String::from(
        "method,agents,scenario,seed,outcome,sim_time,mean_pl,straight_pl,plans,fail_safes,mean_plan_ms,min_boundary\n",
    );
    for r in records {
        let t = &r.result;
        let plans = t.statuses.optimal + t.statuses.feasible_suboptimal + t.statuses.fail_safe;
        let mean_ms = if zero_wall_time || t.plan_times.is_empty() {
            0.0
        } else {
            1e3 * t.plan_times.iter().sum::<f64>() / t.plan_times.len() as f64
        };
        out.push_str(&format!(
            "{},{},{},{},{},{:.2},{:.4},{:.4},{},{},{:.4},{:.5}\n",
            r.method,
            r.agents,
            r.scenario,
            r.seed,
            t.outcome.name(),
            t.sim_time,
            t.mean_path_length(),
            t.mean_straight_line(),
            plans,
            t.statuses.fail_safe,
            mean_ms,
            t.min_boundary
        ));
    }
    out
}

/// Run every (method, agent count, scenario) combination. Trials run in
/// parallel; results are ordered by agent count, method and scenario.
pub fn run_benchmark(
    kind: SystemKind,
    agent_counts: &[usize],
    scenarios: usize,
    master_seed: u64,
    methods: &[Method],
    sim: &SimConfig,
) -> Result<(MetricsTable, Vec<TrialRecord>)> {
    if scenarios == 0 || agent_counts.is_empty() || methods.is_empty() {
        return Err(Error::InvalidInput("the benchmark needs scenarios, agent counts and methods".into()));
    }
    let mut table = MetricsTable::default();
    let mut records = Vec::new();
    for &m in agent_counts {
        let set: Vec<Scenario> =
            (0..scenarios).map(|i| sample_scenario(kind, m, scenario_seed(master_seed, m, i))).collect::<Result<_>>()?;
        for method in methods {
            let results: Vec<TrialResult> =
                set.par_iter().map(|s| run_trial(s, method, sim)).collect::<Result<_>>()?;
            table.rows.push(MetricsRow::from_trials(method.name(), m, &results));
            for (i, (s, result)) in set.iter().zip(results).enumerate() {
                records.push(TrialRecord { method: method.name().into(), agents: m, scenario: i, seed: s.seed, result });
            }
        }
    }
    Ok((table, records))
}
