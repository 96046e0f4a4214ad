//! One decentralized MPC step: pick a constant control for the next
//! `t_plan` seconds that keeps the value margin against every other agent
//! above `epsilon`, assuming each of them plays its worst-case control.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::seed;
use crate::value::ValueFunction;


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub t_plan: f64,
    pub t_safe: f64,
    pub epsilon: f64,
    /// Rollout integration step; must divide `t_plan`.
    pub dt: f64,
    pub goal_weight: f64,
    pub control_weight: f64,
    /// Projected-gradient iterations per start and penalty round.
    pub max_iterations: usize,
    pub random_starts: usize,
    pub penalty_rounds: usize,
    pub initial_penalty: f64,
    /// Wall-clock budget as a fraction of `t_plan`.
    pub timeout_factor: f64,
    pub enforce_timeout: bool,
    /// Re-infer the adversary controls at every rollout substep instead of
    /// once per horizon.
    pub adversary_per_substep: bool,
    /// Ignore agents whose current boundary value exceeds this. For `V = l`
    /// any radius of at least `epsilon + 2 * max_speed * t_plan` changes
    /// nothing.
    pub neighbor_radius: Option<f64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            t_plan: 0.02,
            t_safe: 0.5,
            epsilon: 0.02,
            dt: 0.01,
            goal_weight: 1.0,
            control_weight: 1e-3,
            max_iterations: 25,
            random_starts: 3,
            penalty_rounds: 3,
            initial_penalty: 100.0,
            timeout_factor: 0.8,
            enforce_timeout: true,
            adversary_per_substep: true,
            neighbor_radius: None,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self, sys: &SystemSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.t_plan > 0.0 && self.t_plan < sys.horizon) || !(self.t_safe > 0.0 && self.t_safe < sys.horizon) {
            return bad(format!("t_plan and t_safe must lie in (0, {})", sys.horizon));
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative".into());
        }
        if !(self.dt > 0.0) || (self.t_plan / self.dt - (self.t_plan / self.dt).round()).abs() > 1e-9 {
            return bad(format!("dt {} must divide t_plan {}", self.dt, self.t_plan));
        }
        if self.max_iterations == 0 || self.penalty_rounds == 0 || !(self.initial_penalty > 0.0) {
            return bad("optimizer budget must be positive".into());
        }
        if !(self.goal_weight >= 0.0 && self.control_weight >= 0.0) {
            return bad("cost weights must be non-negative".into());
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.t_plan / self.dt).round() as usize
    }
}

/// Inputs of one planning step for agent `agent`.
pub struct PlanProblem<'a> {
    pub value: &'a dyn ValueFunction,
    pub agent: usize,
    pub own: Vec<f64>,
    /// Other agents as `(index, state)`.
    pub others: Vec<(usize, Vec<f64>)>,
    pub goal: Vec<f64>,
    pub config: &'a PlanConfig,
    /// Seeds the random multistarts.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Optimal,
    FeasibleSuboptimal,
    FailSafe,
}

impl PlanStatus {
    pub fn name(self) -> &'static str {
        match self {
            PlanStatus::Optimal => "optimal",
            PlanStatus::FeasibleSuboptimal => "feasible_suboptimal",
            PlanStatus::FailSafe => "fail_safe",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub control: Vec<f64>,
    pub status: PlanStatus,
    /// Predicted `V(T - t_safe, .)` at the end of the horizon, per
    /// considered agent index. Empty for fail-safe plans.
    pub margins: Vec<(usize, f64)>,
    pub cost: f64,
    pub rollouts: usize,
    pub solve_seconds: f64,
}

/// Outcome of rolling a constant control forward.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub own: Vec<f64>,
    pub others: Vec<Vec<f64>>,
    pub cost: f64,
}

/// How the other agents move during a rollout.
#[derive(Clone, Debug)]
pub enum Adversary {
    /// Worst-case controls inferred from the value gradient.
    Inferred { per_substep: bool },
    /// Fixed controls, one per other agent (test harnesses).
    Fixed(Vec<Vec<f64>>),
}

/// The pursuer control of `other` against `own` that minimizes the
/// Hamiltonian at `(tau, pair state)`, in `other`'s own coordinates.
pub fn infer_adversary_control(
    value: &dyn ValueFunction,
    agent: usize,
    tau: f64,
    own: &[f64],
    other: &[f64],
) -> Result<Vec<f64>> {
    let sys = value.system();
    let joint = sys.pair_state(agent, own, other);
    let e = value.evaluate(tau, &joint)?;
    let (_, d) = sys.optimal_controls(&joint, &e.grad_x);
    Ok(match sys.kind() {
        SystemKind::Air3d => d,
        _ => sys.control_from_frame(sys.agent_frame(agent), &d),
    })
}

/// Evader-optimal control of `own` against `other` at `(t, pair state)`.
fn evasion_control(value: &dyn ValueFunction, agent: usize, t: f64, own: &[f64], other: &[f64]) -> Result<Vec<f64>> {
    let sys = value.system();
    let joint = sys.pair_state(agent, own, other);
    let e = value.evaluate(t, &joint)?;
    let (u, _) = sys.optimal_controls(&joint, &e.grad_x);
    Ok(match sys.kind() {
        SystemKind::Air3d => u,
        _ => sys.control_from_frame(sys.agent_frame(agent), &u),
    })
}

fn stage_cost(sys: &SystemSpec, config: &PlanConfig, x: &[f64], goal: &[f64], u: &[f64]) -> f64 {
    let diff = sys.agent_difference(x, goal);
    let g: f64 = diff.iter().map(|v| v * v).sum();
    let e: f64 = u.iter().map(|v| v * v).sum();
    config.goal_weight * g + config.control_weight * e
}

/// Euler rollout of `own` under the constant control `u` for `t_plan`,
/// with the others driven by `adversary`. The cost is the left Riemann
/// sum of the stage cost.
pub fn rollout(
    value: &dyn ValueFunction,
    agent: usize,
    own: &[f64],
    others: &[(usize, Vec<f64>)],
    goal: &[f64],
    u: &[f64],
    config: &PlanConfig,
    adversary: &Adversary,
) -> Result<Rollout> {
    let sys = value.system();
    let tau = sys.horizon - config.t_plan;
    let mut x = own.to_vec();
    let mut xs: Vec<Vec<f64>> = others.iter().map(|(_, s)| s.clone()).collect();
    let mut ds: Vec<Vec<f64>> = match adversary {
        Adversary::Fixed(d) => d.clone(),
        Adversary::Inferred { .. } => Vec::new(),
    };
    let mut cost = 0.0;
    for k in 0..config.substeps() {
        if let Adversary::Inferred { per_substep } = adversary {
            if k == 0 || *per_substep {
                ds = xs
                    .iter()
                    .map(|xi| infer_adversary_control(value, agent, tau, &x, xi))
                    .collect::<Result<_>>()?;
            }
        }
        cost += config.dt * stage_cost(sys, config, &x, goal, u);
        x = sys.propagate(&x, u, config.dt).state;
        for (xi, d) in xs.iter_mut().zip(&ds) {
            *xi = sys.propagate_pursuer(xi, d, config.dt).state;
        }
    }
    Ok(Rollout { own: x, others: xs, cost })
}

/// Cost and terminal margins of a candidate control.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEvaluation {
    pub cost: f64,
    pub margins: Vec<(usize, f64)>,
}

impl PlanEvaluation {
    pub fn feasible(&self, epsilon: f64) -> bool {
        self.margins.iter().all(|(_, m)| *m > epsilon)
    }

    fn objective(&self, epsilon: f64, mu: f64) -> f64 {
        let violation: f64 = self.margins.iter().map(|(_, m)| (epsilon + PENALTY_OFFSET - m).max(0.0).powi(2)).sum();
        self.cost + mu * violation
    }
}

/// The penalty targets a margin slightly above `epsilon` so that penalty
/// minimizers are strictly feasible.
const PENALTY_OFFSET: f64 = 1e-3;

pub fn evaluate_plan(problem: &PlanProblem<'_>, u: &[f64]) -> Result<PlanEvaluation> {
    let sys = problem.value.system();
    let config = problem.config;
    let adversary = Adversary::Inferred { per_substep: config.adversary_per_substep };
    let r = rollout(problem.value, problem.agent, &problem.own, &problem.others, &problem.goal, u, config, &adversary)?;
    let t_margin = sys.horizon - config.t_safe;
    let mut margins = Vec::with_capacity(r.others.len());
    for ((index, _), xi) in problem.others.iter().zip(&r.others) {
        let joint = sys.pair_state(problem.agent, &r.own, xi);
        let m = problem.value.value(t_margin, &joint)?;
        if !m.is_finite() {
            return Err(Error::NonFinite { context: "value margin", time: t_margin });
        }
        margins.push((*index, m));
    }
    Ok(PlanEvaluation { cost: r.cost, margins })
}

/// Evade the most threatening agent: the one with the smallest
/// `V(T - t_safe, .)`, ties to the lowest index. Zero with no others.
pub fn fail_safe_control(
    value: &dyn ValueFunction,
    agent: usize,
    own: &[f64],
    others: &[(usize, Vec<f64>)],
    config: &PlanConfig,
) -> Result<Vec<f64>> {
    let sys = value.system();
    let t = sys.horizon - config.t_safe;
    let mut worst: Option<(f64, usize, &Vec<f64>)> = None;
    for (index, xi) in others {
        let v = value.value(t, &sys.pair_state(agent, own, xi))?;
        let better = match worst {
            None => true,
            Some((w, wi, _)) => v < w || (v == w && *index < wi),
        };
        if better {
            worst = Some((v, *index, xi));
        }
    }
    match worst {
        None => Ok(vec![0.0; sys.control_dim()]),
        Some((_, _, xi)) => evasion_control(value, agent, t, own, xi),
    }
}

fn goal_pointing(sys: &SystemSpec, own: &[f64], goal: &[f64], t_plan: f64) -> Vec<f64> {
    let bound = sys.control_bound();
    match sys.kind() {
        SystemKind::Air3d => {
            let heading = (goal[1] - own[1]).atan2(goal[0] - own[0]);
            vec![(wrap_angle(heading - own[2]) / t_plan).clamp(-bound, bound)]
        }
        _ => sys.agent_difference(goal, own).iter().map(|d| (d / t_plan).clamp(-bound, bound)).collect(),
    }
}

struct Search<'p, 'a> {
    problem: &'p PlanProblem<'a>,
    bound: f64,
    started: Instant,
    deadline: Option<f64>,
    rollouts: usize,
    best: Option<(PlanEvaluation, Vec<f64>, bool)>,
}

impl Search<'_, '_> {
    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| self.started.elapsed().as_secs_f64() > d)
    }

    fn eval(&mut self, u: &[f64]) -> Result<PlanEvaluation> {
        self.rollouts += 1;
        let e = evaluate_plan(self.problem, u)?;
        let eps = self.problem.config.epsilon;
        if e.feasible(eps) && self.best.as_ref().is_none_or(|(b, _, _)| e.cost < b.cost) {
            self.best = Some((e.clone(), u.to_vec(), false));
        }
        Ok(e)
    }

    fn objective(&mut self, u: &[f64], mu: f64) -> Result<f64> {
        let eps = self.problem.config.epsilon;
        Ok(self.eval(u)?.objective(eps, mu))
    }

    /// Projected descent from `start`. Returns whether it converged.
    fn descend(&mut self, start: &[f64], mu: f64) -> Result<bool> {
        let h = 1e-5 * self.bound;
        let tol = 1e-4 * self.bound;
        let mut u = start.to_vec();
        let mut j = self.objective(&u, mu)?;
        let mut step = 0.5 * self.bound;
        for _ in 0..self.problem.config.max_iterations {
            if self.timed_out() {
                return Ok(false);
            }
            let mut grad = vec![0.0; u.len()];
            for k in 0..u.len() {
                let mut up = u.clone();
                let mut um = u.clone();
                up[k] = (u[k] + h).min(self.bound);
                um[k] = (u[k] - h).max(-self.bound);
                let span = up[k] - um[k];
                grad[k] = (self.objective(&up, mu)? - self.objective(&um, mu)?) / span;
            }
            // drop components pushing against an active bound
            for (g, v) in grad.iter_mut().zip(&u) {
                if (*v >= self.bound && *g < 0.0) || (*v <= -self.bound && *g > 0.0) {
                    *g = 0.0;
                }
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Ok(true);
            }
            loop {
                let trial: Vec<f64> =
                    u.iter().zip(&grad).map(|(v, g)| (v - step * g / norm).clamp(-self.bound, self.bound)).collect();
                let jt = self.objective(&trial, mu)?;
                if jt < j {
                    u = trial;
                    j = jt;
                    step = (2.0 * step).min(2.0 * self.bound);
                    break;
                }
                step *= 0.5;
                if step < tol {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// Minimize the rollout cost subject to `margin_i > epsilon` for every
/// other agent, falling back to [`fail_safe_control`].
pub fn solve_opt(problem: &PlanProblem<'_>) -> Result<PlanResult> {
    let started = Instant::now();
    let sys = problem.value.system();
    let config = problem.config;
    config.validate(sys)?;
    let n = sys.control_dim();
    let bound = sys.control_bound();
    if problem.own.len() != sys.agent_dim() || problem.goal.len() != sys.agent_dim() {
        return Err(Error::ShapeMismatch("agent state or goal has the wrong length".into()));
    }

    let fail_safe = fail_safe_control(problem.value, problem.agent, &problem.own, &problem.others, config)?;
    let mut starts = vec![goal_pointing(sys, &problem.own, &problem.goal, config.t_plan)];
    if !problem.others.is_empty() {
        starts.push(fail_safe.clone());
    }
    let mut rng = seed::rng(problem.seed);
    for _ in 0..config.random_starts {
        starts.push((0..n).map(|_| rng.random_range(-bound..=bound)).collect());
    }

    let deadline = config.enforce_timeout.then_some(config.timeout_factor * config.t_plan);
    let mut search = Search { problem, bound, started, deadline, rollouts: 0, best: None };
    let mut mu = config.initial_penalty;
    'rounds: for _ in 0..config.penalty_rounds {
        for start in &starts {
            if search.timed_out() {
                break 'rounds;
            }
            let before = search.best.as_ref().map(|b| b.1.clone());
            let converged = search.descend(start, mu)?;
            if let Some(best) = search.best.as_mut() {
                if before.as_ref() != Some(&best.1) {
                    best.2 = converged;
                }
            }
        }
        if search.best.is_some() {
            break;
        }
        mu *= 10.0;
    }

    let rollouts = search.rollouts;
    let result = match search.best {
        Some((eval, control, converged)) => PlanResult {
            control,
            status: if converged { PlanStatus::Optimal } else { PlanStatus::FeasibleSuboptimal },
            margins: eval.margins,
            cost: eval.cost,
            rollouts,
            solve_seconds: 0.0,
        },
        None => PlanResult {
            control: fail_safe,
            status: PlanStatus::FailSafe,
            margins: Vec::new(),
            cost: f64::NAN,
            rollouts,
            solve_seconds: 0.0,
        },
    };
    Ok(PlanResult { solve_seconds: started.elapsed().as_secs_f64(), ..result })
}

/// Perceive (optionally dropping distant agents), solve, fall back, and
/// record the wall time.
pub fn plan_step(problem: &PlanProblem<'_>) -> Result<PlanResult> {
    let started = Instant::now();
    let sys = problem.value.system();
    let result = match problem.config.neighbor_radius {
        Some(radius) => {
            let others: Vec<(usize, Vec<f64>)> = problem
                .others
                .iter()
                .filter(|(_, xi)| sys.boundary_value(&sys.pair_state(problem.agent, &problem.own, xi)) <= radius)
                .cloned()
                .collect();
            let pruned = PlanProblem { others, goal: problem.goal.clone(), own: problem.own.clone(), ..*problem };
            solve_opt(&pruned)?
        }
        None => solve_opt(problem)?,
    };
    Ok(PlanResult { solve_seconds: started.elapsed().as_secs_f64(), ..result })
}
