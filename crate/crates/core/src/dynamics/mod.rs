//! Benchmark two-agent systems: flows, collision boundary functions,
//! closed-form Hamiltonians, bang-bang optimal controls and symmetry maps.
//!
//! Joint states are plain `&[f64]` slices. For Particle and SimpleArm the
//! layout is `(own agent coords, other agent coords)`; Air3D uses the
//! relative frame `(x, y, heading)` of the pursuer as seen by the evader.
//!
//! Every system is control affine, so with costate `p` the inner product
//! `<p, g(x, u, d)>` splits into a drift term plus one coefficient per
//! control and disturbance component. The Hamiltonian and the optimal
//! controls are both read off that split.

pub mod geometry;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use geometry::{segment_contact, two_link_jacobians, two_link_points, Point};

/// Tolerance on control-box membership checks.
const BOUND_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Particle,
    Air3d,
    SimpleArm,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Particle => "particle",
            SystemKind::Air3d => "air3d",
            SystemKind::SimpleArm => "simple_arm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleParams {
    pub radius: f64,
    pub control_bound: f64,
    /// Bounds of each position coordinate.
    pub position_bounds: [f64; 2],
}

impl Default for ParticleParams {
    fn default() -> Self {
        Self { radius: 0.1, control_bound: 1.0, position_bounds: [-1.0, 1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Air3dParams {
    pub v_evader: f64,
    pub v_pursuer: f64,
    /// Turn-rate bound shared by evader and pursuer.
    pub omega_max: f64,
    pub collision_radius: f64,
    /// Bounds of the two relative position coordinates.
    pub position_bounds: [f64; 2],
}

impl Default for Air3dParams {
    fn default() -> Self {
        Self {
            v_evader: 0.75,
            v_pursuer: 0.75,
            omega_max: 3.0,
            collision_radius: 0.25,
            position_bounds: [-1.0, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    /// Fixed base of the first and second arm.
    pub bases: [Point; 2],
    pub link_lengths: [f64; 2],
    pub capsule_radius: f64,
    pub control_bound: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            bases: [[-0.5, 0.0], [0.5, 0.0]],
            link_lengths: [0.4, 0.4],
            capsule_radius: 0.05,
            control_bound: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemParams {
    Particle(ParticleParams),
    Air3d(Air3dParams),
    SimpleArm(ArmParams),
}

/// A two-agent system together with its reachability horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(flatten)]
    pub params: SystemParams,
}

fn default_horizon() -> f64 {
    1.0
}

/// Costate inner product `<p, g(x, u, d)>` split into its affine pieces.
#[derive(Clone, Copy, Debug)]
pub struct CostateSplit {
    pub drift: f64,
    pub u_coef: [f64; 2],
    pub d_coef: [f64; 2],
    pub n: usize,
}

/// Which coordinate frame an agent's pairwise joint states are built in.
/// Only the right-hand arm of SimpleArm needs a change of frame: the scene
/// mirrored about the vertical axis puts it on the left base.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AgentFrame {
    Identity,
    Mirror,
}

/// Result of one per-agent integration step.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagated {
    pub state: Vec<f64>,
    /// A non-periodic coordinate left its bounds and was clamped.
    pub clamped: bool,
}

/// Outcome of a numerical check of the symmetry-theorem premises.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub samples: usize,
    pub max_boundary_violation: f64,
    pub max_hamiltonian_violation: f64,
    pub tolerance: f64,
    pub symmetric: bool,
}

/// Wrap an angle into `[-pi, pi)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    if (-PI..PI).contains(&a) {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid can round up to exactly 2*pi
    if w >= PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[inline]
fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl SystemSpec {
    pub fn particle() -> Self {
        Self { horizon: 1.0, params: SystemParams::Particle(ParticleParams::default()) }
    }

    pub fn air3d() -> Self {
        Self { horizon: 1.0, params: SystemParams::Air3d(Air3dParams::default()) }
    }

    pub fn simple_arm() -> Self {
        Self { horizon: 1.0, params: SystemParams::SimpleArm(ArmParams::default()) }
    }

    pub fn default_for(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Particle => Self::particle(),
            SystemKind::Air3d => Self::air3d(),
            SystemKind::SimpleArm => Self::simple_arm(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
            }
        };
        let interval = |name: &str, b: [f64; 2]| {
            if b[0] < b[1] && b[0].is_finite() && b[1].is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{name} must be an increasing interval")))
            }
        };
        positive("horizon", self.horizon)?;
        match &self.params {
            SystemParams::Particle(p) => {
                positive("radius", p.radius)?;
                positive("control_bound", p.control_bound)?;
                interval("position_bounds", p.position_bounds)
            }
            SystemParams::Air3d(p) => {
                positive("v_evader", p.v_evader)?;
                positive("v_pursuer", p.v_pursuer)?;
                positive("omega_max", p.omega_max)?;
                positive("collision_radius", p.collision_radius)?;
                interval("position_bounds", p.position_bounds)
            }
            SystemParams::SimpleArm(p) => {
                positive("link_lengths[0]", p.link_lengths[0])?;
                positive("link_lengths[1]", p.link_lengths[1])?;
                positive("capsule_radius", p.capsule_radius)?;
                positive("control_bound", p.control_bound)
            }
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self.params {
            SystemParams::Particle(_) => SystemKind::Particle,
            SystemParams::Air3d(_) => SystemKind::Air3d,
            SystemParams::SimpleArm(_) => SystemKind::SimpleArm,
        }
    }

    pub fn joint_dim(&self) -> usize {
        match self.kind() {
            SystemKind::Air3d => 3,
            _ => 4,
        }
    }

    /// Dimension of one agent's own state.
    pub fn agent_dim(&self) -> usize {
        match self.kind() {
            SystemKind::Air3d => 3,
            _ => 2,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self.kind() {
            SystemKind::Air3d => 1,
            _ => 2,
        }
    }

    /// Box bound on every control and disturbance component.
    pub fn control_bound(&self) -> f64 {
        match &self.params {
            SystemParams::Particle(p) => p.control_bound,
            SystemParams::Air3d(p) => p.omega_max,
            SystemParams::SimpleArm(p) => p.control_bound,
        }
    }

    pub fn state_bounds(&self) -> Vec<[f64; 2]> {
        match &self.params {
            SystemParams::Particle(p) => vec![p.position_bounds; 4],
            SystemParams::Air3d(p) => vec![p.position_bounds, p.position_bounds, [-PI, PI]],
            SystemParams::SimpleArm(_) => vec![[-PI, PI]; 4],
        }
    }

    pub fn periodic_mask(&self) -> Vec<bool> {
        match self.kind() {
            SystemKind::Particle => vec![false; 4],
            SystemKind::Air3d => vec![false, false, true],
            SystemKind::SimpleArm => vec![true; 4],
        }
    }

    /// Bounds of one agent's own coordinates (Air3D agents live in the
    /// plane with a heading and are not bounded by the relative box).
    pub fn agent_bounds(&self) -> Vec<[f64; 2]> {
        match &self.params {
            SystemParams::Particle(p) => vec![p.position_bounds; 2],
            SystemParams::Air3d(_) => {
                vec![[f64::NEG_INFINITY, f64::INFINITY], [f64::NEG_INFINITY, f64::INFINITY], [-PI, PI]]
            }
            SystemParams::SimpleArm(_) => vec![[-PI, PI]; 2],
        }
    }

    pub fn agent_periodic_mask(&self) -> Vec<bool> {
        match self.kind() {
            SystemKind::Particle => vec![false; 2],
            SystemKind::Air3d => vec![false, false, true],
            SystemKind::SimpleArm => vec![true; 2],
        }
    }

    /// Wrap periodic coordinates of a joint state in place.
    pub fn wrap_joint(&self, x: &mut [f64]) {
        for (v, periodic) in x.iter_mut().zip(self.periodic_mask()) {
            if periodic {
                *v = wrap_angle(*v);
            }
        }
    }

    /// Check that a joint state lies in the state box (periodic coordinates
    /// are accepted anywhere and are wrapped by callers).
    pub fn check_joint(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.joint_dim() {
            return Err(Error::ShapeMismatch(format!(
                "joint state has {} coordinates, expected {}",
                x.len(),
                self.joint_dim()
            )));
        }
        for (dim, ((&v, b), periodic)) in
            x.iter().zip(self.state_bounds()).zip(self.periodic_mask()).enumerate()
        {
            if !v.is_finite() || (!periodic && (v < b[0] - 1e-12 || v > b[1] + 1e-12)) {
                return Err(Error::OutOfBounds { dim, value: v, lo: b[0], hi: b[1] });
            }
        }
        Ok(())
    }

    fn check_controls(&self, u: &[f64], d: &[f64]) -> Result<()> {
        let bound = self.control_bound();
        let n = self.control_dim();
        if u.len() != n || d.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "controls must have {n} components, got {} and {}",
                u.len(),
                d.len()
            )));
        }
        for (index, &value) in u.iter().chain(d).enumerate() {
            if !(value.abs() <= bound + BOUND_SLACK) {
                return Err(Error::ControlBound { index, value, bound });
            }
        }
        Ok(())
    }

    /// Joint-state derivative `g(x, u, d)`.
    pub fn flow(&self, x: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        self.check_controls(u, d)?;
        Ok(self.flow_unchecked(x, u, d))
    }

    pub(crate) fn flow_unchecked(&self, x: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
        match &self.params {
            SystemParams::Particle(_) | SystemParams::SimpleArm(_) => vec![u[0], u[1], d[0], d[1]],
            SystemParams::Air3d(p) => vec![
                -p.v_evader + p.v_pursuer * x[2].cos() + u[0] * x[1],
                p.v_pursuer * x[2].sin() - u[0] * x[0],
                d[0] - u[0],
            ],
        }
    }

    /// Split `<p, g(x, u, d)>` into drift and control coefficients.
    pub fn costate_split(&self, x: &[f64], p: &[f64]) -> CostateSplit {
        match &self.params {
            SystemParams::Particle(_) | SystemParams::SimpleArm(_) => {
                CostateSplit { drift: 0.0, u_coef: [p[0], p[1]], d_coef: [p[2], p[3]], n: 2 }
            }
            SystemParams::Air3d(a) => {
                let (s3, c3) = x[2].sin_cos();
                CostateSplit {
                    drift: p[0] * (-a.v_evader + a.v_pursuer * c3) + p[1] * a.v_pursuer * s3,
                    u_coef: [x[1] * p[0] - x[0] * p[1] - p[2], 0.0],
                    d_coef: [p[2], 0.0],
                    n: 1,
                }
            }
        }
    }

    /// `max_u min_d <p, g(x, u, d)>` over the control boxes.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        let split = self.costate_split(x, p);
        let bound = self.control_bound();
        let mut h = split.drift;
        for j in 0..split.n {
            h += bound * split.u_coef[j].abs() - bound * split.d_coef[j].abs();
        }
        h
    }

    /// Bang-bang maximiser `u*` and minimiser `d*` of the Hamiltonian.
    /// A zero coefficient yields a zero control component.
    pub fn optimal_controls(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let split = self.costate_split(x, p);
        let bound = self.control_bound();
        let u = (0..split.n).map(|j| bound * sign0(split.u_coef[j])).collect();
        let d = (0..split.n).map(|j| -bound * sign0(split.d_coef[j])).collect();
        (u, d)
    }

    /// Gradient of the Hamiltonian with respect to the costate, which is the
    /// flow evaluated at the optimal controls.
    pub fn hamiltonian_costate_gradient(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let (u, d) = self.optimal_controls(x, p);
        self.flow_unchecked(x, &u, &d)
    }

    /// Upper bounds on `|dH/dp_i|` over the given state box, one per joint
    /// coordinate. Used as Lax-Friedrichs dissipation coefficients.
    pub fn dissipation_bounds(&self, bounds: &[[f64; 2]]) -> Vec<f64> {
        match &self.params {
            SystemParams::Particle(p) => vec![p.control_bound; 4],
            SystemParams::SimpleArm(p) => vec![p.control_bound; 4],
            SystemParams::Air3d(a) => {
                let max_abs = |b: [f64; 2]| b[0].abs().max(b[1].abs());
                vec![
                    a.v_evader + a.v_pursuer + a.omega_max * max_abs(bounds[1]),
                    a.v_pursuer + a.omega_max * max_abs(bounds[0]),
                    2.0 * a.omega_max,
                ]
            }
        }
    }

    /// Collision boundary function `l(x)`; negative inside the collision set.
    pub fn boundary_value(&self, x: &[f64]) -> f64 {
        match &self.params {
            SystemParams::Particle(p) => {
                let dx = x[0] - x[2];
                let dy = x[1] - x[3];
                (dx * dx + dy * dy).sqrt() - 2.0 * p.radius
            }
            SystemParams::Air3d(a) => (x[0] * x[0] + x[1] * x[1]).sqrt() - a.collision_radius,
            SystemParams::SimpleArm(arm) => arm_contact(arm, x).distance - 2.0 * arm.capsule_radius,
        }
    }

    /// `l(x)` together with its gradient. Kinks (coincident particles, the
    /// Air3D origin, touching links) get a zero gradient; SimpleArm uses the
    /// closest link pair, ties to the first pair.
    pub fn boundary_value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match &self.params {
            SystemParams::Particle(p) => {
                let dx = x[0] - x[2];
                let dy = x[1] - x[3];
                let r = (dx * dx + dy * dy).sqrt();
                let g = if r > 0.0 {
                    vec![dx / r, dy / r, -dx / r, -dy / r]
                } else {
                    vec![0.0; 4]
                };
                (r - 2.0 * p.radius, g)
            }
            SystemParams::Air3d(a) => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let g = if r > 0.0 { vec![x[0] / r, x[1] / r, 0.0] } else { vec![0.0; 3] };
                (r - a.collision_radius, g)
            }
            SystemParams::SimpleArm(arm) => {
                let c = arm_contact(arm, x);
                (c.distance - 2.0 * arm.capsule_radius, c.gradient.to_vec())
            }
        }
    }

    /// Symmetry map `f` (an involution for every system here).
    pub fn symmetry_map(&self, x: &[f64]) -> Vec<f64> {
        match self.kind() {
            SystemKind::Particle => x.to_vec(),
            SystemKind::Air3d => vec![x[0], -x[1], wrap_angle(-x[2])],
            SystemKind::SimpleArm => x.iter().map(|&v| wrap_angle(-v)).collect(),
        }
    }

    /// Diagonal of the Jacobian of `symmetry_map`.
    pub fn symmetry_jacobian(&self) -> Vec<f64> {
        match self.kind() {
            SystemKind::Particle => vec![1.0; 4],
            SystemKind::Air3d => vec![1.0, -1.0, -1.0],
            SystemKind::SimpleArm => vec![-1.0; 4],
        }
    }

    /// Membership in the half of the state space used for symmetric training.
    pub fn in_train_region(&self, x: &[f64]) -> bool {
        match self.kind() {
            SystemKind::Particle => true,
            SystemKind::Air3d => x[1] >= 0.0,
            SystemKind::SimpleArm => x[0] >= 0.0,
        }
    }

    /// Sample a joint state uniformly from the state box.
    pub fn sample_joint<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.state_bounds().iter().map(|b| rng.random_range(b[0]..b[1])).collect()
    }

    /// Check the premises of the value-symmetry theorem on `n` random
    /// `(x, p)` pairs using the system's own map.
    pub fn validate_symmetry(&self, n: usize, seed: u64) -> Result<SymmetryReport> {
        let jac = self.symmetry_jacobian();
        self.validate_symmetry_with(|x| self.symmetry_map(x), &jac, n, seed)
    }

    /// Same check for an arbitrary candidate map with diagonal Jacobian
    /// `jacobian`. The costate transforms as `J^{-T} p`, which for a ±1
    /// diagonal is `J p`.
    pub fn validate_symmetry_with<F>(
        &self,
        map: F,
        jacobian: &[f64],
        n: usize,
        seed: u64,
    ) -> Result<SymmetryReport>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        const TOL: f64 = 1e-9;
        if n == 0 {
            return Err(Error::InvalidInput("symmetry check needs n >= 1".into()));
        }
        let mut rng = crate::seed::rng(seed);
        let mut max_l = 0.0f64;
        let mut max_h = 0.0f64;
        for _ in 0..n {
            let x = self.sample_joint(&mut rng);
            let p: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fx = map(&x);
            let fp: Vec<f64> = p.iter().zip(jacobian).map(|(a, j)| a / j).collect();
            max_l = max_l.max((self.boundary_value(&x) - self.boundary_value(&fx)).abs());
            max_h = max_h.max((self.hamiltonian(&x, &p) - self.hamiltonian(&fx, &fp)).abs());
        }
        Ok(SymmetryReport {
            samples: n,
            max_boundary_violation: max_l,
            max_hamiltonian_violation: max_h,
            tolerance: TOL,
            symmetric: max_l <= TOL && max_h <= TOL,
        })
    }

    /// One explicit Euler step of a single agent's own dynamics. For Air3D
    /// the agent is a Dubins car with the evader speed.
    pub fn propagate(&self, x: &[f64], u: &[f64], dt: f64) -> Propagated {
        let speed = match &self.params {
            SystemParams::Air3d(a) => a.v_evader,
            _ => 0.0,
        };
        self.propagate_with_speed(x, u, dt, speed)
    }

    /// Like [`propagate`](Self::propagate) for an agent in the pursuer role.
    pub fn propagate_pursuer(&self, x: &[f64], d: &[f64], dt: f64) -> Propagated {
        let speed = match &self.params {
            SystemParams::Air3d(a) => a.v_pursuer,
            _ => 0.0,
        };
        self.propagate_with_speed(x, d, dt, speed)
    }

    fn propagate_with_speed(&self, x: &[f64], u: &[f64], dt: f64, speed: f64) -> Propagated {
        let mut next = match self.kind() {
            SystemKind::Particle | SystemKind::SimpleArm => {
                vec![x[0] + dt * u[0], x[1] + dt * u[1]]
            }
            SystemKind::Air3d => {
                let (s, c) = x[2].sin_cos();
                vec![x[0] + dt * speed * c, x[1] + dt * speed * s, x[2] + dt * u[0]]
            }
        };
        let mut clamped = false;
        for ((v, b), periodic) in next.iter_mut().zip(self.agent_bounds()).zip(self.agent_periodic_mask()) {
            if periodic {
                *v = wrap_angle(*v);
            } else if *v < b[0] || *v > b[1] {
                *v = v.clamp(b[0], b[1]);
                clamped = true;
            }
        }
        Propagated { state: next, clamped }
    }

    /// Frame used when `agent_index` plans against the others.
    pub fn agent_frame(&self, agent_index: usize) -> AgentFrame {
        match self.kind() {
            SystemKind::SimpleArm if agent_index % 2 == 1 => AgentFrame::Mirror,
            _ => AgentFrame::Identity,
        }
    }

    /// Express a single agent's state in `frame`.
    pub fn to_frame(&self, frame: AgentFrame, x: &[f64]) -> Vec<f64> {
        match frame {
            AgentFrame::Identity => x.to_vec(),
            // reflection x -> -x: absolute link angle a -> pi - a
            AgentFrame::Mirror => vec![wrap_angle(PI - x[0]), wrap_angle(-x[1])],
        }
    }

    /// Map a control expressed in `frame` back to the agent's own coordinates.
    pub fn control_from_frame(&self, frame: AgentFrame, u: &[f64]) -> Vec<f64> {
        match frame {
            AgentFrame::Identity => u.to_vec(),
            AgentFrame::Mirror => u.iter().map(|v| -v).collect(),
        }
    }

    /// Joint state of the pair (`own` as evader, `other` as pursuer) as seen
    /// by agent `own_index`.
    pub fn pair_state(&self, own_index: usize, own: &[f64], other: &[f64]) -> Vec<f64> {
        match self.kind() {
            SystemKind::Air3d => {
                let dx = other[0] - own[0];
                let dy = other[1] - own[1];
                let (s, c) = own[2].sin_cos();
                vec![c * dx + s * dy, -s * dx + c * dy, wrap_angle(other[2] - own[2])]
            }
            _ => {
                let frame = self.agent_frame(own_index);
                let mut joint = self.to_frame(frame, own);
                joint.extend(self.to_frame(frame, other));
                joint
            }
        }
    }

    /// Signed difference `a - b` between two agent states, wrapping angles.
    pub fn agent_difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(self.agent_periodic_mask())
            .map(|((x, y), periodic)| if periodic { wrap_angle(x - y) } else { x - y })
            .collect()
    }
}

struct ArmContact {
    distance: f64,
    gradient: [f64; 4],
}

/// Closest link pair between the two arms and the gradient of its distance
/// with respect to the four joint angles.
fn arm_contact(arm: &ArmParams, x: &[f64]) -> ArmContact {
    let qa = [x[0], x[1]];
    let qb = [x[2], x[3]];
    let pa = two_link_points(arm.bases[0], arm.link_lengths, qa);
    let pb = two_link_points(arm.bases[1], arm.link_lengths, qb);

    let mut best: Option<(geometry::SegmentContact, usize, usize)> = None;
    for i in 0..2 {
        for j in 0..2 {
            let c = segment_contact(pa[i], pa[i + 1], pb[j], pb[j + 1]);
            if best.as_ref().is_none_or(|(b, _, _)| c.distance < b.distance) {
                best = Some((c, i, j));
            }
        }
    }
    let (c, i, j) = best.expect("four link pairs");

    let n = c.normal();
    let ja = two_link_jacobians(arm.link_lengths, qa);
    let jb = two_link_jacobians(arm.link_lengths, qb);
    let mut gradient = [0.0; 4];
    for k in 0..2 {
        // link i runs from point i to point i + 1
        let da = [
            (1.0 - c.s) * dot2(n, ja[i][k]) + c.s * dot2(n, ja[i + 1][k]),
            (1.0 - c.t) * dot2(n, jb[j][k]) + c.t * dot2(n, jb[j + 1][k]),
        ];
        gradient[k] = da[0];
        gradient[2 + k] = -da[1];
    }
    ArmContact { distance: c.distance, gradient }
}

#[inline]
fn dot2(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
