use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::seed;
use crate::value::{check_time, EvalResult, ValueFunction};

/// How the network output becomes a value function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `V = N(t, x)`, boundary condition learned through a loss term.
    Deepreach,
    /// `V = l(x) + (T - t) N(t, x)`.
    Bc,
    /// `Bc`, evaluated through the symmetry map outside the training half.
    BcSym,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Deepreach => "deepreach",
            Variant::Bc => "bc",
            Variant::BcSym => "bc_sym",
        }
    }

    pub fn exact_boundary(self) -> bool {
        !matches!(self, Variant::Deepreach)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deepreach" => Ok(Variant::Deepreach),
            "bc" => Ok(Variant::Bc),
            "bc_sym" => Ok(Variant::BcSym),
            other => Err(Error::InvalidInput(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub omega0: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { hidden: vec![128, 128, 128], omega0: 30.0 }
    }
}

/// Affine layer `z = W a + b`; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Self { weight: Array2::zeros(self.weight.raw_dim()), bias: Array1::zeros(self.bias.len()) }
    }
}

/// Parameter-shaped buffers (gradients, optimizer moments).
pub type Params = Vec<Layer>;

pub(crate) fn zeros_like(params: &[Layer]) -> Params {
    params.iter().map(Layer::zeros_like).collect()
}

pub(crate) fn add_assign(acc: &mut [Layer], other: &[Layer]) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.weight += &b.weight;
        a.bias += &b.bias;
    }
}

/// Sine-activated MLP over normalized `(t, x)`, wrapped into a value
/// function according to its [`Variant`].
#[derive(Clone, Debug, PartialEq)]
pub struct ValueNetwork {
    pub system: SystemSpec,
    pub variant: Variant,
    pub arch: Architecture,
    pub layers: Vec<Layer>,
    /// Input `k` is normalized as `(v_k - center_k) / scale_k`.
    pub input_center: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub seed: u64,
}

/// Normalization mapping `[0, T] x state box` onto `[-1, 1]^(1 + n)`.
pub fn input_normalization(sys: &SystemSpec) -> (Vec<f64>, Vec<f64>) {
    let mut center = vec![0.5 * sys.horizon];
    let mut scale = vec![0.5 * sys.horizon];
    for b in sys.state_bounds() {
        center.push(0.5 * (b[0] + b[1]));
        scale.push(0.5 * (b[1] - b[0]));
    }
    (center, scale)
}

pub fn init_network(sys: &SystemSpec, variant: Variant, arch: &Architecture, seed: u64) -> Result<ValueNetwork> {
    sys.validate()?;
    if arch.hidden.is_empty() || arch.hidden.contains(&0) {
        return Err(Error::InvalidInput("at least one non-empty hidden layer is required".into()));
    }
    if !(arch.omega0.is_finite() && arch.omega0 > 0.0) {
        return Err(Error::InvalidInput(format!("omega0 must be positive, got {}", arch.omega0)));
    }
    let mut rng = seed::rng(seed);
    let mut sizes = vec![1 + sys.joint_dim()];
    sizes.extend(&arch.hidden);
    sizes.push(1);
    let mut layers = Vec::with_capacity(sizes.len() - 1);
    for (i, pair) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (pair[0], pair[1]);
        let w_bound = if i == 0 { 1.0 / n_in as f64 } else { (6.0 / n_in as f64).sqrt() / arch.omega0 };
        let b_bound = 1.0 / (n_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((n_out, n_in), || rng.random_range(-w_bound..=w_bound));
        let bias = Array1::from_shape_simple_fn(n_out, || rng.random_range(-b_bound..=b_bound));
        layers.push(Layer { weight, bias });
    }
    let (input_center, input_scale) = input_normalization(sys);
    Ok(ValueNetwork { system: sys.clone(), variant, arch: arch.clone(), layers, input_center, input_scale, seed })
}

/// Saved activations of one forward pass.
pub(crate) struct Tape {
    batch: usize,
    /// Stacked input of each layer: primal rows, then one block per tangent.
    inputs: Vec<Array2<f64>>,
    /// Per sine layer: `sin(w z)`, `cos(w z)` on primal rows, and the
    /// tangent pre-activations.
    sines: Vec<(Array2<f64>, Array2<f64>, Array2<f64>)>,
}

/// Network output `N` and its derivatives with respect to the raw inputs.
pub(crate) struct RawOutput {
    pub n: Array1<f64>,
    /// `batch x (1 + joint_dim)`: column 0 is `dN/dt`, then `dN/dx_k`.
    pub dn: Array2<f64>,
}

impl ValueNetwork {
    pub fn input_dim(&self) -> usize {
        self.input_center.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        let d = 1 + self.system.joint_dim();
        if self.input_center.len() != d || self.input_scale.len() != d {
            return Err(Error::ShapeMismatch("input normalization does not match the system".into()));
        }
        if self.layers.len() != self.arch.hidden.len() + 1 {
            return Err(Error::ShapeMismatch("layer count does not match the architecture".into()));
        }
        let mut n_in = d;
        for (i, layer) in self.layers.iter().enumerate() {
            let n_out = self.arch.hidden.get(i).copied().unwrap_or(1);
            if layer.weight.dim() != (n_out, n_in) || layer.bias.len() != n_out {
                return Err(Error::ShapeMismatch(format!("layer {i} has the wrong shape")));
            }
            n_in = n_out;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Forward pass over `raw` rows of `(t, x)` carrying input tangents.
    pub(crate) fn forward(&self, raw: ArrayView2<f64>, record: bool) -> (RawOutput, Option<Tape>) {
        let b = raw.nrows();
        let d = self.input_dim();
        let omega = self.arch.omega0;
        let mut a = Array2::zeros((b * (1 + d), d));
        for i in 0..b {
            for k in 0..d {
                a[[i, k]] = (raw[[i, k]] - self.input_center[k]) / self.input_scale[k];
                a[[b * (1 + k) + i, k]] = 1.0 / self.input_scale[k];
            }
        }
        let mut tape = Tape { batch: b, inputs: Vec::new(), sines: Vec::new() };
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            let mut primal = z.slice_mut(s![..b, ..]);
            primal += &layer.bias;
            if record {
                tape.inputs.push(a);
            }
            if li == last {
                let n = z.column(0).slice(s![..b]).to_owned();
                let mut dn = Array2::zeros((b, d));
                for k in 0..d {
                    dn.column_mut(k).assign(&z.column(0).slice(s![b * (1 + k)..b * (2 + k)]));
                }
                return (RawOutput { n, dn }, record.then_some(tape));
            }
            let zp = z.slice(s![..b, ..]);
            let sin = zp.mapv(|v| (omega * v).sin());
            let cos = zp.mapv(|v| (omega * v).cos());
            let zt = z.slice(s![b.., ..]).to_owned();
            let mut next = Array2::zeros(z.raw_dim());
            next.slice_mut(s![..b, ..]).assign(&sin);
            for k in 0..d {
                let rows = s![b * (1 + k)..b * (2 + k), ..];
                Zip::from(next.slice_mut(rows))
                    .and(z.slice(rows))
                    .and(&cos)
                    .for_each(|o, &zt, &c| *o = omega * c * zt);
            }
            if record {
                tape.sines.push((sin, cos, zt));
            }
            a = next;
        }
        unreachable!("network has an output layer")
    }

    /// `N` alone at one raw input, skipping the tangent rows.
    pub(crate) fn primal(&self, raw: &[f64]) -> f64 {
        let omega = self.arch.omega0;
        let mut a: Array1<f64> =
            raw.iter().zip(&self.input_center).zip(&self.input_scale).map(|((v, c), s)| (v - c) / s).collect();
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            a = (layer.weight.dot(&a) + &layer.bias).mapv_into(|v| (omega * v).sin());
        }
        let out = &self.layers[last];
        out.weight.row(0).dot(&a) + out.bias[0]
    }

    /// Parameter gradients given the adjoints of `N` (`gn`) and of its raw
    /// input derivatives (`gdn`, same layout as [`RawOutput::dn`]).
    pub(crate) fn backward(&self, tape: &Tape, gn: &Array1<f64>, gdn: &Array2<f64>) -> Params {
        let b = tape.batch;
        let d = self.input_dim();
        let omega = self.arch.omega0;
        let mut g = Array2::zeros((b * (1 + d), 1));
        g.column_mut(0).slice_mut(s![..b]).assign(gn);
        for k in 0..d {
            g.column_mut(0).slice_mut(s![b * (1 + k)..b * (2 + k)]).assign(&gdn.column(k));
        }
        let mut grads = zeros_like(&self.layers);
        for li in (0..self.layers.len()).rev() {
            grads[li].weight = g.t().dot(&tape.inputs[li]);
            grads[li].bias = g.slice(s![..b, ..]).sum_axis(Axis(0));
            if li == 0 {
                break;
            }
            let ga = g.dot(&self.layers[li].weight);
            let (sin, cos, zt) = &tape.sines[li - 1];
            let mut gz = Array2::zeros(ga.raw_dim());
            {
                let mut primal = gz.slice_mut(s![..b, ..]);
                Zip::from(&mut primal).and(ga.slice(s![..b, ..])).and(cos).for_each(|o, &g, &c| *o = g * omega * c);
                for k in 0..d {
                    let blk = s![b * k..b * (k + 1), ..];
                    Zip::from(&mut primal)
                        .and(ga.slice(s![b * (1 + k)..b * (2 + k), ..]))
                        .and(zt.slice(blk))
                        .and(sin)
                        .for_each(|o, &g, &z, &sn| *o -= g * z * omega * omega * sn);
                }
            }
            for k in 0..d {
                let rows = s![b * (1 + k)..b * (2 + k), ..];
                Zip::from(gz.slice_mut(rows)).and(ga.slice(rows)).and(cos).for_each(|o, &g, &c| *o = g * omega * c);
            }
            g = gz;
        }
        grads
    }

    /// Apply the bc_sym dispatch: points outside the training half are
    /// replaced by their images. Returns the flag per point.
    pub(crate) fn dispatch(&self, x: &mut [f64]) -> bool {
        self.system.wrap_joint(x);
        if self.variant == Variant::BcSym && !self.system.in_train_region(x) {
            let mapped = self.system.symmetry_map(x);
            x.copy_from_slice(&mapped);
            true
        } else {
            false
        }
    }

    pub(crate) fn raw_inputs(ts: &[f64], xs: &[Vec<f64>]) -> Array2<f64> {
        let d = 1 + xs.first().map_or(0, Vec::len);
        let mut raw = Array2::zeros((ts.len(), d));
        for (i, (t, x)) in ts.iter().zip(xs).enumerate() {
            raw[[i, 0]] = *t;
            for (k, v) in x.iter().enumerate() {
                raw[[i, 1 + k]] = *v;
            }
        }
        raw
    }

    /// Compose `V`, `dV/dt` and `grad_x V` from the raw network output at
    /// already-dispatched points.
    pub(crate) fn compose(&self, t: f64, x: &[f64], n: f64, dn: &[f64], mirrored: bool) -> EvalResult {
        let horizon = self.system.horizon;
        let mut out = match self.variant {
            Variant::Deepreach => EvalResult { value: n, dv_dt: dn[0], grad_x: dn[1..].to_vec() },
            Variant::Bc | Variant::BcSym => {
                let (l, grad_l) = self.system.boundary_value_and_gradient(x);
                let tau = horizon - t;
                EvalResult {
                    value: l + tau * n,
                    dv_dt: -n + tau * dn[0],
                    grad_x: grad_l.iter().zip(&dn[1..]).map(|(g, d)| g + tau * d).collect(),
                }
            }
        };
        if mirrored {
            for (g, j) in out.grad_x.iter_mut().zip(self.system.symmetry_jacobian()) {
                *g *= j;
            }
        }
        out
    }

    /// Evaluate many points at once.
    pub fn evaluate_batch(&self, ts: &[f64], xs: &[Vec<f64>]) -> Result<Vec<EvalResult>> {
        if ts.len() != xs.len() {
            return Err(Error::ShapeMismatch("times and states differ in count".into()));
        }
        if ts.is_empty() {
            return Ok(Vec::new());
        }
        let mut points = Vec::with_capacity(xs.len());
        let mut flags = Vec::with_capacity(xs.len());
        for (t, x) in ts.iter().zip(xs) {
            check_time(&self.system, *t)?;
            self.system.check_joint(x)?;
            let mut x = x.clone();
            flags.push(self.dispatch(&mut x));
            points.push(x);
        }
        let raw = Self::raw_inputs(ts, &points);
        let (out, _) = self.forward(raw.view(), false);
        let mut results = Vec::with_capacity(ts.len());
        for i in 0..ts.len() {
            let dn = out.dn.row(i).to_vec();
            let e = self.compose(ts[i], &points[i], out.n[i], &dn, flags[i]);
            if !e.value.is_finite() || e.grad_x.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite { context: "network evaluation", time: ts[i] });
            }
            results.push(e);
        }
        Ok(results)
    }

    /// Raw network output `N(t, x)` without the variant wrapper.
    pub fn raw_output(&self, t: f64, x: &[f64]) -> f64 {
        let raw = Self::raw_inputs(&[t], &[x.to_vec()]);
        self.forward(raw.view(), false).0.n[0]
    }
}

impl ValueFunction for ValueNetwork {
    fn system(&self) -> &SystemSpec {
        &self.system
    }

    fn evaluate(&self, t: f64, x: &[f64]) -> Result<EvalResult> {
        let mut out = self.evaluate_batch(&[t], &[x.to_vec()])?;
        Ok(out.pop().expect("one result per point"))
    }

    fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        check_time(&self.system, t)?;
        self.system.check_joint(x)?;
        let mut x = x.to_vec();
        self.dispatch(&mut x);
        let mut raw = Vec::with_capacity(1 + x.len());
        raw.push(t);
        raw.extend_from_slice(&x);
        let n = self.primal(&raw);
        let v = match self.variant {
            Variant::Deepreach => n,
            Variant::Bc | Variant::BcSym => self.system.boundary_value(&x) + (self.system.horizon - t) * n,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { context: "network evaluation", time: t })
        }
    }
}
