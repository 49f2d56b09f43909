//! Problem data: time/penalization parameters, the Yosida penalization of the
//! constraint `[0, 1]`, the Lipschitz reaction term, the source and the
//! initial datum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid1D, GridFunction};

/// Scalar parameters of one discretized problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    p: f64,
    eps: f64,
    horizon: f64,
    steps: usize,
    tau: f64,
    l_beta: f64,
    length: f64,
}

impl ModelParams {
    /// Validates `p >= 2`, `eps > 0`, `T > 0`, `M >= 1`, `length > 0` and the
    /// well-posedness gate `tau * l_beta < 1` with `tau = T / M`.
    pub fn new(p: f64, eps: f64, horizon: f64, steps: usize, l_beta: f64, length: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(Error::invalid("p", format!("must satisfy p >= 2, got {p}")));
        }
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::invalid("eps", format!("must be positive, got {eps}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("T", format!("must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("M", "must be at least 1"));
        }
        if !(l_beta.is_finite() && l_beta >= 0.0) {
            return Err(Error::invalid("L_beta", format!("must be nonnegative, got {l_beta}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid("length", format!("must be positive, got {length}")));
        }
        let tau = horizon / steps as f64;
        if tau * l_beta >= 1.0 {
            return Err(Error::invalid(
                "L_beta",
                format!("tau*L_beta = {} >= 1 (tau = {tau}, L_beta = {l_beta}); the step equation is not uniquely solvable", tau * l_beta),
            ));
        }
        Ok(Self { p, eps, horizon, steps, tau, l_beta, length })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Final time `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn l_beta(&self) -> f64 {
        self.l_beta
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Strong monotonicity margin `1 - tau * L_beta`, always positive.
    pub fn margin(&self) -> f64 {
        1.0 - self.tau * self.l_beta
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.p, eps, self.horizon, self.steps, self.l_beta, self.length)
    }

    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.p, self.eps, self.horizon, steps, self.l_beta, self.length)
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(p, self.eps, self.horizon, self.steps, self.l_beta, self.length)
    }
}

/// Yosida approximation of the subdifferential of the indicator of `[0, 1]`.
pub fn psi_eps(v: f64, eps: f64) -> f64 {
    if v <= 0.0 {
        v / eps
    } else if v <= 1.0 {
        0.0
    } else {
        (v - 1.0) / eps
    }
}

/// Generalized derivative of [`psi_eps`]; the kinks at 0 and 1 take the
/// interior value 0.
pub fn psi_eps_derivative(v: f64, eps: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        0.0
    } else {
        1.0 / eps
    }
}

/// Convex potential `((v^-)^2 + ((v-1)^+)^2) / (2 eps)` whose derivative is [`psi_eps`].
pub fn psi_eps_antiderivative(v: f64, eps: f64) -> f64 {
    let below = (-v).max(0.0);
    let above = (v - 1.0).max(0.0);
    (below * below + above * above) / (2.0 * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReactionKind {
    Zero,
    Linear,
    Sine,
}

/// Lipschitz reaction `beta` with `beta(0) = 0`; `scale` is its Lipschitz constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    pub kind: ReactionKind,
    #[serde(default)]
    pub scale: f64,
}

impl Default for ReactionSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl ReactionSpec {
    pub fn new(kind: ReactionKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::invalid("scale", format!("must be nonnegative, got {scale}")));
        }
        Ok(Self { kind, scale })
    }

    pub fn zero() -> Self {
        Self { kind: ReactionKind::Zero, scale: 0.0 }
    }

    pub fn linear(scale: f64) -> Self {
        Self { kind: ReactionKind::Linear, scale }
    }

    pub fn sine(scale: f64) -> Self {
        Self { kind: ReactionKind::Sine, scale }
    }

    /// Lipschitz constant of the realized function.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            _ => self.scale,
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => self.scale * v,
            ReactionKind::Sine => self.scale * v.sin(),
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => self.scale,
            ReactionKind::Sine => self.scale * v.cos(),
        }
    }

    /// Antiderivative vanishing at 0.
    pub fn antiderivative(&self, v: f64) -> f64 {
        match self.kind {
            ReactionKind::Zero => 0.0,
            ReactionKind::Linear => 0.5 * self.scale * v * v,
            ReactionKind::Sine => self.scale * (1.0 - v.cos()),
        }
    }
}

/// Smooth exact solution `mean + amplitude * e^{-t} cos(pi x / length)` used to
/// manufacture a source. With `decay = false` the solution is stationary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub p: f64,
    pub length: f64,
    pub reaction: ReactionSpec,
    pub mean: f64,
    pub amplitude: f64,
    pub decay: bool,
}

impl ManufacturedSolution {
    pub fn new(p: f64, length: f64, reaction: ReactionSpec, decay: bool) -> Self {
        Self { p, length, reaction, mean: 0.5, amplitude: 0.25, decay }
    }

    fn envelope(&self, t: f64) -> f64 {
        if self.decay {
            self.amplitude * (-t).exp()
        } else {
            self.amplitude
        }
    }

    pub fn exact(&self, t: f64, x: f64) -> f64 {
        self.mean + self.envelope(t) * (std::f64::consts::PI * x / self.length).cos()
    }

    /// `u_t - (|u_x|^{p-2} u_x)_x + |u|^{p-2} u - beta(u)`; the penalization
    /// vanishes because the solution stays inside `[mean - amplitude, mean + amplitude]`.
    pub fn source(&self, t: f64, x: f64) -> f64 {
        let k = std::f64::consts::PI / self.length;
        let a = self.envelope(t);
        let (s, c) = (k * x).sin_cos();
        let u = self.mean + a * c;
        let u_t = if self.decay { -a * c } else { 0.0 };
        let g = -a * k * s;
        let g_x = -a * k * k * c;
        let flux_x = (self.p - 1.0) * g.abs().powf(self.p - 2.0) * g_x;
        u_t - flux_x + u.abs().powf(self.p - 2.0) * u - self.reaction.eval(u)
    }
}

/// The source `f(t, x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Zero,
    Constant(f64),
    /// `f(t, x) = slope * t`.
    TimeLinear(f64),
    Manufactured(ManufacturedSolution),
    /// Samples `values[k][m]` at `(times[k], xs[m])`, bilinearly interpolated
    /// and held constant outside the sampled range.
    Tabulated { times: Vec<f64>, xs: Vec<f64>, values: Vec<Vec<f64>> },
}

/// 4-point Gauss-Legendre rule on [-1, 1].
const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
];

/// 3-point Gauss-Legendre rule on [-1, 1].
const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

impl SourceSpec {
    pub fn tabulated(times: Vec<f64>, xs: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if times.is_empty() || !sorted(&times) {
            return Err(Error::invalid("times", "must be nonempty and strictly increasing"));
        }
        if xs.is_empty() || !sorted(&xs) {
            return Err(Error::invalid("xs", "must be nonempty and strictly increasing"));
        }
        if values.len() != times.len() || values.iter().any(|row| row.len() != xs.len()) {
            return Err(Error::invalid("values", "must have one row per time and one column per x"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values", "must be finite"));
        }
        Ok(SourceSpec::Tabulated { times, xs, values })
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            SourceSpec::Zero => 0.0,
            SourceSpec::Constant(c) => *c,
            SourceSpec::TimeLinear(slope) => slope * t,
            SourceSpec::Manufactured(m) => m.source(t, x),
            SourceSpec::Tabulated { times, xs, values } => {
                let (k, wt) = bracket(times, t);
                let (m, wx) = bracket(xs, x);
                let row = |k: usize| {
                    let r = &values[k];
                    r[m] * (1.0 - wx) + r[(m + 1).min(r.len() - 1)] * wx
                };
                row(k) * (1.0 - wt) + row((k + 1).min(times.len() - 1)) * wt
            }
        }
    }
}

/// Index `k` and weight `w` with `t ~ (1-w) nodes[k] + w nodes[k+1]`, clamped.
fn bracket(nodes: &[f64], t: f64) -> (usize, f64) {
    let last = nodes.len() - 1;
    if last == 0 || t <= nodes[0] {
        return (0, 0.0);
    }
    if t >= nodes[last] {
        return (last, 0.0);
    }
    let k = nodes.partition_point(|&s| s <= t) - 1;
    (k, (t - nodes[k]) / (nodes[k + 1] - nodes[k]))
}

/// Cell averages of `(1/tau) ∫_{t_n}^{t_{n+1}} f(s, .) ds` with `t_n = n tau`,
/// using 4-point Gauss in time and 3-point Gauss per cell in space.
pub fn average_source(spec: &SourceSpec, n: usize, grid: &Grid1D, tau: f64) -> GridFunction {
    match spec {
        SourceSpec::Zero => return GridFunction::zeros(*grid),
        SourceSpec::Constant(c) => return GridFunction::constant(*grid, *c),
        _ => {}
    }
    let t0 = n as f64 * tau;
    let half_h = 0.5 * grid.h();
    let values = grid
        .centers()
        .map(|xc| {
            let mut acc = 0.0;
            for &(st, wt) in &GAUSS4 {
                let t = t0 + 0.5 * tau * (1.0 + st);
                for &(sx, wx) in &GAUSS3 {
                    acc += wt * wx * spec.eval(t, xc + half_h * sx);
                }
            }
            0.25 * acc
        })
        .collect();
    GridFunction::from_vec_unchecked(*grid, values)
}

/// Deterministic initial datum with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDatum(GridFunction);

impl InitialDatum {
    pub fn new(u0: GridFunction) -> Result<Self> {
        if let Some(i) = u0.values().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                "initial",
                format!("u0 must lie in [0, 1]; cell {i} has {}", u0.values()[i]),
            ));
        }
        Ok(Self(u0))
    }

    pub fn field(&self) -> &GridFunction {
        &self.0
    }

    pub fn into_field(self) -> GridFunction {
        self.0
    }
}
