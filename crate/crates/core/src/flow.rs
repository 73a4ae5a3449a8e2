//! Ricci flow of families that reduce to a finite ODE system.
//!
//! Each family is a fixed coordinate chart whose metric is linear in a few
//! scale parameters, so `∂ₜg = −2 Ric` becomes an ODE for those scales and
//! every curvature component can be evaluated in the same chart at any time.

use crate::exprdsl::Bindings;
use crate::geometry::{curvature_pack, CurvaturePack, Domain, GeometryError, MetricChart};
use crate::soliton::{warped_domain, warped_sources};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
    #[error("initial state must be positive, got {0:?}")]
    NonPositiveInitial(Vec<f64>),
    #[error("state has {found} entries, family needs {expected}")]
    StateLength { expected: usize, found: usize },
    #[error("state became non-positive at t = {t}; blow-up estimated at T = {estimate}")]
    NonPositiveState { t: f64, estimate: f64 },
    #[error("stencil [{lo}, {hi}] leaves the trajectory range [{start}, {end}]")]
    Stencil { lo: f64, hi: f64, start: f64, end: f64 },
    #[error("singularity classification inconclusive: {0}")]
    Inconclusive(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("reduction mismatch {residual:e} at t = {t}")]
    Reduction { t: f64, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowFamily {
    /// `r² g_{S^n(1)}`
    RoundSphere { n: usize, r2: f64 },
    /// `a² g_{S^p(1)} + b² g_{S^q(1)}`
    ProductSpheres { p: usize, q: usize, a2: f64, b2: f64 },
    /// `dt² + s² g_{S^{n−1}(1)}`
    Cylinder { n: usize, s2: f64 },
    /// Static flat space.
    Flat { n: usize },
}

impl FlowFamily {
    pub fn name(&self) -> &'static str {
        match self {
            FlowFamily::RoundSphere { .. } => "round_sphere",
            FlowFamily::ProductSpheres { .. } => "product_spheres",
            FlowFamily::Cylinder { .. } => "cylinder",
            FlowFamily::Flat { .. } => "flat",
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            FlowFamily::RoundSphere { n, .. } | FlowFamily::Cylinder { n, .. } | FlowFamily::Flat { n } => n,
            FlowFamily::ProductSpheres { p, q, .. } => p + q,
        }
    }

    pub fn state_names(&self) -> &'static [&'static str] {
        match self {
            FlowFamily::RoundSphere { .. } => &["r2"],
            FlowFamily::ProductSpheres { .. } => &["a2", "b2"],
            FlowFamily::Cylinder { .. } => &["s2"],
            FlowFamily::Flat { .. } => &[],
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        match *self {
            FlowFamily::RoundSphere { r2, .. } => vec![r2],
            FlowFamily::ProductSpheres { a2, b2, .. } => vec![a2, b2],
            FlowFamily::Cylinder { s2, .. } => vec![s2],
            FlowFamily::Flat { .. } => vec![],
        }
    }

    /// Reduced right-hand side: each unit-sphere factor `S^m` scaled by
    /// `s` has `Ric = (m−1) g_{S^m(1)}`, so `ds/dt = −2(m−1)`.
    pub fn rhs(&self, _state: &[f64]) -> Vec<f64> {
        match *self {
            FlowFamily::RoundSphere { n, .. } => vec![-2.0 * (n as f64 - 1.0)],
            FlowFamily::ProductSpheres { p, q, .. } => vec![-2.0 * (p as f64 - 1.0), -2.0 * (q as f64 - 1.0)],
            FlowFamily::Cylinder { n, .. } => vec![-2.0 * (n as f64 - 2.0)],
            FlowFamily::Flat { .. } => vec![],
        }
    }

    /// The fixed chart with the state bound as parameters.
    pub fn chart(&self, state: &[f64]) -> Result<MetricChart, FlowError> {
        let names = self.state_names();
        if state.len() != names.len() {
            return Err(FlowError::StateLength {
                expected: names.len(),
                found: state.len(),
            });
        }
        let mut bindings = Bindings::new();
        for (k, v) in names.iter().zip(state) {
            bindings = bindings.param(*k, *v);
        }
        let n = self.n();
        let sq = |from: usize, to: usize| (from..=to).map(|i| format!("x{i}^2")).collect::<Vec<_>>().join("+");
        let diag = |f: &dyn Fn(usize) -> String| {
            let mut out = Vec::new();
            for i in 0..n {
                for j in i..n {
                    out.push(if i == j { f(i) } else { "0".to_string() });
                }
            }
            out
        };
        let (sources, domain) = match *self {
            FlowFamily::RoundSphere { n, .. } => {
                let c = format!("r2*4/(1+{})^2", sq(1, n));
                (diag(&|_| c.clone()), Domain::ball(n, 1.0))
            }
            FlowFamily::ProductSpheres { p, .. } => {
                let a = format!("a2*4/(1+{})^2", sq(1, p));
                let b = format!("b2*4/(1+{})^2", sq(p + 1, n));
                let cube = Domain::Box {
                    lo: vec![-1.0; n],
                    hi: vec![1.0; n],
                };
                (diag(&|i| if i < p { a.clone() } else { b.clone() }), cube)
            }
            FlowFamily::Cylinder { n, .. } => {
                let mut sources = warped_sources(n, 1.0, "1");
                for s in sources.iter_mut().filter(|s| s.starts_with("4*")) {
                    *s = format!("s2*{s}");
                }
                (sources, warped_domain(n, -1.0, 1.0))
            }
            FlowFamily::Flat { n } => (diag(&|_| "1".to_string()), Domain::ball(n, 1.0)),
        };
        let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
        Ok(MetricChart::parse(self.name(), n, &refs, domain, bindings)?)
    }

    /// A representative interior point of the chart.
    pub fn base_point(&self) -> Vec<f64> {
        vec![0.0; self.n()]
    }

    /// `max |∂ₜg + 2 Ric| / max |Ric|` at `p`, with `∂ₜg` taken from the
    /// reduced ODE. The metric is linear in the state, so `∂ₜg` is the
    /// metric at state `rhs` minus the metric at state `0`.
    pub fn reduction_residual(&self, state: &[f64], p: &[f64]) -> Result<f64, FlowError> {
        let rhs = self.rhs(state);
        let zero = vec![0.0; rhs.len()];
        let dg = self.chart(&rhs)?.metric_at(p)?.sub(&self.chart(&zero)?.metric_at(p)?);
        let ric = curvature_pack_any(&self.chart(state)?, p)?;
        let target = ric.scale(-2.0);
        Ok(dg.sub(&target).max_abs() / target.max_abs().max(1.0))
    }

    pub fn pack(&self, state: &[f64], p: &[f64]) -> Result<CurvaturePack, FlowError> {
        Ok(curvature_pack(&self.chart(state)?, p)?)
    }
}

/// Ricci at `p` for any dimension (the pack requires n >= 3).
fn curvature_pack_any(chart: &MetricChart, p: &[f64]) -> Result<Tensor, GeometryError> {
    Ok(crate::geometry::LocalGeometry::new(chart, p, 2)?.ricci().value())
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub family: FlowFamily,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `(t, rejected step)` for every halving.
    pub rejections: Vec<(f64, f64)>,
    /// Estimated maximal time, `None` for immortal flows.
    pub blowup: Option<f64>,
    /// Integration stopped because a scale fell below the floor.
    pub stopped_early: bool,
}

/// Scales below this end the integration.
pub const SCALE_FLOOR: f64 = 1e-6;

fn rk4(family: &FlowFamily, y: &[f64], dt: f64) -> Vec<f64> {
    let add = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, k)| x + c * k).collect() };
    let k1 = family.rhs(y);
    let k2 = family.rhs(&add(y, &k1, dt / 2.0));
    let k3 = family.rhs(&add(y, &k2, dt / 2.0));
    let k4 = family.rhs(&add(y, &k3, dt));
    (0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Linear extrapolation of the first vanishing scale.
fn blowup_estimate(family: &FlowFamily, t: f64, y: &[f64]) -> Option<f64> {
    family
        .rhs(y)
        .iter()
        .zip(y)
        .filter(|(d, _)| **d < 0.0)
        .map(|(d, s)| t - s / d)
        .min_by(f64::total_cmp)
}

/// Classical RK4 with `steps` steps of size `dt`. A step that would push a
/// scale below [`SCALE_FLOOR`] is rejected and halved; integration stops
/// once a scale reaches the floor band.
pub fn integrate_flow(family: &FlowFamily, g0: &[f64], dt: f64, steps: usize) -> Result<FlowTrajectory, FlowError> {
    if dt.is_nan() || dt <= 0.0 || !dt.is_finite() {
        return Err(FlowError::BadStep(dt));
    }
    let expected = family.state_names().len();
    if g0.len() != expected {
        return Err(FlowError::StateLength { expected, found: g0.len() });
    }
    if g0.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(FlowError::NonPositiveInitial(g0.to_vec()));
    }
    let mut traj = FlowTrajectory {
        family: family.clone(),
        times: vec![0.0],
        states: vec![g0.to_vec()],
        rejections: Vec::new(),
        blowup: blowup_estimate(family, 0.0, g0),
        stopped_early: false,
    };
    let mut t = 0.0;
    let mut y = g0.to_vec();
    let mut accepted = 0;
    let mut h = dt;
    while accepted < steps {
        let trial = rk4(family, &y, h);
        if trial.iter().any(|v| *v < SCALE_FLOOR) {
            traj.rejections.push((t, h));
            h /= 2.0;
            if h < 1e-15 {
                traj.stopped_early = true;
                break;
            }
            continue;
        }
        t += h;
        y = trial;
        accepted += 1;
        traj.times.push(t);
        traj.states.push(y.clone());
        if y.iter().any(|v| *v < 2.0 * SCALE_FLOOR) {
            traj.stopped_early = true;
            break;
        }
    }
    if let Some(est) = blowup_estimate(family, t, &y) {
        traj.blowup = Some(est);
    }
    Ok(traj)
}

impl FlowTrajectory {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("trajectory has a start")
    }

    /// State at `t`, by one RK4 step from the nearest earlier node.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, FlowError> {
        if t < self.start() || t > self.end() {
            return Err(FlowError::Stencil {
                lo: t,
                hi: t,
                start: self.start(),
                end: self.end(),
            });
        }
        let k = self.times.partition_point(|s| *s <= t).saturating_sub(1);
        let dt = t - self.times[k];
        if dt == 0.0 {
            return Ok(self.states[k].clone());
        }
        Ok(rk4(&self.family, &self.states[k], dt))
    }

    pub fn rows(&self, point: &[f64]) -> Result<Vec<Vec<f64>>, FlowError> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(t, s)| flow_row(&self.family, *t, s, self.blowup, point))
            .collect()
    }
}

/// CSV header of [`flow_row`].
pub fn flow_header(family: &FlowFamily) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(family.state_names().iter().map(|s| s.to_string()));
    h.extend(["R", "ric_norm2", "max_rm", "scaled_rm"].map(String::from));
    h
}

/// `t, state…, R, |Ric|², |Rm|, (T−t)|Rm|` (the last is 0 for immortal flows).
pub fn flow_row(family: &FlowFamily, t: f64, state: &[f64], blowup: Option<f64>, point: &[f64]) -> Result<Vec<f64>, FlowError> {
    let pack = family.pack(state, point)?;
    let rm = pack.riem_norm();
    let mut row = vec![t];
    row.extend_from_slice(state);
    row.extend([pack.scalar, pack.ric_norm2, rm, blowup.map(|big_t| (big_t - t) * rm).unwrap_or(0.0)]);
    Ok(row)
}

/// Central difference `(Q(t+h) − Q(t−h)) / 2h` of a state-dependent tensor.
pub fn fd_time_derivative<F>(traj: &FlowTrajectory, quantity: F, t: f64, h: f64) -> Result<Tensor, FlowError>
where
    F: Fn(&[f64]) -> Result<Tensor, FlowError>,
{
    let (lo, hi) = (t - h, t + h);
    if lo < traj.start() || hi > traj.end() || h.is_nan() || h <= 0.0 {
        return Err(FlowError::Stencil {
            lo,
            hi,
            start: traj.start(),
            end: traj.end(),
        });
    }
    let plus = quantity(&traj.state_at(hi)?)?;
    let minus = quantity(&traj.state_at(lo)?)?;
    Ok(plus.sub(&minus).scale(0.5 / h))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SingularityType {
    TypeI { limit: f64 },
    TypeIIa,
    NoSingularity,
}

/// Classifies via `(T−t)|Rm|` sampled on a geometric grid of `T−t`.
pub fn singularity_type(traj: &FlowTrajectory) -> Result<SingularityType, FlowError> {
    let Some(big_t) = traj.blowup else {
        return Ok(SingularityType::NoSingularity);
    };
    let reach = big_t - traj.end();
    if reach > 1e-4 {
        return Err(FlowError::Inconclusive(format!(
            "trajectory ends {reach:.3e} before the estimated blow-up time {big_t}"
        )));
    }
    let first = big_t - traj.start();
    if first < 1e-3 {
        return Err(FlowError::Inconclusive("trajectory too short".into()));
    }
    let point = traj.family.base_point();
    let per_decade = 8;
    let decades = (first / 1e-4).log10();
    let count = (decades * per_decade as f64).floor() as usize;
    let mut samples = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let tau = first * 10f64.powf(-(k as f64) / per_decade as f64);
        let t = big_t - tau;
        let state = traj.state_at(t.max(traj.start()))?;
        let rm = traj.family.pack(&state, &point)?.riem_norm();
        samples.push(tau * rm);
    }
    let last_decade = &samples[samples.len().saturating_sub(per_decade + 1)..];
    let hi = last_decade.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = last_decade.iter().cloned().fold(f64::INFINITY, f64::min);
    let limit = *samples.last().expect("at least one sample");
    if (hi - lo) / limit.abs().max(1e-300) < 0.05 {
        Ok(SingularityType::TypeI { limit })
    } else if last_decade.windows(2).all(|w| w[1] >= w[0]) {
        Ok(SingularityType::TypeIIa)
    } else {
        Err(FlowError::Inconclusive(format!("(T−t)|Rm| oscillates between {lo} and {hi}")))
    }
}
