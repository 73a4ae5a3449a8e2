//! Ricci solitons: defining residual, Ricci eigenstructure, warped-product
//! Ricci, the steady rotationally symmetric (Bryant) profile and the
//! pointwise identities of gradient solitons.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::exprdsl::{parse_expr_with, Bindings, Expr, Profile, SymbolTable};
use crate::geometry::{CurvaturePack, Domain, GeometryError, LocalGeometry, MetricChart};
use crate::jet::Jet;
use crate::tensor::{Tensor, Variance, RESIDUAL_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolitonKind {
    Shrinking,
    Steady,
    Expanding,
}

impl SolitonKind {
    pub fn from_alpha(alpha: f64) -> SolitonKind {
        if alpha > 0.0 {
            SolitonKind::Shrinking
        } else if alpha < 0.0 {
            SolitonKind::Expanding
        } else {
            SolitonKind::Steady
        }
    }
}

/// The vector field part of the soliton equation.
#[derive(Debug, Clone)]
pub enum Drift {
    /// `ω = df`
    Gradient(Expr),
    /// Components `ω_i`.
    OneForm(Vec<Expr>),
}

#[derive(Debug, Clone)]
pub struct SolitonData {
    pub chart: MetricChart,
    pub drift: Drift,
    pub alpha: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum SolitonError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("one-form has {found} components, chart dimension is {n}")]
    OneFormLength { n: usize, found: usize },
    #[error("{0}")]
    Inapplicable(String),
    #[error("h must be positive, got {0}")]
    NonPositiveWarp(f64),
    #[error("Bryant solve needs n >= 4 and L > 0 (n = {n}, L = {length})")]
    BryantInput { n: usize, length: f64 },
    #[error("profile integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("soliton residual {residual:e} exceeds tolerance {tol:e} at t = {t}")]
    Residual { t: f64, residual: f64, tol: f64 },
}

impl SolitonData {
    pub fn gradient(chart: MetricChart, potential: Expr, alpha: f64) -> Self {
        SolitonData {
            chart,
            drift: Drift::Gradient(potential),
            alpha,
        }
    }

    pub fn kind(&self) -> SolitonKind {
        SolitonKind::from_alpha(self.alpha)
    }

    pub fn potential(&self) -> Option<&Expr> {
        match &self.drift {
            Drift::Gradient(f) => Some(f),
            Drift::OneForm(_) => None,
        }
    }
}

/// `R_ij + ½(∇_i ω_j + ∇_j ω_i) − (α/n) g_ij`.
pub fn soliton_residual(data: &SolitonData, p: &[f64]) -> Result<Tensor, SolitonError> {
    let geo = LocalGeometry::new(&data.chart, p, 2)?;
    let n = geo.n();
    let sym_grad = match &data.drift {
        Drift::Gradient(f) => geo.hessian(&geo.scalar_field(f)?)?.value(),
        Drift::OneForm(omega) => {
            if omega.len() != n {
                return Err(SolitonError::OneFormLength { n, found: omega.len() });
            }
            let comps = omega.iter().map(|e| geo.scalar_field(e)).collect::<Result<Vec<Jet>, _>>()?;
            let form = Tensor::from_vec(n, vec![Variance::Down], comps).map_err(GeometryError::from)?;
            let d = geo.nabla(&form)?.value();
            Tensor::covariant(n, 2, |x| 0.5 * (d[[x[0], x[1]]] + d[[x[1], x[0]]]))
        }
    };
    let ric = geo.ricci().value();
    let g = geo.metric().value();
    let c = data.alpha / n as f64;
    Ok(Tensor::covariant(n, 2, |x| {
        ric[[x[0], x[1]]] + sym_grad[[x[0], x[1]]] - c * g[[x[0], x[1]]]
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub enum EigenPattern {
    Proportional,
    Split { major: usize, minor: usize },
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub value: f64,
    pub multiplicity: usize,
}

/// Eigenvalues of `g^{-1} Ric` with `g`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenStructure {
    pub eigenvalues: Vec<f64>,
    /// Columns are the eigenvectors, same order as `eigenvalues`.
    pub vectors: DMatrix<f64>,
    pub clusters: Vec<EigenCluster>,
    pub pattern: EigenPattern,
    pub diagnostics: Option<String>,
}

impl EigenStructure {
    /// `(μ, λ)` for a split pattern: the value of multiplicity `n−1` and the
    /// simple one.
    pub fn split_values(&self) -> Option<(f64, f64)> {
        match self.pattern {
            EigenPattern::Split { major, .. } => {
                let big = self.clusters.iter().position(|c| c.multiplicity == major)?;
                Some((self.clusters[big].value, self.clusters[1 - big].value))
            }
            _ => None,
        }
    }

    /// Index of the simple eigenvalue in a split pattern.
    pub fn simple_index(&self) -> Option<usize> {
        let (_, lambda) = self.split_values()?;
        self.eigenvalues
            .iter()
            .position(|v| *v == lambda || (v - lambda).abs() <= 1e-6 * lambda.abs().max(1e-12))
    }
}

/// Relative gap above which eigenvalues are considered distinct.
pub const CLUSTER_GAP: f64 = 1e-6;
/// Gaps between `CLUSTER_GAP` and this are flagged as ambiguous.
pub const AMBIGUOUS_GAP: f64 = 1e-4;

pub fn classify_eigenstructure(pack: &CurvaturePack) -> EigenStructure {
    let n = pack.n();
    let g = pack.metric.to_matrix();
    let ric = pack.ric.to_matrix();
    let chol = g.clone().cholesky().expect("pack metric is positive definite");
    let l_inv = chol.l().try_inverse().expect("triangular factor is invertible");
    let m = &l_inv * ric * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let back = l_inv.transpose();
    let vectors = DMatrix::from_fn(n, n, |r, c| (&back * eig.eigenvectors.column(order[c]))[r]);

    let scale = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(RESIDUAL_FLOOR);
    let mut clusters: Vec<Vec<f64>> = vec![vec![eigenvalues[0]]];
    let mut diagnostics = None;
    for w in eigenvalues.windows(2) {
        let gap = (w[1] - w[0]) / scale;
        if gap > CLUSTER_GAP {
            if gap < AMBIGUOUS_GAP {
                diagnostics = Some(format!(
                    "near-degenerate eigenvalues {:.9e} and {:.9e} (relative gap {gap:.2e})",
                    w[0], w[1]
                ));
            }
            clusters.push(vec![w[1]]);
        } else {
            clusters.last_mut().expect("nonempty").push(w[1]);
        }
    }
    let clusters: Vec<EigenCluster> = clusters
        .into_iter()
        .map(|c| EigenCluster {
            value: c.iter().sum::<f64>() / c.len() as f64,
            multiplicity: c.len(),
        })
        .collect();
    let pattern = if diagnostics.is_some() {
        EigenPattern::Other
    } else if clusters.len() == 1 {
        EigenPattern::Proportional
    } else if clusters.len() == 2 && clusters.iter().any(|c| c.multiplicity == n - 1) {
        EigenPattern::Split { major: n - 1, minor: 1 }
    } else {
        EigenPattern::Other
    };
    EigenStructure {
        eigenvalues,
        vectors,
        clusters,
        pattern,
        diagnostics,
    }
}

/// Left side of the eigenvalue relation for a pair of Ricci eigenvalues:
/// `(n−1)(λi²+λj²) − (n−1)R(λi+λj) + (n−1)(n−2)λiλj + R² − |Ric|²`.
pub fn eigen_quadratic(n: usize, li: f64, lj: f64, scal: f64, ric_norm2: f64) -> f64 {
    let m = n as f64 - 1.0;
    m * (li * li + lj * lj) - m * scal * (li + lj) + m * (m - 1.0) * li * lj + scal * scal - ric_norm2
}

/// [`eigen_quadratic`] at eigen indices `i`, `j` of the pack's Ricci tensor.
pub fn eigen_quadratic_residual(pack: &CurvaturePack, i: usize, j: usize) -> f64 {
    let es = classify_eigenstructure(pack);
    eigen_quadratic(pack.n(), es.eigenvalues[i], es.eigenvalues[j], pack.scalar, pack.ric_norm2)
}

/// `σ^K = 4/(1+K|y|²)² δ` on the fibre coordinates `y`.
pub fn space_form_factor(k: f64, y: &[f64]) -> f64 {
    let r2: f64 = y.iter().map(|v| v * v).sum();
    4.0 / ((1.0 + k * r2) * (1.0 + k * r2))
}

/// Closed-form Ricci of `dt² + h(t)² σ^K` at `(t, y)`, given `[h, h′, h″]`.
pub fn warped_ricci(n: usize, k: f64, h: &[f64], y: &[f64]) -> Result<Tensor, SolitonError> {
    let (h0, h1, h2) = (h[0], h[1], h[2]);
    if h0 <= 0.0 {
        return Err(SolitonError::NonPositiveWarp(h0));
    }
    let radial = -(n as f64 - 1.0) * h2 / h0;
    let fibre = ((n as f64 - 2.0) * k - h0 * h2 - (n as f64 - 2.0) * h1 * h1) * space_form_factor(k, y);
    Ok(Tensor::covariant(n, 2, |x| match (x[0], x[1]) {
        (0, 0) => radial,
        (a, b) if a == b => fibre,
        _ => 0.0,
    }))
}

/// Residuals of the pointwise gradient-soliton identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientResiduals {
    /// `∂_i R = 2 R_il ∇^l f`
    pub div_res: f64,
    /// Radial relation; `None` where the Weyl tensor does not vanish.
    pub radial_res: Option<f64>,
}

/// Weyl size below which the radial identity is evaluated.
pub const RADIAL_WEYL_GATE: f64 = 1e-8;

pub fn gradient_identity_residuals(data: &SolitonData, p: &[f64]) -> Result<GradientResiduals, SolitonError> {
    let f = data
        .potential()
        .ok_or_else(|| SolitonError::Inapplicable("gradient identities need a potential".into()))?;
    let geo = LocalGeometry::new(&data.chart, p, 3)?;
    let n = geo.n();
    let pack = geo.pack()?;
    let f_jet = geo.scalar_field(f)?;
    let df: Vec<f64> = (0..n).map(|i| f_jet.derivative(&[i]).expect("order >= 1")).collect();
    let grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| pack.inverse[[i, j]] * df[j]).sum()).collect();
    let scal = geo.scalar_curvature();
    let dr: Vec<f64> = (0..n).map(|i| scal.derivative(&[i]).expect("order >= 1")).collect();
    let ric_grad: Vec<f64> = (0..n).map(|i| (0..n).map(|l| pack.ric[[i, l]] * grad[l]).sum()).collect();

    let grad_norm = (0..n).map(|i| df[i] * grad[i]).sum::<f64>().max(0.0).sqrt();
    let ric_norm = pack.ric_norm2.sqrt();
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let div_scale = max_abs(&dr).max(2.0 * max_abs(&ric_grad)).max(RESIDUAL_FLOOR);
    let div_res = (0..n).map(|i| (dr[i] - 2.0 * ric_grad[i]).abs()).fold(0.0, f64::max) / div_scale;

    let weyl_rel = pack.weyl.max_abs() / pack.riem.max_abs().max(1.0);
    let radial_res = (weyl_rel <= RADIAL_WEYL_GATE).then(|| radial_residual(&pack, &grad, grad_norm, ric_norm));
    Ok(GradientResiduals { div_res, radial_res })
}

/// With `e_1` the simple Ricci eigendirection (or `∇f/|∇f|` when Ricci is
/// proportional), for every unit `e_i ⊥ e_1`:
/// `Riem(e_1, e_i, e_1, ∇f) − Ric(e_i, ∇f)/(n−1)` and `(μ − λ) g(e_i, ∇f)/(n−1)`.
fn radial_residual(pack: &CurvaturePack, grad: &[f64], grad_norm: f64, ric_norm: f64) -> f64 {
    let n = pack.n();
    let es = classify_eigenstructure(pack);
    let g = &pack.metric;
    let (frame, gap) = match (es.simple_index(), es.split_values()) {
        (Some(k), Some((mu, lambda))) => {
            let mut cols: Vec<Vec<f64>> = vec![es.vectors.column(k).iter().copied().collect()];
            cols.extend((0..n).filter(|&c| c != k).map(|c| es.vectors.column(c).iter().copied().collect()));
            (cols, mu - lambda)
        }
        _ => (orthonormal_frame(g, grad, grad_norm), 0.0),
    };
    let inner = |u: &[f64], v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += g[[a, b]] * u[a] * v[b];
            }
        }
        acc
    };
    let e1 = &frame[0];
    let mut worst = 0.0f64;
    for ei in &frame[1..] {
        let mut riem = 0.0;
        let mut ric = 0.0;
        for a in 0..n {
            for b in 0..n {
                ric += pack.ric[[a, b]] * ei[a] * grad[b];
                for c in 0..n {
                    for (d, gd) in grad.iter().enumerate() {
                        riem += pack.riem[[a, b, c, d]] * e1[a] * ei[b] * e1[c] * gd;
                    }
                }
            }
        }
        let m = n as f64 - 1.0;
        worst = worst.max((riem - ric / m).abs()).max((gap * inner(ei, grad) / m).abs());
    }
    worst / (ric_norm * grad_norm).max(RESIDUAL_FLOOR)
}

/// `g`-orthonormal frame whose first vector is along `v` (or `∂_1` if `v = 0`).
fn orthonormal_frame(g: &Tensor, v: &[f64], v_norm: f64) -> Vec<Vec<f64>> {
    let n = g.dim();
    let mut seeds: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    if v_norm > 0.0 {
        seeds.push(v.to_vec());
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        seeds.push(e);
    }
    let inner = |u: &[f64], w: &[f64]| -> f64 {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += g[[a, b]] * u[a] * w[b];
            }
        }
        acc
    };
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n);
    for s in seeds {
        if frame.len() == n {
            break;
        }
        let mut u = s;
        for e in &frame {
            let c = inner(&u, e);
            for a in 0..n {
                u[a] -= c * e[a];
            }
        }
        let norm = inner(&u, &u).sqrt();
        if norm > 1e-8 {
            frame.push(u.iter().map(|x| x / norm).collect());
        }
    }
    frame
}

/// Numerical steady rotationally symmetric soliton `dt² + h(t)² σ¹`,
/// with `f(0) = 0`, normalised by `h‴(0) = −1` (unit curvature at the tip).
pub struct BryantProfile {
    pub n: usize,
    pub length: f64,
    pub step: f64,
    pub t: Vec<f64>,
    /// `[h, h′, f, f′]` at each grid time.
    pub states: Vec<[f64; 4]>,
    cap: CapSeries,
}

impl fmt::Debug for BryantProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BryantProfile")
            .field("n", &self.n)
            .field("length", &self.length)
            .field("nodes", &self.t.len())
            .finish()
    }
}

/// Odd/even series of the smooth cap: `h = t + a3 t³ + a5 t⁵`,
/// `f′ = b1 t + b3 t³`, `f = b1 t²/2 + b3 t⁴/4`.
#[derive(Debug, Clone, Copy)]
struct CapSeries {
    a3: f64,
    a5: f64,
    b1: f64,
    b3: f64,
}

impl CapSeries {
    fn new(n: usize) -> Self {
        let nf = n as f64;
        let a3 = -1.0 / 6.0;
        let a5 = 3.0 * (13.0 * nf - 10.0) * a3 * a3 / (10.0 * (nf + 2.0));
        let b1 = 6.0 * (nf - 1.0) * a3;
        let b3 = (nf - 1.0) * (20.0 * a5 - 6.0 * a3 * a3) / 3.0;
        CapSeries { a3, a5, b1, b3 }
    }

    fn state(&self, t: f64) -> [f64; 4] {
        let t2 = t * t;
        [
            t + self.a3 * t * t2 + self.a5 * t * t2 * t2,
            1.0 + 3.0 * self.a3 * t2 + 5.0 * self.a5 * t2 * t2,
            0.5 * self.b1 * t2 + 0.25 * self.b3 * t2 * t2,
            self.b1 * t + self.b3 * t * t2,
        ]
    }

    /// Polynomial derivatives of `h` and `f` at `t`.
    fn derivatives(&self, t: f64, order: usize) -> ([f64; 6], [f64; 6]) {
        let (a3, a5, b1, b3) = (self.a3, self.a5, self.b1, self.b3);
        let h = [
            t + a3 * t.powi(3) + a5 * t.powi(5),
            1.0 + 3.0 * a3 * t * t + 5.0 * a5 * t.powi(4),
            6.0 * a3 * t + 20.0 * a5 * t.powi(3),
            6.0 * a3 + 60.0 * a5 * t * t,
            120.0 * a5 * t,
            120.0 * a5,
        ];
        let f = [
            0.5 * b1 * t * t + 0.25 * b3 * t.powi(4),
            b1 * t + b3 * t.powi(3),
            b1 + 3.0 * b3 * t * t,
            6.0 * b3 * t,
            6.0 * b3,
            0.0,
        ];
        debug_assert!(order <= 5);
        (h, f)
    }
}

/// Start of the numerical integration away from the singular cap.
pub const BRYANT_START: f64 = 1e-4;
/// Default grid spacing.
pub const BRYANT_STEP: f64 = 1e-3;

fn bryant_rhs(n: usize, y: &[f64; 4]) -> [f64; 4] {
    let nf = n as f64;
    let [h, hp, _, phi] = *y;
    let hpp = ((nf - 2.0) * (1.0 - hp * hp) + h * hp * phi) / h;
    [hp, hpp, phi, (nf - 1.0) * hpp / h]
}

fn rk4_step(n: usize, y: &[f64; 4], dt: f64) -> [f64; 4] {
    let add = |a: &[f64; 4], b: &[f64; 4], c: f64| -> [f64; 4] { std::array::from_fn(|i| a[i] + c * b[i]) };
    let k1 = bryant_rhs(n, y);
    let k2 = bryant_rhs(n, &add(y, &k1, dt / 2.0));
    let k3 = bryant_rhs(n, &add(y, &k2, dt / 2.0));
    let k4 = bryant_rhs(n, &add(y, &k3, dt));
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

impl BryantProfile {
    /// Integrates the profile on `[BRYANT_START, length]` with spacing `step`.
    pub fn integrate(n: usize, length: f64, step: f64) -> Result<BryantProfile, SolitonError> {
        if n < 4 || length.is_nan() || length <= BRYANT_START {
            return Err(SolitonError::BryantInput { n, length });
        }
        let cap = CapSeries::new(n);
        let steps = ((length - BRYANT_START) / step).ceil() as usize;
        let dt = (length - BRYANT_START) / steps as f64;
        let mut t = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut y = cap.state(BRYANT_START);
        t.push(BRYANT_START);
        states.push(y);
        for k in 1..=steps {
            y = rk4_step(n, &y, dt);
            let tk = BRYANT_START + k as f64 * dt;
            if !y.iter().all(|v| v.is_finite()) || y[0] <= 0.0 {
                return Err(SolitonError::Integration {
                    t: tk,
                    reason: format!("state left the admissible region: {y:?}"),
                });
            }
            t.push(tk);
            states.push(y);
        }
        Ok(BryantProfile {
            n,
            length,
            step: dt,
            t,
            states,
            cap,
        })
    }

    /// `[h, h′, f, f′]` at any `t` in `(0, length]`.
    pub fn state_at(&self, t: f64) -> Result<[f64; 4], SolitonError> {
        if t <= BRYANT_START {
            return Ok(self.cap.state(t));
        }
        if t > self.length * (1.0 + 1e-12) {
            return Err(SolitonError::Integration {
                t,
                reason: "beyond the integrated range".into(),
            });
        }
        let k = (((t - BRYANT_START) / self.step).round() as usize).min(self.t.len() - 1);
        let dt = t - self.t[k];
        if dt == 0.0 {
            return Ok(self.states[k]);
        }
        Ok(rk4_step(self.n, &self.states[k], dt))
    }

    /// Taylor coefficients of `h` and `f` about `t` up to `order`, from the
    /// ODE itself (Picard iteration in truncated power series).
    pub fn taylor(&self, t: f64, order: usize) -> Result<(Vec<f64>, Vec<f64>), SolitonError> {
        if t <= BRYANT_START {
            let (h, f) = self.cap.derivatives(t, order.min(5));
            let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
            let mut hc: Vec<f64> = (0..=order).map(|k| if k <= 5 { h[k] / fact(k) } else { 0.0 }).collect();
            let mut fc: Vec<f64> = (0..=order).map(|k| if k <= 5 { f[k] / fact(k) } else { 0.0 }).collect();
            hc.truncate(order + 1);
            fc.truncate(order + 1);
            return Ok((hc, fc));
        }
        let [h0, h1, f0, phi0] = self.state_at(t)?;
        let nf = self.n as f64;
        let m = order + 2;
        let jet = |c: Vec<f64>| Jet::from_taylor(1, m, c);
        let deriv = |c: &[f64]| -> Vec<f64> {
            let mut d: Vec<f64> = (1..c.len()).map(|k| k as f64 * c[k]).collect();
            d.push(0.0);
            d
        };
        let integrate = |c: &[f64], c0: f64| -> Vec<f64> {
            let mut out = vec![c0];
            out.extend((0..c.len() - 1).map(|k| c[k] / (k + 1) as f64));
            out
        };
        let mut hc = vec![0.0; m + 1];
        hc[0] = h0;
        hc[1] = h1;
        let mut phic = vec![0.0; m + 1];
        phic[0] = phi0;
        for _ in 0..=m + 1 {
            let hj = jet(hc.clone());
            let hpj = jet(deriv(&hc));
            let phij = jet(phic.clone());
            let one = Jet::constant(1, m, 1.0);
            let drag = &(&hj * &hpj) * &phij;
            let num = &(&one - &(&hpj * &hpj)).scale(nf - 2.0) + &drag;
            let hpp = num
                .try_div(&hj)
                .map_err(|e| SolitonError::Integration { t, reason: e.to_string() })?;
            let phip = hpp
                .try_div(&hj)
                .map_err(|e| SolitonError::Integration { t, reason: e.to_string() })?
                .scale(nf - 1.0);
            let hp_new = integrate(hpp.taylor_coeffs(), h1);
            hc = integrate(&hp_new, h0);
            hc.truncate(m + 1);
            phic = integrate(phip.taylor_coeffs(), phi0);
        }
        let mut fc = integrate(&phic, f0);
        hc.truncate(order + 1);
        fc.truncate(order + 1);
        Ok((hc, fc))
    }

    /// Profile row: `t, h, h′, h″, f′, R, λ, μ` (λ radial, μ on the sphere).
    pub fn row(&self, t: f64) -> Result<[f64; 8], SolitonError> {
        let (h, f) = self.taylor(t, 2)?;
        let (h0, h1, h2) = (h[0], h[1], 2.0 * h[2]);
        let nf = self.n as f64;
        let lambda = -(nf - 1.0) * h2 / h0;
        let mu = ((nf - 2.0) * (1.0 - h1 * h1) - h0 * h2) / (h0 * h0);
        Ok([t, h0, h1, h2, f[1], lambda + (nf - 1.0) * mu, lambda, mu])
    }
}

#[derive(Debug)]
struct WarpProfile(Arc<BryantProfile>);
#[derive(Debug)]
struct PotentialProfile(Arc<BryantProfile>);

fn factorial_scaled(coeffs: &[f64]) -> Vec<f64> {
    let mut fact = 1.0;
    coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| {
            if k > 0 {
                fact *= k as f64;
            }
            c * fact
        })
        .collect()
}

impl Profile for WarpProfile {
    fn derivatives(&self, t: f64, order: usize) -> Result<Vec<f64>, String> {
        let (h, _) = self.0.taylor(t, order).map_err(|e| e.to_string())?;
        Ok(factorial_scaled(&h))
    }
}

impl Profile for PotentialProfile {
    fn derivatives(&self, t: f64, order: usize) -> Result<Vec<f64>, String> {
        let (_, f) = self.0.taylor(t, order).map_err(|e| e.to_string())?;
        Ok(factorial_scaled(&f))
    }
}

/// Fibre coordinates of warped charts range over this half-width.
pub const FIBRE_HALF_WIDTH: f64 = 0.5;

/// Source for `4/(1+K(x2²+…+xn²))²` times `warp²`.
pub fn warped_component_source(n: usize, k: f64, warp: &str) -> String {
    let r2: Vec<String> = (2..=n).map(|i| format!("x{i}^2")).collect();
    let r2 = r2.join("+");
    if k == 0.0 {
        format!("4*({warp})^2")
    } else {
        format!("4*({warp})^2/(1+({k})*({r2}))^2")
    }
}

/// Upper-triangle sources of `dt² + w(t)² σ^K`.
pub fn warped_sources(n: usize, k: f64, warp: &str) -> Vec<String> {
    let fibre = warped_component_source(n, k, warp);
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            out.push(if i != j {
                "0".to_string()
            } else if i == 0 {
                "1".to_string()
            } else {
                fibre.clone()
            });
        }
    }
    out
}

/// Box domain `t ∈ (t0, t1)`, fibre coordinates in `(−½, ½)`.
pub fn warped_domain(n: usize, t0: f64, t1: f64) -> Domain {
    let mut lo = vec![-FIBRE_HALF_WIDTH; n];
    let mut hi = vec![FIBRE_HALF_WIDTH; n];
    lo[0] = t0;
    hi[0] = t1;
    Domain::Box { lo, hi }
}

/// Chart and potential of a solved profile, with profiles `h` and `f` bound.
pub fn bryant_soliton(profile: Arc<BryantProfile>) -> Result<SolitonData, SolitonError> {
    let n = profile.n;
    let bindings = Bindings::new()
        .with_profile("h", Arc::new(WarpProfile(profile.clone())))
        .with_profile("f", Arc::new(PotentialProfile(profile.clone())));
    let sources = warped_sources(n, 1.0, "h(x1)");
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    let chart = MetricChart::parse(
        format!("bryant_profile:n={n}"),
        n,
        &refs,
        warped_domain(n, 0.0, profile.length),
        bindings.clone(),
    )?;
    let symbols = SymbolTable {
        max_var: Some(n),
        ..bindings.symbols()
    };
    let f = parse_expr_with("f(x1)", &symbols).map_err(GeometryError::from)?;
    Ok(SolitonData::gradient(chart, f, 0.0))
}

/// Largest relative soliton residual `|Ric + Hess f| / |Ric|` over `probes`
/// evenly spaced interior times of the profile.
pub fn bryant_residual(profile: &Arc<BryantProfile>, probes: usize) -> Result<(f64, f64), SolitonError> {
    let n = profile.n;
    let data = bryant_soliton(profile.clone())?;
    let mut worst = (0.0, 0.0);
    for k in 1..=probes {
        let t = profile.length * k as f64 / (probes + 1) as f64;
        let mut p = vec![0.1; n];
        p[0] = t;
        let res = soliton_residual(&data, &p)?;
        let ric = LocalGeometry::new(&data.chart, &p, 2)?.ricci().value();
        let rel = res.max_abs() / ric.max_abs().max(RESIDUAL_FLOOR);
        if rel > worst.1 {
            worst = (t, rel);
        }
    }
    Ok(worst)
}

/// Solves the profile and certifies it through the geometry pipeline at 16
/// interior times; fails if the soliton residual exceeds `tol` anywhere.
pub fn bryant_solve(n: usize, length: f64, tol: f64) -> Result<Arc<BryantProfile>, SolitonError> {
    let profile = Arc::new(BryantProfile::integrate(n, length, BRYANT_STEP)?);
    let (t, residual) = bryant_residual(&profile, 16)?;
    if residual > tol {
        return Err(SolitonError::Residual { t, residual, tol });
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curvature_pack;
    use approx::assert_relative_eq;

    fn flat(n: usize) -> MetricChart {
        MetricChart::conformal("flat", n, Expr::Num(1.0), Domain::ball(n, 2.0), Bindings::new()).unwrap()
    }

    #[test]
    fn kind_follows_alpha() {
        assert_eq!(SolitonKind::from_alpha(1.0), SolitonKind::Shrinking);
        assert_eq!(SolitonKind::from_alpha(0.0), SolitonKind::Steady);
        assert_eq!(SolitonKind::from_alpha(-2.0), SolitonKind::Expanding);
    }

    #[test]
    fn gaussian_soliton_residual_vanishes() {
        for alpha in [-1.0, 0.0, 1.0] {
            let f = crate::exprdsl::parse_expr(&format!("({alpha})*(x1^2+x2^2+x3^2+x4^2)/8")).unwrap();
            let data = SolitonData::gradient(flat(4), f, alpha);
            let r = soliton_residual(&data, &[0.3, -0.2, 0.1, 0.5]).unwrap();
            assert!(r.max_abs() < 1e-14, "alpha {alpha}: {}", r.max_abs());
            let g = gradient_identity_residuals(&data, &[0.3, -0.2, 0.1, 0.5]).unwrap();
            assert!(g.div_res < 1e-10);
            assert!(g.radial_res.unwrap() < 1e-10);
        }
    }

    #[test]
    fn one_form_matches_gradient() {
        let f = crate::exprdsl::parse_expr("x1^2*x2 + x3").unwrap();
        let omega = ["2*x1*x2", "x1^2", "1", "0"]
            .map(|s| crate::exprdsl::parse_expr(s).unwrap())
            .to_vec();
        let chart = MetricChart::conformal(
            "conf",
            4,
            crate::exprdsl::parse_expr("1/(1+x1^2)^2").unwrap(),
            Domain::ball(4, 2.0),
            Bindings::new(),
        )
        .unwrap();
        let p = [0.2, 0.4, -0.1, 0.3];
        let a = soliton_residual(&SolitonData::gradient(chart.clone(), f, 0.5), &p).unwrap();
        let b = soliton_residual(
            &SolitonData {
                chart,
                drift: Drift::OneForm(omega),
                alpha: 0.5,
            },
            &p,
        )
        .unwrap();
        assert!(a.rel_diff(&b) < 1e-13);
    }

    #[test]
    fn warped_closed_forms() {
        let y = [0.1, -0.2, 0.3];
        let cyl = warped_ricci(4, 1.0, &[1.0, 0.0, 0.0], &y).unwrap();
        assert_eq!(cyl[[0, 0]], 0.0);
        assert_relative_eq!(cyl[[1, 1]], 2.0 * space_form_factor(1.0, &y));
        let t: f64 = 0.7;
        let sph = warped_ricci(4, 1.0, &[t.sin(), t.cos(), -t.sin()], &y).unwrap();
        assert_relative_eq!(sph[[0, 0]], 3.0, max_relative = 1e-15);
        assert_relative_eq!(
            sph[[2, 2]],
            3.0 * t.sin().powi(2) * space_form_factor(1.0, &y),
            max_relative = 1e-14
        );
        let cone = warped_ricci(4, 1.0, &[t, 1.0, 0.0], &y).unwrap();
        assert_eq!(cone.max_abs(), 0.0);
        assert!(warped_ricci(4, 1.0, &[0.0, 1.0, 0.0], &y).is_err());
    }

    #[test]
    fn sphere_is_proportional() {
        let chart = MetricChart::conformal(
            "s4",
            4,
            crate::exprdsl::parse_expr("4/(1+x1^2+x2^2+x3^2+x4^2)^2").unwrap(),
            Domain::ball(4, 2.0),
            Bindings::new(),
        )
        .unwrap();
        let pack = curvature_pack(&chart, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let es = classify_eigenstructure(&pack);
        assert_eq!(es.pattern, EigenPattern::Proportional);
        assert_relative_eq!(es.clusters[0].value, 3.0, max_relative = 1e-12);
        for i in 0..4 {
            for j in 0..4 {
                assert!(eigen_quadratic_residual(&pack, i, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cap_series_solves_ode_to_high_order() {
        // ODE residual of the truncated series decays like t^5; a wrong a5 or b3
        // would leave a t^4 or t^3 term.
        for n in [4usize, 5, 7] {
            let cap = CapSeries::new(n);
            let res = |t: f64| {
                let (h, f) = cap.derivatives(t, 3);
                let nf = n as f64;
                let r1 = h[2] * h[0] - ((nf - 2.0) * (1.0 - h[1] * h[1]) + h[0] * h[1] * f[1]);
                let r2 = f[2] * h[0] - (nf - 1.0) * h[2];
                r1.abs().max(r2.abs())
            };
            let ratio = res(0.02) / res(0.01);
            assert!(ratio > 2f64.powf(4.8), "n={n}: ratio {ratio}");
        }
    }

    #[test]
    fn flat_solution_satisfies_steady_equations() {
        // h = t, f constant: h″ = 0 and (n−2)(1 − h′²) − h h″ + h h′ f′ = 0.
        let n = 4.0;
        let (h, hp, hpp, fp) = (0.7, 1.0, 0.0, 0.0);
        assert_eq!((n - 2.0) * (1.0 - hp * hp) - h * hpp + h * hp * fp, 0.0);
        assert_eq!(-(n - 1.0) * hpp / h + 0.0, 0.0);
    }

    #[test]
    fn bryant_profile_shape() {
        let profile = BryantProfile::integrate(4, 4.0, BRYANT_STEP).unwrap();
        let mut last_r = f64::INFINITY;
        for k in 1..40 {
            let t = 0.1 * k as f64;
            let [_, h, hp, hpp, _, r, _, _] = profile.row(t).unwrap();
            assert!(h > 0.0 && hp > 0.0 && hp <= 1.0 && hpp <= 0.0, "t={t}");
            assert!(r > 0.0 && r < last_r, "scalar curvature at t={t}");
            last_r = r;
        }
        let [_, _, _, _, _, r0, _, _] = profile.row(1e-5).unwrap();
        assert_relative_eq!(r0, 12.0, max_relative = 1e-6);
    }

    #[test]
    fn taylor_mode_matches_grid_and_ode() {
        let profile = BryantProfile::integrate(4, 3.0, BRYANT_STEP).unwrap();
        let t = 1.2345;
        let (h, f) = profile.taylor(t, 4).unwrap();
        let st = profile.state_at(t).unwrap();
        assert_relative_eq!(h[0], st[0], max_relative = 1e-14);
        assert_relative_eq!(h[1], st[1], max_relative = 1e-14);
        assert_relative_eq!(f[1], st[3], max_relative = 1e-14);
        // h at t + δ from the series agrees with integrating the ODE.
        let d = 0.01;
        let ahead = profile.state_at(t + d).unwrap();
        let series: f64 = h.iter().enumerate().map(|(k, c)| c * d.powi(k as i32)).sum();
        assert!((series - ahead[0]).abs() < 1e-11, "{}", (series - ahead[0]).abs());
    }

    #[test]
    fn bryant_passes_pipeline() {
        let profile = bryant_solve(4, 4.0, 1e-6).unwrap();
        let data = bryant_soliton(profile).unwrap();
        let p = [2.0, 0.1, -0.2, 0.05];
        let pack = curvature_pack(&data.chart, &p).unwrap();
        assert!(pack.weyl.max_abs() < 1e-9 * pack.riem.max_abs());
        let es = classify_eigenstructure(&pack);
        assert_eq!(es.pattern, EigenPattern::Split { major: 3, minor: 1 });
        let g = gradient_identity_residuals(&data, &p).unwrap();
        assert!(g.div_res < 1e-8, "{}", g.div_res);
        assert!(g.radial_res.unwrap() < 1e-8);
    }

    #[test]
    fn equal_multiplicities_force_equal_eigenvalues() {
        // n = 2k with λ, μ of multiplicity k: both must be roots of
        // n x² − 2R x − (|Ric|² − R²)/(n−1); that only happens when λ = μ.
        for k in [2usize, 3, 4] {
            let n = 2 * k;
            let nf = n as f64;
            for (lambda, mu) in [(1.0, 2.0), (-0.5, 3.0), (0.3, 0.30001), (1.5, 1.5)] {
                let r = k as f64 * (lambda + mu);
                let nr2 = k as f64 * (lambda * lambda + mu * mu);
                let q = |x: f64| nf * x * x - 2.0 * r * x - (nr2 - r * r) / (nf - 1.0);
                let both_roots = q(lambda).abs() < 1e-12 && q(mu).abs() < 1e-12;
                assert_eq!(both_roots, lambda == mu, "n={n} λ={lambda} μ={mu}");
                // the final step of the chain: 2n(n−2)/(n−1) λμ − n(n−2)/(n−1)(λ²+μ²) = −n(n−2)/(n−1)(λ−μ)²
                let lhs = 2.0 * nf * (nf - 2.0) / (nf - 1.0) * lambda * mu - nf * (nf - 2.0) / (nf - 1.0) * (lambda * lambda + mu * mu);
                assert_relative_eq!(lhs, -nf * (nf - 2.0) / (nf - 1.0) * (lambda - mu).powi(2), epsilon = 1e-12);
            }
        }
    }
}
