//! Curvature of coordinate metrics.
//!
//! Conventions: `R^l_ijk = ∂_jΓ^l_ik − ∂_iΓ^l_jk + Γ^l_jm Γ^m_ik − Γ^l_im Γ^m_jk`
//! and `R_ijkl = g_lm R^m_ijk`, so the round sphere of curvature `K` has
//! `R_ijkl = K (g_ik g_jl − g_il g_jk)` and `Riem(v,w,v,w) > 0`.
//! Ricci is `R_ik = g^jl R_ijkl`; Weyl is `W = Riem + A + B` with
//!
//! ```text
//! A_ijkl = R/((n−1)(n−2)) (g_ik g_jl − g_il g_jk)
//! B_ijkl = −1/(n−2) (R_ik g_jl − R_il g_jk + R_jl g_ik − R_jk g_il)
//! ```
//!
//! Every quantity is computed in Taylor-jet arithmetic: the metric is
//! expanded to order `K`, Christoffels come out at order `K−1`, curvature at
//! `K−2`, and each covariant derivative costs one more order. Derivatives are
//! therefore exact up to rounding.

use nalgebra::{Cholesky, DMatrix};

use crate::exprdsl::{eval_jet, parse_expr_with, Bindings, EvalError, Expr, ParseError, SymbolTable};
use crate::jet::Jet;
use crate::tensor::{metric_condition, multi_indices, Tensor, TensorError, Variance};

use Variance::{Down, Up};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("metric is not positive definite at {point:?}")]
    NotPositiveDefinite { point: Vec<f64> },
    #[error("point {point:?} lies outside the chart domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("{what} needs dimension {needed}, chart has {found}")]
    Dimension { what: &'static str, needed: usize, found: usize },
    #[error("jet order {available} is too low, {needed} required")]
    Order { needed: usize, available: usize },
    #[error("invalid chart: {0}")]
    Chart(String),
}

/// Coordinate region on which a chart is used.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn ball(n: usize, radius: f64) -> Domain {
        Domain::Ball {
            center: vec![0.0; n],
            radius,
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        match self {
            Domain::Ball { center, radius } => {
                p.len() == center.len() && p.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() < radius * radius
            }
            Domain::Box { lo, hi } => p.len() == lo.len() && p.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| l < x && x < h),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Ball { center, .. } => center.len(),
            Domain::Box { lo, .. } => lo.len(),
        }
    }
}

/// A metric given by one expression per component `g_ij`, `i <= j`.
#[derive(Debug, Clone)]
pub struct MetricChart {
    pub name: String,
    pub n: usize,
    components: Vec<Expr>,
    pub domain: Domain,
    pub bindings: Bindings,
}

fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl MetricChart {
    /// `components` lists the upper triangle row by row.
    pub fn new(
        name: impl Into<String>,
        n: usize,
        components: Vec<Expr>,
        domain: Domain,
        bindings: Bindings,
    ) -> Result<Self, GeometryError> {
        let name = name.into();
        if n < 2 {
            return Err(GeometryError::Chart(format!("dimension {n} < 2")));
        }
        if components.len() != n * (n + 1) / 2 {
            return Err(GeometryError::Chart(format!(
                "expected {} components, got {}",
                n * (n + 1) / 2,
                components.len()
            )));
        }
        if domain.dim() != n {
            return Err(GeometryError::Chart("domain dimension differs from chart".into()));
        }
        for e in &components {
            if e.max_var() > n {
                return Err(GeometryError::Chart(format!("component `{e}` uses x{}", e.max_var())));
            }
            let mut params = Default::default();
            e.params(&mut params);
            if let Some(p) = params.iter().find(|p| !bindings.params.contains_key(*p)) {
                return Err(GeometryError::Chart(format!("parameter `{p}` is not bound")));
            }
            let mut profiles = Default::default();
            e.profiles(&mut profiles);
            if let Some(p) = profiles.iter().find(|p| !bindings.profiles.contains_key(*p)) {
                return Err(GeometryError::Chart(format!("profile `{p}` is not bound")));
            }
        }
        Ok(MetricChart {
            name,
            n,
            components,
            domain,
            bindings,
        })
    }

    /// Parses DSL sources for the upper triangle.
    pub fn parse(name: impl Into<String>, n: usize, sources: &[&str], domain: Domain, bindings: Bindings) -> Result<Self, GeometryError> {
        let symbols = SymbolTable {
            max_var: Some(n),
            ..bindings.symbols()
        };
        let components = sources
            .iter()
            .map(|s| parse_expr_with(s, &symbols))
            .collect::<Result<Vec<_>, _>>()?;
        MetricChart::new(name, n, components, domain, bindings)
    }

    /// Conformally flat chart `factor · δ`.
    pub fn conformal(name: impl Into<String>, n: usize, factor: Expr, domain: Domain, bindings: Bindings) -> Result<Self, GeometryError> {
        let mut components = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                components.push(if i == j { factor.clone() } else { Expr::Num(0.0) });
            }
        }
        MetricChart::new(name, n, components, domain, bindings)
    }

    pub fn component(&self, i: usize, j: usize) -> &Expr {
        &self.components[packed(self.n, i, j)]
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// The chart of `c · g`.
    pub fn scaled(&self, c: f64) -> MetricChart {
        let components = self
            .components
            .iter()
            .map(|e| Expr::bin(crate::exprdsl::BinOp::Mul, Expr::Num(c), e.clone()))
            .collect();
        MetricChart {
            name: format!("{}*{c}", self.name),
            components,
            ..self.clone()
        }
    }

    pub fn metric_at(&self, p: &[f64]) -> Result<Tensor, GeometryError> {
        let mut g = Tensor::zeros(self.n, vec![Down, Down]);
        for i in 0..self.n {
            for j in i..self.n {
                let v = eval_jet(self.component(i, j), p, 0, &self.bindings)?.value();
                g[[i, j]] = v;
                g[[j, i]] = v;
            }
        }
        Ok(g)
    }

    /// Cholesky test of positive definiteness at `p`.
    pub fn check_positive(&self, p: &[f64]) -> Result<(), GeometryError> {
        let g = self.metric_at(p)?;
        if Cholesky::new(g.to_matrix()).is_none() {
            return Err(GeometryError::NotPositiveDefinite { point: p.to_vec() });
        }
        Ok(())
    }
}

/// Ring operations shared by plain values and jets.
pub trait Scalar: Clone {
    fn zero_like(&self) -> Self;
    fn plus(&self, o: &Self) -> Self;
    fn minus(&self, o: &Self) -> Self;
    fn times(&self, o: &Self) -> Self;
    fn scaled(&self, c: f64) -> Self;
    /// `self += a * b`
    fn fma(&mut self, a: &Self, b: &Self);
}

impl Scalar for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn scaled(&self, c: f64) -> Self {
        self * c
    }
    fn fma(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
}

impl Scalar for Jet {
    fn zero_like(&self) -> Self {
        Jet::constant(self.nvars(), self.order(), 0.0)
    }
    fn plus(&self, o: &Self) -> Self {
        self + o
    }
    fn minus(&self, o: &Self) -> Self {
        self - o
    }
    fn times(&self, o: &Self) -> Self {
        self * o
    }
    fn scaled(&self, c: f64) -> Self {
        self.scale(c)
    }
    fn fma(&mut self, a: &Self, b: &Self) {
        self.add_product_assign(a, b);
    }
}

/// `R_ik = g^jl R_ijkl`.
pub fn ricci_of<T: Scalar>(riem: &Tensor<T>, ginv: &Tensor<T>) -> Tensor<T> {
    let n = riem.dim();
    let zero = riem.data()[0].zero_like();
    Tensor::from_fn(n, vec![Down, Down], |ik| {
        let mut acc = zero.clone();
        for j in 0..n {
            for l in 0..n {
                acc.fma(&ginv[[j, l]], &riem[[ik[0], j, ik[1], l]]);
            }
        }
        acc
    })
}

/// `g^ij h_ij`.
pub fn trace_of<T: Scalar>(h: &Tensor<T>, ginv: &Tensor<T>) -> T {
    let n = h.dim();
    let mut acc = h.data()[0].zero_like();
    for i in 0..n {
        for j in 0..n {
            acc.fma(&ginv[[i, j]], &h[[i, j]]);
        }
    }
    acc
}

/// `h_ik k_jl − h_il k_jk + h_jl k_ik − h_jk k_il`.
pub fn kulkarni<T: Scalar>(h: &Tensor<T>, k: &Tensor<T>) -> Tensor<T> {
    let n = h.dim();
    Tensor::from_fn(n, vec![Down; 4], |x| {
        let (i, j, kk, l) = (x[0], x[1], x[2], x[3]);
        let mut acc = h[[i, kk]].times(&k[[j, l]]);
        acc = acc.minus(&h[[i, l]].times(&k[[j, kk]]));
        acc = acc.plus(&h[[j, l]].times(&k[[i, kk]]));
        acc.minus(&h[[j, kk]].times(&k[[i, l]]))
    })
}

/// `g_ik g_jl − g_il g_jk`.
pub fn metric_wedge<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let half = kulkarni(g, g);
    half.map(|v| v.scaled(0.5))
}

/// The tensors `A`, `B` and `W = Riem + A + B`.
pub fn weyl_parts<T: Scalar>(g: &Tensor<T>, riem: &Tensor<T>, ric: &Tensor<T>, scal: &T) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let n = g.dim() as f64;
    let gg = metric_wedge(g);
    let ca = scal.scaled(1.0 / ((n - 1.0) * (n - 2.0)));
    let a = gg.map(|v| ca.times(v));
    let b = kulkarni(ric, g).map(|v| v.scaled(-1.0 / (n - 2.0)));
    let data = riem
        .data()
        .iter()
        .zip(a.data())
        .zip(b.data())
        .map(|((r, a), b)| r.plus(a).plus(b))
        .collect();
    let w = Tensor::from_vec(g.dim(), vec![Down; 4], data).expect("same shape");
    (a, b, w)
}

/// `S = Ric − R g / (2(n−1))`.
pub fn schouten_of<T: Scalar>(g: &Tensor<T>, ric: &Tensor<T>, scal: &T) -> Tensor<T> {
    let n = g.dim() as f64;
    let c = scal.scaled(1.0 / (2.0 * (n - 1.0)));
    Tensor::from_fn(g.dim(), vec![Down, Down], |x| ric[[x[0], x[1]]].minus(&c.times(&g[[x[0], x[1]]])))
}

/// `X ⋆ Y` with `(X ⋆ Y)_ijkl = g^pq g^rs X_pijr Y_slkq`.
pub fn star(x: &Tensor, y: &Tensor, ginv: &Tensor) -> Tensor {
    let n = x.dim();
    // X^q_ij^s = g^qp X_pijr g^rs
    let xr = Tensor::from_fn(n, vec![Up, Down, Down, Up], |a| {
        let (q, i, j, s) = (a[0], a[1], a[2], a[3]);
        let mut acc = 0.0;
        for p in 0..n {
            for r in 0..n {
                acc += ginv[[q, p]] * x[[p, i, j, r]] * ginv[[r, s]];
            }
        }
        acc
    });
    Tensor::covariant(n, 4, |a| {
        let (i, j, k, l) = (a[0], a[1], a[2], a[3]);
        let mut acc = 0.0;
        for q in 0..n {
            for s in 0..n {
                acc += xr[[q, i, j, s]] * y[[s, l, k, q]];
            }
        }
        acc
    })
}

/// `P_ijkl − P_ijlk + P_ikjl − P_iljk`.
pub fn interchange_sum(p: &Tensor) -> Tensor {
    Tensor::covariant(p.dim(), 4, |a| {
        let (i, j, k, l) = (a[0], a[1], a[2], a[3]);
        p[[i, j, k, l]] - p[[i, j, l, k]] + p[[i, k, j, l]] - p[[i, l, j, k]]
    })
}

/// Curvature quantities at one point, components in the chart frame.
#[derive(Debug, Clone)]
pub struct CurvaturePack {
    pub point: Vec<f64>,
    pub metric: Tensor,
    pub inverse: Tensor,
    pub gamma: Tensor,
    pub riem: Tensor,
    pub ric: Tensor,
    pub scalar: f64,
    pub weyl: Tensor,
    pub a_tensor: Tensor,
    pub b_tensor: Tensor,
    pub schouten: Tensor,
    pub c_tensor: Tensor,
    pub d_tensor: Tensor,
    pub ric_norm2: f64,
}

impl CurvaturePack {
    pub fn n(&self) -> usize {
        self.metric.dim()
    }

    /// `g^pq R_ip R_qk`.
    pub fn ric_squared(&self) -> Tensor {
        let n = self.n();
        Tensor::covariant(n, 2, |a| {
            let mut acc = 0.0;
            for p in 0..n {
                for q in 0..n {
                    acc += self.ric[[a[0], p]] * self.inverse[[p, q]] * self.ric[[q, a[1]]];
                }
            }
            acc
        })
    }

    /// `|Rm|` in the metric norm.
    pub fn riem_norm(&self) -> f64 {
        self.riem.norm2(&self.inverse).max(0.0).sqrt()
    }
}

/// Jet expansion of the geometry at one point.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    n: usize,
    order: usize,
    point: Vec<f64>,
    bindings: Bindings,
    g: Tensor<Jet>,
    ginv: Tensor<Jet>,
    gamma: Tensor<Jet>,
    riem: Tensor<Jet>,
}

fn jet_matmul(a: &Tensor<Jet>, b: &Tensor<Jet>) -> Tensor<Jet> {
    let n = a.dim();
    Tensor::from_fn(n, vec![a.valence()[0], b.valence()[1]], |x| {
        let mut acc = a[[x[0], 0]].zero_like();
        for m in 0..n {
            acc.fma(&a[[x[0], m]], &b[[m, x[1]]]);
        }
        acc
    })
}

impl LocalGeometry {
    /// Expands the metric to `order` (at least 2) at `p`.
    pub fn new(chart: &MetricChart, p: &[f64], order: usize) -> Result<Self, GeometryError> {
        let n = chart.n;
        if order < 2 {
            return Err(GeometryError::Order {
                needed: 2,
                available: order,
            });
        }
        if p.len() != n {
            return Err(GeometryError::Dimension {
                what: "point",
                needed: n,
                found: p.len(),
            });
        }
        if !chart.domain.contains(p) {
            return Err(GeometryError::OutsideDomain { point: p.to_vec() });
        }
        let mut comps = Vec::with_capacity(n * (n + 1) / 2);
        for e in chart.components() {
            comps.push(eval_jet(e, p, order, &chart.bindings)?);
        }
        let g = Tensor::from_fn(n, vec![Down, Down], |x| comps[packed(n, x[0], x[1])].clone());
        let g0 = g.value();
        metric_condition(&g0).map_err(|e| match e {
            TensorError::SingularMetric { .. } => GeometryError::NotPositiveDefinite { point: p.to_vec() },
            other => other.into(),
        })?;
        let m0 = g0
            .to_matrix()
            .cholesky()
            .ok_or_else(|| GeometryError::NotPositiveDefinite { point: p.to_vec() })?
            .inverse();
        let ginv = neumann_inverse(&g, &m0, order);

        // Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij)
        let dg: Vec<Tensor<Jet>> = (0..n).map(|v| g.map(|c| c.diff(v))).collect();
        let first = Tensor::from_fn(n, vec![Down; 3], |x| {
            let (l, i, j) = (x[0], x[1], x[2]);
            (&(&dg[i][[j, l]] + &dg[j][[i, l]]) - &dg[l][[i, j]]).scale(0.5)
        });
        let gamma = Tensor::from_fn(n, vec![Up, Down, Down], |x| {
            let (k, i, j) = (x[0], x[1], x[2]);
            let mut acc = Jet::constant(n, order - 1, 0.0);
            for l in 0..n {
                acc.fma(&ginv[[k, l]], &first[[l, i, j]]);
            }
            acc
        });

        let dgamma: Vec<Tensor<Jet>> = (0..n).map(|v| gamma.map(|c| c.diff(v))).collect();
        let up = Tensor::from_fn(n, vec![Up, Down, Down, Down], |x| {
            let (l, i, j, k) = (x[0], x[1], x[2], x[3]);
            let mut acc = &dgamma[j][[l, i, k]] - &dgamma[i][[l, j, k]];
            for m in 0..n {
                acc.fma(&gamma[[l, j, m]], &gamma[[m, i, k]]);
                acc.fma(&gamma[[l, i, m]], &gamma[[m, j, k]].scale(-1.0));
            }
            acc
        });
        let riem = Tensor::from_fn(n, vec![Down; 4], |x| {
            let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
            let mut acc = Jet::constant(n, order - 2, 0.0);
            for m in 0..n {
                acc.fma(&g[[l, m]], &up[[m, i, j, k]]);
            }
            acc
        });

        Ok(LocalGeometry {
            n,
            order,
            point: p.to_vec(),
            bindings: chart.bindings.clone(),
            g,
            ginv,
            gamma,
            riem,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn metric(&self) -> &Tensor<Jet> {
        &self.g
    }

    pub fn inverse(&self) -> &Tensor<Jet> {
        &self.ginv
    }

    /// `Γ^k_ij` with slots `[k, i, j]`, order `K−1`.
    pub fn christoffel(&self) -> &Tensor<Jet> {
        &self.gamma
    }

    /// `R_ijkl`, order `K−2`.
    pub fn riemann(&self) -> &Tensor<Jet> {
        &self.riem
    }

    pub fn ricci(&self) -> Tensor<Jet> {
        ricci_of(&self.riem, &self.ginv)
    }

    pub fn scalar_curvature(&self) -> Jet {
        trace_of(&self.ricci(), &self.ginv)
    }

    fn require_weyl(&self) -> Result<(), GeometryError> {
        if self.n < 3 {
            return Err(GeometryError::Dimension {
                what: "Weyl decomposition",
                needed: 3,
                found: self.n,
            });
        }
        Ok(())
    }

    pub fn weyl(&self) -> Result<Tensor<Jet>, GeometryError> {
        self.require_weyl()?;
        let ric = self.ricci();
        let scal = trace_of(&ric, &self.ginv);
        Ok(weyl_parts(&self.g, &self.riem, &ric, &scal).2)
    }

    pub fn schouten(&self) -> Result<Tensor<Jet>, GeometryError> {
        self.require_weyl()?;
        let ric = self.ricci();
        let scal = trace_of(&ric, &self.ginv);
        Ok(schouten_of(&self.g, &ric, &scal))
    }

    /// Jet of a scalar expression at the base point, using the chart bindings.
    pub fn scalar_field(&self, e: &Expr) -> Result<Jet, GeometryError> {
        Ok(eval_jet(e, &self.point, self.order, &self.bindings)?)
    }

    /// `(∇T)_{a b1..br} = ∂_a T_{b..} − Σ_s Γ^c_{a b_s} T_{..c..}` for an
    /// all-lower field; the derivative slot comes first.
    pub fn nabla(&self, t: &Tensor<Jet>) -> Result<Tensor<Jet>, GeometryError> {
        if t.valence().contains(&Up) {
            return Err(TensorError::VarianceMismatch.into());
        }
        let order = t.data().iter().map(Jet::order).min().unwrap_or(0);
        if order == 0 {
            return Err(GeometryError::Order { needed: 1, available: 0 });
        }
        let n = self.n;
        let rank = t.rank();
        let mut src = vec![0; rank];
        Ok(Tensor::from_fn(n, vec![Down; rank + 1], |x| {
            let a = x[0];
            let b = &x[1..];
            let mut acc = t.get(b).diff(a);
            for s in 0..rank {
                src.copy_from_slice(b);
                for c in 0..n {
                    src[s] = c;
                    acc.fma(&self.gamma[[c, a, b[s]]], &t.get(&src).scale(-1.0));
                }
            }
            acc
        }))
    }

    /// `g^ab ∇_a ∇_b T`.
    pub fn laplacian(&self, t: &Tensor<Jet>) -> Result<Tensor<Jet>, GeometryError> {
        let hess = self.nabla(&self.nabla(t)?)?;
        let n = self.n;
        let rank = t.rank();
        let mut full = vec![0; rank + 2];
        Ok(Tensor::from_fn(n, vec![Down; rank], |x| {
            full[2..].copy_from_slice(x);
            let mut acc = Jet::constant(n, hess.data()[0].order(), 0.0);
            for a in 0..n {
                for b in 0..n {
                    full[0] = a;
                    full[1] = b;
                    acc.fma(&self.ginv[[a, b]], hess.get(&full));
                }
            }
            acc
        }))
    }

    /// Covariant Hessian `∇_a∇_b f` of a scalar jet.
    pub fn hessian(&self, f: &Jet) -> Result<Tensor<Jet>, GeometryError> {
        let df = Tensor::from_fn(self.n, vec![Down], |x| f.diff(x[0]));
        self.nabla(&df)
    }

    /// All point values. Needs `n ≥ 3`.
    pub fn pack(&self) -> Result<CurvaturePack, GeometryError> {
        self.require_weyl()?;
        let metric = self.g.value();
        let inverse = self.ginv.value();
        let riem = self.riem.value();
        let ric = ricci_of(&riem, &inverse);
        let scalar = trace_of(&ric, &inverse);
        let (a_tensor, b_tensor, weyl) = weyl_parts(&metric, &riem, &ric, &scalar);
        let schouten = schouten_of(&metric, &ric, &scalar);
        let c_tensor = star(&riem, &riem, &inverse);
        let d_tensor = star(&weyl, &weyl, &inverse);
        let ric_norm2 = ric.norm2(&inverse);
        let pack = CurvaturePack {
            point: self.point.clone(),
            gamma: self.gamma.value(),
            metric,
            inverse,
            riem,
            ric,
            scalar,
            weyl,
            a_tensor,
            b_tensor,
            schouten,
            c_tensor,
            d_tensor,
            ric_norm2,
        };
        if !(pack.riem.is_finite() && pack.weyl.is_finite() && pack.scalar.is_finite()) {
            return Err(TensorError::NonFinite.into());
        }
        Ok(pack)
    }
}

/// `g^{-1} = Σ_m (−M E)^m M` with `M = g(p)^{-1}` and `E = g − g(p)`;
/// the series terminates because `E` has no constant term.
fn neumann_inverse(g: &Tensor<Jet>, m0: &DMatrix<f64>, order: usize) -> Tensor<Jet> {
    let n = g.dim();
    let m = Tensor::from_fn(n, vec![Up, Up], |x| Jet::constant(n, order, m0[(x[0], x[1])]));
    let e = g.map(|c| c.add_scalar(-c.value()));
    let minus_me = jet_matmul(&m, &e).map(|c| c.scale(-1.0));
    let mut term = m.clone();
    let mut sum = m;
    for _ in 0..order {
        term = jet_matmul(&minus_me, &term);
        for (s, t) in multi_indices(n, 2).zip(term.data()) {
            let mut cur = sum.get(&s).clone();
            cur.add_scaled_assign(1.0, t);
            sum.set(&s, cur);
        }
    }
    sum
}

/// Tensor fields that can be differentiated covariantly.
#[derive(Debug, Clone)]
pub enum Field {
    Metric,
    Riemann,
    Ricci,
    ScalarCurvature,
    Weyl,
    Schouten,
    Scalar(Expr),
}

impl Field {
    /// Derivative orders of `g` consumed before any covariant derivative.
    fn base_cost(&self) -> usize {
        match self {
            Field::Metric | Field::Scalar(_) => 0,
            _ => 2,
        }
    }

    fn eval(&self, geo: &LocalGeometry) -> Result<Tensor<Jet>, GeometryError> {
        Ok(match self {
            Field::Metric => geo.metric().clone(),
            Field::Riemann => geo.riemann().clone(),
            Field::Ricci => geo.ricci(),
            Field::ScalarCurvature => {
                let s = geo.scalar_curvature();
                Tensor::from_vec(geo.n(), Vec::new(), vec![s])?
            }
            Field::Weyl => geo.weyl()?,
            Field::Schouten => geo.schouten()?,
            Field::Scalar(e) => Tensor::from_vec(geo.n(), Vec::new(), vec![geo.scalar_field(e)?])?,
        })
    }
}

fn geometry_for(chart: &MetricChart, p: &[f64], field: &Field, derivatives: usize) -> Result<(LocalGeometry, Tensor<Jet>), GeometryError> {
    let order = (field.base_cost() + derivatives).max(2);
    let geo = LocalGeometry::new(chart, p, order)?;
    let t = field.eval(&geo)?;
    Ok((geo, t))
}

pub fn christoffel(chart: &MetricChart, p: &[f64]) -> Result<Tensor, GeometryError> {
    Ok(LocalGeometry::new(chart, p, 2)?.christoffel().value())
}

pub fn riemann(chart: &MetricChart, p: &[f64]) -> Result<Tensor, GeometryError> {
    Ok(LocalGeometry::new(chart, p, 2)?.riemann().value())
}

pub fn curvature_pack(chart: &MetricChart, p: &[f64]) -> Result<CurvaturePack, GeometryError> {
    LocalGeometry::new(chart, p, 2)?.pack()
}

/// `∇T` at `p`, derivative slot first.
pub fn covariant_derivative(field: &Field, chart: &MetricChart, p: &[f64]) -> Result<Tensor, GeometryError> {
    let (geo, t) = geometry_for(chart, p, field, 1)?;
    Ok(geo.nabla(&t)?.value())
}

pub fn rough_laplacian(field: &Field, chart: &MetricChart, p: &[f64]) -> Result<Tensor, GeometryError> {
    let (geo, t) = geometry_for(chart, p, field, 2)?;
    Ok(geo.laplacian(&t)?.value())
}

/// `∇^l W_ijkl`, slots `[i, j, k]`. Needs `n ≥ 4`.
pub fn divergence_weyl(chart: &MetricChart, p: &[f64]) -> Result<Tensor, GeometryError> {
    if chart.n < 4 {
        return Err(GeometryError::Dimension {
            what: "divergence of Weyl",
            needed: 4,
            found: chart.n,
        });
    }
    let geo = LocalGeometry::new(chart, p, 3)?;
    weyl_divergence(&geo)
}

pub(crate) fn weyl_divergence(geo: &LocalGeometry) -> Result<Tensor, GeometryError> {
    let n = geo.n();
    let dw = geo.nabla(&geo.weyl()?)?.value();
    let ginv = geo.inverse().value();
    Ok(Tensor::covariant(n, 3, |x| {
        let mut acc = 0.0;
        for a in 0..n {
            for l in 0..n {
                acc += ginv[[l, a]] * dw[[a, x[0], x[1], x[2], l]];
            }
        }
        acc
    }))
}

/// `(n−3)/(n−2) (∇_j S_ik − ∇_i S_jk)`, slots `[i, j, k]`.
pub(crate) fn schouten_curl(geo: &LocalGeometry) -> Result<Tensor, GeometryError> {
    let n = geo.n();
    let ds = geo.nabla(&geo.schouten()?)?.value();
    let c = (n as f64 - 3.0) / (n as f64 - 2.0);
    Ok(Tensor::covariant(n, 3, |x| {
        let (i, j, k) = (x[0], x[1], x[2]);
        c * (ds[[j, i, k]] - ds[[i, j, k]])
    }))
}
