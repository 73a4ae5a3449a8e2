//! The identity suite: named residual checks over catalog entries and
//! reduced flows.
//!
//! Algebraic identities are compared in a `g`-orthonormal frame. The left
//! side of each check is contracted in the chart with `g^{-1}` and then
//! moved to the frame; the right side is assembled from frame components
//! of `Riem`, `Ric`, `W` and the products `C`, `D`. A residual is
//! `max |LHS − RHS| / max(|LHS|, |RHS|, floor)` where the floor is the
//! curvature scale of matching degree.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{sample_points, CatalogEntry, CatalogError, KnownFact};
use crate::flow::{fd_time_derivative, integrate_flow, FlowError, FlowFamily, FlowTrajectory};
use crate::geometry::{interchange_sum, schouten_curl, star, weyl_divergence, CurvaturePack, GeometryError, LocalGeometry};
use crate::soliton::{
    classify_eigenstructure, eigen_quadratic, gradient_identity_residuals, warped_ricci, EigenPattern, SolitonData, SolitonError,
};
use crate::tensor::{Tensor, Variance, RESIDUAL_FLOOR};

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error("check `{check}` does not apply to `{metric}`: {reason}")]
    Inapplicable { check: String, metric: String, reason: String },
    #[error("check `{0}` needs a flow trajectory")]
    MissingFlow(String),
    #[error("check `{0}` takes no flow trajectory")]
    UnexpectedFlow(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Soliton(#[from] SolitonError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// No point could be evaluated.
    Inconclusive,
    /// Evaluation failed; `reason` says why.
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub h: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_id: String,
    pub paper_ref: String,
    pub metric: String,
    pub n_points: usize,
    /// `None` when evaluation failed.
    pub max_residual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub convergence: Vec<ConvergencePoint>,
    /// Smallest observed order `log2(r(h)/r(h/2))`; `None` when every
    /// finite-difference residual sits in the roundoff band.
    pub order: Option<f64>,
    /// Largest `max(|LHS|, |RHS|)` seen, to expose vacuous `0 = 0` agreement.
    pub magnitude: Option<f64>,
    pub status: Status,
    pub reason: Option<String>,
}

/// Finite-difference residuals below this are treated as roundoff.
pub const ROUNDOFF_BAND: f64 = 1e-9;
/// Time at which flow checks are evaluated.
pub const FLOW_TIME: f64 = 0.05;
/// Finite-difference step for flow checks; `FLOW_STEP / 2` is also run.
pub const FLOW_STEP: f64 = 1e-3;
const FLOW_STEPS: usize = 60;

#[derive(Debug, Clone, Copy)]
enum FlowKind {
    Scalar,
    Ricci,
    Riemann,
    Weyl,
}

type PointEval = fn(&PointData, &CatalogEntry) -> Result<Option<Sample>, CheckError>;

#[derive(Clone, Copy)]
enum Evaluator {
    Point(PointEval),
    Flow(FlowKind),
}

/// A registered check.
#[derive(Clone, Copy)]
pub struct CheckDef {
    pub id: &'static str,
    pub description: &'static str,
    /// Topic tag reported as `paper_ref`.
    pub reference: &'static str,
    pub min_n: usize,
    pub max_n: usize,
    pub needs_flow: bool,
    pub tolerance: f64,
    applies: fn(&CatalogEntry) -> bool,
    eval: Evaluator,
}

impl std::fmt::Debug for CheckDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CheckDef")
            .field("id", &self.id)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

impl CheckDef {
    /// `Ok` when the check runs on `entry`, otherwise the reason it does not.
    pub fn applicable(&self, entry: &CatalogEntry) -> Result<(), String> {
        let n = entry.n();
        if n < self.min_n || n > self.max_n {
            return Err(format!("needs dimension {}..={}, entry has {n}", self.min_n, self.max_n));
        }
        if self.needs_flow && entry.flow.is_none() {
            return Err("entry has no reduced flow".into());
        }
        if !(self.applies)(entry) {
            return Err("metric class not covered".into());
        }
        Ok(())
    }
}

fn any(_: &CatalogEntry) -> bool {
    true
}

/// Families on which the eigenvalue relation is asserted: `W ≡ 0` is kept
/// along their Ricci flow.
const EIGEN_FAMILIES: [&str; 7] = [
    "euclidean",
    "sphere",
    "hyperbolic",
    "cylinder_RxS",
    "lcf_example",
    "bryant_profile",
    "gaussian_soliton",
];

fn eigen_family(e: &CatalogEntry) -> bool {
    e.is_lcf() && EIGEN_FAMILIES.contains(&e.family.as_str())
}

fn has_potential(e: &CatalogEntry) -> bool {
    e.potential.is_some()
}

fn is_lcf_example(e: &CatalogEntry) -> bool {
    e.family == "lcf_example"
}

fn weyl_vanishes(e: &CatalogEntry) -> bool {
    e.has_fact(|f| *f == KnownFact::WeylVanishes)
}

fn has_numeric_facts(e: &CatalogEntry) -> bool {
    e.has_fact(|f| {
        matches!(
            f,
            KnownFact::ScalarCurvature(_) | KnownFact::SectionalCurvature(_) | KnownFact::RicciEigenvalues(_) | KnownFact::WeylNonzero(_)
        )
    })
}

fn dichotomy_applies(e: &CatalogEntry) -> bool {
    eigen_family(e) || e.has_fact(|f| *f == KnownFact::SplitEigenstructure)
}

#[allow(clippy::too_many_arguments)]
const fn point(
    id: &'static str,
    description: &'static str,
    reference: &'static str,
    min_n: usize,
    max_n: usize,
    tolerance: f64,
    applies: fn(&CatalogEntry) -> bool,
    eval: PointEval,
) -> CheckDef {
    CheckDef {
        id,
        description,
        reference,
        min_n,
        max_n,
        needs_flow: false,
        tolerance,
        applies,
        eval: Evaluator::Point(eval),
    }
}

const fn flow(id: &'static str, description: &'static str, min_n: usize, kind: FlowKind) -> CheckDef {
    CheckDef {
        id,
        description,
        reference: "evolution",
        min_n,
        max_n: usize::MAX,
        needs_flow: true,
        tolerance: 1e-3,
        applies: any,
        eval: Evaluator::Flow(kind),
    }
}

const MAX_N: usize = usize::MAX;

/// Every check, in the order they are numbered in the documentation.
pub static REGISTRY: [CheckDef; 28] = [
    point(
        "weyl_traces",
        "all metric traces of W vanish",
        "decomposition",
        3,
        MAX_N,
        1e-10,
        any,
        ev_weyl_traces,
    ),
    point(
        "weyl_dim3",
        "W vanishes identically in dimension 3",
        "decomposition",
        3,
        3,
        1e-10,
        any,
        ev_weyl_zero,
    ),
    point(
        "product_AA",
        "A⋆A and its interchange sum",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_product_aa,
    ),
    point(
        "product_BB",
        "B⋆B and its interchange sum",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_product_bb,
    ),
    point(
        "product_AB_BA",
        "A⋆B, B⋆A and the interchange sum of both",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_product_ab,
    ),
    point(
        "product_WA_AW",
        "W⋆A, A⋆W and the vanishing interchange sum",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_product_wa,
    ),
    point(
        "product_WB_BW",
        "W⋆B, B⋆W and the interchange sum of both",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_product_wb,
    ),
    point(
        "ccc_sum",
        "interchange sum of C through D, Ric and R",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_ccc,
    ),
    point(
        "ricci_term_expansion",
        "Ricci contraction terms of Riem through W",
        "quadratic-products",
        3,
        MAX_N,
        1e-8,
        any,
        ev_ricci_terms,
    ),
    flow("weyl_evolution", "(∂ₜ − Δ)W along the flow", 4, FlowKind::Weyl),
    flow("scalar_evolution", "∂ₜR = ΔR + 2|Ric|²", 3, FlowKind::Scalar),
    flow("ricci_evolution", "∂ₜRic = ΔRic + 2R^{kl}R_kilj − 2Ric²", 3, FlowKind::Ricci),
    flow("riemann_evolution", "∂ₜRiem = ΔRiem + 2Q(C) − Ricci terms", 3, FlowKind::Riemann),
    point(
        "eigen_quadratic",
        "eigenvalue quadratic for every eigenvalue pair",
        "eigenvalues",
        4,
        MAX_N,
        1e-8,
        eigen_family,
        ev_eigen_quadratic,
    ),
    point(
        "dim3_void",
        "the eigenvalue quadratic vanishes identically in dimension 3",
        "eigenvalues",
        3,
        3,
        1e-10,
        any,
        ev_dim3_void,
    ),
    point(
        "div_weyl_codazzi",
        "divergence of W against the curl of the Schouten tensor",
        "codazzi",
        4,
        MAX_N,
        1e-6,
        any,
        ev_div_weyl,
    ),
    point(
        "lcf_example_ricci",
        "closed-form Ricci of the conformal example",
        "conformal-example",
        3,
        MAX_N,
        1e-8,
        is_lcf_example,
        ev_lcf_ricci,
    ),
    point(
        "lcf_example_sigma1",
        "g^nn R_nn = −2(n−1)(A−2) on the conformal example",
        "conformal-example",
        3,
        MAX_N,
        1e-8,
        is_lcf_example,
        ev_lcf_sigma1,
    ),
    point(
        "warped_ricci",
        "closed-form Ricci of dt² + h² σ^K",
        "warped-product",
        3,
        MAX_N,
        1e-8,
        |e| e.warp.is_some(),
        ev_warped,
    ),
    point(
        "grad_soliton_divergence",
        "∂ᵢR = 2 Rᵢₗ∇ˡf",
        "gradient-soliton",
        3,
        MAX_N,
        1e-8,
        has_potential,
        ev_grad_div,
    ),
    point(
        "radial_weyl_zero",
        "radial curvature relation where W vanishes",
        "gradient-soliton",
        3,
        MAX_N,
        1e-8,
        has_potential,
        ev_radial,
    ),
    point(
        "rpq_ApB_traces",
        "R^{pq} contractions of A, B and Riem",
        "traces",
        3,
        MAX_N,
        1e-8,
        any,
        ev_rpq_traces,
    ),
    point(
        "soliton_equation",
        "Ric + Hess f − (α/n) g = 0",
        "soliton",
        3,
        MAX_N,
        1e-10,
        has_potential,
        ev_soliton,
    ),
    point(
        "weyl_vanishes",
        "W = 0 where the family is conformally flat",
        "decomposition",
        4,
        MAX_N,
        1e-10,
        weyl_vanishes,
        ev_weyl_zero,
    ),
    point(
        "eigen_dichotomy",
        "Ricci is proportional to g or has an eigenvalue of multiplicity n−1",
        "eigenvalues",
        4,
        MAX_N,
        0.5,
        dichotomy_applies,
        ev_dichotomy,
    ),
    point("bianchi2", "second Bianchi identity", "bianchi", 3, MAX_N, 1e-8, any, ev_bianchi2),
    point("schur", "2 div Ric = dR", "bianchi", 3, MAX_N, 1e-8, any, ev_schur),
    point(
        "known_facts",
        "closed-form curvature values of the entry",
        "facts",
        2,
        MAX_N,
        1e-9,
        has_numeric_facts,
        ev_known_facts,
    ),
];

pub fn check_def(id: &str) -> Option<&'static CheckDef> {
    REGISTRY.iter().find(|d| d.id == id)
}

/// Residual and size of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    residual: f64,
    magnitude: f64,
}

impl Sample {
    fn worst(self, other: Sample) -> Sample {
        Sample {
            residual: self.residual.max(other.residual),
            magnitude: self.magnitude.max(other.magnitude),
        }
    }
}

fn compare(lhs: &Tensor, rhs: &Tensor, floor: f64) -> Sample {
    let magnitude = lhs.max_abs().max(rhs.max_abs());
    Sample {
        residual: lhs.sub(rhs).max_abs() / magnitude.max(floor).max(RESIDUAL_FLOOR),
        magnitude,
    }
}

fn compare_scalar(lhs: f64, rhs: f64, floor: f64) -> Sample {
    compare(&Tensor::scalar(lhs), &Tensor::scalar(rhs), floor)
}

/// `g`-orthonormal frame `E = L^{-T}` from `g = L Lᵀ`.
#[derive(Debug, Clone)]
struct Frame {
    e: DMatrix<f64>,
}

impl Frame {
    fn new(metric: &Tensor) -> Result<Frame, GeometryError> {
        let n = metric.dim();
        let chol = metric
            .to_matrix()
            .cholesky()
            .ok_or(GeometryError::NotPositiveDefinite { point: Vec::new() })?;
        let l_inv = chol
            .l()
            .try_inverse()
            .ok_or(GeometryError::NotPositiveDefinite { point: Vec::new() })?;
        debug_assert_eq!(l_inv.nrows(), n);
        Ok(Frame { e: l_inv.transpose() })
    }

    /// Frame components of a covariant tensor.
    fn apply(&self, t: &Tensor) -> Tensor {
        debug_assert!(t.valence().iter().all(|v| *v == Variance::Down));
        let n = t.dim();
        let mut cur = t.clone();
        for slot in 0..t.rank() {
            let prev = cur;
            cur = Tensor::from_fn(n, prev.valence().to_vec(), |idx| {
                let mut j = idx.to_vec();
                let mut acc = 0.0;
                for i in 0..n {
                    j[slot] = i;
                    acc += prev.get(&j) * self.e[(i, idx[slot])];
                }
                acc
            });
        }
        cur
    }
}

/// Frame components of the curvature quantities at a point.
#[derive(Debug, Clone)]
struct Ortho {
    n: usize,
    riem: Tensor,
    ric: Tensor,
    ric2: Tensor,
    scal: f64,
    nr2: f64,
    weyl: Tensor,
    c: Tensor,
    d: Tensor,
    /// Size of the chart terms `∂Γ` and `ΓΓ` that cancel into `Riem`.
    cancellation: f64,
}

/// Curvature scales are never taken below this fraction of the
/// cancellation scale, so flat metrics in curved charts compare roundoff
/// against the chart rather than against itself.
pub const CANCELLATION_FRACTION: f64 = 1e-4;

fn cancellation_scale(geo: &LocalGeometry) -> f64 {
    let gamma = geo.christoffel();
    let n = geo.n();
    let mut value = 0.0f64;
    let mut deriv = 0.0f64;
    for c in gamma.data() {
        value = value.max(c.value().abs());
        for a in 0..n {
            deriv = deriv.max(c.derivative(&[a]).unwrap_or(0.0).abs());
        }
    }
    deriv + value * value
}

impl Ortho {
    fn new(pack: &CurvaturePack, frame: &Frame, cancellation: f64) -> Ortho {
        let n = pack.n();
        let ric = frame.apply(&pack.ric);
        let ric2 = Tensor::covariant(n, 2, |x| (0..n).map(|p| ric[[x[0], p]] * ric[[p, x[1]]]).sum());
        Ortho {
            n,
            riem: frame.apply(&pack.riem),
            ric,
            ric2,
            scal: pack.scalar,
            nr2: pack.ric_norm2,
            weyl: frame.apply(&pack.weyl),
            c: frame.apply(&pack.c_tensor),
            d: frame.apply(&pack.d_tensor),
            cancellation,
        }
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Curvature scale `max |Riem|`, floored by the cancellation scale.
    fn curv(&self) -> f64 {
        self.riem.max_abs().max(CANCELLATION_FRACTION * self.cancellation)
    }

    fn t4(&self, f: impl Fn(usize, usize, usize, usize) -> f64) -> Tensor {
        Tensor::covariant(self.n, 4, |x| f(x[0], x[1], x[2], x[3]))
    }

    fn t2(&self, f: impl Fn(usize, usize) -> f64) -> Tensor {
        Tensor::covariant(self.n, 2, |x| f(x[0], x[1]))
    }

    /// `δ_ik δ_jl − δ_il δ_jk`
    fn gg(&self) -> Tensor {
        self.t4(|i, j, k, l| d(i, k) * d(j, l) - d(i, l) * d(j, k))
    }

    /// `h_ik δ_jl − h_il δ_jk + h_jl δ_ik − h_jk δ_il`
    fn hg(&self, h: &Tensor) -> Tensor {
        self.t4(|i, j, k, l| h[[i, k]] * d(j, l) - h[[i, l]] * d(j, k) + h[[j, l]] * d(i, k) - h[[j, k]] * d(i, l))
    }

    /// `R_ip T_pjkl + R_jp T_ipkl + R_kp T_ijpl + R_lp T_ijkp`
    fn ricci_terms(&self, t: &Tensor) -> Tensor {
        let r = &self.ric;
        let n = self.n;
        self.t4(|i, j, k, l| {
            (0..n)
                .map(|p| {
                    r[[i, p]] * t[[p, j, k, l]] + r[[j, p]] * t[[i, p, k, l]] + r[[k, p]] * t[[i, j, p, l]] + r[[l, p]] * t[[i, j, k, p]]
                })
                .sum()
        })
    }

    /// `−(W⋆B + B⋆W)` after the interchange sum, written through `W` and `Ric`.
    fn qwb(&self) -> Tensor {
        let (w, r, n) = (&self.weyl, &self.ric, self.n);
        let c = 1.0 / (self.nf() - 2.0);
        let contract = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
            let mut acc = 0.0;
            for p in 0..n {
                for q in 0..n {
                    acc += f(p, q) * r[[p, q]];
                }
            }
            acc
        };
        self.t4(|i, j, k, l| {
            c * (d(k, j) * contract(&|p, q| w[[p, i, l, q]]) + d(i, l) * contract(&|p, q| w[[q, k, j, p]])
                - d(j, l) * contract(&|p, q| w[[p, i, k, q]])
                - d(i, k) * contract(&|p, q| w[[q, l, j, p]]))
        })
    }

    /// `Ric²_ik δ_jl − Ric²_il δ_jk + Ric²_jl δ_ik − Ric²_jk δ_il`
    fn ric2_g(&self) -> Tensor {
        self.hg(&self.ric2)
    }

    /// `R_ik R_jl − R_jk R_il`
    fn ric_ric(&self) -> Tensor {
        let r = &self.ric;
        self.t4(|i, j, k, l| r[[i, k]] * r[[j, l]] - r[[j, k]] * r[[i, l]])
    }
}

fn d(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Everything the point checks share at one sample point.
pub struct PointData {
    point: Vec<f64>,
    geo: LocalGeometry,
    pack: CurvaturePack,
    frame: Frame,
    ortho: Ortho,
}

impl PointData {
    pub fn new(entry: &CatalogEntry, p: &[f64]) -> Result<PointData, CheckError> {
        let geo = LocalGeometry::new(&entry.chart, p, 3)?;
        let pack = geo.pack()?;
        let frame = Frame::new(&pack.metric)?;
        let ortho = Ortho::new(&pack, &frame, cancellation_scale(&geo));
        Ok(PointData {
            point: p.to_vec(),
            geo,
            pack,
            frame,
            ortho,
        })
    }

    /// Chart `X⋆Y` in frame components.
    fn star_frame(&self, x: &Tensor, y: &Tensor) -> Tensor {
        self.frame.apply(&star(x, y, &self.pack.inverse))
    }
}

fn ok(s: Sample) -> Result<Option<Sample>, CheckError> {
    Ok(Some(s))
}

fn ev_weyl_traces(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let w = &o.weyl;
    let n = o.n;
    let mut worst = 0.0f64;
    for (a, b) in [(0, 2), (0, 3), (1, 2), (1, 3), (0, 1), (2, 3)] {
        for x in crate::tensor::multi_indices(n, 2) {
            let mut acc = 0.0;
            for m in 0..n {
                let mut idx = [0usize; 4];
                idx[a] = m;
                idx[b] = m;
                let mut rest = x.iter();
                for (s, v) in idx.iter_mut().enumerate() {
                    if s != a && s != b {
                        *v = *rest.next().expect("two free slots");
                    }
                }
                acc += w[idx];
            }
            worst = worst.max(acc.abs());
        }
    }
    ok(Sample {
        residual: worst / w.max_abs().max(o.curv()).max(RESIDUAL_FLOOR),
        magnitude: w.max_abs(),
    })
}

fn ev_weyl_zero(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let w = o.weyl.max_abs();
    ok(Sample {
        residual: w / o.curv().max(RESIDUAL_FLOOR),
        magnitude: w,
    })
}

fn ev_product_aa(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let (n, s) = (o.nf(), o.scal);
    let floor = o.curv().powi(2);
    let lhs = pd.star_frame(&pd.pack.a_tensor, &pd.pack.a_tensor);
    let c = s * s / ((n - 1.0).powi(2) * (n - 2.0).powi(2));
    let rhs = o.t4(|i, j, k, l| c * (d(i, k) * d(j, l) + (n - 2.0) * d(i, j) * d(l, k)));
    let qrhs = o.gg().scale(s * s / ((n - 1.0) * (n - 2.0).powi(2)));
    ok(compare(&lhs, &rhs, floor).worst(compare(&interchange_sum(&lhs), &qrhs, floor)))
}

fn ev_product_bb(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let (n, s, nr2) = (o.nf(), o.scal, o.nr2);
    let (r, r2) = (&o.ric, &o.ric2);
    let floor = o.curv().powi(2);
    let lhs = pd.star_frame(&pd.pack.b_tensor, &pd.pack.b_tensor);
    let c = 1.0 / (n - 2.0).powi(2);
    let rhs = o.t4(|i, j, k, l| {
        c * (2.0 * r[[i, k]] * r[[l, j]] + (n - 4.0) * r[[i, j]] * r[[l, k]] + r2[[j, l]] * d(i, k) + r2[[k, i]] * d(l, j)
            - 2.0 * r2[[j, i]] * d(l, k)
            - 2.0 * r2[[l, k]] * d(i, j)
            + s * r[[i, j]] * d(l, k)
            + s * r[[l, k]] * d(i, j)
            + nr2 * d(i, j) * d(l, k))
    });
    let qrhs = o.t4(|i, j, k, l| {
        c * ((n - 2.0) * (r[[i, k]] * r[[l, j]] - r[[i, l]] * r[[j, k]]) - r2[[j, l]] * d(i, k) - r2[[k, i]] * d(l, j)
            + r2[[l, i]] * d(j, k)
            + r2[[k, j]] * d(i, l)
            + s * (r[[i, k]] * d(l, j) + r[[l, j]] * d(i, k) - r[[i, l]] * d(j, k) - r[[j, k]] * d(i, l))
            + nr2 * (d(i, k) * d(l, j) - d(i, l) * d(j, k)))
    });
    ok(compare(&lhs, &rhs, floor).worst(compare(&interchange_sum(&lhs), &qrhs, floor)))
}

fn ev_product_ab(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let (n, s) = (o.nf(), o.scal);
    let r = &o.ric;
    let floor = o.curv().powi(2);
    let ab = pd.star_frame(&pd.pack.a_tensor, &pd.pack.b_tensor);
    let ba = pd.star_frame(&pd.pack.b_tensor, &pd.pack.a_tensor);
    let c = -s / ((n - 1.0) * (n - 2.0).powi(2));
    let ab_rhs = o.t4(|i, j, k, l| {
        c * (r[[i, k]] * d(l, j) + r[[l, j]] * d(i, k) - r[[i, j]] * d(l, k) + (n - 3.0) * r[[l, k]] * d(i, j) + s * d(i, j) * d(l, k))
    });
    let ba_rhs = o.t4(|i, j, k, l| {
        c * (r[[l, j]] * d(i, k) + r[[i, k]] * d(l, j) - r[[l, k]] * d(i, j) + (n - 3.0) * r[[i, j]] * d(l, k) + s * d(i, j) * d(l, k))
    });
    let q = interchange_sum(&ab.add(&ba));
    let q_rhs = o
        .hg(r)
        .scale(-s / ((n - 1.0) * (n - 2.0)))
        .sub(&o.gg().scale(2.0 * s * s / ((n - 1.0) * (n - 2.0).powi(2))));
    ok(compare(&ab, &ab_rhs, floor)
        .worst(compare(&ba, &ba_rhs, floor))
        .worst(compare(&q, &q_rhs, floor)))
}

fn ev_product_wa(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let n = o.nf();
    let w = &o.weyl;
    let floor = o.curv().powi(2);
    let wa = pd.star_frame(&pd.pack.weyl, &pd.pack.a_tensor);
    let aw = pd.star_frame(&pd.pack.a_tensor, &pd.pack.weyl);
    let c = o.scal / ((n - 1.0) * (n - 2.0));
    let wa_rhs = o.t4(|i, j, k, l| c * w[[l, i, j, k]]);
    let aw_rhs = o.t4(|i, j, k, l| c * w[[i, l, k, j]]);
    let zero = Tensor::zeros(o.n, vec![Variance::Down; 4]);
    ok(compare(&wa, &wa_rhs, floor)
        .worst(compare(&aw, &aw_rhs, floor))
        .worst(compare(&interchange_sum(&wa.add(&aw)), &zero, floor)))
}

fn ev_product_wb(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let nn = o.n;
    let (w, r) = (&o.weyl, &o.ric);
    let floor = o.curv().powi(2);
    let wb = pd.star_frame(&pd.pack.weyl, &pd.pack.b_tensor);
    let bw = pd.star_frame(&pd.pack.b_tensor, &pd.pack.weyl);
    let c = -1.0 / (o.nf() - 2.0);
    let wr = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for p in 0..nn {
            for q in 0..nn {
                acc += f(p, q) * r[[p, q]];
            }
        }
        acc
    };
    let wb_rhs = o.t4(|i, j, k, l| {
        let lin: f64 = (0..nn).map(|p| w[[l, i, j, p]] * r[[p, k]] + w[[p, i, j, k]] * r[[l, p]]).sum();
        c * (lin - d(l, k) * wr(&|p, q| w[[p, i, j, q]]))
    });
    let bw_rhs = o.t4(|i, j, k, l| {
        let lin: f64 = (0..nn).map(|p| w[[i, l, k, p]] * r[[p, j]] + w[[p, l, k, j]] * r[[p, i]]).sum();
        c * (lin - d(i, j) * wr(&|p, q| w[[q, l, k, p]]))
    });
    let q = interchange_sum(&wb.add(&bw)).scale(-1.0);
    ok(compare(&wb, &wb_rhs, floor)
        .worst(compare(&bw, &bw_rhs, floor))
        .worst(compare(&q, &o.qwb(), floor)))
}

fn ev_ccc(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let (n, s, nr2) = (o.nf(), o.scal, o.nr2);
    let (r, r2) = (&o.ric, &o.ric2);
    let floor = o.curv().powi(2);
    let lhs = interchange_sum(&pd.frame.apply(&pd.pack.c_tensor)).scale(2.0);
    let gg = o.gg();
    let rr = o.t4(|i, j, k, l| r[[i, k]] * r[[l, j]] - r[[i, l]] * r[[j, k]]);
    let r2g = o.t4(|i, j, k, l| r2[[j, l]] * d(i, k) + r2[[k, i]] * d(l, j) - r2[[l, i]] * d(j, k) - r2[[k, j]] * d(i, l));
    let hg = o.hg(r);
    let mut rhs = interchange_sum(&o.d).scale(2.0);
    rhs.axpy((2.0 * (n - 1.0) * nr2 - 2.0 * s * s) / ((n - 1.0) * (n - 2.0).powi(2)), &gg);
    rhs.axpy(2.0 / (n - 2.0), &rr);
    rhs.axpy(-2.0 / (n - 2.0).powi(2), &r2g);
    rhs.axpy(2.0 * s / ((n - 1.0) * (n - 2.0).powi(2)), &hg);
    rhs.axpy(2.0, &o.qwb());
    ok(compare(&lhs, &rhs, floor))
}

fn ev_ricci_terms(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let (n, s) = (o.nf(), o.scal);
    let floor = o.curv().powi(2);
    // left side contracted in the chart: g^{pq} R_ip Riem_qjkl + ...
    let pack = &pd.pack;
    let nn = o.n;
    let mixed = Tensor::from_fn(nn, vec![Variance::Down, Variance::Up], |x| {
        (0..nn).map(|p| pack.ric[[x[0], p]] * pack.inverse[[p, x[1]]]).sum::<f64>()
    });
    let riem = &pack.riem;
    let chart_lhs = Tensor::covariant(nn, 4, |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        (0..nn)
            .map(|q| {
                mixed[[i, q]] * riem[[q, j, k, l]]
                    + mixed[[j, q]] * riem[[i, q, k, l]]
                    + mixed[[k, q]] * riem[[i, j, q, l]]
                    + mixed[[l, q]] * riem[[i, j, k, q]]
            })
            .sum()
    });
    let lhs = pd.frame.apply(&chart_lhs);
    let mut rhs = o.ricci_terms(&o.weyl);
    rhs.axpy(2.0 / (n - 2.0), &o.ric2_g());
    rhs.axpy(4.0 / (n - 2.0), &o.ric_ric());
    rhs.axpy(-2.0 * s / ((n - 1.0) * (n - 2.0)), &o.hg(&o.ric));
    ok(compare(&lhs, &rhs, floor))
}

/// `g^{pa} g^{qb} R_ab X_piqk` in the chart.
fn ric_trace(pack: &CurvaturePack, x: &Tensor) -> Tensor {
    let n = pack.n();
    let up = Tensor::from_fn(n, vec![Variance::Up, Variance::Up], |y| {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += pack.inverse[[y[0], a]] * pack.ric[[a, b]] * pack.inverse[[b, y[1]]];
            }
        }
        acc
    });
    Tensor::covariant(n, 2, |y| {
        let mut acc = 0.0;
        for p in 0..n {
            for q in 0..n {
                acc += up[[p, q]] * x[[p, y[0], q, y[1]]];
            }
        }
        acc
    })
}

fn ev_rpq_traces(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let (n, s, nr2) = (o.nf(), o.scal, o.nr2);
    let (r, r2) = (&o.ric, &o.ric2);
    let floor = o.curv().powi(2);
    let pack = &pd.pack;
    let ta = pd.frame.apply(&ric_trace(pack, &pack.a_tensor));
    let tb = pd.frame.apply(&ric_trace(pack, &pack.b_tensor));
    let tr = pd.frame.apply(&ric_trace(pack, &pack.riem));
    let c = s / ((n - 1.0) * (n - 2.0));
    let ta_rhs = o.t2(|i, k| c * (s * d(i, k) - r[[i, k]]));
    let tb_rhs = o.t2(|i, k| -(nr2 * d(i, k) + s * r[[i, k]] - 2.0 * r2[[i, k]]) / (n - 2.0));
    let w = &o.weyl;
    let nn = o.n;
    let tr_rhs = o.t2(|i, k| {
        let mut rw = 0.0;
        for p in 0..nn {
            for q in 0..nn {
                rw += r[[p, q]] * w[[p, i, q, k]];
            }
        }
        rw + (nr2 * d(i, k) - 2.0 * r2[[i, k]]) / (n - 2.0) + c * (n * r[[i, k]] - s * d(i, k))
    });
    ok(compare(&ta, &ta_rhs, floor)
        .worst(compare(&tb, &tb_rhs, floor))
        .worst(compare(&tr, &tr_rhs, floor)))
}

fn ev_eigen_quadratic(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let es = classify_eigenstructure(&pd.pack);
    let (n, s, nr2) = (pd.pack.n(), pd.pack.scalar, pd.pack.ric_norm2);
    let scale = (s * s).max(nr2).max(pd.ortho.curv().powi(2)).max(RESIDUAL_FLOOR);
    let mut worst = 0.0f64;
    let mut magnitude = 0.0f64;
    for (a, ca) in es.clusters.iter().enumerate() {
        for (b, cb) in es.clusters.iter().enumerate() {
            if a == b && ca.multiplicity < 2 {
                continue;
            }
            let q = eigen_quadratic(n, ca.value, cb.value, s, nr2);
            worst = worst.max(q.abs());
            magnitude = magnitude.max(ca.value.abs()).max(cb.value.abs());
        }
    }
    ok(Sample {
        residual: worst / scale,
        magnitude,
    })
}

fn ev_dim3_void(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let es = classify_eigenstructure(&pd.pack);
    let (s, nr2) = (pd.pack.scalar, pd.pack.ric_norm2);
    let ev = &es.eigenvalues;
    let scale = (s * s).max(nr2).max(pd.ortho.curv().powi(2)).max(RESIDUAL_FLOOR);
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            let l = 3 - i - j;
            let q = eigen_quadratic(3, ev[i], ev[j], s, nr2);
            let reduced = -2.0 * ev[l] * (ev[i] + ev[j]) - 2.0 * ev[i] * ev[j] + s * s - nr2;
            worst = worst.max(q.abs()).max((q - reduced).abs());
        }
    }
    ok(Sample {
        residual: worst / scale,
        magnitude: s.abs().max(nr2.sqrt()),
    })
}

fn ev_div_weyl(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let lhs = weyl_divergence(&pd.geo)?;
    let rhs = schouten_curl(&pd.geo)?;
    ok(compare(&lhs, &rhs, pd.ortho.curv()))
}

fn ev_lcf_ricci(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let n = pd.pack.n();
    let x = &pd.point;
    let a = 1.0 + x[..n - 1].iter().map(|v| v * v).sum::<f64>();
    // L = log A depends on x_1..x_{n-1} only
    let dl = |i: usize| if i < n - 1 { 2.0 * x[i] / a } else { 0.0 };
    let ddl = |i: usize, j: usize| {
        if i < n - 1 && j < n - 1 {
            2.0 * d(i, j) / a - 4.0 * x[i] * x[j] / (a * a)
        } else {
            0.0
        }
    };
    let lap: f64 = (0..n).map(|i| ddl(i, i)).sum();
    let grad2: f64 = (0..n).map(|i| dl(i) * dl(i)).sum();
    let m = n as f64 - 2.0;
    let closed = Tensor::covariant(n, 2, |y| {
        let (i, j) = (y[0], y[1]);
        m * (ddl(i, j) + dl(i) * dl(j)) + (lap - m * grad2) * d(i, j)
    });
    ok(compare(&pd.pack.ric, &closed, pd.ortho.curv()))
}

fn ev_lcf_sigma1(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let n = pd.pack.n();
    let a = 1.0 + pd.point[..n - 1].iter().map(|v| v * v).sum::<f64>();
    let sigma = pd.pack.inverse[[n - 1, n - 1]] * pd.pack.ric[[n - 1, n - 1]];
    let closed = -2.0 * (n as f64 - 1.0) * (a - 2.0);
    ok(compare_scalar(sigma, closed, RESIDUAL_FLOOR))
}

fn ev_warped(pd: &PointData, entry: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let warp = entry.warp.as_ref().expect("applicability checked");
    let h = pd.geo.scalar_field(&warp.h)?;
    let hs = [h.value(), h.derivative(&[0]).unwrap_or(0.0), h.derivative(&[0, 0]).unwrap_or(0.0)];
    let closed = warped_ricci(entry.n(), warp.k, &hs, &pd.point[1..])?;
    ok(compare(&pd.pack.ric, &closed, pd.ortho.curv()))
}

fn soliton_data(entry: &CatalogEntry) -> SolitonData {
    let pot = entry.potential.as_ref().expect("applicability checked");
    SolitonData::gradient(entry.chart.clone(), pot.f.clone(), pot.alpha)
}

fn ev_grad_div(pd: &PointData, entry: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let r = gradient_identity_residuals(&soliton_data(entry), &pd.point)?;
    ok(Sample {
        residual: r.div_res,
        magnitude: pd.ortho.curv(),
    })
}

fn ev_radial(pd: &PointData, entry: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let r = gradient_identity_residuals(&soliton_data(entry), &pd.point)?;
    Ok(r.radial_res.map(|residual| Sample {
        residual,
        magnitude: pd.ortho.curv(),
    }))
}

fn ev_soliton(pd: &PointData, entry: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let data = soliton_data(entry);
    let res = crate::soliton::soliton_residual(&data, &pd.point)?;
    let scale = pd
        .pack
        .ric
        .max_abs()
        .max((data.alpha / entry.n() as f64).abs() * pd.pack.metric.max_abs());
    ok(Sample {
        residual: res.max_abs() / scale.max(RESIDUAL_FLOOR),
        magnitude: scale,
    })
}

fn ev_dichotomy(pd: &PointData, entry: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let es = classify_eigenstructure(&pd.pack);
    let n = entry.n();
    let split = es.pattern == EigenPattern::Split { major: n - 1, minor: 1 };
    let good = if entry.has_fact(|f| *f == KnownFact::SplitEigenstructure) {
        split
    } else {
        split || es.pattern == EigenPattern::Proportional
    };
    ok(Sample {
        residual: if good { 0.0 } else { 1.0 },
        magnitude: 1.0,
    })
}

fn ev_bianchi2(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let dr = pd.geo.nabla(pd.geo.riemann())?.value();
    let n = pd.pack.n();
    let cyc = Tensor::covariant(n, 5, |x| {
        let (a, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
        dr[[a, i, j, k, l]] + dr[[i, j, a, k, l]] + dr[[j, a, i, k, l]]
    });
    let zero = Tensor::zeros(n, vec![Variance::Down; 5]);
    let mut s = compare(&cyc, &zero, dr.max_abs().max(pd.ortho.curv()));
    s.magnitude = dr.max_abs();
    ok(s)
}

fn ev_schur(pd: &PointData, _: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let n = pd.pack.n();
    let dric = pd.geo.nabla(&pd.geo.ricci())?.value();
    let scal = pd.geo.scalar_curvature();
    let ginv = &pd.pack.inverse;
    let div = Tensor::covariant(n, 1, |x| {
        let mut acc = 0.0;
        for a in 0..n {
            for i in 0..n {
                acc += 2.0 * ginv[[a, i]] * dric[[a, i, x[0]]];
            }
        }
        acc
    });
    let dr = Tensor::covariant(n, 1, |x| scal.derivative(&[x[0]]).expect("order >= 1"));
    ok(compare(&div, &dr, dric.max_abs().max(pd.ortho.curv())))
}

fn ev_known_facts(pd: &PointData, entry: &CatalogEntry) -> Result<Option<Sample>, CheckError> {
    let o = &pd.ortho;
    let mut out = Sample {
        residual: 0.0,
        magnitude: o.curv(),
    };
    for fact in &entry.facts {
        let s = match fact {
            KnownFact::ScalarCurvature(v) => compare_scalar(o.scal, *v, o.curv()),
            KnownFact::SectionalCurvature(k) => {
                let expected = o.gg().scale(*k);
                compare(&o.riem, &expected, RESIDUAL_FLOOR)
            }
            KnownFact::RicciEigenvalues(ev) => {
                let es = classify_eigenstructure(&pd.pack);
                let scale = ev.iter().fold(o.curv(), |m, v| m.max(v.abs())).max(RESIDUAL_FLOOR);
                let diff = es.eigenvalues.iter().zip(ev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                Sample {
                    residual: if es.eigenvalues.len() == ev.len() {
                        diff / scale
                    } else {
                        f64::INFINITY
                    },
                    magnitude: scale,
                }
            }
            KnownFact::WeylNonzero(threshold) => {
                let ratio = o.weyl.max_abs() / o.curv().max(RESIDUAL_FLOOR);
                Sample {
                    residual: (threshold - ratio).max(0.0),
                    magnitude: ratio,
                }
            }
            _ => continue,
        };
        out = out.worst(s);
    }
    ok(out)
}

/// Integrates the reduced flow of `family` far enough for the flow checks.
pub fn flow_context(family: &FlowFamily) -> Result<FlowTrajectory, FlowError> {
    integrate_flow(family, &family.initial_state(), FLOW_STEP, FLOW_STEPS)
}

fn scalar_at(n: usize, v: f64) -> Tensor {
    Tensor::from_vec(n, Vec::new(), vec![v]).expect("rank 0 holds one value")
}

/// Chart tensor tracked by a flow check, as a function of the state.
fn flow_field(kind: FlowKind, pack: &CurvaturePack) -> Tensor {
    match kind {
        FlowKind::Scalar => scalar_at(pack.n(), pack.scalar),
        FlowKind::Ricci => pack.ric.clone(),
        FlowKind::Riemann => pack.riem.clone(),
        FlowKind::Weyl => pack.weyl.clone(),
    }
}

/// Reaction terms of the evolution equation, in the frame.
fn reaction(kind: FlowKind, o: &Ortho) -> Tensor {
    let (n, s, nr2) = (o.nf(), o.scal, o.nr2);
    match kind {
        FlowKind::Scalar => scalar_at(o.n, 2.0 * nr2),
        FlowKind::Ricci => {
            let (r, rm, nn) = (&o.ric, &o.riem, o.n);
            o.t2(|i, j| {
                let mut acc = 0.0;
                for k in 0..nn {
                    for l in 0..nn {
                        acc += r[[k, l]] * rm[[k, i, l, j]];
                    }
                }
                2.0 * acc - 2.0 * o.ric2[[i, j]]
            })
        }
        FlowKind::Riemann => interchange_sum(&o.c).scale(2.0).sub(&o.ricci_terms(&o.riem)),
        FlowKind::Weyl => {
            let mut rhs = interchange_sum(&o.d).scale(2.0).sub(&o.ricci_terms(&o.weyl));
            rhs.axpy(2.0 / (n - 2.0).powi(2), &o.ric2_g());
            rhs.axpy(-2.0 * s / (n - 2.0).powi(2), &o.hg(&o.ric));
            rhs.axpy(2.0 / (n - 2.0), &o.ric_ric());
            rhs.axpy(2.0 * (s * s - nr2) / ((n - 1.0) * (n - 2.0).powi(2)), &o.gg());
            rhs
        }
    }
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// `Σ_slots Σ_ab Ric_ab T_{..a..} T_{..b..}` in an orthonormal frame.
fn ricci_slots(ric: &Tensor, t: &Tensor) -> f64 {
    let n = t.dim();
    let mut acc = 0.0;
    for slot in 0..t.rank() {
        for x in crate::tensor::multi_indices(n, t.rank()) {
            let mut y = x.clone();
            for b in 0..n {
                y[slot] = b;
                acc += *t.get(&x) * ric[[x[slot], b]] * *t.get(&y);
            }
        }
    }
    acc
}

/// Residuals at steps `h` and `h/2` at one point. Tensor checks also
/// compare `∂ₜ|T|²`, which is nonlinear in the flow scales, so its
/// finite-difference error is a genuine `O(h²)` even where the components
/// of `T` are linear in `t`.
fn flow_point(kind: FlowKind, traj: &FlowTrajectory, p: &[f64]) -> Result<[Sample; 2], CheckError> {
    let family = &traj.family;
    let state = traj.state_at(FLOW_TIME)?;
    let chart = family.chart(&state)?;
    let geo = LocalGeometry::new(&chart, p, 4)?;
    let pack = geo.pack()?;
    let frame = Frame::new(&pack.metric)?;
    let o = Ortho::new(&pack, &frame, cancellation_scale(&geo));
    let jets = match kind {
        FlowKind::Scalar => Tensor::from_vec(o.n, Vec::new(), vec![geo.scalar_curvature()]).map_err(GeometryError::from)?,
        FlowKind::Ricci => geo.ricci(),
        FlowKind::Riemann => geo.riemann().clone(),
        FlowKind::Weyl => geo.weyl()?,
    };
    let lap = geo.laplacian(&jets)?.value();
    let rhs = reaction(kind, &o);
    let floor = o.curv().powi(2);
    // implied d/dt |T|² = 2⟨∂ₜT, T⟩ + 2 Σ_slots Ric·T·T, since ∂ₜg^{ab} = 2 Ric^{ab}
    let field = frame.apply(&flow_field(kind, &pack));
    let implied = frame.apply(&lap).add(&rhs);
    let probe = (field.rank() > 0).then(|| 2.0 * dot(&implied, &field) + 2.0 * ricci_slots(&o.ric, &field));
    let mut out = [Sample {
        residual: 0.0,
        magnitude: 0.0,
    }; 2];
    for (slot, h) in [FLOW_STEP, FLOW_STEP / 2.0].into_iter().enumerate() {
        let dt = fd_time_derivative(traj, |s| Ok(flow_field(kind, &family.pack(s, p)?)), FLOW_TIME, h)?;
        let lhs = frame.apply(&dt.sub(&lap));
        out[slot] = compare(&lhs, &rhs, floor);
        if let Some(probe) = probe {
            let norm = |s: &[f64]| -> Result<Tensor, FlowError> {
                let pk = family.pack(s, p)?;
                Ok(scalar_at(pk.n(), flow_field(kind, &pk).norm2(&pk.inverse)))
            };
            let d_norm = fd_time_derivative(traj, norm, FLOW_TIME, h)?.data()[0];
            out[slot] = out[slot].worst(compare_scalar(d_norm, probe, o.curv().powi(3)));
        }
    }
    Ok(out)
}

fn report(def: &CheckDef, entry: &CatalogEntry) -> CheckReport {
    CheckReport {
        check_id: def.id.to_string(),
        paper_ref: def.reference.to_string(),
        metric: entry.label(),
        n_points: 0,
        max_residual: None,
        tolerance: entry.tolerance(def.id, def.tolerance),
        pass: false,
        convergence: Vec::new(),
        order: None,
        magnitude: None,
        status: Status::Error,
        reason: None,
    }
}

fn error_report(def: &CheckDef, entry: &CatalogEntry, e: &CheckError) -> CheckReport {
    CheckReport {
        reason: Some(e.to_string()),
        ..report(def, entry)
    }
}

fn finish(mut r: CheckReport, samples: Vec<Sample>) -> CheckReport {
    r.n_points = samples.len();
    if samples.is_empty() {
        r.max_residual = Some(0.0);
        r.pass = true;
        r.status = Status::Inconclusive;
        r.reason = Some("no point evaluated".into());
        return r;
    }
    let worst = samples.iter().copied().reduce(Sample::worst).expect("nonempty");
    r.max_residual = Some(worst.residual);
    r.magnitude = Some(worst.magnitude);
    r.pass = worst.residual <= r.tolerance;
    r.status = if r.pass { Status::Pass } else { Status::Fail };
    r
}

fn run_point_check(def: &CheckDef, eval: PointEval, entry: &CatalogEntry, data: &[Result<PointData, String>]) -> CheckReport {
    let mut samples = Vec::with_capacity(data.len());
    for pd in data {
        let pd = match pd {
            Ok(pd) => pd,
            Err(e) => {
                return CheckReport {
                    reason: Some(e.clone()),
                    ..report(def, entry)
                }
            }
        };
        match eval(pd, entry) {
            Ok(Some(s)) => samples.push(s),
            Ok(None) => {}
            Err(e) => return error_report(def, entry, &e),
        }
    }
    finish(report(def, entry), samples)
}

fn run_flow_check(def: &CheckDef, kind: FlowKind, entry: &CatalogEntry, traj: &FlowTrajectory, points: &[Vec<f64>]) -> CheckReport {
    let results: Vec<Result<[Sample; 2], CheckError>> = points.par_iter().map(|p| flow_point(kind, traj, p)).collect();
    let mut pairs = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(pair) => pairs.push(pair),
            Err(e) => return error_report(def, entry, &e),
        }
    }
    let coarse: Vec<Sample> = pairs.iter().map(|p| p[0]).collect();
    let mut r = finish(report(def, entry), coarse);
    if pairs.is_empty() {
        return r;
    }
    let fine = pairs.iter().map(|p| p[1].residual).fold(0.0, f64::max);
    r.convergence = vec![
        ConvergencePoint {
            h: FLOW_STEP,
            residual: r.max_residual.unwrap_or(0.0),
        },
        ConvergencePoint {
            h: FLOW_STEP / 2.0,
            residual: fine,
        },
    ];
    r.order = pairs
        .iter()
        .filter(|p| p[0].residual > ROUNDOFF_BAND)
        .map(|p| (p[0].residual / p[1].residual).log2())
        .reduce(f64::min);
    if r.order.is_none() {
        r.reason = Some("finite-difference error below the roundoff band".into());
    }
    r
}

/// Runs one check on `entry` at `points`.
pub fn run_check(
    id: &str,
    entry: &CatalogEntry,
    points: &[Vec<f64>],
    flow_ctx: Option<&FlowTrajectory>,
) -> Result<CheckReport, CheckError> {
    let def = check_def(id).ok_or_else(|| CheckError::UnknownCheck(id.into()))?;
    def.applicable(entry).map_err(|reason| CheckError::Inapplicable {
        check: id.into(),
        metric: entry.label(),
        reason,
    })?;
    match (def.eval, flow_ctx) {
        (Evaluator::Flow(kind), Some(traj)) => Ok(run_flow_check(def, kind, entry, traj, points)),
        (Evaluator::Flow(_), None) => Err(CheckError::MissingFlow(id.into())),
        (Evaluator::Point(_), Some(_)) => Err(CheckError::UnexpectedFlow(id.into())),
        (Evaluator::Point(eval), None) => {
            let data = point_data(entry, points);
            Ok(run_point_check(def, eval, entry, &data))
        }
    }
}

fn point_data(entry: &CatalogEntry, points: &[Vec<f64>]) -> Vec<Result<PointData, String>> {
    points
        .par_iter()
        .map(|p| PointData::new(entry, p).map_err(|e| format!("at {p:?}: {e}")))
        .collect()
}

/// Every applicable check on every entry, sorted by check id then metric.
pub fn run_suite(entries: &[CatalogEntry], seed: u64, point_count: usize) -> Vec<CheckReport> {
    run_suite_filtered(entries, seed, point_count, |_| true)
}

/// [`run_suite`] restricted to the checks accepted by `keep`.
pub fn run_suite_filtered(
    entries: &[CatalogEntry],
    seed: u64,
    point_count: usize,
    keep: impl Fn(&CheckDef) -> bool + Sync,
) -> Vec<CheckReport> {
    let mut reports: Vec<CheckReport> = entries
        .par_iter()
        .flat_map_iter(|entry| run_entry(entry, seed, point_count, &keep))
        .collect();
    reports.sort_by(|a, b| (&a.check_id, &a.metric).cmp(&(&b.check_id, &b.metric)));
    reports
}

fn run_entry(entry: &CatalogEntry, seed: u64, point_count: usize, keep: &(impl Fn(&CheckDef) -> bool + Sync)) -> Vec<CheckReport> {
    let defs: Vec<&CheckDef> = REGISTRY.iter().filter(|d| keep(d) && d.applicable(entry).is_ok()).collect();
    if defs.is_empty() {
        return Vec::new();
    }
    let points = sample_points(entry, point_count, seed);
    let data = point_data(entry, &points);
    let traj = entry.flow.as_ref().map(|f| flow_context(f).map_err(CheckError::from));
    defs.par_iter()
        .map(|def| match (def.eval, &traj) {
            (Evaluator::Point(eval), _) => run_point_check(def, eval, entry, &data),
            (Evaluator::Flow(kind), Some(Ok(t))) => run_flow_check(def, kind, entry, t, &points),
            (Evaluator::Flow(_), Some(Err(e))) => error_report(def, entry, e),
            (Evaluator::Flow(_), None) => error_report(def, entry, &CheckError::MissingFlow(def.id.into())),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::from_selector;

    fn pts(entry: &CatalogEntry, k: usize) -> Vec<Vec<f64>> {
        sample_points(entry, k, 7)
    }

    fn run(id: &str, sel: &str, k: usize) -> CheckReport {
        let e = from_selector(sel).unwrap();
        let traj = check_def(id)
            .unwrap()
            .needs_flow
            .then(|| flow_context(e.flow.as_ref().unwrap()).unwrap());
        run_check(id, &e, &pts(&e, k), traj.as_ref()).unwrap()
    }

    #[test]
    fn registry_ids_are_unique() {
        let mut ids: Vec<&str> = REGISTRY.iter().map(|d| d.id).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), REGISTRY.len());
    }

    #[test]
    fn frame_is_orthonormal() {
        let e = from_selector("perturbed_flat:n=4").unwrap();
        let pack = crate::geometry::curvature_pack(&e.chart, &[0.3, -0.2, 0.1, 0.4]).unwrap();
        let f = Frame::new(&pack.metric).unwrap();
        let g = f.apply(&pack.metric);
        assert!(g.sub(&Tensor::identity(4)).max_abs() < 1e-14);
    }

    #[test]
    fn weyl_traces_on_sphere() {
        let r = run("weyl_traces", "sphere:n=4", 5);
        assert!(r.pass && r.max_residual.unwrap() < 1e-10, "{r:?}");
    }

    #[test]
    fn algebraic_products_on_perturbed_flat() {
        for id in [
            "product_AA",
            "product_BB",
            "product_AB_BA",
            "product_WA_AW",
            "product_WB_BW",
            "ccc_sum",
            "ricci_term_expansion",
            "rpq_ApB_traces",
        ] {
            let r = run(id, "perturbed_flat:n=4", 4);
            assert!(r.pass, "{r:?}");
            assert!(r.magnitude.unwrap() > 1e-4, "{id} vacuous: {r:?}");
        }
    }

    #[test]
    fn cylinder_eigen_quadratic_vanishes() {
        let r = run("eigen_quadratic", "cylinder_RxS:n=4", 3);
        assert!(r.max_residual.unwrap() < 1e-12, "{r:?}");
    }

    #[test]
    fn eigen_quadratic_is_not_generic() {
        let e = from_selector("perturbed_flat:n=4").unwrap();
        assert!(check_def("eigen_quadratic").unwrap().applicable(&e).is_err());
        let pd = PointData::new(&e, &[0.3, -0.2, 0.1, 0.4]).unwrap();
        let s = ev_eigen_quadratic(&pd, &e).unwrap().unwrap();
        assert!(s.residual > 1e-4, "{s:?}");
    }

    #[test]
    fn div_weyl_matches_schouten_curl() {
        let r = run("div_weyl_codazzi", "perturbed_flat:n=4", 4);
        assert!(r.pass && r.magnitude.unwrap() > 1e-3, "{r:?}");
    }

    #[test]
    fn conformal_example_closed_forms() {
        assert!(run("lcf_example_ricci", "lcf_example:n=4", 4).pass);
        assert!(run("lcf_example_sigma1", "lcf_example:n=5", 4).pass);
    }

    #[test]
    fn flow_checks_converge_on_unequal_product() {
        let r = run("weyl_evolution", "product_spheres:p=2,q=2,a=1,b=1.5", 2);
        assert!(r.pass, "{r:?}");
        assert!(r.order.unwrap() > 1.9, "{r:?}");
        let r = run("scalar_evolution", "sphere:n=4", 2);
        assert!(r.pass && r.order.unwrap() > 1.9, "{r:?}");
    }

    #[test]
    fn riemann_and_ricci_evolution_hold() {
        for id in ["riemann_evolution", "ricci_evolution"] {
            let r = run(id, "product_spheres:p=2,q=2,a=1,b=1.5", 2);
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn applicability_and_flow_context_errors() {
        let e = from_selector("sphere:n=3").unwrap();
        assert!(matches!(
            run_check("weyl_vanishes", &e, &[], None),
            Err(CheckError::Inapplicable { .. })
        ));
        assert!(matches!(
            run_check("scalar_evolution", &e, &[], None),
            Err(CheckError::MissingFlow(_))
        ));
        assert!(matches!(run_check("nope", &e, &[], None), Err(CheckError::UnknownCheck(_))));
        let traj = flow_context(e.flow.as_ref().unwrap()).unwrap();
        assert!(matches!(
            run_check("weyl_dim3", &e, &[], Some(&traj)),
            Err(CheckError::UnexpectedFlow(_))
        ));
    }

    #[test]
    fn empty_points_are_inconclusive() {
        let e = from_selector("sphere:n=4").unwrap();
        let r = run_check("weyl_traces", &e, &[], None).unwrap();
        assert_eq!(r.status, Status::Inconclusive);
        assert_eq!(r.n_points, 0);
    }

    #[test]
    fn dim3_subset_skips_higher_checks() {
        let e = from_selector("sphere:n=3").unwrap();
        let reports = run_suite(&[e], 42, 3);
        let ids: Vec<&str> = reports.iter().map(|r| r.check_id.as_str()).collect();
        assert!(ids.contains(&"weyl_dim3") && ids.contains(&"dim3_void"));
        assert!(!ids.contains(&"div_weyl_codazzi") && !ids.contains(&"weyl_evolution"));
        assert!(reports.iter().all(|r| r.pass), "{reports:#?}");
    }
}
