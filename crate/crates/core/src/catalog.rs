//! Named metric families with closed-form charts and machine-checkable facts.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Deserialize;

use crate::exprdsl::{parse_expr_with, Bindings, Expr, SymbolTable};
use crate::flow::FlowFamily;
use crate::geometry::{Domain, GeometryError, MetricChart};
use crate::soliton::{bryant_soliton, bryant_solve, warped_domain, warped_sources, BryantProfile, SolitonError};

pub const FAMILIES: [&str; 10] = [
    "euclidean",
    "sphere",
    "hyperbolic",
    "cylinder_RxS",
    "product_spheres",
    "warped_interval",
    "lcf_example",
    "gaussian_soliton",
    "bryant_profile",
    "perturbed_flat",
];

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown metric family `{0}`")]
    UnknownName(String),
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },
    #[error("unknown parameter `{key}` for `{family}`")]
    UnknownParam { family: String, key: String },
    #[error("malformed metric selector `{0}`")]
    Selector(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Soliton(#[from] SolitonError),
    #[error("catalog file: {0}")]
    File(String),
}

/// Expectations attached to an entry; each is re-verified by the suite.
#[derive(Debug, Clone, PartialEq)]
pub enum KnownFact {
    /// Constant scalar curvature.
    ScalarCurvature(f64),
    /// Constant sectional curvature.
    SectionalCurvature(f64),
    /// Weyl tensor vanishes.
    WeylVanishes,
    /// `max |W| / max |Riem|` at least this large somewhere.
    WeylNonzero(f64),
    /// Ricci eigenvalues relative to `g`, ascending.
    RicciEigenvalues(Vec<f64>),
    /// The `g^nn R_nn` closed form of the conformal example.
    LcfSigma1,
    /// Soliton equation holds with the entry's potential.
    Soliton,
    /// Ricci has one simple eigenvalue and one of multiplicity `n−1`.
    SplitEigenstructure,
}

/// Warp data of `dt² + h(t)² σ^K`, for the closed-form Ricci comparison.
#[derive(Debug, Clone)]
pub struct WarpSpec {
    pub k: f64,
    pub h: Expr,
}

/// Potential for gradient solitons.
#[derive(Debug, Clone)]
pub struct Potential {
    pub f: Expr,
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub family: String,
    pub params: BTreeMap<String, String>,
    pub chart: MetricChart,
    pub facts: Vec<KnownFact>,
    pub warp: Option<WarpSpec>,
    pub potential: Option<Potential>,
    pub flow: Option<FlowFamily>,
    /// Per-check tolerance overrides.
    pub tolerances: BTreeMap<String, f64>,
    /// Fraction of the domain kept when sampling.
    pub sample_fraction: f64,
}

impl CatalogEntry {
    pub fn n(&self) -> usize {
        self.chart.n
    }

    /// `family:key=value,...`, canonical and deterministic.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.family.clone();
        }
        let kv: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}:{}", self.family, kv.join(","))
    }

    pub fn has_fact(&self, pred: impl Fn(&KnownFact) -> bool) -> bool {
        self.facts.iter().any(pred)
    }

    /// Whether the Weyl tensor is expected to vanish identically.
    pub fn is_lcf(&self) -> bool {
        self.n() == 3 || self.has_fact(|f| *f == KnownFact::WeylVanishes)
    }

    pub fn tolerance(&self, check: &str, default: f64) -> f64 {
        self.tolerances.get(check).copied().unwrap_or(default)
    }
}

/// Typed reader over the string parameters of a selector.
struct Params<'a> {
    family: &'a str,
    raw: &'a BTreeMap<String, String>,
    used: Vec<&'static str>,
    out: BTreeMap<String, String>,
}

impl<'a> Params<'a> {
    fn new(family: &'a str, raw: &'a BTreeMap<String, String>) -> Self {
        Params {
            family,
            raw,
            used: Vec::new(),
            out: BTreeMap::new(),
        }
    }

    fn get_str(&mut self, key: &'static str, default: &str) -> String {
        self.used.push(key);
        let v = self.raw.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.out.insert(key.to_string(), v.clone());
        v
    }

    fn get_f64(&mut self, key: &'static str, default: f64) -> Result<f64, CatalogError> {
        let s = self.get_str(key, &fmt_num(default));
        let v: f64 = s.parse().map_err(|_| CatalogError::InvalidParam {
            key: key.into(),
            reason: format!("`{s}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(CatalogError::InvalidParam {
                key: key.into(),
                reason: "must be finite".into(),
            });
        }
        self.out.insert(key.to_string(), fmt_num(v));
        Ok(v)
    }

    fn positive(&mut self, key: &'static str, default: f64) -> Result<f64, CatalogError> {
        let v = self.get_f64(key, default)?;
        if v <= 0.0 {
            return Err(CatalogError::InvalidParam {
                key: key.into(),
                reason: format!("must be positive, got {v}"),
            });
        }
        Ok(v)
    }

    fn dim(&mut self, key: &'static str, default: usize, min: usize, max: usize) -> Result<usize, CatalogError> {
        let s = self.get_str(key, &default.to_string());
        let v: usize = s.parse().map_err(|_| CatalogError::InvalidParam {
            key: key.into(),
            reason: format!("`{s}` is not an integer"),
        })?;
        if v < min || v > max {
            return Err(CatalogError::InvalidParam {
                key: key.into(),
                reason: format!("must lie in {min}..={max}, got {v}"),
            });
        }
        Ok(v)
    }

    fn curvature_sign(&mut self, key: &'static str, default: f64) -> Result<f64, CatalogError> {
        let k = self.get_f64(key, default)?;
        if ![-1.0, 0.0, 1.0].contains(&k) {
            return Err(CatalogError::InvalidParam {
                key: key.into(),
                reason: format!("must be one of -1, 0, 1, got {k}"),
            });
        }
        Ok(k)
    }

    fn finish(self) -> Result<BTreeMap<String, String>, CatalogError> {
        if let Some(k) = self.raw.keys().find(|k| !self.used.contains(&k.as_str())) {
            return Err(CatalogError::UnknownParam {
                family: self.family.into(),
                key: k.clone(),
            });
        }
        Ok(self.out)
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn sum_squares(from: usize, to: usize) -> String {
    let terms: Vec<String> = (from..=to).map(|i| format!("x{i}^2")).collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join("+")
    }
}

fn diagonal_sources(n: usize, diag: impl Fn(usize) -> String) -> Vec<String> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            out.push(if i == j { diag(i) } else { "0".into() });
        }
    }
    out
}

fn chart(name: &str, n: usize, sources: &[String], domain: Domain, bindings: Bindings) -> Result<MetricChart, CatalogError> {
    let refs: Vec<&str> = sources.iter().map(String::as_str).collect();
    Ok(MetricChart::parse(name, n, &refs, domain, bindings)?)
}

fn expr(src: &str, n: usize) -> Result<Expr, CatalogError> {
    parse_expr_with(src, &SymbolTable::default().dimension(n)).map_err(|e| CatalogError::Geometry(e.into()))
}

fn cube(n: usize, half: f64) -> Domain {
    Domain::Box {
        lo: vec![-half; n],
        hi: vec![half; n],
    }
}

fn entry(family: &str, params: BTreeMap<String, String>, chart: MetricChart) -> CatalogEntry {
    CatalogEntry {
        family: family.into(),
        params,
        chart,
        facts: Vec::new(),
        warp: None,
        potential: None,
        flow: None,
        tolerances: BTreeMap::new(),
        sample_fraction: 0.8,
    }
}

/// Default length of the solved steady profile.
pub const BRYANT_LENGTH: f64 = 4.0;

fn bryant_cache() -> &'static std::sync::Mutex<BTreeMap<usize, Arc<BryantProfile>>> {
    static CACHE: std::sync::OnceLock<std::sync::Mutex<BTreeMap<usize, Arc<BryantProfile>>>> = std::sync::OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Builds a catalog entry. Parameters are strings as they appear on the
/// command line; unknown keys are rejected.
pub fn get_metric(name: &str, raw: &BTreeMap<String, String>) -> Result<CatalogEntry, CatalogError> {
    let mut p = Params::new(name, raw);
    let e = match name {
        "euclidean" => {
            let n = p.dim("n", 4, 2, 6)?;
            let c = chart(name, n, &diagonal_sources(n, |_| "1".into()), Domain::ball(n, 1.0), Bindings::new())?;
            let mut e = entry(name, p.finish()?, c);
            e.facts = vec![KnownFact::SectionalCurvature(0.0), KnownFact::ScalarCurvature(0.0)];
            if n >= 3 {
                e.facts.push(KnownFact::WeylVanishes);
            }
            e.flow = Some(FlowFamily::Flat { n });
            e
        }
        "sphere" | "hyperbolic" => {
            let n = p.dim("n", 4, 2, 6)?;
            let r = p.positive("r", 1.0)?;
            let (sign, k) = if name == "sphere" { ("+", 1.0) } else { ("-", -1.0) };
            let factor = format!("r^2*4/(1{sign}({}))^2", sum_squares(1, n));
            let b = Bindings::new().param("r", r);
            let c = chart(name, n, &diagonal_sources(n, |_| factor.clone()), Domain::ball(n, 1.0), b)?;
            let mut e = entry(name, p.finish()?, c);
            let kk = k / (r * r);
            let nf = n as f64;
            e.facts = vec![
                KnownFact::SectionalCurvature(kk),
                KnownFact::ScalarCurvature(nf * (nf - 1.0) * kk),
                KnownFact::RicciEigenvalues(vec![(nf - 1.0) * kk; n]),
            ];
            if n >= 3 {
                e.facts.push(KnownFact::WeylVanishes);
            }
            if name == "sphere" {
                e.flow = Some(FlowFamily::RoundSphere { n, r2: r * r });
            }
            e
        }
        "cylinder_RxS" => {
            let n = p.dim("n", 4, 3, 6)?;
            let k = p.curvature_sign("K", 1.0)?;
            let sources = warped_sources(n, k, "1");
            let c = chart(name, n, &sources, warped_domain(n, -1.0, 1.0), Bindings::new())?;
            let mut e = entry(name, p.finish()?, c);
            let mu = (n as f64 - 2.0) * k;
            let mut ev = vec![0.0];
            ev.extend(std::iter::repeat_n(mu, n - 1));
            ev.sort_by(f64::total_cmp);
            e.facts = vec![
                KnownFact::ScalarCurvature((n as f64 - 1.0) * mu),
                KnownFact::RicciEigenvalues(ev),
                KnownFact::WeylVanishes,
            ];
            e.warp = Some(WarpSpec { k, h: expr("1", n)? });
            if k == 1.0 {
                e.flow = Some(FlowFamily::Cylinder { n, s2: 1.0 });
            }
            e
        }
        "product_spheres" => {
            let pd = p.dim("p", 2, 2, 4)?;
            let qd = p.dim("q", 2, 2, 4)?;
            let a = p.positive("a", 1.0)?;
            let b = p.positive("b", 1.0)?;
            let n = pd + qd;
            if n > 6 {
                return Err(CatalogError::InvalidParam {
                    key: "p+q".into(),
                    reason: "total dimension must be at most 6".into(),
                });
            }
            let first = format!("a^2*4/(1+{})^2", sum_squares(1, pd));
            let second = format!("b^2*4/(1+{})^2", sum_squares(pd + 1, n));
            let sources = diagonal_sources(n, |i| if i < pd { first.clone() } else { second.clone() });
            let bind = Bindings::new().param("a", a).param("b", b);
            let c = chart(name, n, &sources, cube(n, 1.0), bind)?;
            let mut e = entry(name, p.finish()?, c);
            let (la, lb) = ((pd as f64 - 1.0) / (a * a), (qd as f64 - 1.0) / (b * b));
            let mut ev: Vec<f64> = std::iter::repeat_n(la, pd).chain(std::iter::repeat_n(lb, qd)).collect();
            ev.sort_by(f64::total_cmp);
            e.facts = vec![
                KnownFact::ScalarCurvature(pd as f64 * la + qd as f64 * lb),
                KnownFact::RicciEigenvalues(ev),
                KnownFact::WeylNonzero(0.1),
            ];
            e.flow = Some(FlowFamily::ProductSpheres {
                p: pd,
                q: qd,
                a2: a * a,
                b2: b * b,
            });
            e
        }
        "warped_interval" => {
            let n = p.dim("n", 4, 3, 6)?;
            let k = p.curvature_sign("K", 1.0)?;
            let h = p.get_str("h", "sin");
            let (src, len) = match h.as_str() {
                "one" | "1" => ("1", 2.0),
                "sin" => ("sin(x1)", std::f64::consts::PI),
                "t" => ("x1", 2.0),
                "cosh" => ("(exp(x1)+exp(-x1))/2", 2.0),
                other => {
                    return Err(CatalogError::InvalidParam {
                        key: "h".into(),
                        reason: format!("`{other}` is not one of one, sin, t, cosh"),
                    })
                }
            };
            let c = chart(name, n, &warped_sources(n, k, src), warped_domain(n, 0.0, len), Bindings::new())?;
            let mut e = entry(name, p.finish()?, c);
            e.facts = vec![KnownFact::WeylVanishes];
            e.warp = Some(WarpSpec { k, h: expr(src, n)? });
            e
        }
        "lcf_example" => {
            let n = p.dim("n", 4, 3, 6)?;
            let a = format!("(1+{})", sum_squares(1, n - 1));
            let c = chart(
                name,
                n,
                &diagonal_sources(n, |_| format!("1/{a}^2")),
                Domain::ball(n, 1.0),
                Bindings::new(),
            )?;
            let mut e = entry(name, p.finish()?, c);
            e.facts = vec![KnownFact::WeylVanishes, KnownFact::LcfSigma1];
            e
        }
        "gaussian_soliton" => {
            let n = p.dim("n", 4, 3, 6)?;
            let alpha = p.get_f64("alpha", 1.0)?;
            let c = chart(name, n, &diagonal_sources(n, |_| "1".into()), Domain::ball(n, 1.0), Bindings::new())?;
            let mut e = entry(name, p.finish()?, c);
            let f = expr(&format!("({alpha})*({})/(2*{n})", sum_squares(1, n)), n)?;
            e.facts = vec![KnownFact::WeylVanishes, KnownFact::Soliton, KnownFact::ScalarCurvature(0.0)];
            e.potential = Some(Potential { f, alpha });
            e
        }
        "bryant_profile" => {
            let n = p.dim("n", 4, 4, 6)?;
            let profile = {
                let mut cache = bryant_cache().lock().expect("cache lock");
                match cache.get(&n) {
                    Some(pr) => pr.clone(),
                    None => {
                        let pr = bryant_solve(n, BRYANT_LENGTH, 1e-6)?;
                        cache.insert(n, pr.clone());
                        pr
                    }
                }
            };
            let data = bryant_soliton(profile)?;
            let mut e = entry(name, p.finish()?, data.chart.clone());
            let f = data.potential().expect("gradient soliton").clone();
            e.facts = vec![KnownFact::WeylVanishes, KnownFact::Soliton, KnownFact::SplitEigenstructure];
            e.potential = Some(Potential { f, alpha: 0.0 });
            let h = parse_expr_with(
                "h(x1)",
                &SymbolTable {
                    max_var: Some(n),
                    ..data.chart.bindings.symbols()
                },
            )
            .map_err(|e| CatalogError::Geometry(e.into()))?;
            e.warp = Some(WarpSpec { k: 1.0, h });
            for (check, tol) in [
                ("soliton_equation", 1e-6),
                ("weyl_traces", 1e-6),
                ("weyl_vanishes", 1e-6),
                ("grad_soliton_divergence", 1e-5),
                ("radial_weyl_zero", 1e-5),
                ("warped_ricci", 1e-6),
                ("known_facts", 1e-6),
            ] {
                e.tolerances.insert(check.into(), tol);
            }
            e
        }
        "perturbed_flat" => {
            let n = p.dim("n", 4, 3, 6)?;
            let eps = p.get_f64("eps", 0.1)?;
            if eps.abs() > 0.15 {
                return Err(CatalogError::InvalidParam {
                    key: "eps".into(),
                    reason: "|eps| <= 0.15 keeps the metric positive on the unit ball".into(),
                });
            }
            let sources = perturbation_sources(n);
            let bind = Bindings::new().param("eps", eps);
            let c = chart(name, n, &sources, Domain::ball(n, 1.0), bind)?;
            entry(name, p.finish()?, c)
        }
        other => return Err(CatalogError::UnknownName(other.into())),
    };
    Ok(e)
}

/// `δ_ij + eps · P_ij(x)` with a fixed polynomial `P` containing quadratic and
/// cubic terms; every entry of `P` is bounded by 1 on the unit ball.
fn perturbation_sources(n: usize) -> Vec<String> {
    let x = |i: usize| format!("x{}", i % n + 1);
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let poly = if i == j {
                format!("{a}^2 - {b}*{c}^2/2 + {c}/3", a = x(i + 1), b = x(i), c = x(i + 2))
            } else {
                format!("{a}*{b}/2 + {c}^3/3 - {a}/4", a = x(i), b = x(j), c = x(i + j + 1))
            };
            let delta = if i == j { "1" } else { "0" };
            out.push(format!("{delta} + eps*({poly})"));
        }
    }
    out
}

/// Parses `name` or `name:key=val,key=val`.
pub fn parse_selector(selector: &str) -> Result<(String, BTreeMap<String, String>), CatalogError> {
    let (name, rest) = match selector.split_once(':') {
        Some((n, r)) => (n, Some(r)),
        None => (selector, None),
    };
    if name.is_empty() {
        return Err(CatalogError::Selector(selector.into()));
    }
    let mut params = BTreeMap::new();
    if let Some(rest) = rest {
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| CatalogError::Selector(selector.into()))?;
            if k.is_empty() || v.is_empty() || params.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(CatalogError::Selector(selector.into()));
            }
        }
    }
    Ok((name.to_string(), params))
}

pub fn from_selector(selector: &str) -> Result<CatalogEntry, CatalogError> {
    let (name, params) = parse_selector(selector)?;
    get_metric(&name, &params)
}

fn sel(s: &str) -> CatalogEntry {
    from_selector(s).unwrap_or_else(|e| panic!("built-in selector {s}: {e}"))
}

/// The entries run by `check --all`.
pub fn default_entries() -> Vec<CatalogEntry> {
    let mut out = vec![
        sel("euclidean:n=4"),
        sel("sphere:n=4"),
        sel("sphere:n=3"),
        sel("hyperbolic:n=4"),
        sel("cylinder_RxS:n=4,K=1"),
        sel("cylinder_RxS:n=4,K=-1"),
        sel("product_spheres:p=2,q=2"),
        sel("product_spheres:p=2,q=2,a=1,b=1.5"),
        sel("lcf_example:n=4"),
        sel("perturbed_flat:n=4"),
        sel("perturbed_flat:n=3"),
        sel("bryant_profile:n=4"),
    ];
    for h in ["one", "sin", "t", "cosh"] {
        for k in ["1", "0", "-1"] {
            out.push(sel(&format!("warped_interval:n=4,h={h},K={k}")));
        }
    }
    for alpha in ["-1", "0", "1"] {
        out.push(sel(&format!("gaussian_soliton:n=4,alpha={alpha}")));
    }
    out
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn splitmix(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic low-discrepancy points inside the chart domain: a Halton
/// sequence with a seed-dependent Cranley–Patterson shift, mapped to
/// `sample_fraction` of a ball's radius or to a box inset by 10% per side.
pub fn sample_points(entry: &CatalogEntry, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = entry.n();
    let mut state = seed;
    let shift: Vec<f64> = (0..n).map(|_| splitmix(&mut state)).collect();
    let unit = |i: u64| -> Vec<f64> { (0..n).map(|d| (radical_inverse(i, PRIMES[d]) + shift[d]).fract()).collect() };
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    match &entry.chart.domain {
        Domain::Ball { center, radius } => {
            let r = radius * entry.sample_fraction;
            while out.len() < count {
                let u = unit(i);
                i += 1;
                let v: Vec<f64> = u.iter().map(|x| 2.0 * x - 1.0).collect();
                if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
                    out.push(v.iter().zip(center).map(|(x, c)| c + r * x).collect());
                }
            }
        }
        Domain::Box { lo, hi } => {
            let inset = (1.0 - entry.sample_fraction) / 2.0;
            while out.len() < count {
                let u = unit(i);
                i += 1;
                out.push(
                    u.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(x, (l, h))| l + (h - l) * (inset + entry.sample_fraction * x))
                        .collect(),
                );
            }
        }
    }
    out
}

/// One catalog document in TOML.
///
/// ```toml
/// name = "conformal_bump"
/// n = 3
/// components = ["1/(1+x1^2)^2", "0", "0", "1/(1+x1^2)^2", "0", "1/(1+x1^2)^2"]
/// [parameters]
/// c = 0.5
/// [domain]
/// kind = "ball"        # or "box" with lo = [...], hi = [...]
/// radius = 1.0
/// [facts]
/// weyl_vanishes = true
/// scalar_curvature = 0.0
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEntry {
    name: String,
    n: usize,
    components: Vec<String>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
    domain: FileDomain,
    #[serde(default)]
    facts: FileFacts,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum FileDomain {
    Ball {
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileFacts {
    #[serde(default)]
    weyl_vanishes: bool,
    scalar_curvature: Option<f64>,
    sectional_curvature: Option<f64>,
    ricci_eigenvalues: Option<Vec<f64>>,
}

/// Reads one entry from a TOML document.
pub fn entry_from_toml(src: &str) -> Result<CatalogEntry, CatalogError> {
    let file: FileEntry = toml::from_str(src).map_err(|e| CatalogError::File(e.to_string()))?;
    let n = file.n;
    let domain = match file.domain {
        FileDomain::Ball { radius, center } => Domain::Ball {
            center: center.unwrap_or_else(|| vec![0.0; n]),
            radius,
        },
        FileDomain::Box { lo, hi } => Domain::Box { lo, hi },
    };
    let mut bindings = Bindings::new();
    for (k, v) in &file.parameters {
        bindings = bindings.param(k.clone(), *v);
    }
    let c = chart(&file.name, n, &file.components, domain, bindings)?;
    let params = file.parameters.iter().map(|(k, v)| (k.clone(), fmt_num(*v))).collect();
    let mut e = entry(&file.name, params, c);
    if file.facts.weyl_vanishes {
        e.facts.push(KnownFact::WeylVanishes);
    }
    if let Some(s) = file.facts.scalar_curvature {
        e.facts.push(KnownFact::ScalarCurvature(s));
    }
    if let Some(k) = file.facts.sectional_curvature {
        e.facts.push(KnownFact::SectionalCurvature(k));
    }
    if let Some(mut ev) = file.facts.ricci_eigenvalues {
        ev.sort_by(f64::total_cmp);
        e.facts.push(KnownFact::RicciEigenvalues(ev));
    }
    Ok(e)
}
