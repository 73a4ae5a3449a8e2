//! Curvature pipeline against independent finite-difference and
//! closed-form oracles.

use weylflow::catalog::{from_selector, sample_points};
use weylflow::exprdsl::parse_expr;
use weylflow::geometry::{
    christoffel, covariant_derivative, curvature_pack, divergence_weyl, riemann, rough_laplacian, Field, GeometryError, MetricChart,
};
use weylflow::tensor::Tensor;

const H: f64 = 1e-4;

fn shifted(p: &[f64], i: usize, d: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    q[i] += d;
    q
}

/// Central difference of a tensor-valued function along `x_i`.
fn fd(f: impl Fn(&[f64]) -> Tensor, p: &[f64], i: usize) -> Tensor {
    let plus = f(&shifted(p, i, H));
    let minus = f(&shifted(p, i, -H));
    plus.sub(&minus).scale(0.5 / H)
}

fn inverse(g: &Tensor) -> Tensor {
    let n = g.dim();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| g[[i, j]]);
    let inv = m.try_inverse().unwrap();
    Tensor::from_fn(n, vec![weylflow::tensor::Variance::Up; 2], |x| inv[(x[0], x[1])])
}

fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    a.sub(b).max_abs() / a.max_abs().max(b.max_abs()).max(1e-12)
}

/// `Γ^k_ij = ½ g^kl (∂_i g_jl + ∂_j g_il − ∂_l g_ij)` from differenced metrics.
fn fd_christoffel(chart: &MetricChart, p: &[f64]) -> Tensor {
    let n = chart.n;
    let g = chart.metric_at(p).unwrap();
    let ginv = inverse(&g);
    let dg: Vec<Tensor> = (0..n).map(|i| fd(|q| chart.metric_at(q).unwrap(), p, i)).collect();
    Tensor::from_fn(
        n,
        vec![
            weylflow::tensor::Variance::Up,
            weylflow::tensor::Variance::Down,
            weylflow::tensor::Variance::Down,
        ],
        |x| {
            let (k, i, j) = (x[0], x[1], x[2]);
            (0..n)
                .map(|l| 0.5 * ginv[[k, l]] * (dg[i][[j, l]] + dg[j][[i, l]] - dg[l][[i, j]]))
                .sum()
        },
    )
}

#[test]
fn christoffel_matches_differenced_metric() {
    for sel in ["perturbed_flat:n=4", "lcf_example:n=4", "warped_interval:n=4,h=sin,K=1"] {
        let entry = from_selector(sel).unwrap();
        for p in sample_points(&entry, 5, 3) {
            let err = rel_err(&christoffel(&entry.chart, &p).unwrap(), &fd_christoffel(&entry.chart, &p));
            assert!(err < 1e-7, "{sel} at {p:?}: {err:e}");
        }
    }
}

#[test]
fn poincare_ball_christoffel_closed_form() {
    // g = e^{2φ} δ with φ = log 2 − log(1 − |x|²)
    let entry = from_selector("hyperbolic:n=4").unwrap();
    for p in sample_points(&entry, 8, 11) {
        let s: f64 = p.iter().map(|x| x * x).sum();
        let dphi: Vec<f64> = p.iter().map(|x| 2.0 * x / (1.0 - s)).collect();
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let gamma = christoffel(&entry.chart, &p).unwrap();
        for k in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let exact = delta(k, i) * dphi[j] + delta(k, j) * dphi[i] - delta(i, j) * dphi[k];
                    assert!((gamma[[k, i, j]] - exact).abs() < 1e-12, "Γ^{k}_{i}{j} at {p:?}");
                }
            }
        }
    }
}

#[test]
fn riemann_matches_differenced_christoffel() {
    for sel in ["perturbed_flat:n=4", "perturbed_flat:n=3", "cylinder_RxS:n=4,K=-1"] {
        let entry = from_selector(sel).unwrap();
        let chart = &entry.chart;
        let n = chart.n;
        for p in sample_points(&entry, 4, 5) {
            let gamma = christoffel(chart, &p).unwrap();
            let dgamma: Vec<Tensor> = (0..n).map(|i| fd(|q| christoffel(chart, q).unwrap(), &p, i)).collect();
            let g = chart.metric_at(&p).unwrap();
            // R^l_ijk = ∂_jΓ^l_ik − ∂_iΓ^l_jk + Γ^l_jm Γ^m_ik − Γ^l_im Γ^m_jk, lowered on l
            let up = |l: usize, i: usize, j: usize, k: usize| -> f64 {
                let mut v = dgamma[j][[l, i, k]] - dgamma[i][[l, j, k]];
                for m in 0..n {
                    v += gamma[[l, j, m]] * gamma[[m, i, k]] - gamma[[l, i, m]] * gamma[[m, j, k]];
                }
                v
            };
            let oracle = Tensor::from_fn(n, vec![weylflow::tensor::Variance::Down; 4], |x| {
                (0..n).map(|m| g[[x[3], m]] * up(m, x[0], x[1], x[2])).sum()
            });
            let err = rel_err(&riemann(chart, &p).unwrap(), &oracle);
            assert!(err < 1e-6, "{sel} at {p:?}: {err:e}");
        }
    }
}

#[test]
fn sphere_sign_convention() {
    let entry = from_selector("sphere:n=4,r=2").unwrap();
    let p = [0.1, -0.2, 0.3, 0.05];
    let pack = curvature_pack(&entry.chart, &p).unwrap();
    let g = &pack.metric;
    let k = 0.25;
    for x in weylflow::tensor::multi_indices(4, 4) {
        let (i, j, kk, l) = (x[0], x[1], x[2], x[3]);
        let exact = k * (g[[i, kk]] * g[[j, l]] - g[[i, l]] * g[[j, kk]]);
        assert!((pack.riem[[i, j, kk, l]] - exact).abs() < 1e-12 * g.max_abs().powi(2));
    }
    assert!((pack.scalar - 3.0).abs() < 1e-12);
}

#[test]
fn covariant_ricci_matches_differenced_components() {
    let entry = from_selector("lcf_example:n=4").unwrap();
    let chart = &entry.chart;
    for p in sample_points(&entry, 5, 9) {
        let nabla = covariant_derivative(&Field::Ricci, chart, &p).unwrap();
        let gamma = christoffel(chart, &p).unwrap();
        let ric = curvature_pack(chart, &p).unwrap().ric;
        let oracle = Tensor::from_fn(4, vec![weylflow::tensor::Variance::Down; 3], |x| {
            let (m, i, k) = (x[0], x[1], x[2]);
            let d = fd(|q| curvature_pack(chart, q).unwrap().ric, &p, m)[[i, k]];
            d - (0..4)
                .map(|q| gamma[[q, m, i]] * ric[[q, k]] + gamma[[q, m, k]] * ric[[i, q]])
                .sum::<f64>()
        });
        let err = rel_err(&nabla, &oracle);
        assert!(err < 1e-6, "at {p:?}: {err:e}");
    }
}

#[test]
fn second_bianchi_identity() {
    for sel in ["perturbed_flat:n=4", "lcf_example:n=4", "warped_interval:n=4,h=cosh,K=-1"] {
        let entry = from_selector(sel).unwrap();
        for p in sample_points(&entry, 4, 1) {
            let d = covariant_derivative(&Field::Riemann, &entry.chart, &p).unwrap();
            // parallel curvature (the K = −1 cosh warp is hyperbolic space) leaves only roundoff
            let scale = d.max_abs().max(riemann(&entry.chart, &p).unwrap().max_abs());
            for x in weylflow::tensor::multi_indices(4, 5) {
                let (m, i, j, k, l) = (x[0], x[1], x[2], x[3], x[4]);
                let cyc = d[[m, i, j, k, l]] + d[[k, i, j, l, m]] + d[[l, i, j, m, k]];
                assert!(cyc.abs() < 1e-11 * scale, "{sel}: {cyc:e}");
            }
        }
    }
}

#[test]
fn contracted_bianchi_identity() {
    // ∇^i R_ik = ½ ∂_k R
    let entry = from_selector("perturbed_flat:n=4").unwrap();
    for p in sample_points(&entry, 4, 2) {
        let d_ric = covariant_derivative(&Field::Ricci, &entry.chart, &p).unwrap();
        let d_scal = covariant_derivative(&Field::ScalarCurvature, &entry.chart, &p).unwrap();
        let ginv = curvature_pack(&entry.chart, &p).unwrap().inverse;
        for k in 0..4 {
            let div: f64 = (0..4)
                .flat_map(|m| (0..4).map(move |i| (m, i)))
                .map(|(m, i)| ginv[[m, i]] * d_ric[[m, i, k]])
                .sum();
            assert!((div - 0.5 * d_scal[[k]]).abs() < 1e-11 * d_scal.max_abs().max(1.0));
        }
    }
}

#[test]
fn scaling_degrees() {
    let entry = from_selector("perturbed_flat:n=4").unwrap();
    let c = 2.5;
    let scaled = entry.chart.scaled(c);
    for p in sample_points(&entry, 3, 4) {
        let a = curvature_pack(&entry.chart, &p).unwrap();
        let b = curvature_pack(&scaled, &p).unwrap();
        assert!(rel_err(&b.riem, &a.riem.scale(c)) < 1e-12);
        assert!(rel_err(&b.weyl, &a.weyl.scale(c)) < 1e-12);
        assert!(rel_err(&b.ric, &a.ric) < 1e-12);
        assert!((b.scalar - a.scalar / c).abs() < 1e-12 * a.scalar.abs().max(1e-3));
        assert!(rel_err(&b.c_tensor, &a.c_tensor) < 1e-12);
        assert!(rel_err(&b.d_tensor, &a.d_tensor) < 1e-12);
    }
}

#[test]
fn laplacian_of_quadratic_on_flat_space() {
    let entry = from_selector("euclidean:n=4").unwrap();
    let f = parse_expr("x1^2 + 2*x2^2 - x3*x4").unwrap();
    let lap = rough_laplacian(&Field::Scalar(f), &entry.chart, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    assert!((lap.data()[0] - 6.0).abs() < 1e-13);
}

#[test]
fn weyl_divergence_vanishes_when_conformally_flat() {
    let entry = from_selector("lcf_example:n=4").unwrap();
    for p in sample_points(&entry, 4, 6) {
        assert!(divergence_weyl(&entry.chart, &p).unwrap().max_abs() < 1e-11);
    }
    let three = from_selector("sphere:n=3").unwrap();
    assert!(matches!(
        divergence_weyl(&three.chart, &[0.0; 3]),
        Err(GeometryError::Dimension { .. })
    ));
}
