use super::*;
use crate::manifold::{tangent_basis, LorentzPoint};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lorentz(z: &[f64]) -> DVector<f64> {
    LorentzPoint::lift(z).into_coords()
}

fn random_points(n: usize, q: usize, radius: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..q).map(|_| rng.random_range(-radius..radius)).collect();
            lorentz(&z)
        })
        .collect()
}

/// Point at distance `rho` from `x` in the direction of tangent basis vector `k`.
fn at_distance(x: &DVector<f64>, rho: f64, k: usize) -> DVector<f64> {
    let p = LorentzPoint::from_ambient_unchecked(x.clone());
    let u = &tangent_basis(&p)[k] * rho;
    p.exp(&u).into_coords()
}

fn mc_spec(l: usize, seed: u64) -> KernelSpec {
    KernelSpec { mc_samples: l, mc_seed: seed, ..KernelSpec::new(KernelKind::HyperbolicL2Mc, 1.0, 1.0) }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Heat kernel on the hyperbolic plane at time `t` from its integral
/// representation, up to a constant factor.
fn heat_h2_quadrature(rho: f64, t: f64) -> f64 {
    // Substituting s = rho + u^2 removes the inverse square-root singularity.
    let upper = (12.0 * t.sqrt() + 10.0).sqrt();
    let n = 20_000;
    let h = upper / n as f64;
    let f = |u: f64| -> f64 {
        if u == 0.0 {
            let sh = rho.sinh();
            return if sh > 0.0 { 2.0 * rho * (-rho * rho / (4.0 * t)).exp() / sh.sqrt() } else { 2.0 * 2f64.sqrt() * 0.0 };
        }
        let s = rho + u * u;
        let denom = (s.cosh() - rho.cosh()).sqrt();
        2.0 * u * s * (-s * s / (4.0 * t)).exp() / denom
    };
    let mut acc = f(0.0) + f(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn se_examples() {
    let s = KernelSpec::new(KernelKind::EuclideanSe, 1.5, 2.0);
    let x = DVector::from_vec(vec![0.3, -0.2]);
    assert_eq!(se_euclidean(&x, &x, &s), 2.0);
    let s1 = KernelSpec::new(KernelKind::EuclideanSe, 1.0, 1.0);
    let y = DVector::from_vec(vec![1.0, 0.0]);
    let o = DVector::zeros(2);
    assert!((se_euclidean(&o, &y, &s1) - 0.606531).abs() < 1e-6);
    let mut prev = f64::INFINITY;
    for i in 0..50 {
        let p = DVector::from_vec(vec![i as f64 * 0.1, 0.0]);
        let v = se_euclidean(&o, &p, &s1);
        assert!(v < prev || i == 0);
        prev = v;
    }
}

#[test]
fn heat_l3_examples() {
    let s = KernelSpec::new(KernelKind::HyperbolicL3, 1.0, 1.0);
    let o = lorentz(&[0.0, 0.0, 0.0]);
    assert_eq!(heat_l3(&o, &o, &s), 1.0);
    let y = at_distance(&o, 1.0, 0);
    // Independent high-precision evaluation of exp(-1/2) / sinh(1).
    assert!((heat_l3(&o, &y, &s) - 0.516_107_933_682_434_9).abs() < 1e-12);
    let mut prev = 1.0;
    for i in 1..=100 {
        let v = heat_l3(&o, &at_distance(&o, i as f64 * 0.1, 1), &s);
        assert!(v < prev, "not decreasing at rho = {}", i as f64 * 0.1);
        prev = v;
    }
}

#[test]
fn mc_diagonal_is_exact() {
    let spec = mc_spec(500, 1);
    let f = sample_features(&spec).unwrap();
    for x in random_points(20, 2, 2.0, 4) {
        assert!((heat_l2_mc(&x, &x, &spec, &f) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mc_gram_is_psd() {
    let pts = random_points(100, 2, 1.5, 5);
    for l in [10, 100, 3000] {
        let k = gram(&mc_spec(l, 2), &pts, 0.0).unwrap_or_else(|_| {
            LatentKernel::new(&mc_spec(l, 2), 2).unwrap().cross(&pts, &pts)
        });
        let m = min_eig(&k);
        assert!(m >= -1e-6, "L = {l}: min eigenvalue {m}");
    }
}

#[test]
fn mc_gram_factorizes_with_default_jitter() {
    let pts = random_points(100, 2, 1.5, 6);
    let k = LatentKernel::new(&mc_spec(3000, 3), 2).unwrap();
    let g = k.gram(&pts, DEFAULT_JITTER).unwrap();
    assert!((&g.matrix - g.matrix.transpose()).amax() < 1e-12);
}

#[test]
fn mc_matches_heat_kernel_integral() {
    let kappa = 1.0;
    let t = kappa * kappa / 2.0;
    let k = LatentKernel::new(&mc_spec(100_000, 11), 2).unwrap();
    let o = lorentz(&[0.0, 0.0]);
    let k0 = heat_h2_quadrature(0.0, t);
    for rho in [0.3, 1.0, 1.3] {
        let y = at_distance(&o, rho, 0);
        let exact = heat_h2_quadrature(rho, t) / k0;
        let est = k.eval(&o, &y);
        assert!((est - exact).abs() < 0.02, "rho {rho}: {est} vs {exact}");
    }
}

#[test]
fn matern_examples() {
    let spec = KernelSpec { smoothness: Some(1.5), ..KernelSpec::new(KernelKind::HyperbolicMatern, 1.0, 2.0) };
    let o = lorentz(&[0.0, 0.0, 0.0]);
    assert!((matern_hyperbolic(&o, &o, &spec).unwrap() - 2.0).abs() < 1e-12);
    for i in 1..=40 {
        let v = matern_hyperbolic(&o, &at_distance(&o, i as f64 * 0.25, 2), &spec).unwrap();
        assert!(v > 0.0 && v < 2.0);
    }
    let big = KernelSpec { smoothness: Some(400.0), ..KernelSpec::new(KernelKind::HyperbolicMatern, 1.0, 1.0) };
    let heat = KernelSpec::new(KernelKind::HyperbolicL3, 1.0, 1.0);
    let y = at_distance(&o, 1.0, 0);
    let m = matern_hyperbolic(&o, &y, &big).unwrap();
    let h = heat_l3(&o, &y, &heat);
    assert!((m - h).abs() / h < 0.02, "{m} vs {h}");
}

#[test]
fn matern_two_dim_diagonal() {
    let spec = KernelSpec {
        smoothness: Some(2.5),
        mc_samples: 200,
        quadrature_nodes: 16,
        ..KernelSpec::new(KernelKind::HyperbolicMatern, 0.8, 1.3)
    };
    let k = LatentKernel::new(&spec, 2).unwrap();
    for x in random_points(5, 2, 1.0, 8) {
        assert!((k.eval(&x, &x) - 1.3).abs() < 1e-12);
    }
}

#[test]
fn gram_examples() {
    let spec = KernelSpec::new(KernelKind::EuclideanSe, 1.0, 3.0);
    let g = gram(&spec, &[DVector::zeros(2)], 1e-6).unwrap();
    assert!((g[(0, 0)] - 3.0 * (1.0 + 1e-6)).abs() < 1e-15);
    // Duplicated points are singular without jitter; the ladder recovers.
    let p = DVector::from_vec(vec![0.1, 0.2]);
    let pts = vec![p.clone(), p.clone(), p];
    let k = LatentKernel::new(&spec, 2).unwrap();
    let gr = k.gram(&pts, 0.0).unwrap();
    assert!(gr.jitter > 0.0);
}

#[test]
fn cholesky_failure_reports_ladder() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
    match Gram::factor(m, 1e-6, 1.0) {
        Err(Error::Cholesky { ladder }) => {
            assert_eq!(ladder.len(), 3);
            assert!((ladder[2] - 1e-4).abs() < 1e-18);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn spec_validation() {
    assert!(KernelSpec::new(KernelKind::EuclideanSe, 0.0, 1.0).validate().is_err());
    assert!(KernelSpec::new(KernelKind::EuclideanSe, 1.0, -1.0).validate().is_err());
    assert!(KernelSpec::new(KernelKind::GraphMatern, 1.0, 1.0).validate().is_err());
    assert!(LatentKernel::new(&KernelSpec::new(KernelKind::HyperbolicL3, 1.0, 1.0), 2).is_err());
    assert!(LatentKernel::new(&KernelSpec::new(KernelKind::HyperbolicL2Mc, 1.0, 1.0), 4).is_err());
    assert!(LatentKernel::new(&KernelSpec::new(KernelKind::GraphSe, 1.0, 1.0), 2).is_err());
    let toml_like = r#"{"kind":"hyperbolic_l2_mc","lengthscale":1.0,"variance":1.0,"bogus":1}"#;
    assert!(serde_json::from_str::<KernelSpec>(toml_like).is_err());
}

fn check_backward(spec: &KernelSpec, q: usize, hyperbolic: bool) {
    let k = LatentKernel::new(spec, q).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mk = |rng: &mut ChaCha8Rng| -> DVector<f64> {
        let z: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        if hyperbolic {
            lorentz(&z)
        } else {
            DVector::from_vec(z)
        }
    };
    let a: Vec<_> = (0..3).map(|_| mk(&mut rng)).collect();
    let b: Vec<_> = (0..2).map(|_| mk(&mut rng)).collect();
    let g = DMatrix::from_fn(3, 2, |i, j| 0.3 + i as f64 * 0.5 - j as f64 * 0.7);
    let obj = |k: &LatentKernel, a: &[DVector<f64>], b: &[DVector<f64>]| k.cross(a, b).component_mul(&g).sum();
    let grad = k.cross_backward(&a, &b, &g);
    let h = 1e-6;
    let tol = |fd: f64| 1e-6 * (1.0 + fd.abs());
    for i in 0..a.len() {
        for c in 0..a[i].len() {
            let mut p = a.clone();
            p[i][c] += h;
            let mut m = a.clone();
            m[i][c] -= h;
            let fd = (obj(&k, &p, &b) - obj(&k, &m, &b)) / (2.0 * h);
            if hyperbolic {
                // Only the tangential part is meaningful off the manifold.
                continue;
            }
            assert!((fd - grad.da[i][c]).abs() < tol(fd), "{:?} da: {fd} vs {}", spec.kind, grad.da[i][c]);
        }
    }
    if hyperbolic {
        // Directional derivatives along tangent directions via the exp map.
        for i in 0..a.len() {
            let p = LorentzPoint::from_ambient_unchecked(a[i].clone());
            for u in tangent_basis(&p) {
                let mut ap = a.clone();
                ap[i] = p.exp(&(&u * h)).into_coords();
                let mut am = a.clone();
                am[i] = p.exp(&(&u * -h)).into_coords();
                let fd = (obj(&k, &ap, &b) - obj(&k, &am, &b)) / (2.0 * h);
                let an = grad.da[i].dot(&u);
                assert!((fd - an).abs() < tol(fd), "{:?} da: {fd} vs {an}", spec.kind);
            }
        }
        for j in 0..b.len() {
            let p = LorentzPoint::from_ambient_unchecked(b[j].clone());
            for u in tangent_basis(&p) {
                let mut bp = b.clone();
                bp[j] = p.exp(&(&u * h)).into_coords();
                let mut bm = b.clone();
                bm[j] = p.exp(&(&u * -h)).into_coords();
                let fd = (obj(&k, &a, &bp) - obj(&k, &a, &bm)) / (2.0 * h);
                let an = grad.db[j].dot(&u);
                assert!((fd - an).abs() < tol(fd), "{:?} db: {fd} vs {an}", spec.kind);
            }
        }
    }
    let mut kp = k.clone();
    kp.set_hyper(spec.lengthscale * h.exp(), spec.variance).unwrap();
    let mut km = k.clone();
    km.set_hyper(spec.lengthscale * (-h).exp(), spec.variance).unwrap();
    let fd = (obj(&kp, &a, &b) - obj(&km, &a, &b)) / (2.0 * h);
    assert!((fd - grad.d_log_lengthscale).abs() < tol(fd), "{:?} dlogk: {fd} vs {}", spec.kind, grad.d_log_lengthscale);
    let mut vp = k.clone();
    vp.set_hyper(spec.lengthscale, spec.variance * h.exp()).unwrap();
    let mut vm = k.clone();
    vm.set_hyper(spec.lengthscale, spec.variance * (-h).exp()).unwrap();
    let fd = (obj(&vp, &a, &b) - obj(&vm, &a, &b)) / (2.0 * h);
    assert!((fd - grad.d_log_variance).abs() < tol(fd));
}

#[test]
fn backward_euclidean() {
    check_backward(&KernelSpec::new(KernelKind::EuclideanSe, 0.7, 1.3), 3, false);
}

#[test]
fn backward_heat_l3() {
    check_backward(&KernelSpec::new(KernelKind::HyperbolicL3, 0.7, 1.3), 3, true);
}

#[test]
fn backward_matern_l3() {
    let spec = KernelSpec { smoothness: Some(2.5), ..KernelSpec::new(KernelKind::HyperbolicMatern, 0.9, 1.1) };
    check_backward(&spec, 3, true);
}

#[test]
fn backward_mc() {
    check_backward(&mc_spec(200, 4), 2, true);
}

#[test]
fn backward_matern_mc() {
    let spec = KernelSpec {
        smoothness: Some(1.5),
        mc_samples: 50,
        quadrature_nodes: 8,
        ..KernelSpec::new(KernelKind::HyperbolicMatern, 0.9, 1.1)
    };
    check_backward(&spec, 2, true);
}

#[test]
fn heat3_profile_small_rho_branches() {
    for l in [0.5, 1.0, 2.0] {
        for rho in [5e-5, 1e-4, 0.05, 0.0999, 0.1, 0.1001] {
            let (f, d) = heat3_profile(rho, l);
            let h = 1e-7;
            let fd = (heat3_profile(rho + h, l).0 - heat3_profile(rho - h, l).0) / (2.0 * h);
            assert!((d * rho.sinh() - fd).abs() < 1e-6, "l {l} rho {rho}");
            assert!(f > 0.0 && f <= 1.0);
        }
    }
}

fn all_latent_specs() -> Vec<(KernelSpec, usize, bool)> {
    vec![
        (KernelSpec::new(KernelKind::EuclideanSe, 0.8, 1.7), 2, false),
        (KernelSpec::new(KernelKind::HyperbolicL3, 0.8, 1.7), 3, true),
        (mc_spec(300, 9), 2, true),
        (KernelSpec { smoothness: Some(2.5), ..KernelSpec::new(KernelKind::HyperbolicMatern, 0.8, 1.7) }, 3, true),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn symmetric_and_bounded(z1 in prop::collection::vec(-2.0f64..2.0, 3), z2 in prop::collection::vec(-2.0f64..2.0, 3)) {
        for (spec, q, hyp) in all_latent_specs() {
            let k = LatentKernel::new(&spec, q).unwrap();
            let (a, b) = if hyp {
                (lorentz(&z1[..q]), lorentz(&z2[..q]))
            } else {
                (DVector::from_column_slice(&z1[..q]), DVector::from_column_slice(&z2[..q]))
            };
            let kab = k.eval(&a, &b);
            prop_assert!((kab - k.eval(&b, &a)).abs() < 1e-12);
            prop_assert!((k.eval(&a, &a) - spec.variance).abs() < 1e-9);
            prop_assert!(kab.abs() <= spec.variance + 1e-9);
        }
    }
}

#[test]
fn mc_isotropy_at_many_features() {
    let k = LatentKernel::new(&mc_spec(100_000, 13), 2).unwrap();
    let o = lorentz(&[0.0, 0.0]);
    let c = lorentz(&[0.6, -0.4]);
    for rho in [0.3, 1.3, 3.0] {
        let k1 = k.eval(&o, &at_distance(&o, rho, 0));
        let k2 = k.eval(&c, &at_distance(&c, rho, 1));
        assert!((k1 - k2).abs() / k1.abs().max(k2.abs()) < 0.01, "rho {rho}: {k1} vs {k2}");
    }
}

#[test]
fn iid_sampling_also_approximates_heat_kernel() {
    let spec = KernelSpec { mc_sampling: FeatureSampling::Iid, ..mc_spec(100_000, 3) };
    let k = LatentKernel::new(&spec, 2).unwrap();
    let o = lorentz(&[0.0, 0.0]);
    let k0 = heat_h2_quadrature(0.0, 0.5);
    for rho in [0.3, 1.0] {
        let exact = heat_h2_quadrature(rho, 0.5) / k0;
        assert!((k.eval(&o, &at_distance(&o, rho, 0)) - exact).abs() < 0.02);
    }
}
