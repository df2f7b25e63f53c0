//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 2 7`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gphlvm::distributions::{kl_mc, kl_mc_with_stderr, WrappedNormal};
use gphlvm::evalmotion::{class_centroids, interpolate, jerkiness, stress_report, Trajectory, DEFAULT_DT};
use gphlvm::gplvm::{
    elbo, encode_new, initial_latents, log_marginal, log_prior, train, ElboObjective, GammaPrior, Geometry,
    GphlvmModel, InitMethod, MapObjective, Regularizer, TrainConfig, TrainMode, VariationalState,
};
use gphlvm::graphtax::{synthetic_tree, LabeledDataset, TaxonomyGraph};
use gphlvm::kernels::{FeatureSampling, KernelKind, KernelSpec, LatentKernel};
use gphlvm::manifold::{
    distance, exp_map, from_poincare, log_map, mdot, parallel_transport, tangent_basis, to_poincare, LorentzPoint,
    TangentVector,
};
use gphlvm::optim::{check_gradient, AdamConfig, OptimizerState, ProductGrad, ProductParam};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("{what} took {:.1}s, budget {:.0}s", t.as_secs_f64(), limit.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn random_point(r: &mut ChaCha8Rng, q: usize, scale: f64) -> LorentzPoint {
    let z: Vec<f64> = (0..q).map(|_| r.random_range(-scale..scale)).collect();
    LorentzPoint::lift(&z)
}

/// Tangent vector at `x` with Minkowski norm `norm` in a uniformly random direction.
fn random_tangent(r: &mut ChaCha8Rng, x: &LorentzPoint, norm: f64) -> DVector<f64> {
    let basis = tangent_basis(x);
    let c = DVector::from_fn(basis.len(), |_, _| r.random_range(-1.0..1.0f64));
    let c = &c / c.norm();
    basis.iter().zip(c.iter()).fold(DVector::zeros(x.dim() + 1), |acc, (e, w)| acc + e * *w) * norm
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn tree30(seed: u64) -> (TaxonomyGraph, LabeledDataset) {
    synthetic_tree(3, 2, 2, 8, 0.1, &mut rng(seed)).unwrap()
}

// ------------------------------------------------------------------------ 1

fn manifold_suite() -> Outcome {
    let start = Instant::now();
    let n = 10_000;
    let mut r = rng(1);
    let mut worst = [0.0f64; 7];

    for _ in 0..n {
        let q = 2 + r.random_range(0..2);
        let x = random_point(&mut r, q, 2.0);
        let norm = r.random_range(0.0..5.0);
        let u = random_tangent(&mut r, &x, norm);
        let y = exp_map(&x, &TangentVector::new(x.clone(), u.clone()).unwrap());
        let back = log_map(&x, &y).into_vec();
        worst[0] = worst[0].max((&back - &u).amax());
        let d = distance(&x, &y);
        worst[1] = worst[1].max((mdot(&back, &back).max(0.0).sqrt() - d).abs());
    }
    ensure!(worst[0] <= 1e-8, "log(exp(u)) error {:e}", worst[0]);
    ensure!(worst[1] <= 1e-9, "|log| vs distance error {:e}", worst[1]);

    for _ in 0..n {
        let q = 2 + r.random_range(0..2);
        let x = random_point(&mut r, q, 2.0);
        let y = random_point(&mut r, q, 2.0);
        let a = r.random_range(0.0..3.0);
        let b = r.random_range(0.0..3.0);
        let u = TangentVector::new(x.clone(), random_tangent(&mut r, &x, a)).unwrap();
        let v = TangentVector::new(x.clone(), random_tangent(&mut r, &x, b)).unwrap();
        let pu = parallel_transport(&x, &y, &u);
        let pv = parallel_transport(&x, &y, &v);
        worst[2] = worst[2].max((mdot(pu.vec(), pv.vec()) - mdot(u.vec(), v.vec())).abs());
        let round = parallel_transport(&y, &x, &pu);
        worst[3] = worst[3].max((round.vec() - u.vec()).amax());
    }
    ensure!(worst[2] <= 1e-8, "transport inner-product error {:e}", worst[2]);
    ensure!(worst[3] <= 1e-9, "transport round-trip error {:e}", worst[3]);

    for _ in 0..n {
        let q = 2 + r.random_range(0..2);
        let x = random_point(&mut r, q, 3.0);
        let y = random_point(&mut r, q, 3.0);
        let back = from_poincare(&to_poincare(&x)).unwrap();
        worst[4] = worst[4].max((back.coords() - x.coords()).amax());
        let dp = to_poincare(&x).distance(&to_poincare(&y));
        worst[6] = worst[6].max((dp - distance(&x, &y)).abs());
    }
    ensure!(worst[4] <= 1e-9, "Poincaré round-trip error {:e}", worst[4]);
    ensure!(worst[6] <= 1e-8, "Poincaré distance error {:e}", worst[6]);

    for _ in 0..n {
        let q = 2 + r.random_range(0..2);
        let (x, y, z) = (random_point(&mut r, q, 3.0), random_point(&mut r, q, 3.0), random_point(&mut r, q, 3.0));
        let slack = distance(&x, &y) + distance(&y, &z) - distance(&x, &z);
        worst[5] = worst[5].max(-slack);
    }
    ensure!(worst[5] <= 1e-10, "triangle inequality violated by {:e}", worst[5]);

    within(start, Duration::from_secs(10), "manifold suite")?;
    Ok(format!(
        "4×10⁴ cases, max errors: log∘exp {:.1e}, transport {:.1e}/{:.1e}, Poincaré {:.1e}/{:.1e}",
        worst[0], worst[2], worst[3], worst[4], worst[6]
    ))
}

// ------------------------------------------------------------------------ 2

fn mc_spec(l: usize, variance: f64, seed: u64) -> KernelSpec {
    let mut s = KernelSpec::new(KernelKind::HyperbolicL2Mc, 1.0, variance);
    s.mc_samples = l;
    s.mc_seed = seed;
    s
}

fn kernel_psd() -> Outcome {
    let mut r = rng(2);
    let pts: Vec<DVector<f64>> = (0..100).map(|_| random_point(&mut r, 2, 1.5).into_coords()).collect();
    let mut report = Vec::new();
    for l in [10, 100, 3000] {
        for variance in [1.0, 2.5] {
            let start = Instant::now();
            let k = LatentKernel::new(&mc_spec(l, variance, 7), 2).unwrap().cross(&pts, &pts);
            let m = min_eigenvalue(&k);
            ensure!(m >= -1e-6 * variance, "L={l} σ²={variance}: min eigenvalue {m:e}");
            if l == 3000 {
                within(start, Duration::from_secs(30), "L=3000 Gram")?;
            }
            if variance == 1.0 {
                report.push(format!("L={l}: {m:.1e}"));
            }
        }
    }
    Ok(format!("min eigenvalues {}", report.join(", ")))
}

// ------------------------------------------------------------------------ 3

fn at_distance(x: &LorentzPoint, rho: f64, r: &mut ChaCha8Rng) -> DVector<f64> {
    x.exp(&random_tangent(r, x, rho)).into_coords()
}

fn kernel_isotropy() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    for sampling in [FeatureSampling::Stratified, FeatureSampling::Iid] {
        let spec = KernelSpec { mc_sampling: sampling, ..mc_spec(100_000, 1.0, 3) };
        let k = LatentKernel::new(&spec, 2).unwrap();
        let mut r = rng(3);
        let a = LorentzPoint::origin(2);
        let b = LorentzPoint::lift(&[0.6, -0.4]);
        let mut worst = 0.0f64;
        for rho in [0.3, 1.3, 3.0] {
            let k1 = k.eval(a.coords(), &at_distance(&a, rho, &mut r));
            let k2 = k.eval(b.coords(), &at_distance(&b, rho, &mut r));
            let rel = (k1 - k2).abs() / k1.abs().max(k2.abs());
            // The i.i.d. estimator is reported for comparison; only the shipped
            // default is held to the 1% bound.
            if sampling == FeatureSampling::default() {
                ensure!(rel < 0.01, "{sampling:?} ρ={rho}: {k1} vs {k2} ({:.2}%)", 100.0 * rel);
            }
            worst = worst.max(rel);
        }
        lines.push(format!("{sampling:?} {:.2e}%", 100.0 * worst));
    }
    within(start, Duration::from_secs(60), "isotropy")?;
    Ok(format!("max relative gap: {} (i.i.d. not gated)", lines.join(", ")))
}

// ------------------------------------------------------------------------ 4

fn wrapped_normal() -> Outcome {
    let start = Instant::now();
    // Geodesic polar coordinates around the mean: dV = sinh(r) dr dθ on ℒ².
    // Radii are drawn from a Rayleigh proposal wider than the target.
    let mu = LorentzPoint::lift(&[0.4, -0.3]);
    let variance = 0.5;
    let target = WrappedNormal::isotropic(mu.clone(), variance).unwrap();
    let basis = tangent_basis(&mu);
    let s = 1.0;
    let mut r = rng(4);
    let n = 1_000_000;
    let mut total = 0.0;
    for _ in 0..n {
        let u: f64 = r.random_range(f64::MIN_POSITIVE..1.0);
        let rad = s * (-2.0 * u.ln()).sqrt();
        let theta = r.random_range(0.0..2.0 * PI);
        let v = &basis[0] * (rad * theta.cos()) + &basis[1] * (rad * theta.sin());
        let x = mu.exp(&v);
        let proposal = rad / (s * s) * (-rad * rad / (2.0 * s * s)).exp() / (2.0 * PI);
        total += target.log_prob(&x).exp() * rad.sinh() / proposal;
    }
    let integral = total / n as f64;
    ensure!((integral - 1.0).abs() < 0.02, "density integrates to {integral}");

    let q = WrappedNormal::isotropic(LorentzPoint::lift(&[0.2, 0.1]), 0.3).unwrap();
    let self_kl = kl_mc(&q, &q, 256, &mut r).unwrap();
    ensure!(self_kl == 0.0, "KL(q‖q) = {self_kl:e}");

    let o = LorentzPoint::origin(2);
    let s1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.15, 0.15, 0.3]);
    let s2 = DMatrix::from_row_slice(2, 2, &[1.1, -0.3, -0.3, 0.8]);
    let qn = WrappedNormal::new(o.clone(), s1.clone()).unwrap();
    let pn = WrappedNormal::new(o, s2.clone()).unwrap();
    let s2inv = s2.clone().try_inverse().unwrap();
    let closed = 0.5 * ((&s2inv * &s1).trace() - 2.0 + (s2.determinant() / s1.determinant()).ln());
    let (est, se) = kl_mc_with_stderr(&qn, &pn, 50_000, &mut r).unwrap();
    ensure!((est - closed).abs() < 3.0 * se, "KL {est} vs closed form {closed} (SE {se})");

    within(start, Duration::from_secs(60), "wrapped normal")?;
    Ok(format!("∫p = {integral:.4}, KL {est:.4} vs {closed:.4} (SE {se:.1e})"))
}

// ------------------------------------------------------------------------ 5

fn latents(r: &mut ChaCha8Rng, geometry: Geometry, n: usize, q: usize) -> Vec<DVector<f64>> {
    (0..n).map(|_| geometry.from_origin_tangent(&DVector::from_fn(q, |_, _| r.random_range(-1.0..1.0)))).collect()
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checks = 0;
    for instance in 0..20u64 {
        let geometry = [Geometry::Lorentz, Geometry::Euclidean][instance as usize % 2];
        let q = 2 + (instance as usize / 2) % 2;
        let mut r = rng(500 + instance);
        let (graph, data) = synthetic_tree(2, 2, 1, 3, 0.1, &mut r).unwrap();
        let n = data.len();
        let mut kernel = KernelSpec::new(geometry.default_kernel(q), r.random_range(0.6..1.4), r.random_range(0.6..1.4));
        kernel.mc_samples = 400;
        let noise: Vec<f64> = (0..3).map(|_| r.random_range(0.05..0.3)).collect();
        let base = TrainConfig {
            geometry,
            latent_dim: q,
            kernel: Some(kernel.clone()),
            gamma: 3.0,
            gamma_prior: (instance % 3 == 0).then_some(GammaPrior { shape: 2.0, rate: 2.0 }),
            ..TrainConfig::default()
        };

        for regularizer in [
            Regularizer::None,
            Regularizer::Stress,
            Regularizer::Distortion,
            Regularizer::ModifiedDistortion,
            Regularizer::BcStress,
        ] {
            let cfg = TrainConfig { regularizer, ..base.clone() };
            let obj = MapObjective::new(&data, &graph, &cfg).unwrap();
            let x = latents(&mut r, geometry, n, q);
            let w = DMatrix::from_fn(q, n, |_, _| r.random_range(-0.3..0.3));
            let weights = (regularizer == Regularizer::BcStress).then_some(&w);
            let p = obj.pack(&x, weights, &kernel, &noise);
            let ev = obj.eval(&p).map_err(|e| e.to_string())?;
            let c = check_gradient(|p| obj.eval(p).unwrap().total, &p, &ev.grad, 1e-6);
            ensure!(c.rel_error < 1e-4, "instance {instance} {geometry} Q={q} {regularizer:?}: {:e}", c.rel_error);
            worst = worst.max(c.rel_error);
            checks += 1;
        }

        let m = 4;
        let cfg = TrainConfig { mode: TrainMode::Variational, regularizer: Regularizer::Stress, ..base.clone() };
        let obj = ElboObjective::new(&data, &graph, &cfg, m).unwrap();
        let means = latents(&mut r, geometry, n, q);
        let state = VariationalState {
            inducing: latents(&mut r, geometry, m, q),
            q_mean: (0..3).map(|_| DVector::from_fn(m, |_, _| r.random_range(-1.0..1.0))).collect(),
            q_chol: (0..3)
                .map(|_| {
                    DMatrix::from_fn(m, m, |i, j| {
                        if i > j {
                            r.random_range(-0.2..0.2)
                        } else if i == j {
                            r.random_range(0.3..0.8)
                        } else {
                            0.0
                        }
                    })
                })
                .collect(),
            x_std: (0..n).map(|_| DVector::from_fn(q, |_, _| r.random_range(0.05..0.4))).collect(),
        };
        let p = obj.pack(&means, &state, &kernel, &noise);
        let eps = obj.draw(3, &mut r);
        let ev = obj.eval(&p, &eps).map_err(|e| e.to_string())?;
        let c = check_gradient(|p| obj.value(p, &eps).unwrap(), &p, &ev.grad, 1e-6);
        ensure!(c.rel_error < 1e-4, "instance {instance} {geometry} Q={q} ELBO: {:e}", c.rel_error);
        worst = worst.max(c.rel_error);
        checks += 1;
    }
    within(start, Duration::from_secs(120), "gradient checks")?;
    Ok(format!("{checks} checks on 20 instances, max relative error {worst:.1e}"))
}

// ------------------------------------------------------------------------ 6

fn reference_adam(x0: &[f64], grad: impl Fn(&[f64]) -> Vec<f64>, cfg: AdamConfig, steps: usize) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut m = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    let mut out = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = grad(&x);
        for k in 0..x.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            let mh = m[k] / (1.0 - cfg.beta1.powi(t as i32));
            let vh = v[k] / (1.0 - cfg.beta2.powi(t as i32));
            x[k] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
        out.push(x.clone());
    }
    out
}

fn optimizer() -> Outcome {
    let grad = |x: &[f64]| vec![2.0 * (x[0] - 1.0) + 0.5 * x[1], 4.0 * x[1].powi(3) + 0.5 * x[0], (3.0 * x[2]).cos() - x[3]];
    let x0 = [2.5, -1.2, 0.3, 0.8];
    let cfg = AdamConfig::with_lr(0.03);
    let reference = reference_adam(&x0, |x| {
        let mut g = grad(x);
        g.push(x[3] - 0.5);
        g
    }, cfg, 100);
    let mut p = ProductParam::euclidean_only(DVector::from_column_slice(&x0));
    let mut state = OptimizerState::new(&p, cfg);
    let mut worst = 0.0f64;
    for want in &reference {
        let mut g = grad(p.euclidean.as_slice());
        g.push(p.euclidean[3] - 0.5);
        state.step(&mut p, &ProductGrad { hyperbolic: vec![], euclidean: DVector::from_vec(g) }).unwrap();
        for k in 0..4 {
            worst = worst.max((p.euclidean[k] - want[k]).abs());
        }
    }
    ensure!(worst <= 1e-12, "trajectory deviates by {worst:e}");

    let mut r = rng(6);
    let mut far = 0.0f64;
    for _ in 0..10 {
        let target = random_point(&mut r, 2, 1.5);
        let mut p = ProductParam::new(vec![random_point(&mut r, 2, 1.5)], DVector::zeros(0));
        let mut state = OptimizerState::new(&p, AdamConfig::with_lr(0.05));
        for _ in 0..1000 {
            let x = &p.hyperbolic[0];
            let g = x.log(&target) * -2.0;
            state.step(&mut p, &ProductGrad { hyperbolic: vec![g], euclidean: DVector::zeros(0) }).unwrap();
        }
        far = far.max(p.hyperbolic[0].distance(&target));
    }
    ensure!(far < 1e-4, "geodesic objective stopped {far:e} from its minimizer");
    Ok(format!("Adam deviation {worst:.1e}, minimizer distance {far:.1e}"))
}

// ------------------------------------------------------------------------ 7

fn table1_trend() -> Outcome {
    let mut lines = Vec::new();
    let (mut hyp, mut euc) = (0.0, 0.0);
    for seed in 0..3 {
        let (graph, data) = tree30(seed);
        let mut s = [0.0; 2];
        for (k, geometry) in [Geometry::Lorentz, Geometry::Euclidean].into_iter().enumerate() {
            let cfg = TrainConfig { geometry, latent_dim: 2, seed, ..TrainConfig::default() };
            let start = Instant::now();
            let model = train(&data, &graph, &cfg).map_err(|e| e.to_string())?;
            within(start, Duration::from_secs(300), &format!("{geometry} seed {seed}"))?;
            let random = initial_latents(&data, &graph, &TrainConfig { init: InitMethod::Random, ..cfg }).unwrap();
            let random = GphlvmModel { latents: random, ..model.clone() };
            let s0 = stress_report(&random, &data, &graph, &[]).unwrap().mean;
            s[k] = stress_report(&model, &data, &graph, &[]).unwrap().mean;
            ensure!(s[k] <= 0.5 * s0, "{geometry} seed {seed}: stress {} vs random init {}", s[k], s0);
        }
        lines.push(format!("seed {seed}: ℒ² {:.3} ℝ² {:.3}", s[0], s[1]));
        hyp += s[0] / 3.0;
        euc += s[1] / 3.0;
    }
    ensure!(hyp < euc, "mean stress ℒ² {hyp} not below ℝ² {euc} ({})", lines.join("; "));
    Ok(format!("mean stress ℒ² {hyp:.3} < ℝ² {euc:.3} ({})", lines.join("; ")))
}

// ------------------------------------------------------------------------ 8

fn gphlvm(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gphlvm"))
        .args(args)
        .env_remove("GPHLVM_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("gphlvm {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn read_table(p: &Path) -> Result<Vec<Vec<f64>>, String> {
    let mut r = csv::Reader::from_path(p).map_err(|e| e.to_string())?;
    r.records()
        .map(|rec| rec.map_err(|e| e.to_string())?.iter().map(|v| v.parse::<f64>().map_err(|e| e.to_string())).collect())
        .collect()
}

fn gamma_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = [0.0, 10.0, 100.0, 1000.0, 10000.0];
    let (mut stress, mut objective) = (vec![0.0; grid.len()], vec![0.0; grid.len()]);
    let mut per_seed = Vec::new();
    for seed in 0..3u64 {
        let d = dir.path().join(format!("seed{seed}"));
        gphlvm(&["gen-data", "--seed", &seed.to_string(), "--out-dir", path(&d)])?;
        let cfg = d.join("sweep.toml");
        std::fs::write(&cfg, format!("graph = 'graph.json'\ndataset = 'data.csv'\n[train]\nseed = {seed}\n"))
            .map_err(|e| e.to_string())?;
        gphlvm(&["gamma-sweep", path(&cfg), "--gammas", "0,10,100,1000,10000", "--seeds", &seed.to_string(), "--out-dir", path(&d)])?;
        let rows = read_table(&d.join("gamma_sweep.csv"))?;
        ensure!(rows.len() == grid.len(), "seed {seed}: {} rows", rows.len());
        for (k, row) in rows.iter().enumerate() {
            ensure!(row[0] == grid[k], "row {k} has gamma {}", row[0]);
            objective[k] += row[1] / 3.0;
            stress[k] += row[2] / 3.0;
        }
        let s: Vec<f64> = rows.iter().map(|r| r[2]).collect();
        per_seed.push(format!("ρ_s{seed} {:.2}", spearman(&grid, &s)));
    }
    let rho = spearman(&grid, &stress);
    ensure!(rho <= -0.9, "Spearman(γ, stress) = {rho} (stress {stress:?})");
    let best = objective.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    ensure!(best == 0, "ℓ_MAP is maximal at γ={} ({objective:?})", grid[best]);
    Ok(format!("Spearman {rho:.2} ({}), ℓ_MAP max at γ=0", per_seed.join(", ")))
}

// ------------------------------------------------------------------------ 9

fn back_constraint_encoding() -> Outcome {
    let (mut hits, mut trials) = (0, 0);
    for seed in 0..5u64 {
        let (graph, data) = synthetic_tree(3, 2, 3, 8, 0.1, &mut rng(900 + seed)).unwrap();
        let mut r = rng(950 + seed);
        let mut held: Vec<usize> = Vec::new();
        while held.len() < 10 {
            let i = r.random_range(0..data.len());
            if !held.contains(&i) {
                held.push(i);
            }
        }
        let train_set = data.filter(|i, _| !held.contains(&i)).unwrap();
        let cfg = TrainConfig { regularizer: Regularizer::BcStress, seed, ..TrainConfig::default() };
        let model = train(&train_set, &graph, &cfg).map_err(|e| e.to_string())?;
        let centroids = class_centroids(&model).map_err(|e| e.to_string())?;
        for &i in &held {
            let class = graph.id(data.classes()[i]);
            let y = data.observations().row(i).transpose();
            let x = encode_new(&model, &y, class).map_err(|e| e.to_string())?;
            let nearest = centroids
                .iter()
                .min_by(|a, b| model.distance(&x, a.1).total_cmp(&model.distance(&x, b.1)))
                .unwrap()
                .0;
            hits += (nearest == class) as usize;
            trials += 1;
        }
    }
    let rate = hits as f64 / trials as f64;
    ensure!(rate >= 0.8, "{hits}/{trials} held-out points nearest their own centroid");
    Ok(format!("{hits}/{trials} held-out points nearest their own class centroid"))
}

// ----------------------------------------------------------------------- 10

fn gaussian_entropy(std: &DVector<f64>) -> f64 {
    0.5 * std.len() as f64 * (2.0 * PI * std::f64::consts::E).ln() + std.iter().map(|s| s.ln()).sum::<f64>()
}

fn variational_consistency() -> Outcome {
    let (graph, data) = synthetic_tree(2, 2, 2, 4, 0.1, &mut rng(10)).unwrap();
    let data = data.filter(|i, _| i < 12).unwrap();
    let mut gaps = Vec::new();
    for (geometry, q) in [(Geometry::Lorentz, 2), (Geometry::Lorentz, 3), (Geometry::Euclidean, 2)] {
        // MAP fit, then a variational state with Z = X, vanishing latent
        // variance and q(u) at its collapsed optimum.
        let cfg = TrainConfig { geometry, latent_dim: q, regularizer: Regularizer::None, gamma: 0.0, iterations: 200, ..TrainConfig::default() };
        let map = train(&data, &graph, &cfg).map_err(|e| e.to_string())?;
        let obj = ElboObjective::new(&data, &graph, &cfg, 12).map_err(|e| e.to_string())?;
        let kernel = map.latent_kernel().map_err(|e| e.to_string())?;
        let (q_mean, q_chol) = obj.collapsed_q(&map.latents, &map.latents, &kernel, &map.noise).map_err(|e| e.to_string())?;
        let x_std = vec![DVector::from_element(q, 1e-10); 12];
        let entropy: f64 = x_std.iter().map(gaussian_entropy).sum();
        let state = VariationalState { inducing: map.latents.clone(), q_mean, q_chol, x_std };
        let model = GphlvmModel { variational: Some(state), ..map };
        let eps = obj.draw(4, &mut rng(11));
        let bound = elbo(&model, &data, &graph, &eps).map_err(|e| e.to_string())? - entropy;
        let target = log_marginal(&model.observations, &model.latents, &kernel, &model.noise, 0.0).map_err(|e| e.to_string())?
            + log_prior(geometry, &model.latents, model.prior_alpha);
        let gap = (bound - target).abs() / target.abs();
        ensure!(gap <= 0.02, "{geometry} Q={q}: bound {bound} vs MAP objective {target}");
        gaps.push(gap);
    }

    let (graph, data) = synthetic_tree(2, 2, 1, 3, 0.1, &mut rng(12)).unwrap();
    let cfg = TrainConfig { mode: TrainMode::Variational, inducing: Some(5), iterations: 300, ..TrainConfig::default() };
    let m = train(&data, &graph, &cfg).map_err(|e| e.to_string())?;
    let avg = |a: usize| m.history[a..a + 50].iter().map(|h| h.objective).sum::<f64>() / 50.0;
    ensure!(avg(250) > avg(0), "ELBO window means {} -> {}", avg(0), avg(250));
    let max_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(format!("degenerate gap ≤ {:.2}%, ELBO {:.2} -> {:.2}", 100.0 * max_gap, avg(0), avg(250)))
}

// ----------------------------------------------------------------------- 11

fn end_to_end_once(root: &Path) -> Result<(), String> {
    let data = root.join("data");
    gphlvm(&["gen-data", "--seed", "5", "--out-dir", path(&data)])?;
    let runs = [
        ("lorentz", "stress", "map"),
        ("lorentz", "bc_stress", "map"),
        ("lorentz", "modified_distortion", "map"),
        ("euclidean", "stress", "map"),
        ("euclidean", "bc_stress", "map"),
        ("euclidean", "modified_distortion", "map"),
        ("lorentz", "stress", "variational"),
    ];
    for (geometry, regularizer, mode) in runs {
        let name = format!("{geometry}_{regularizer}_{mode}");
        let cfg = data.join(format!("{name}.toml"));
        let iterations = if mode == "map" { 200 } else { 100 };
        std::fs::write(
            &cfg,
            format!(
                "graph = 'graph.json'\ndataset = 'data.csv'\nout_dir = '{name}'\n[train]\ngeometry = '{geometry}'\nregularizer = '{regularizer}'\nmode = '{mode}'\niterations = {iterations}\n"
            ),
        )
        .map_err(|e| e.to_string())?;
        gphlvm(&["train", path(&cfg)])?;
        let run = data.join(&name);
        let model = run.join("model.json");
        gphlvm(&["eval", "--model", path(&model), "--dataset", path(&data.join("data.csv")), "--graph", path(&data.join("graph.json")), "--out-dir", path(&run)])?;
        gphlvm(&["interpolate", "--model", path(&model), "--from", "14", "--to", "29", "--out-dir", path(&run)])?;
        if regularizer == "bc_stress" {
            gphlvm(&["embed", "--model", path(&model), "--data", path(&data.join("data.csv")), "--graph", path(&data.join("graph.json")), "--out", path(&run.join("embedding.csv"))])?;
        }
    }
    Ok(())
}

fn files(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn end_to_end_cli() -> Outcome {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    end_to_end_once(a.path())?;
    end_to_end_once(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure!(fa == fb, "runs produced different file sets");
    for f in &fa {
        let same = std::fs::read(a.path().join(f)).unwrap() == std::fs::read(b.path().join(f)).unwrap();
        ensure!(same, "{} differs between repeat runs", f.display());
    }
    within(start, Duration::from_secs(15 * 60), "end-to-end runs")?;
    Ok(format!("7 pipelines ×2, {} files byte-identical", fa.len()))
}

// ----------------------------------------------------------------------- 12

fn geodesic_trajectories() -> Outcome {
    let (graph, data) = tree30(12);
    let cfg = TrainConfig { latent_dim: 2, iterations: 300, ..TrainConfig::default() };
    let model = train(&data, &graph, &cfg).map_err(|e| e.to_string())?;
    let g = model.geometry;
    let (a, b) = (model.latents[14].clone(), model.latents[29].clone());
    let steps = 100;
    let geo = interpolate(&model, &a, &b, steps, DEFAULT_DT).map_err(|e| e.to_string())?;

    let d = model.distance(&a, &b);
    let spacing = geo.latent_path.windows(2).map(|w| (model.distance(&w[0], &w[1]) - d / 99.0).abs()).fold(0.0, f64::max);
    ensure!(spacing < 1e-8, "step lengths deviate by {spacing:e}");
    ensure!(geo.latent_path[0] == a && geo.latent_path[steps - 1] == b, "endpoints moved");
    let predictor = model.predictor().map_err(|e| e.to_string())?;
    ensure!(geo.decoded.row(0).transpose() == predictor.decode(&a).0, "decoded start differs");
    ensure!(geo.decoded.row(steps - 1).transpose() == predictor.decode(&b).0, "decoded end differs");

    // Same endpoints, with a smooth bump of geodesic radius 0.2 pushed
    // sideways over steps 32..=66, peaking at step 49.
    let normal = {
        let x = LorentzPoint::new(a.clone()).unwrap();
        let dir = x.log(&LorentzPoint::new(b.clone()).unwrap());
        let basis = tangent_basis(&x);
        let c: Vec<f64> = basis.iter().map(|e| mdot(e, &dir)).collect();
        &basis[0] * -c[1] + &basis[1] * c[0]
    };
    let normal = &normal / mdot(&normal, &normal).sqrt();
    let x0 = LorentzPoint::new(a.clone()).unwrap();
    let detour: Vec<DVector<f64>> = geo
        .latent_path
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let s = (k as f64 - 32.0) / 34.0;
            if !(0.0..=1.0).contains(&s) {
                return p.clone();
            }
            let here = LorentzPoint::new(p.clone()).unwrap();
            let push = x0.transport(&here, &normal) * (0.2 * (PI * s).sin().powi(2));
            here.exp(&push).into_coords()
        })
        .collect();
    let bumped = Trajectory::along(&model, detour, DEFAULT_DT).map_err(|e| e.to_string())?;
    let peak = bumped.latent_path.iter().zip(&geo.latent_path).map(|(p, q)| g.distance(p, q)).fold(0.0, f64::max);
    ensure!((peak - 0.2).abs() < 1e-6, "detour radius {peak}");
    let (jg, jd) = (jerkiness(&geo).map_err(|e| e.to_string())?, jerkiness(&bumped).map_err(|e| e.to_string())?);
    ensure!(jg <= jd, "geodesic jerkiness {jg:e} exceeds detour {jd:e}");
    Ok(format!("spacing error {spacing:.1e}, jerkiness geodesic {jg:.3e} ≤ detour {jd:.3e}"))
}

// ------------------------------------------------------------------- runner

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "manifold suite", manifold_suite),
        (2, "MC kernel PSD", kernel_psd),
        (3, "MC kernel isotropy", kernel_isotropy),
        (4, "wrapped normal", wrapped_normal),
        (5, "gradient checks", gradient_checks),
        (6, "optimizer reduction", optimizer),
        (7, "stress trend ℒ² vs ℝ²", table1_trend),
        (8, "gamma sweep trend", gamma_sweep),
        (9, "back-constraint encoding", back_constraint_encoding),
        (10, "variational consistency", variational_consistency),
        (11, "end-to-end CLI", end_to_end_cli),
        (12, "geodesic trajectories", geodesic_trajectories),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
