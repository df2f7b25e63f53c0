use nalgebra::{DMatrix, SymmetricEigen};

/// Generalized Gauss–Laguerre rule for the weight `t^alpha e^{-t}` on
/// `[0, inf)` via Golub–Welsch. Weights are normalized to sum to one.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Vec<(f64, f64)> {
    assert!(n >= 1 && alpha > -1.0);
    let mut j = DMatrix::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        j[(k, k)] = 2.0 * kf + alpha + 1.0;
        if k + 1 < n {
            let off = ((kf + 1.0) * (kf + 1.0 + alpha)).sqrt();
            j[(k, k + 1)] = off;
            j[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut out: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    let total: f64 = out.iter().map(|p| p.1).sum();
    for p in &mut out {
        p.1 /= total;
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
