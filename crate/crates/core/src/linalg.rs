//! One-sided Jacobi singular value decomposition.
//!
//! Deterministic, dependency-free, and accurate enough for factorizing dense
//! layers at desk scale. Rotations stop when every column pair's off-diagonal
//! mass falls below 1e-10 of its norms, capped at 60 sweeps.

const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 60;

/// Thin SVD of an m x n matrix: `a = u * diag(sigma) * vt` with
/// `k = min(m, n)` singular values sorted descending. `u` is m x k and `vt`
/// is k x n, both row-major.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Vec<f64>,
    pub sigma: Vec<f64>,
    pub vt: Vec<f64>,
    pub m: usize,
    pub n: usize,
}

pub fn svd(a: &[f64], m: usize, n: usize) -> Svd {
    assert_eq!(a.len(), m * n, "matrix data does not match its dimensions");
    if m < n {
        // Decompose the transpose and swap the factors.
        let mut at = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                at[j * m + i] = a[i * n + j];
            }
        }
        let t = svd_tall(&at, n, m);
        // a = (u_t sigma vt_t)^T = v_t sigma u_t^T
        let k = t.sigma.len();
        let mut u = vec![0.0; m * k]; // columns of v_t
        for i in 0..m {
            for j in 0..k {
                u[i * k + j] = t.vt[j * m + i];
            }
        }
        let mut vt = vec![0.0; k * n]; // rows are columns of u_t
        for j in 0..k {
            for i in 0..n {
                vt[j * n + i] = t.u[i * k + j];
            }
        }
        return Svd {
            u,
            sigma: t.sigma,
            vt,
            m,
            n,
        };
    }
    svd_tall(a, m, n)
}

/// Jacobi on a tall (or square) matrix, m >= n.
fn svd_tall(a: &[f64], m: usize, n: usize) -> Svd {
    // Column-major working copies.
    let mut u_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|i| a[i * n + j]).collect())
        .collect();
    let mut v_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut converged = true;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha: f64 = u_cols[p].iter().map(|x| x * x).sum();
                let beta: f64 = u_cols[q].iter().map(|x| x * x).sum();
                let gamma: f64 = u_cols[p].iter().zip(&u_cols[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let up = u_cols[p][i];
                    let uq = u_cols[q][i];
                    u_cols[p][i] = c * up - s * uq;
                    u_cols[q][i] = s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v_cols[p][i];
                    let vq = v_cols[q][i];
                    v_cols[p][i] = c * vp - s * vq;
                    v_cols[q][i] = s * vp + c * vq;
                }
            }
        }
        if converged {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = u_cols
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let mut u = vec![0.0; m * n];
    let mut vt = vec![0.0; n * n];
    let mut sigma = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        let norm = norms[j];
        sigma.push(norm);
        for i in 0..m {
            u[i * n + slot] = if norm > 1e-300 {
                u_cols[j][i] / norm
            } else {
                0.0
            };
        }
        for i in 0..n {
            vt[slot * n + i] = v_cols[j][i];
        }
    }
    Svd { u, sigma, vt, m, n }
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Rebuild the matrix keeping only the top `k` singular triplets.
    pub fn reconstruct(&self, k: usize) -> Vec<f64> {
        let k = k.min(self.sigma.len());
        let full = self.sigma.len();
        let mut out = vec![0.0; self.m * self.n];
        for i in 0..self.m {
            for j in 0..self.n {
                let mut acc = 0.0;
                for r in 0..k {
                    acc += self.u[i * full + r] * self.sigma[r] * self.vt[r * self.n + j];
                }
                out[i * self.n + j] = acc;
            }
        }
        out
    }

    /// The two chained factors of a rank-`k` truncation:
    /// `first = diag(sigma_k) * vt_k` (k x n) applied before
    /// `second = u_k` (m x k).
    pub fn low_rank_factors(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let k = k.min(self.sigma.len());
        let full = self.sigma.len();
        let mut first = vec![0.0; k * self.n];
        for r in 0..k {
            for j in 0..self.n {
                first[r * self.n + j] = self.sigma[r] * self.vt[r * self.n + j];
            }
        }
        let mut second = vec![0.0; self.m * k];
        for i in 0..self.m {
            for r in 0..k {
                second[i * k + r] = self.u[i * full + r];
            }
        }
        (first, second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..m * n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    fn frob(a: &[f64]) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn full_rank_reconstruction_is_tight() {
        for (m, n, seed) in [(8, 6, 1), (6, 8, 2), (5, 5, 3)] {
            let a = random_matrix(m, n, seed);
            let d = svd(&a, m, n);
            let back = d.reconstruct(d.rank());
            for (x, y) in a.iter().zip(&back) {
                assert!((x - y).abs() < 1e-9, "({m}x{n}) {x} vs {y}");
            }
        }
    }

    #[test]
    fn singular_vectors_are_orthonormal() {
        let (m, n) = (9, 5);
        let a = random_matrix(m, n, 4);
        let d = svd(&a, m, n);
        let k = d.rank();
        for p in 0..k {
            for q in 0..k {
                let dot_u: f64 = (0..m).map(|i| d.u[i * k + p] * d.u[i * k + q]).sum();
                let dot_v: f64 = (0..n).map(|i| d.vt[p * n + i] * d.vt[q * n + i]).sum();
                let want = if p == q { 1.0 } else { 0.0 };
                assert!((dot_u - want).abs() < 1e-8, "u[{p}].u[{q}] = {dot_u}");
                assert!((dot_v - want).abs() < 1e-8, "v[{p}].v[{q}] = {dot_v}");
            }
        }
    }

    #[test]
    fn singular_values_carry_the_frobenius_energy() {
        let (m, n) = (7, 7);
        let a = random_matrix(m, n, 5);
        let d = svd(&a, m, n);
        let energy: f64 = d.sigma.iter().map(|s| s * s).sum();
        let frob2 = frob(&a).powi(2);
        assert!((energy - frob2).abs() / frob2 < 1e-10);
        // Sorted descending.
        for w in d.sigma.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn rank_one_matrix_reconstructs_exactly_at_k_one() {
        let (m, n) = (6, 4);
        let mut rng = Rng::new(6);
        let u: Vec<f64> = (0..m).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let a: Vec<f64> = (0..m * n).map(|idx| u[idx / n] * v[idx % n]).collect();
        let d = svd(&a, m, n);
        assert!(d.sigma[1] < 1e-10, "second singular value {}", d.sigma[1]);
        let back = d.reconstruct(1);
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn truncation_error_matches_tail_energy() {
        // Eckart-Young: the Frobenius error of the best rank-k approximation
        // is the root of the discarded singular values' energy.
        let (m, n, k) = (8, 6, 3);
        let a = random_matrix(m, n, 7);
        let d = svd(&a, m, n);
        let back = d.reconstruct(k);
        let err: f64 = a
            .iter()
            .zip(&back)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let tail: f64 = d.sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((err - tail).abs() < 1e-4, "err {err}, tail {tail}");
    }

    #[test]
    fn low_rank_factors_compose_to_the_truncation() {
        let (m, n, k) = (6, 9, 4);
        let a = random_matrix(m, n, 8);
        let d = svd(&a, m, n);
        let (first, second) = d.low_rank_factors(k);
        // second (m x k) * first (k x n) == reconstruct(k)
        let want = d.reconstruct(k);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for r in 0..k {
                    acc += second[i * k + r] * first[r * n + j];
                }
                assert!((acc - want[i * n + j]).abs() < 1e-9);
            }
        }
    }
}
