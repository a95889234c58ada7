use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Inverse-iteration sweeps per eigenpair before giving up.
pub const MAX_INVERSE_ITERATIONS: usize = 8;
/// Residual target of inverse iteration, relative to |v|∞.
pub const STRICT_RESIDUAL: f64 = 1e-8;
/// Bisection steps per eigenvalue.
const MAX_BISECTIONS: usize = 256;

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    diagonal: Vec<f64>,
    off_diagonal: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diagonal: Vec<f64>, off_diagonal: Vec<f64>) -> Result<Self> {
        if diagonal.is_empty() || off_diagonal.len() + 1 != diagonal.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "tridiagonal needs n diagonal and n-1 off-diagonal entries, got {} and {}",
                diagonal.len(),
                off_diagonal.len()
            )));
        }
        if let Some(index) = diagonal
            .iter()
            .chain(&off_diagonal)
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { index });
        }
        Ok(SymTridiag {
            diagonal,
            off_diagonal,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.off_diagonal
    }

    /// Adds `c` to every diagonal entry.
    pub fn shifted(&self, c: f64) -> Self {
        SymTridiag {
            diagonal: self.diagonal.iter().map(|d| d + c).collect(),
            off_diagonal: self.off_diagonal.clone(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut y = self.diagonal[i] * x[i];
                if i > 0 {
                    y += self.off_diagonal[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    y += self.off_diagonal[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    pub fn norm_inf(&self) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.diagonal[i].abs();
                if i > 0 {
                    s += self.off_diagonal[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off_diagonal[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off_diagonal[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off_diagonal[i].abs();
            }
            lo = lo.min(self.diagonal[i] - r);
            hi = hi.max(self.diagonal[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `lambda` (Sturm sequence).
    pub fn count_below(&self, lambda: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.dim() {
            let b2 = if i > 0 {
                let b = self.off_diagonal[i - 1];
                b * b
            } else {
                0.0
            };
            d = (self.diagonal[i] - lambda) - b2 / d;
            // a zero pivot is treated as a tiny negative one
            if d.abs() < tiny {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k` lowest eigenvalues in ascending order, by bisection.
    pub fn lowest_eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.dim() {
            return Err(Error::TooManyStates {
                requested: k,
                dimension: self.dim(),
            });
        }
        let (glo, ghi) = self.gershgorin();
        let scale = glo.abs().max(ghi.abs()).max(f64::MIN_POSITIVE);
        let mut out = Vec::with_capacity(k);
        let mut floor = glo;
        for i in 0..k {
            let (mut lo, mut hi) = (floor, ghi);
            let mut converged = false;
            for _ in 0..MAX_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if hi - lo <= 4.0 * f64::EPSILON * scale || mid == lo || mid == hi {
                    converged = true;
                    break;
                }
                if self.count_below(mid) > i {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if !converged {
                return Err(Error::NoConvergence { pair: i });
            }
            let lambda = 0.5 * (lo + hi);
            out.push(lambda);
            floor = lo;
        }
        Ok(out)
    }

    /// Lowest `k` eigenpairs; vectors have unit Euclidean norm.
    ///
    /// Eigenvalues come from bisection, vectors from inverse iteration with
    /// Gram-Schmidt against earlier vectors of nearby eigenvalues. Iteration
    /// stops once `|Tv - λv|∞ <= 1e-8 |v|∞`; on very fine grids that is below
    /// what doubles can represent (`~ε|T|∞`), so the best iterate is accepted
    /// if it reaches [`SymTridiag::residual_tolerance`].
    pub fn lowest_eigenpairs(&self, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let values = self.lowest_eigenvalues(k)?;
        let n = self.dim();
        let norm = self.norm_inf().max(f64::MIN_POSITIVE);
        let tol = self.residual_tolerance();
        let cluster = 1e-3 * norm;
        let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
        for (idx, &lambda) in values.iter().enumerate() {
            // isolated eigenvalues: twisted factorisation, refined twice
            let isolated = |l: f64| {
                let left = idx == 0 || l - values[idx - 1] >= cluster;
                let right = idx + 1 == values.len() || values[idx + 1] - l >= cluster;
                left && right
            };
            let twisted = self.twisted_pair(lambda, 2).filter(|(mu, _)| isolated(*mu));
            if let Some((mu, w)) = &twisted {
                if self.relative_residual(*mu, w) <= STRICT_RESIDUAL {
                    pairs.push((*mu, w.clone()));
                    continue;
                }
            }
            let lu = TridiagLu::factor(self, lambda, norm);
            // clustered pairs need a generic start so orthogonalisation works
            let mut v = twisted.map(|(_, w)| w).unwrap_or_else(|| start_vector(n, idx));
            let mut best: Option<(f64, Vec<f64>)> = None;
            for _ in 0..MAX_INVERSE_ITERATIONS {
                let rhs = v.clone();
                lu.solve(&mut v);
                // one step of iterative refinement strips the roundoff the
                // nearly singular solve leaves in well-conditioned directions
                let tv = self.apply(&v);
                let mut r: Vec<f64> = (0..n).map(|i| rhs[i] - (tv[i] - lambda * v[i])).collect();
                lu.solve(&mut r);
                v.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
                for (mu, w) in pairs.iter() {
                    if (lambda - mu).abs() < cluster {
                        let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(w).for_each(|(a, b)| *a -= dot * b);
                    }
                }
                let nrm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if !(nrm > 0.0 && nrm.is_finite()) {
                    return Err(Error::NoConvergence { pair: idx });
                }
                v.iter_mut().for_each(|a| *a /= nrm);
                let rel = self.relative_residual(lambda, &v);
                if best.as_ref().is_none_or(|(r, _)| rel < *r) {
                    best = Some((rel, v.clone()));
                }
                if rel <= STRICT_RESIDUAL {
                    break;
                }
            }
            match best {
                Some((rel, v)) if rel <= tol => pairs.push((lambda, v)),
                _ => return Err(Error::NoConvergence { pair: idx }),
            }
        }
        Ok(pairs)
    }

    /// Eigenpair near `lambda` from the twisted factorisation
    /// `T − λI = N_k Δ N_kᵀ`, twisted where |γ_k| is smallest, so that
    /// `(T − λI)v = γ_k e_k`. Each round moves λ by the Rayleigh correction
    /// `γ_k / |v|²` (with `v_k = 1`). Returns λ and a unit vector.
    fn twisted_pair(&self, lambda: f64, rounds: usize) -> Option<(f64, Vec<f64>)> {
        let n = self.dim();
        let (a, b) = (&self.diagonal, &self.off_diagonal);
        let tiny = f64::EPSILON * self.norm_inf().max(f64::MIN_POSITIVE);
        let guard = |d: f64| if d.abs() < tiny { tiny.copysign(d) } else { d };
        let mut fwd = vec![0.0; n];
        let mut bwd = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut lambda = lambda;
        for round in 0..=rounds {
            fwd[0] = guard(a[0] - lambda);
            for i in 1..n {
                fwd[i] = guard(a[i] - lambda - b[i - 1] * b[i - 1] / fwd[i - 1]);
            }
            bwd[n - 1] = guard(a[n - 1] - lambda);
            for i in (0..n - 1).rev() {
                bwd[i] = guard(a[i] - lambda - b[i] * b[i] / bwd[i + 1]);
            }
            let gamma = |m: usize| fwd[m] + bwd[m] - (a[m] - lambda);
            let k = (0..n).min_by(|&i, &j| gamma(i).abs().total_cmp(&gamma(j).abs()))?;
            let g = gamma(k);
            v[k] = 1.0;
            for i in (0..k).rev() {
                v[i] = -b[i] * v[i + 1] / fwd[i];
            }
            for i in k + 1..n {
                v[i] = -b[i - 1] * v[i - 1] / bwd[i];
            }
            let nrm2 = v.iter().map(|x| x * x).sum::<f64>();
            if !(nrm2.is_finite() && nrm2 > 0.0) {
                return None;
            }
            if round < rounds {
                lambda += g / nrm2;
            } else {
                let nrm = nrm2.sqrt();
                v.iter_mut().for_each(|x| *x /= nrm);
            }
        }
        Some((lambda, v))
    }

    /// `|Tv - λv|∞ / |v|∞`.
    pub fn relative_residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let tv = self.apply(v);
        let res = tv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - lambda * b).abs())
            .fold(0.0, f64::max);
        let vmax = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        res / vmax
    }

    /// Accepted residual: `max(1e-8, n ε |T|∞)`, the usual backward-error
    /// scale for a computed eigenvector of an order-n tridiagonal.
    pub fn residual_tolerance(&self) -> f64 {
        (self.dim() as f64 * f64::EPSILON * self.norm_inf()).max(STRICT_RESIDUAL)
    }
}

/// Deterministic, non-degenerate start vector for inverse iteration.
fn start_vector(n: usize, salt: usize) -> Vec<f64> {
    let mut state = 0x9E37_79B9_7F4A_7C15u64 ^ (salt as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            0.5 + (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

/// LU factorisation with partial pivoting of `T - shift I` (LAPACK gttrf layout).
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    fn factor(t: &SymTridiag, shift: f64, norm: f64) -> Self {
        let n = t.dim();
        let mut dl = t.off_diagonal.clone();
        let mut du = t.off_diagonal.clone();
        let mut d: Vec<f64> = t.diagonal.iter().map(|a| a - shift).collect();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swap = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swap[i] = true;
            }
        }
        // exactly singular pivots get a tiny perturbation
        let eps = f64::EPSILON * norm;
        for p in d.iter_mut() {
            if p.abs() < eps {
                *p = if *p < 0.0 { -eps } else { eps };
            }
        }
        TridiagLu {
            dl,
            d,
            du,
            du2,
            swap,
        }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                let temp = b[i] - self.dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn laplace_1d(n: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap()
    }

    #[test]
    fn rejects_inconsistent_lengths() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![], vec![]).is_err());
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let t = laplace_1d(n);
        let vals = t.lowest_eigenvalues(6).unwrap();
        for (j, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "j={j}: {v} vs {exact}");
        }
    }

    #[test]
    fn eigenpairs_satisfy_residual_and_orthogonality() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.01 * (i as f64).sin()).collect();
        let t = SymTridiag::new(diag, vec![-1.0; n - 1]).unwrap();
        let pairs = t.lowest_eigenpairs(10).unwrap();
        for (i, (l, v)) in pairs.iter().enumerate() {
            let tv = t.apply(v);
            let r = tv.iter().zip(v).map(|(a, b)| (a - l * b).abs()).fold(0.0, f64::max);
            assert!(r < 1e-10, "pair {i} residual {r}");
            for (m, (_, w)) in pairs.iter().enumerate().take(i) {
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10, "<{i}|{m}> = {dot}");
            }
        }
    }

    #[test]
    fn handles_exact_degeneracy() {
        // two decoupled identical blocks: every eigenvalue is doubled
        let mut off = vec![-1.0; 9];
        off[4] = 0.0;
        let t = SymTridiag::new(vec![2.0; 10], off).unwrap();
        let pairs = t.lowest_eigenpairs(4).unwrap();
        assert!((pairs[0].0 - pairs[1].0).abs() < 1e-12);
        let dot: f64 = pairs[0].1.iter().zip(&pairs[1].1).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn default_resolution_meets_strict_residual() {
        let n = 1999;
        let h = 2.0 / 2000.0;
        let t = SymTridiag::new(vec![1.0 / (h * h); n], vec![-0.5 / (h * h); n - 1]).unwrap();
        for (l, v) in t.lowest_eigenpairs(4).unwrap() {
            assert!(t.relative_residual(l, &v) <= STRICT_RESIDUAL);
        }
    }

    #[test]
    fn fine_grid_quartic_converges() {
        let m = 20000;
        let h = 2.5 / m as f64;
        let diag: Vec<f64> = (1..m)
            .map(|i| {
                let x = -1.25 + h * i as f64;
                1.0 / (h * h) + 240.0 * x.powi(4) - 120.0 * x * x + 15.0
            })
            .collect();
        let t = SymTridiag::new(diag, vec![-0.5 / (h * h); m - 2]).unwrap();
        let pairs = t.lowest_eigenpairs(2).unwrap();
        for (l, v) in &pairs {
            assert!(t.relative_residual(*l, v) <= 4.0 * f64::EPSILON * t.norm_inf());
        }
        let dot: f64 = pairs[0].1.iter().zip(&pairs[1].1).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10);
        assert!(pairs[0].0 < pairs[1].0 && pairs[1].0 < 15.0);
    }

    #[test]
    fn sturm_count_matches_spectrum() {
        let t = laplace_1d(20);
        assert_eq!(t.count_below(-1.0), 0);
        assert_eq!(t.count_below(5.0), 20);
        let vals = t.lowest_eigenvalues(20).unwrap();
        assert_eq!(t.count_below(0.5 * (vals[6] + vals[7])), 7);
    }

    #[test]
    fn too_many_states() {
        assert!(matches!(
            laplace_1d(4).lowest_eigenvalues(5),
            Err(Error::TooManyStates { .. })
        ));
    }
}
