use crate::error::{Error, Result};

use super::{dot, norm};

/// Compressed sparse row matrix assembled from (row, col, value) triplets.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Zero matrix with the given sorted, duplicate-free column lists.
    pub fn from_pattern(pattern: &[Vec<usize>]) -> Self {
        let n = pattern.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for row in pattern {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Adds to an entry that exists in the pattern; panics otherwise.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let row = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        let k = row.binary_search(&c).expect("entry outside sparsity pattern");
        self.vals[self.row_ptr[r] + k] += v;
    }

    /// Replaces row and column `i` by the identity row, keeping symmetry.
    pub fn set_identity_row(&mut self, i: usize) {
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            let c = self.cols[k];
            self.vals[k] = if c == i { 1.0 } else { 0.0 };
            if c != i {
                let row = &self.cols[self.row_ptr[c]..self.row_ptr[c + 1]];
                if let Ok(kk) = row.binary_search(&i) {
                    self.vals[self.row_ptr[c] + kk] = 0.0;
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[i] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PcgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients. Converged when the true
/// relative residual drops below `tol`.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, PcgReport)> {
    let n = a.dim();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((
            x,
            PcgReport {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let dinv: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        a.mul_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::Solver(format!("CG breakdown at iteration {it} (pᵀAp = {pq:e})")));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        let rel = norm(&r) / bn;
        if rel < tol {
            // Confirm against the true residual; recursion drift can fake convergence.
            let ax = a.mul(&x);
            let true_rel = norm(&ax.iter().zip(b).map(|(u, v)| v - u).collect::<Vec<_>>()) / bn;
            if true_rel < tol {
                return Ok((
                    x,
                    PcgReport {
                        iterations: it,
                        relative_residual: true_rel,
                    },
                ));
            }
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
        }
        for i in 0..n {
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!("CG did not reach relative residual {tol:e} in {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.mul(&[1.0, 1.0]), vec![3.0, 3.0]);
        assert_eq!(a.diagonal(), vec![3.0, 4.0]);
    }

    #[test]
    fn pattern_assembly_matches_triplets() {
        let pattern = vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]];
        let mut a = CsrMatrix::from_pattern(&pattern);
        let t = vec![(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0), (1, 2, -1.0), (2, 1, -1.0), (2, 2, 2.0)];
        for &(r, c, v) in &t {
            a.add(r, c, v);
        }
        let b = CsrMatrix::from_triplets(3, t);
        assert_eq!(a.mul(&[1.0, 2.0, 3.0]), b.mul(&[1.0, 2.0, 3.0]));
        a.set_identity_row(1);
        assert_eq!(a.mul(&[1.0, 2.0, 3.0]), vec![2.0, 2.0, 6.0]);
    }

    #[test]
    fn pcg_solves_poisson() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let b = vec![1.0; n];
        let (x, rep) = pcg(&a, &b, 1e-12, 1000).unwrap();
        assert!(rep.relative_residual < 1e-12);
        // u'' = -1 with u(0)=u(n+1)=0: u_i = i(n+1-i)/2
        let i = 10;
        let exact = ((i + 1) * (n - i)) as f64 / 2.0;
        assert!((x[i] - exact).abs() < 1e-8 * exact);
    }
}
