use crate::error::{Error, Result};

/// Symmetric positive definite matrix in lower band storage with an
/// optional symmetric permutation applied on the way in and out.
///
/// Row `i` of the permuted matrix keeps entries `j ∈ [i − bw, i]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    /// `perm[original] = permuted`
    perm: Vec<usize>,
    data: Vec<f64>,
    factored: bool,
}

impl BandedSpd {
    /// `perm` maps original indices to band positions; pass `None` for identity.
    pub fn new(n: usize, bandwidth: usize, perm: Option<Vec<usize>>) -> Self {
        let perm = perm.unwrap_or_else(|| (0..n).collect());
        debug_assert_eq!(perm.len(), n);
        let bw = bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            bw,
            perm,
            data: vec![0.0; n * (bw + 1)],
            factored: false,
        }
    }

    /// Smallest bandwidth able to hold every pair of indices that share a group
    /// (for example the DOFs of one element) under `perm`.
    pub fn bandwidth_for<'a>(perm: &[usize], groups: impl IntoIterator<Item = &'a [usize]>) -> usize {
        let mut bw = 0;
        for g in groups {
            let (mut lo, mut hi) = (usize::MAX, 0);
            for &d in g {
                lo = lo.min(perm[d]);
                hi = hi.max(perm[d]);
            }
            if hi >= lo {
                bw = bw.max(hi - lo);
            }
        }
        bw
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        // i >= j, i - j <= bw
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry (r, c) given in original numbering. Only the lower
    /// triangle is stored, so callers add the full symmetric matrix and the
    /// upper half is ignored.
    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let (i, j) = (self.perm[r], self.perm[c]);
        if i >= j {
            debug_assert!(i - j <= self.bw, "entry outside band");
            let s = self.slot(i, j);
            self.data[s] += v;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (mut i, mut j) = (self.perm[r], self.perm[c]);
        if i < j {
            std::mem::swap(&mut i, &mut j);
        }
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Prescribes `value` for original dof `dof`: moves the column into `rhs`,
    /// clears row and column and puts a unit on the diagonal.
    pub fn constrain(&mut self, dof: usize, value: f64, rhs: &mut [f64]) {
        assert!(!self.factored);
        let p = self.perm[dof];
        let mut inv = vec![0usize; 0];
        if value != 0.0 {
            inv = self.inverse_perm();
        }
        // Row p: columns p - bw ..= p - 1
        let lo = p.saturating_sub(self.bw);
        for j in lo..p {
            let s = self.slot(p, j);
            if value != 0.0 {
                rhs[inv[j]] -= self.data[s] * value;
            }
            self.data[s] = 0.0;
        }
        // Column p below the diagonal.
        let hi = (p + self.bw).min(self.n - 1);
        for i in p + 1..=hi {
            let s = self.slot(i, p);
            if value != 0.0 {
                rhs[inv[i]] -= self.data[s] * value;
            }
            self.data[s] = 0.0;
        }
        let s = self.slot(p, p);
        self.data[s] = 1.0;
        rhs[dof] = value;
    }

    fn inverse_perm(&self) -> Vec<usize> {
        let mut inv = vec![0; self.n];
        for (o, &p) in self.perm.iter().enumerate() {
            inv[p] = o;
        }
        inv
    }

    /// y = A x in original numbering; only valid before factorization.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        assert!(!self.factored);
        let xp = self.permute(x);
        let mut yp = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[self.slot(i, lo)..=self.slot(i, i)];
            let mut acc = 0.0;
            for (k, &a) in row.iter().enumerate() {
                let j = lo + k;
                acc += a * xp[j];
                if j != i {
                    yp[j] += a * xp[i];
                }
            }
            yp[i] += acc;
        }
        self.unpermute(&yp)
    }

    fn permute(&self, x: &[f64]) -> Vec<f64> {
        let mut xp = vec![0.0; self.n];
        for (o, &p) in self.perm.iter().enumerate() {
            xp[p] = x[o];
        }
        xp
    }

    fn unpermute(&self, xp: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&p| xp[p]).collect()
    }

    /// In-place Cholesky factorization A = L Lᵀ.
    pub fn factor(&mut self) -> Result<()> {
        if self.factored {
            return Ok(());
        }
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                // Row i and row j share columns lo..j; both are contiguous.
                let ri = i * w + (lo + bw - i);
                let rj = j * w + (lo + bw - j);
                let len = j - lo;
                let mut s = self.data[i * w + (j + bw - i)];
                s -= dot_unrolled(&self.data[ri..ri + len], &self.data[rj..rj + len]);
                if j < i {
                    let d = self.data[j * w + bw];
                    self.data[i * w + (j + bw - i)] = s / d;
                } else {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::Solver(format!(
                            "matrix not positive definite at pivot {i} (value {s:e})"
                        )));
                    }
                    self.data[i * w + bw] = s.sqrt();
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves with a factored matrix; `rhs` in original numbering.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert!(self.factored, "factor() first");
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        let mut y = self.permute(rhs);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w + (lo + bw - i)..i * w + bw];
            let s = y[i] - dot_unrolled(row, &y[lo..i]);
            y[i] = s / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            y[i] /= self.data[i * w + bw];
            let yi = y[i];
            let lo = i.saturating_sub(bw);
            let row = &self.data[i * w + (lo + bw - i)..i * w + bw];
            for (k, &l) in row.iter().enumerate() {
                y[lo + k] -= l * yi;
            }
        }
        self.unpermute(&y)
    }
}

#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}
