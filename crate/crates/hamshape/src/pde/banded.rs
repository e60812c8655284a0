//! Symmetric banded matrices and their Cholesky factorization.
//!
//! The stiffness-plus-mass matrix of a Lagrange space on a structured
//! rectangle mesh couples only dofs whose lexicographic indices differ by at
//! most one row of nodes, so it fits in a narrow band. Storing the lower band
//! row by row gives contiguous inner loops for the factorization, whose cost
//! is `O(n·bw²)`; every later solve is a cheap `O(n·bw)` pair of triangular
//! sweeps. One factorization therefore serves every right-hand side met
//! during an optimization run.

use super::PdeError;

/// Symmetric matrix stored as its lower band: entry `(i, j)` with
/// `j ≤ i ≤ j + bw` lives at `data[i·(bw+1) + (i−j)]`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    /// Zero matrix with `n` rows and lower bandwidth `bw`.
    pub fn zeros(n: usize, bw: usize) -> Self {
        assert!(n > 0);
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Adds `v` to the lower-triangle entry `(i, j)`; callers scatter each
    /// symmetric pair once, with `j ≤ i`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i, "scatter the lower triangle: ({i}, {j})");
        assert!(i - j <= self.bw, "entry ({i}, {j}) falls outside the band");
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    /// Matrix-vector product using the band symmetry (test oracle, not a hot
    /// path).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let w = self.bw + 1;
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            for d in 0..=self.bw.min(i) {
                let v = self.data[i * w + d];
                if v == 0.0 {
                    continue;
                }
                let j = i - d;
                y[i] += v * x[j];
                if d > 0 {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Replaces row and column `i` by the identity row, decoupling the dof so
    /// a boundary value can be imposed through the right-hand side.
    pub fn eliminate_dof(&mut self, i: usize) {
        assert!(i < self.n);
        let w = self.bw + 1;
        for d in 1..=self.bw.min(i) {
            self.data[i * w + d] = 0.0;
        }
        for k in i + 1..=(i + self.bw).min(self.n - 1) {
            self.data[k * w + (k - i)] = 0.0;
        }
        self.data[i * w] = 1.0;
    }

    /// Factors the matrix as `L·Lᵀ` in place, consuming it; fails with the
    /// offending row if a pivot is not strictly positive.
    pub fn cholesky(mut self) -> Result<BandedCholesky, PdeError> {
        let w = self.bw + 1;
        for i in 0..self.n {
            let k0 = i.saturating_sub(self.bw);
            let (head, tail) = self.data.split_at_mut(i * w);
            let row_i = &mut tail[..w];
            for j in k0..i {
                // L[i,j] = (A[i,j] − Σ_{k<j} L[i,k]·L[j,k]) / L[j,j]; both
                // factors of the sum sit in reversed contiguous runs of their
                // band rows, which keeps this inner loop vectorizable.
                let d = i - j;
                let row_j = &head[j * w..(j + 1) * w];
                let m = j - k0;
                let mut s = row_i[d];
                for t in 1..=m {
                    s -= row_i[d + t] * row_j[t];
                }
                row_i[d] = s / row_j[0];
            }
            let mut s = row_i[0];
            for t in 1..=(i - k0) {
                s -= row_i[t] * row_i[t];
            }
            if !(s.is_finite() && s > 0.0) {
                return Err(PdeError::NotPositiveDefinite { row: i, pivot: s });
            }
            row_i[0] = s.sqrt();
        }
        Ok(BandedCholesky { n: self.n, bw: self.bw, data: self.data })
    }
}

/// Lower-banded Cholesky factor; solves `L·Lᵀ·x = b` by two triangular
/// sweeps.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    /// Number of rows.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves the factored system for one right-hand side.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let w = self.bw + 1;
        let mut x = b.to_vec();
        for i in 0..self.n {
            let k0 = i.saturating_sub(self.bw);
            let mut s = x[i];
            for k in k0..i {
                s -= self.data[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.data[i * w];
        }
        for i in (0..self.n).rev() {
            let jmax = (i + self.bw).min(self.n - 1);
            let mut s = x[i];
            for j in i + 1..=jmax {
                s -= self.data[j * w + (j - i)] * x[j];
            }
            x[i] = s / self.data[i * w];
        }
        x
    }
}
