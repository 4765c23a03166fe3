//! Compressed sparse rows and a banded LU factorization with partial
//! pivoting, sized for meridian grids (bandwidth about `nθ`).

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("matrix is singular at column {0}")]
    Singular(usize),
    #[error("dimension mismatch: matrix {matrix}, vector {vector}")]
    Dimension { matrix: usize, vector: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row entries; duplicates are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                debug_assert!(c < n);
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Adds `d[i]` to the diagonal of row `i`, inserting entries as needed.
    pub fn add_diagonal(&self, d: &[f64]) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<_> = self.row(i).collect();
                if d[i] != 0.0 {
                    row.push((i, d[i]));
                }
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// `(lower, upper)` bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }
}

/// Banded LU with row interchanges, stored column-major with `kl` extra
/// rows for fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        self.kv + i - j + j * self.ldab
    }

    pub fn factor(m: &CsrMatrix) -> Result<Self, LinearError> {
        let n = m.n();
        let (kl, ku) = m.bandwidths();
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            kv,
            ldab,
            ab: vec![0.0; ldab * n],
            piv: vec![0; n],
        };
        for i in 0..n {
            for (c, v) in m.row(i) {
                let k = lu.at(i, c);
                lu.ab[k] += v;
            }
        }
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = lu.ab[lu.at(j, j)].abs();
            for t in 1..=km {
                let a = lu.ab[lu.at(j + t, j)].abs();
                if a > best {
                    best = a;
                    jp = t;
                }
            }
            lu.piv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(LinearError::Singular(j));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (a, b) = (lu.at(j, c), lu.at(j + jp, c));
                    lu.ab.swap(a, b);
                }
            }
            if km > 0 {
                let pivot = lu.ab[lu.at(j, j)];
                let base = lu.at(j + 1, j);
                for t in 0..km {
                    lu.ab[base + t] /= pivot;
                }
                for c in j + 1..=ju {
                    let ajc = lu.ab[lu.at(j, c)];
                    if ajc != 0.0 {
                        let col = lu.at(j + 1, c);
                        for t in 0..km {
                            lu.ab[col + t] -= lu.ab[base + t] * ajc;
                        }
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &mut [f64]) -> Result<(), LinearError> {
        if b.len() != self.n {
            return Err(LinearError::Dimension { matrix: self.n, vector: b.len() });
        }
        let n = self.n;
        for j in 0..n {
            let l = self.piv[j];
            if l != j {
                b.swap(l, j);
            }
            let lm = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                let base = self.at(j + 1, j);
                for t in 0..lm {
                    b[j + 1 + t] -= self.ab[base + t] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[self.at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(self.kv)..j {
                    b[i] -= self.ab[self.at(i, j)] * bj;
                }
            }
        }
        Ok(())
    }
}
