//! Banded unsymmetric direct solver.
//!
//! The assembled mixed systems are unsymmetric but strongly banded once the
//! unknowns are ordered by their parametric anchor along the patch. Storage and
//! factorization follow the classic general-band scheme: a matrix with `kl`
//! sub- and `ku` super-diagonals is factorized in place with partial pivoting,
//! which fills at most `kl` additional super-diagonals.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("banded matrix is singular at column {0}")]
    Singular(usize),
    #[error("entry ({0},{1}) outside the allocated band (kl={2}, ku={3})")]
    OutOfBand(usize, usize, usize, usize),
}

/// General band matrix with room for pivoting fill-in.
///
/// Entry `(i, j)` with `j - ku <= i <= j + kl` is stored at
/// `data[j * ldab + (i - j + kl + ku)]`; rows `0..kl` of each column are the
/// fill-in workspace used during factorization.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn reset(&mut self) {
        self.data.fill(0.0);
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (i + self.kl + self.ku - j)
    }

    /// Adds `v` to entry `(i, j)`. The entry must lie within the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(
            i + self.ku >= j && j + self.kl >= i,
            "({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// In-place LU factorization with partial pivoting.
    ///
    /// Returns the pivot row chosen at each elimination step. Row swaps are
    /// restricted to the `kl` rows below the diagonal, so the factor `U`
    /// occupies at most `kl + ku` super-diagonals (pre-allocated).
    pub fn factor(&mut self) -> Result<Vec<usize>, LinalgError> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let kv = kl + ku; // super-diagonals of U
        let mut piv = vec![0usize; n];

        for j in 0..n {
            // Pivot search in column j among rows j..=min(j+kl, n-1).
            let i_max = (j + kl).min(n - 1);
            let mut p = j;
            let mut p_val = self.data[self.idx(j, j)].abs();
            for i in (j + 1)..=i_max {
                let v = self.data[self.idx(i, j)].abs();
                if v > p_val {
                    p_val = v;
                    p = i;
                }
            }
            if p_val == 0.0 {
                return Err(LinalgError::Singular(j));
            }
            piv[j] = p;

            // Swap rows j and p within the band of columns j..=min(j+kv, n-1).
            if p != j {
                let j_max = (j + kv).min(n - 1);
                for c in j..=j_max {
                    let a = self.idx(j, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }

            // Eliminate below the diagonal.
            let diag = self.data[self.idx(j, j)];
            for i in (j + 1)..=i_max {
                let lij = self.idx(i, j);
                let l = self.data[lij] / diag;
                self.data[lij] = l;
                if l != 0.0 {
                    let j_max = (j + kv).min(n - 1);
                    for c in (j + 1)..=j_max {
                        let u = self.data[self.idx(j, c)];
                        if u != 0.0 {
                            let t = self.idx(i, c);
                            self.data[t] -= l * u;
                        }
                    }
                }
            }
        }
        Ok(piv)
    }

    /// Solves `A x = b` using a factorization produced by [`Self::factor`].
    pub fn solve(&self, piv: &[usize], b: &mut [f64]) {
        let n = self.n;
        let kl = self.kl;
        let kv = kl + self.ku;
        // Forward: apply permutation and L.
        for j in 0..n {
            let p = piv[j];
            if p != j {
                b.swap(j, p);
            }
            let i_max = (j + kl).min(n - 1);
            let bj = b[j];
            if bj != 0.0 {
                for i in (j + 1)..=i_max {
                    b[i] -= self.data[self.idx(i, j)] * bj;
                }
            }
        }
        // Backward: U x = y.
        for j in (0..n).rev() {
            let j_max = (j + kv).min(n - 1);
            let mut s = b[j];
            for c in (j + 1)..=j_max {
                s -= self.data[self.idx(j, c)] * b[c];
            }
            b[j] = s / self.data[self.idx(j, j)];
        }
    }
}
