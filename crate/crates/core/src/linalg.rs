//! Thin wrapper over the sparse LU factorisation of `rsparse`.

use rsparse::data::{Nmrc, Sprs, Symb};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular")]
    Singular,
    #[error("factorisation produced non-finite values")]
    NonFinite,
}

/// Square matrix in compressed-column form assembled from triplets.
#[derive(Clone, Debug)]
pub struct CscMatrix {
    n: usize,
    colptr: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl CscMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n: usize, triplets: &mut [(usize, usize, f64)]) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0; n + 1];
        let mut rows = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                vals.push(v);
                colptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix { n, colptr, rows, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for c in 0..self.n {
            for k in self.colptr[c]..self.colptr[c + 1] {
                y[self.rows[k]] += self.vals[k] * x[c];
            }
        }
        y
    }

    fn to_sprs(&self) -> Sprs<f64> {
        Sprs {
            nzmax: self.vals.len(),
            m: self.n,
            n: self.n,
            p: self.colptr.iter().map(|&p| p as isize).collect(),
            i: self.rows.clone(),
            x: self.vals.clone(),
        }
    }
}

/// LU factors reusable for several right-hand sides.
pub struct SparseLu {
    n: usize,
    symb: Symb,
    num: Nmrc<f64>,
}

impl SparseLu {
    /// `pivot_tol` = 1 gives partial pivoting; smaller values prefer the diagonal.
    pub fn factor(a: &CscMatrix, pivot_tol: f64) -> Result<Self, LinalgError> {
        let sp = a.to_sprs();
        // the ordering code underflows below two columns
        let order = if a.n < 2 { -1 } else { 1 };
        let mut symb = rsparse::sqr(&sp, order, false);
        if a.n == 0 {
            return Ok(SparseLu { n: 0, symb, num: Nmrc::new() });
        }
        let num = rsparse::lu(&sp, &mut symb, pivot_tol).map_err(|_| LinalgError::Singular)?;
        if num.u.x.iter().any(|x| !x.is_finite()) || num.l.x.iter().any(|x| !x.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        for c in 0..a.n {
            // the diagonal of U is the last entry of each column
            let end = num.u.p[c + 1] as usize;
            if end == 0 || num.u.x[end - 1] == 0.0 {
                return Err(LinalgError::Singular);
            }
        }
        Ok(SparseLu { n: a.n, symb, num })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        let mut x = vec![0.0; n];
        match &self.num.pinv {
            Some(p) => (0..n).for_each(|k| x[p[k] as usize] = b[k]),
            None => x.copy_from_slice(b),
        }
        rsparse::lsolve(&self.num.l, &mut x);
        rsparse::usolve(&self.num.u, &mut x);
        let mut out = vec![0.0; n];
        match &self.symb.q {
            Some(q) => (0..n).for_each(|k| out[q[k] as usize] = x[k]),
            None => out.copy_from_slice(&x),
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinalgError::NonFinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_unsymmetric_system() {
        let mut t = vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 2, 3.0), (2, 1, 4.0), (2, 2, 1.0), (2, 2, 1.0)];
        let a = CscMatrix::from_triplets(3, &mut t);
        let lu = SparseLu::factor(&a, 1.0).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x_true);
        let x = lu.solve(&b).unwrap();
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
        let x2 = lu.solve(&[1.0, 0.0, 0.0]).unwrap();
        let r = a.mul_vec(&x2);
        assert!((r[0] - 1.0).abs() < 1e-12 && r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
    }

    #[test]
    fn needs_pivoting() {
        let mut t = vec![(0, 1, 1.0), (1, 0, 1.0)];
        let a = CscMatrix::from_triplets(2, &mut t);
        let lu = SparseLu::factor(&a, 1.0).unwrap();
        assert_eq!(lu.solve(&[3.0, 4.0]).unwrap(), vec![4.0, 3.0]);
    }

    #[test]
    fn singular_is_reported() {
        let mut t = vec![(0, 0, 1.0), (1, 0, 1.0)];
        let a = CscMatrix::from_triplets(2, &mut t);
        assert!(SparseLu::factor(&a, 1.0).is_err());
    }
}
