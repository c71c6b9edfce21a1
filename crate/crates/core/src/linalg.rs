//! Dense symmetric eigensolvers behind a common trait.
//!
//! Backends are registered by name so that experiments and the CLI can select
//! one at run time. `lapack` (MRRR, `dsyevr`) is the default; `nalgebra` is a
//! pure-Rust implicit QR backend used mostly as an independent check.

use nalgebra::{DMatrix, SymmetricEigen};
use std::os::raw::c_char;

use crate::error::{LabError, Result};

/// Eigenpairs with eigenvalues ascending and eigenvector `k` in column `k`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub trait SymmetricEigensolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// All eigenvalues, ascending.
    fn eigenvalues(&self, a: &DMatrix<f64>) -> Result<Vec<f64>>;

    /// Full decomposition.
    fn eigh(&self, a: &DMatrix<f64>) -> Result<EigenPairs>;

    /// Eigenpairs with eigenvalue in `[lo, hi]`.
    fn eigh_window(&self, a: &DMatrix<f64>, lo: f64, hi: f64) -> Result<EigenPairs> {
        let full = self.eigh(a)?;
        let keep: Vec<usize> = (0..full.values.len())
            .filter(|&k| full.values[k] >= lo && full.values[k] <= hi)
            .collect();
        let values = keep.iter().map(|&k| full.values[k]).collect();
        let vectors = full.vectors.select_columns(keep.iter());
        Ok(EigenPairs { values, vectors })
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Lapack;

#[derive(Debug, Default, Clone, Copy)]
pub struct NalgebraQr;

enum Range {
    All,
    Values(f64, f64),
}

fn dsyevr(a: &DMatrix<f64>, vectors: bool, range: Range) -> Result<EigenPairs> {
    if !a.is_square() {
        return Err(LabError::domain("eigensolver needs a square matrix"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(EigenPairs { values: vec![], vectors: DMatrix::zeros(0, 0) });
    }
    let ni = i32::try_from(n).map_err(|_| LabError::param("matrix too large for LAPACK"))?;
    let mut work_a: Vec<f64> = a.as_slice().to_vec();
    let jobz = if vectors { b'V' } else { b'N' } as c_char;
    let (range_c, vl, vu) = match range {
        Range::All => (b'A' as c_char, 0.0, 0.0),
        Range::Values(lo, hi) => {
            // dsyevr uses the half-open interval (vl, vu]
            (b'V' as c_char, next_down(lo), hi)
        }
    };
    let uplo = b'L' as c_char;
    let mut m: i32 = 0;
    let mut w = vec![0.0f64; n];
    let ldz = if vectors { ni } else { 1 };
    let mut z = vec![0.0f64; if vectors { n * n } else { 1 }];
    let mut isuppz = vec![0i32; 2 * n];
    let mut info: i32 = 0;
    let abstol = 0.0f64;
    let (il, iu) = (0i32, 0i32);
    let mut wq = [0.0f64];
    let mut iwq = [0i32];
    let query = -1i32;
    // SAFETY: all buffers are sized per the LAPACK dsyevr contract.
    unsafe {
        lapack_sys::dsyevr_(
            &jobz, &range_c, &uplo, &ni, work_a.as_mut_ptr(), &ni, &vl, &vu, &il, &iu, &abstol,
            &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ldz, isuppz.as_mut_ptr(), wq.as_mut_ptr(),
            &query, iwq.as_mut_ptr(), &query, &mut info,
        );
    }
    if info != 0 {
        return Err(LabError::numerical(format!("dsyevr workspace query failed (info={info})")));
    }
    let lwork = wq[0] as i32;
    let liwork = iwq[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    // SAFETY: as above, with workspace sized from the query.
    unsafe {
        lapack_sys::dsyevr_(
            &jobz, &range_c, &uplo, &ni, work_a.as_mut_ptr(), &ni, &vl, &vu, &il, &iu, &abstol,
            &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ldz, isuppz.as_mut_ptr(), work.as_mut_ptr(),
            &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(LabError::numerical(format!("dsyevr failed to converge (info={info})")));
    }
    let m = m as usize;
    w.truncate(m);
    let vectors = if vectors {
        z.truncate(n * m);
        DMatrix::from_vec(n, m, z)
    } else {
        DMatrix::zeros(0, 0)
    };
    Ok(EigenPairs { values: w, vectors })
}

fn next_down(x: f64) -> f64 {
    if x.is_finite() {
        x - x.abs().max(f64::MIN_POSITIVE) * f64::EPSILON
    } else {
        x
    }
}

impl SymmetricEigensolver for Lapack {
    fn name(&self) -> &'static str {
        "lapack"
    }

    fn eigenvalues(&self, a: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(dsyevr(a, false, Range::All)?.values)
    }

    fn eigh(&self, a: &DMatrix<f64>) -> Result<EigenPairs> {
        dsyevr(a, true, Range::All)
    }

    fn eigh_window(&self, a: &DMatrix<f64>, lo: f64, hi: f64) -> Result<EigenPairs> {
        if lo > hi {
            return Err(LabError::domain(format!("empty window [{lo}, {hi}]")));
        }
        dsyevr(a, true, Range::Values(lo, hi))
    }
}

impl SymmetricEigensolver for NalgebraQr {
    fn name(&self) -> &'static str {
        "nalgebra"
    }

    fn eigenvalues(&self, a: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|x, y| x.total_cmp(y));
        Ok(v)
    }

    fn eigh(&self, a: &DMatrix<f64>) -> Result<EigenPairs> {
        let n = a.nrows();
        let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
            .ok_or_else(|| LabError::numerical("implicit QR did not converge"))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = eig.eigenvectors.select_columns(order.iter());
        Ok(EigenPairs { values, vectors })
    }
}

/// Names of the registered eigensolver backends.
pub const EIGENSOLVERS: &[&str] = &["lapack", "nalgebra"];

/// Look up an eigensolver backend by name.
pub fn eigensolver(name: &str) -> Result<Box<dyn SymmetricEigensolver>> {
    match name {
        "lapack" => Ok(Box::new(Lapack)),
        "nalgebra" => Ok(Box::new(NalgebraQr)),
        other => Err(LabError::param(format!(
            "unknown eigensolver '{other}' (available: {})",
            EIGENSOLVERS.join(", ")
        ))),
    }
}

pub fn default_eigensolver() -> &'static dyn SymmetricEigensolver {
    &Lapack
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = ((i * 31 + j * 17) % 13) as f64 - 6.0 + 0.1 * (i as f64);
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    #[test]
    fn backends_agree() {
        let a = test_matrix(40);
        let l = Lapack.eigh(&a).unwrap();
        let q = NalgebraQr.eigh(&a).unwrap();
        for (x, y) in l.values.iter().zip(&q.values) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
        let vals = Lapack.eigenvalues(&a).unwrap();
        assert_eq!(vals.len(), 40);
        for (x, y) in vals.iter().zip(&l.values) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn window_selects_closed_interval() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.5, 1.0, 2.0, 3.0]));
        let w = Lapack.eigh_window(&a, 0.5, 2.0).unwrap();
        assert_eq!(w.values, vec![0.5, 1.0, 2.0]);
        assert_eq!(w.vectors.ncols(), 3);
        let w = NalgebraQr.eigh_window(&a, 0.5, 2.0).unwrap();
        assert_eq!(w.values.len(), 3);
    }

    #[test]
    fn registry_lookup() {
        for name in EIGENSOLVERS {
            assert_eq!(eigensolver(name).unwrap().name(), *name);
        }
        assert!(eigensolver("magic").is_err());
    }
}
