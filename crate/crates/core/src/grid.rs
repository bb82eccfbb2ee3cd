//! Delay-Doppler grid bookkeeping.
//!
//! Symbols live on an `N x M` lattice: `k` indexes Doppler bins
//! (`0..N`) and `l` indexes delay bins (`0..M`). Every module flattens the
//! grid with the same column-major convention, `idx = k + N*l`, which is
//! also the storage order of an `N x M` nalgebra matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{dim_mismatch, Error, Result};

/// Length-`MN` delay-Doppler vector, indexed by `k + N*l`.
pub type DdVector = DVector<Complex64>;

/// Subcarrier spacing used by the reproduction presets (3.75 kHz).
pub const DEFAULT_SUBCARRIER_SPACING_HZ: f64 = 3.75e3;

/// Critically sampled delay-Doppler grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdGrid {
    m: usize,
    n: usize,
    delta_f: f64,
}

impl DdGrid {
    /// Grid with `m` delay bins, `n` Doppler bins and subcarrier spacing
    /// `delta_f` (Hz). The symbol time is `1/delta_f`.
    pub fn new(m: usize, n: usize, delta_f: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs M >= 1 and N >= 1, got M={m}, N={n}"
            )));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "subcarrier spacing must be positive, got {delta_f}"
            )));
        }
        Ok(Self { m, n, delta_f })
    }

    /// Grid with the default 3.75 kHz subcarrier spacing.
    pub fn with_default_spacing(m: usize, n: usize) -> Result<Self> {
        Self::new(m, n, DEFAULT_SUBCARRIER_SPACING_HZ)
    }

    /// Number of delay bins.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of Doppler bins.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Symbol duration `T = 1/delta_f`.
    pub fn symbol_time(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Frame size `MN`.
    pub fn len(&self) -> usize {
        self.m * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Delay resolution `1/(M delta_f)` in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `1/(N T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        self.delta_f / self.n as f64
    }

    /// Flat index of Doppler bin `k` and delay bin `l`.
    pub fn vec_index(&self, k: usize, l: usize) -> Result<usize> {
        if k >= self.n || l >= self.m {
            return Err(Error::InvalidParameter(format!(
                "bin (k={k}, l={l}) outside {}x{} grid",
                self.n, self.m
            )));
        }
        Ok(k + self.n * l)
    }

    /// Inverse of [`vec_index`](Self::vec_index): `(k, l)` of a flat index.
    pub fn devec_index(&self, idx: usize) -> Result<(usize, usize)> {
        if idx >= self.len() {
            return Err(Error::InvalidParameter(format!(
                "index {idx} outside frame of {}",
                self.len()
            )));
        }
        Ok((idx % self.n, idx / self.n))
    }

    /// Flat index of the bin reached by shifting `(k, l)` by `(dk, dl)`
    /// cyclically.
    #[inline]
    pub fn shifted_index(&self, k: usize, l: usize, dk: i64, dl: i64) -> usize {
        let kk = (k as i64 + dk).rem_euclid(self.n as i64) as usize;
        let ll = (l as i64 + dl).rem_euclid(self.m as i64) as usize;
        kk + self.n * ll
    }

    /// Flattens an `N x M` grid into a length-`MN` vector.
    pub fn vectorize(&self, grid: &DMatrix<Complex64>) -> Result<DdVector> {
        self.check_grid(grid)?;
        Ok(DVector::from_column_slice(grid.as_slice()))
    }

    /// Reshapes a length-`MN` vector into an `N x M` grid.
    pub fn devectorize(&self, x: &DdVector) -> Result<DMatrix<Complex64>> {
        self.check_vector(x)?;
        Ok(DMatrix::from_column_slice(self.n, self.m, x.as_slice()))
    }

    pub(crate) fn check_grid(&self, grid: &DMatrix<Complex64>) -> Result<()> {
        if grid.nrows() != self.n || grid.ncols() != self.m {
            return Err(dim_mismatch(
                format!("{}x{} grid", self.n, self.m),
                format!("{}x{}", grid.nrows(), grid.ncols()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_vector(&self, x: &DdVector) -> Result<()> {
        if x.len() != self.len() {
            return Err(dim_mismatch(
                format!("vector of length {}", self.len()),
                x.len(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_examples() {
        let g = DdGrid::with_default_spacing(2, 2).unwrap();
        assert_eq!(g.vec_index(1, 0).unwrap(), 1);
        assert_eq!(g.vec_index(0, 1).unwrap(), 2);
        assert!(g.vec_index(2, 0).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = DdGrid::with_default_spacing(3, 4).unwrap();
        for idx in 0..g.len() {
            let (k, l) = g.devec_index(idx).unwrap();
            assert_eq!(g.vec_index(k, l).unwrap(), idx);
        }
        assert!(g.devec_index(12).is_err());
    }

    #[test]
    fn critically_sampled() {
        let g = DdGrid::with_default_spacing(4, 2).unwrap();
        assert!((g.symbol_time() * g.delta_f() - 1.0).abs() < 1e-15);
        assert!(DdGrid::new(0, 2, 1.0).is_err());
        assert!(DdGrid::new(2, 2, 0.0).is_err());
    }

    #[test]
    fn vectorize_matches_index_convention() {
        let g = DdGrid::with_default_spacing(3, 2).unwrap();
        let grid = DMatrix::from_fn(2, 3, |k, l| Complex64::new(k as f64, l as f64));
        let v = g.vectorize(&grid).unwrap();
        for k in 0..2 {
            for l in 0..3 {
                assert_eq!(v[g.vec_index(k, l).unwrap()], grid[(k, l)]);
            }
        }
        assert_eq!(g.devectorize(&v).unwrap(), grid);
    }
}
