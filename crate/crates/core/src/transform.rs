//! Symplectic finite Fourier transforms between the delay-Doppler and
//! time-frequency grids.
//!
//! Both grids are `N x M` matrices. The ISFFT is an inverse DFT along the
//! Doppler axis and a forward DFT along the delay axis, scaled by
//! `1/sqrt(MN)` so the pair is unitary.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use crate::error::Result;
use crate::grid::DdGrid;

/// Maps delay-Doppler symbols `x[k,l]` to time-frequency samples `X[n,m]`.
pub fn isfft(grid: &DdGrid, dd: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    grid.check_grid(dd)?;
    Ok(transform_2d(
        dd,
        FftDirection::Inverse,
        FftDirection::Forward,
    ))
}

/// Maps time-frequency samples `Y[n,m]` back to the delay-Doppler grid.
pub fn sfft(grid: &DdGrid, tf: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    grid.check_grid(tf)?;
    Ok(transform_2d(
        tf,
        FftDirection::Forward,
        FftDirection::Inverse,
    ))
}

fn transform_2d(
    input: &DMatrix<Complex64>,
    along_rows: FftDirection,
    along_cols: FftDirection,
) -> DMatrix<Complex64> {
    let (n, m) = input.shape();
    let mut planner = FftPlanner::<f64>::new();
    let fft_n = planner.plan_fft(n, along_rows);
    let fft_m = planner.plan_fft(m, along_cols);
    let mut out = input.clone();

    // Columns are contiguous in nalgebra storage: one length-N transform each.
    for mut col in out.column_iter_mut() {
        fft_n.process(col.as_mut_slice());
    }

    let mut buf = vec![Complex64::default(); m];
    for k in 0..n {
        for (l, b) in buf.iter_mut().enumerate() {
            *b = out[(k, l)];
        }
        fft_m.process(&mut buf);
        for (l, b) in buf.iter().enumerate() {
            out[(k, l)] = *b;
        }
    }

    let scale = 1.0 / ((m * n) as f64).sqrt();
    out.iter_mut().for_each(|v| *v *= scale);
    out
}
