//! Delay-Doppler input-output relation.
//!
//! For an integer-tap channel the received frame is
//! `y[k,l] = sum_i h'_i x[(k - beta_i)_N, (l - alpha_i)_M] + v[k,l]`,
//! which is `y = H x + v` in vector form and `y^T = h' X + v^T` in the
//! symbol-matrix form used by the diversity analysis.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{check_distinct, DdChannel, TapIndex};
use crate::error::{dim_mismatch, Error, Result};
use crate::grid::{DdGrid, DdVector};

/// Dense `MN x MN` effective channel, with the tap list when the channel
/// has integer taps.
#[derive(Debug, Clone, PartialEq)]
pub struct EffChannelMatrix {
    dense: DMatrix<Complex64>,
    taps: Option<Vec<(TapIndex, Complex64)>>,
}

impl EffChannelMatrix {
    pub(crate) fn from_dense(dense: DMatrix<Complex64>) -> Self {
        Self { dense, taps: None }
    }

    pub fn dense(&self) -> &DMatrix<Complex64> {
        &self.dense
    }

    pub fn into_dense(self) -> DMatrix<Complex64> {
        self.dense
    }

    /// `(tap, h')` pairs, present only for integer-tap channels.
    pub fn taps(&self) -> Option<&[(TapIndex, Complex64)]> {
        self.taps.as_deref()
    }

    /// `H x`.
    pub fn apply(&self, x: &DdVector) -> Result<DdVector> {
        if x.len() != self.dense.ncols() {
            return Err(dim_mismatch(self.dense.ncols(), x.len()));
        }
        Ok(&self.dense * x)
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.dense.iter().map(Complex64::norm_sqr).sum()
    }
}

/// Builds `H` for an integer-tap channel.
///
/// Row `k + N l` holds `h'_i` at column `(k - beta_i)_N + N (l - alpha_i)_M`.
pub fn build_channel_matrix(ch: &DdChannel, grid: &DdGrid) -> Result<EffChannelMatrix> {
    if let Some(index) = ch.paths().iter().position(|p| !p.is_integer()) {
        return Err(Error::FractionalTap { index });
    }
    let taps = ch.taps();
    check_distinct(&taps)?;
    let gains = ch.effective_gains();
    let mn = grid.len();
    let mut dense = DMatrix::zeros(mn, mn);
    add_integer_taps(&mut dense, 0, 0, &taps, &gains, grid);
    Ok(EffChannelMatrix {
        dense,
        taps: Some(taps.into_iter().zip(gains).collect()),
    })
}

/// Adds the integer-tap relation into the `MN x MN` block of `out` whose
/// top-left corner is `(row0, col0)`.
pub(crate) fn add_integer_taps(
    out: &mut DMatrix<Complex64>,
    row0: usize,
    col0: usize,
    taps: &[TapIndex],
    gains: &[Complex64],
    grid: &DdGrid,
) {
    let n = grid.n();
    for l in 0..grid.m() {
        for k in 0..n {
            let row = row0 + k + n * l;
            for (t, &g) in taps.iter().zip(gains) {
                let col = col0 + grid.shifted_index(k, l, -t.beta, -t.alpha);
                out[(row, col)] += g;
            }
        }
    }
}

/// `P x MN` symbol matrix (or a vertical stack of them).
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolMatrix(DMatrix<Complex64>);

impl SymbolMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Stacks blocks vertically, e.g. one per transmit antenna.
    pub fn stack(blocks: &[SymbolMatrix]) -> Result<SymbolMatrix> {
        let cols = blocks.first().map_or(0, SymbolMatrix::ncols);
        if let Some(b) = blocks.iter().find(|b| b.ncols() != cols) {
            return Err(dim_mismatch(cols, b.ncols()));
        }
        let rows: usize = blocks.iter().map(SymbolMatrix::nrows).sum();
        let mut out = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for b in blocks {
            out.view_mut((r, 0), (b.nrows(), cols)).copy_from(&b.0);
            r += b.nrows();
        }
        Ok(SymbolMatrix(out))
    }
}

/// Symbol matrix for the taps of `ch`: row `p`, column `k + N l` holds
/// `x[(k - beta_p)_N + N (l - alpha_p)_M]`.
pub fn build_symbol_matrix(x: &DdVector, ch: &DdChannel, grid: &DdGrid) -> Result<SymbolMatrix> {
    if let Some(index) = ch.paths().iter().position(|p| !p.is_integer()) {
        return Err(Error::FractionalTap { index });
    }
    symbol_matrix_from_taps(x, &ch.taps(), grid)
}

/// Symbol matrix from a bare tap layout.
pub fn symbol_matrix_from_taps(
    x: &DdVector,
    taps: &[TapIndex],
    grid: &DdGrid,
) -> Result<SymbolMatrix> {
    grid.check_vector(x)?;
    let n = grid.n();
    let mut out = DMatrix::zeros(taps.len(), grid.len());
    for l in 0..grid.m() {
        for k in 0..n {
            let col = k + n * l;
            for (p, t) in taps.iter().enumerate() {
                out[(p, col)] = x[grid.shifted_index(k, l, -t.beta, -t.alpha)];
            }
        }
    }
    Ok(SymbolMatrix(out))
}

/// Diagonal phase rotation `diag(e^{j a_0}, ..., e^{j a_{MN-1}})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRotation {
    exponents: Vec<f64>,
    factors: Vec<Complex64>,
}

impl PhaseRotation {
    pub fn from_exponents(exponents: Vec<f64>) -> Self {
        let factors = exponents
            .iter()
            .map(|&a| Complex64::from_polar(1.0, a))
            .collect();
        Self { exponents, factors }
    }

    /// `a_i = scale * i`. With `scale = 1` every `e^{j i}` (i >= 1) is
    /// transcendental and the exponents are distinct.
    pub fn linear(grid: &DdGrid, scale: f64) -> Self {
        Self::from_exponents((0..grid.len()).map(|i| scale * i as f64).collect())
    }

    pub fn identity(grid: &DdGrid) -> Self {
        Self::linear(grid, 0.0)
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn factors(&self) -> &[Complex64] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// True when every exponent differs from every other one.
    pub fn has_distinct_exponents(&self) -> bool {
        let mut sorted = self.exponents.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.windows(2).all(|w| w[0] != w[1])
    }

    /// `x' = Phi x`.
    pub fn apply(&self, x: &DdVector) -> Result<DdVector> {
        if x.len() != self.len() {
            return Err(dim_mismatch(self.len(), x.len()));
        }
        Ok(DVector::from_iterator(
            x.len(),
            x.iter().zip(&self.factors).map(|(v, f)| v * f),
        ))
    }

    pub fn matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.factors))
    }
}

/// Default rotation, `a_i = i`.
pub fn make_phase_rotation(grid: &DdGrid) -> PhaseRotation {
    PhaseRotation::linear(grid, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_integer_channel, TapPreset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid(m: usize, n: usize) -> DdGrid {
        DdGrid::with_default_spacing(m, n).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> DdVector {
        DVector::from_fn(len, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Direct evaluation of the modulo double-index relation on the grid.
    fn direct_relation(x: &DdVector, ch: &DdChannel, g: &DdGrid) -> DdVector {
        let (m, n) = (g.m() as i64, g.n() as i64);
        let mut y = DVector::zeros(g.len());
        for k in 0..n {
            for l in 0..m {
                for p in ch.paths() {
                    let kk = (k - p.beta).rem_euclid(n);
                    let ll = (l - p.alpha).rem_euclid(m);
                    y[(k + n * l) as usize] += p.effective_gain() * x[(kk + n * ll) as usize];
                }
            }
        }
        y
    }

    #[test]
    fn identity_channel() {
        let g = grid(2, 2);
        let ch = DdChannel::from_taps(&[c(1.0)], &[TapIndex::new(0, 0)], &g).unwrap();
        let h = build_channel_matrix(&ch, &g).unwrap();
        assert_eq!(h.dense(), &DMatrix::identity(4, 4));
    }

    #[test]
    fn single_shift_is_scaled_permutation() {
        let g = grid(2, 2);
        let ch = DdChannel::from_taps(&[c(1.0)], &[TapIndex::new(1, 1)], &g).unwrap();
        let h = build_channel_matrix(&ch, &g).unwrap();
        let phase = Complex64::from_polar(1.0, -2.0 * PI / 4.0);
        // Input bin (k, l) lands on output bin ((k+1)_2, (l+1)_2).
        let mut expect = DMatrix::zeros(4, 4);
        for k in 0..2 {
            for l in 0..2 {
                let from = k + 2 * l;
                let to = (k + 1) % 2 + 2 * ((l + 1) % 2);
                expect[(to, from)] = phase;
            }
        }
        let diff = (h.dense() - expect).map(|v| v.norm()).max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn two_paths_structure() {
        let g = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = gen_integer_channel(&TapPreset::P2M2.taps(), &g, &mut rng).unwrap();
        let h = build_channel_matrix(&ch, &g).unwrap();
        let d = h.dense();
        for i in 0..4 {
            assert_eq!(d.row(i).iter().filter(|v| v.norm() > 0.0).count(), 2);
            assert_eq!(d.column(i).iter().filter(|v| v.norm() > 0.0).count(), 2);
        }
        let mut mags: Vec<f64> = d.iter().filter(|v| v.norm() > 0.0).map(|v| v.norm()).collect();
        mags.sort_by(f64::total_cmp);
        mags.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(mags.len(), 2);
        assert_eq!(h.taps().unwrap().len(), 2);
    }

    #[test]
    fn matrix_form_matches_direct_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(m, n, preset) in &[
            (2, 2, TapPreset::P4),
            (4, 4, TapPreset::P2M4),
            (4, 2, TapPreset::P2M2),
        ] {
            let g = grid(m, n);
            let ch = gen_integer_channel(&preset.taps(), &g, &mut rng).unwrap();
            let h = build_channel_matrix(&ch, &g).unwrap();
            let x = random_vec(&mut rng, g.len());
            let diff = (h.apply(&x).unwrap() - direct_relation(&x, &ch, &g)).map(|v| v.norm()).max();
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn rejects_duplicates_and_fractions() {
        let g = grid(2, 2);
        let dup = DdChannel::new(vec![
            crate::channel::DdPath::on_grid(c(1.0), TapIndex::new(0, 1), &g),
            crate::channel::DdPath::on_grid(c(0.5), TapIndex::new(0, 1), &g),
        ]);
        assert_eq!(
            build_channel_matrix(&dup, &g),
            Err(Error::DuplicateTap { alpha: 0, beta: 1 })
        );
        let frac = DdChannel::new(vec![crate::channel::DdPath::off_grid(
            c(1.0),
            0.3 * g.delay_resolution(),
            0.0,
            &g,
        )]);
        assert_eq!(
            build_channel_matrix(&frac, &g),
            Err(Error::FractionalTap { index: 0 })
        );
    }

    #[test]
    fn symbol_matrix_trivial_cases() {
        let g = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_vec(&mut rng, 4);
        let ch = DdChannel::from_taps(&[c(1.0)], &[TapIndex::new(0, 0)], &g).unwrap();
        let xm = build_symbol_matrix(&x, &ch, &g).unwrap();
        assert_eq!(xm.matrix(), &x.transpose());
        let zero = build_symbol_matrix(&DVector::zeros(4), &ch, &g).unwrap();
        assert!(zero.matrix().iter().all(|v| *v == Complex64::default()));
    }

    #[test]
    fn alternate_form_matches_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let g = grid(2, 2);
            let ch = gen_integer_channel(&TapPreset::P2M2.taps(), &g, &mut rng).unwrap();
            let x = random_vec(&mut rng, 4);
            let xm = build_symbol_matrix(&x, &ch, &g).unwrap();
            let hp = DMatrix::from_row_slice(1, 2, &ch.effective_gains());
            let alt = hp * xm.matrix();
            let h = build_channel_matrix(&ch, &g).unwrap();
            let direct = h.apply(&x).unwrap().transpose();
            assert!((alt - direct).map(|v| v.norm()).max() < 1e-12);
        }
    }

    #[test]
    fn stack_checks_columns() {
        let a = SymbolMatrix::new(DMatrix::zeros(2, 4));
        let b = SymbolMatrix::new(DMatrix::zeros(1, 4));
        assert_eq!(SymbolMatrix::stack(&[a.clone(), b]).unwrap().nrows(), 3);
        let bad = SymbolMatrix::new(DMatrix::zeros(1, 3));
        assert!(SymbolMatrix::stack(&[a, bad]).is_err());
    }

    #[test]
    fn phase_rotation_examples() {
        let g = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_vec(&mut rng, 4);
        assert_eq!(PhaseRotation::identity(&g).apply(&x).unwrap(), x);

        let phi = make_phase_rotation(&g);
        assert!(phi.has_distinct_exponents());
        assert!(!PhaseRotation::identity(&g).has_distinct_exponents());
        for (i, f) in phi.factors().iter().enumerate() {
            let expect = Complex64::new((i as f64).cos(), (i as f64).sin());
            assert!((f - expect).norm() < 1e-15);
        }
        let xr = phi.apply(&x).unwrap();
        for i in 0..4 {
            assert!((xr[i].norm() - x[i].norm()).abs() < 1e-15);
        }
        assert!((xr.norm() - x.norm()).abs() < 1e-14);
        assert!(phi.apply(&DVector::zeros(3)).is_err());
        assert!((phi.matrix() * &x - xr).map(|v| v.norm()).max() < 1e-15);
    }
}
