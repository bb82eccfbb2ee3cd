//! Multi-antenna stacking, receive antenna selection and Alamouti STC.
//!
//! Block `(i, j)` of a [`MimoChannel`] is the effective channel from
//! transmit antenna `j` to receive antenna `i`. The receiver keeps the
//! `n_s` antennas with the largest `sum_j ||H_ij||^2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    effective_channel, gen_fractional_channel, gen_integer_channel, DdChannel, FractionalProfile,
    TapIndex,
};
use crate::dd::{symbol_matrix_from_taps, EffChannelMatrix, PhaseRotation, SymbolMatrix};
use crate::error::{dim_mismatch, Error, Result};
use crate::grid::{DdGrid, DdVector};

/// `n_r x n_t` grid of independent single-link channels.
#[derive(Debug, Clone)]
pub struct MimoChannel {
    grid: DdGrid,
    n_r: usize,
    n_t: usize,
    links: Vec<DdChannel>,
    blocks: Vec<EffChannelMatrix>,
}

impl MimoChannel {
    /// `links` is row-major: entry `i * n_t + j` is receive `i`, transmit `j`.
    pub fn new(grid: DdGrid, n_r: usize, n_t: usize, links: Vec<DdChannel>) -> Result<Self> {
        if n_r == 0 || n_t == 0 {
            return Err(Error::InvalidParameter(format!(
                "need at least one antenna on each side, got n_r={n_r}, n_t={n_t}"
            )));
        }
        if links.len() != n_r * n_t {
            return Err(dim_mismatch(format!("{} links", n_r * n_t), links.len()));
        }
        let blocks = links
            .iter()
            .map(|ch| effective_channel(ch, &grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            n_r,
            n_t,
            links,
            blocks,
        })
    }

    /// Independent integer-tap draws on every link, same tap layout.
    pub fn random_integer<R: Rng + ?Sized>(
        grid: DdGrid,
        n_r: usize,
        n_t: usize,
        taps: &[TapIndex],
        rng: &mut R,
    ) -> Result<Self> {
        let links = (0..n_r * n_t)
            .map(|_| gen_integer_channel(taps, &grid, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, n_r, n_t, links)
    }

    /// Independent fractional draws on every link.
    pub fn random_fractional<R: Rng + ?Sized>(
        grid: DdGrid,
        n_r: usize,
        n_t: usize,
        profile: &FractionalProfile,
        rng: &mut R,
    ) -> Result<Self> {
        let links = (0..n_r * n_t)
            .map(|_| gen_fractional_channel(profile, &grid, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, n_r, n_t, links)
    }

    pub fn grid(&self) -> &DdGrid {
        &self.grid
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn link(&self, rx: usize, tx: usize) -> &DdChannel {
        &self.links[rx * self.n_t + tx]
    }

    pub fn block(&self, rx: usize, tx: usize) -> &EffChannelMatrix {
        &self.blocks[rx * self.n_t + tx]
    }

    /// Full `n_r MN x n_t MN` stacked channel.
    pub fn stacked(&self) -> DMatrix<Complex64> {
        let all: Vec<usize> = (0..self.n_r).collect();
        self.stack_rows(&all)
    }

    fn stack_rows(&self, rows: &[usize]) -> DMatrix<Complex64> {
        let mn = self.grid.len();
        let mut out = DMatrix::zeros(rows.len() * mn, self.n_t * mn);
        for (r, &rx) in rows.iter().enumerate() {
            for tx in 0..self.n_t {
                out.view_mut((r * mn, tx * mn), (mn, mn))
                    .copy_from(self.block(rx, tx).dense());
            }
        }
        out
    }
}

/// `sum_j ||H_ij||^2` for receive antenna `rx`.
pub fn selection_metric(mimo: &MimoChannel, rx: usize) -> Result<f64> {
    check_rx(mimo, rx)?;
    Ok((0..mimo.n_t()).map(|tx| mimo.block(rx, tx).frobenius_sq()).sum())
}

/// `sum_j sum_k |h^(k)_ij|^2` over the unique taps. Integer channels only;
/// equals [`selection_metric`] divided by `MN`.
pub fn tap_selection_metric(mimo: &MimoChannel, rx: usize) -> Result<f64> {
    check_rx(mimo, rx)?;
    let mut total = 0.0;
    for tx in 0..mimo.n_t() {
        let taps = mimo
            .block(rx, tx)
            .taps()
            .ok_or_else(|| Error::Unsupported("tap-form metric needs integer taps".into()))?;
        total += taps.iter().map(|(_, g)| g.norm_sqr()).sum::<f64>();
    }
    Ok(total)
}

fn check_rx(mimo: &MimoChannel, rx: usize) -> Result<()> {
    if rx >= mimo.n_r() {
        return Err(Error::InvalidParameter(format!(
            "receive antenna {rx} out of range (n_r = {})",
            mimo.n_r()
        )));
    }
    Ok(())
}

/// Outcome of receive antenna selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected antennas in ascending index order.
    pub selected: Vec<usize>,
    /// Metric of every receive antenna.
    pub metrics: Vec<f64>,
}

/// Keeps the `n_s` largest metrics; ties go to the lower index.
pub fn select_by_metrics(metrics: &[f64], n_s: usize) -> Result<SelectionResult> {
    if n_s == 0 || n_s > metrics.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot select {n_s} of {} antennas",
            metrics.len()
        )));
    }
    let mut order: Vec<usize> = (0..metrics.len()).collect();
    order.sort_by(|&a, &b| metrics[b].total_cmp(&metrics[a]).then(a.cmp(&b)));
    let mut selected = order[..n_s].to_vec();
    selected.sort_unstable();
    Ok(SelectionResult {
        selected,
        metrics: metrics.to_vec(),
    })
}

/// Selects `n_s` receive antennas by Frobenius norm.
pub fn select_antennas(mimo: &MimoChannel, n_s: usize) -> Result<SelectionResult> {
    let metrics = (0..mimo.n_r())
        .map(|rx| selection_metric(mimo, rx))
        .collect::<Result<Vec<_>>>()?;
    select_by_metrics(&metrics, n_s)
}

/// Channel seen after selection.
#[derive(Debug, Clone)]
pub struct SelectedSystem {
    /// `n_s MN x n_t MN` stacked matrix.
    pub stacked: DMatrix<Complex64>,
    /// `n_s x n_t P` unique-tap matrix; `None` for fractional channels.
    pub taps: Option<DMatrix<Complex64>>,
}

/// Stacked selected system and its unique-tap form.
pub fn assemble_selected_system(
    mimo: &MimoChannel,
    sel: &SelectionResult,
) -> Result<SelectedSystem> {
    check_selection(mimo, sel)?;
    let stacked = mimo.stack_rows(&sel.selected);
    Ok(SelectedSystem {
        stacked,
        taps: selected_tap_matrix(mimo, &sel.selected),
    })
}

fn selected_tap_matrix(mimo: &MimoChannel, rows: &[usize]) -> Option<DMatrix<Complex64>> {
    let p = mimo.link(0, 0).num_paths();
    let mut out = DMatrix::zeros(rows.len(), mimo.n_t() * p);
    for (r, &rx) in rows.iter().enumerate() {
        for tx in 0..mimo.n_t() {
            let taps = mimo.block(rx, tx).taps()?;
            if taps.len() != p {
                return None;
            }
            for (k, (_, g)) in taps.iter().enumerate() {
                out[(r, tx * p + k)] = *g;
            }
        }
    }
    Some(out)
}

fn check_selection(mimo: &MimoChannel, sel: &SelectionResult) -> Result<()> {
    if sel.selected.is_empty() {
        return Err(Error::InvalidParameter("empty selection".into()));
    }
    if let Some(&bad) = sel.selected.iter().find(|&&i| i >= mimo.n_r()) {
        return Err(Error::InvalidParameter(format!(
            "selected antenna {bad} out of range (n_r = {})",
            mimo.n_r()
        )));
    }
    Ok(())
}

/// Symbol matrix of a MIMO transmission: one `P x MN` block per transmit
/// antenna, stacked. `rotation` is applied to every antenna's vector first.
pub fn mimo_symbol_matrix(
    xs: &[DdVector],
    taps: &[TapIndex],
    grid: &DdGrid,
    rotation: Option<&PhaseRotation>,
) -> Result<SymbolMatrix> {
    let blocks = xs
        .iter()
        .map(|x| {
            let x = rotate(x, rotation)?;
            symbol_matrix_from_taps(&x, taps, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    SymbolMatrix::stack(&blocks)
}

fn rotate(x: &DdVector, rotation: Option<&PhaseRotation>) -> Result<DdVector> {
    match rotation {
        Some(phi) => phi.apply(x),
        None => Ok(x.clone()),
    }
}

/// Transmission scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemMode {
    /// One transmit antenna.
    Simo,
    /// Independent streams on `n_t` transmit antennas.
    Mimo,
    /// Alamouti code over two frames, `n_t = 2`.
    Stc,
}

impl SystemMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simo => "simo",
            Self::Mimo => "mimo",
            Self::Stc => "stc",
        }
    }

    /// Information symbols per codeword.
    pub fn symbols_per_codeword(self, n_t: usize, mn: usize) -> usize {
        match self {
            Self::Simo => mn,
            Self::Mimo => n_t * mn,
            Self::Stc => 2 * mn,
        }
    }

    /// Row dimension `K` of the codeword symbol matrix for `p` paths.
    pub fn codeword_rows(self, n_t: usize, p: usize) -> usize {
        match self {
            Self::Simo => p,
            Self::Mimo => n_t * p,
            Self::Stc => 2 * p,
        }
    }

    /// Checks the transmit antenna count against the mode.
    pub fn check_n_t(self, n_t: usize) -> Result<()> {
        let ok = match self {
            Self::Simo => n_t == 1,
            Self::Mimo => n_t >= 1,
            Self::Stc => n_t == 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("mode {self} does not allow n_t = {n_t}")))
        }
    }
}

impl fmt::Display for SystemMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "simo" => Ok(Self::Simo),
            "mimo" => Ok(Self::Mimo),
            "stc" | "alamouti" => Ok(Self::Stc),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode '{other}' (expected simo, mimo or stc)"
            ))),
        }
    }
}

/// Codeword symbol matrix for the concatenated information vector `x`
/// (`symbols_per_codeword` entries, antenna or frame blocks back to back).
pub fn codeword_matrix(
    mode: SystemMode,
    n_t: usize,
    x: &DdVector,
    taps: &[TapIndex],
    grid: &DdGrid,
    rotation: Option<&PhaseRotation>,
) -> Result<SymbolMatrix> {
    mode.check_n_t(n_t)?;
    let mn = grid.len();
    let need = mode.symbols_per_codeword(n_t, mn);
    if x.len() != need {
        return Err(dim_mismatch(need, x.len()));
    }
    let blocks: Vec<DdVector> = (0..need / mn)
        .map(|b| x.rows(b * mn, mn).into_owned())
        .collect();
    match mode {
        SystemMode::Simo | SystemMode::Mimo => mimo_symbol_matrix(&blocks, taps, grid, rotation),
        SystemMode::Stc => stc_symbol_matrix(&blocks[0], &blocks[1], taps, grid, rotation),
    }
}

/// Index-reversal permutation `P = P'_M (x) P'_N`.
///
/// `P'_L` maps row `r` to column `(L - r) mod L`, so `(P x)[k + N l] =
/// x[(N - k)_N + N (M - l)_M]`. The permutation is an involution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    /// `source[i]` is the input index that lands on output `i`.
    source: Vec<usize>,
}

impl Permutation {
    pub fn source(&self) -> &[usize] {
        &self.source
    }

    pub fn apply(&self, x: &DdVector) -> Result<DdVector> {
        if x.len() != self.source.len() {
            return Err(dim_mismatch(self.source.len(), x.len()));
        }
        Ok(DVector::from_iterator(
            x.len(),
            self.source.iter().map(|&s| x[s]),
        ))
    }

    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.source.len();
        let mut out = DMatrix::zeros(n, n);
        for (i, &s) in self.source.iter().enumerate() {
            out[(i, s)] = Complex64::new(1.0, 0.0);
        }
        out
    }
}

pub fn build_permutation(grid: &DdGrid) -> Permutation {
    let (m, n) = (grid.m(), grid.n());
    let source = (0..grid.len())
        .map(|idx| {
            let (k, l) = (idx % n, idx / n);
            (n - k) % n + n * ((m - l) % m)
        })
        .collect();
    Permutation { source }
}

/// Transmit vectors of one Alamouti codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct StcCodeword {
    /// Frame 1: `x1` on antenna 1, `x2` on antenna 2.
    pub frame1: [DdVector; 2],
    /// Frame 2: `-P x2*` on antenna 1, `P x1*` on antenna 2.
    pub frame2: [DdVector; 2],
}

pub fn stc_encode(x1: &DdVector, x2: &DdVector, grid: &DdGrid) -> Result<StcCodeword> {
    grid.check_vector(x1)?;
    grid.check_vector(x2)?;
    let perm = build_permutation(grid);
    let p_x1c = perm.apply(&x1.conjugate())?;
    let p_x2c = perm.apply(&x2.conjugate())?;
    Ok(StcCodeword {
        frame1: [x1.clone(), x2.clone()],
        frame2: [-p_x2c, p_x1c],
    })
}

/// Stacked `2 n_s MN x 2 MN` Alamouti system.
///
/// The first `n_s` block rows are `[H_i1, H_i2]` (frame 1); the last `n_s`
/// are `[H_i2^H, -H_i1^H]`, matching second-frame observations that were
/// permuted by `P` and conjugated.
pub fn stc_assemble(mimo: &MimoChannel, sel: &SelectionResult) -> Result<DMatrix<Complex64>> {
    if mimo.n_t() != 2 {
        return Err(Error::Unsupported(format!(
            "Alamouti STC needs n_t = 2, got {}",
            mimo.n_t()
        )));
    }
    check_selection(mimo, sel)?;
    let mn = mimo.grid().len();
    let n_s = sel.selected.len();
    let mut out = DMatrix::zeros(2 * n_s * mn, 2 * mn);
    for (r, &rx) in sel.selected.iter().enumerate() {
        let h1 = mimo.block(rx, 0).dense();
        let h2 = mimo.block(rx, 1).dense();
        out.view_mut((r * mn, 0), (mn, mn)).copy_from(h1);
        out.view_mut((r * mn, mn), (mn, mn)).copy_from(h2);
        let lower = (n_s + r) * mn;
        out.view_mut((lower, 0), (mn, mn)).copy_from(&h2.adjoint());
        out.view_mut((lower, mn), (mn, mn)).copy_from(&(-h1.adjoint()));
    }
    Ok(out)
}

/// `2P x 2MN` Alamouti symbol matrix
/// `[[X(x1), -X(P x2)^*], [X(x2), X(P x1)^*]]` (after optional rotation).
pub fn stc_symbol_matrix(
    x1: &DdVector,
    x2: &DdVector,
    taps: &[TapIndex],
    grid: &DdGrid,
    rotation: Option<&PhaseRotation>,
) -> Result<SymbolMatrix> {
    let x1 = rotate(x1, rotation)?;
    let x2 = rotate(x2, rotation)?;
    let perm = build_permutation(grid);
    let a = symbol_matrix_from_taps(&x1, taps, grid)?.into_matrix();
    let b = symbol_matrix_from_taps(&x2, taps, grid)?.into_matrix();
    let pa = symbol_matrix_from_taps(&perm.apply(&x1)?, taps, grid)?.into_matrix();
    let pb = symbol_matrix_from_taps(&perm.apply(&x2)?, taps, grid)?.into_matrix();
    let (p, mn) = (taps.len(), grid.len());
    let mut out = DMatrix::zeros(2 * p, 2 * mn);
    out.view_mut((0, 0), (p, mn)).copy_from(&a);
    out.view_mut((0, mn), (p, mn)).copy_from(&(-pb.conjugate()));
    out.view_mut((p, 0), (p, mn)).copy_from(&b);
    out.view_mut((p, mn), (p, mn)).copy_from(&pa.conjugate());
    Ok(SymbolMatrix::new(out))
}
