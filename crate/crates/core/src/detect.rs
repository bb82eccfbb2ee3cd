//! Modulation alphabets and detectors for stacked linear systems `y = H x + w`.
//!
//! Phase rotation is folded into the channel (`H diag(phi)`, see
//! [`rotate_columns`]) so candidates are rotated and the received vector is
//! left alone.
//!
//! Three detectors are provided:
//! * [`ml_detect`]: exhaustive search in reflected Gray order, one symbol
//!   changes per step so the residual is updated in `O(rows)`;
//! * [`sphere_detect`]: Schnorr-Euchner depth-first search on the
//!   real-valued QR-decomposed system, also exact ML but far cheaper;
//! * [`mmse_detect`]: linear MMSE filter followed by per-symbol slicing.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::dd::PhaseRotation;
use crate::error::{dim_mismatch, Error, Result};

/// Default cap on exhaustive ML candidates.
pub const DEFAULT_CANDIDATE_CAP: usize = 1 << 20;

const RESYNC_INTERVAL: usize = 4096;

/// Gray-coded 4-PAM levels indexed by the two-bit value (`00, 01, 10, 11`).
const PAM4_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlphabetKind {
    Bpsk,
    Qam16,
}

impl AlphabetKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bpsk => "bpsk",
            Self::Qam16 => "16qam",
        }
    }
}

impl fmt::Display for AlphabetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlphabetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Self::Bpsk),
            "16qam" | "qam16" | "16-qam" => Ok(Self::Qam16),
            other => Err(Error::InvalidParameter(format!(
                "unknown alphabet '{other}' (expected bpsk or 16qam)"
            ))),
        }
    }
}

/// Unit-energy constellation. Point `i` carries the bits of `i`, MSB first.
///
/// BPSK maps `0 -> +1`, `1 -> -1`. 16-QAM takes I from the first two bits
/// and Q from the last two, each Gray coded as `00 -> -3, 01 -> -1,
/// 11 -> +1, 10 -> +3`, scaled by `1/sqrt(10)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    kind: AlphabetKind,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

impl Alphabet {
    pub fn new(kind: AlphabetKind) -> Self {
        match kind {
            AlphabetKind::Bpsk => Self {
                kind,
                points: vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
                bits_per_symbol: 1,
            },
            AlphabetKind::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                let points = (0..16)
                    .map(|i| Complex64::new(PAM4_GRAY[i >> 2] * s, PAM4_GRAY[i & 3] * s))
                    .collect();
                Self {
                    kind,
                    points,
                    bits_per_symbol: 4,
                }
            }
        }
    }

    pub fn bpsk() -> Self {
        Self::new(AlphabetKind::Bpsk)
    }

    pub fn qam16() -> Self {
        Self::new(AlphabetKind::Qam16)
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Bits of point `index`, MSB first.
    pub fn index_bits(&self, index: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits_per_symbol).map(move |b| ((index >> (self.bits_per_symbol - 1 - b)) & 1) as u8)
    }

    /// Point indices for a bit string whose length is a multiple of
    /// `bits_per_symbol`.
    pub fn bits_to_indices(&self, bits: &[u8]) -> Result<Vec<usize>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::InvalidParameter(format!(
                "{} bits do not fill whole {}-bit symbols",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        bits.chunks(self.bits_per_symbol)
            .map(|chunk| {
                chunk.iter().try_fold(0usize, |acc, &b| match b {
                    0 | 1 => Ok((acc << 1) | b as usize),
                    _ => Err(Error::InvalidParameter(format!("bit value {b}"))),
                })
            })
            .collect()
    }

    pub fn indices_to_bits(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().flat_map(|&i| self.index_bits(i)).collect()
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<DVector<Complex64>> {
        let idx = self.bits_to_indices(bits)?;
        Ok(DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.points[i])))
    }

    /// Hard decision bits of arbitrary complex values (nearest point).
    pub fn demap(&self, symbols: &[Complex64]) -> Vec<u8> {
        let idx: Vec<usize> = symbols.iter().map(|&z| self.slice(z)).collect();
        self.indices_to_bits(&idx)
    }

    /// Index of the nearest constellation point.
    pub fn slice(&self, z: Complex64) -> usize {
        match self.kind {
            AlphabetKind::Bpsk => usize::from(z.re < 0.0),
            AlphabetKind::Qam16 => {
                let s = 10f64.sqrt();
                (slice_pam4(z.re * s) << 2) | slice_pam4(z.im * s)
            }
        }
    }

    /// Real dimensions per complex symbol in the real-valued system.
    fn real_dims(&self) -> usize {
        match self.kind {
            AlphabetKind::Bpsk => 1,
            AlphabetKind::Qam16 => 2,
        }
    }

    /// Values a single real dimension can take.
    fn real_levels(&self) -> Vec<f64> {
        match self.kind {
            AlphabetKind::Bpsk => vec![1.0, -1.0],
            AlphabetKind::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                PAM4_GRAY.iter().map(|v| v * s).collect()
            }
        }
    }

    fn index_from_levels(&self, re: usize, im: usize) -> usize {
        match self.kind {
            AlphabetKind::Bpsk => re,
            AlphabetKind::Qam16 => (re << 2) | im,
        }
    }
}

fn slice_pam4(v: f64) -> usize {
    // Gray code of the amplitude bin -3, -1, +1, +3
    if v < -2.0 {
        0
    } else if v < 0.0 {
        1
    } else if v < 2.0 {
        3
    } else {
        2
    }
}

/// Hard detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Index of the decided point per symbol.
    pub indices: Vec<usize>,
    pub symbols: DVector<Complex64>,
    pub bits: Vec<u8>,
    /// `||y - H x||^2` of the decision.
    pub metric: f64,
}

impl DetectionResult {
    fn from_indices(
        indices: Vec<usize>,
        alphabet: &Alphabet,
        y: &DVector<Complex64>,
        h: &DMatrix<Complex64>,
    ) -> Self {
        let symbols =
            DVector::from_iterator(indices.len(), indices.iter().map(|&i| alphabet.points[i]));
        let metric = (y - h * &symbols).norm_squared();
        let bits = alphabet.indices_to_bits(&indices);
        Self {
            indices,
            symbols,
            bits,
            metric,
        }
    }
}

/// Detector selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    /// Exhaustive ML.
    Ml,
    /// Exact ML by sphere decoding.
    Sphere,
    Mmse,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ml => "ml",
            Self::Sphere => "sphere",
            Self::Mmse => "mmse",
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Detector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(Self::Ml),
            "sphere" => Ok(Self::Sphere),
            "mmse" => Ok(Self::Mmse),
            other => Err(Error::InvalidParameter(format!(
                "unknown detector '{other}' (expected ml, sphere or mmse)"
            ))),
        }
    }
}

/// Runs `detector` on `y = H x + w`. `noise_var` is only used by MMSE.
pub fn detect(
    detector: Detector,
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    alphabet: &Alphabet,
    noise_var: f64,
) -> Result<DetectionResult> {
    match detector {
        Detector::Ml => ml_detect(y, h, alphabet, DEFAULT_CANDIDATE_CAP),
        Detector::Sphere => sphere_detect(y, h, alphabet),
        Detector::Mmse => mmse_detect(y, h, noise_var, alphabet),
    }
}

/// Number of candidate vectors an exhaustive search over `n_sym` symbols visits.
pub fn candidate_count(alphabet: &Alphabet, n_sym: usize) -> f64 {
    (alphabet.size() as f64).powi(n_sym as i32)
}

/// `H diag(phi)` where `phi` repeats over `blocks` consecutive column blocks.
pub fn rotate_columns(
    h: &DMatrix<Complex64>,
    rotation: &PhaseRotation,
    blocks: usize,
) -> Result<DMatrix<Complex64>> {
    let len = rotation.len();
    if h.ncols() != len * blocks {
        return Err(dim_mismatch(format!("{} columns", len * blocks), h.ncols()));
    }
    let mut out = h.clone();
    for (c, mut col) in out.column_iter_mut().enumerate() {
        col *= rotation.factors()[c % len];
    }
    Ok(out)
}

fn check_system(y: &DVector<Complex64>, h: &DMatrix<Complex64>) -> Result<()> {
    if y.len() != h.nrows() {
        return Err(dim_mismatch(format!("received length {}", h.nrows()), y.len()));
    }
    if h.ncols() == 0 {
        return Err(Error::InvalidParameter("channel has no columns".into()));
    }
    Ok(())
}

/// Exhaustive ML over `|A|^ncols(H)` candidates.
pub fn ml_detect(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    alphabet: &Alphabet,
    cap: usize,
) -> Result<DetectionResult> {
    check_system(y, h)?;
    let n = h.ncols();
    let q = alphabet.size();
    let candidates = candidate_count(alphabet, n);
    if candidates > cap as f64 {
        return Err(Error::CandidateCapExceeded { candidates, cap });
    }
    let pts = alphabet.points();

    // Start at all-zero indices.
    let mut digits = vec![0usize; n];
    let x0 = DVector::from_element(n, pts[0]);
    let mut resid = y - h * &x0;
    let mut best = resid.norm_squared();
    let mut best_digits = digits.clone();

    // Loopless reflected mixed-radix Gray enumeration.
    let mut focus: Vec<usize> = (0..=n).collect();
    let mut up = vec![true; n];
    let mut steps = 0usize;
    loop {
        let j = focus[0];
        focus[0] = 0;
        if j == n {
            break;
        }
        let old = digits[j];
        let new = if up[j] { old + 1 } else { old - 1 };
        digits[j] = new;
        if new == 0 || new == q - 1 {
            up[j] = !up[j];
            focus[j] = focus[j + 1];
            focus[j + 1] = j + 1;
        }
        steps += 1;
        if steps.is_multiple_of(RESYNC_INTERVAL) {
            let x = DVector::from_iterator(n, digits.iter().map(|&d| pts[d]));
            resid = y - h * x;
        } else {
            let delta = pts[new] - pts[old];
            resid.axpy(-delta, &h.column(j), Complex64::new(1.0, 0.0));
        }
        let m = resid.norm_squared();
        if m < best {
            best = m;
            best_digits.copy_from_slice(&digits);
        }
    }
    Ok(DetectionResult::from_indices(best_digits, alphabet, y, h))
}

/// Exact ML by Schnorr-Euchner sphere decoding.
///
/// The complex system is rewritten over the reals (one real unknown per BPSK
/// symbol, two per 16-QAM symbol), triangularized by QR and searched depth
/// first with children visited in order of increasing partial distance.
pub fn sphere_detect(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    alphabet: &Alphabet,
) -> Result<DetectionResult> {
    check_system(y, h)?;
    let n_sym = h.ncols();
    let dims = alphabet.real_dims();
    let n = n_sym * dims;
    let rows = h.nrows();
    let real_rows = (2 * rows).max(n);

    let mut hr = DMatrix::<f64>::zeros(real_rows, n);
    let mut yr = DVector::<f64>::zeros(real_rows);
    for r in 0..rows {
        yr[r] = y[r].re;
        yr[rows + r] = y[r].im;
        for c in 0..n_sym {
            let v = h[(r, c)];
            hr[(r, c)] = v.re;
            hr[(rows + r, c)] = v.im;
            if dims == 2 {
                hr[(r, n_sym + c)] = -v.im;
                hr[(rows + r, n_sym + c)] = v.re;
            }
        }
    }

    let qr = hr.qr();
    let rmat = qr.r();
    let z = qr.q().transpose() * yr;
    let levels = alphabet.real_levels();

    let mut search = Sphere {
        r: &rmat,
        z: &z,
        levels: &levels,
        choice: vec![0; n],
        best: vec![0; n],
        best_dist: f64::INFINITY,
    };
    search.descend(n, 0.0);

    let indices = (0..n_sym)
        .map(|c| {
            let im = if dims == 2 { search.best[n_sym + c] } else { 0 };
            alphabet.index_from_levels(search.best[c], im)
        })
        .collect();
    Ok(DetectionResult::from_indices(indices, alphabet, y, h))
}

struct Sphere<'a> {
    r: &'a DMatrix<f64>,
    z: &'a DVector<f64>,
    levels: &'a [f64],
    choice: Vec<usize>,
    best: Vec<usize>,
    best_dist: f64,
}

impl Sphere<'_> {
    /// Fixes dimensions `k..n` already; decides dimension `k - 1`.
    fn descend(&mut self, k: usize, dist: f64) {
        if k == 0 {
            if dist < self.best_dist {
                self.best_dist = dist;
                self.best.copy_from_slice(&self.choice);
            }
            return;
        }
        let i = k - 1;
        let n = self.choice.len();
        let mut target = self.z[i];
        for j in k..n {
            target -= self.r[(i, j)] * self.levels[self.choice[j]];
        }
        let rii = self.r[(i, i)];
        let mut costs: [(f64, usize); 4] = [(f64::INFINITY, 0); 4];
        let nl = self.levels.len();
        for (li, &v) in self.levels.iter().enumerate() {
            let e = target - rii * v;
            costs[li] = (e * e, li);
        }
        costs[..nl].sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        for &(c, li) in &costs[..nl] {
            let d = dist + c;
            if d >= self.best_dist {
                break;
            }
            self.choice[i] = li;
            self.descend(i, d);
        }
    }
}

/// Linear MMSE estimate `(H^H H + noise_var I)^-1 H^H y`, sliced per symbol.
pub fn mmse_detect(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    noise_var: f64,
    alphabet: &Alphabet,
) -> Result<DetectionResult> {
    check_system(y, h)?;
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise variance {noise_var}")));
    }
    let est = mmse_estimate(y, h, noise_var)?;
    let indices = est.iter().map(|&z| alphabet.slice(z)).collect();
    Ok(DetectionResult::from_indices(indices, alphabet, y, h))
}

/// Unsliced MMSE filter output.
pub fn mmse_estimate(
    y: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    noise_var: f64,
) -> Result<DVector<Complex64>> {
    check_system(y, h)?;
    let hh = h.adjoint();
    let mut gram = &hh * h;
    for i in 0..gram.nrows() {
        gram[(i, i)] += noise_var;
    }
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    Ok(chol.solve(&(hh * y)))
}
