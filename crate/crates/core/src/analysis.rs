//! Rank certification of codeword differences, pairwise error bounds and
//! predicted diversity orders.
//!
//! All codeword maps here are real-linear in the information vector, so the
//! difference of two codeword matrices is the codeword matrix of the symbol
//! difference. Pair sums therefore run over distinct difference vectors,
//! each weighted by the number of ordered pairs that produce it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::TapIndex;
use crate::dd::PhaseRotation;
use crate::detect::Alphabet;
use crate::error::{dim_mismatch, Error, Result};
use crate::grid::DdGrid;
use crate::multiant::{
    codeword_matrix, select_antennas, tap_selection_metric, MimoChannel, SystemMode,
};

/// Default cap on codewords for rank scans and bound enumeration.
pub const DEFAULT_CODEWORD_CAP: usize = 1 << 16;

/// Default cap on the multi-index exponent `K (n_r - n_s)`.
pub const DEFAULT_MULTI_INDEX_CAP: usize = 12;

const RANK_TOL: f64 = 1e-9;
const DIFF_CAP: f64 = (1u64 << 24) as f64;

/// Positive eigenvalues of `(Xi - Xj)(Xi - Xj)^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpectrum {
    pub rank: usize,
    /// Non-zero eigenvalues, largest first; `len() == rank`.
    pub eigenvalues: Vec<f64>,
    /// Row dimension `K` of the symbol matrices.
    pub k: usize,
}

impl PairSpectrum {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.k
    }
}

pub fn pair_spectrum(xi: &DMatrix<Complex64>, xj: &DMatrix<Complex64>) -> Result<PairSpectrum> {
    if xi.shape() != xj.shape() {
        return Err(dim_mismatch(
            format!("{:?}", xi.shape()),
            format!("{:?}", xj.shape()),
        ));
    }
    Ok(difference_spectrum(&(xi - xj)))
}

/// Spectrum of a difference matrix given directly.
pub fn difference_spectrum(diff: &DMatrix<Complex64>) -> PairSpectrum {
    let k = diff.nrows();
    if diff.is_empty() {
        return PairSpectrum {
            rank: 0,
            eigenvalues: Vec::new(),
            k,
        };
    }
    let mut sv: Vec<f64> = diff.singular_values().iter().copied().collect();
    sv.sort_unstable_by(|a, b| b.total_cmp(a));
    let smax = sv[0];
    let eigenvalues: Vec<f64> = if smax > 0.0 {
        sv.iter()
            .take_while(|&&s| s > RANK_TOL * smax)
            .map(|s| s * s)
            .collect()
    } else {
        Vec::new()
    };
    PairSpectrum {
        rank: eigenvalues.len(),
        eigenvalues,
        k,
    }
}

/// Enumerable set of codeword matrices for one system configuration.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub mode: SystemMode,
    pub n_t: usize,
    pub grid: DdGrid,
    pub taps: Vec<TapIndex>,
    pub alphabet: Alphabet,
    pub rotation: Option<PhaseRotation>,
}

/// Distinct codeword difference and how often it occurs.
#[derive(Debug, Clone)]
pub struct PairClass {
    /// Point-index pair `(i, j)` per symbol realising the difference.
    pub example: (Vec<usize>, Vec<usize>),
    /// Ordered pairs producing this difference, per codeword (count / L).
    pub weight: f64,
    pub spectrum: PairSpectrum,
}

struct DiffSymbol {
    value: Complex64,
    count: usize,
    example: (usize, usize),
}

impl Codebook {
    pub fn new(
        mode: SystemMode,
        n_t: usize,
        grid: DdGrid,
        taps: Vec<TapIndex>,
        alphabet: Alphabet,
        rotation: Option<PhaseRotation>,
    ) -> Result<Self> {
        mode.check_n_t(n_t)?;
        if taps.is_empty() {
            return Err(Error::InvalidParameter("codebook needs at least one tap".into()));
        }
        crate::channel::check_distinct(&taps)?;
        Ok(Self {
            mode,
            n_t,
            grid,
            taps,
            alphabet,
            rotation,
        })
    }

    pub fn num_symbols(&self) -> usize {
        self.mode.symbols_per_codeword(self.n_t, self.grid.len())
    }

    /// `L = |A|^(symbols per codeword)`.
    pub fn num_codewords(&self) -> f64 {
        (self.alphabet.size() as f64).powi(self.num_symbols() as i32)
    }

    pub fn bits_per_codeword(&self) -> usize {
        self.num_symbols() * self.alphabet.bits_per_symbol()
    }

    /// Row dimension `K`.
    pub fn k(&self) -> usize {
        self.mode.codeword_rows(self.n_t, self.taps.len())
    }

    pub fn num_paths(&self) -> usize {
        self.taps.len()
    }

    /// Codeword matrix for point indices `idx`.
    pub fn matrix(&self, idx: &[usize]) -> Result<DMatrix<Complex64>> {
        let pts = self.alphabet.points();
        let x = DVector::from_iterator(idx.len(), idx.iter().map(|&i| pts[i]));
        self.matrix_of(&x)
    }

    fn matrix_of(&self, x: &DVector<Complex64>) -> Result<DMatrix<Complex64>> {
        Ok(codeword_matrix(
            self.mode,
            self.n_t,
            x,
            &self.taps,
            &self.grid,
            self.rotation.as_ref(),
        )?
        .into_matrix())
    }

    fn check_cap(&self, cap: usize) -> Result<()> {
        let candidates = self.num_codewords();
        if candidates > cap as f64 {
            return Err(Error::CandidateCapExceeded { candidates, cap });
        }
        Ok(())
    }

    fn diff_symbols(&self) -> Vec<DiffSymbol> {
        let pts = self.alphabet.points();
        let mut out: Vec<DiffSymbol> = Vec::new();
        for (i, a) in pts.iter().enumerate() {
            for (j, b) in pts.iter().enumerate() {
                let d = a - b;
                match out.iter_mut().find(|e| (e.value - d).norm() < 1e-9) {
                    Some(e) => e.count += 1,
                    None => out.push(DiffSymbol {
                        value: d,
                        count: 1,
                        example: (i, j),
                    }),
                }
            }
        }
        // zero difference first so the odometer starts at the zero vector
        out.sort_by(|x, y| x.value.norm().total_cmp(&y.value.norm()));
        out
    }

    /// Every distinct non-zero difference with its pair weight and spectrum.
    pub fn pair_classes(&self, cap: usize) -> Result<Vec<PairClass>> {
        self.check_cap(cap)?;
        let ds = self.diff_symbols();
        let n = self.num_symbols();
        let q = self.alphabet.size() as f64;
        let total = (ds.len() as f64).powi(n as i32);
        if total > DIFF_CAP {
            return Err(Error::CandidateCapExceeded {
                candidates: total,
                cap: DIFF_CAP as usize,
            });
        }
        let mut digits = vec![0usize; n];
        let mut out = Vec::new();
        while advance(&mut digits, ds.len()) {
            let x = DVector::from_iterator(n, digits.iter().map(|&d| ds[d].value));
            let spectrum = difference_spectrum(&self.matrix_of(&x)?);
            let weight = digits.iter().map(|&d| ds[d].count as f64 / q).product();
            let example = (
                digits.iter().map(|&d| ds[d].example.0).collect(),
                digits.iter().map(|&d| ds[d].example.1).collect(),
            );
            out.push(PairClass {
                example,
                weight,
                spectrum,
            });
        }
        Ok(out)
    }
}

/// Odometer increment; false once it wraps back to all zeros.
fn advance(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Result of an exhaustive rank scan.
#[derive(Debug, Clone, PartialEq)]
pub struct RankScan {
    pub min_rank: usize,
    pub k: usize,
    /// Point indices of one ordered pair achieving the minimum.
    pub example: (Vec<usize>, Vec<usize>),
    /// Fraction of distinct ordered pairs at the minimum rank.
    pub fraction_at_min: f64,
}

/// Minimum rank of `Xi - Xj` over all distinct codeword pairs.
pub fn min_rank_scan(codebook: &Codebook, cap: usize) -> Result<RankScan> {
    let classes = codebook.pair_classes(cap)?;
    let first = classes
        .iter()
        .min_by_key(|c| c.spectrum.rank)
        .ok_or_else(|| Error::InvalidParameter("codebook has a single codeword".into()))?;
    let min_rank = first.spectrum.rank;
    let at_min: f64 = classes
        .iter()
        .filter(|c| c.spectrum.rank == min_rank)
        .map(|c| c.weight)
        .sum();
    let distinct: f64 = classes.iter().map(|c| c.weight).sum();
    Ok(RankScan {
        min_rank,
        k: codebook.k(),
        example: first.example.clone(),
        fraction_at_min: at_min / distinct,
    })
}

/// Constant `rho` in front of the pairwise bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RhoConvention {
    /// `rho = sqrt(P)^(n_s K)`.
    Published,
    /// `rho = 1`: the substitution `s = sqrt(P) h` has Jacobian `P^(n_s K)`,
    /// which exactly cancels the density normalisation.
    UnitJacobian,
}

impl RhoConvention {
    pub fn value(self, p: usize, n_s: usize, k: usize) -> f64 {
        match self {
            Self::Published => (p as f64).sqrt().powi((n_s * k) as i32),
            Self::UnitJacobian => 1.0,
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn check_antennas(n_r: usize, n_s: usize) -> Result<()> {
    if n_s == 0 || n_s > n_r {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= n_s <= n_r, got n_s={n_s}, n_r={n_r}"
        )));
    }
    Ok(())
}

fn check_multi_index(k: usize, n_r: usize, n_s: usize, cap: usize) -> Result<usize> {
    let exponent = k * (n_r - n_s);
    if exponent > cap {
        return Err(Error::MultiIndexCapExceeded { exponent, cap });
    }
    Ok(exponent)
}

/// `rho n_r! / ((n_r - n_s)! (n_s - 1)! (K!)^(n_r - n_s))`.
fn prefactor(k: usize, n_r: usize, n_s: usize, p: usize, rho: RhoConvention) -> f64 {
    rho.value(p, n_s, k) * factorial(n_r)
        / (factorial(n_r - n_s) * factorial(n_s - 1) * factorial(k).powi((n_r - n_s) as i32))
}

/// `sum over (i_1..i_n) in {1..K}^n of prod_j m_j! x_j^(m_j)`, with `m_j` the
/// multiplicity of `j`.
///
/// Grouping multi-indices by multiplicity vector turns the sum into
/// `n! h_n(x)`, where `h_n` is the complete homogeneous symmetric polynomial.
pub fn multi_index_sum(x: &[f64], n: usize) -> f64 {
    // h[d] = h_d(x_1..x_k) for the variables seen so far
    let mut h = vec![0.0; n + 1];
    h[0] = 1.0;
    for &xi in x {
        for d in 1..=n {
            h[d] += xi * h[d - 1];
        }
    }
    factorial(n) * h[n]
}

/// `psi_0`: the multi-index sum restricted to indices in `{r+1..K}`.
pub fn psi0(k: usize, r: usize, n: usize) -> f64 {
    multi_index_sum(&vec![1.0; k - r], n)
}

/// Full-rank high-SNR pairwise error bound.
pub fn pep_bound_full_rank(
    spectrum: &PairSpectrum,
    gamma: f64,
    n_r: usize,
    n_s: usize,
    p: usize,
    rho: RhoConvention,
) -> Result<f64> {
    check_antennas(n_r, n_s)?;
    let k = spectrum.k;
    if !spectrum.is_full_rank() {
        return Err(Error::RankDeficient {
            rank: spectrum.rank,
            dim: k,
        });
    }
    let n = check_multi_index(k, n_r, n_s, DEFAULT_MULTI_INDEX_CAP)?;
    let lam = &spectrum.eigenvalues;
    let prod: f64 = lam.iter().product();
    let inv: Vec<f64> = lam.iter().map(|l| 1.0 / l).collect();
    let snr = gamma / (4.0 * p as f64);
    Ok(prefactor(k, n_r, n_s, p, rho)
        * prod.powi(-(n_s as i32))
        * multi_index_sum(&inv, n)
        * snr.powi(-((k * n_r) as i32)))
}

/// Rank-deficient high-SNR pairwise error bound.
pub fn pep_bound_rank_deficient(
    spectrum: &PairSpectrum,
    gamma: f64,
    n_r: usize,
    n_s: usize,
    p: usize,
    rho: RhoConvention,
) -> Result<f64> {
    check_antennas(n_r, n_s)?;
    let (k, r) = (spectrum.k, spectrum.rank);
    if r == 0 {
        return Err(Error::InvalidParameter("identical codewords have no PEP".into()));
    }
    if r >= k {
        return Err(Error::InvalidParameter(format!(
            "rank {r} equals K = {k}; use the full-rank bound"
        )));
    }
    let n = check_multi_index(k, n_r, n_s, DEFAULT_MULTI_INDEX_CAP)?;
    let prod: f64 = spectrum.eigenvalues.iter().product();
    let snr = gamma / (4.0 * p as f64);
    Ok(prefactor(k, n_r, n_s, p, rho)
        * prod.powi(-(n_s as i32))
        * psi0(k, r, n)
        * snr.powi(-((r * n_s) as i32)))
}

/// Full-rank or rank-deficient bound, whichever applies.
pub fn pep_bound(
    spectrum: &PairSpectrum,
    gamma: f64,
    n_r: usize,
    n_s: usize,
    p: usize,
    rho: RhoConvention,
) -> Result<f64> {
    if spectrum.is_full_rank() {
        pep_bound_full_rank(spectrum, gamma, n_r, n_s, p, rho)
    } else {
        pep_bound_rank_deficient(spectrum, gamma, n_r, n_s, p, rho)
    }
}

/// Union upper and rank-one lower BER bounds for one codebook.
#[derive(Debug, Clone)]
pub struct BerBounds {
    classes: Vec<PairClass>,
    bits_per_codeword: usize,
    n_r: usize,
    n_s: usize,
    p: usize,
    rho: RhoConvention,
}

impl BerBounds {
    pub fn new(codebook: &Codebook, n_r: usize, n_s: usize, rho: RhoConvention) -> Result<Self> {
        check_antennas(n_r, n_s)?;
        check_multi_index(codebook.k(), n_r, n_s, DEFAULT_MULTI_INDEX_CAP)?;
        Ok(Self {
            classes: codebook.pair_classes(DEFAULT_CODEWORD_CAP)?,
            bits_per_codeword: codebook.bits_per_codeword(),
            n_r,
            n_s,
            p: codebook.num_paths(),
            rho,
        })
    }

    pub fn classes(&self) -> &[PairClass] {
        &self.classes
    }

    fn sum(&self, gamma: f64, rank_one_only: bool) -> Result<f64> {
        let mut acc = 0.0;
        for c in &self.classes {
            if rank_one_only && c.spectrum.rank != 1 {
                continue;
            }
            let pep = pep_bound(&c.spectrum, gamma, self.n_r, self.n_s, self.p, self.rho)?;
            acc += c.weight * pep.min(1.0);
        }
        Ok(acc / self.bits_per_codeword as f64)
    }

    /// `(1 / (L b)) sum_{i != j} PEP(i -> j)`, `b` bits per codeword.
    pub fn union(&self, gamma: f64) -> Result<f64> {
        self.sum(gamma, false)
    }

    /// Same sum restricted to rank-one pairs.
    pub fn lower(&self, gamma: f64) -> Result<f64> {
        self.sum(gamma, true)
    }
}

pub fn union_bound_ber(bounds: &BerBounds, gamma: f64) -> Result<f64> {
    bounds.union(gamma)
}

pub fn lower_bound_ber(bounds: &BerBounds, gamma: f64) -> Result<f64> {
    bounds.lower(gamma)
}

/// Minimum rank the structure of each scheme implies.
pub fn predicted_min_rank(
    mode: SystemMode,
    n_t: usize,
    p: usize,
    phase_rotation: bool,
) -> Result<usize> {
    mode.check_n_t(n_t)?;
    Ok(match (mode, p, phase_rotation) {
        (SystemMode::Simo, 1, _) => 1,
        (SystemMode::Stc, 1, _) => 2,
        (SystemMode::Simo | SystemMode::Mimo, _, false) => 1,
        (SystemMode::Simo | SystemMode::Mimo, _, true) => p,
        (SystemMode::Stc, _, false) => 2,
        (SystemMode::Stc, _, true) => 2 * p,
    })
}

/// Diversity implied by the bounds: `n_r K` at full rank, `r n_s` otherwise.
pub fn diversity_from_rank(rank: usize, k: usize, n_r: usize, n_s: usize) -> usize {
    if rank == k {
        n_r * k
    } else {
        rank * n_s
    }
}

/// Diversity order per scheme, antenna counts, path count and rotation.
pub fn predicted_diversity(
    mode: SystemMode,
    n_t: usize,
    n_r: usize,
    n_s: usize,
    p: usize,
    phase_rotation: bool,
) -> Result<usize> {
    check_antennas(n_r, n_s)?;
    if p == 0 {
        return Err(Error::InvalidParameter("P must be at least 1".into()));
    }
    mode.check_n_t(n_t)
        .map_err(|e| Error::Unsupported(e.to_string()))?;
    Ok(match mode {
        SystemMode::Simo if p == 1 => n_r,
        SystemMode::Simo if phase_rotation => n_r * p,
        SystemMode::Simo => n_s,
        SystemMode::Mimo => {
            if n_s < n_t {
                return Err(Error::Unsupported(format!(
                    "MIMO needs n_s >= n_t, got n_s={n_s}, n_t={n_t}"
                )));
            }
            if phase_rotation {
                n_s * p
            } else {
                n_s
            }
        }
        SystemMode::Stc if p == 1 => 2 * n_r,
        SystemMode::Stc if phase_rotation => 2 * n_r * p,
        SystemMode::Stc => 2 * n_s,
    })
}

/// Regularized lower incomplete Gamma `1 - e^-u sum_{m<k} u^m/m!`.
pub fn incomplete_gamma(k: usize, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u < k as f64 + 20.0 {
        // tail series e^-u sum_{m>=k} u^m/m!, accurate for small u
        let mut term = (-u).exp();
        for m in 1..=k {
            term *= u / m as f64;
        }
        let mut acc: f64 = 0.0;
        let mut m = k;
        while term > 1e-18 * acc.max(f64::MIN_POSITIVE) || m < k + 5 {
            acc += term;
            m += 1;
            term *= u / m as f64;
            if m > k + 1000 {
                break;
            }
        }
        acc.min(1.0)
    } else {
        let mut term = (-u).exp();
        let mut acc = 0.0;
        for m in 0..k {
            if m > 0 {
                term *= u / m as f64;
            }
            acc += term;
        }
        1.0 - acc
    }
}

/// Outcome of the selected-norm distribution check.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderStatCheck {
    /// Kolmogorov-Smirnov distance to `F(u)^n_r`.
    pub ks: f64,
    pub samples: usize,
    /// Whether the selected metric was the largest in every draw.
    pub selected_is_max: bool,
}

/// Compares the selected antenna's tap-domain squared norm against the
/// largest order statistic of `n_r` i.i.d. `Gamma(n_t P, 1/P)` variables.
pub fn order_statistic_density_check<R: Rng + ?Sized>(
    n_r: usize,
    n_s: usize,
    n_t: usize,
    p: usize,
    samples: usize,
    rng: &mut R,
) -> Result<OrderStatCheck> {
    if n_s != 1 {
        return Err(Error::Unsupported(format!(
            "order-statistic check covers n_s = 1, got {n_s}"
        )));
    }
    check_antennas(n_r, n_s)?;
    const POSITIONS: [(i64, i64); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];
    if p == 0 || p > POSITIONS.len() || n_t == 0 || samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= P <= 4, n_t >= 1 and samples > 0, got P={p}, n_t={n_t}"
        )));
    }
    let taps: Vec<TapIndex> = POSITIONS[..p]
        .iter()
        .map(|&(a, b)| TapIndex::new(a, b))
        .collect();
    let grid = DdGrid::with_default_spacing(2, 2)?;
    let mut values = Vec::with_capacity(samples);
    let mut selected_is_max = true;
    for _ in 0..samples {
        let mimo = MimoChannel::random_integer(grid, n_r, n_t, &taps, rng)?;
        let sel = select_antennas(&mimo, 1)?;
        let chosen = sel.selected[0];
        let v = tap_selection_metric(&mimo, chosen)?;
        for rx in 0..n_r {
            if tap_selection_metric(&mimo, rx)? > v {
                selected_is_max = false;
            }
        }
        values.push(v);
    }
    let k = n_t * p;
    let pf = p as f64;
    let cdf = |u: f64| incomplete_gamma(k, pf * u).powi(n_r as i32);
    Ok(OrderStatCheck {
        ks: ks_distance(&mut values, cdf),
        samples,
        selected_is_max,
    })
}

/// One-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(values: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
