//! Random delay-Doppler channel realizations.
//!
//! A channel is a short list of propagation paths. Each path sits at a
//! delay `(alpha + a)/(M delta_f)` and a Doppler `(beta + b)/(N T)`, where
//! `alpha`, `beta` are the nearest bins and `a`, `b` in `(-1/2, 1/2]` are
//! the fractional offsets. Integer-tap channels have `a = b = 0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dd::{build_channel_matrix, EffChannelMatrix};
use crate::error::{Error, Result};
use crate::grid::DdGrid;

/// Integer delay/Doppler bin of a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TapIndex {
    /// Delay bin.
    pub alpha: i64,
    /// Doppler bin.
    pub beta: i64,
}

impl TapIndex {
    pub const fn new(alpha: i64, beta: i64) -> Self {
        Self { alpha, beta }
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdPath {
    pub gain: Complex64,
    /// Delay in seconds.
    pub delay: f64,
    /// Doppler shift in Hz.
    pub doppler: f64,
    pub alpha: i64,
    pub beta: i64,
    pub frac_a: f64,
    pub frac_b: f64,
}

impl DdPath {
    /// Path sitting exactly on delay bin `alpha` and Doppler bin `beta`.
    pub fn on_grid(gain: Complex64, tap: TapIndex, grid: &DdGrid) -> Self {
        Self {
            gain,
            delay: tap.alpha as f64 * grid.delay_resolution(),
            doppler: tap.beta as f64 * grid.doppler_resolution(),
            alpha: tap.alpha,
            beta: tap.beta,
            frac_a: 0.0,
            frac_b: 0.0,
        }
    }

    /// Path at an arbitrary delay/Doppler, split into nearest bin and
    /// fractional offset.
    pub fn off_grid(gain: Complex64, delay: f64, doppler: f64, grid: &DdGrid) -> Self {
        let (alpha, frac_a) = split_nearest(delay / grid.delay_resolution());
        let (beta, frac_b) = split_nearest(doppler / grid.doppler_resolution());
        Self {
            gain,
            delay,
            doppler,
            alpha,
            beta,
            frac_a,
            frac_b,
        }
    }

    pub fn tap(&self) -> TapIndex {
        TapIndex::new(self.alpha, self.beta)
    }

    pub fn is_integer(&self) -> bool {
        self.frac_a == 0.0 && self.frac_b == 0.0
    }

    /// Gain seen in the delay-Doppler relation, `h e^{-j 2 pi nu tau}`.
    pub fn effective_gain(&self) -> Complex64 {
        self.gain * Complex64::from_polar(1.0, -2.0 * PI * self.doppler * self.delay)
    }
}

/// Splits `x` into the nearest integer and a remainder in `(-1/2, 1/2]`.
pub fn split_nearest(x: f64) -> (i64, f64) {
    let i = (x - 0.5).ceil();
    (i as i64, x - i)
}

/// A channel realization: an immutable list of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct DdChannel {
    paths: Vec<DdPath>,
}

impl DdChannel {
    pub fn new(paths: Vec<DdPath>) -> Self {
        Self { paths }
    }

    /// Integer-tap channel with the given gains and taps.
    pub fn from_taps(gains: &[Complex64], taps: &[TapIndex], grid: &DdGrid) -> Result<Self> {
        if gains.len() != taps.len() {
            return Err(Error::InvalidParameter(format!(
                "{} gains for {} taps",
                gains.len(),
                taps.len()
            )));
        }
        check_distinct(taps)?;
        Ok(Self::new(
            gains
                .iter()
                .zip(taps)
                .map(|(&g, &t)| DdPath::on_grid(g, t, grid))
                .collect(),
        ))
    }

    pub fn paths(&self) -> &[DdPath] {
        &self.paths
    }

    /// Number of paths `P`.
    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn is_integer(&self) -> bool {
        self.paths.iter().all(DdPath::is_integer)
    }

    pub fn taps(&self) -> Vec<TapIndex> {
        self.paths.iter().map(DdPath::tap).collect()
    }

    /// Effective per-path gains `h'_i`.
    pub fn effective_gains(&self) -> Vec<Complex64> {
        self.paths.iter().map(DdPath::effective_gain).collect()
    }

    /// `sum_i |h_i|^2`.
    pub fn energy(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

pub(crate) fn check_distinct(taps: &[TapIndex]) -> Result<()> {
    for (i, a) in taps.iter().enumerate() {
        if taps[..i].contains(a) {
            return Err(Error::DuplicateTap {
                alpha: a.alpha,
                beta: a.beta,
            });
        }
    }
    Ok(())
}

/// Draws a circularly symmetric complex Gaussian with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Named tap layouts used by the reproduction experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapPreset {
    /// `P = 1`: one path at bin (1, 1).
    P1,
    /// `P = 2` for `N = 2`: bins (0, 0) and (1, 1).
    P2M2,
    /// `P = 2` for `M = N = 4`: bins (1, 1) and (2, 2).
    P2M4,
    /// `P = 4` for `M = N = 2`: every bin of the 2x2 grid.
    P4,
}

impl TapPreset {
    pub fn taps(self) -> Vec<TapIndex> {
        let t = TapIndex::new;
        match self {
            TapPreset::P1 => vec![t(1, 1)],
            TapPreset::P2M2 => vec![t(0, 0), t(1, 1)],
            TapPreset::P2M4 => vec![t(1, 1), t(2, 2)],
            TapPreset::P4 => vec![t(0, 0), t(0, 1), t(1, 0), t(1, 1)],
        }
    }

    pub fn num_paths(self) -> usize {
        self.taps().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            TapPreset::P1 => "p1",
            TapPreset::P2M2 => "p2-m2",
            TapPreset::P2M4 => "p2-m4",
            TapPreset::P4 => "p4",
        }
    }
}

impl fmt::Display for TapPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TapPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p1" => Ok(TapPreset::P1),
            "p2-m2" => Ok(TapPreset::P2M2),
            "p2-m4" => Ok(TapPreset::P2M4),
            "p4" => Ok(TapPreset::P4),
            other => Err(Error::InvalidParameter(format!(
                "unknown channel preset '{other}' (expected p1, p2-m2, p2-m4 or p4)"
            ))),
        }
    }
}

/// Integer-tap channel with i.i.d. `CN(0, 1/P)` gains on the given taps.
pub fn gen_integer_channel<R: Rng + ?Sized>(
    taps: &[TapIndex],
    grid: &DdGrid,
    rng: &mut R,
) -> Result<DdChannel> {
    if taps.is_empty() {
        return Err(Error::InvalidParameter("channel needs at least one tap".into()));
    }
    check_distinct(taps)?;
    let var = 1.0 / taps.len() as f64;
    Ok(DdChannel::new(
        taps.iter()
            .map(|&t| DdPath::on_grid(complex_gaussian(rng, var), t, grid))
            .collect(),
    ))
}

/// Parameters of the fractional (Jakes / exponential power-delay) model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalProfile {
    pub num_paths: usize,
    /// Maximum Doppler shift in Hz.
    pub nu_max: f64,
    /// Decay constant of the power-delay profile: path `i` (sorted by delay)
    /// gets power proportional to `exp(-i / (decay * P))`.
    pub pdp_decay: f64,
}

impl FractionalProfile {
    pub fn new(num_paths: usize, nu_max: f64) -> Self {
        Self {
            num_paths,
            nu_max,
            pdp_decay: 1.0,
        }
    }

    /// Normalized path powers, summing to one.
    pub fn path_powers(&self) -> Vec<f64> {
        let p = self.num_paths as f64;
        let raw: Vec<f64> = (0..self.num_paths)
            .map(|i| (-(i as f64) / (self.pdp_decay * p)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Channel with fractional delays and Dopplers.
///
/// Doppler of path `i` is `nu_max cos(theta_i)` with `theta_i` uniform on
/// `[-pi, pi]`; delays are uniform on `[0, (M-1)/(M delta_f)]`.
pub fn gen_fractional_channel<R: Rng + ?Sized>(
    profile: &FractionalProfile,
    grid: &DdGrid,
    rng: &mut R,
) -> Result<DdChannel> {
    if profile.num_paths == 0 {
        return Err(Error::InvalidParameter("channel needs at least one path".into()));
    }
    if profile.nu_max.is_nan() || profile.nu_max <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "nu_max must be positive, got {}",
            profile.nu_max
        )));
    }
    if profile.pdp_decay.is_nan() || profile.pdp_decay <= 0.0 {
        return Err(Error::InvalidParameter("pdp_decay must be positive".into()));
    }
    let max_delay = (grid.m() - 1) as f64 * grid.delay_resolution();
    let mut delays: Vec<f64> = (0..profile.num_paths)
        .map(|_| rng.gen::<f64>() * max_delay)
        .collect();
    delays.sort_by(f64::total_cmp);
    let powers = profile.path_powers();
    let paths = delays
        .into_iter()
        .zip(powers)
        .map(|(delay, power)| {
            let theta = rng.gen_range(-PI..=PI);
            let doppler = profile.nu_max * theta.cos();
            DdPath::off_grid(complex_gaussian(rng, power), delay, doppler, grid)
        })
        .collect();
    Ok(DdChannel::new(paths))
}

/// Delay spreading coefficient for bin offset `q` and fractional delay `a`:
/// `(e^{j2pi z} - 1) / (M e^{j2pi z/M} - M)` with `z = -q - a`.
pub fn delay_kernel(q: usize, a: f64, m: usize) -> Complex64 {
    dirichlet(-(q as f64) - a, m, 1.0)
}

/// Doppler spreading coefficient for bin offset `q'` and fractional Doppler
/// `b`: `(e^{-j2pi w} - 1) / (N e^{-j2pi w/N} - N)` with `w = -q' - b`.
pub fn doppler_kernel(q: usize, b: f64, n: usize) -> Complex64 {
    dirichlet(-(q as f64) - b, n, -1.0)
}

// (e^{s j2pi z} - 1) / (len (e^{s j2pi z/len} - 1)), written as a phase
// times a ratio of sines so the removable singularity at z = 0 is exact.
fn dirichlet(z: f64, len: usize, sign: f64) -> Complex64 {
    let len_f = len as f64;
    if z.fract() == 0.0 {
        let r = (z as i64).rem_euclid(len as i64);
        return if r == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let ratio = (PI * z).sin() / (len_f * (PI * z / len_f).sin());
    Complex64::from_polar(ratio, sign * PI * z * (1.0 - 1.0 / len_f))
}

/// Dense effective channel for a channel with fractional offsets.
///
/// Every path spreads over all `(q, q')` bin offsets with weight
/// `delay_kernel(q, a) * doppler_kernel(q', b) * h'`, feeding output bin
/// `(k, l)` from input bin `((k - beta + q')_N, (l - alpha + q)_M)`. No
/// truncation of the spreading sums is applied.
pub fn build_fractional_channel_matrix(ch: &DdChannel, grid: &DdGrid) -> EffChannelMatrix {
    let (m, n) = (grid.m(), grid.n());
    let mn = grid.len();
    let mut dense = DMatrix::zeros(mn, mn);
    for path in ch.paths() {
        let g = path.effective_gain();
        let delay: Vec<Complex64> = (0..m).map(|q| delay_kernel(q, path.frac_a, m)).collect();
        let doppler: Vec<Complex64> = (0..n).map(|q| doppler_kernel(q, path.frac_b, n)).collect();
        for (q, dc) in delay.iter().enumerate() {
            for (qp, pc) in doppler.iter().enumerate() {
                let coef = dc * pc * g;
                if coef == Complex64::default() {
                    continue;
                }
                let dk = qp as i64 - path.beta;
                let dl = q as i64 - path.alpha;
                for l in 0..m {
                    for k in 0..n {
                        dense[(k + n * l, grid.shifted_index(k, l, dk, dl))] += coef;
                    }
                }
            }
        }
    }
    EffChannelMatrix::from_dense(dense)
}

/// Effective channel of any realization: the tap builder for integer
/// channels, the spreading builder otherwise.
pub fn effective_channel(ch: &DdChannel, grid: &DdGrid) -> Result<EffChannelMatrix> {
    if ch.is_integer() {
        build_channel_matrix(ch, grid)
    } else {
        Ok(build_fractional_channel_matrix(ch, grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(m: usize, n: usize) -> DdGrid {
        DdGrid::with_default_spacing(m, n).unwrap()
    }

    #[test]
    fn presets_match_table() {
        assert_eq!(TapPreset::P1.taps(), vec![TapIndex::new(1, 1)]);
        assert_eq!(
            TapPreset::P4.taps(),
            vec![
                TapIndex::new(0, 0),
                TapIndex::new(0, 1),
                TapIndex::new(1, 0),
                TapIndex::new(1, 1)
            ]
        );
        for p in [TapPreset::P1, TapPreset::P2M2, TapPreset::P2M4, TapPreset::P4] {
            assert_eq!(p.name().parse::<TapPreset>().unwrap(), p);
        }
        assert!("p3".parse::<TapPreset>().is_err());
    }

    #[test]
    fn p1_preset_sits_on_first_bins() {
        let g = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = gen_integer_channel(&TapPreset::P1.taps(), &g, &mut rng).unwrap();
        let p = ch.paths()[0];
        assert!((p.delay - 1.0 / (2.0 * g.delta_f())).abs() < 1e-18);
        assert!((p.doppler - 1.0 / (2.0 * g.symbol_time())).abs() < 1e-9);
        // nu*tau = alpha*beta/(MN)
        let phase = (p.effective_gain() / p.gain).arg();
        assert!((phase + 2.0 * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_taps_rejected() {
        let g = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let taps = [TapIndex::new(1, 0), TapIndex::new(1, 0)];
        assert_eq!(
            gen_integer_channel(&taps, &g, &mut rng),
            Err(Error::DuplicateTap { alpha: 1, beta: 0 })
        );
    }

    #[test]
    fn integer_gain_second_moment() {
        let g = grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let taps = TapPreset::P2M2.taps();
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| gen_integer_channel(&taps, &g, &mut rng).unwrap().energy())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean energy {mean}");
    }

    #[test]
    fn nearest_split() {
        assert_eq!(split_nearest(2.5), (2, 0.5));
        assert_eq!(split_nearest(2.4).0, 2);
        let (i, f) = split_nearest(2.6);
        assert_eq!(i, 3);
        assert!((f + 0.4).abs() < 1e-12);
        let (i, f) = split_nearest(-0.7);
        assert_eq!(i, -1);
        assert!((f - 0.3).abs() < 1e-12);
    }

    #[test]
    fn max_doppler_path_offset() {
        // theta = 0 gives nu = nu_max; b is the offset of nu_max N T from its
        // nearest integer.
        let g = grid(2, 2);
        let nu_max = 1875.0;
        let p = DdPath::off_grid(Complex64::new(1.0, 0.0), 0.0, nu_max, &g);
        let scaled = nu_max * g.n() as f64 * g.symbol_time();
        assert_eq!(p.beta, scaled.round() as i64);
        assert!((p.frac_b - (scaled - scaled.round())).abs() < 1e-12);
    }

    #[test]
    fn grid_delays_have_no_fraction() {
        let g = grid(4, 4);
        for alpha in 0..4 {
            let p = DdPath::off_grid(
                Complex64::new(1.0, 0.0),
                alpha as f64 * g.delay_resolution(),
                0.3 * g.doppler_resolution(),
                &g,
            );
            assert_eq!(p.alpha, alpha);
            assert!(p.frac_a.abs() < 1e-12);
        }
    }

    #[test]
    fn fractional_doppler_support() {
        let g = grid(4, 4);
        let profile = FractionalProfile::new(3, 1875.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let max_delay = 3.0 * g.delay_resolution();
        for _ in 0..100_000 / 3 {
            let ch = gen_fractional_channel(&profile, &g, &mut rng).unwrap();
            for p in ch.paths() {
                assert!(p.doppler.abs() <= profile.nu_max);
                assert!(p.delay >= 0.0 && p.delay <= max_delay);
                assert!(p.frac_a > -0.5 && p.frac_a <= 0.5);
                assert!(p.frac_b > -0.5 && p.frac_b <= 0.5);
            }
        }
        assert!(gen_fractional_channel(&FractionalProfile::new(2, 0.0), &g, &mut rng).is_err());
    }

    #[test]
    fn pdp_is_normalized_and_decaying() {
        let w = FractionalProfile::new(5, 100.0).path_powers();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[1] < p[0]));
    }

    fn kernel_closed_form(z: f64, len: usize, sign: f64) -> Complex64 {
        let j2pi = Complex64::new(0.0, sign * 2.0 * PI);
        ((j2pi * z).exp() - 1.0) / ((j2pi * z / len as f64).exp() * len as f64 - len as f64)
    }

    #[test]
    fn kernels_match_closed_form() {
        for &m in &[2usize, 3, 4, 8] {
            for q in 0..m {
                for &a in &[0.5, 0.25, -0.3, 0.01, -0.49] {
                    let fast = delay_kernel(q, a, m);
                    let slow = kernel_closed_form(-(q as f64) - a, m, 1.0);
                    assert!((fast - slow).norm() < 1e-12, "m={m} q={q} a={a}");
                    let fast = doppler_kernel(q, a, m);
                    let slow = kernel_closed_form(-(q as f64) - a, m, -1.0);
                    assert!((fast - slow).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kernels_collapse_to_delta_on_grid() {
        for &m in &[1usize, 2, 4, 7] {
            for q in 0..m {
                let expect = if q == 0 { 1.0 } else { 0.0 };
                assert!((delay_kernel(q, 0.0, m) - expect).norm() < 1e-12);
                assert!((doppler_kernel(q, 0.0, m) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_energy_is_unit() {
        for &m in &[2usize, 4, 16] {
            for &a in &[0.5, 0.1, -0.2] {
                let e: f64 = (0..m).map(|q| delay_kernel(q, a, m).norm_sqr()).sum();
                assert!((e - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fractional_builder_reduces_to_integer_builder() {
        let g = grid(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let ch = gen_integer_channel(&TapPreset::P2M4.taps(), &g, &mut rng).unwrap();
            let a = build_fractional_channel_matrix(&ch, &g);
            let b = build_channel_matrix(&ch, &g).unwrap();
            assert!((a.dense() - b.dense()).map(|v| v.norm()).max() < 1e-10);
        }
    }

    #[test]
    fn half_bin_delay_fills_delay_axis() {
        let g = grid(2, 2);
        let mut path = DdPath::on_grid(Complex64::new(1.0, 0.0), TapIndex::new(0, 0), &g);
        path.frac_a = 0.5;
        path.delay = 0.5 * g.delay_resolution();
        let h = build_fractional_channel_matrix(&DdChannel::new(vec![path]), &g);
        for k in 0..2 {
            for l in 0..2 {
                let row = k + 2 * l;
                // both delay bins at Doppler bin k are reached
                for ll in 0..2 {
                    assert!(h.dense()[(row, k + 2 * ll)].norm() > 1e-3);
                }
            }
        }
    }

    #[test]
    fn fractional_rows_conserve_energy_on_average() {
        let g = grid(4, 4);
        let profile = FractionalProfile::new(3, 1875.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let draws = 1000;
        let (mut row_energy, mut gain_energy) = (0.0, 0.0);
        for _ in 0..draws {
            let ch = gen_fractional_channel(&profile, &g, &mut rng).unwrap();
            let h = build_fractional_channel_matrix(&ch, &g);
            row_energy += h.frobenius_sq() / g.len() as f64;
            gain_energy += ch.energy();
        }
        let (row_energy, gain_energy) = (row_energy / draws as f64, gain_energy / draws as f64);
        assert!((row_energy - 1.0).abs() < 0.1, "row energy {row_energy}");
        assert!((row_energy - gain_energy).abs() < 0.1);
    }
}
