//! Monte Carlo BER engine.
//!
//! Every frame draws a fresh channel (quasi-static over the frame, or over
//! both frames of an Alamouti codeword), selects receive antennas, sends
//! random bits through the stacked system and counts bit errors after
//! detection. SNR is `gamma = 1/N0` with unit-energy symbols on each
//! transmit antenna and `CN(0, N0)` noise per received sample.
//!
//! Frames are split statically across workers in fixed-size rounds; each
//! worker owns a ChaCha stream keyed by `(seed, snr index, worker)`, so a
//! curve is a pure function of the job and the worker count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{BerBounds, Codebook};
use crate::channel::{complex_gaussian, FractionalProfile, TapIndex};
use crate::dd::{make_phase_rotation, PhaseRotation};
use crate::detect::{
    candidate_count, detect, rotate_columns, Alphabet, AlphabetKind, Detector,
    DEFAULT_CANDIDATE_CAP,
};
use crate::error::{Error, Result};
use crate::grid::DdGrid;
use crate::multiant::{
    assemble_selected_system, select_antennas, stc_assemble, MimoChannel, SystemMode,
};

/// Frames per worker per round.
const ROUND_FRAMES: u64 = 2048;

/// Channel law.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// On-grid taps with `CN(0, 1/P)` gains.
    Integer(Vec<TapIndex>),
    /// Off-grid paths.
    Fractional(FractionalProfile),
}

impl ChannelModel {
    pub fn num_paths(&self) -> usize {
        match self {
            Self::Integer(taps) => taps.len(),
            Self::Fractional(profile) => profile.num_paths,
        }
    }
}

/// Everything that defines the transmission chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub mode: SystemMode,
    pub grid: DdGrid,
    pub channel: ChannelModel,
    pub n_t: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub alphabet: AlphabetKind,
    pub phase_rotation: bool,
    pub detector: Detector,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.mode.check_n_t(self.n_t)?;
        if self.n_s == 0 || self.n_s > self.n_r {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= n_s <= n_r, got n_s={}, n_r={}",
                self.n_s, self.n_r
            )));
        }
        if self.channel.num_paths() == 0 {
            return Err(Error::InvalidParameter("channel needs at least one path".into()));
        }
        if let ChannelModel::Integer(taps) = &self.channel {
            crate::channel::check_distinct(taps)?;
        }
        if self.detector == Detector::Ml {
            let n = self.mode.symbols_per_codeword(self.n_t, self.grid.len());
            let candidates = candidate_count(&Alphabet::new(self.alphabet), n);
            if candidates > DEFAULT_CANDIDATE_CAP as f64 {
                return Err(Error::CandidateCapExceeded {
                    candidates,
                    cap: DEFAULT_CANDIDATE_CAP,
                });
            }
        }
        Ok(())
    }

    /// Non-fatal configuration remarks.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mode == SystemMode::Mimo && self.n_s < self.n_t {
            out.push(format!(
                "MIMO with n_s={} < n_t={} is outside the analysed regime",
                self.n_s, self.n_t
            ));
        }
        out
    }

    pub fn num_paths(&self) -> usize {
        self.channel.num_paths()
    }

    pub fn symbols_per_frame(&self) -> usize {
        self.mode.symbols_per_codeword(self.n_t, self.grid.len())
    }

    pub fn bits_per_frame(&self) -> usize {
        self.symbols_per_frame() * Alphabet::new(self.alphabet).bits_per_symbol()
    }

    pub fn rotation(&self) -> Option<PhaseRotation> {
        self.phase_rotation.then(|| make_phase_rotation(&self.grid))
    }

    /// Codeword set for bound and rank computations (integer taps only).
    pub fn codebook(&self) -> Result<Codebook> {
        match &self.channel {
            ChannelModel::Integer(taps) => Codebook::new(
                self.mode,
                self.n_t,
                self.grid,
                taps.clone(),
                Alphabet::new(self.alphabet),
                self.rotation(),
            ),
            ChannelModel::Fractional(_) => Err(Error::Unsupported(
                "bounds are not available for fractional channels".into(),
            )),
        }
    }
}

/// Per-point stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    /// Stop once this many bit errors are counted.
    pub min_errors: u64,
    /// Hard cap on frames per point.
    pub max_frames: u64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            min_errors: 500,
            max_frames: 10_000_000,
        }
    }
}

/// A BER sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SimJob {
    pub config: SystemConfig,
    /// Strictly increasing SNR grid in dB.
    pub snr_db: Vec<f64>,
    pub stop: StoppingRule,
    pub seed: u64,
    pub workers: usize,
    /// The sweep ends once a point falls below this BER, or once the
    /// trend of the last two points puts the next one below it.
    pub ber_floor: Option<f64>,
}

/// One simulated SNR point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerCurve {
    pub bits_per_frame: usize,
    pub points: Vec<BerPoint>,
}

/// 95% Wilson score interval for `errors` successes in `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Reusable per-worker state.
struct FrameSim<'a> {
    config: &'a SystemConfig,
    alphabet: Alphabet,
    rotation: Option<PhaseRotation>,
}

impl<'a> FrameSim<'a> {
    fn new(config: &'a SystemConfig) -> Self {
        Self {
            config,
            alphabet: Alphabet::new(config.alphabet),
            rotation: config.rotation(),
        }
    }

    fn draw_channel<R: Rng>(&self, rng: &mut R) -> Result<MimoChannel> {
        let c = self.config;
        match &c.channel {
            ChannelModel::Integer(taps) => {
                MimoChannel::random_integer(c.grid, c.n_r, c.n_t, taps, rng)
            }
            ChannelModel::Fractional(profile) => {
                MimoChannel::random_fractional(c.grid, c.n_r, c.n_t, profile, rng)
            }
        }
    }

    /// Effective stacked channel including phase rotation.
    fn effective_system<R: Rng>(&self, rng: &mut R) -> Result<DMatrix<Complex64>> {
        let c = self.config;
        let mimo = self.draw_channel(rng)?;
        let sel = select_antennas(&mimo, c.n_s)?;
        let h = match c.mode {
            SystemMode::Simo | SystemMode::Mimo => assemble_selected_system(&mimo, &sel)?.stacked,
            SystemMode::Stc => stc_assemble(&mimo, &sel)?,
        };
        match &self.rotation {
            Some(phi) => rotate_columns(&h, phi, h.ncols() / c.grid.len()),
            None => Ok(h),
        }
    }

    /// Bit errors in one frame at noise variance `n0`.
    fn run_frame<R: Rng>(&self, rng: &mut R, n0: f64) -> Result<u64> {
        let h = self.effective_system(rng)?;
        let n = h.ncols();
        let q = self.alphabet.size();
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..q)).collect();
        let pts = self.alphabet.points();
        let x = DVector::from_iterator(n, idx.iter().map(|&i| pts[i]));
        let mut y = &h * x;
        if n0 > 0.0 {
            for v in y.iter_mut() {
                *v += complex_gaussian(rng, n0);
            }
        }
        let got = detect(self.config.detector, &y, &h, &self.alphabet, n0)?;
        let errors = idx
            .iter()
            .zip(&got.indices)
            .map(|(&a, &b)| (a ^ b).count_ones() as u64)
            .sum();
        Ok(errors)
    }
}

fn worker_rng(seed: u64, snr_index: usize, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((snr_index as u64) << 32) | worker as u64);
    rng
}

/// Simulates one SNR point; `n0 = 0` disables noise.
pub fn simulate_point(
    config: &SystemConfig,
    n0: f64,
    stop: &StoppingRule,
    seed: u64,
    snr_index: usize,
    workers: usize,
) -> Result<(u64, u64)> {
    let workers = workers.max(1);
    let mut rngs: Vec<ChaCha8Rng> = (0..workers).map(|w| worker_rng(seed, snr_index, w)).collect();
    let (mut frames, mut errors) = (0u64, 0u64);
    while errors < stop.min_errors && frames < stop.max_frames {
        let remaining = stop.max_frames - frames;
        let per_worker: Vec<u64> = (0..workers as u64)
            .map(|w| {
                let base = (remaining / workers as u64).min(ROUND_FRAMES);
                let extra = u64::from(base < ROUND_FRAMES && w < remaining % workers as u64);
                base + extra
            })
            .collect();
        let results: Vec<Result<u64>> = if workers == 1 {
            let sim = FrameSim::new(config);
            vec![(0..per_worker[0]).try_fold(0u64, |acc, _| {
                Ok(acc + sim.run_frame(&mut rngs[0], n0)?)
            })]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = rngs
                    .iter_mut()
                    .zip(&per_worker)
                    .map(|(rng, &count)| {
                        s.spawn(move || {
                            let sim = FrameSim::new(config);
                            (0..count).try_fold(0u64, |acc, _| Ok(acc + sim.run_frame(rng, n0)?))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("simulation worker panicked"))
                    .collect()
            })
        };
        for r in results {
            errors += r?;
        }
        frames += per_worker.iter().sum::<u64>();
    }
    Ok((frames, errors))
}

/// Runs the full SNR sweep.
pub fn run_ber(job: &SimJob) -> Result<BerCurve> {
    job.config.validate()?;
    if job.stop.max_frames == 0 {
        return Err(Error::InvalidParameter("max_frames must be positive".into()));
    }
    if job.snr_db.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("SNR grid must be strictly increasing".into()));
    }
    let bits_per_frame = job.config.bits_per_frame();
    let mut points = Vec::with_capacity(job.snr_db.len());
    for (i, &snr) in job.snr_db.iter().enumerate() {
        let n0 = 1.0 / db_to_linear(snr);
        let (frames, bit_errors) =
            simulate_point(&job.config, n0, &job.stop, job.seed, i, job.workers)?;
        let bits = frames * bits_per_frame as u64;
        let (ci_low, ci_high) = wilson_interval(bit_errors, bits);
        let ber = bit_errors as f64 / bits as f64;
        points.push(BerPoint {
            snr_db: snr,
            frames,
            bit_errors,
            ber,
            ci_low,
            ci_high,
        });
        if bit_errors == 0 || job.ber_floor.is_some_and(|f| ber < f) {
            break;
        }
        if let (Some(floor), Some(&next)) = (job.ber_floor, job.snr_db.get(i + 1)) {
            if extrapolate(&points, next).is_some_and(|b| b < floor) {
                break;
            }
        }
    }
    Ok(BerCurve {
        bits_per_frame,
        points,
    })
}

/// Log-linear extrapolation of the last two points to `snr_db`.
fn extrapolate(points: &[BerPoint], snr_db: f64) -> Option<f64> {
    let [.., a, b] = points else {
        return None;
    };
    if a.ber <= 0.0 || b.ber <= 0.0 {
        return None;
    }
    let slope = (b.ber.log10() - a.ber.log10()) / (b.snr_db - a.snr_db);
    Some(10f64.powf(b.ber.log10() + slope * (snr_db - b.snr_db)))
}

/// Points used for a slope fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeWindow {
    /// SNR range in dB, inclusive.
    Snr { lo: f64, hi: f64 },
    /// BER range, inclusive.
    Ber { lo: f64, hi: f64 },
}

impl SlopeWindow {
    fn contains(&self, p: &BerPoint) -> bool {
        match *self {
            Self::Snr { lo, hi } => (lo..=hi).contains(&p.snr_db),
            Self::Ber { lo, hi } => (lo..=hi).contains(&p.ber),
        }
    }
}

/// Diversity estimate: `-10` times the least-squares slope of `log10 BER`
/// against SNR in dB.
pub fn estimate_slope(curve: &BerCurve, window: SlopeWindow) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.ber > 0.0 && window.contains(p))
        .map(|p| (p.snr_db, p.ber.log10()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: 1,
        });
    }
    Ok(-10.0 * sxy / sxx)
}

/// Simulated point next to its analytical bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub snr_db: f64,
    pub lower: f64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub upper: f64,
    pub bit_errors: u64,
    /// Confidence interval lies entirely below the lower bound.
    pub below_lower: bool,
    /// Confidence interval lies entirely above the upper bound.
    pub above_upper: bool,
}

pub fn compare_with_bounds(curve: &BerCurve, bounds: &BerBounds) -> Result<Vec<BoundRow>> {
    curve
        .points
        .iter()
        .map(|p| {
            let g = db_to_linear(p.snr_db);
            let lower = bounds.lower(g)?;
            let upper = bounds.union(g)?;
            Ok(BoundRow {
                snr_db: p.snr_db,
                lower,
                ber: p.ber,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                upper,
                bit_errors: p.bit_errors,
                below_lower: p.ci_high < lower,
                above_upper: p.ci_low > upper,
            })
        })
        .collect()
}
