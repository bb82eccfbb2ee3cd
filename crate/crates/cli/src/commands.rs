//! Subcommands and their shared argument handling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use otfs_core::analysis::{
    diversity_from_rank, min_rank_scan, pep_bound, predicted_diversity, predicted_min_rank,
    BerBounds, RhoConvention, DEFAULT_CODEWORD_CAP,
};
use otfs_core::multiant::{select_antennas, MimoChannel};
use otfs_core::sim::{db_to_linear, run_ber, BerCurve, ChannelModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::output::{check_writable, curve_csv, plot_curves, write_atomic};
use crate::presets;

#[derive(Debug, Parser)]
#[command(name = "otfs-ras", version, about = "OTFS receive antenna selection experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo BER sweep; writes CSV (and optionally an SVG plot).
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also write a log-scale BER plot to this SVG file.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Rank scan, predicted diversity and BER bounds.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Per-class pair spectra and pairwise error bounds as CSV.
    RankScan {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Selection metrics for one draw and selection frequencies over many.
    SelectDemo {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Channel draws used for the frequency table.
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Prints the resolved configuration(s) in config-file syntax.
    ShowConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Rho {
    /// `rho = 1`.
    Unit,
    /// `rho = sqrt(P)^(n_s K)` as printed in the source derivation.
    Published,
}

impl From<Rho> for RhoConvention {
    fn from(r: Rho) -> Self {
        match r {
            Rho::Unit => RhoConvention::UnitJacobian,
            Rho::Published => RhoConvention::Published,
        }
    }
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Constant in front of the pairwise bounds.
    #[arg(long, value_enum, default_value_t = Rho::Unit)]
    pub rho: Rho,
    /// Largest codebook enumerated exhaustively.
    #[arg(long, default_value_t = DEFAULT_CODEWORD_CAP)]
    pub cap: usize,
}

/// Configuration sources. Precedence: flags > file > preset > defaults.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Figure preset (fig4..fig10, frac-p1) or a single curve such as fig4-nr2.
    #[arg(long)]
    pub preset: Option<String>,
    /// Output file; a stem `<out>-<label>.csv` when several curves run.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub workers: Option<String>,
    #[arg(long)]
    pub label: Option<String>,
    /// simo, mimo or stc.
    #[arg(long)]
    pub mode: Option<String>,
    /// Delay bins.
    #[arg(long)]
    pub m: Option<String>,
    /// Doppler bins.
    #[arg(long)]
    pub n: Option<String>,
    /// p1, p2-m2, p2-m4, p4, fractional, or taps:d/k,d/k,...
    #[arg(long)]
    pub channel: Option<String>,
    /// Path count for the fractional channel.
    #[arg(long)]
    pub paths: Option<String>,
    /// Maximum Doppler in Hz for the fractional channel.
    #[arg(long)]
    pub nu_max: Option<String>,
    #[arg(long)]
    pub n_t: Option<String>,
    #[arg(long)]
    pub n_r: Option<String>,
    #[arg(long)]
    pub n_s: Option<String>,
    /// bpsk or 16qam.
    #[arg(long)]
    pub alphabet: Option<String>,
    /// true or false.
    #[arg(long)]
    pub phase_rotation: Option<String>,
    /// ml, sphere or mmse.
    #[arg(long)]
    pub detector: Option<String>,
    /// `start:step:stop` or a comma-separated list, in dB.
    #[arg(long)]
    pub snr_db: Option<String>,
    #[arg(long)]
    pub min_errors: Option<String>,
    #[arg(long)]
    pub max_frames: Option<String>,
    /// Stop the sweep below this BER; 0 disables.
    #[arg(long)]
    pub ber_floor: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> Vec<(&'static str, &String)> {
        let all = [
            ("label", &self.label),
            ("mode", &self.mode),
            ("m", &self.m),
            ("n", &self.n),
            ("channel", &self.channel),
            ("paths", &self.paths),
            ("nu_max", &self.nu_max),
            ("n_t", &self.n_t),
            ("n_r", &self.n_r),
            ("n_s", &self.n_s),
            ("alphabet", &self.alphabet),
            ("phase_rotation", &self.phase_rotation),
            ("detector", &self.detector),
            ("snr_db", &self.snr_db),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("min_errors", &self.min_errors),
            ("max_frames", &self.max_frames),
            ("ber_floor", &self.ber_floor),
            ("out", &self.out),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }

    /// Resolves the layered configuration into one config per curve.
    pub fn resolve(&self) -> Result<Vec<ExperimentConfig>> {
        let mut configs = match &self.preset {
            Some(p) => presets::expand(p)?,
            None => vec![ExperimentConfig::default()],
        };
        let file = match &self.config {
            Some(path) => Some(
                fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?,
            ),
            None => None,
        };
        let many = configs.len() > 1;
        for c in &mut configs {
            if let Some(text) = &file {
                c.apply_text(text)
                    .with_context(|| format!("in config file {}", self.config.as_ref().unwrap().display()))?;
            }
            for (k, v) in self.flags() {
                c.set(k, v).with_context(|| format!("in flag --{k}"))?;
            }
        }
        if many {
            let mut labels: Vec<&str> = configs.iter().map(|c| c.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != configs.len() {
                bail!("--label cannot be set when a preset expands to several curves");
            }
            // `out` is a stem for multi-curve presets
            for c in &mut configs {
                if let Some(stem) = &c.out {
                    let mut p = stem.as_os_str().to_owned();
                    p.push(format!("-{}.csv", c.label));
                    c.out = Some(PathBuf::from(p));
                }
            }
        }
        Ok(configs)
    }
}

/// Exit status of a finished command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Analysis contradicted the predicted rank.
    Mismatch,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Simulate { cfg, plot } => simulate(&cfg.resolve()?, plot.as_deref()),
        Command::Analyze { cfg, bounds } => analyze(&cfg.resolve()?, &bounds),
        Command::RankScan { cfg, bounds } => rank_scan(&cfg.resolve()?, &bounds),
        Command::SelectDemo { cfg, trials } => select_demo(&cfg.resolve()?, trials),
        Command::ShowConfig { cfg } => {
            for (i, c) in cfg.resolve()?.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", c.print());
            }
            Ok(Outcome::Ok)
        }
    }
}

pub fn simulate(configs: &[ExperimentConfig], plot: Option<&Path>) -> Result<Outcome> {
    // validate everything before spending any time simulating
    let mut jobs = Vec::new();
    for c in configs {
        let job = c.job().with_context(|| format!("invalid configuration '{}'", c.label))?;
        if let Some(out) = &c.out {
            check_writable(out)?;
        }
        for w in job.config.warnings() {
            eprintln!("warning [{}]: {w}", c.label);
        }
        jobs.push(job);
    }
    let mut curves: Vec<(String, BerCurve)> = Vec::new();
    for (c, job) in configs.iter().zip(&jobs) {
        eprintln!("simulating {} ...", c.label);
        let curve = run_ber(job).with_context(|| format!("simulating '{}'", c.label))?;
        let text = curve_csv(c, &curve)?;
        match &c.out {
            Some(out) => {
                write_atomic(out, &text)?;
                eprintln!("wrote {}", out.display());
            }
            None => print!("{text}"),
        }
        curves.push((c.label.clone(), curve));
    }
    if let Some(path) = plot {
        let title = configs.first().map_or("BER", |c| c.label.as_str());
        if let Err(e) = plot_curves(path, title, &curves) {
            eprintln!("warning: plot not written: {e:#}");
        }
    }
    Ok(Outcome::Ok)
}

fn bound_snrs(c: &ExperimentConfig) -> &[f64] {
    &c.snr_db
}

pub fn analyze(configs: &[ExperimentConfig], args: &BoundArgs) -> Result<Outcome> {
    let mut outcome = Outcome::Ok;
    for c in configs {
        let sys = c.system()?;
        if matches!(sys.channel, ChannelModel::Fractional(_)) {
            bail!("unsupported: rank and bound analysis needs an integer-tap channel");
        }
        let p = sys.num_paths();
        let predicted_rank = predicted_min_rank(c.mode, c.n_t, p, c.phase_rotation)?;
        let diversity = predicted_diversity(c.mode, c.n_t, c.n_r, c.n_s, p, c.phase_rotation)?;
        let codebook = sys.codebook()?;
        let scan = min_rank_scan(&codebook, args.cap)?;
        let mut s = String::new();
        writeln!(s, "[{}] {} n_t={} n_r={} n_s={} P={} M={} N={} {} phase_rotation={}",
            c.label, c.mode, c.n_t, c.n_r, c.n_s, p, c.m, c.n, c.alphabet, c.phase_rotation)?;
        writeln!(s, "  K (columns of the codeword matrix): {}", scan.k)?;
        writeln!(s, "  min rank (exhaustive scan): {}", scan.min_rank)?;
        writeln!(s, "  fraction of distinct pairs at min rank: {:.4}", scan.fraction_at_min)?;
        writeln!(s, "  predicted min rank: {predicted_rank}")?;
        writeln!(s, "  predicted diversity: {diversity}")?;
        writeln!(
            s,
            "  diversity implied by scanned rank: {}",
            diversity_from_rank(scan.min_rank, scan.k, c.n_r, c.n_s)
        )?;
        let bounds = BerBounds::new(&codebook, c.n_r, c.n_s, args.rho.into())?;
        writeln!(s, "  snr_db,lower,upper")?;
        for &snr in bound_snrs(c) {
            let g = db_to_linear(snr);
            writeln!(s, "  {snr},{:.4e},{:.4e}", bounds.lower(g)?, bounds.union(g)?)?;
        }
        print!("{s}");
        if scan.min_rank != predicted_rank {
            eprintln!(
                "error [{}]: scanned min rank {} contradicts predicted {}",
                c.label, scan.min_rank, predicted_rank
            );
            outcome = Outcome::Mismatch;
        }
    }
    Ok(outcome)
}

pub fn rank_scan(configs: &[ExperimentConfig], args: &BoundArgs) -> Result<Outcome> {
    for c in configs {
        let sys = c.system()?;
        let codebook = sys.codebook()?;
        let bounds = BerBounds::new(&codebook, c.n_r, c.n_s, args.rho.into())?;
        let p = sys.num_paths();
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header = vec!["pair_id".to_string(), "weight".into(), "rank".into(), "eigenvalues".into()];
        header.extend(c.snr_db.iter().map(|s| format!("pep_{s}dB")));
        w.write_record(&header)?;
        for (id, class) in bounds.classes().iter().enumerate() {
            let eig: Vec<String> = class.spectrum.eigenvalues.iter().map(|l| format!("{l:.6}")).collect();
            let mut row = vec![
                id.to_string(),
                format!("{}", class.weight),
                class.spectrum.rank.to_string(),
                eig.join(";"),
            ];
            for &snr in &c.snr_db {
                let pep = pep_bound(&class.spectrum, db_to_linear(snr), c.n_r, c.n_s, p, args.rho.into())?;
                row.push(format!("{pep:.6e}"));
            }
            w.write_record(&row)?;
        }
        let body = String::from_utf8(w.into_inner()?)?;
        let mut text = String::new();
        for line in c.print().lines() {
            writeln!(text, "#{line}")?;
        }
        text.push_str(&body);
        match &c.out {
            Some(out) => write_atomic(out, &text)?,
            None => print!("{text}"),
        }
    }
    Ok(Outcome::Ok)
}

pub fn select_demo(configs: &[ExperimentConfig], trials: usize) -> Result<Outcome> {
    if trials == 0 {
        bail!("--trials must be positive");
    }
    for c in configs {
        let sys = c.system()?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let draw = |rng: &mut ChaCha8Rng| -> Result<MimoChannel> {
            Ok(match &sys.channel {
                ChannelModel::Integer(taps) => MimoChannel::random_integer(sys.grid, c.n_r, c.n_t, taps, rng)?,
                ChannelModel::Fractional(f) => MimoChannel::random_fractional(sys.grid, c.n_r, c.n_t, f, rng)?,
            })
        };
        let first = select_antennas(&draw(&mut rng)?, c.n_s)?;
        println!("[{}] n_r={} n_s={}", c.label, c.n_r, c.n_s);
        println!("  one draw:");
        for (rx, m) in first.metrics.iter().enumerate() {
            let mark = if first.selected.contains(&rx) { "  selected" } else { "" };
            println!("    rx {rx}: metric {m:.4}{mark}");
        }
        let mut counts = vec![0usize; c.n_r];
        let mut sums = vec![0.0; c.n_r];
        for _ in 0..trials {
            let sel = select_antennas(&draw(&mut rng)?, c.n_s)?;
            for &rx in &sel.selected {
                counts[rx] += 1;
            }
            for (s, m) in sums.iter_mut().zip(&sel.metrics) {
                *s += m;
            }
        }
        println!("  over {trials} draws (expected frequency {:.4}):", c.n_s as f64 / c.n_r as f64);
        for rx in 0..c.n_r {
            println!(
                "    rx {rx}: selected {:.4}, mean metric {:.4}",
                counts[rx] as f64 / trials as f64,
                sums[rx] / trials as f64
            );
        }
    }
    Ok(Outcome::Ok)
}
