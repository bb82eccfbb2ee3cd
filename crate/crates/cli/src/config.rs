//! Flat `key=value` experiment configuration.
//!
//! A configuration is built in layers: defaults, then a preset, then a
//! config file, then individual command-line overrides. Every key is
//! printable, and `parse(print(c)) == c`.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use otfs_core::channel::{FractionalProfile, TapIndex, TapPreset};
use otfs_core::detect::{AlphabetKind, Detector};
use otfs_core::multiant::SystemMode;
use otfs_core::sim::{ChannelModel, SimJob, StoppingRule, SystemConfig};
use otfs_core::DdGrid;

/// Channel description as written in a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Preset(TapPreset),
    /// Explicit `(delay, Doppler)` bins.
    Taps(Vec<TapIndex>),
    Fractional,
}

impl ChannelSpec {
    fn parse(s: &str) -> Result<Self> {
        if s == "fractional" {
            return Ok(Self::Fractional);
        }
        if let Some(list) = s.strip_prefix("taps:") {
            let taps = list
                .split(',')
                .map(|pair| {
                    let (a, b) = pair
                        .split_once('/')
                        .ok_or_else(|| anyhow!("tap '{pair}' is not 'delay/doppler'"))?;
                    Ok(TapIndex::new(a.trim().parse()?, b.trim().parse()?))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self::Taps(taps));
        }
        Ok(Self::Preset(s.parse()?))
    }

    fn print(&self) -> String {
        match self {
            Self::Preset(p) => p.to_string(),
            Self::Taps(taps) => {
                let list: Vec<String> = taps.iter().map(|t| format!("{}/{}", t.alpha, t.beta)).collect();
                format!("taps:{}", list.join(","))
            }
            Self::Fractional => "fractional".into(),
        }
    }
}

/// One curve's worth of experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub label: String,
    pub mode: SystemMode,
    pub m: usize,
    pub n: usize,
    pub channel: ChannelSpec,
    /// Path count for the fractional model.
    pub paths: usize,
    /// Maximum Doppler (Hz) for the fractional model.
    pub nu_max: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub n_s: usize,
    pub alphabet: AlphabetKind,
    pub phase_rotation: bool,
    pub detector: Detector,
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
    pub min_errors: u64,
    pub max_frames: u64,
    /// `0` disables the floor.
    pub ber_floor: f64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let stop = StoppingRule::default();
        Self {
            label: "run".into(),
            mode: SystemMode::Simo,
            m: 2,
            n: 2,
            channel: ChannelSpec::Preset(TapPreset::P1),
            paths: 1,
            nu_max: 1875.0,
            n_t: 1,
            n_r: 1,
            n_s: 1,
            alphabet: AlphabetKind::Bpsk,
            phase_rotation: false,
            detector: Detector::Sphere,
            snr_db: (0..=12).map(|i| 2.5 * i as f64).collect(),
            seed: 1,
            workers: 1,
            min_errors: stop.min_errors,
            max_frames: stop.max_frames,
            ber_floor: 1e-5,
            out: None,
        }
    }
}

/// Column names of emitted BER curves.
pub const CSV_HEADER: [&str; 6] = ["snr_db", "frames", "bit_errors", "ber", "ci_low", "ci_high"];

pub const KEYS: &[&str] = &[
    "label",
    "mode",
    "m",
    "n",
    "channel",
    "paths",
    "nu_max",
    "n_t",
    "n_r",
    "n_s",
    "alphabet",
    "phase_rotation",
    "detector",
    "snr_db",
    "seed",
    "workers",
    "min_errors",
    "max_frames",
    "ber_floor",
    "out",
];

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => bail!("'{v}' is not a boolean"),
    }
}

/// `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_snr_grid(v: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() == 3 {
        let [a, s, b] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (a, s, b) = (a?, s?, b?);
        if s <= 0.0 || b < a {
            bail!("SNR range '{v}' needs a positive step and stop >= start");
        }
        let count = ((b - a) / s + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| a + s * i as f64).collect());
    }
    v.split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad SNR value '{x}'")))
        .collect()
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let ctx = || format!("invalid value '{v}' for key '{key}'");
        match key {
            "label" => self.label = v.to_string(),
            "mode" => self.mode = v.parse().with_context(ctx)?,
            "m" => self.m = v.parse().with_context(ctx)?,
            "n" => self.n = v.parse().with_context(ctx)?,
            "channel" => self.channel = ChannelSpec::parse(v).with_context(ctx)?,
            "paths" => self.paths = v.parse().with_context(ctx)?,
            "nu_max" => self.nu_max = v.parse().with_context(ctx)?,
            "n_t" => self.n_t = v.parse().with_context(ctx)?,
            "n_r" => self.n_r = v.parse().with_context(ctx)?,
            "n_s" => self.n_s = v.parse().with_context(ctx)?,
            "alphabet" => self.alphabet = v.parse().with_context(ctx)?,
            "phase_rotation" => self.phase_rotation = parse_bool(v).with_context(ctx)?,
            "detector" => self.detector = v.parse().with_context(ctx)?,
            "snr_db" => self.snr_db = parse_snr_grid(v).with_context(ctx)?,
            "seed" => self.seed = v.parse().with_context(ctx)?,
            "workers" => self.workers = v.parse().with_context(ctx)?,
            "min_errors" => self.min_errors = v.parse().with_context(ctx)?,
            "max_frames" => self.max_frames = v.parse().with_context(ctx)?,
            "ber_floor" => self.ber_floor = v.parse().with_context(ctx)?,
            "out" => self.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => bail!("unknown config key '{other}' (known keys: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment, blank lines are skipped.
    /// Reading stops at a CSV header, so emitted result files work as configs.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line == CSV_HEADER.join(",") {
                break;
            }
            let line = line.strip_prefix('#').map_or(line, |meta| {
                // metadata lines in emitted CSVs look like '#key=value'
                match meta.split_once('=') {
                    Some((k, _)) if KEYS.contains(&k.trim()) => meta,
                    _ => "",
                }
            });
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value, got '{raw}'", no + 1))?;
            self.set(k.trim(), v).with_context(|| format!("line {}", no + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Value of `key` in config-file syntax.
    pub fn get(&self, key: &str) -> String {
        match key {
            "label" => self.label.clone(),
            "mode" => self.mode.to_string(),
            "m" => self.m.to_string(),
            "n" => self.n.to_string(),
            "channel" => self.channel.print(),
            "paths" => self.paths.to_string(),
            "nu_max" => self.nu_max.to_string(),
            "n_t" => self.n_t.to_string(),
            "n_r" => self.n_r.to_string(),
            "n_s" => self.n_s.to_string(),
            "alphabet" => self.alphabet.to_string(),
            "phase_rotation" => self.phase_rotation.to_string(),
            "detector" => self.detector.to_string(),
            "snr_db" => {
                let v: Vec<String> = self.snr_db.iter().map(f64::to_string).collect();
                v.join(",")
            }
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "min_errors" => self.min_errors.to_string(),
            "max_frames" => self.max_frames.to_string(),
            "ber_floor" => self.ber_floor.to_string(),
            "out" => self
                .out
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            _ => String::new(),
        }
    }

    /// All keys as `key=value` lines.
    pub fn print(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k}={}", self.get(k));
        }
        s
    }

    pub fn grid(&self) -> Result<DdGrid> {
        Ok(DdGrid::with_default_spacing(self.m, self.n)?)
    }

    pub fn system(&self) -> Result<SystemConfig> {
        let channel = match &self.channel {
            ChannelSpec::Preset(p) => ChannelModel::Integer(p.taps()),
            ChannelSpec::Taps(t) => ChannelModel::Integer(t.clone()),
            ChannelSpec::Fractional => {
                ChannelModel::Fractional(FractionalProfile::new(self.paths, self.nu_max))
            }
        };
        let sys = SystemConfig {
            mode: self.mode,
            grid: self.grid()?,
            channel,
            n_t: self.n_t,
            n_r: self.n_r,
            n_s: self.n_s,
            alphabet: self.alphabet,
            phase_rotation: self.phase_rotation,
            detector: self.detector,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn job(&self) -> Result<SimJob> {
        if self.snr_db.is_empty() {
            bail!("SNR grid is empty");
        }
        Ok(SimJob {
            config: self.system()?,
            snr_db: self.snr_db.clone(),
            stop: StoppingRule {
                min_errors: self.min_errors,
                max_frames: self.max_frames,
            },
            seed: self.seed,
            workers: self.workers.max(1),
            ber_floor: (self.ber_floor > 0.0).then_some(self.ber_floor),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.print()).unwrap(), c);
    }

    #[test]
    fn snr_grids() {
        assert_eq!(parse_snr_grid("0:5:20").unwrap(), vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        assert_eq!(parse_snr_grid("1, 2.5").unwrap(), vec![1.0, 2.5]);
        assert!(parse_snr_grid("0:-1:5").is_err());
        assert!(parse_snr_grid("a,b").is_err());
    }

    #[test]
    fn explicit_taps_and_comments() {
        let c = ExperimentConfig::parse("# comment, a=b\n\nchannel=taps:0/0,2/1\n#phase_rotation=on\n").unwrap();
        assert_eq!(
            c.channel,
            ChannelSpec::Taps(vec![TapIndex::new(0, 0), TapIndex::new(2, 1)])
        );
        assert!(c.phase_rotation);
        assert_eq!(ExperimentConfig::parse(&c.print()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_problem() {
        let e = ExperimentConfig::parse("n_r=three").unwrap_err();
        assert!(format!("{e:#}").contains("n_r"));
        let e = ExperimentConfig::parse("colour=blue").unwrap_err();
        assert!(format!("{e:#}").contains("unknown config key"));
        let e = ExperimentConfig::parse("just text").unwrap_err();
        assert!(format!("{e:#}").contains("key=value"));
    }

    #[test]
    fn invalid_system_rejected() {
        let c = ExperimentConfig::parse("mode=stc\nn_t=1").unwrap();
        assert!(c.system().is_err());
    }
}
