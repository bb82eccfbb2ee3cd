//! Named experiments, one per published BER figure.
//!
//! A preset expands to one [`ExperimentConfig`] per curve. A name such as
//! `fig4-nr2` selects the single curve with that label.

use anyhow::{bail, Result};
use otfs_core::channel::TapPreset;
use otfs_core::detect::{AlphabetKind, Detector};
use otfs_core::multiant::SystemMode;

use crate::config::{ChannelSpec, ExperimentConfig};

pub const NAMES: &[&str] = &[
    "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "frac-p1",
];

fn base(label: String, mode: SystemMode, m: usize, n: usize, ch: TapPreset) -> ExperimentConfig {
    ExperimentConfig {
        label,
        mode,
        m,
        n,
        channel: ChannelSpec::Preset(ch),
        paths: ch.num_paths(),
        n_t: if mode == SystemMode::Simo { 1 } else { 2 },
        snr_db: (0..=16).map(|i| 2.5 * i as f64).collect(),
        ..ExperimentConfig::default()
    }
}

fn pr_tag(pr: bool) -> &'static str {
    if pr {
        "pr"
    } else {
        "nopr"
    }
}

fn figure(name: &str) -> Option<Vec<ExperimentConfig>> {
    let mut out = Vec::new();
    match name {
        "fig4" => {
            for n_r in 1..=4 {
                let mut c = base(format!("fig4-nr{n_r}"), SystemMode::Simo, 2, 2, TapPreset::P1);
                c.n_r = n_r;
                c.detector = Detector::Ml;
                c.snr_db = (0..=18).map(|i| 2.5 * i as f64).collect();
                out.push(c);
            }
        }
        "fig5" => {
            for n_r in [1, 4] {
                let mut c = base(format!("fig5-nr{n_r}"), SystemMode::Simo, 2, 2, TapPreset::P4);
                c.n_r = n_r;
                c.detector = Detector::Ml;
                out.push(c);
            }
        }
        "fig6" | "fig7" => {
            let (m, ch, alphabet) = if name == "fig6" {
                (4, TapPreset::P2M4, AlphabetKind::Bpsk)
            } else {
                (2, TapPreset::P2M2, AlphabetKind::Qam16)
            };
            for pr in [false, true] {
                for n_r in [1, 2] {
                    let label = format!("{name}-{}-nr{n_r}", pr_tag(pr));
                    let mut c = base(label, SystemMode::Simo, m, m, ch);
                    c.n_r = n_r;
                    c.alphabet = alphabet;
                    c.phase_rotation = pr;
                    out.push(c);
                }
            }
        }
        "fig8" => {
            for n_s in [1, 2] {
                for n_r in n_s..=3 {
                    let label = format!("fig8-ns{n_s}-nr{n_r}");
                    let mut c = base(label, SystemMode::Stc, 2, 2, TapPreset::P2M2);
                    c.n_r = n_r;
                    c.n_s = n_s;
                    c.detector = Detector::Ml;
                    out.push(c);
                }
            }
        }
        "fig9" => {
            for n_r in [1, 2] {
                let mut c = base(format!("fig9-nr{n_r}"), SystemMode::Stc, 2, 2, TapPreset::P2M2);
                c.n_r = n_r;
                c.phase_rotation = true;
                c.detector = Detector::Ml;
                out.push(c);
            }
        }
        "fig10" => {
            for pr in [false, true] {
                for n_r in [2, 3] {
                    let label = format!("fig10-{}-nr{n_r}", pr_tag(pr));
                    let mut c = base(label, SystemMode::Mimo, 4, 2, TapPreset::P2M2);
                    c.n_r = n_r;
                    c.n_s = 2;
                    c.phase_rotation = pr;
                    out.push(c);
                }
            }
        }
        "frac-p1" => {
            for n_r in [1, 2] {
                let mut c = base(format!("frac-p1-nr{n_r}"), SystemMode::Simo, 2, 2, TapPreset::P1);
                c.channel = ChannelSpec::Fractional;
                c.paths = 1;
                c.n_r = n_r;
                out.push(c);
            }
        }
        _ => return None,
    }
    Some(out)
}

/// Expands a figure name, or picks one curve by its label.
pub fn expand(name: &str) -> Result<Vec<ExperimentConfig>> {
    if let Some(all) = figure(name) {
        return Ok(all);
    }
    for fig in NAMES {
        if let Some(all) = figure(fig) {
            if let Some(c) = all.into_iter().find(|c| c.label == name) {
                return Ok(vec![c]);
            }
        }
    }
    bail!(
        "unknown preset '{name}'; figures are {}, and single curves are named like fig4-nr2",
        NAMES.join(", ")
    )
}

/// Every single-curve preset.
pub fn all_curves() -> Vec<ExperimentConfig> {
    NAMES.iter().flat_map(|n| figure(n).unwrap_or_default()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_curve_is_valid() {
        for c in all_curves() {
            c.system().unwrap_or_else(|e| panic!("{}: {e:#}", c.label));
        }
    }

    #[test]
    fn labels_are_unique() {
        let mut labels: Vec<String> = all_curves().into_iter().map(|c| c.label).collect();
        let n = labels.len();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), n);
    }

    #[test]
    fn fig4_nr2_matches_caption() {
        let c = &expand("fig4-nr2").unwrap()[0];
        assert_eq!(c.mode, SystemMode::Simo);
        assert_eq!((c.m, c.n, c.n_s, c.n_r), (2, 2, 1, 2));
        assert_eq!(c.channel, ChannelSpec::Preset(TapPreset::P1));
        assert_eq!(c.alphabet, AlphabetKind::Bpsk);
        assert_eq!(c.detector, Detector::Ml);
    }

    #[test]
    fn fig8_covers_both_selection_sizes() {
        let all = expand("fig8").unwrap();
        assert!(all.iter().all(|c| c.mode == SystemMode::Stc && c.n_t == 2));
        let mut ns: Vec<usize> = all.iter().map(|c| c.n_s).collect();
        ns.dedup();
        assert_eq!(ns, vec![1, 2]);
    }

    #[test]
    fn unknown_preset() {
        assert!(expand("fig99").is_err());
    }
}
