//! CSV and SVG emission.
//!
//! The CSV is the artifact of record: `#key=value` metadata lines followed
//! by one row per SNR point. Files are written to a temporary sibling and
//! renamed into place, so a failed run never leaves a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use otfs_core::sim::BerCurve;
use plotters::prelude::*;

use crate::config::ExperimentConfig;

pub use crate::config::CSV_HEADER as HEADER;

/// Fails early when `path` cannot be created.
pub fn check_writable(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        bail!(
            "output directory '{}' does not exist; create it or choose another --out",
            parent.display()
        );
    }
    if path.is_dir() {
        bail!("output path '{}' is a directory", path.display());
    }
    Ok(())
}

/// Renders a curve and its metadata as CSV text.
pub fn curve_csv(config: &ExperimentConfig, curve: &BerCurve) -> Result<String> {
    let mut buf = Vec::new();
    for line in config.print().lines() {
        writeln!(buf, "#{line}")?;
    }
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(HEADER)?;
        for p in &curve.points {
            w.write_record([
                p.snr_db.to_string(),
                p.frames.to_string(),
                p.bit_errors.to_string(),
                format!("{:e}", p.ber),
                format!("{:e}", p.ci_low),
                format!("{:e}", p.ci_high),
            ])?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf)?)
}

/// Writes `contents` to `path` atomically.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    check_writable(path)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".part");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("moving output into {}", path.display()))?;
    Ok(())
}

/// Log-scale BER plot of one or more curves.
pub fn plot_curves(path: &Path, title: &str, curves: &[(String, BerCurve)]) -> Result<()> {
    let pts: Vec<(f64, f64)> = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().filter(|p| p.ber > 0.0).map(|p| (p.snr_db, p.ber)))
        .collect();
    if pts.is_empty() {
        bail!("nothing to plot: every point has zero errors");
    }
    let (x_lo, x_hi) = pts
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let y_lo = pts.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let y_lo = 10f64.powf(y_lo.log10().floor());

    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi.max(x_lo + 1.0), (y_lo..1.0).log_scale())?;
    chart
        .configure_mesh()
        .x_desc("SNR (dB)")
        .y_desc("BER")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()?;
    for (i, (label, curve)) in curves.iter().enumerate() {
        let colour = Palette99::pick(i).to_rgba();
        let series: Vec<(f64, f64)> = curve
            .points
            .iter()
            .filter(|p| p.ber > 0.0)
            .map(|p| (p.snr_db, p.ber))
            .collect();
        chart
            .draw_series(LineSeries::new(series.clone(), colour.stroke_width(2)))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], colour));
        chart.draw_series(series.into_iter().map(|p| Circle::new(p, 3, colour.filled())))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}
