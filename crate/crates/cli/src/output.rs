//! Files written by a run: graymaps, CSV tables, SVG plots and the report.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};
use crate::pipeline::{PixelOutcome, PixelTrace};
use crate::report::{PathMaps, RunResult, Timing};
use crate::scene::{fmt_f64, write_map_csv};

pub const REPORT_FILE: &str = "report.toml";
pub const TIMING_FILE: &str = "timing.toml";
pub const FLAGS_FILE: &str = "flags.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const TRACE_SVG: &str = "traces.svg";
pub const SPECTRA_SVG: &str = "spectra.svg";
pub const MEASUREMENTS_FILE: &str = "measurements.csv";

/// 8-bit binary graymap; `scale` maps to 255, masked-out pixels to 0.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64], ok: &[bool], scale: f64) -> Result<()> {
    if values.len() != width * height || ok.len() != values.len() {
        return Err(CliError::format(path, "map size does not match its dimensions"));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(values.iter().zip(ok).map(|(&v, &k)| {
        if !k || scale <= 0.0 || !v.is_finite() {
            0
        } else {
            (255.0 * v / scale).round().clamp(0.0, 255.0) as u8
        }
    }));
    std::fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CliError::format(path, "truncated graymap header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let bad = || CliError::format(path, "malformed graymap header");
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad());
    }
    let width: usize = fields[1].parse().map_err(|_| bad())?;
    let height: usize = fields[2].parse().map_err(|_| bad())?;
    let data = bytes[pos + 1..].to_vec();
    if data.len() != width * height {
        return Err(CliError::format(path, "graymap size does not match its header"));
    }
    Ok((width, height, data))
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(CliError::csv(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_flags(path: &Path, width: usize, outcomes: &[PixelOutcome]) -> Result<()> {
    let mut w = create(path)?;
    let e = CliError::csv(path);
    let header = [
        "x",
        "y",
        "status",
        "clamped",
        "vanishing",
        "low_confidence",
        "oracle_vanished",
        "phaseless_reduced",
        "oracle_reduced",
        "phaseless_error",
        "oracle_error",
    ];
    w.write_record(header).map_err(e)?;
    for (i, o) in outcomes.iter().enumerate() {
        let (pl, or) = (o.phaseless.as_ref(), o.oracle.as_ref());
        let pl_ok = pl.and_then(|r| r.as_ref().ok());
        let or_ok = or.and_then(|r| r.as_ref().ok());
        let record = [
            (i % width).to_string(),
            (i / width).to_string(),
            if o.is_ok() { "ok" } else { "flagged" }.to_string(),
            flag(pl_ok.is_some_and(|p| p.clamped)).into(),
            flag(pl_ok.is_some_and(|p| p.vanishing)).into(),
            flag(pl_ok.is_some_and(|p| p.low_confidence) || or_ok.is_some_and(|p| p.low_confidence)).into(),
            or_ok.map_or(String::new(), |p| p.vanished.to_string()),
            pl_ok.and_then(|p| p.reduced.clone()).unwrap_or_default(),
            or_ok.and_then(|p| p.reduced.clone()).unwrap_or_default(),
            pl.and_then(|r| r.as_ref().err().cloned()).unwrap_or_default(),
            or.and_then(|r| r.as_ref().err().cloned()).unwrap_or_default(),
        ];
        w.write_record(&record).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

/// `n, y, m, y_fit, m_fit`, one row per sample.
pub fn write_traces(path: &Path, trace: &PixelTrace) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["n", "y", "m", "y_fit", "m_fit"]).map_err(CliError::csv(path))?;
    let at = |v: &Option<Vec<f64>>, n: usize| opt(v.as_ref().and_then(|v| v.get(n).copied()));
    for n in 0..trace.y.len() {
        let record = [
            n.to_string(),
            fmt_f64(trace.y[n]),
            opt(trace.m.get(n).copied()),
            at(&trace.y_fit, n),
            at(&trace.m_fit, n),
        ];
        w.write_record(&record).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

fn spectrum_len(trace: &PixelTrace) -> usize {
    [&trace.s_hat, &trace.h_hat_abs].iter().filter_map(|v| v.as_ref().map(Vec::len)).max().unwrap_or(0)
}

/// `ℓ, ŝ measured, ŝ fitted, |ĥ| measured, |ĥ| fitted`.
pub fn write_spectra(path: &Path, trace: &PixelTrace) -> Result<()> {
    let mut w = create(path)?;
    let header = ["ell", "s_hat_measured", "s_hat_fitted", "h_hat_abs_measured", "h_hat_abs_fitted"];
    w.write_record(header).map_err(CliError::csv(path))?;
    let len = spectrum_len(trace);
    let at = |v: &Option<Vec<f64>>, i: usize| {
        opt(v.as_ref().filter(|v| v.len() == len).and_then(|v| v.get(i).copied()))
    };
    let l = (len / 2) as i64;
    for i in 0..len {
        let record = [
            (i as i64 - l).to_string(),
            at(&trace.s_hat, i),
            at(&trace.s_hat_fit, i),
            at(&trace.h_hat_abs, i),
            at(&trace.h_hat_abs_fit, i),
        ];
        w.write_record(&record).map_err(CliError::csv(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub struct Series<'a> {
    pub label: &'a str,
    pub x: Vec<f64>,
    pub y: &'a [f64],
    pub colour: &'a str,
    pub dashed: bool,
}

pub struct Panel<'a> {
    pub title: String,
    pub x_label: &'a str,
    pub series: Vec<Series<'a>>,
}

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 48.0;

/// Stacked line plots, one panel per entry.
pub fn svg_plot(panels: &[Panel]) -> String {
    let height = PANEL_H * panels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let top = PANEL_H * k as f64;
        let (x0, x1, y0, y1) = (MARGIN, PANEL_W - 16.0, top + 28.0, top + PANEL_H - MARGIN + 8.0);
        let points = panel.series.iter().flat_map(|s| s.x.iter().zip(s.y.iter()));
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            xmin = xmin.min(*x);
            xmax = xmax.max(*x);
            ymin = ymin.min(*y);
            ymax = ymax.max(*y);
        }
        if !xmin.is_finite() {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        if xmax == xmin {
            xmax = xmin + 1.0;
        }
        if ymax == ymin {
            ymax = ymin + 1.0;
        }
        let px = |x: f64| x0 + (x - xmin) / (xmax - xmin) * (x1 - x0);
        let py = |y: f64| y1 - (y - ymin) / (ymax - ymin) * (y1 - y0);
        let _ = writeln!(s, r#"<text x="{x0}" y="{}" font-weight="bold">{}</text>"#, top + 16.0, escape(&panel.title));
        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">{}</text>"#, y1 + 14.0, tick(xmin));
        let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="end">{}</text>"#, y1 + 14.0, tick(xmax));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            y1 + 28.0,
            escape(panel.x_label)
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, y0 + 8.0, tick(ymax));
        let _ = writeln!(s, r#"<text x="{}" y="{y1}" text-anchor="end">{}</text>"#, x0 - 4.0, tick(ymin));
        for (j, series) in panel.series.iter().enumerate() {
            let mut path = String::new();
            for (x, y) in series.x.iter().zip(series.y).filter(|(x, y)| x.is_finite() && y.is_finite()) {
                let _ = write!(path, "{:.2},{:.2} ", px(*x), py(*y));
            }
            let dash = if series.dashed { r#" stroke-dasharray="5,3""# } else { "" };
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2"{dash} points="{}"/>"#,
                series.colour,
                path.trim_end()
            );
            let ly = y0 + 12.0 + 14.0 * j as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}"{dash}/><text x="{}" y="{}">{}</text>"#,
                x1 - 150.0,
                ly - 4.0,
                x1 - 130.0,
                ly - 4.0,
                series.colour,
                x1 - 124.0,
                ly,
                escape(series.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn write_trace_plots(dir: &Path, label: &str, trace: &PixelTrace) -> Result<()> {
    let n: Vec<f64> = (0..trace.y.len()).map(|i| i as f64).collect();
    let mut panels = vec![Panel {
        title: format!("{label}: lock-in samples y[n]"),
        x_label: "n",
        series: std::iter::once(Series { label: "measured", x: n.clone(), y: &trace.y, colour: "#1f77b4", dashed: false })
            .chain(trace.y_fit.as_deref().map(|f| Series { label: "fitted", x: n.clone(), y: f, colour: "#d62728", dashed: true }))
            .collect(),
    }];
    if !trace.m.is_empty() {
        panels.push(Panel {
            title: format!("{label}: autocorrelation m[n]"),
            x_label: "n",
            series: std::iter::once(Series { label: "measured", x: n.clone(), y: &trace.m, colour: "#1f77b4", dashed: false })
                .chain(trace.m_fit.as_deref().map(|f| Series { label: "fitted", x: n.clone(), y: f, colour: "#d62728", dashed: true }))
                .collect(),
        });
    }
    write_text(&dir.join(TRACE_SVG), &svg_plot(&panels))?;

    let len = spectrum_len(trace);
    let l = (len / 2) as f64;
    let ell: Vec<f64> = (0..len).map(|i| i as f64 - l).collect();
    let mut panels = Vec::new();
    for (title, measured, fitted) in [
        ("phase-less spectrum s_hat", &trace.s_hat, &trace.s_hat_fit),
        ("phase-intact spectrum |h_hat|", &trace.h_hat_abs, &trace.h_hat_abs_fit),
    ] {
        if let Some(m) = measured.as_deref() {
            panels.push(Panel {
                title: format!("{label}: {title}"),
                x_label: "harmonic",
                series: std::iter::once(Series { label: "measured", x: ell.clone(), y: m, colour: "#1f77b4", dashed: false })
                    .chain(fitted.as_deref().map(|f| Series { label: "fitted", x: ell.clone(), y: f, colour: "#d62728", dashed: true }))
                    .collect(),
            });
        }
    }
    write_text(&dir.join(SPECTRA_SVG), &svg_plot(&panels))
}

/// Every file of a finished run. Returns the paths written.
pub fn emit_outputs(
    result: &RunResult,
    trace: Option<(usize, usize, &PixelTrace)>,
    timing: Option<&Timing>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let maps_dir = dir.join("maps");
    std::fs::create_dir_all(&maps_dir).map_err(CliError::io(&maps_dir))?;
    let mut written = Vec::new();
    let (w, h) = (result.width, result.height);

    let layers: Vec<(&str, &PathMaps)> = [("truth", &result.truth), ("oracle", &result.oracle), ("phaseless", &result.phaseless)]
        .into_iter()
        .filter_map(|(name, m)| m.as_ref().map(|m| (name, m)))
        .collect();
    for k in 0..2 {
        let pick = |m: &PathMaps| if k == 0 { m.gamma0.clone() } else { m.gamma1.clone() };
        let scale = layers
            .iter()
            .flat_map(|(_, m)| pick(m).into_iter().zip(m.ok.clone()).filter(|(_, ok)| *ok).map(|(v, _)| v))
            .fold(0.0f64, f64::max);
        for (name, m) in &layers {
            let values = pick(m);
            let pgm = maps_dir.join(format!("gamma{k}_{name}.pgm"));
            write_pgm(&pgm, w, h, &values, &m.ok, scale)?;
            let csv = maps_dir.join(format!("gamma{k}_{name}.csv"));
            let masked: Vec<f64> = values.iter().zip(&m.ok).map(|(v, ok)| if *ok { *v } else { f64::NAN }).collect();
            write_map_csv(&csv, w, h, &masked)?;
            written.extend([pgm, csv]);
        }
    }

    let flags = dir.join(FLAGS_FILE);
    write_flags(&flags, w, &result.outcomes)?;
    written.push(flags);

    if let Some((x, y, t)) = trace {
        let traces = dir.join(TRACES_FILE);
        write_traces(&traces, t)?;
        let spectra = dir.join(SPECTRA_FILE);
        write_spectra(&spectra, t)?;
        write_trace_plots(dir, &format!("pixel ({x}, {y})"), t)?;
        written.extend([traces, spectra, dir.join(TRACE_SVG), dir.join(SPECTRA_SVG)]);
    }

    let report = dir.join(REPORT_FILE);
    result.report.save(&report)?;
    written.push(report);
    if let Some(t) = timing {
        let path = dir.join(TIMING_FILE);
        t.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Lock-in samples, one row per pixel: `x, y, y0, y1, ...`.
pub fn write_measurements(path: &Path, width: usize, rows: impl Iterator<Item = Result<Vec<f64>>>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(CliError::io(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut header_written = false;
    for (i, row) in rows.enumerate() {
        let row = row?;
        if !header_written {
            let mut header = String::from("x,y");
            for n in 0..row.len() {
                let _ = write!(header, ",y{n}");
            }
            writeln!(out, "{header}").map_err(CliError::io(path))?;
            header_written = true;
        }
        let mut line = format!("{},{}", i % width, i / width);
        for v in &row {
            line.push(',');
            line.push_str(&fmt_f64(*v));
        }
        writeln!(out, "{line}").map_err(CliError::io(path))?;
    }
    out.flush().map_err(CliError::io(path))
}

/// Reads [`write_measurements`] output in pixel order for a `width × height`
/// scene of `samples`-long vectors.
pub fn read_measurements(path: &Path, width: usize, height: usize, samples: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(CliError::csv(path))?;
    let cols = r.headers().map_err(CliError::csv(path))?.len();
    if cols != samples + 2 {
        return Err(CliError::format(path, format!("{} sample columns, expected {samples}", cols.saturating_sub(2))));
    }
    let mut rows = Vec::with_capacity(width * height);
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(CliError::csv(path))?;
        let bad = || CliError::format(path, format!("row {}: malformed", i + 2));
        let x: usize = record[0].parse().map_err(|_| bad())?;
        let y: usize = record[1].parse().map_err(|_| bad())?;
        if (x, y) != (i % width, i / width) {
            return Err(CliError::format(path, format!("row {}: expected pixel ({}, {})", i + 2, i % width, i / width)));
        }
        let values = record.iter().skip(2).map(|v| v.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        rows.push(values);
    }
    if rows.len() != width * height {
        return Err(CliError::format(path, format!("{} pixels, expected {}", rows.len(), width * height)));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        write_pgm(&path, 3, 2, &[0.0, 0.5, 1.0, 2.0, 1.0, 0.25], &[true, true, true, true, false, true], 1.0).unwrap();
        let (w, h, data) = read_pgm(&path).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(data, vec![0, 128, 255, 255, 0, 64]);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let y = [1.0, 2.0, 0.5];
        let svg = svg_plot(&[Panel {
            title: "a <b>".into(),
            x_label: "n",
            series: vec![Series { label: "s", x: vec![0.0, 1.0, 2.0], y: &y, colour: "black", dashed: false }],
        }]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }

    #[test]
    fn measurements_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![vec![0.1, -2.5e-12, 3.0], vec![1.0 / 3.0, 0.0, 7.0], vec![1e300, -0.0, 5.5]];
        write_measurements(&path, 3, rows.clone().into_iter().map(Ok)).unwrap();
        assert_eq!(read_measurements(&path, 3, 1, 3).unwrap(), rows);
        assert!(read_measurements(&path, 1, 3, 3).is_err());
        assert!(read_measurements(&path, 3, 1, 4).is_err());
    }
}
