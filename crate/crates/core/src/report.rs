//! CSV tables plus standalone SVG heatmaps and level charts.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use indexmap::IndexSet;
use thiserror::Error;

use crate::analysis::{CorrelationMatrix, DeltaRecord};
use crate::outputs::{write_correlation_csv, write_delta_csv, OutputError};
use crate::provenance::Provenance;
use crate::scores::Variant;

pub const WSG_CSV: &str = "wsg_deltas.csv";
pub const WSG_SVG: &str = "wsg_heatmap.svg";
pub const SEI_CSV: &str = "sei_deltas.csv";
pub const SEI_SVG: &str = "sei_levels.svg";
pub const CORRELATION_CSV: &str = "correlation.csv";
pub const CORRELATION_SVG: &str = "correlation_heatmap.svg";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report")]
    Empty,
    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: OutputError,
    },
}

#[derive(Debug, Clone, Default)]
pub struct ReportSet {
    pub wsg: Vec<DeltaRecord>,
    pub sei: Vec<DeltaRecord>,
    pub correlation: Option<CorrelationMatrix>,
}

impl ReportSet {
    pub fn is_empty(&self) -> bool {
        self.wsg.is_empty() && self.sei.is_empty() && self.correlation.is_none()
    }
}

const CELL_W: f64 = 74.0;
const CELL_H: f64 = 30.0;
const LEFT: f64 = 120.0;
const TOP: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn lerp(a: u8, b: u8, t: f64) -> u8 {
    (a as f64 + (b as f64 - a as f64) * t).round() as u8
}

/// White at zero, blue for negative, red for positive; saturates at `scale`.
pub fn diverging_color(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t < 0.0 {
        (lerp(255, 33, -t), lerp(255, 102, -t), lerp(255, 172, -t))
    } else {
        (lerp(255, 178, t), lerp(255, 24, t), lerp(255, 43, t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Annotated heatmap; missing cells are grey and labelled "n/a".
pub fn heatmap_svg(
    title: &str,
    rows: &[String],
    cols: &[String],
    values: &[Vec<Option<f64>>],
    scale: f64,
    decimals: usize,
) -> String {
    let w = LEFT + CELL_W * cols.len() as f64 + 20.0;
    let h = TOP + CELL_H * rows.len() as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="14">{}</text>"#, LEFT, escape(title));
    for (j, c) in cols.iter().enumerate() {
        let x = LEFT + CELL_W * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            TOP - 8.0,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + CELL_H * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + CELL_H / 2.0 + 4.0,
            escape(r)
        );
        for (j, v) in values[i].iter().enumerate() {
            let x = LEFT + CELL_W * j as f64;
            let (fill, label) = match v {
                Some(v) => (diverging_color(*v, scale), format!("{v:.decimals$}")),
                None => ("#d9d9d9".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
                x + CELL_W / 2.0,
                y + CELL_H / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// One polyline per series over shared x labels, with a zero line and legend.
pub fn line_chart_svg(title: &str, x_labels: &[String], series: &[(String, Vec<Option<f64>>)]) -> String {
    let (pw, ph) = (420.0, 260.0);
    let (left, top) = (60.0, 40.0);
    let all: Vec<f64> = series.iter().flat_map(|s| s.1.iter().flatten().copied()).collect();
    let lo = all.iter().copied().fold(0.0f64, f64::min);
    let hi = all.iter().copied().fold(0.0f64, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let y_of = |v: f64| top + ph * (hi - v) / span;
    let step = if x_labels.len() > 1 { pw / (x_labels.len() - 1) as f64 } else { 0.0 };
    let x_of = |i: usize| left + step * i as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
        left + pw + 150.0,
        top + ph + 50.0
    );
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#999999" stroke-dasharray="4 3"/>"##,
        y_of(0.0),
        left + pw
    );
    for v in [lo, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            left - 6.0,
            y_of(v) + 4.0
        );
    }
    for (i, l) in x_labels.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x_of(i),
            top + ph + 20.0,
            escape(l)
        );
    }
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = ys
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.2},{:.2}", x_of(i), y_of(v))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for p in &points {
            let (x, y) = p.split_once(',').expect("point");
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 14.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            left + pw + 20.0,
            ly,
            left + pw + 36.0,
            ly + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Models by metrics, cell value = delta in percent.
pub fn wsg_heatmap(records: &[DeltaRecord]) -> String {
    let models: IndexSet<&str> = records.iter().map(|r| r.model_id.as_str()).collect();
    let mut metrics: Vec<_> = records.iter().map(|r| r.metric_id).collect();
    metrics.sort();
    metrics.dedup();
    let values: Vec<Vec<Option<f64>>> = models
        .iter()
        .map(|m| {
            metrics
                .iter()
                .map(|metric| {
                    records
                        .iter()
                        .find(|r| r.model_id == *m && r.metric_id == *metric)
                        .and_then(|r| r.delta_pct)
                })
                .collect()
        })
        .collect();
    let scale = values.iter().flatten().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    heatmap_svg(
        "Rephrasing robustness: change in mean score (%)",
        &models.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        &metrics.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        &values,
        scale,
        2,
    )
}

/// Delta per metric across injection levels, one chart per model.
pub fn sei_chart(records: &[DeltaRecord]) -> String {
    let levels = [Variant::ErrorL1, Variant::ErrorL2, Variant::ErrorLm];
    let present: Vec<Variant> = levels
        .into_iter()
        .filter(|v| records.iter().any(|r| r.variant == *v))
        .collect();
    let mut metrics: Vec<_> = records.iter().map(|r| r.metric_id).collect();
    metrics.sort();
    metrics.dedup();
    let models: IndexSet<&str> = records.iter().map(|r| r.model_id.as_str()).collect();
    let (models, present, metrics) = (&models, &present, &metrics);
    let series: Vec<(String, Vec<Option<f64>>)> = models
        .iter()
        .flat_map(|m| {
            metrics.iter().map(move |metric| {
                let name = if models.len() > 1 {
                    format!("{m}/{metric}")
                } else {
                    metric.to_string()
                };
                let ys = present
                    .iter()
                    .map(|v| {
                        records
                            .iter()
                            .find(|r| r.model_id == *m && r.metric_id == *metric && r.variant == *v)
                            .map(|r| r.delta_abs)
                    })
                    .collect();
                (name, ys)
            })
        })
        .collect();
    let labels: Vec<String> = present
        .iter()
        .map(|v| match v {
            Variant::ErrorL1 => "1 error".to_string(),
            Variant::ErrorL2 => "2 errors".to_string(),
            _ => "multiple".to_string(),
        })
        .collect();
    line_chart_svg("Injected errors: score change from self-score", &labels, &series)
}

pub fn correlation_heatmap(m: &CorrelationMatrix) -> String {
    heatmap_svg("Spearman rank correlation", &m.labels, &m.labels, &m.rho, 1.0, 2)
}

fn write_file(
    path: PathBuf,
    f: impl FnOnce(BufWriter<File>) -> Result<(), OutputError>,
) -> Result<PathBuf, ReportError> {
    let wrap = |source: OutputError| ReportError::Write {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(&path).map_err(|e| wrap(e.into()))?;
    f(BufWriter::new(file)).map_err(wrap)?;
    Ok(path)
}

fn write_svg(path: PathBuf, svg: &str) -> Result<PathBuf, ReportError> {
    write_file(path, |mut w| {
        use std::io::Write;
        w.write_all(svg.as_bytes())?;
        w.flush()?;
        Ok(())
    })
}

/// Writes the CSV and SVG for every non-empty part of `set` into `out_dir`.
pub fn emit_reports(set: &ReportSet, out_dir: &Path, provenance: &Provenance) -> Result<Vec<PathBuf>, ReportError> {
    emit(set, out_dir, Some(provenance))
}

/// Writes only the SVGs, for tables that already exist on disk.
pub fn emit_figures(set: &ReportSet, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    emit(set, out_dir, None)
}

fn emit(set: &ReportSet, out_dir: &Path, tables: Option<&Provenance>) -> Result<Vec<PathBuf>, ReportError> {
    if set.is_empty() {
        return Err(ReportError::Empty);
    }
    fs::create_dir_all(out_dir).map_err(|e| ReportError::Write {
        path: out_dir.display().to_string(),
        source: e.into(),
    })?;
    let mut written = Vec::new();
    if !set.wsg.is_empty() {
        if let Some(p) = tables {
            written.push(write_file(out_dir.join(WSG_CSV), |w| write_delta_csv(&set.wsg, w, p))?);
        }
        written.push(write_svg(out_dir.join(WSG_SVG), &wsg_heatmap(&set.wsg))?);
    }
    if !set.sei.is_empty() {
        if let Some(p) = tables {
            written.push(write_file(out_dir.join(SEI_CSV), |w| write_delta_csv(&set.sei, w, p))?);
        }
        written.push(write_svg(out_dir.join(SEI_SVG), &sei_chart(&set.sei))?);
    }
    if let Some(m) = &set.correlation {
        if let Some(p) = tables {
            written.push(write_file(out_dir.join(CORRELATION_CSV), |w| write_correlation_csv(m, w, p))?);
        }
        written.push(write_svg(out_dir.join(CORRELATION_SVG), &correlation_heatmap(m))?);
    }
    Ok(written)
}
