//! Metrics CSV, JSON records and the SVG overview.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::sweep::SweepTable;
use super::{spearman, HarnessError, Method, RunConfig, RunRecord};
use crate::decomposition::isotropic_ratio;
use crate::write_atomic;

pub const CSV_COLUMNS: [&str; 19] = [
    "method",
    "alpha",
    "beta",
    "lambda",
    "seed_init",
    "seed_data",
    "seed_shuffle",
    "stability",
    "plasticity",
    "capacity",
    "d_range_mean",
    "d_null_mean",
    "d_total_mean",
    "d_range_p50",
    "d_null_p50",
    "rank",
    "case_stability",
    "case_plasticity",
    "wallclock_s",
];

/// Fixed scientific notation with nine significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn csv_row(cfg: &RunConfig, record: Option<&RunRecord>) -> Vec<String> {
    let mut row = vec![
        cfg.method.as_str().to_string(),
        format_float(cfg.alpha),
        format_float(cfg.beta),
        format_float(cfg.lambda),
        cfg.seeds.init.to_string(),
        cfg.seeds.data.to_string(),
        cfg.seeds.shuffle.to_string(),
    ];
    match record {
        Some(r) => {
            let d = &r.displacement;
            row.extend(
                [
                    r.stability,
                    r.plasticity,
                    r.capacity,
                    d.d_range.mean,
                    d.d_null.mean,
                    d.d_total.mean,
                    d.d_range.p50,
                    d.d_null.p50,
                ]
                .map(format_float),
            );
            row.push(d.rank.to_string());
            match &r.case {
                Some(c) => {
                    row.push(c.stability_case.to_string());
                    row.push(c.plasticity_case.to_string());
                }
                None => row.extend([String::new(), String::new()]),
            }
            row.push(format_float(if cfg.record_wallclock { r.wallclock_s } else { 0.0 }));
        }
        None => row.extend(std::iter::repeat_n(String::new(), CSV_COLUMNS.len() - row.len())),
    }
    row
}

fn render_csv<'a>(rows: impl Iterator<Item = (&'a RunConfig, Option<&'a RunRecord>)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory csv write");
    for (cfg, rec) in rows {
        w.write_record(csv_row(cfg, rec)).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

/// One CSV row per record, columns in [`CSV_COLUMNS`] order.
pub fn metrics_csv(records: &[RunRecord]) -> String {
    render_csv(records.iter().map(|r| (&r.config, Some(r))))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| HarnessError::Numerical(format!("json encoding: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    write_atomic(path, text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}

/// Writes `metrics.csv`, `records.json` and `report.svg` into `out_dir`.
pub fn emit_report(records: &[RunRecord], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let paths = [
        out_dir.join("metrics.csv"),
        out_dir.join("records.json"),
        out_dir.join("report.svg"),
    ];
    write_text(&paths[0], &metrics_csv(records))?;
    write_json(&paths[1], &records)?;
    write_text(&paths[2], &render_svg(records))?;
    Ok(paths.to_vec())
}

/// Like [`emit_report`], but failed sweep points keep their CSV row with
/// empty metric fields.
pub(crate) fn emit_table(table: &SweepTable, out_dir: &Path) -> Result<(), HarnessError> {
    let csv = render_csv(table.rows.iter().map(|r| (&r.config, r.record.as_ref())));
    write_text(&out_dir.join("metrics.csv"), &csv)?;
    let records = table.records();
    write_json(&out_dir.join("records.json"), &records)?;
    write_text(&out_dir.join("report.svg"), &render_svg(&records))
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Every record found under `dir`: single-run `run.json` files and
/// `records.json` arrays. Sweep tables are skipped in favour of their
/// `records.json`; other JSON files are ignored.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut files = Vec::new();
    collect_json(dir, &mut files)?;
    let mut out = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        if let Ok(r) = serde_json::from_str::<RunRecord>(&text) {
            out.push(r);
        } else if let Ok(rs) = serde_json::from_str::<Vec<RunRecord>>(&text) {
            out.extend(rs);
        } else {
            log::debug!("skipping {}: not a run record", path.display());
        }
    }
    Ok(out)
}

fn rank_corr(records: &[&RunRecord], x: impl Fn(&RunRecord) -> f64, y: impl Fn(&RunRecord) -> f64) -> Option<f64> {
    if records.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = records.iter().map(|r| x(r)).collect();
    let ys: Vec<f64> = records.iter().map(|r| y(r)).collect();
    let s = spearman(&xs, &ys);
    s.is_finite().then_some(s)
}

/// Summary statistics over a set of records: counts, case histograms and
/// rank correlations along the α (β = 1), β (α = 0) and λ axes.
pub fn analyze(records: &[RunRecord]) -> serde_json::Value {
    let by = |m: Method| records.iter().filter(move |r| r.config.method == m);
    let alpha_axis: Vec<&RunRecord> = by(Method::GradientDecomposition)
        .filter(|r| r.config.beta == 1.0)
        .collect();
    let beta_axis: Vec<&RunRecord> = by(Method::GradientDecomposition)
        .filter(|r| r.config.alpha == 0.0)
        .collect();
    let lambda_axis: Vec<&RunRecord> = by(Method::Ewc).collect();
    let mut cases = std::collections::BTreeMap::<String, usize>::new();
    for r in records {
        if let Some(c) = &r.case {
            *cases.entry(format!("stability_{}", c.stability_case)).or_default() += 1;
            *cases.entry(format!("plasticity_{}", c.plasticity_case)).or_default() += 1;
        }
    }
    serde_json::json!({
        "records": records.len(),
        "cases": cases,
        "alpha_axis": {
            "points": alpha_axis.len(),
            "spearman_stability": rank_corr(&alpha_axis, |r| r.config.alpha, |r| r.stability),
            "spearman_plasticity": rank_corr(&alpha_axis, |r| r.config.alpha, |r| r.plasticity),
            "spearman_d_range": rank_corr(&alpha_axis, |r| r.config.alpha, |r| r.displacement.d_range.mean),
        },
        "beta_axis": {
            "points": beta_axis.len(),
            "spearman_plasticity": rank_corr(&beta_axis, |r| r.config.beta, |r| r.plasticity),
            "spearman_d_null": rank_corr(&beta_axis, |r| r.config.beta, |r| r.displacement.d_null.mean),
        },
        "lambda_axis": {
            "points": lambda_axis.len(),
            "spearman_stability": rank_corr(&lambda_axis, |r| r.config.lambda, |r| r.stability),
            "spearman_plasticity": rank_corr(&lambda_axis, |r| r.config.lambda, |r| r.plasticity),
            "spearman_d_null": rank_corr(&lambda_axis, |r| r.config.lambda, |r| r.displacement.d_null.mean),
        },
    })
}

const PANEL: f64 = 360.0;
const MARGIN: f64 = 50.0;

/// Colour parameter in `[0, 1]`: α for the projector, log-λ for EWC.
fn colour_param(r: &RunRecord) -> f64 {
    match r.config.method {
        Method::GradientDecomposition => r.config.alpha,
        Method::Ewc if r.config.lambda > 0.0 => ((r.config.lambda.log10() + 3.0) / 8.0).clamp(0.0, 1.0),
        _ => 0.0,
    }
}

fn colour(t: f64) -> String {
    format!("hsl({:.0},70%,45%)", 240.0 * (1.0 - t))
}

fn panel(svg: &mut String, x0: f64, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        svg,
        r#"<rect x="{x0}" y="{MARGIN}" width="{PANEL}" height="{PANEL}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle">{title}</text>"#,
        x0 + PANEL / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        x0 + PANEL / 2.0,
        MARGIN + PANEL + 35.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">{ylabel}</text>"#,
        x0 - 30.0,
        MARGIN + PANEL / 2.0,
        x0 - 30.0,
        MARGIN + PANEL / 2.0
    );
}

/// Two panels: stability against plasticity, and null against range
/// displacement with the isotropic reference line.
pub fn render_svg(records: &[RunRecord]) -> String {
    let width = 3.0 * MARGIN + 2.0 * PANEL;
    let height = 2.0 * MARGIN + PANEL + 20.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let (left, right) = (MARGIN, 2.0 * MARGIN + PANEL);
    panel(&mut svg, left, "stability vs plasticity", "stability", "plasticity");
    panel(&mut svg, right, "activation displacement", "range", "null space");
    if records.is_empty() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">no records</text>"#,
            width / 2.0,
            height / 2.0
        );
    }
    let y_of = |v: f64| MARGIN + PANEL * (1.0 - v);
    for r in records {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            left + PANEL * r.stability.clamp(0.0, 1.0),
            y_of(r.plasticity.clamp(0.0, 1.0)),
            colour(colour_param(r))
        );
    }
    let max_disp = records
        .iter()
        .flat_map(|r| [r.displacement.d_range.mean, r.displacement.d_null.mean])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let scale = if max_disp > 0.0 { 1.0 / (1.1 * max_disp) } else { 1.0 };
    if let Some(r) = records.first() {
        if let Ok(ratio) = isotropic_ratio(r.displacement.rank, r.displacement.dim) {
            // Clip the line y = ratio·x to the unit panel.
            let (x1, y1) = if ratio > 1.0 { (1.0 / ratio, 1.0) } else { (1.0, ratio) };
            let _ = writeln!(
                svg,
                r#"<line x1="{right}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
                y_of(0.0),
                right + PANEL * x1,
                y_of(y1)
            );
        }
    }
    for r in records {
        let d = &r.displacement;
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            right + PANEL * (d.d_range.mean * scale).clamp(0.0, 1.0),
            y_of((d.d_null.mean * scale).clamp(0.0, 1.0)),
            colour(colour_param(r))
        );
    }
    svg.push_str("</svg>\n");
    svg
}
