//! Hand-rolled standalone SVG charts: an actual-vs-estimate scatter with the
//! unit diagonal, and a per-sample imputation-time line chart.

use std::fmt::Write as _;

use impute_core::evaluate::ImputationReport;

use crate::error::CliError;

fn empty_report(what: &str) -> CliError {
    CliError::new("cli", format!("EmptyReport: no {what} to plot"))
}

fn axis_label(v: f64) -> String {
    format!("{v:.2}")
}

/// Scatter of estimate against actual for every imputed value. Both axes
/// span [0, 1] (the normalized pixel range) and the dashed unit diagonal
/// marks perfect estimates.
pub fn scatter_svg(report: &ImputationReport) -> Result<String, CliError> {
    if report.rows.is_empty() {
        return Err(empty_report("value rows"));
    }
    let (w, h, m) = (560.0, 560.0, 60.0);
    let x = |a: f64| m + a * (w - 2.0 * m);
    let y = |e: f64| h - m - e * (h - 2.0 * m);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let title = match report.tolerance_used {
        Some(t) => format!("actual vs estimate — {} (tolerance {t})", report.method),
        None => format!("actual vs estimate — {} (no tolerance)", report.method),
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="30" text-anchor="middle" font-size="16">{title}</text>"#,
        w / 2.0
    );
    // Axes.
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(svg, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{:.2}" stroke="black"/>"#, h - m);
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (tx, ty) = (x(tick), y(tick));
        let _ = writeln!(
            svg,
            r#"<line x1="{tx:.2}" y1="{0:.2}" x2="{tx:.2}" y2="{1:.2}" stroke="black"/>"#,
            h - m,
            h - m + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            h - m + 20.0,
            axis_label(tick)
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{ty:.2}" x2="{m}" y2="{ty:.2}" stroke="black"/>"#,
            m - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            m - 9.0,
            ty + 4.0,
            axis_label(tick)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">actual</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">estimate</text>"#,
        h / 2.0
    );
    // Unit diagonal: estimates equal to actuals fall exactly on this line.
    let _ = writeln!(
        svg,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4" class="diagonal"/>"#,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for row in &report.rows {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#1f6fb2" fill-opacity="0.6"/>"##,
            x(row.actual),
            y(row.estimate)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Wall time spent imputing each sample, in report order.
pub fn times_svg(report: &ImputationReport) -> Result<String, CliError> {
    if report.per_sample_times.is_empty() {
        return Err(empty_report("per-sample times"));
    }
    let (w, h, m) = (640.0, 360.0, 60.0);
    let n = report.per_sample_times.len();
    let max_secs = report
        .per_sample_times
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::EPSILON, f64::max);
    let x = |i: usize| {
        if n == 1 {
            w / 2.0
        } else {
            m + i as f64 / (n - 1) as f64 * (w - 2.0 * m)
        }
    };
    let y = |s: f64| h - m - (s / max_secs) * (h - 2.0 * m);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let title = match report.tolerance_used {
        Some(t) => format!("imputation time per sample — {} (tolerance {t})", report.method),
        None => format!("imputation time per sample — {} (no tolerance)", report.method),
    };
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="28" text-anchor="middle" font-size="16">{title}</text>"#,
        w / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{m}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="black"/>"#,
        h - m,
        w - m
    );
    let _ = writeln!(svg, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{:.2}" stroke="black"/>"#, h - m);
    for frac in [0.0, 0.5, 1.0] {
        let ty = y(frac * max_secs);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}s</text>"#,
            m - 8.0,
            ty + 4.0,
            frac * max_secs
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sample</text>"#,
        w / 2.0,
        h - 15.0
    );
    let points: Vec<String> = report
        .per_sample_times
        .iter()
        .enumerate()
        .map(|(i, &(_, s))| format!("{:.2},{:.2}", x(i), y(s)))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#b2451f" stroke-width="1.5"/>"##,
        points.join(" ")
    );
    for (i, &(sample, s)) in report.per_sample_times.iter().enumerate() {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#b2451f"><title>sample {sample}</title></circle>"##,
            x(i),
            y(s)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
