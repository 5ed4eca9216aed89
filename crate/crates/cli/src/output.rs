use std::fmt::Write as _;
use std::io::Write;

use nlkf::harness::SweepResult;

pub const CSV_HEADER: [&str; 12] = [
    "system",
    "filter",
    "framework",
    "sigma",
    "state_index",
    "rmse_actual",
    "rmse_estimated",
    "mean_step_time_ns",
    "backout_rate",
    "divergence_count",
    "runs",
    "seed",
];

/// One row per (config, sigma, state); floats in shortest round-trip scientific form.
pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for e in &result.entries {
        for (j, (act, est)) in e.rmse_final.iter().zip(&e.estimated_rmse).enumerate() {
            w.write_record([
                result.system.clone(),
                e.config.filter_name().to_string(),
                e.config.framework_name().to_string(),
                format!("{:e}", e.sigma),
                j.to_string(),
                format!("{act:e}"),
                format!("{est:e}"),
                format!("{:e}", e.mean_step_time_ns),
                format!("{:e}", e.backout_rate),
                e.divergence_count.to_string(),
                e.runs.to_string(),
                result.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

/// Static log-log chart of `rmse_actual` of one state against sigma: solid lines for
/// the recalibrated framework, dotted for the conventional one.
pub fn render_svg(result: &SweepResult, state: usize) -> String {
    let (width, height, margin) = (720.0, 480.0, 60.0);
    let mut series: Vec<(String, f64, f64)> = Vec::new();
    for e in &result.entries {
        let v = e.rmse_final[state];
        if v.is_finite() && v > 0.0 {
            series.push((e.config.to_string(), e.sigma.log10(), v.log10()));
        }
    }
    let bounds = |f: fn(&(String, f64, f64)) -> f64| {
        let lo = series.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = series.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x_lo, x_hi) = bounds(|p| p.1);
    let (y_lo, y_hi) = bounds(|p| p.2);
    let px = |x: f64| margin + (x - x_lo) / (x_hi - x_lo) * (width - 2.0 * margin);
    let py = |y: f64| height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2.0 * margin);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{} state {state}: RMSE vs sigma</text>"#,
        width / 2.0,
        result.system
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = margin,
        b = height - margin,
        r = width - margin
    );
    for d in (x_lo.floor() as i32)..=(x_hi.ceil() as i32) {
        let x = px(d as f64);
        if (margin - 1e-9..=width - margin + 1e-9).contains(&x) {
            let _ = writeln!(
                svg,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{d}</text>"#,
                height - margin + 16.0
            );
        }
    }
    for d in (y_lo.floor() as i32)..=(y_hi.ceil() as i32) {
        let y = py(d as f64);
        if (margin - 1e-9..=height - margin + 1e-9).contains(&y) {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">1e{d}</text>"#,
                margin - 6.0
            );
        }
    }

    let mut names: Vec<String> = Vec::new();
    for (name, _, _) in &series {
        if !names.contains(name) {
            names.push(name.clone());
        }
    }
    let mut filters: Vec<&str> = Vec::new();
    for name in &names {
        let f = name.split('/').next().unwrap_or(name);
        if !filters.contains(&f) {
            filters.push(f);
        }
    }
    for (i, name) in names.iter().enumerate() {
        let f = name.split('/').next().unwrap_or(name);
        let color = PALETTE[filters.iter().position(|g| *g == f).unwrap_or(0) % PALETTE.len()];
        let dash = if name.ends_with("/old") {
            r#" stroke-dasharray="3 3""#
        } else {
            ""
        };
        let points: Vec<String> = series
            .iter()
            .filter(|p| &p.0 == name)
            .map(|p| format!("{:.1},{:.1}", px(p.1), py(p.2)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#,
            points.join(" ")
        );
        let ly = margin + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}"{dash}/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            width - margin - 90.0,
            width - margin - 70.0,
            width - margin - 65.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
