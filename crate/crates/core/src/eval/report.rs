use std::fmt::Write as _;
use std::io::Write;

use super::{BenchmarkResults, CoverageCurve};
use crate::error::Result;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `method,trial,coverage,system_acc,clf_acc_nondef,hum_acc_def`, test-set
/// rates. Undefined arm accuracies are left empty.
pub fn write_results_csv<W: Write>(results: &BenchmarkResults, mut w: W) -> Result<()> {
    writeln!(
        w,
        "method,trial,coverage,system_acc,clf_acc_nondef,hum_acc_def"
    )?;
    for r in &results.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method,
            r.trial,
            r.test.coverage,
            r.test.system_accuracy,
            opt(r.test.classifier_accuracy_nondeferred),
            opt(r.test.human_accuracy_deferred)
        )?;
    }
    Ok(())
}

/// `method,trials,mean_system_acc,std_error,mean_train_acc,mean_coverage`.
pub fn write_summary_csv<W: Write>(results: &BenchmarkResults, mut w: W) -> Result<()> {
    writeln!(
        w,
        "method,trials,mean_system_acc,std_error,mean_train_acc,mean_coverage"
    )?;
    for s in &results.summaries {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.method,
            s.trials,
            s.mean_test_accuracy,
            opt(s.std_error),
            s.mean_train_accuracy,
            s.mean_coverage
        )?;
    }
    Ok(())
}

/// `threshold,coverage,system_acc`; infinite thresholds print as `inf`.
pub fn write_curve_csv<W: Write>(curve: &CoverageCurve, mut w: W) -> Result<()> {
    writeln!(w, "threshold,coverage,system_acc")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.threshold, p.coverage, p.system_accuracy)?;
    }
    Ok(())
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Accuracy against coverage, one polyline per named curve, with a marker
/// at each curve's operating point.
pub fn write_svg<W: Write>(curves: &[(String, &CoverageCurve)], mut w: W) -> Result<()> {
    let (width, height) = (640.0, 440.0);
    let (left, right, top, bottom) = (60.0, 150.0, 20.0, 50.0);
    let pw = width - left - right;
    let ph = height - top - bottom;
    let accs = curves
        .iter()
        .flat_map(|(_, c)| c.points.iter().map(|p| p.system_accuracy));
    let lo = accs.fold(1.0f64, f64::min);
    let lo = ((lo * 10.0).floor() / 10.0).min(0.9);
    let sx = |c: f64| left + c * pw;
    let sy = |a: f64| top + (1.0 - (a - lo) / (1.0 - lo)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let c = k as f64 / 5.0;
        let a = lo + (1.0 - lo) * c;
        let (x, y) = (sx(c), sy(a));
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{c:.1}</text>"#,
            top + ph + 18.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{a:.2}</text>"#,
            left - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">coverage</text>"#,
        left + pw / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">system accuracy</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (k, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.coverage), sy(p.system_accuracy)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if let Some(op) = curve.operating_index.map(|i| curve.points[i]) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                sx(op.coverage),
                sy(op.system_accuracy)
            );
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
