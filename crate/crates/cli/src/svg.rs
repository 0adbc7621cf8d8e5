//! Minimal SVG 1.1 log-log plot of a convergence study.

use std::fmt::Write as _;

use nsf_layers::harness::ConvergenceStudy;
use nsf_layers::io::fmt_f64;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 56.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
const NAMES: [&str; 4] = ["rho", "v1", "v2", "theta"];

struct Axes {
    x: (f64, f64),
    y: (f64, f64),
}

impl Axes {
    fn px(&self, e: f64) -> f64 {
        PAD + (e.log10() - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, v: f64) -> f64 {
        H - PAD - (v.log10() - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

fn decade_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0)
        .map(f64::log10)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 0.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// Errors per component as markers and polylines, with a dashed guide of the
/// theory slope through each component's smallest-ε point.
pub fn study_svg(study: &ConvergenceStudy) -> String {
    let axes = Axes {
        x: decade_range(study.epsilons.iter().copied()),
        y: decade_range(study.errors.iter().flatten().copied()),
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (PAD, W - PAD, PAD, H - PAD);
    let _ = writeln!(
        s,
        r#"<polyline points="{x0},{y0} {x0},{y1} {x1},{y1}" fill="none" stroke="black"/>"#
    );
    for d in axes.x.0 as i32..=axes.x.1 as i32 {
        let x = axes.px(10f64.powi(d));
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y1 + 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" font-size="11" text-anchor="middle">1e{d}</text>"#,
            y1 + 18.0
        );
    }
    for d in axes.y.0 as i32..=axes.y.1 as i32 {
        let y = axes.py(10f64.powi(d));
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">1e{d}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">epsilon</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-size="13" text-anchor="middle">sup error, N = {}</text>"#,
        W / 2.0,
        study.order
    );
    let last = study.epsilons.len().saturating_sub(1);
    for c in 0..4 {
        let colour = COLOURS[c];
        let pts: Vec<(f64, f64)> = study
            .epsilons
            .iter()
            .zip(&study.errors)
            .filter(|(_, row)| row[c] > 0.0)
            .map(|(&e, row)| (axes.px(e), axes.py(row[c])))
            .collect();
        let line: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{colour}"/>"#);
        }
        if let (Some(&e_min), Some(&e_max), Some(row)) =
            (study.epsilons.get(last), study.epsilons.first(), study.errors.get(last))
        {
            if row[c] > 0.0 {
                let guide = row[c] * (e_max / e_min).powf(study.theory_rates[c]);
                let _ = writeln!(
                    s,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-dasharray="4 3"/>"#,
                    axes.px(e_min),
                    axes.py(row[c]),
                    axes.px(e_max),
                    axes.py(guide)
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{} slope {}</text>"#,
            x0 + 8.0,
            y0 + 14.0 * (c as f64 + 1.0),
            NAMES[c],
            fmt_f64(study.fitted_rates[c])
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_has_one_polyline_per_component_and_axes() {
        let eps = vec![0.2, 0.1, 0.05];
        let errors = eps.iter().map(|e: &f64| [e.powi(1), e.powi(2), e * 0.1, e.sqrt()]).collect();
        let study = ConvergenceStudy::new(1, eps, errors).unwrap();
        let svg = study_svg(&study);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 5);
        assert_eq!(svg.matches("<circle").count(), 12);
        assert_eq!(svg.matches("stroke-dasharray").count(), 4);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn points_stay_inside_the_frame() {
        let axes = Axes {
            x: decade_range([0.2, 0.025].into_iter()),
            y: decade_range([3.0, 1e-4].into_iter()),
        };
        for e in [0.2, 0.025] {
            assert!((PAD..=W - PAD).contains(&axes.px(e)));
        }
        for v in [3.0, 1e-4] {
            assert!((PAD..=H - PAD).contains(&axes.py(v)));
        }
        assert_eq!(decade_range([5.0].into_iter()), (0.0, 1.0));
    }
}
