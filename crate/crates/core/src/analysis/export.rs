use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::StateTrace;
use crate::numerics::Scalar;

use super::pca::PcaProjection;

pub const PLOT_COLUMNS: [&str; 9] = [
    "seq_id",
    "pos",
    "pc1",
    "pc2",
    "depth",
    "stack_state",
    "can_end",
    "gold_token",
    "eos_plurality",
];

/// One CSV row as read back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub seq_id: usize,
    pub pos: usize,
    pub pc1: f64,
    pub pc2: f64,
    pub depth: Option<usize>,
    pub stack_state: String,
    pub can_end: Option<bool>,
    pub gold_token: String,
    pub eos_plurality: Option<bool>,
}

/// Seventeen significant digits, enough to round-trip any `f64`.
fn exact(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Load(format!("{}: {other:?}", path.display())),
    }
}

pub fn export_plot_data<T: Scalar>(
    trace: &StateTrace<T>,
    projection: &[[f64; 2]],
    eos_plurality: Option<&[bool]>,
    path: &Path,
) -> Result<()> {
    if projection.len() != trace.len() || eos_plurality.is_some_and(|e| e.len() != trace.len()) {
        return Err(Error::Shape(
            "plot columns are not aligned with the trace".into(),
        ));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(PLOT_COLUMNS).map_err(|e| csv_err(path, e))?;
    let opt = |o: Option<String>| o.unwrap_or_default();
    for (i, (m, c)) in trace.meta.iter().zip(projection).enumerate() {
        w.write_record([
            m.seq_id.to_string(),
            m.pos.to_string(),
            exact(c[0]),
            exact(c[1]),
            opt(m.depth.map(|d| d.to_string())),
            opt(m.stack.clone()),
            opt(m.can_end.map(|b| b.to_string())),
            opt(m.gold_token.clone()),
            opt(eos_plurality.map(|e| e[i].to_string())),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_plot_data(path: &Path) -> Result<Vec<PlotRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939",
];

fn gradient(t: f64) -> String {
    // dark blue -> teal -> yellow
    let stops = [
        (68.0, 1.0, 84.0),
        (33.0, 145.0, 140.0),
        (253.0, 231.0, 37.0),
    ];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (i, f) = if t >= 2.0 {
        (1, 1.0)
    } else {
        (t.floor() as usize, t.fract())
    };
    let (a, b) = (stops[i], stops[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// 800x800 SVG scatter of the projection, coloured by `labels`. Numeric
/// labels with many distinct values get a colour ramp; anything else is
/// treated as categories.
pub fn render_scatter(
    projection: &PcaProjection,
    labels: &[String],
    title: &str,
    path: &Path,
) -> Result<()> {
    let pts = &projection.coords;
    if labels.len() != pts.len() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            pts.len(),
            labels.len()
        )));
    }
    let size = 800.0;
    let (plot_x0, plot_y0, plot_w, plot_h) = (60.0, 60.0, 520.0, 680.0);
    let bound = |k: usize| {
        let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let ((x0, x1), (y0, y1)) = if pts.is_empty() {
        ((0.0, 1.0), (0.0, 1.0))
    } else {
        (bound(0), bound(1))
    };

    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse::<f64>().ok()).collect();
    let distinct: BTreeMap<&str, usize> = labels.iter().fold(BTreeMap::new(), |mut m, l| {
        *m.entry(l.as_str()).or_insert(0) += 1;
        m
    });
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        size / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{plot_x0}" y="{plot_y0}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">PC1 ({:.1}%)</text>"#,
        plot_x0 + plot_w / 2.0,
        plot_y0 + plot_h + 30.0,
        100.0 * projection.explained[0]
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 20 {})" text-anchor="middle">PC2 ({:.1}%)</text>"#,
        plot_y0 + plot_h / 2.0,
        plot_y0 + plot_h / 2.0,
        100.0 * projection.explained[1]
    );

    let ramp = match &numeric {
        Some(v) if distinct.len() > PALETTE.len() => {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi.max(lo + f64::EPSILON)))
        }
        _ => None,
    };
    let category: BTreeMap<&str, usize> =
        distinct.keys().enumerate().map(|(i, k)| (*k, i)).collect();
    let colour = |i: usize| -> String {
        match (ramp, &numeric) {
            (Some((lo, hi)), Some(v)) => gradient((v[i] - lo) / (hi - lo)),
            _ => PALETTE[category[labels[i].as_str()] % PALETTE.len()].to_string(),
        }
    };
    let _ = writeln!(svg, r#"<g fill-opacity="0.6">"#);
    for (i, p) in pts.iter().enumerate() {
        let cx = plot_x0 + (p[0] - x0) / (x1 - x0) * plot_w;
        let cy = plot_y0 + plot_h - (p[1] - y0) / (y1 - y0) * plot_h;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2" fill="{}"/>"#,
            colour(i)
        );
    }
    let _ = writeln!(svg, "</g>");

    let (lx, mut ly) = (600.0, 80.0);
    let _ = writeln!(svg, r#"<g font-family="sans-serif" font-size="11">"#);
    match ramp {
        Some((lo, hi)) => {
            for s in 0..=10 {
                let t = s as f64 / 10.0;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{lx}" y="{ly}" width="14" height="14" fill="{}"/><text x="{}" y="{}">{:.0}</text>"#,
                    gradient(t),
                    lx + 20.0,
                    ly + 11.0,
                    lo + t * (hi - lo)
                );
                ly += 18.0;
            }
        }
        None => {
            let shown = distinct.len().min(30);
            for (name, count) in distinct.iter().take(shown) {
                let label = if name.is_empty() { "(empty)" } else { name };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{lx}" y="{ly}" width="14" height="14" fill="{}"/><text x="{}" y="{}">{} ({count})</text>"#,
                    PALETTE[category[name] % PALETTE.len()],
                    lx + 20.0,
                    ly + 11.0,
                    escape(label)
                );
                ly += 18.0;
            }
            if distinct.len() > shown {
                let _ = writeln!(
                    svg,
                    r#"<text x="{lx}" y="{}">+{} more</text>"#,
                    ly + 11.0,
                    distinct.len() - shown
                );
            }
        }
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::pca_top2;
    use crate::models::StateMeta;
    use crate::numerics::{Matrix, RngStream};

    fn trace(n: usize) -> StateTrace<f64> {
        let mut rng = RngStream::new(1, 0);
        let states = Matrix::from_fn(n, 4, |_, _| rng.uniform_range(-1.0, 1.0) / 3.0);
        let meta = (0..n)
            .map(|i| StateMeta {
                seq_id: i / 10,
                pos: i % 10,
                depth: Some(i % 3),
                stack: Some("([".repeat(i % 3)),
                can_end: Some(i % 3 == 0),
                gold_token: None,
            })
            .collect();
        StateTrace::new(states, meta).unwrap()
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let t = trace(57);
        let p = pca_top2(&t.states).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.csv");
        let eos: Vec<bool> = (0..57).map(|i| i % 5 == 0).collect();
        export_plot_data(&t, &p.coords, Some(&eos), &path).unwrap();
        let rows = read_plot_data(&path).unwrap();
        assert_eq!(rows.len(), 57);
        for ((r, c), m) in rows.iter().zip(&p.coords).zip(&t.meta) {
            assert_eq!(r.pc1.to_bits(), c[0].to_bits());
            assert_eq!(r.pc2.to_bits(), c[1].to_bits());
            assert_eq!(r.gold_token, "");
            assert_eq!(Some(r.stack_state.clone()), m.stack);
        }
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with(&PLOT_COLUMNS.join(",")));
        assert!(matches!(
            export_plot_data(&t, &p.coords[1..], None, &path),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn scatter_has_one_circle_per_point_and_a_legend() {
        let t = trace(40);
        let p = pca_top2(&t.states).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for labels in [
            t.meta
                .iter()
                .map(|m| m.stack.clone().unwrap())
                .collect::<Vec<_>>(),
            (0..40).map(|i| i.to_string()).collect(),
        ] {
            let path = dir.path().join("s.svg");
            render_scatter(&p, &labels, "hidden <states>", &path).unwrap();
            let svg = fs::read_to_string(&path).unwrap();
            assert_eq!(svg.matches("<circle").count(), 40);
            assert!(svg.contains(r#"width="800" height="800""#));
            assert!(svg.contains("hidden &lt;states&gt;"));
            assert!(svg.matches("<rect").count() > 3);
        }
        let bad = dir.path().join("missing-dir").join("x.svg");
        assert!(matches!(
            render_scatter(&p, &vec![String::new(); 40], "", &bad),
            Err(Error::Io { .. })
        ));
    }
}
