//! CSV and SVG output for advantage measurements.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{file_error, Error, Result};
use crate::rational::to_f64;

use super::AdvantageRow;

pub const CSV_COLUMNS: [&str; 13] = [
    "class", "instance", "n", "m", "w", "eps", "seed_bits", "exact_E", "gen_E", "advantage", "mode", "samples",
    "time_ms",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_string(rows: &[AdvantageRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.class.clone(),
            r.instance.clone(),
            r.n.to_string(),
            opt(r.m),
            opt(r.w),
            r.eps.to_string(),
            r.seed_bits.to_string(),
            format!("{:.12}", to_f64(&r.exact_e)),
            format!("{:.12}", to_f64(&r.gen_e)),
            format!("{:.12}", to_f64(&r.advantage)),
            r.mode.as_str().to_string(),
            r.samples.to_string(),
            opt(r.time_ms),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const PANEL_W: f64 = 400.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 50.0;

struct Panel<'a> {
    title: &'a str,
    x_label: &'a str,
    points: Vec<(f64, f64)>,
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn draw_panel(out: &mut String, p: &Panel, x0: f64) {
    let (xl, xh) = range(p.points.iter().map(|q| q.0));
    let (_, yh) = range(p.points.iter().map(|q| q.1));
    let yh = yh.max(1e-12);
    let (left, top) = (x0 + MARGIN, MARGIN);
    let (w, h) = (PANEL_W - 2.0 * MARGIN, PANEL_H - 2.0 * MARGIN);
    let _ = writeln!(out, r#"<rect x="{left:.1}" y="{top:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, left + w / 2.0, top - 15.0, p.title);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + w / 2.0,
        top + h + 35.0,
        p.x_label
    );
    for (x, anchor, label) in [(left, "start", xl), (left + w, "end", xh)] {
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="{anchor}">{label:.3}</text>"#, top + h + 15.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">0</text>"#, left - 5.0, top + h);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yh:.4}</text>"#, left - 5.0, top + 10.0);
    for &(x, y) in &p.points {
        let cx = left + (x - xl) / (xh - xl) * w;
        let cy = top + h - (y / yh).clamp(0.0, 1.0) * h;
        let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="steelblue"/>"#);
    }
}

/// Scatter plots of advantage against seed length and against `log2 eps`.
pub fn svg_string(rows: &[AdvantageRow]) -> String {
    let panels = [
        Panel {
            title: "advantage vs seed bits",
            x_label: "seed bits",
            points: rows.iter().map(|r| (r.seed_bits as f64, to_f64(&r.advantage))).collect(),
        },
        Panel {
            title: "advantage vs eps",
            x_label: "log2 eps",
            points: rows.iter().filter(|r| r.eps > 0.0).map(|r| (r.eps.log2(), to_f64(&r.advantage))).collect(),
        },
    ];
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{PANEL_H:.0}" font-family="sans-serif" font-size="11">"#,
        2.0 * PANEL_W
    );
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, i as f64 * PANEL_W);
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_report(rows: &[AdvantageRow], csv_path: &Path, svg_path: Option<&Path>) -> Result<()> {
    std::fs::write(csv_path, csv_string(rows)?).map_err(file_error(csv_path))?;
    if let Some(p) = svg_path {
        std::fs::write(p, svg_string(rows)).map_err(file_error(p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Mode;
    use crate::rational::ratio;

    fn row() -> AdvantageRow {
        AdvantageRow {
            class: "rcnf".into(),
            instance: "tribes-w2".into(),
            n: 16,
            m: Some(8),
            w: Some(2),
            eps: 0.0625,
            seed_bits: 20,
            exact_e: ratio(1, 2),
            gen_e: ratio(3, 8),
            advantage: ratio(1, 8),
            mode: Mode::Exhaustive,
            samples: 1 << 20,
            half_width: None,
            time_ms: None,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        assert_eq!(csv_string(&[]).unwrap(), CSV_COLUMNS.join(",") + "\n");
        let svg = svg_string(&[]);
        assert!(svg.contains("<rect") && !svg.contains("<circle"));
    }

    #[test]
    fn one_row() {
        let s = csv_string(&[row()]).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "rcnf,tribes-w2,16,8,2,0.0625,20,0.500000000000,0.375000000000,0.125000000000,exhaustive,1048576,"
        );
        assert_eq!(svg_string(&[row()]).matches("<circle").count(), 2);
    }
}
