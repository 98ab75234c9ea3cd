//! Bare-bones SVG charts for quick inspection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 480.0;
const PAD: f64 = 48.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let lo_hi = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = lo_hi(&mut xs.clone());
        let (y0, y1) = lo_hi(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="#999"/>"##,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    for (k, label) in labels.iter().enumerate() {
        let y = PAD + 6.0 + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - PAD + 4.0,
            y,
            PALETTE[k % PALETTE.len()],
            W - PAD + 17.0,
            y + 9.0,
            escape(label)
        );
    }
}

/// Points coloured by label, each annotated with its name.
pub fn scatter(title: &str, names: &[String], points: &[[f64; 2]], labels: &[String]) -> String {
    let frame = Frame::fit(points.iter().map(|p| p[0]), points.iter().map(|p| p[1]));
    let mut keys: Vec<&str> = labels.iter().map(String::as_str).collect();
    keys.sort_unstable();
    keys.dedup();
    let colour: BTreeMap<&str, &str> = keys
        .iter()
        .enumerate()
        .map(|(k, l)| (*l, PALETTE[k % PALETTE.len()]))
        .collect();
    let mut out = String::new();
    open(&mut out, title);
    for ((name, p), label) in names.iter().zip(points).zip(labels) {
        let (x, y) = (frame.px(p[0]), frame.py(p[1]));
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"><title>{} ({})</title></circle>"#,
            colour[label.as_str()],
            escape(name),
            escape(label)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-size="8" fill="#444">{}</text>"##,
            x + 5.0,
            y - 3.0,
            escape(name)
        );
    }
    legend(&mut out, &keys);
    out.push_str("</svg>\n");
    out
}

/// One polyline per series over a shared integer x axis.
pub fn line_chart(title: &str, series: &[(String, Vec<f64>)], x_labels: &[String]) -> String {
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let frame = Frame::fit(
        [0.0, len.saturating_sub(1) as f64].into_iter(),
        series
            .iter()
            .flat_map(|(_, v)| v.iter().copied())
            .chain([0.0, 1.0]),
    );
    let mut out = String::new();
    open(&mut out, title);
    for (k, (_, values)) in series.iter().enumerate() {
        let mut path = String::new();
        for (t, v) in values.iter().enumerate() {
            let _ = write!(
                path,
                "{}{:.2},{:.2}",
                if t == 0 { "M" } else { " L" },
                frame.px(t as f64),
                frame.py(*v)
            );
        }
        let _ = writeln!(
            out,
            r#"<path d="{path}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            PALETTE[k % PALETTE.len()]
        );
    }
    for (t, label) in [0, len / 2, len.saturating_sub(1)]
        .into_iter()
        .filter_map(|t| x_labels.get(t).map(|l| (t, l)))
    {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            frame.px(t as f64),
            H - PAD + 16.0,
            escape(label)
        );
    }
    for v in [frame.y0, frame.y1] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            PAD - 4.0,
            frame.py(v) + 4.0
        );
    }
    let names: Vec<&str> = series.iter().map(|(n, _)| n.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}
