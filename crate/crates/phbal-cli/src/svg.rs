//! Minimal log-scale line plot of a sweep table.

use std::fmt::Write as _;

use phbal::bounds::BoundReport;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

type Getter = fn(&BoundReport) -> Option<f64>;

const SERIES: [(&str, &str, bool, Getter); 6] = [
    ("err_coprime", "#1f77b4", false, |r| r.err_coprime),
    ("bound_coprime", "#1f77b4", true, |r| r.bound_coprime),
    ("err_hinf", "#d62728", false, |r| r.err_hinf),
    ("bound_hinf", "#d62728", true, |r| r.bound_hinf),
    ("err_spectral", "#2ca02c", false, |r| r.err_spectral),
    ("bound_spectral", "#2ca02c", true, |r| r.bound_spectral),
];

pub fn plot(rows: &[BoundReport], title: &str) -> String {
    let mut pts: Vec<(&str, &str, bool, Vec<(f64, f64)>)> = vec![];
    for (name, color, dashed, get) in SERIES {
        let p: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| get(r).filter(|v| *v > 0.0 && v.is_finite()).map(|v| (r.r as f64, v.log10())))
            .collect();
        if !p.is_empty() {
            pts.push((name, color, dashed, p));
        }
    }
    let all = pts.iter().flat_map(|s| s.3.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for e in (y0 as i32)..=(y1 as i32) {
        let y = sy(e as f64);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"#, LEFT - 6.0, y + 4.0);
    }
    for r in rows.iter().map(|r| r.r).collect::<std::collections::BTreeSet<_>>() {
        let x = sx(r as f64);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{r}</text>"#, TOP + ph + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">reduced order r</text>"#, LEFT + pw / 2.0, H - 10.0);
    for (i, (name, color, dashed, p)) in pts.iter().enumerate() {
        let dash = if *dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let coords: Vec<String> = p.iter().map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, coords.join(" "));
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(s, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="1.5"{dash}/>"#, lx + 30.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{name}</text>"#, lx + 36.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
