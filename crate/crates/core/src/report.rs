//! Plain-text report artifacts: SVG plots, PGM slices and histograms.

use std::fmt::Write as _;

use crate::gmm::GmmFit;
use crate::survival::KmCurve;
use crate::volume::Volume3D;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

/// Formats an optional value for CSV output; `None` becomes an empty field.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins across the sample range; a constant sample fills the first bin.
    pub fn new(samples: &[f64], bins: usize) -> Self {
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let mut counts = vec![0; bins.max(1)];
        if samples.is_empty() {
            return Self { lo: 0.0, hi: 0.0, counts };
        }
        let width = (hi - lo) / counts.len() as f64;
        for &x in samples {
            let b = if width > 0.0 { (((x - lo) / width) as usize).min(counts.len() - 1) } else { 0 };
            counts[b] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let w = self.bin_width();
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let a = self.lo + i as f64 * w;
            let _ = writeln!(out, "{},{},{}", a, a + w, c);
        }
        out
    }
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let (x0, y0, x1) = (MARGIN, H - MARGIN, W - MARGIN);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#);
    s
}

fn axis_labels(s: &mut String, x_lo: f64, x_hi: f64, y_hi: f64, x_name: &str, y_name: &str) {
    let y0 = H - MARGIN;
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, y0 + 16.0, short(x_lo));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#, W - MARGIN, y0 + 16.0, short(x_hi));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_name));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 4.0, short(y_hi));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">0</text>"#, MARGIN - 4.0, y0);
    let _ = writeln!(s, r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{}</text>"#, H / 2.0, H / 2.0, escape(y_name));
}

fn short(v: f64) -> String {
    format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Kaplan-Meier step curves, one colour per group, with censoring ticks.
pub fn km_svg(title: &str, curves: &[(&str, &KmCurve)]) -> String {
    let t_max = curves
        .iter()
        .flat_map(|(_, c)| c.steps.iter().map(|s| s.time).chain(c.censored.iter().copied()))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let sx = |t: f64| MARGIN + t / t_max * (W - 2.0 * MARGIN);
    let sy = |p: f64| H - MARGIN - p * (H - 2.0 * MARGIN);
    let mut s = svg_open(title);
    axis_labels(&mut s, 0.0, t_max, 1.0, "time (months)", "survival probability");
    for (k, (label, curve)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = format!("M {:.2} {:.2}", sx(0.0), sy(1.0));
        for st in &curve.steps {
            let _ = write!(d, " H {:.2} V {:.2}", sx(st.time), sy(st.survival));
        }
        let end = curve.censored.iter().copied().fold(curve.steps.last().map_or(0.0, |s| s.time), f64::max);
        let _ = write!(d, " H {:.2}", sx(end));
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        for &c in &curve.censored {
            let (x, y) = (sx(c), sy(curve.survival_at(c)));
            let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#, y - 4.0, y + 4.0);
        }
        let median = curve.median_survival.map_or("NA".to_string(), short);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}" text-anchor="end">{} (n={}, median {})</text>"#,
            W - MARGIN,
            MARGIN + 16.0 * (k as f64 + 1.0),
            escape(label),
            curve.n,
            median
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Histogram bars with the fitted mixture density scaled to counts.
pub fn histogram_svg(title: &str, hist: &Histogram, fit: &GmmFit) -> String {
    let n: usize = hist.counts.iter().sum();
    let bins = hist.counts.len();
    // Give a constant sample a unit-wide axis so the single bar stays visible.
    let (lo, hi) = if hist.hi > hist.lo { (hist.lo, hist.hi) } else { (hist.lo - 0.5, hist.lo + 0.5) };
    let bw = (hi - lo) / bins as f64;
    let curve: Vec<(f64, f64)> = (0..=400)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 400.0;
            (x, fit.density(x) * n as f64 * bw)
        })
        .collect();
    let c_max = hist.counts.iter().copied().max().unwrap_or(0) as f64;
    let curve_max = curve.iter().map(|p| p.1).fold(0.0, f64::max);
    // Point-mass fits have near-infinite peaks; cap the y-axis relative to the bars.
    let y_max = c_max.max(curve_max.min(3.0 * c_max)).max(1.0);
    let sx = |x: f64| MARGIN + (x - lo) / (hi - lo) * (W - 2.0 * MARGIN);
    let sy = |c: f64| H - MARGIN - c.min(y_max) / y_max * (H - 2.0 * MARGIN);
    let mut s = svg_open(title);
    axis_labels(&mut s, lo, hi, y_max, "activation", "voxel count");
    let bar_w = (W - 2.0 * MARGIN) / bins as f64;
    for (i, &c) in hist.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let x = if hist.hi > hist.lo { MARGIN + i as f64 * bar_w } else { sx(hist.lo) - bar_w / 2.0 };
        let y = sy(c as f64);
        let _ = writeln!(
            s,
            r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="#6baed6"/>"##,
            bar_w,
            H - MARGIN - y
        );
    }
    let mut d = String::new();
    for (i, &(x, y)) in curve.iter().enumerate() {
        let _ = write!(d, "{} {:.2} {:.2} ", if i == 0 { "M" } else { "L" }, sx(x), sy(y));
    }
    let _ = writeln!(s, r##"<path d="{}" fill="none" stroke="#d62728" stroke-width="2"/>"##, d.trim_end());
    for (k, c) in fit.components.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">mu{}={} var{}={} w{}={}</text>"#,
            W - MARGIN,
            MARGIN + 14.0 * (k as f64 + 1.0),
            k + 1,
            short(c.mu),
            k + 1,
            short(c.sigma2),
            k + 1,
            short(c.omega)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Binary PGM (P5) of the central axial slice, min-max scaled to 0..255.
pub fn central_slice_pgm(v: &Volume3D) -> Vec<u8> {
    let [nx, ny, nz] = v.dims();
    let z = nz / 2;
    let slice: Vec<f64> = (0..ny).flat_map(|y| (0..nx).map(move |x| (x, y))).map(|(x, y)| v.get(x, y, z)).collect();
    let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend(slice.iter().map(|&x| if hi > lo { (255.0 * (x - lo) / (hi - lo)).round() as u8 } else { 0 }));
    out
}
