//! Minimal SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: [f64; 4] = [60.0, 20.0, 40.0, 50.0]; // left, right, top, bottom
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round-number tick positions covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN[0] + (x - self.x.0) / (self.x.1 - self.x.0) * (W - MARGIN[0] - MARGIN[1])
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN[3] - (y - self.y.0) / (self.y.1 - self.y.0) * (H - MARGIN[2] - MARGIN[3])
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ =
        writeln!(out, "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>", W / 2.0, esc(title));
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: bool) {
    let (x0, x1, y0, y1) = (MARGIN[0], W - MARGIN[1], H - MARGIN[3], MARGIN[2]);
    let _ = writeln!(out, "<path d=\"M{x0},{y1} L{x0},{y0} L{x1},{y0}\" fill=\"none\" stroke=\"black\"/>");
    for t in ticks(f.y.0, f.y.1, 5) {
        let y = f.py(t);
        let _ = writeln!(out, "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{x0}\" y2=\"{y:.1}\" stroke=\"black\"/>", x0 - 4.0);
        let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y:.1}\" x2=\"{x1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>");
        let _ =
            writeln!(out, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 6.0, y + 4.0, fmt_tick(t));
    }
    if xticks {
        for t in ticks(f.x.0, f.x.1, 6) {
            let x = f.px(t);
            let _ =
                writeln!(out, "<line x1=\"{x:.1}\" y1=\"{y0}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"black\"/>", y0 + 4.0);
            let _ =
                writeln!(out, "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", y0 + 18.0, fmt_tick(t));
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 10.0,
        esc(xlabel)
    );
    let _ = writeln!(
        out,
        "<text transform=\"translate(16,{}) rotate(-90)\" text-anchor=\"middle\">{}</text>",
        (y0 + y1) / 2.0,
        esc(ylabel)
    );
}

fn fmt_tick(t: f64) -> String {
    let s = format!("{t:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn bounds<'a>(vals: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// One polyline per named series, with a legend.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let xs = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| &p.0)));
    let ys = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| &p.1)));
    let (xs, ys) = if xs.0.is_finite() { (xs, ys) } else { ((0.0, 1.0), (0.0, 1.0)) };
    let f = Frame::new(xs, ys);
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel, true);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.1},{:.1}", f.px(p.0), f.py(p.1)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            d.join(" ")
        );
        let ly = MARGIN[2] + 10.0 + 16.0 * i as f64;
        let lx = W - MARGIN[1] - 130.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        );
        let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{}</text>", lx + 26.0, ly + 4.0, esc(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Bars of `(label, value, std)` from zero, with ±std whiskers.
pub fn bar_chart(title: &str, ylabel: &str, bars: &[(String, f64, f64)]) -> String {
    let hi = bars.iter().map(|b| b.1 + b.2).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let f = Frame::new((0.0, bars.len().max(1) as f64), (0.0, if hi > 0.0 { hi * 1.1 } else { 1.0 }));
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "", ylabel, false);
    for (i, (name, v, sd)) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let (xa, xb) = (f.px(i as f64 + 0.2), f.px(i as f64 + 0.8));
        let (yt, yb) = (f.py(v.max(0.0)), f.py(0.0));
        let _ = writeln!(
            out,
            "<rect x=\"{xa:.1}\" y=\"{yt:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{color}\"/>",
            xb - xa,
            yb - yt
        );
        let xm = (xa + xb) / 2.0;
        if *sd > 0.0 {
            let (y1, y2) = (f.py(v + sd), f.py((v - sd).max(0.0)));
            let _ =
                writeln!(out, "<line x1=\"{xm:.1}\" y1=\"{y1:.1}\" x2=\"{xm:.1}\" y2=\"{y2:.1}\" stroke=\"black\"/>");
        }
        let _ = writeln!(out, "<text x=\"{xm:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", yb + 16.0, esc(name));
        let _ = writeln!(out, "<text x=\"{xm:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{v:.3}</text>", yt - 4.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Overlay several single-layer SVG documents of equal size into one.
pub fn merge_svgs(docs: &[String]) -> String {
    let mut out = String::new();
    for (i, d) in docs.iter().enumerate() {
        let lines: Vec<&str> = d.lines().collect();
        if i == 0 {
            if let Some(h) = lines.first() {
                out.push_str(h);
                out.push('\n');
            }
        }
        for l in lines.iter().skip(1).filter(|l| !l.starts_with("</svg")) {
            out.push_str(l);
            out.push('\n');
        }
    }
    out.push_str("</svg>\n");
    out
}
