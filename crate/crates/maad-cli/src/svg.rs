//! Minimal SVG line-chart writer: axes, tick labels, mean curves with
//! standard-deviation bands, and a legend. No plotting dependency; the
//! output is a plain standalone SVG document.

pub struct Series {
    pub label: String,
    pub color: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Optional symmetric band half-width per point (e.g. one std).
    pub band: Option<Vec<f64>>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub y_clip: Option<(f64, f64)>,
}

const W: f64 = 760.0;
const H: f64 = 460.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| (hi - lo) / s <= target as f64 + 0.5)
        .unwrap_or(mag * 10.0);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 100_000.0 {
        format!("{:.0}k", v / 1000.0)
    } else if a >= 1000.0 {
        let k = v / 1000.0;
        if (k - k.round()).abs() < 1e-9 {
            format!("{:.0}k", k)
        } else {
            format!("{:.1}k", k)
        }
    } else if a >= 1.0 {
        if (v - v.round()).abs() < 1e-9 {
            format!("{v:.0}")
        } else {
            format!("{v:.2}")
        }
    } else {
        format!("{v:.3}")
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for s in &self.series {
            for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
                if !x.is_finite() || !y.is_finite() {
                    continue;
                }
                let b = s.band.as_ref().map(|b| b[i]).unwrap_or(0.0);
                x_min = x_min.min(x);
                x_max = x_max.max(x);
                y_min = y_min.min(y - b);
                y_max = y_max.max(y + b);
            }
        }
        if let Some((lo, hi)) = self.y_clip {
            y_min = y_min.max(lo);
            y_max = y_max.min(hi);
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
        }
        if !y_min.is_finite() || y_min == y_max {
            y_min -= 0.5;
            y_max += 0.5;
        }
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;

        let px = |x: f64| ML + (x - x_min) / (x_max - x_min) * (W - ML - MR);
        let py =
            |y: f64| H - MB - (y.clamp(y_min, y_max) - y_min) / (y_max - y_min) * (H - MT - MB);

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
        ));
        out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
        out.push_str(&format!(
            "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\" font-weight=\"bold\">{}</text>\n",
            W / 2.0,
            escape(&self.title)
        ));

        // grid and ticks
        for t in nice_ticks(x_min, x_max, 6) {
            let x = px(t);
            out.push_str(&format!(
                "<line x1=\"{x:.1}\" y1=\"{}\" x2=\"{x:.1}\" y2=\"{}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                MT, H - MB
            ));
            out.push_str(&format!(
                "<text x=\"{x:.1}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
                H - MB + 16.0,
                fmt_tick(t)
            ));
        }
        for t in nice_ticks(y_min, y_max, 6) {
            let y = py(t);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
                ML, W - MR
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>\n",
                ML - 6.0,
                y + 4.0,
                fmt_tick(t)
            ));
        }
        // axes
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            H - MB, W - MR, H - MB
        ));
        out.push_str(&format!(
            "<line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1.5\"/>\n",
            H - MB
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
            (ML + W - MR) / 2.0,
            H - 14.0,
            escape(&self.x_label)
        ));
        out.push_str(&format!(
            "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
            (MT + H - MB) / 2.0,
            (MT + H - MB) / 2.0,
            escape(&self.y_label)
        ));

        // bands first, then lines on top
        for s in &self.series {
            if let Some(band) = &s.band {
                let mut d = String::from("M");
                for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate() {
                    d.push_str(&format!("{:.1},{:.1} ", px(x), py(y + band[i])));
                    if i == 0 {
                        d = d.replacen('M', "M ", 1);
                    }
                }
                for (i, (&x, &y)) in s.xs.iter().zip(&s.ys).enumerate().rev() {
                    d.push_str(&format!("L{:.1},{:.1} ", px(x), py(y - band[i])));
                }
                d.push('Z');
                out.push_str(&format!(
                    "<path d=\"{d}\" fill=\"{}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n",
                    s.color
                ));
            }
        }
        for s in &self.series {
            let pts: Vec<String> =
                s.xs.iter()
                    .zip(&s.ys)
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .map(|(&x, &y)| format!("{:.1},{:.1}", px(x), py(y)))
                    .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                pts.join(" "),
                s.color
            ));
        }
        // legend
        for (i, s) in self.series.iter().enumerate() {
            let y = MT + 8.0 + 18.0 * i as f64;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y:.1}\" x2=\"{}\" y2=\"{y:.1}\" stroke=\"{}\" stroke-width=\"3\"/>\n",
                ML + 10.0,
                ML + 34.0,
                s.color
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                ML + 40.0,
                y + 4.0,
                escape(&s.label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
