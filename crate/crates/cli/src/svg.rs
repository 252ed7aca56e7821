//! Minimal standalone SVG figures: scatter plots, line charts and bar histograms.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Data-space rectangle mapped onto the plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Frame {
    /// Bounds of the given points, padded by 5% (or 1 for a zero range).
    pub fn fit(points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            return Self {
                x: (0.0, 1.0),
                y: (0.0, 1.0),
            };
        }
        let pad = |a: f64, b: f64| {
            let r = if b > a { (b - a) * 0.05 } else { 1.0 };
            (a - r, b + r)
        };
        Self {
            x: pad(x0, x1),
            y: pad(y0, y1),
        }
    }

    fn px(&self, x: f64) -> f64 {
        PAD + (x - self.x.0) / (self.x.1 - self.x.0) * (W - 2.0 * PAD)
    }

    fn py(&self, y: f64) -> f64 {
        H - PAD - (y - self.y.0) / (self.y.1 - self.y.0) * (H - 2.0 * PAD)
    }
}

pub struct Figure {
    frame: Frame,
    body: String,
    legend: Vec<(String, String)>,
}

impl Figure {
    pub fn new(frame: Frame, title: &str, x_label: &str, y_label: &str) -> Self {
        let mut body = String::new();
        let (l, r, t, b) = (PAD, W - PAD, PAD, H - PAD);
        let _ = write!(
            body,
            r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        let _ = write!(
            body,
            r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            W / 2.0,
            escape(title)
        );
        let _ = write!(
            body,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">{}</text>"#,
            W / 2.0,
            H - 8.0,
            escape(x_label)
        );
        let _ = write!(
            body,
            r#"<text x="12" y="{}" text-anchor="middle" font-size="11" transform="rotate(-90 12 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(y_label)
        );
        for (v, anchor, x, y) in [(frame.x.0, "start", l, b + 14.0), (frame.x.1, "end", r, b + 14.0)] {
            let _ = write!(
                body,
                r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="9">{}</text>"#,
                short(v)
            );
        }
        for (v, y) in [(frame.y.0, b), (frame.y.1, t + 8.0)] {
            let _ = write!(
                body,
                r#"<text x="{}" y="{y}" text-anchor="end" font-size="9">{}</text>"#,
                l - 3.0,
                short(v)
            );
        }
        Self {
            frame,
            body,
            legend: Vec::new(),
        }
    }

    pub fn points(&mut self, pts: &[(f64, f64)], radius: f64, color: &str, label: Option<&str>) -> &mut Self {
        for &(x, y) in pts {
            let _ = write!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{color}" fill-opacity="0.7"/>"#,
                self.frame.px(x),
                self.frame.py(y)
            );
        }
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
        self
    }

    pub fn line(&mut self, pts: &[(f64, f64)], color: &str, label: Option<&str>) -> &mut Self {
        let path: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", self.frame.px(x), self.frame.py(y)))
            .collect();
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.join(" ")
        );
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
        self
    }

    /// Bars of equal width starting at `x0`.
    pub fn bars(&mut self, x0: f64, width: f64, heights: &[f64], color: &str, label: Option<&str>) -> &mut Self {
        for (i, &h) in heights.iter().enumerate() {
            let a = self.frame.px(x0 + i as f64 * width);
            let b = self.frame.px(x0 + (i + 1) as f64 * width);
            let top = self.frame.py(h);
            let base = self.frame.py(0.0f64.max(self.frame.y.0));
            let _ = write!(
                self.body,
                r#"<rect x="{a:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                (b - a).max(0.0),
                (base - top).max(0.0)
            );
        }
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
        self
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif">"#
        );
        out.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        out.push_str(&self.body);
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = PAD + 12.0 + 14.0 * i as f64;
            let x = W - PAD - 110.0;
            let _ = write!(
                out,
                r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="10">{}</text>"#,
                y - 9.0,
                x + 14.0,
                y,
                escape(label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

fn short(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_maps_corners() {
        let f = Frame {
            x: (0.0, 1.0),
            y: (-1.0, 1.0),
        };
        assert_eq!(f.px(0.0), PAD);
        assert_eq!(f.px(1.0), W - PAD);
        assert_eq!(f.py(-1.0), H - PAD);
        assert_eq!(f.py(1.0), PAD);
    }

    #[test]
    fn renders_well_formed_document() {
        let mut fig = Figure::new(Frame::fit([(0.0, 0.0), (2.0, 3.0)]), "a < b", "x", "y");
        fig.points(&[(1.0, 1.0)], 2.0, PALETTE[0], Some("pts"))
            .line(&[(0.0, 0.0), (2.0, 3.0)], PALETTE[1], None)
            .bars(0.0, 1.0, &[1.0, 2.0], PALETTE[2], Some("hist"));
        let s = fig.render();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 1);
        assert!(s.contains("a &lt; b"));
    }

    #[test]
    fn empty_fit_is_unit_square() {
        let f = Frame::fit(std::iter::empty());
        assert_eq!(
            f,
            Frame {
                x: (0.0, 1.0),
                y: (0.0, 1.0)
            }
        );
    }
}
