//! Minimal SVG output: rects, polylines and text.

use std::fmt::Write;

use qqual_core::geometry::GridField;

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        let mut s = Self {
            width,
            height,
            body: String::new(),
        };
        s.rect(0.0, 0.0, width, height, "#ffffff");
        s
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        let mut d = String::new();
        for (i, (x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="sans-serif" font-size="{size}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Data-to-pixel map of one plotting panel, y pointing up.
#[derive(Clone, Copy)]
pub struct Panel {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Panel {
    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y.0) / (self.y.1 - self.y.0) * self.height
    }

    pub fn map(&self, pts: &[[f64; 2]]) -> Vec<(f64, f64)> {
        pts.iter().map(|p| (self.px(p[0]), self.py(p[1]))).collect()
    }

    /// Frame, five ticks per axis and axis labels.
    pub fn axes(&self, svg: &mut Svg, xlabel: &str, ylabel: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        svg.polyline(
            &[(l, t), (l + w, t), (l + w, t + h), (l, t + h), (l, t)],
            "#000000",
            1.0,
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let (xp, yp) = (self.px(xv), self.py(yv));
            svg.polyline(&[(xp, t + h), (xp, t + h + 4.0)], "#000000", 1.0);
            svg.text(xp, t + h + 16.0, 10.0, "middle", &tick(xv));
            svg.polyline(&[(l - 4.0, yp), (l, yp)], "#000000", 1.0);
            svg.text(l - 6.0, yp + 3.0, 10.0, "end", &tick(yv));
        }
        svg.text(l + w / 2.0, t + h + 32.0, 12.0, "middle", xlabel);
        svg.text(l - 44.0, t + h / 2.0, 12.0, "middle", ylabel);
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

/// Diverging colour: purple below zero, white at zero, green above.
pub fn diverging(v: f64, scale: f64) -> String {
    let f = (v / scale).clamp(-1.0, 1.0);
    let (r, g, b) = if f < 0.0 {
        let a = -f;
        (255.0 - a * 137.0, 255.0 - a * 200.0, 255.0 - a * 84.0)
    } else {
        (255.0 - f * 228.0, 255.0 - f * 135.0, 255.0 - f * 200.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heatmap of a grid with zero contours overlaid, one (polylines, colour)
/// pair per layer, and an inset of text lines.
pub fn regime_map_svg(
    title: &str,
    grid: &GridField,
    contours: &[(&[Vec<[f64; 2]>], &str)],
    inset: &[String],
) -> String {
    let mut svg = Svg::new(640.0, 520.0);
    let panel = Panel {
        left: 70.0,
        top: 40.0,
        width: 440.0,
        height: 420.0,
        x: (grid.q2_axis[0], grid.q2_axis[grid.nx() - 1]),
        y: (grid.xb_axis[0], grid.xb_axis[grid.ny() - 1]),
    };
    svg.text(320.0, 24.0, 14.0, "middle", title);
    let scale = grid
        .values
        .iter()
        .zip(&grid.mask)
        .filter(|(_, &m)| m)
        .fold(0.0f64, |a, (v, _)| a.max(v.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    // At most 100 cells per axis are drawn; finer grids are subsampled.
    let step = |n: usize| n.div_ceil(100).max(1);
    let (sx, sy) = (step(grid.nx()), step(grid.ny()));
    let dx = panel.width / grid.nx() as f64;
    let dy = panel.height / grid.ny() as f64;
    for iy in (0..grid.ny()).step_by(sy) {
        for ix in (0..grid.nx()).step_by(sx) {
            let Some(v) = grid.value(ix, iy) else {
                continue;
            };
            let x = panel.left + ix as f64 * dx;
            let y = panel.top + panel.height - (iy + sy).min(grid.ny()) as f64 * dy;
            let w = (sx.min(grid.nx() - ix)) as f64 * dx;
            let h = (sy.min(grid.ny() - iy)) as f64 * dy;
            svg.rect(x, y, w + 0.3, h + 0.3, &diverging(v, scale));
        }
    }
    for (lines, colour) in contours {
        for line in lines.iter() {
            svg.polyline(&panel.map(line), colour, 2.0);
        }
    }
    panel.axes(&mut svg, "Q² (GeV²)", "x_B");
    for (k, line) in inset.iter().enumerate() {
        svg.text(522.0, 60.0 + 16.0 * k as f64, 11.0, "start", line);
    }
    // Colour key.
    for k in 0..=20 {
        let v = scale * (1.0 - k as f64 / 10.0);
        svg.rect(
            530.0,
            260.0 + 8.0 * k as f64,
            16.0,
            8.0,
            &diverging(v, scale),
        );
    }
    svg.text(550.0, 268.0, 10.0, "start", &format!("{scale:+.3}"));
    svg.text(550.0, 428.0, 10.0, "start", &format!("{:+.3}", -scale));
    svg.finish()
}

/// Two stacked panels: truth, noisy samples and both predictions on top,
/// residuals against the truth below.
pub fn regression_svg(
    title: &str,
    xs: &[f64],
    truth: &[f64],
    noisy: &[f64],
    cdnn: &[f64],
    qdnn: &[f64],
) -> String {
    let mut svg = Svg::new(640.0, 600.0);
    svg.text(320.0, 24.0, 14.0, "middle", title);
    let xr = extent(xs.iter().copied());
    let top = Panel {
        left: 70.0,
        top: 40.0,
        width: 520.0,
        height: 320.0,
        x: xr,
        y: extent(truth.iter().chain(noisy).chain(cdnn).chain(qdnn).copied()),
    };
    let rc: Vec<f64> = cdnn.iter().zip(truth).map(|(p, t)| p - t).collect();
    let rq: Vec<f64> = qdnn.iter().zip(truth).map(|(p, t)| p - t).collect();
    let bottom = Panel {
        top: 420.0,
        height: 130.0,
        y: extent(rc.iter().chain(&rq).copied().chain([0.0])),
        ..top
    };
    for (x, y) in xs.iter().zip(noisy) {
        svg.circle(top.px(*x), top.py(*y), 2.0, "#9e9e9e");
    }
    let line = |p: &Panel, ys: &[f64]| -> Vec<(f64, f64)> {
        xs.iter()
            .zip(ys)
            .map(|(x, y)| (p.px(*x), p.py(*y)))
            .collect()
    };
    svg.polyline(&line(&top, truth), "#000000", 2.0);
    svg.polyline(&line(&top, cdnn), "#1f77b4", 1.5);
    svg.polyline(&line(&top, qdnn), "#d62728", 1.5);
    top.axes(&mut svg, "x", "y");
    svg.polyline(
        &[
            (bottom.px(xr.0), bottom.py(0.0)),
            (bottom.px(xr.1), bottom.py(0.0)),
        ],
        "#000000",
        1.0,
    );
    svg.polyline(&line(&bottom, &rc), "#1f77b4", 1.5);
    svg.polyline(&line(&bottom, &rq), "#d62728", 1.5);
    bottom.axes(&mut svg, "x", "residual");
    let legend = [
        ("#000000", "truth"),
        ("#1f77b4", "CDNN"),
        ("#d62728", "QDNN"),
    ];
    for (k, (c, name)) in legend.iter().enumerate() {
        let y = 54.0 + 14.0 * k as f64;
        svg.polyline(&[(500.0, y), (520.0, y)], c, 2.0);
        svg.text(524.0, y + 4.0, 11.0, "start", name);
    }
    svg.finish()
}
