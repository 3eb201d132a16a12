//! Dependency-free SVG chart primitives: a scatter plot and a two-axis line
//! chart, enough to render the correlation and rate-sweep figures. Data is
//! always also emitted as CSV by the callers, so the charts are optional
//! conveniences.

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        self.x0 + (v - self.xmin) / (self.xmax - self.xmin) * self.w
    }

    fn y(&self, v: f64) -> f64 {
        self.y0 + self.h - (v - self.ymin) / (self.ymax - self.ymin) * self.h
    }
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.08;
    (lo - pad, hi + pad)
}

fn axes(frame: &Frame, xlabel: &str, ylabel: &str, ticks: usize, out: &mut String) {
    out.push_str(&format!(
        "<rect x='{}' y='{}' width='{}' height='{}' fill='none' stroke='#333'/>\n",
        frame.x0, frame.y0, frame.w, frame.h
    ));
    for i in 0..=ticks {
        let fx = frame.xmin + (frame.xmax - frame.xmin) * i as f64 / ticks as f64;
        let px = frame.x(fx);
        out.push_str(&format!(
            "<line x1='{px}' y1='{}' x2='{px}' y2='{}' stroke='#333'/>\n",
            frame.y0 + frame.h,
            frame.y0 + frame.h + 4.0
        ));
        out.push_str(&format!(
            "<text x='{px}' y='{}' font-size='11' text-anchor='middle'>{}</text>\n",
            frame.y0 + frame.h + 18.0,
            fmt(fx)
        ));
        let fy = frame.ymin + (frame.ymax - frame.ymin) * i as f64 / ticks as f64;
        let py = frame.y(fy);
        out.push_str(&format!(
            "<line x1='{}' y1='{py}' x2='{}' y2='{py}' stroke='#333'/>\n",
            frame.x0 - 4.0,
            frame.x0
        ));
        out.push_str(&format!(
            "<text x='{}' y='{}' font-size='11' text-anchor='end'>{}</text>\n",
            frame.x0 - 7.0,
            py + 4.0,
            fmt(fy)
        ));
    }
    out.push_str(&format!(
        "<text x='{}' y='{}' font-size='13' text-anchor='middle'>{xlabel}</text>\n",
        frame.x0 + frame.w / 2.0,
        frame.y0 + frame.h + 38.0
    ));
    out.push_str(&format!(
        "<text x='16' y='{}' font-size='13' text-anchor='middle' transform='rotate(-90 16 {})'>{ylabel}</text>\n",
        frame.y0 + frame.h / 2.0,
        frame.y0 + frame.h / 2.0
    ));
}

/// Scatter plot with an optional annotation line under the title.
pub fn scatter_svg(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    points: &[(f64, f64)],
    annotation: Option<&str>,
) -> String {
    let (xmin, xmax) = padded_range(points.iter().map(|p| p.0));
    let (ymin, ymax) = padded_range(points.iter().map(|p| p.1));
    let frame = Frame { x0: 70.0, y0: 50.0, w: 500.0, h: 360.0, xmin, xmax, ymin, ymax };
    let mut out = String::from(
        "<svg xmlns='http://www.w3.org/2000/svg' width='640' height='480' viewBox='0 0 640 480'>\n",
    );
    out.push_str("<rect width='640' height='480' fill='white'/>\n");
    out.push_str(&format!(
        "<text x='320' y='24' font-size='15' text-anchor='middle'>{title}</text>\n"
    ));
    if let Some(note) = annotation {
        out.push_str(&format!(
            "<text x='320' y='42' font-size='12' text-anchor='middle' fill='#555'>{note}</text>\n"
        ));
    }
    axes(&frame, xlabel, ylabel, 5, &mut out);
    for &(x, y) in points {
        out.push_str(&format!(
            "<circle cx='{}' cy='{}' r='4.5' fill='#2266cc' fill-opacity='0.85'/>\n",
            frame.x(x),
            frame.y(y)
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Two-series line chart with independent left and right y-axes sharing one
/// x-axis (used for the dropout-rate sweep: repetition on the left axis,
/// perplexity on the right).
pub fn dual_axis_svg(
    title: &str,
    xlabel: &str,
    xs: &[f64],
    left: (&str, &[f64]),
    right: (&str, &[f64]),
) -> String {
    let (xmin, xmax) = padded_range(xs.iter().copied());
    let (lmin, lmax) = padded_range(left.1.iter().copied());
    let (rmin, rmax) = padded_range(right.1.iter().copied());
    let frame = Frame { x0: 70.0, y0: 50.0, w: 480.0, h: 360.0, xmin, xmax, ymin: lmin, ymax: lmax };
    let rframe = Frame { ymin: rmin, ymax: rmax, ..Frame { ..frame_copy(&frame) } };

    let mut out = String::from(
        "<svg xmlns='http://www.w3.org/2000/svg' width='680' height='480' viewBox='0 0 680 480'>\n",
    );
    out.push_str("<rect width='680' height='480' fill='white'/>\n");
    out.push_str(&format!(
        "<text x='340' y='24' font-size='15' text-anchor='middle'>{title}</text>\n"
    ));
    axes(&frame, xlabel, left.0, 5, &mut out);

    // right axis ticks
    for i in 0..=5 {
        let fy = rmin + (rmax - rmin) * i as f64 / 5.0;
        let py = rframe.y(fy);
        out.push_str(&format!(
            "<text x='{}' y='{}' font-size='11' text-anchor='start' fill='#cc4422'>{}</text>\n",
            frame.x0 + frame.w + 8.0,
            py + 4.0,
            fmt(fy)
        ));
    }
    out.push_str(&format!(
        "<text x='{}' y='{}' font-size='13' text-anchor='middle' fill='#cc4422' transform='rotate(90 {} {})'>{}</text>\n",
        frame.x0 + frame.w + 52.0,
        frame.y0 + frame.h / 2.0,
        frame.x0 + frame.w + 52.0,
        frame.y0 + frame.h / 2.0,
        right.0
    ));

    let polyline = |f: &Frame, ys: &[f64], color: &str, out: &mut String| {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| format!("{},{}", f.x(x), f.y(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points='{}' fill='none' stroke='{color}' stroke-width='2'/>\n",
            pts.join(" ")
        ));
        for (&x, &y) in xs.iter().zip(ys) {
            out.push_str(&format!(
                "<circle cx='{}' cy='{}' r='3.5' fill='{color}'/>\n",
                f.x(x),
                f.y(y)
            ));
        }
    };
    polyline(&frame, left.1, "#2266cc", &mut out);
    polyline(&rframe, right.1, "#cc4422", &mut out);
    out.push_str("</svg>\n");
    out
}

fn frame_copy(f: &Frame) -> Frame {
    Frame { x0: f.x0, y0: f.y0, w: f.w, h: f.h, xmin: f.xmin, xmax: f.xmax, ymin: f.ymin, ymax: f.ymax }
}
