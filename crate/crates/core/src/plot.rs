//! Report figures. Each plot is written three ways: a PNG rendered onto a
//! raster canvas, an SVG with full text labels, and a JSON sidecar holding
//! the exact numbers on display, so downstream tooling never has to scrape
//! pixels. All three are deterministic byte-for-byte for the same input.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::stats::box_stats;
use crate::trainer::Prediction;

const WIDTH: usize = 640;
const HEIGHT: usize = 480;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 48.0;

const BACKGROUND: [u8; 3] = [255, 255, 255];
const FRAME: [u8; 3] = [40, 40, 40];
const GRID: [u8; 3] = [225, 225, 225];
const POINT: [u8; 3] = [70, 110, 180];
const REFERENCE: [u8; 3] = [200, 60, 60];
const BOX_FILL: [u8; 3] = [165, 190, 225];
const MEDIAN: [u8; 3] = [170, 40, 40];

/// Where one plot's three files landed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotArtifacts {
    pub png: PathBuf,
    pub svg: PathBuf,
    pub json: PathBuf,
}

/// Sidecar row for one scatter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: String,
    pub y_true_hours: f64,
    pub y_pred_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScatterSidecar {
    points: Vec<ScatterPoint>,
}

/// Sidecar row for one boxplot group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BoxplotSidecar {
    groups: Vec<GroupSummary>,
}

/// Maps a value range onto a pixel span. `px0` is the pixel of `lo`; for
/// the vertical axis `px0 > px1` flips the direction.
#[derive(Debug, Clone, Copy)]
struct AxisMap {
    lo: f64,
    hi: f64,
    px0: f64,
    px1: f64,
}

impl AxisMap {
    fn map(&self, v: f64) -> f64 {
        let t = if self.hi > self.lo {
            (v - self.lo) / (self.hi - self.lo)
        } else {
            0.5
        };
        self.px0 + t * (self.px1 - self.px0)
    }
}

/// Pads a data range so points don't sit on the frame. A degenerate range
/// widens by one unit each way.
fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Round tick positions covering `[lo, hi]`, step a 1/2/5 decade multiple.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw_step = span / target.max(1) as f64;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let residual = raw_step / magnitude;
    let step = magnitude
        * if residual <= 1.0 {
            1.0
        } else if residual <= 2.0 {
            2.0
        } else if residual <= 5.0 {
            5.0
        } else {
            10.0
        };
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Label precision adapted to the tick step.
fn tick_label(value: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor() as i32).clamp(0, 6) as usize
    };
    format!("{value:.decimals$}")
}

// A small 5x7 bitmap font covering the characters tick labels use. Each
// glyph row packs five pixels into the low bits, leftmost pixel highest.
fn glyph(c: char) -> Option<[u8; 7]> {
    Some(match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '-' => [0x00, 0x00, 0x00, 0x0E, 0x00, 0x00, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ' ' => [0x00; 7],
        _ => return None,
    })
}

/// White RGB canvas with just enough drawing ops for these plots.
struct Canvas {
    raster: Raster,
}

impl Canvas {
    fn new() -> Self {
        Canvas {
            raster: Raster::from_fn(WIDTH, HEIGHT, 3, |_, _, c| BACKGROUND[c]),
        }
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= WIDTH || y as usize >= HEIGHT {
            return;
        }
        for (c, &v) in color.iter().enumerate() {
            self.raster.set(x as usize, y as usize, c, v);
        }
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
        let (mut x, mut y) = (x0.round() as i64, y0.round() as i64);
        let (xe, ye) = (x1.round() as i64, y1.round() as i64);
        let dx = (xe - x).abs();
        let dy = -(ye - y).abs();
        let sx = if x < xe { 1 } else { -1 };
        let sy = if y < ye { 1 } else { -1 };
        let mut err = dx + dy;
        loop {
            self.put(x, y, color);
            if x == xe && y == ye {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
        let (xa, xb) = (x0.min(x1).round() as i64, x0.max(x1).round() as i64);
        let (ya, yb) = (y0.min(y1).round() as i64, y0.max(y1).round() as i64);
        for y in ya..=yb {
            for x in xa..=xb {
                self.put(x, y, color);
            }
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, color: [u8; 3]) {
        let (xa, xb) = ((cx - r).floor() as i64, (cx + r).ceil() as i64);
        let (ya, yb) = ((cy - r).floor() as i64, (cy + r).ceil() as i64);
        for y in ya..=yb {
            for x in xa..=xb {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    self.put(x, y, color);
                }
            }
        }
    }

    /// Prints the characters the bitmap font covers; anything else is
    /// skipped (the SVG twin keeps full labels).
    fn text(&mut self, x: f64, y: f64, s: &str, color: [u8; 3]) {
        let mut cursor = x.round() as i64;
        let top = y.round() as i64;
        for ch in s.chars() {
            if let Some(rows) = glyph(ch) {
                for (dy, row) in rows.iter().enumerate() {
                    for dx in 0..5 {
                        if row & (0x10 >> dx) != 0 {
                            self.put(cursor + dx as i64, top + dy as i64, color);
                        }
                    }
                }
            }
            cursor += 6;
        }
    }

    fn text_width(s: &str) -> f64 {
        (s.chars().count() * 6) as f64
    }
}

/// Incrementally built SVG document.
struct Svg {
    body: String,
}

impl Svg {
    fn new() -> Self {
        let mut body = String::new();
        body.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
        ));
        body.push_str(&format!(
            "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"{}\"/>\n",
            hex(BACKGROUND)
        ));
        Svg { body }
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3], width: f64) {
        self.body.push_str(&format!(
            "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" \
             stroke=\"{}\" stroke-width=\"{width:.2}\"/>\n",
            hex(color)
        ));
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: [u8; 3], stroke: [u8; 3]) {
        self.body.push_str(&format!(
            "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
             fill=\"{}\" stroke=\"{}\"/>\n",
            hex(fill),
            hex(stroke)
        ));
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, fill: [u8; 3]) {
        self.body.push_str(&format!(
            "  <circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{}\"/>\n",
            hex(fill)
        ));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str, color: [u8; 3]) {
        self.body.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" \
             font-family=\"sans-serif\" font-size=\"12\" fill=\"{}\">{}</text>\n",
            hex(color),
            escape(s)
        ));
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn artifact_paths(dir: &Path, stem: &str) -> PlotArtifacts {
    PlotArtifacts {
        png: dir.join(format!("{stem}.png")),
        svg: dir.join(format!("{stem}.svg")),
        json: dir.join(format!("{stem}.json")),
    }
}

fn write_artifacts(
    paths: &PlotArtifacts,
    canvas: Canvas,
    svg: String,
    sidecar_json: String,
) -> Result<()> {
    canvas.raster.save_png(&paths.png)?;
    std::fs::write(&paths.svg, svg).map_err(|e| Error::io(&paths.svg, e))?;
    std::fs::write(&paths.json, sidecar_json).map_err(|e| Error::io(&paths.json, e))?;
    Ok(())
}

fn frame_and_ticks(
    canvas: &mut Canvas,
    svg: &mut Svg,
    x_axis: &AxisMap,
    y_axis: &AxisMap,
    x_ticks: &[f64],
    y_ticks: &[f64],
    x_step: f64,
    y_step: f64,
) {
    for &t in y_ticks {
        let y = y_axis.map(t);
        canvas.line(MARGIN_LEFT, y, WIDTH as f64 - MARGIN_RIGHT, y, GRID);
        svg.line(MARGIN_LEFT, y, WIDTH as f64 - MARGIN_RIGHT, y, GRID, 1.0);
        let label = tick_label(t, y_step);
        canvas.text(
            MARGIN_LEFT - Canvas::text_width(&label) - 6.0,
            y - 3.0,
            &label,
            FRAME,
        );
        svg.text(MARGIN_LEFT - 6.0, y + 4.0, "end", &label, FRAME);
    }
    for &t in x_ticks {
        let x = x_axis.map(t);
        canvas.line(x, MARGIN_TOP, x, HEIGHT as f64 - MARGIN_BOTTOM, GRID);
        svg.line(x, MARGIN_TOP, x, HEIGHT as f64 - MARGIN_BOTTOM, GRID, 1.0);
        let label = tick_label(t, x_step);
        canvas.text(
            x - Canvas::text_width(&label) / 2.0,
            HEIGHT as f64 - MARGIN_BOTTOM + 8.0,
            &label,
            FRAME,
        );
        svg.text(
            x,
            HEIGHT as f64 - MARGIN_BOTTOM + 18.0,
            "middle",
            &label,
            FRAME,
        );
    }
    // Frame drawn after the grid so it stays crisp.
    let (x0, x1) = (MARGIN_LEFT, WIDTH as f64 - MARGIN_RIGHT);
    let (y0, y1) = (MARGIN_TOP, HEIGHT as f64 - MARGIN_BOTTOM);
    for (ax, ay, bx, by) in [
        (x0, y0, x1, y0),
        (x1, y0, x1, y1),
        (x1, y1, x0, y1),
        (x0, y1, x0, y0),
    ] {
        canvas.line(ax, ay, bx, by, FRAME);
        svg.line(ax, ay, bx, by, FRAME, 1.5);
    }
}

/// Predicted-versus-true scatter with the ŷ = y diagonal. The sidecar
/// carries every plotted point verbatim.
pub fn scatter_report(
    predictions: &[Prediction],
    dir: &Path,
    stem: &str,
) -> Result<PlotArtifacts> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("scatter of zero predictions".to_string()));
    }
    for p in predictions {
        if !(p.y_true_hours.is_finite() && p.y_pred_hours.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "non-finite value for `{}` cannot be plotted",
                p.id
            )));
        }
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in predictions {
        lo = lo.min(p.y_true_hours).min(p.y_pred_hours);
        hi = hi.max(p.y_true_hours).max(p.y_pred_hours);
    }
    let (lo, hi) = padded_range(lo, hi);

    let x_axis = AxisMap {
        lo,
        hi,
        px0: MARGIN_LEFT,
        px1: WIDTH as f64 - MARGIN_RIGHT,
    };
    let y_axis = AxisMap {
        lo,
        hi,
        px0: HEIGHT as f64 - MARGIN_BOTTOM,
        px1: MARGIN_TOP,
    };
    let ticks = nice_ticks(lo, hi, 6);
    let step = if ticks.len() >= 2 {
        ticks[1] - ticks[0]
    } else {
        1.0
    };

    let mut canvas = Canvas::new();
    let mut svg = Svg::new();
    frame_and_ticks(
        &mut canvas,
        &mut svg,
        &x_axis,
        &y_axis,
        &ticks,
        &ticks,
        step,
        step,
    );

    canvas.line(
        x_axis.map(lo),
        y_axis.map(lo),
        x_axis.map(hi),
        y_axis.map(hi),
        REFERENCE,
    );
    svg.line(
        x_axis.map(lo),
        y_axis.map(lo),
        x_axis.map(hi),
        y_axis.map(hi),
        REFERENCE,
        1.5,
    );

    for p in predictions {
        let x = x_axis.map(p.y_true_hours);
        let y = y_axis.map(p.y_pred_hours);
        canvas.disc(x, y, 2.5, POINT);
        svg.circle(x, y, 3.0, POINT);
    }
    svg.text(
        (MARGIN_LEFT + WIDTH as f64 - MARGIN_RIGHT) / 2.0,
        HEIGHT as f64 - 10.0,
        "middle",
        "true PMI (hours)",
        FRAME,
    );
    svg.text(14.0, MARGIN_TOP + 4.0, "start", "predicted PMI (hours)", FRAME);

    let sidecar = ScatterSidecar {
        points: predictions
            .iter()
            .map(|p| ScatterPoint {
                id: p.id.clone(),
                y_true_hours: p.y_true_hours,
                y_pred_hours: p.y_pred_hours,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');

    let paths = artifact_paths(dir, stem);
    write_artifacts(&paths, canvas, svg.finish(), json)?;
    Ok(paths)
}

/// Per-group five-number boxplots: box q1..q3, median bar, whiskers to
/// the extremes. PNG x labels are 1-based group ordinals; the SVG and the
/// sidecar carry the full group names in the same order.
pub fn distribution_boxplot(
    groups: &[(String, Vec<f64>)],
    dir: &Path,
    stem: &str,
) -> Result<PlotArtifacts> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("boxplot of zero groups".to_string()));
    }
    for (label, values) in groups {
        if values.is_empty() {
            return Err(Error::EmptyInput(format!("group `{label}` has no values")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "group `{label}` holds a non-finite value"
            )));
        }
    }

    let summaries: Vec<GroupSummary> = groups
        .iter()
        .map(|(label, values)| {
            let s = box_stats(values);
            GroupSummary {
                label: label.clone(),
                n: s.n,
                min: s.min,
                q1: s.q1,
                median: s.median,
                q3: s.q3,
                max: s.max,
            }
        })
        .collect();

    let lo = summaries.iter().map(|s| s.min).fold(f64::INFINITY, f64::min);
    let hi = summaries
        .iter()
        .map(|s| s.max)
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = padded_range(lo, hi);

    let y_axis = AxisMap {
        lo,
        hi,
        px0: HEIGHT as f64 - MARGIN_BOTTOM,
        px1: MARGIN_TOP,
    };
    let plot_w = WIDTH as f64 - MARGIN_LEFT - MARGIN_RIGHT;
    let slot = plot_w / groups.len() as f64;
    let box_w = (slot * 0.5).min(60.0);

    let y_ticks = nice_ticks(lo, hi, 6);
    let y_step = if y_ticks.len() >= 2 {
        y_ticks[1] - y_ticks[0]
    } else {
        1.0
    };

    let mut canvas = Canvas::new();
    let mut svg = Svg::new();
    let x_axis = AxisMap {
        lo: 0.0,
        hi: 1.0,
        px0: MARGIN_LEFT,
        px1: WIDTH as f64 - MARGIN_RIGHT,
    };
    frame_and_ticks(
        &mut canvas,
        &mut svg,
        &x_axis,
        &y_axis,
        &[],
        &y_ticks,
        1.0,
        y_step,
    );

    for (i, s) in summaries.iter().enumerate() {
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let (bl, br) = (cx - box_w / 2.0, cx + box_w / 2.0);
        let (y_min, y_q1) = (y_axis.map(s.min), y_axis.map(s.q1));
        let (y_med, y_q3) = (y_axis.map(s.median), y_axis.map(s.q3));
        let y_max = y_axis.map(s.max);

        // Whiskers with end caps.
        for (ya, yb) in [(y_min, y_q1), (y_q3, y_max)] {
            canvas.line(cx, ya, cx, yb, FRAME);
            svg.line(cx, ya, cx, yb, FRAME, 1.0);
        }
        for y in [y_min, y_max] {
            canvas.line(cx - box_w / 4.0, y, cx + box_w / 4.0, y, FRAME);
            svg.line(cx - box_w / 4.0, y, cx + box_w / 4.0, y, FRAME, 1.0);
        }

        canvas.fill_rect(bl, y_q3, br, y_q1, BOX_FILL);
        for (ax, ay, bx, by) in [
            (bl, y_q3, br, y_q3),
            (br, y_q3, br, y_q1),
            (br, y_q1, bl, y_q1),
            (bl, y_q1, bl, y_q3),
        ] {
            canvas.line(ax, ay, bx, by, FRAME);
        }
        svg.rect(bl, y_q3, br - bl, y_q1 - y_q3, BOX_FILL, FRAME);

        canvas.line(bl, y_med, br, y_med, MEDIAN);
        svg.line(bl, y_med, br, y_med, MEDIAN, 2.0);

        let ordinal = (i + 1).to_string();
        canvas.text(
            cx - Canvas::text_width(&ordinal) / 2.0,
            HEIGHT as f64 - MARGIN_BOTTOM + 8.0,
            &ordinal,
            FRAME,
        );
        svg.text(
            cx,
            HEIGHT as f64 - MARGIN_BOTTOM + 18.0,
            "middle",
            &s.label,
            FRAME,
        );
    }

    let sidecar = BoxplotSidecar { groups: summaries };
    let mut json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    json.push('\n');

    let paths = artifact_paths(dir, stem);
    write_artifacts(&paths, canvas, svg.finish(), json)?;
    Ok(paths)
}
