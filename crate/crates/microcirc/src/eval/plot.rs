//! Minimal deterministic SVG rendering for ROC/PR curves, loss traces, and
//! 2-d embedding scatters. No timestamps, no external renderer.

use std::io::Write;
use std::path::Path;

use super::{EvalError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct ScatterGroup {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Result<Self> {
        let mut frame = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        let mut any = false;
        for &(x, y) in points {
            if !x.is_finite() || !y.is_finite() {
                return Err(EvalError::Invalid("non-finite plot point".into()));
            }
            frame.x_min = frame.x_min.min(x);
            frame.x_max = frame.x_max.max(x);
            frame.y_min = frame.y_min.min(y);
            frame.y_max = frame.y_max.max(y);
            any = true;
        }
        if !any {
            return Err(EvalError::EmptyInput);
        }
        if frame.x_max == frame.x_min {
            frame.x_max += 1.0;
            frame.x_min -= 1.0;
        }
        if frame.y_max == frame.y_min {
            frame.y_max += 1.0;
            frame.y_min -= 1.0;
        }
        Ok(frame)
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
            "<text x=\"{cx}\" y=\"{xl}\" text-anchor=\"middle\" font-size=\"13\">{xlabel}</text>\n",
            "<text x=\"18\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"13\" ",
            "transform=\"rotate(-90 18 {cy})\">{ylabel}</text>\n",
            "<rect x=\"{m}\" y=\"{m}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" ",
            "stroke=\"black\"/>\n"
        ),
        w = WIDTH,
        h = HEIGHT,
        cx = WIDTH / 2.0,
        cy = HEIGHT / 2.0,
        xl = HEIGHT - 16.0,
        m = MARGIN,
        pw = WIDTH - 2.0 * MARGIN,
        ph = HEIGHT - 2.0 * MARGIN,
        title = title,
        xlabel = xlabel,
        ylabel = ylabel,
    )
}

fn axis_ticks(frame: &Frame) -> String {
    let mut out = String::new();
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let x = frame.x_min + t * (frame.x_max - frame.x_min);
        let y = frame.y_min + t * (frame.y_max - frame.y_min);
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"11\">{:.3}</text>\n",
            frame.sx(x),
            HEIGHT - MARGIN + 18.0,
            x
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"11\">{:.3}</text>\n",
            MARGIN - 6.0,
            frame.sy(y) + 4.0,
            y
        ));
    }
    out
}

fn legend(names: &[&str]) -> String {
    let mut out = String::new();
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 16.0 + 18.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN - 140.0,
            y - 10.0,
            PALETTE[i % PALETTE.len()],
            WIDTH - MARGIN - 122.0,
            y,
            name
        ));
    }
    out
}

pub fn write_line_plot_svg(
    series: &[PlotSeries],
    title: &str,
    xlabel: &str,
    ylabel: &str,
    path: &Path,
) -> Result<()> {
    let frame = Frame::from_points(series.iter().flat_map(|s| s.points.iter()))?;
    let mut svg = header(title, xlabel, ylabel);
    svg.push_str(&axis_ticks(&frame));
    for (i, s) in series.iter().enumerate() {
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.sx(x), frame.sy(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            PALETTE[i % PALETTE.len()],
            coords.join(" ")
        ));
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    if names.len() > 1 {
        svg.push_str(&legend(&names));
    }
    svg.push_str("</svg>\n");
    write_text(path, &svg)
}

pub fn write_scatter_svg(
    groups: &[ScatterGroup],
    title: &str,
    xlabel: &str,
    ylabel: &str,
    path: &Path,
) -> Result<()> {
    let frame = Frame::from_points(groups.iter().flat_map(|g| g.points.iter()))?;
    let mut svg = header(title, xlabel, ylabel);
    svg.push_str(&axis_ticks(&frame));
    for (i, g) in groups.iter().enumerate() {
        for &(x, y) in &g.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
                frame.sx(x),
                frame.sy(y),
                PALETTE[i % PALETTE.len()]
            ));
        }
    }
    let names: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
    svg.push_str(&legend(&names));
    svg.push_str("</svg>\n");
    write_text(path, &svg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    f.write_all(text.as_bytes()).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
