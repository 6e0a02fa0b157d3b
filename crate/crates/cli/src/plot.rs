//! Static PNG figure: a log-mel spectrogram on top and one anomaly-score
//! trace per detector below, sharing the time axis.

use std::path::Path;

use image::{Rgb, RgbImage};
use wingbeat::features::Spectrogram;
use wingbeat::scoring::ClipDecision;
use wingbeat::{Error, Result};

const WIDTH: u32 = 960;
const MARGIN: u32 = 12;
const SPEC_HEIGHT: u32 = 256;
const TRACE_HEIGHT: u32 = 160;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([210, 210, 210]);
const THRESHOLD: Rgb<u8> = Rgb([200, 40, 40]);
const TRACE: Rgb<u8> = Rgb([30, 80, 180]);

/// Inputs of one figure. `frame_hop_s` is the spectrogram frame spacing and
/// `duration_s` the clip length, which sets the shared time axis.
pub struct Figure<'a> {
    pub spectrogram: &'a Spectrogram,
    pub frame_hop_s: f64,
    pub duration_s: f64,
    pub decisions: &'a [ClipDecision],
}

struct Panel {
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
}

impl Panel {
    fn x_of(&self, t: f64, duration: f64) -> i64 {
        self.x0 as i64 + ((t / duration).clamp(0.0, 1.0) * (self.w - 1) as f64).round() as i64
    }

    fn y_of(&self, v: f64) -> i64 {
        self.y0 as i64 + ((1.0 - v.clamp(0.0, 1.0)) * (self.h - 1) as f64).round() as i64
    }
}

pub fn render(fig: &Figure<'_>) -> RgbImage {
    let n = fig.decisions.len() as u32;
    let height = MARGIN + SPEC_HEIGHT + n * (MARGIN + TRACE_HEIGHT) + MARGIN;
    let mut img = RgbImage::from_pixel(WIDTH, height, BACKGROUND);
    let w = WIDTH - 2 * MARGIN;
    let spec = Panel {
        x0: MARGIN,
        y0: MARGIN,
        w,
        h: SPEC_HEIGHT,
    };
    draw_spectrogram(&mut img, &spec, fig);
    for (k, d) in fig.decisions.iter().enumerate() {
        let panel = Panel {
            x0: MARGIN,
            y0: MARGIN + SPEC_HEIGHT + MARGIN + k as u32 * (TRACE_HEIGHT + MARGIN),
            w,
            h: TRACE_HEIGHT,
        };
        draw_trace(&mut img, &panel, d, fig.duration_s);
    }
    img
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    img.save(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

fn draw_spectrogram(img: &mut RgbImage, p: &Panel, fig: &Figure<'_>) {
    let frames = &fig.spectrogram.frames;
    let bands = fig.spectrogram.n_mels;
    if frames.is_empty() || bands == 0 {
        draw_box(img, p);
        return;
    }
    let (lo, hi) = frames
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = if hi > lo { hi - lo } else { 1.0 };
    for px in 0..p.w {
        let t = (px as f64 + 0.5) / p.w as f64 * fig.duration_s;
        let frame = ((t / fig.frame_hop_s) as usize).min(frames.len() - 1);
        for py in 0..p.h {
            // low bands at the bottom
            let band = ((p.h - 1 - py) as usize * bands) / p.h as usize;
            let v = (frames[frame][band] - lo) / span;
            img.put_pixel(p.x0 + px, p.y0 + py, colormap(v));
        }
    }
    draw_box(img, p);
}

fn draw_trace(img: &mut RgbImage, p: &Panel, d: &ClipDecision, duration: f64) {
    for &v in &[0.25, 0.5, 0.75] {
        let y = p.y_of(v);
        hline(img, p, y, GRID, 1);
    }
    hline(img, p, p.y_of(d.threshold), THRESHOLD, 4);
    let points: Vec<(i64, i64)> = d
        .chunk_scores
        .iter()
        .map(|c| (p.x_of(c.start_s, duration), p.y_of(c.score)))
        .collect();
    for pair in points.windows(2) {
        line(img, pair[0], pair[1], TRACE);
    }
    for &(x, y) in &points {
        for dx in -2..=2 {
            for dy in -2..=2 {
                put(img, x + dx, y + dy, TRACE);
            }
        }
    }
    draw_box(img, p);
}

fn hline(img: &mut RgbImage, p: &Panel, y: i64, color: Rgb<u8>, dash: u32) {
    for x in p.x0..p.x0 + p.w {
        if (x / dash).is_multiple_of(2) || dash == 1 {
            put(img, x as i64, y, color);
        }
    }
}

fn draw_box(img: &mut RgbImage, p: &Panel) {
    let (x0, y0) = (p.x0 as i64, p.y0 as i64);
    let (x1, y1) = (x0 + p.w as i64 - 1, y0 + p.h as i64 - 1);
    line(img, (x0, y0), (x1, y0), AXIS);
    line(img, (x0, y1), (x1, y1), AXIS);
    line(img, (x0, y0), (x0, y1), AXIS);
    line(img, (x1, y0), (x1, y1), AXIS);
}

/// Bresenham line.
fn line(img: &mut RgbImage, (mut x, mut y): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let dx = (x1 - x).abs();
    let dy = -(y1 - y).abs();
    let sx = if x < x1 { 1 } else { -1 };
    let sy = if y < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
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

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Piecewise-linear approximation of a perceptual dark-to-bright map.
fn colormap(v: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let v = v.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (v.floor() as usize).min(STOPS.len() - 2);
    let f = v - i as f64;
    let c = |k: usize| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}
