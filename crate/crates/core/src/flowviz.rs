//! Flow-field rendering with the standard optical-flow color wheel, plus
//! top-down trajectory plots and an uncompressed P6 pixmap writer.
//!
//! Direction maps to hue around a 55-bin wheel (segment sizes RY 15,
//! YG 6, GC 4, CB 11, BM 13, MR 6, linearly interpolated); magnitude maps
//! to saturation, fading to white at zero motion. Vectors longer than the
//! normalization magnitude are darkened to flag clipping.

use crate::geometry::Trajectory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("raster dimensions must be nonzero")]
    EmptyRaster,
    #[error("nothing to plot")]
    NoTrajectories,
    #[error("{labels} labels for {trajectories} trajectories")]
    LabelMismatch { labels: usize, trajectories: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Plain RGB raster, row-major from the top-left.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, color: [u8; 3]) {
        if row < self.height && col < self.width {
            self.pixels[row * self.width + col] = color;
        }
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }
}

/// The 55-bin hue wheel. Colors are stored as unit-range RGB rows.
#[derive(Debug, Clone)]
pub struct ColorWheel {
    colors: Vec<[f64; 3]>,
}

const SEGMENTS: [(usize, usize, usize); 6] = [
    // (count, rising channel, falling channel) per arc; usize::MAX = none
    (15, 1, usize::MAX), // R -> Y: green rises
    (6, usize::MAX, 0),  // Y -> G: red falls
    (4, 2, usize::MAX),  // G -> C: blue rises
    (11, usize::MAX, 1), // C -> B: green falls
    (13, 0, usize::MAX), // B -> M: red rises
    (6, usize::MAX, 2),  // M -> R: blue falls
];

impl ColorWheel {
    pub fn middlebury() -> Self {
        let mut colors = Vec::with_capacity(55);
        let mut current = [1.0, 0.0, 0.0];
        for (count, rising, falling) in SEGMENTS {
            for i in 0..count {
                let f = i as f64 / count as f64;
                let mut c = current;
                if rising != usize::MAX {
                    c[rising] = f;
                }
                if falling != usize::MAX {
                    c[falling] = 1.0 - f;
                }
                colors.push(c);
            }
            if rising != usize::MAX {
                current[rising] = 1.0;
            }
            if falling != usize::MAX {
                current[falling] = 0.0;
            }
        }
        debug_assert_eq!(colors.len(), 55);
        Self { colors }
    }

    pub fn bin_count(&self) -> usize {
        self.colors.len()
    }

    /// Color for a flow vector `(u, v)` whose magnitude has already been
    /// normalized to `radius` (1.0 = full saturation).
    pub fn color(&self, u: f64, v: f64, radius: f64) -> [u8; 3] {
        let n = self.colors.len();
        let angle = (-v).atan2(-u) / std::f64::consts::PI; // [-1, 1]
        let fk = (angle + 1.0) / 2.0 * (n - 1) as f64;
        let k0 = (fk.floor() as usize).min(n - 1);
        let k1 = (k0 + 1) % n;
        let f = fk - k0 as f64;
        let mut out = [0u8; 3];
        for ch in 0..3 {
            let mut col = (1.0 - f) * self.colors[k0][ch] + f * self.colors[k1][ch];
            if radius <= 1.0 {
                col = 1.0 - radius * (1.0 - col);
            } else {
                col *= 0.75;
            }
            out[ch] = (col.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        out
    }
}

/// Render a flow field. `max_magnitude` sets full saturation; it defaults
/// to the field's own maximum. A zero maximum renders all white.
pub fn flow_to_image(field: &crate::geometry::FlowField, max_magnitude: Option<f64>) -> Raster {
    let wheel = ColorWheel::middlebury();
    let max_mag = max_magnitude.unwrap_or_else(|| field.max_magnitude());
    let mut raster = Raster::filled(field.width(), field.height(), [255, 255, 255]);
    for (row, col, v) in field.iter() {
        let radius = if max_mag > 0.0 { v.norm() / max_mag } else { 0.0 };
        raster.set(row, col, wheel.color(v.x, v.y, radius));
    }
    raster
}

const PLOT_SIZE: usize = 512;
const PALETTE: [[u8; 3]; 6] = [
    [214, 39, 40],
    [31, 119, 180],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [23, 190, 207],
];

fn draw_line(raster: &mut Raster, a: (i64, i64), b: (i64, i64), color: [u8; 3]) {
    // Bresenham.
    let (mut x0, mut y0) = a;
    let (x1, y1) = b;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 {
            raster.set(y0 as usize, x0 as usize, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_marker(raster: &mut Raster, center: (i64, i64), color: [u8; 3]) {
    for dy in -1..=1i64 {
        for dx in -1..=1i64 {
            let (x, y) = (center.0 + dx, center.1 + dy);
            if x >= 0 && y >= 0 {
                raster.set(y as usize, x as usize, color);
            }
        }
    }
}

/// Top-down (x against z) plot of one or more trajectories on a fixed
/// 512x512 canvas. Axis bounds are the data bounds plus a 5% margin;
/// trajectory colors follow label order, shown as swatches in the
/// top-left corner. Deterministic: identical input gives identical bytes.
pub fn trajectory_plot(trajectories: &[Trajectory], labels: &[&str]) -> Result<Raster, VizError> {
    if trajectories.is_empty() || trajectories.iter().any(|t| t.is_empty()) {
        return Err(VizError::NoTrajectories);
    }
    if labels.len() != trajectories.len() {
        return Err(VizError::LabelMismatch {
            labels: labels.len(),
            trajectories: trajectories.len(),
        });
    }
    let points: Vec<Vec<(f64, f64)>> = trajectories
        .iter()
        .map(|traj| traj.iter().map(|p| (p.translation.x, p.translation.z)).collect())
        .collect();
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, z) in points.iter().flatten() {
        min.0 = min.0.min(*x);
        min.1 = min.1.min(*z);
        max.0 = max.0.max(*x);
        max.1 = max.1.max(*z);
    }
    let pad = |lo: f64, hi: f64| -> (f64, f64) {
        let span = (hi - lo).max(1e-9);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x_lo, x_hi) = pad(min.0, max.0);
    let (z_lo, z_hi) = pad(min.1, max.1);

    let mut raster = Raster::filled(PLOT_SIZE, PLOT_SIZE, [255, 255, 255]);
    let project = |x: f64, z: f64| -> (i64, i64) {
        let px = (x - x_lo) / (x_hi - x_lo) * (PLOT_SIZE - 1) as f64;
        // z grows upward on the plot.
        let py = (1.0 - (z - z_lo) / (z_hi - z_lo)) * (PLOT_SIZE - 1) as f64;
        (px.round() as i64, py.round() as i64)
    };

    for (ti, traj) in points.iter().enumerate() {
        let color = PALETTE[ti % PALETTE.len()];
        if traj.len() == 1 {
            let (x, z) = traj[0];
            draw_marker(&mut raster, project(x, z), color);
            continue;
        }
        for pair in traj.windows(2) {
            draw_line(&mut raster, project(pair[0].0, pair[0].1), project(pair[1].0, pair[1].1), color);
        }
    }
    // Legend swatches, one 6x6 block per label.
    for ti in 0..trajectories.len() {
        let color = PALETTE[ti % PALETTE.len()];
        for dy in 0..6 {
            for dx in 0..6 {
                raster.set(4 + ti * 10 + dy, 4 + dx, color);
            }
        }
    }
    Ok(raster)
}

/// Binary portable pixmap: `P6\n<w> <h>\n255\n` then RGB bytes.
pub fn write_raster(mut w: impl std::io::Write, raster: &Raster) -> Result<(), VizError> {
    if raster.width == 0 || raster.height == 0 {
        return Err(VizError::EmptyRaster);
    }
    write!(w, "P6\n{} {}\n255\n", raster.width, raster.height)?;
    for px in &raster.pixels {
        w.write_all(px)?;
    }
    Ok(())
}
