//! Dense optical flow between consecutive grayscale frames and a fixed-length
//! pooled descriptor of each flow field.
//!
//! Flow is estimated with Horn–Schunck: brightness constancy plus an
//! `alpha²`-weighted smoothness term, solved by Jacobi iterations over the
//! classic 3×3 neighbour average. The descriptor partitions the field into a
//! `grid × grid` cell layout and reports, per cell, three nonnegative magnitude
//! statistics followed by a magnitude-weighted orientation histogram.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;

use crate::binio;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_ITERATIONS: usize = 100;
pub const DEFAULT_GRID: usize = 4;
pub const DEFAULT_BINS: usize = 8;

pub const MIN_FRAME_SIDE: usize = 8;

/// A grayscale frame with intensities in `[0, 1]`, stored `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    intensity: Array2<f64>,
}

impl Frame {
    pub fn new(intensity: Array2<f64>) -> Result<Self> {
        let (h, w) = intensity.dim();
        if w < MIN_FRAME_SIDE || h < MIN_FRAME_SIDE {
            return Err(Error::invalid(format!(
                "frame must be at least {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}, got {w}x{h}"
            )));
        }
        if let Some(bad) = intensity.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite frame intensity {bad}")));
        }
        if let Some(bad) = intensity.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("frame intensity {bad} outside [0, 1]")));
        }
        Ok(Frame { intensity })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Frame::new(Array2::from_shape_fn((height, width), |(y, x)| f(x, y)))
    }

    pub fn width(&self) -> usize {
        self.intensity.ncols()
    }

    pub fn height(&self) -> usize {
        self.intensity.nrows()
    }

    pub fn intensity(&self) -> &Array2<f64> {
        &self.intensity
    }

    /// Reads a binary (`P5`) PGM with maxval ≤ 255; intensity is `byte / 255`.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = binio::read_file(path)?;
        Self::parse_pgm(&bytes)
    }

    pub fn parse_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut header = [0usize; 3];
        let magic = next_pgm_token(bytes, &mut pos).ok_or(Error::Truncated("PGM"))?;
        if magic != b"P5" {
            return Err(Error::BadMagic { what: "PGM", expected: "P5" });
        }
        for slot in header.iter_mut() {
            let tok = next_pgm_token(bytes, &mut pos).ok_or(Error::Truncated("PGM"))?;
            *slot = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse("PGM header field is not an integer".into()))?;
        }
        let [width, height, maxval] = header;
        if maxval == 0 || maxval > 255 {
            return Err(Error::Parse(format!("PGM maxval {maxval} unsupported (8-bit only)")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let n = width.checked_mul(height).ok_or(Error::DimensionOverflow("PGM"))?;
        if bytes.len() < pos + n {
            return Err(Error::Truncated("PGM"));
        }
        let raster = &bytes[pos..pos + n];
        let intensity = Array2::from_shape_fn((height, width), |(y, x)| {
            f64::from(raster[y * width + x]) / 255.0
        });
        Frame::new(intensity)
    }

    /// Encodes as binary PGM, rounding intensities to the nearest byte.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width(), self.height()).into_bytes();
        out.extend(self.intensity.iter().map(|v| (v * 255.0).round() as u8));
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_pgm())
    }
}

fn next_pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

/// Per-pixel displacement `(u, v)` in pixels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    u: Array2<f64>,
    v: Array2<f64>,
}

impl FlowField {
    pub fn new(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.dim() != v.dim() {
            return Err(Error::shape(format!(
                "flow components differ in shape: {:?} vs {:?}",
                u.dim(),
                v.dim()
            )));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite flow value"));
        }
        Ok(FlowField { u, v })
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Result<Self> {
        FlowField::new(
            Array2::from_elem((height, width), u),
            Array2::from_elem((height, width), v),
        )
    }

    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    pub fn height(&self) -> usize {
        self.u.nrows()
    }

    pub fn u(&self) -> &Array2<f64> {
        &self.u
    }

    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Central difference along x and y with replicated borders.
fn gradients(img: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = img.dim();
    let gx = Array2::from_shape_fn((h, w), |(y, x)| {
        let l = img[[y, clamp_index(x as isize - 1, w)]];
        let r = img[[y, clamp_index(x as isize + 1, w)]];
        0.5 * (r - l)
    });
    let gy = Array2::from_shape_fn((h, w), |(y, x)| {
        let t = img[[clamp_index(y as isize - 1, h), x]];
        let b = img[[clamp_index(y as isize + 1, h), x]];
        0.5 * (b - t)
    });
    (gx, gy)
}

/// Horn–Schunck neighbour average: edge neighbours weigh 1/6, corners 1/12.
fn neighbour_average(field: &Array2<f64>, out: &mut Array2<f64>) {
    let (h, w) = field.dim();
    for y in 0..h {
        let ym = clamp_index(y as isize - 1, h);
        let yp = clamp_index(y as isize + 1, h);
        for x in 0..w {
            let xm = clamp_index(x as isize - 1, w);
            let xp = clamp_index(x as isize + 1, w);
            let edges = field[[ym, x]] + field[[yp, x]] + field[[y, xm]] + field[[y, xp]];
            let corners = field[[ym, xm]] + field[[ym, xp]] + field[[yp, xm]] + field[[yp, xp]];
            out[[y, x]] = edges / 6.0 + corners / 12.0;
        }
    }
}

/// Horn–Schunck optical flow from `prev` to `next`.
///
/// Spatial gradients are the mean of both frames' central differences; the
/// temporal gradient is `next − prev`. Starting from zero flow, each of the
/// `iterations` Jacobi sweeps replaces `(u, v)` by the neighbour average
/// corrected along the image gradient.
pub fn estimate_flow(prev: &Frame, next: &Frame, alpha: f64, iterations: usize) -> Result<FlowField> {
    if prev.intensity.dim() != next.intensity.dim() {
        return Err(Error::shape(format!(
            "frame sizes differ: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }

    let (px, py) = gradients(&prev.intensity);
    let (nx, ny) = gradients(&next.intensity);
    let ix = (&px + &nx) * 0.5;
    let iy = (&py + &ny) * 0.5;
    let it = &next.intensity - &prev.intensity;
    let alpha2 = alpha * alpha;
    let denom = Array2::from_shape_fn(ix.dim(), |p| alpha2 + ix[p] * ix[p] + iy[p] * iy[p]);

    let dim = ix.dim();
    let mut u = Array2::<f64>::zeros(dim);
    let mut v = Array2::<f64>::zeros(dim);
    let mut u_avg = Array2::<f64>::zeros(dim);
    let mut v_avg = Array2::<f64>::zeros(dim);
    for _ in 0..iterations {
        neighbour_average(&u, &mut u_avg);
        neighbour_average(&v, &mut v_avg);
        ndarray::Zip::indexed(&mut u).and(&mut v).for_each(|p, uu, vv| {
            let residual = (ix[p] * u_avg[p] + iy[p] * v_avg[p] + it[p]) / denom[p];
            *uu = u_avg[p] - ix[p] * residual;
            *vv = v_avg[p] - iy[p] * residual;
        });
    }
    FlowField::new(u, v)
}

/// Grid-pooled description of a flow field, `grid² · (3 + bins)` nonnegative values.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDescriptor {
    pub grid: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

pub fn descriptor_len(grid: usize, bins: usize) -> usize {
    grid * grid * (3 + bins)
}

/// Orientation bin of `angle ∈ [−π, π]` among `bins` equal half-open bins over
/// `[−π, π)`; `π` wraps to the first bin.
pub fn orientation_bin(angle: f64, bins: usize) -> usize {
    let pos = (angle + PI) / (2.0 * PI) * bins as f64;
    // snap values that land a rounding error below an edge onto that edge
    let k = (pos + 1e-9).floor() as isize;
    k.rem_euclid(bins as isize) as usize
}

/// Start offsets of `cells` equal partitions of `n`; the remainder joins the last cell.
fn cell_bounds(n: usize, cells: usize) -> Vec<(usize, usize)> {
    let size = n / cells;
    (0..cells)
        .map(|c| {
            let start = c * size;
            let end = if c + 1 == cells { n } else { start + size };
            (start, end)
        })
        .collect()
}

/// Pools a flow field into a [`FlowDescriptor`].
///
/// Per cell (row-major), the layout is `[u-magnitude, v-magnitude,
/// mean-magnitude, hist(0..bins)]`. The axis magnitudes combine the means of
/// the positive and negative parts as `sqrt(mean(max(c,0))² + mean(max(−c,0))²)`,
/// so opposing motions within a cell are not collapsed into `mean|c|`. The
/// histogram is weighted by `sqrt(u² + v²)` and L1-normalized; a cell with no
/// motion gets a uniform histogram.
pub fn describe_flow(flow: &FlowField, grid: usize, bins: usize) -> Result<FlowDescriptor> {
    if grid == 0 {
        return Err(Error::invalid("grid must be at least 1"));
    }
    if bins < 2 {
        return Err(Error::invalid("bins must be at least 2"));
    }
    if flow.width() < grid || flow.height() < grid {
        return Err(Error::invalid(format!(
            "flow field {}x{} is smaller than a {grid}x{grid} grid",
            flow.width(),
            flow.height()
        )));
    }

    let rows = cell_bounds(flow.height(), grid);
    let cols = cell_bounds(flow.width(), grid);
    let mut values = Vec::with_capacity(descriptor_len(grid, bins));
    let mut hist = vec![0.0; bins];
    for &(y0, y1) in &rows {
        for &(x0, x1) in &cols {
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let (mut u_pos, mut u_neg, mut v_pos, mut v_neg, mut mag_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
            hist.iter_mut().for_each(|h| *h = 0.0);
            for y in y0..y1 {
                for x in x0..x1 {
                    let u = flow.u[[y, x]];
                    let v = flow.v[[y, x]];
                    u_pos += u.max(0.0);
                    u_neg += (-u).max(0.0);
                    v_pos += v.max(0.0);
                    v_neg += (-v).max(0.0);
                    let mag = u.hypot(v);
                    mag_sum += mag;
                    if mag > 0.0 {
                        hist[orientation_bin(v.atan2(u), bins)] += mag;
                    }
                }
            }
            values.push((u_pos / count).hypot(u_neg / count));
            values.push((v_pos / count).hypot(v_neg / count));
            values.push(mag_sum / count);
            let total: f64 = hist.iter().sum();
            if total > 0.0 {
                values.extend(hist.iter().map(|h| h / total));
            } else {
                values.extend(std::iter::repeat_n(1.0 / bins as f64, bins));
            }
        }
    }
    Ok(FlowDescriptor { grid, bins, values })
}
