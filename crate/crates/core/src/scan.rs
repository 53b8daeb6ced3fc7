//! Parameter-plane classification maps, dynamical-plane pole-hit images and
//! PPM output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dynamics::{classify_lattice, iterate, Outcome, Verdict};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeKind, ToleranceConfig, C64};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const BLACK: Rgb = [0, 0, 0];
/// Pixels whose parameter cannot be classified (λ = 0).
pub const RESERVED: Rgb = [128, 128, 128];

/// Cyclic palette for pole-hit steps.
const STEP_PALETTE: [Rgb; 12] = [
    [230, 25, 75],
    [245, 130, 48],
    [255, 225, 25],
    [210, 245, 60],
    [60, 180, 75],
    [70, 240, 240],
    [0, 130, 200],
    [145, 30, 180],
    [240, 50, 230],
    [250, 190, 212],
    [170, 110, 40],
    [255, 250, 200],
];

/// Pixel lattice in a plane: pixel `(px, py)` is centred at
/// `origin + px·Re(extent)/width + i·py·Im(extent)/height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGrid {
    pub origin: C64,
    pub extent: C64,
    pub width_px: usize,
    pub height_px: usize,
}

impl ScanGrid {
    pub fn new(origin: C64, extent: C64, width_px: usize, height_px: usize) -> Result<Self> {
        if width_px == 0 || height_px == 0 {
            return Err(Error::InvalidConfig("grid dimensions must be at least 1".into()));
        }
        if !origin.is_finite() || !extent.is_finite() {
            return Err(Error::InvalidConfig("grid origin and extent must be finite".into()));
        }
        Ok(ScanGrid {
            origin,
            extent,
            width_px,
            height_px,
        })
    }

    /// Grid over `[re_min, re_max] × [im_min, im_max]` with the top image
    /// row at `im_max`.
    pub fn from_bounds(re_min: f64, re_max: f64, im_min: f64, im_max: f64, width_px: usize, height_px: usize) -> Result<Self> {
        ScanGrid::new(
            C64::new(re_min, im_max),
            C64::new(re_max - re_min, im_min - im_max),
            width_px,
            height_px,
        )
    }

    pub fn step(&self) -> (f64, f64) {
        (
            self.extent.re / self.width_px as f64,
            self.extent.im / self.height_px as f64,
        )
    }

    pub fn center(&self, px: usize, py: usize) -> C64 {
        let (dx, dy) = self.step();
        self.origin + C64::new(px as f64 * dx, py as f64 * dy)
    }

    /// Nearest pixel index to a plane point, if it lies on the grid.
    pub fn pixel_of(&self, z: C64) -> Option<(usize, usize)> {
        let (dx, dy) = self.step();
        let fx = ((z.re - self.origin.re) / dx).round();
        let fy = ((z.im - self.origin.im) / dy).round();
        let inside = |f: f64, n: usize| f >= 0.0 && f < n as f64;
        (inside(fx, self.width_px) && inside(fy, self.height_px)).then_some((fx as usize, fy as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Binary PPM bytes.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Evaluates `f(px, py)` for every pixel, row tiles in parallel, results
/// stored by index.
fn render_rows<T, F>(grid: &ScanGrid, f: F) -> Vec<T>
where
    T: Send + Clone + Default,
    F: Fn(usize, usize) -> T + Sync,
{
    let mut out = vec![T::default(); grid.width_px * grid.height_px];
    out.par_chunks_mut(grid.width_px)
        .enumerate()
        .for_each(|(py, row)| {
            for (px, slot) in row.iter_mut().enumerate() {
                *slot = f(px, py);
            }
        });
    out
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(1.0) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    let (r, g, b) = match i as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let byte = |x: f64| (x * 255.0).round().clamp(0.0, 255.0) as u8;
    [byte(r), byte(g), byte(b)]
}

/// Hue by period (golden-angle spacing); full brightness for three
/// attracting cycles, dimmer for one.
pub fn verdict_color(kind: LatticeKind, verdict: &Verdict) -> Rgb {
    match verdict {
        Verdict::AttractingCycles { count, cycle } => {
            let hue = (cycle.period - 1) as f64 * 0.618_033_988_749_895;
            let value = match (kind, count) {
                (LatticeKind::Triangular, 1) => 0.55,
                _ => 0.95,
            };
            hsv(hue, 0.85, value)
        }
        Verdict::AllCriticalPrepole { .. } => WHITE,
        Verdict::Indeterminate { .. } => BLACK,
    }
}

fn csv_row(out: &mut String, px: usize, py: usize, l: C64, verdict: Option<&Verdict>) {
    let _ = write!(out, "{px},{py},{:.12},{:.12},", l.re, l.im);
    let _ = match verdict {
        None => writeln!(out, "ZeroParameter,,,,,"),
        Some(Verdict::AttractingCycles { count, cycle }) => {
            let m = cycle.multiplier;
            writeln!(
                out,
                "AttractingCycles,{count},{},{:.10e},{:.10e},{:.10e}",
                cycle.period,
                m.re,
                m.im,
                m.norm()
            )
        }
        Some(v) => writeln!(out, "{},,,,,", v.tag()),
    };
}

pub const CLASSIFICATION_HEADER: &str = "px,py,lambda_re,lambda_im,verdict,count,period,mult_re,mult_im,abs_mult";

/// Classifies every pixel's parameter. Returns the colour image and the
/// per-pixel CSV (row-major, header first).
pub fn render_parameter_plane(kind: LatticeKind, grid: &ScanGrid, budget: usize, cfg: &ToleranceConfig) -> (Image, String) {
    let verdicts: Vec<Option<Verdict>> = render_rows(grid, |px, py| {
        Lattice::new(kind, grid.center(px, py), cfg)
            .ok()
            .map(|lat| classify_lattice(&lat, budget))
    });
    let mut csv = String::with_capacity(verdicts.len() * 64);
    csv.push_str(CLASSIFICATION_HEADER);
    csv.push('\n');
    let mut image = Image::new(grid.width_px, grid.height_px, BLACK);
    for (idx, v) in verdicts.iter().enumerate() {
        let (px, py) = (idx % grid.width_px, idx / grid.width_px);
        csv_row(&mut csv, px, py, grid.center(px, py), v.as_ref());
        image.pixels[idx] = match v {
            Some(v) => verdict_color(kind, v),
            None => RESERVED,
        };
    }
    (image, csv)
}

/// Step at which the orbit of `z` lands on a pole, within `budget`.
pub fn pole_hit_step(lat: &Lattice, z: C64, budget: usize) -> Option<usize> {
    match iterate(lat, z, budget).outcome {
        Outcome::PoleHit { step, .. } | Outcome::EscapedSphericalBall { step } => Some(step),
        Outcome::BudgetExhausted => None,
    }
}

pub fn step_color(step: Option<usize>) -> Rgb {
    match step {
        Some(s) => STEP_PALETTE[s % STEP_PALETTE.len()],
        None => BLACK,
    }
}

/// Colours each point of the dynamical plane by the step at which it lands
/// on a pole; black if the budget runs out first.
pub fn render_dynamical_plane(kind: LatticeKind, lambda: C64, grid: &ScanGrid, budget: usize, cfg: &ToleranceConfig) -> Result<Image> {
    let lat = Lattice::new(kind, lambda, cfg)?;
    let pixels = render_rows(grid, |px, py| step_color(pole_hit_step(&lat, grid.center(px, py), budget)));
    Ok(Image {
        width: grid.width_px,
        height: grid.height_px,
        pixels,
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_ppm(image: &Image, path: &Path) -> Result<()> {
    write_atomic(path, &image.to_ppm())
}

/// Parses a binary PPM with maxval 255.
pub fn read_ppm(bytes: &[u8]) -> Result<Image> {
    let bad = |m: &str| Error::InvalidConfig(format!("malformed PPM: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(bad("expected P6 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let data = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
    if data.len() != width * height * 3 {
        return Err(bad("raster length"));
    }
    Ok(Image {
        width,
        height,
        pixels: data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}
