//! Spectral standardization, PCA, grayscale morphology and extended
//! morphological profiles.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::data::Cube;
use crate::error::{Error, Result};

/// Rescales every band to zero mean and unit population standard deviation.
/// Constant bands become all-zero.
pub fn standardize(cube: &Cube) -> Cube {
    let n = cube.n_pixels() as f64;
    let c = cube.channels();
    let mut mean = vec![0.0; c];
    for px in cube.pixels() {
        for (m, &v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for px in cube.pixels() {
        for k in 0..c {
            let d = px[k] - mean[k];
            var[k] += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .zip(&mean)
        .map(|(&v, &m)| {
            let sd = (v / n).sqrt();
            if sd <= 1e-12 * (1.0 + m.abs()) {
                0.0
            } else {
                1.0 / sd
            }
        })
        .collect();
    let mut values = cube.values().to_vec();
    for px in values.chunks_exact_mut(c.max(1)) {
        for ((v, m), s) in px.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) * s;
        }
    }
    Cube::new(cube.height(), cube.width(), c, values).expect("same shape")
}

/// PCA of a standardized cube.
#[derive(Debug, Clone)]
pub struct PcaOutcome {
    /// Score images of the retained components, descending eigenvalue order.
    pub scores: Cube,
    /// All eigenvalues above the rank cutoff, descending.
    pub eigenvalues: Vec<f64>,
    /// Number of leading components kept.
    pub retained: usize,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
}

/// Principal-component score images keeping the smallest leading set whose
/// eigenvalue sum reaches `variance_fraction` of the total variance.
pub fn pca(cube: &Cube, variance_fraction: f64) -> Result<Cube> {
    Ok(pca_detailed(cube, variance_fraction)?.scores)
}

pub fn pca_detailed(cube: &Cube, variance_fraction: f64) -> Result<PcaOutcome> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "variance fraction {variance_fraction} outside (0, 1]"
        )));
    }
    let z = standardize(cube);
    let b = z.channels();
    let n = z.n_pixels() as f64;
    let mut cov = DMatrix::<f64>::zeros(b, b);
    for px in z.pixels() {
        for i in 0..b {
            let xi = px[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..b {
                cov[(i, j)] += xi * px[j];
            }
        }
    }
    for i in 0..b {
        for j in i..b {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let trace = cov.trace();
    if trace <= 0.0 {
        // flat cube: one all-zero component
        return Ok(PcaOutcome {
            scores: Cube::zeros(z.height(), z.width(), 1),
            eigenvalues: vec![0.0],
            retained: 1,
            total_variance: 0.0,
        });
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let cutoff = 1e-12 * trace;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > cutoff)
        .collect();
    let eigenvalues: Vec<f64> = kept.iter().map(|&i| eig.eigenvalues[i]).collect();

    let target = variance_fraction * trace;
    let mut cumulative = 0.0;
    let mut retained = eigenvalues.len();
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        cumulative += lambda;
        if cumulative >= target - 1e-12 * trace {
            retained = k + 1;
            break;
        }
    }

    let vectors: Vec<Vec<f64>> = kept[..retained]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v
                .iter()
                .enumerate()
                .fold(0, |best, (k, x)| if x.abs() > v[best].abs() { k } else { best });
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    let values = z
        .pixels()
        .flat_map(|px| {
            vectors
                .iter()
                .map(|v| v.iter().zip(px).map(|(a, b)| a * b).sum::<f64>())
                .collect::<Vec<_>>()
        })
        .collect();
    let scores = Cube::new(z.height(), z.width(), retained, values)?;
    Ok(PcaOutcome {
        scores,
        eigenvalues,
        retained,
        total_variance: trace,
    })
}

/// Single-channel row-major image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width, "image size");
        Self {
            height,
            width,
            values,
        }
    }

    pub fn band_of(cube: &Cube, channel: usize) -> Self {
        Self::new(cube.height(), cube.width(), cube.band(channel))
    }
}

/// Flat disk structuring element: every integer offset with
/// `dx² + dy² <= radius²`. Stored as one horizontal half-width per row offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disk {
    reach: usize,
    half_widths: Vec<usize>,
}

impl Disk {
    pub fn with_radius(radius: f64) -> Self {
        let r2 = radius * radius;
        let reach = radius.max(0.0).floor() as usize;
        let half_widths = (0..=2 * reach)
            .map(|i| {
                let dy = i as f64 - reach as f64;
                let mut w = (r2 - dy * dy).max(0.0).sqrt().floor() as usize;
                // guard against sqrt rounding just below an integer
                while ((w + 1) * (w + 1)) as f64 + dy * dy <= r2 {
                    w += 1;
                }
                w
            })
            .collect();
        Self { reach, half_widths }
    }

    pub fn with_diameter(diameter: f64) -> Self {
        Self::with_radius(diameter / 2.0)
    }

    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let r = self.reach as isize;
        self.half_widths
            .iter()
            .enumerate()
            .flat_map(|(i, &w)| {
                let w = w as isize;
                (-w..=w).map(move |dx| (i as isize - r, dx))
            })
            .collect()
    }
}

/// Sliding min/max of width `2w+1` with replicate padding (van Herk /
/// Gil–Werman: three comparisons per sample regardless of `w`).
fn window_extreme(row: &[f64], w: usize, take_min: bool, out: &mut [f64]) {
    let n = row.len();
    if w == 0 {
        out.copy_from_slice(row);
        return;
    }
    let pick = |a: f64, b: f64| if take_min == (a <= b) { a } else { b };
    let k = 2 * w + 1;
    let padded: Vec<f64> = (0..n + 2 * w)
        .map(|i| row[i.saturating_sub(w).min(n - 1)])
        .collect();
    let len = padded.len();
    let mut prefix = vec![0.0; len];
    let mut suffix = vec![0.0; len];
    for i in 0..len {
        prefix[i] = if i % k == 0 { padded[i] } else { pick(prefix[i - 1], padded[i]) };
    }
    for i in (0..len).rev() {
        suffix[i] = if i == len - 1 || (i + 1) % k == 0 {
            padded[i]
        } else {
            pick(suffix[i + 1], padded[i])
        };
    }
    for (x, o) in out.iter_mut().enumerate() {
        *o = pick(suffix[x], prefix[x + k - 1]);
    }
}

fn flat_morphology(img: &Image, se: &Disk, take_min: bool) -> Image {
    let (h, w) = (img.height, img.width);
    let r = se.reach as isize;
    let mut out = vec![if take_min { f64::INFINITY } else { f64::NEG_INFINITY }; h * w];
    let mut scratch = vec![0.0; w];
    // row-offset pass: each source row is filtered once per distinct half-width
    let mut distinct: Vec<usize> = se.half_widths.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let mut filtered: Vec<Vec<f64>> = vec![Vec::new(); distinct.len()];
    for src in 0..h {
        let row = &img.values[src * w..(src + 1) * w];
        for (slot, &hw) in filtered.iter_mut().zip(&distinct) {
            window_extreme(row, hw, take_min, &mut scratch);
            slot.clone_from(&scratch);
        }
        for (i, &hw) in se.half_widths.iter().enumerate() {
            let dy = i as isize - r;
            let line = &filtered[distinct.binary_search(&hw).expect("present")];
            // rows y with clamp(y + dy) == src receive this filtered row
            for y in rows_reading(src, dy, h) {
                let dst = &mut out[y * w..(y + 1) * w];
                for (d, &v) in dst.iter_mut().zip(line) {
                    if take_min {
                        if v < *d {
                            *d = v;
                        }
                    } else if v > *d {
                        *d = v;
                    }
                }
            }
        }
    }
    Image::new(h, w, out)
}

/// Output rows `y` such that `clamp(y + dy, 0, h-1) == src`.
fn rows_reading(src: usize, dy: isize, h: usize) -> std::ops::Range<usize> {
    let y = src as isize - dy;
    let last = h as isize - 1;
    let (lo, hi) = if src == 0 && src as isize == last {
        (0, last)
    } else if src == 0 {
        (0, y)
    } else if src as isize == last {
        (y, last)
    } else {
        (y, y)
    };
    let lo = lo.max(0);
    let hi = hi.min(last);
    if lo > hi {
        0..0
    } else {
        lo as usize..hi as usize + 1
    }
}

pub fn erode(img: &Image, se: &Disk) -> Image {
    flat_morphology(img, se, true)
}

pub fn dilate(img: &Image, se: &Disk) -> Image {
    flat_morphology(img, se, false)
}

/// Grayscale opening (erosion then dilation) with a disk of `radius` pixels.
pub fn morph_open(img: &Image, radius: f64) -> Image {
    let se = Disk::with_radius(radius);
    dilate(&erode(img, &se), &se)
}

/// Grayscale closing (dilation then erosion) with a disk of `radius` pixels.
pub fn morph_close(img: &Image, radius: f64) -> Image {
    let se = Disk::with_radius(radius);
    erode(&dilate(img, &se), &se)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpParams {
    pub variance_fraction: f64,
    /// Openings (and, separately, closings) per component.
    pub n_levels: usize,
    /// Diameter increment between successive structuring elements, pixels.
    pub size_step: f64,
    pub base_diameter: f64,
}

impl EmpParams {
    pub const VARIANCE_GRID: [f64; 4] = [0.84, 0.89, 0.94, 0.99];
    pub const LEVEL_GRID: [usize; 3] = [2, 4, 8];
    pub const STEP_GRID: [f64; 3] = [2.0, 4.0, 8.0];

    pub fn new(variance_fraction: f64, n_levels: usize, size_step: f64) -> Self {
        Self {
            variance_fraction,
            n_levels,
            size_step,
            base_diameter: 2.0,
        }
    }

    /// The 36 tuning cells in lexicographic (fraction, levels, step) order.
    pub fn grid() -> Vec<EmpParams> {
        let mut cells = Vec::with_capacity(36);
        for &f in &Self::VARIANCE_GRID {
            for &k in &Self::LEVEL_GRID {
                for &s in &Self::STEP_GRID {
                    cells.push(Self::new(f, k, s));
                }
            }
        }
        cells
    }

    /// Diameter of the `j`-th structuring element, `j = 1..=n_levels`.
    pub fn diameter(&self, j: usize) -> f64 {
        self.base_diameter + (j as f64 - 1.0) * self.size_step
    }

    fn validate(&self) -> Result<()> {
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0)
            || !(self.size_step > 0.0)
            || !(self.base_diameter > 0.0)
        {
            return Err(Error::InvalidArgument(format!("invalid EMP parameters {self:?}")));
        }
        Ok(())
    }
}

impl Default for EmpParams {
    fn default() -> Self {
        Self::new(0.99, 4, 2.0)
    }
}

/// Extended morphological profile: for each retained principal component
/// `p`, the channels `[p, open(p, d_1..d_k), close(p, d_1..d_k)]`.
pub fn emp(cube: &Cube, params: &EmpParams) -> Result<Cube> {
    params.validate()?;
    let scores = pca(cube, params.variance_fraction)?;
    Ok(profile_of(&scores, params))
}

/// Profile stack over every channel of an already-reduced cube.
pub fn profile_of(scores: &Cube, params: &EmpParams) -> Cube {
    let k = params.n_levels;
    let per_pc = 2 * k + 1;
    let blocks: Vec<Vec<Vec<f64>>> = (0..scores.channels())
        .into_par_iter()
        .map(|pc| {
            let base = Image::band_of(scores, pc);
            let mut block = Vec::with_capacity(per_pc);
            block.push(base.values.clone());
            for j in 1..=k {
                block.push(morph_open(&base, params.diameter(j) / 2.0).values);
            }
            for j in 1..=k {
                block.push(morph_close(&base, params.diameter(j) / 2.0).values);
            }
            block
        })
        .collect();
    let bands: Vec<Vec<f64>> = blocks.into_iter().flatten().collect();
    Cube::from_bands(scores.height(), scores.width(), &bands).expect("consistent band sizes")
}
