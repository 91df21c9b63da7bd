//! SLIC superpixels on hyperspectral cubes, the superpixel adjacency graph,
//! probability aggregation and projection of superpixel labels to pixels.

use std::collections::BTreeSet;
use std::path::Path;


use crate::classifiers::ProbabilityField;
use crate::data::{Cube, LabelMap};
use crate::energy::{Graph, UnaryTable};
use crate::error::{Error, Result};
use crate::features::standardize;
use crate::io::{self, Header};

/// How the spatial distance is scaled against the spectral one, with `m` the
/// regularizer and `S` the grid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialScale {
    /// `d² = d_spec² + (m / S²)·d_xy²`, the VLFeat convention.
    PerArea,
    /// `d² = d_spec² + (m / S)²·d_xy²`.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub requested_superpixels: usize,
    pub regularizer: f64,
    pub min_region_size: usize,
    pub kmeans_iters: usize,
    pub spatial_scale: SpatialScale,
}

impl SlicParams {
    pub fn new(requested_superpixels: usize) -> Self {
        Self {
            requested_superpixels,
            regularizer: 100.0,
            min_region_size: 9,
            kmeans_iters: 10,
            spatial_scale: SpatialScale::PerArea,
        }
    }

    /// Grid step `S = sqrt(H·W / requested)`.
    pub fn step(&self, height: usize, width: usize) -> f64 {
        ((height * width) as f64 / self.requested_superpixels as f64).sqrt()
    }

    fn validate(&self, n_pixels: usize) -> Result<()> {
        if self.requested_superpixels == 0
            || !(self.regularizer > 0.0 && self.regularizer.is_finite())
            || self.min_region_size == 0
            || self.kmeans_iters == 0
        {
            return Err(Error::InvalidArgument(format!("SLIC parameters must be positive: {self:?}")));
        }
        if self.requested_superpixels > n_pixels {
            return Err(Error::InvalidArgument(format!(
                "{} superpixels requested for {n_pixels} pixels",
                self.requested_superpixels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelSegmentation {
    height: usize,
    width: usize,
    assignment: Vec<u32>,
    n_segments: usize,
}

impl SuperpixelSegmentation {
    /// Validates that ids are contiguous `0..K` and every segment is
    /// 4-connected.
    pub fn new(height: usize, width: usize, assignment: Vec<u32>) -> Result<Self> {
        if assignment.len() != height * width || assignment.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "{} segment ids for a {height}x{width} image",
                assignment.len()
            )));
        }
        let k = *assignment.iter().max().expect("non-empty") as usize + 1;
        let mut seen = vec![false; k];
        assignment.iter().for_each(|&s| seen[s as usize] = true);
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Data(format!("segment ids are not contiguous: {missing} is unused")));
        }
        let (_, comps) = components(height, width, &assignment);
        if comps != k {
            return Err(Error::Data("some segment is not 4-connected".into()));
        }
        Ok(Self {
            height,
            width,
            assignment,
            n_segments: k,
        })
    }

    /// Every pixel its own segment.
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            assignment: (0..(height * width) as u32).collect(),
            n_segments: height * width,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn n_segments(&self) -> usize {
        self.n_segments
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_segments];
        self.assignment.iter().for_each(|&s| sizes[s as usize] += 1);
        sizes
    }
}

/// 4-connected components of equal ids; returns per-pixel component ids in
/// raster order of first appearance and the component count.
fn components(height: usize, width: usize, ids: &[u32]) -> (Vec<u32>, usize) {
    let mut comp = vec![u32::MAX; ids.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..ids.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (r, c) = (p / width, p % width);
            let mut visit = |q: usize| {
                if comp[q] == u32::MAX && ids[q] == ids[p] {
                    comp[q] = next;
                    stack.push(q);
                }
            };
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < width {
                visit(p + 1);
            }
            if r > 0 {
                visit(p - width);
            }
            if r + 1 < height {
                visit(p + width);
            }
        }
        next += 1;
    }
    (comp, next as usize)
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Splits disconnected clusters into components, then merges components
/// smaller than `min_size` into their largest 4-adjacent neighbour, smallest
/// first (ties by id). Ids are renumbered in raster order.
fn enforce_connectivity(height: usize, width: usize, ids: &[u32], min_size: usize) -> Vec<u32> {
    let (comp, n) = components(height, width, ids);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (p, &c) in comp.iter().enumerate() {
        members[c as usize].push(p);
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).filter(|&c| size[c] < min_size).map(|c| (size[c], c)).collect();
    while let Some((s, c)) = queue.pop_first() {
        if find(&mut parent, c) != c || size[c] != s || size[c] >= min_size {
            continue;
        }
        let mut best: Option<usize> = None;
        for &p in &members[c] {
            let (r, col) = (p / width, p % width);
            let mut neighbours = [usize::MAX; 4];
            if col > 0 {
                neighbours[0] = p - 1;
            }
            if col + 1 < width {
                neighbours[1] = p + 1;
            }
            if r > 0 {
                neighbours[2] = p - width;
            }
            if r + 1 < height {
                neighbours[3] = p + width;
            }
            for q in neighbours.into_iter().filter(|&q| q != usize::MAX) {
                let other = find(&mut parent, comp[q] as usize);
                if other == c {
                    continue;
                }
                best = match best {
                    Some(b) if (size[b], std::cmp::Reverse(b)) >= (size[other], std::cmp::Reverse(other)) => Some(b),
                    _ => Some(other),
                };
            }
        }
        let Some(target) = best else {
            continue; // the whole image is one small component
        };
        let moved = std::mem::take(&mut members[c]);
        members[target].extend(moved);
        parent[c] = target;
        size[target] += size[c];
        if size[target] < min_size {
            queue.insert((size[target], target));
        }
    }
    let mut relabel = vec![u32::MAX; n];
    let mut next = 0;
    comp.iter()
        .map(|&c| {
            let root = find(&mut parent, c as usize);
            if relabel[root] == u32::MAX {
                relabel[root] = next;
                next += 1;
            }
            relabel[root]
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Center {
    row: f64,
    col: f64,
    spectrum: Vec<f64>,
}

/// SLIC on the per-band standardized cube: grid-seeded localized k-means
/// over spectrum and position, then connectivity enforcement. The returned
/// segment count may differ from the request.
pub fn slic(cube: &Cube, params: &SlicParams) -> Result<SuperpixelSegmentation> {
    let (h, w) = (cube.height(), cube.width());
    params.validate(h * w)?;
    let std_cube = standardize(cube);
    let b = std_cube.channels();
    let s = params.step(h, w);
    let spatial = match params.spatial_scale {
        SpatialScale::PerArea => params.regularizer / (s * s),
        SpatialScale::PerStep => (params.regularizer / s).powi(2),
    };
    let ny = ((h as f64 / s).round() as usize).clamp(1, h);
    let nx = ((w as f64 / s).round() as usize).clamp(1, w);
    let (cell_h, cell_w) = (h as f64 / ny as f64, w as f64 / nx as f64);
    let mut centers: Vec<Center> = Vec::with_capacity(ny * nx);
    for gy in 0..ny {
        for gx in 0..nx {
            let row = (gy as f64 + 0.5) * cell_h - 0.5;
            let col = (gx as f64 + 0.5) * cell_w - 0.5;
            let p = (row.round() as usize).min(h - 1) * w + (col.round() as usize).min(w - 1);
            centers.push(Center {
                row,
                col,
                spectrum: std_cube.pixel(p).to_vec(),
            });
        }
    }
    let mut labels: Vec<u32> = (0..h * w)
        .map(|p| {
            let gy = (((p / w) as f64 / cell_h) as usize).min(ny - 1);
            let gx = (((p % w) as f64 / cell_w) as usize).min(nx - 1);
            (gy * nx + gx) as u32
        })
        .collect();
    let mut dist = vec![f64::INFINITY; h * w];
    let mut sums = vec![0.0; centers.len() * (b + 3)];

    for _ in 0..params.kmeans_iters {
        // center-major scan; ascending center order keeps ties on the lowest id
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, ctr) in centers.iter().enumerate() {
            let r0 = (ctr.row - s).ceil().max(0.0) as usize;
            let r1 = ((ctr.row + s).floor() as usize).min(h - 1);
            let c0 = (ctr.col - s).ceil().max(0.0) as usize;
            let c1 = ((ctr.col + s).floor() as usize).min(w - 1);
            for r in r0..=r1 {
                let dy = r as f64 - ctr.row;
                for c in c0..=c1 {
                    let dx = c as f64 - ctr.col;
                    let p = r * w + c;
                    let spec: f64 = std_cube
                        .pixel(p)
                        .iter()
                        .zip(&ctr.spectrum)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let d = spec + spatial * (dy * dy + dx * dx);
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }

        sums.iter_mut().for_each(|v| *v = 0.0);
        for (p, &l) in labels.iter().enumerate() {
            let acc = &mut sums[l as usize * (b + 3)..(l as usize + 1) * (b + 3)];
            acc[0] += 1.0;
            acc[1] += (p / w) as f64;
            acc[2] += (p % w) as f64;
            for (a, v) in acc[3..].iter_mut().zip(std_cube.pixel(p)) {
                *a += v;
            }
        }
        for (ctr, acc) in centers.iter_mut().zip(sums.chunks(b + 3)) {
            let n = acc[0];
            if n == 0.0 {
                continue;
            }
            ctr.row = acc[1] / n;
            ctr.col = acc[2] / n;
            for (v, a) in ctr.spectrum.iter_mut().zip(&acc[3..]) {
                *v = a / n;
            }
        }
    }
    debug_assert!(b == 0 || centers.iter().all(|c| c.spectrum.len() == b));

    let assignment = enforce_connectivity(h, w, &labels, params.min_region_size);
    let n_segments = *assignment.iter().max().expect("non-empty image") as usize + 1;
    Ok(SuperpixelSegmentation {
        height: h,
        width: w,
        assignment,
        n_segments,
    })
}

/// Region adjacency graph: an edge per pair of segments with 4-adjacent
/// pixels, listed in lexicographic order.
pub fn adjacency(seg: &SuperpixelSegmentation) -> Graph {
    let (h, w) = (seg.height, seg.width);
    let a = &seg.assignment;
    let mut pairs = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            if c + 1 < w && a[p] != a[p + 1] {
                pairs.push(ordered(a[p], a[p + 1]));
            }
            if r + 1 < h && a[p] != a[p + w] {
                pairs.push(ordered(a[p], a[p + w]));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Graph::new(seg.n_segments, pairs).expect("ordered, deduplicated pairs")
}

fn ordered(x: u32, y: u32) -> (usize, usize) {
    (x.min(y) as usize, x.max(y) as usize)
}

/// `E_s(c) = -ln(max(mean of P(c) over the pixels of s, eps))`.
pub fn aggregate_unary(field: &ProbabilityField, seg: &SuperpixelSegmentation, eps: f64) -> Result<UnaryTable> {
    if field.height() != seg.height || field.width() != seg.width {
        return Err(Error::DimensionMismatch(format!(
            "probability field {}x{} vs segmentation {}x{}",
            field.height(),
            field.width(),
            seg.height,
            seg.width
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} must be > 0")));
    }
    let m = field.classes();
    let mut sums = vec![0.0; seg.n_segments * m];
    for (p, &s) in seg.assignment.iter().enumerate() {
        for (acc, &v) in sums[s as usize * m..(s as usize + 1) * m].iter_mut().zip(field.pixel(p)) {
            *acc += v;
        }
    }
    for (row, n) in sums.chunks_mut(m).zip(seg.sizes()) {
        row.iter_mut().for_each(|v| *v = -(*v / n as f64).max(eps).ln());
    }
    UnaryTable::new(seg.n_segments, m, sums)
}

/// Gives every pixel the (0-based) class of its segment; the map is 1-based.
pub fn project_labels(seg: &SuperpixelSegmentation, sp_labels: &[usize]) -> Result<LabelMap> {
    if sp_labels.len() != seg.n_segments {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} superpixels",
            sp_labels.len(),
            seg.n_segments
        )));
    }
    LabelMap::new(
        seg.height,
        seg.width,
        seg.assignment.iter().map(|&s| sp_labels[s as usize] as u32 + 1).collect(),
    )
}

pub fn save_segmentation(seg: &SuperpixelSegmentation, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let raw = io::raw_path_for(header_path);
    let mut header = Header::new();
    header
        .set("kind", "segmentation")
        .set("height", seg.height)
        .set("width", seg.width)
        .set("segments", seg.n_segments)
        .set("dtype", "u32")
        .set("data", io::relative_name(&raw));
    io::write_u32_le(&raw, seg.assignment.iter().copied())?;
    header.write(header_path)
}

pub fn load_segmentation(header_path: impl AsRef<Path>) -> Result<SuperpixelSegmentation> {
    let header_path = header_path.as_ref();
    let header = Header::read(header_path)?;
    header.expect("kind", "segmentation")?;
    header.expect("dtype", "u32")?;
    let h = header.require_usize("height")?;
    let w = header.require_usize("width")?;
    let ids = io::read_u32_le(&header.data_path(header_path)?, h * w)?;
    let seg = SuperpixelSegmentation::new(h, w, ids)?;
    if seg.n_segments != header.require_usize("segments")? {
        return Err(Error::Format("segment count in header does not match the data".into()));
    }
    Ok(seg)
}
