//! Hyperspectral cubes, ground-truth label maps, train/test splits and
//! synthetic scenes.
//!
//! All randomness comes from [`seeded_rng`]: ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`. Index draws use `next_u64() % n`, so a split
//! is a pure function of the label map, the requested counts and the seed.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::{self, Header};

/// The crate-wide seeded generator.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from `0..n` (`n > 0`) by reduction of a 64-bit word.
pub(crate) fn draw_index(rng: &mut impl RngCore, n: usize) -> usize {
    (rng.next_u64() % n as u64) as usize
}

/// An H×W image with `channels` real values per pixel.
///
/// Values are stored pixel-interleaved (`(row * width + col) * channels + k`);
/// files on disk are band-sequential.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
}

/// Raw spectral observations.
pub type HsiCube = Cube;
/// Derived per-pixel feature vectors (PCA scores, EMP stacks, raw spectra).
pub type FeatureCube = Cube;

impl Cube {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "cube dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{channels} cube needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let pixel = pos / channels;
            return Err(Error::Data(format!(
                "non-finite value at row {}, col {}, channel {}",
                pixel / width,
                pixel % width,
                pos % channels
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
            .expect("positive dimensions")
    }

    /// Builds a cube from per-channel images (each of length H·W).
    pub fn from_bands(height: usize, width: usize, bands: &[Vec<f64>]) -> Result<Self> {
        let n = height * width;
        if bands.iter().any(|b| b.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "every band must hold {n} pixels"
            )));
        }
        let channels = bands.len();
        let mut values = vec![0.0; n * channels];
        for (k, band) in bands.iter().enumerate() {
            for (p, &v) in band.iter().enumerate() {
                values[p * channels + k] = v;
            }
        }
        Self::new(height, width, channels, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bands(&self) -> usize {
        self.channels
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.values[index * self.channels..(index + 1) * self.channels]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.width + col) * self.channels + channel]
    }

    /// Copy of one channel as a row-major image.
    pub fn band(&self, channel: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn set_band(&mut self, channel: usize, image: &[f64]) {
        assert_eq!(image.len(), self.n_pixels());
        for (p, &v) in image.iter().enumerate() {
            self.values[p * self.channels + channel] = v;
        }
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.channels)
    }
}

/// Reads a cube from its header file.
pub fn load_cube(header_path: impl AsRef<Path>) -> Result<Cube> {
    let (cube, _) = load_cube_with_header(header_path.as_ref())?;
    Ok(cube)
}

/// Reads a cube and returns its header as well (for `kind` and extra keys).
pub fn load_cube_with_header(header_path: &Path) -> Result<(Cube, Header)> {
    let header = Header::read(header_path)?;
    let height = header.require_usize("height")?;
    let width = header.require_usize("width")?;
    let bands = header.require_usize("bands")?;
    header.expect("dtype", "f32")?;
    header.expect("interleave", "bsq")?;
    if height * width == 0 || bands == 0 {
        return Err(Error::Format(format!(
            "header declares an empty cube {height}x{width}x{bands}"
        )));
    }
    let raw = io::read_f32_le(&header.data_path(header_path)?, height * width * bands)?;
    let n = height * width;
    let mut values = vec![0.0f64; raw.len()];
    for b in 0..bands {
        for p in 0..n {
            let v = raw[b * n + p];
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value at row {}, col {}, band {b}",
                    p / width,
                    p % width
                )));
            }
            values[p * bands + b] = f64::from(v);
        }
    }
    Ok((Cube::new(height, width, bands, values)?, header))
}

/// Writes `cube` as `header_path` plus a sibling `.raw` block.
pub fn save_cube(cube: &Cube, header_path: impl AsRef<Path>) -> Result<()> {
    save_cube_as(cube, header_path.as_ref(), None)
}

/// Like [`save_cube`], tagging the header with `kind=<kind>`.
pub fn save_cube_as(cube: &Cube, header_path: &Path, kind: Option<&str>) -> Result<()> {
    let raw_path = io::raw_path_for(header_path);
    let mut header = Header::new();
    header
        .set("height", cube.height)
        .set("width", cube.width)
        .set("bands", cube.channels)
        .set("dtype", "f32")
        .set("interleave", "bsq")
        .set("data", io::relative_name(&raw_path));
    if let Some(kind) = kind {
        header.set("kind", kind);
    }
    let n = cube.n_pixels();
    let c = cube.channels;
    io::write_f32_le(
        &raw_path,
        (0..c).flat_map(|b| (0..n).map(move |p| (b, p))).map(|(b, p)| cube.values[p * c + b] as f32),
    )?;
    header.write(header_path)
}

/// Ground truth: 0 marks unlabeled pixels, 1..=M are material classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("label map must be non-empty".into()));
        }
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width} label map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, index: usize) -> u32 {
        self.labels[index]
    }

    /// M, the largest class id present.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Pixel counts per class id; index 0 counts unlabeled pixels.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes() + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Errors unless at least one pixel is labeled.
    pub fn require_labeled(&self) -> Result<()> {
        if self.n_labeled() == 0 {
            return Err(Error::Data("no labeled pixels".into()));
        }
        Ok(())
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::DimensionMismatch(format!(
                "label map is {}x{}, expected {height}x{width}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Unlabels every class with fewer than `min_pixels` pixels and renumbers
    /// the survivors to 1..=M' in their original order. Returns the new map
    /// and, for each new class, its original id.
    pub fn drop_small_classes(&self, min_pixels: usize) -> (LabelMap, Vec<u32>) {
        let counts = self.class_counts();
        let mut remap = vec![0u32; counts.len()];
        let mut kept = Vec::new();
        for (class, &count) in counts.iter().enumerate().skip(1) {
            if count >= min_pixels && count > 0 {
                kept.push(class as u32);
                remap[class] = kept.len() as u32;
            }
        }
        let labels = self.labels.iter().map(|&l| remap[l as usize]).collect();
        (
            LabelMap {
                height: self.height,
                width: self.width,
                labels,
            },
            kept,
        )
    }
}

/// Reads a label map: binary PGM (`P5`, 8- or 16-bit), CSV triples
/// `row,col,label`, or a whitespace-separated grid of integers.
///
/// CSV files carry no dimensions; the extent is taken from the largest row
/// and column present.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") {
        return parse_pgm(&bytes);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{}: not PGM and not UTF-8 text", path.display())))?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'));
    match first {
        Some(line) if line.contains(',') => parse_label_csv(&text),
        Some(_) => parse_label_grid(&text),
        None => Err(Error::Format(format!("{}: empty label file", path.display()))),
    }
}

fn parse_label_value(token: &str) -> Result<u32> {
    let value: i64 = token
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("'{token}' is not an integer label")))?;
    if value < 0 {
        return Err(Error::Format(format!("negative label {value}")));
    }
    u32::try_from(value).map_err(|_| Error::Format(format!("label {value} out of range")))
}

fn parse_label_grid(text: &str) -> Result<LabelMap> {
    let mut labels = Vec::new();
    let mut width = None;
    let mut height = 0;
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(parse_label_value)
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Format(format!(
                    "label grid row {} has {} entries, expected {w}",
                    height + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        labels.extend(row);
        height += 1;
    }
    LabelMap::new(height, width.unwrap_or(0), labels)
}

fn parse_label_csv(text: &str) -> Result<LabelMap> {
    let mut triples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "label csv line {}: expected row,col,label",
                lineno + 1
            )));
        }
        if triples.is_empty() && fields[0].parse::<i64>().is_err() {
            continue; // column names
        }
        let row: usize = fields[0]
            .parse()
            .map_err(|_| Error::Format(format!("label csv line {}: bad row", lineno + 1)))?;
        let col: usize = fields[1]
            .parse()
            .map_err(|_| Error::Format(format!("label csv line {}: bad col", lineno + 1)))?;
        triples.push((row, col, parse_label_value(fields[2])?));
    }
    let height = triples.iter().map(|t| t.0 + 1).max().unwrap_or(0);
    let width = triples.iter().map(|t| t.1 + 1).max().unwrap_or(0);
    let mut labels = vec![0; height * width];
    for (r, c, l) in triples {
        labels[r * width + c] = l;
    }
    LabelMap::new(height, width, labels)
}

fn parse_pgm(bytes: &[u8]) -> Result<LabelMap> {
    // P5 <ws> width <ws> height <ws> maxval <single ws> data; '#' comments in the header.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("malformed PGM header".into()))?;
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("malformed PGM header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} unsupported")));
    }
    let n = width * height;
    let data = &bytes[pos..];
    let labels: Vec<u32> = if maxval < 256 {
        if data.len() != n {
            return Err(Error::Format(format!(
                "PGM declares {n} pixels, found {} bytes",
                data.len()
            )));
        }
        data.iter().map(|&b| u32::from(b)).collect()
    } else {
        if data.len() != 2 * n {
            return Err(Error::Format(format!(
                "16-bit PGM declares {n} pixels, found {} bytes",
                data.len()
            )));
        }
        data.chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    LabelMap::new(height, width, labels)
}

/// Writes a binary PGM, 8-bit when every label fits, 16-bit otherwise.
pub fn save_labels(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let max = labels.labels.iter().copied().max().unwrap_or(0);
    if max > 65535 {
        return Err(Error::Data(format!("label {max} does not fit a 16-bit PGM")));
    }
    let maxval = if max < 256 { 255 } else { 65535 };
    let mut bytes = format!("P5\n{} {}\n{}\n", labels.width, labels.height, maxval).into_bytes();
    if maxval == 255 {
        bytes.extend(labels.labels.iter().map(|&l| l as u8));
    } else {
        bytes.extend(labels.labels.iter().flat_map(|&l| (l as u16).to_be_bytes()));
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One sampled pixel: its row-major index and its class id (1..=M).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sample {
    pub pixel: usize,
    pub class: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SplitSet {
    /// Splits the training pixels again: per class, `fraction` of them
    /// (rounded, at least one while leaving at least one) become the
    /// validation set returned as `test`; the rest stay as `train`.
    pub fn hold_out(&self, fraction: f64, seed: u64) -> Result<SplitSet> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "hold-out fraction {fraction} outside [0, 1)"
            )));
        }
        let mut rng = seeded_rng(seed);
        let max_class = self.train.iter().map(|s| s.class).max().unwrap_or(0);
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for class in 1..=max_class {
            let mut members: Vec<Sample> =
                self.train.iter().copied().filter(|s| s.class == class).collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len();
            let mut n_val = (fraction * n as f64).round() as usize;
            if n >= 2 && fraction > 0.0 {
                n_val = n_val.clamp(1, n - 1);
            } else {
                n_val = 0;
            }
            partial_shuffle(&mut members, n_val, &mut rng);
            validation.extend_from_slice(&members[..n_val]);
            train.extend_from_slice(&members[n_val..]);
        }
        if validation.is_empty() {
            return Err(Error::Data(
                "hold-out produced an empty validation set".into(),
            ));
        }
        train.sort();
        validation.sort();
        Ok(SplitSet {
            height: self.height,
            width: self.width,
            seed,
            train,
            test: validation,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.train
            .iter()
            .chain(&self.test)
            .map(|s| s.class)
            .max()
            .unwrap_or(0) as usize
    }
}

/// Fisher–Yates over the first `k` positions: afterwards `items[..k]` is a
/// uniform sample without replacement.
fn partial_shuffle<T>(items: &mut [T], k: usize, rng: &mut impl RngCore) {
    let n = items.len();
    for i in 0..k.min(n) {
        let j = i + draw_index(rng, n - i);
        items.swap(i, j);
    }
}

/// Samples `n_train` and `n_test` pixels per class, uniformly without
/// replacement. Classes are visited in ascending id order with one generator.
pub fn sample_split(
    labels: &LabelMap,
    n_train_per_class: usize,
    n_test_per_class: usize,
    seed: u64,
) -> Result<SplitSet> {
    labels.require_labeled()?;
    let n_classes = labels.n_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes + 1];
    for (p, &l) in labels.labels.iter().enumerate() {
        if l != 0 {
            by_class[l as usize].push(p);
        }
    }
    let needed = n_train_per_class + n_test_per_class;
    let mut rng = seeded_rng(seed);
    let mut train = Vec::with_capacity(n_classes * n_train_per_class);
    let mut test = Vec::with_capacity(n_classes * n_test_per_class);
    for (class, pixels) in by_class.iter_mut().enumerate().skip(1) {
        if pixels.len() < needed {
            return Err(Error::InsufficientPixels {
                class: class as u32,
                available: pixels.len(),
                requested: needed,
            });
        }
        partial_shuffle(pixels, needed, &mut rng);
        let class = class as u32;
        train.extend(pixels[..n_train_per_class].iter().map(|&pixel| Sample { pixel, class }));
        test.extend(pixels[n_train_per_class..needed].iter().map(|&pixel| Sample { pixel, class }));
    }
    train.sort();
    test.sort();
    Ok(SplitSet {
        height: labels.height,
        width: labels.width,
        seed,
        train,
        test,
    })
}

/// Writes `pixel_row,pixel_col,class,role` rows, preceded by a comment line
/// recording the seed and image size.
pub fn save_split(split: &SplitSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!(
        "# seed={} height={} width={}\npixel_row,pixel_col,class,role\n",
        split.seed, split.height, split.width
    );
    for (role, samples) in [("train", &split.train), ("test", &split.test)] {
        for s in samples {
            out.push_str(&format!(
                "{},{},{},{role}\n",
                s.pixel / split.width,
                s.pixel % split.width,
                s.class
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a split file. Image size comes from the comment line when present,
/// otherwise from `dims`.
pub fn load_split(path: impl AsRef<Path>, dims: Option<(usize, usize)>) -> Result<SplitSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seed = 0;
    let mut size = dims;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let mut h = None;
            let mut w = None;
            for kv in comment.split_whitespace() {
                match kv.split_once('=') {
                    Some(("seed", v)) => seed = v.parse().unwrap_or(0),
                    Some(("height", v)) => h = v.parse().ok(),
                    Some(("width", v)) => w = v.parse().ok(),
                    _ => {}
                }
            }
            if let (Some(h), Some(w)) = (h, w) {
                size = Some((h, w));
            }
            continue;
        }
        if line.is_empty() || line.starts_with("pixel_row") {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Format(format!("split line {}: malformed", lineno + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        let row: usize = f[0].parse().map_err(|_| bad())?;
        let col: usize = f[1].parse().map_err(|_| bad())?;
        let class: u32 = f[2].parse().map_err(|_| bad())?;
        let is_train = match f[3] {
            "train" => true,
            "test" => false,
            _ => return Err(bad()),
        };
        rows.push((row, col, class, is_train));
    }
    let (height, width) =
        size.ok_or_else(|| Error::Format("split file does not record the image size".into()))?;
    let mut split = SplitSet {
        height,
        width,
        seed,
        train: Vec::new(),
        test: Vec::new(),
    };
    for (row, col, class, is_train) in rows {
        if row >= height || col >= width {
            return Err(Error::Data(format!(
                "split pixel ({row}, {col}) outside {height}x{width}"
            )));
        }
        let s = Sample {
            pixel: row * width + col,
            class,
        };
        if is_train {
            split.train.push(s);
        } else {
            split.test.push(s);
        }
    }
    Ok(split)
}

/// A synthetic scene: a coarse grid of class regions stretched over the
/// image, per-class mean spectra and i.i.d. Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    /// Region grid, row-major, class ids 1..=M. Region `(i, j)` covers rows
    /// `[i*H/rows, (i+1)*H/rows)` and the analogous columns.
    pub regions: Vec<Vec<u32>>,
    /// `class_means[c - 1]` is the mean spectrum of class `c`.
    pub class_means: Vec<Vec<f64>>,
    pub sigma: f64,
}

impl SceneSpec {
    /// Random blocky layout with `grid_rows × grid_cols` regions and mean
    /// spectra drawn uniformly from `[0.5, 1.5)` per band. Every class is
    /// guaranteed at least one region when the grid has room.
    pub fn random_blocks(
        height: usize,
        width: usize,
        grid: (usize, usize),
        n_classes: usize,
        bands: usize,
        sigma: f64,
        seed: u64,
    ) -> Self {
        let mut rng = seeded_rng(seed);
        let (rows, cols) = grid;
        let mut cells: Vec<u32> = (0..rows * cols)
            .map(|i| {
                if i < n_classes {
                    i as u32 + 1
                } else {
                    draw_index(&mut rng, n_classes) as u32 + 1
                }
            })
            .collect();
        let k = cells.len();
        partial_shuffle(&mut cells, k, &mut rng);
        let regions = cells.chunks(cols).map(<[u32]>::to_vec).collect();
        let class_means = (0..n_classes)
            .map(|_| {
                (0..bands)
                    .map(|_| 0.5 + (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64)
                    .collect()
            })
            .collect();
        Self {
            height,
            width,
            regions,
            class_means,
            sigma,
        }
    }

    /// Same layout and spectra at a different resolution.
    pub fn resized(&self, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument("scene must be non-empty".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma {} < 0", self.sigma)));
        }
        let rows = self.regions.len();
        let cols = self.regions.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.regions.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("region grid must be rectangular and non-empty".into()));
        }
        if rows > self.height || cols > self.width {
            return Err(Error::InvalidArgument("region grid finer than the image".into()));
        }
        let bands = self.class_means.first().map_or(0, Vec::len);
        if bands == 0 || self.class_means.iter().any(|m| m.len() != bands) {
            return Err(Error::InvalidArgument("class means must share a positive band count".into()));
        }
        let m = self.class_means.len() as u32;
        if self.regions.iter().flatten().any(|&c| c == 0 || c > m) {
            return Err(Error::InvalidArgument(format!("region class outside 1..={m}")));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn bands(&self) -> usize {
        self.class_means[0].len()
    }

    /// Class id of every pixel.
    pub fn ground_truth(&self) -> Result<LabelMap> {
        self.validate()?;
        let rows = self.regions.len();
        let cols = self.regions[0].len();
        let mut labels = Vec::with_capacity(self.height * self.width);
        for r in 0..self.height {
            let gi = r * rows / self.height;
            for c in 0..self.width {
                labels.push(self.regions[gi][c * cols / self.width]);
            }
        }
        LabelMap::new(self.height, self.width, labels)
    }
}

/// Renders a scene. Noise is drawn pixel-major, band-minor from
/// [`seeded_rng`]`(seed)`.
pub fn synth_scene(spec: &SceneSpec, seed: u64) -> Result<(Cube, LabelMap)> {
    let labels = spec.ground_truth()?;
    let bands = spec.bands();
    let mut values = Vec::with_capacity(labels.labels.len() * bands);
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, spec.sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise sigma: {e}")))?;
    for &l in &labels.labels {
        let mean = &spec.class_means[l as usize - 1];
        for &m in mean {
            let v = if spec.sigma > 0.0 { m + noise.sample(&mut rng) } else { m };
            values.push(v);
        }
    }
    Ok((Cube::new(spec.height, spec.width, bands, values)?, labels))
}
