//! Palettes and binary PPM output for label maps.

use std::collections::HashMap;
use std::path::Path;

use hsi_ugm::superpixels::SuperpixelSegmentation;
use hsi_ugm::{Error, LabelMap, Result};

pub type Rgb = [u8; 3];

const BLACK: Rgb = [0, 0, 0];
const BOUNDARY: Rgb = [255, 255, 255];

/// Class id to color. Class 0 (unlabeled) is always black.
#[derive(Debug, Clone, PartialEq)]
pub struct Palette {
    colors: HashMap<u32, Rgb>,
}

impl Palette {
    pub fn new(entries: impl IntoIterator<Item = (u32, Rgb)>) -> Result<Self> {
        let mut colors = HashMap::from([(0, BLACK)]);
        for (class, rgb) in entries {
            if class == 0 {
                if rgb != BLACK {
                    return Err(Error::Data("class 0 is unlabeled and must be black".into()));
                }
                continue;
            }
            if colors.insert(class, rgb).is_some() {
                return Err(Error::Data(format!("class {class} listed twice in the palette")));
            }
        }
        let mut seen: HashMap<Rgb, u32> = HashMap::new();
        for (&class, &rgb) in &colors {
            if let Some(other) = seen.insert(rgb, class) {
                let (a, b) = (other.min(class), other.max(class));
                return Err(Error::Data(format!("classes {a} and {b} share the color {rgb:?}")));
            }
        }
        Ok(Self { colors })
    }

    /// Evenly spaced hues for classes `1..=n_classes`.
    pub fn generated(n_classes: usize) -> Self {
        let entries = (1..=n_classes).map(|c| {
            let hue = (c - 1) as f64 / n_classes as f64;
            // alternate lightness so neighbouring hues stay apart
            let value = if c % 2 == 0 { 0.75 } else { 1.0 };
            (c as u32, hsv(hue, 0.85, value))
        });
        // distinct hues quantize to distinct colors for any practical class count
        Self::new(entries).unwrap_or_else(|_| Self::grey_ramp(n_classes))
    }

    fn grey_ramp(n_classes: usize) -> Self {
        let colors = (1..=n_classes)
            .map(|c| (c as u32, [(c * 255 / n_classes.max(1)) as u8; 3]))
            .chain([(0, BLACK)])
            .collect();
        Self { colors }
    }

    /// Parses `class,r,g,b` lines. Blank lines, `#` comments and a
    /// non-numeric header row are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if entries.is_empty() && fields.first().is_some_and(|f| f.parse::<u32>().is_err()) {
                continue;
            }
            let bad = || Error::Format(format!("palette line {}: expected class,r,g,b", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let class: u32 = fields[0].parse().map_err(|_| bad())?;
            let mut rgb = [0u8; 3];
            for (slot, f) in rgb.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|_| bad())?;
            }
            entries.push((class, rgb));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn color(&self, class: u32) -> Option<Rgb> {
        self.colors.get(&class).copied()
    }
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb {
    let h6 = h * 6.0;
    let sector = h6.floor() as i64 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r, g, b].map(|x| (x * 255.0).round() as u8)
}

/// Colors `map` pixel by pixel, optionally outlining superpixel borders and
/// enlarging each pixel to a `scale × scale` block.
pub fn render_ppm(
    map: &LabelMap,
    palette: &Palette,
    boundaries: Option<&SuperpixelSegmentation>,
    scale: usize,
) -> Result<Vec<u8>> {
    let (h, w) = (map.height(), map.width());
    if let Some(seg) = boundaries {
        if (seg.height(), seg.width()) != (h, w) {
            return Err(Error::DimensionMismatch(format!(
                "segmentation is {}x{}, map is {h}x{w}",
                seg.height(),
                seg.width()
            )));
        }
    }
    let mut pixels = Vec::with_capacity(h * w);
    for (p, &label) in map.labels().iter().enumerate() {
        let rgb = palette
            .color(label)
            .ok_or_else(|| Error::Data(format!("label {label} at row {}, col {} has no palette color", p / w, p % w)))?;
        pixels.push(rgb);
    }
    if let Some(seg) = boundaries {
        let ids = seg.assignment();
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                let edge = (c + 1 < w && ids[p + 1] != ids[p]) || (r + 1 < h && ids[p + w] != ids[p]);
                if edge {
                    pixels[p] = BOUNDARY;
                }
            }
        }
    }
    let scale = scale.max(1);
    let mut out = format!("P6\n{} {}\n255\n", w * scale, h * scale).into_bytes();
    for r in 0..h {
        for _ in 0..scale {
            for c in 0..w {
                for _ in 0..scale {
                    out.extend_from_slice(&pixels[r * w + c]);
                }
            }
        }
    }
    Ok(out)
}
