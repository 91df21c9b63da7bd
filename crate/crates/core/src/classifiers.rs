//! Pixel-wise classifiers (multinomial logistic regression and the spectral
//! angle mapper) and the adapters that turn their outputs into unary
//! energies.

use std::path::Path;

use rayon::prelude::*;

use crate::data::{load_cube_with_header, Cube, LabelMap, Sample, SplitSet};
use crate::energy::{argmax, UnaryTable};
use crate::error::{Error, Result};
use crate::io::{self, Header};

/// Per-pixel class probabilities, `H×W×M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    height: usize,
    width: usize,
    classes: usize,
    values: Vec<f64>,
}

const SIMPLEX_TOL: f64 = 1e-9;

impl ProbabilityField {
    pub fn new(height: usize, width: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if classes == 0 || values.len() != height * width * classes {
            return Err(Error::DimensionMismatch(format!(
                "{height}x{width}x{classes} probability field needs {} values, got {}",
                height * width * classes,
                values.len()
            )));
        }
        for (p, row) in values.chunks_exact(classes).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::Data(format!(
                    "pixel {p} (row {}, col {}) is not a probability vector (sum {sum})",
                    p / width,
                    p % width
                )));
            }
        }
        Ok(Self {
            height,
            width,
            classes,
            values,
        })
    }

    pub fn uniform(height: usize, width: usize, classes: usize) -> Self {
        let v = 1.0 / classes as f64;
        Self {
            height,
            width,
            classes,
            values: vec![v; height * width * classes],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.classes..(index + 1) * self.classes]
    }

    /// Most probable class per pixel as a label map (ids 1..=M).
    pub fn argmax_labels(&self) -> LabelMap {
        let labels = self
            .values
            .chunks_exact(self.classes)
            .map(|row| argmax(row) as u32 + 1)
            .collect();
        LabelMap::new(self.height, self.width, labels).expect("matching size")
    }

    pub fn as_cube(&self) -> Cube {
        Cube::new(self.height, self.width, self.classes, self.values.clone()).expect("finite")
    }
}

/// Reads an externally produced probability field (header `kind=proba`, or
/// no kind). Rows off the simplex by at most 1e-6 are renormalized.
pub fn ingest_proba(header_path: impl AsRef<Path>) -> Result<ProbabilityField> {
    let header_path = header_path.as_ref();
    let header = Header::read(header_path)?;
    if let Some(kind) = header.get("kind") {
        if kind != "proba" {
            return Err(Error::Format(format!("expected kind=proba, found kind={kind}")));
        }
    }
    let values = match header.get("dtype") {
        Some("f64") => {
            let h = header.require_usize("height")?;
            let w = header.require_usize("width")?;
            let m = header.require_usize("bands")?;
            header.expect("interleave", "bsq")?;
            let raw = io::read_f64_le(&header.data_path(header_path)?, h * w * m)?;
            let n = h * w;
            let mut v = vec![0.0; raw.len()];
            for b in 0..m {
                for p in 0..n {
                    v[p * m + b] = raw[b * n + p];
                }
            }
            Cube::new(h, w, m, v)?
        }
        _ => load_cube_with_header(header_path)?.0,
    };
    proba_from_cube(values)
}

/// Validates (and, within 1e-6, renormalizes) a cube of probabilities.
pub fn proba_from_cube(cube: Cube) -> Result<ProbabilityField> {
    let (h, w, m) = (cube.height(), cube.width(), cube.channels());
    let mut values = cube.values().to_vec();
    for (p, row) in values.chunks_exact_mut(m).enumerate() {
        if let Some(v) = row.iter().find(|v| **v < 0.0) {
            return Err(Error::Data(format!(
                "negative probability {v} at row {}, col {}",
                p / w,
                p % w
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Data(format!(
                "probabilities at row {}, col {} sum to {sum}",
                p / w,
                p % w
            )));
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    ProbabilityField::new(h, w, m, values)
}

/// Writes a probability field losslessly (`dtype=f64`, `kind=proba`).
pub fn save_proba(field: &ProbabilityField, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let raw_path = io::raw_path_for(header_path);
    let (n, m) = (field.n_pixels(), field.classes);
    io::write_f64_le(
        &raw_path,
        (0..m).flat_map(|b| (0..n).map(move |p| field.values[p * m + b])),
    )?;
    let mut header = Header::new();
    header
        .set("height", field.height)
        .set("width", field.width)
        .set("bands", m)
        .set("dtype", "f64")
        .set("interleave", "bsq")
        .set("data", io::relative_name(&raw_path))
        .set("kind", "proba");
    header.write(header_path)
}

/// Multinomial logistic regression, one weight row `[w_1..w_F, bias]` per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub weights: Vec<f64>,
    pub lambda: f64,
}

impl LrModel {
    pub fn zeros(n_classes: usize, n_features: usize, lambda: f64) -> Self {
        Self {
            n_classes,
            n_features,
            weights: vec![0.0; n_classes * (n_features + 1)],
            lambda,
        }
    }

    fn scores(&self, x: &[f64], out: &mut [f64]) {
        let stride = self.n_features + 1;
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * stride..(c + 1) * stride];
            *o = w[..self.n_features].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.n_features];
        }
    }

    /// Class probabilities for one feature vector.
    pub fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.n_classes];
        self.scores(x, &mut s);
        softmax_in_place(&mut s);
        s
    }
}

/// Numerically stable in-place softmax.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

/// `ln Σ exp(v)`, stable.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// A design matrix of training rows with 0-based class targets.
#[derive(Debug, Clone)]
pub struct LrData {
    pub n_features: usize,
    pub n_classes: usize,
    pub rows: Vec<f64>,
    pub targets: Vec<usize>,
}

impl LrData {
    pub fn from_samples(features: &Cube, samples: &[Sample], n_classes: usize) -> Result<Self> {
        let f = features.channels();
        let mut rows = Vec::with_capacity(samples.len() * f);
        let mut targets = Vec::with_capacity(samples.len());
        for s in samples {
            if s.pixel >= features.n_pixels() {
                return Err(Error::DimensionMismatch(format!("sample pixel {} outside cube", s.pixel)));
            }
            if s.class == 0 || s.class as usize > n_classes {
                return Err(Error::InvalidArgument(format!("sample class {} outside 1..={n_classes}", s.class)));
            }
            rows.extend_from_slice(features.pixel(s.pixel));
            targets.push(s.class as usize - 1);
        }
        Ok(Self {
            n_features: f,
            n_classes,
            rows,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Summed cross-entropy plus `lambda/2 · ||W||²` (biases unpenalized), and
/// its gradient with respect to the flattened weights.
pub fn lr_objective(data: &LrData, weights: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let (m, f) = (data.n_classes, data.n_features);
    let stride = f + 1;
    let mut grad = vec![0.0; weights.len()];
    let mut value = 0.0;
    let mut scores = vec![0.0; m];
    for (x, &y) in data.rows.chunks_exact(f.max(1)).take(data.len()).zip(&data.targets) {
        let x = &x[..f];
        for (c, s) in scores.iter_mut().enumerate() {
            let w = &weights[c * stride..(c + 1) * stride];
            *s = w[..f].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[f];
        }
        let lse = log_sum_exp(&scores);
        value += lse - scores[y];
        for c in 0..m {
            let coef = (scores[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
            let g = &mut grad[c * stride..(c + 1) * stride];
            for (gk, xk) in g[..f].iter_mut().zip(x) {
                *gk += coef * xk;
            }
            g[f] += coef;
        }
    }
    for c in 0..m {
        for k in 0..f {
            let w = weights[c * stride + k];
            value += 0.5 * lambda * w * w;
            grad[c * stride + k] += lambda * w;
        }
    }
    (value, grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

/// Result of a gradient-descent run.
#[derive(Debug, Clone)]
pub struct DescentTrace {
    pub params: Vec<f64>,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Full-batch gradient descent with Armijo backtracking. The trial step is
/// the Barzilai–Borwein step when it is defined; only steps that satisfy the
/// sufficient-decrease test are accepted, so the objective never increases.
pub fn gradient_descent<F>(mut objective: F, init: Vec<f64>, opts: DescentOptions) -> Result<DescentTrace>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = init;
    let (mut fx, mut g) = objective(&x)?;
    let mut history = vec![fx];
    let mut gnorm = norm(&g);
    let mut step = if gnorm > 0.0 { 1.0 / gnorm.max(1.0) } else { 1.0 };
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    while iterations < opts.max_iters && gnorm >= opts.grad_tol {
        if let Some((px, pg)) = &prev {
            let (mut ss, mut sy) = (0.0, 0.0);
            for k in 0..x.len() {
                let s = x[k] - px[k];
                let y = g[k] - pg[k];
                ss += s * s;
                sy += s * y;
            }
            if sy > 0.0 && ss > 0.0 {
                step = ss / sy;
            } else {
                step *= 2.0;
            }
        }
        let g2 = gnorm * gnorm;
        let mut accepted = None;
        while step * gnorm > 1e-12 * (1.0 + norm(&x)) {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let (ft, gt) = objective(&trial)?;
            if ft.is_finite() && ft <= fx - 1e-4 * step * g2 {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            break;
        };
        prev = Some((std::mem::replace(&mut x, trial), std::mem::replace(&mut g, gt)));
        fx = ft;
        gnorm = norm(&g);
        history.push(fx);
        iterations += 1;
    }
    Ok(DescentTrace {
        params: x,
        objective: fx,
        gradient_norm: gnorm,
        iterations,
        converged: gnorm < opts.grad_tol,
        history,
    })
}

pub const LR_DEFAULTS: DescentOptions = DescentOptions {
    max_iters: 5000,
    grad_tol: 1e-6,
};

#[derive(Debug, Clone)]
pub struct LrFit {
    pub model: LrModel,
    pub trace: DescentTrace,
}

/// Fits an L2-regularized multinomial logistic regression on the training
/// pixels of `split`.
pub fn train_lr(features: &Cube, split: &SplitSet, lambda: f64) -> Result<LrModel> {
    Ok(train_lr_with(features, &split.train, split.n_classes(), lambda, LR_DEFAULTS)?.model)
}

pub fn train_lr_with(
    features: &Cube,
    samples: &[Sample],
    n_classes: usize,
    lambda: f64,
    opts: DescentOptions,
) -> Result<LrFit> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be >= 0")));
    }
    let mut per_class = vec![0usize; n_classes + 1];
    for s in samples {
        if (s.class as usize) <= n_classes {
            per_class[s.class as usize] += 1;
        }
    }
    if let Some(c) = (1..=n_classes).find(|&c| per_class[c] == 0) {
        return Err(Error::InsufficientPixels {
            class: c as u32,
            available: 0,
            requested: 1,
        });
    }
    let data = LrData::from_samples(features, samples, n_classes)?;
    let init = vec![0.0; n_classes * (data.n_features + 1)];
    let trace = gradient_descent(|w| Ok(lr_objective(&data, w, lambda)), init, opts)?;
    Ok(LrFit {
        model: LrModel {
            n_classes,
            n_features: data.n_features,
            weights: trace.params.clone(),
            lambda,
        },
        trace,
    })
}

/// Softmax of the linear class scores at every pixel.
pub fn predict_proba(model: &LrModel, features: &Cube) -> Result<ProbabilityField> {
    if features.channels() != model.n_features {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, cube has {}",
            model.n_features,
            features.channels()
        )));
    }
    let m = model.n_classes;
    let mut values = vec![0.0; features.n_pixels() * m];
    values
        .par_chunks_mut(m)
        .zip(features.values().par_chunks(model.n_features))
        .for_each(|(out, x)| {
            model.scores(x, out);
            softmax_in_place(out);
        });
    ProbabilityField::new(features.height(), features.width(), m, values)
}

/// Per-pixel, per-class minimum spectral angle (radians) to that class's
/// training spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleField {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub values: Vec<f64>,
}

impl AngleField {
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.values[index * self.classes..(index + 1) * self.classes]
    }

    /// Smallest-angle class per pixel (ids 1..=M).
    pub fn argmin_labels(&self) -> LabelMap {
        let labels = self
            .values
            .chunks_exact(self.classes)
            .map(|row| crate::energy::argmin(row) as u32 + 1)
            .collect();
        LabelMap::new(self.height, self.width, labels).expect("matching size")
    }
}

/// `arccos(<u,v> / (|u||v|))`, cosine clamped to [-1, 1].
pub fn spectral_angle(u: &[f64], v: &[f64]) -> f64 {
    // 2·atan2(|û - v̂|, |û + v̂|) keeps full precision near 0 and π, unlike acos
    let nu = norm(u);
    let nv = norm(v);
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        let (x, y) = (a / nu, b / nv);
        diff += (x - y) * (x - y);
        sum += (x + y) * (x + y);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

pub fn sam_angles(features: &Cube, split: &SplitSet) -> Result<AngleField> {
    sam_angles_from(features, &split.train, split.n_classes())
}

pub fn sam_angles_from(features: &Cube, samples: &[Sample], n_classes: usize) -> Result<AngleField> {
    let w = features.width();
    let zero_norm = |p: usize| {
        Error::Data(format!(
            "zero-norm spectrum at row {}, col {}",
            p / w,
            p % w
        ))
    };
    let mut refs: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_classes];
    for s in samples {
        if s.class == 0 || s.class as usize > n_classes {
            return Err(Error::InvalidArgument(format!("sample class {} outside 1..={n_classes}", s.class)));
        }
        let x = features.pixel(s.pixel);
        if norm(x) == 0.0 {
            return Err(zero_norm(s.pixel));
        }
        refs[s.class as usize - 1].push(x.to_vec());
    }
    if let Some(c) = refs.iter().position(Vec::is_empty) {
        return Err(Error::InsufficientPixels {
            class: c as u32 + 1,
            available: 0,
            requested: 1,
        });
    }
    if let Some(p) = features.pixels().position(|x| norm(x) == 0.0) {
        return Err(zero_norm(p));
    }
    let mut values = vec![0.0; features.n_pixels() * n_classes];
    values
        .par_chunks_mut(n_classes)
        .zip(features.values().par_chunks(features.channels()))
        .for_each(|(out, x)| {
            for (o, class_refs) in out.iter_mut().zip(&refs) {
                *o = class_refs
                    .iter()
                    .map(|r| spectral_angle(r, x))
                    .fold(f64::INFINITY, f64::min);
            }
        });
    Ok(AngleField {
        height: features.height(),
        width: features.width(),
        classes: n_classes,
        values,
    })
}

pub const DEFAULT_EPS: f64 = 1e-12;

/// `E_i(c) = -ln(max(P_i(c), eps))`.
pub fn unary_from_proba(field: &ProbabilityField, eps: f64) -> Result<UnaryTable> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps {eps} must be > 0")));
    }
    UnaryTable::new(
        field.n_pixels(),
        field.classes,
        field.values.iter().map(|&p| -p.max(eps).ln()).collect(),
    )
}

/// Angles used directly as energies.
pub fn unary_from_angles(angles: &AngleField) -> Result<UnaryTable> {
    UnaryTable::new(angles.height * angles.width, angles.classes, angles.values.clone())
}

/// `exp(-angle)` per pixel and class, as CRF node features.
pub fn exp_neg(angles: &AngleField) -> Cube {
    Cube::new(
        angles.height,
        angles.width,
        angles.classes,
        angles.values.iter().map(|a| (-a).exp()).collect(),
    )
    .expect("finite")
}

/// Writes an angle field losslessly (`dtype=f64`, `kind=angles`).
pub fn save_angles(field: &AngleField, header_path: impl AsRef<Path>) -> Result<()> {
    let header_path = header_path.as_ref();
    let raw_path = io::raw_path_for(header_path);
    let (n, m) = (field.height * field.width, field.classes);
    io::write_f64_le(
        &raw_path,
        (0..m).flat_map(|b| (0..n).map(move |p| field.values[p * m + b])),
    )?;
    let mut header = Header::new();
    header
        .set("height", field.height)
        .set("width", field.width)
        .set("bands", m)
        .set("dtype", "f64")
        .set("interleave", "bsq")
        .set("data", io::relative_name(&raw_path))
        .set("kind", "angles");
    header.write(header_path)
}

/// Reads a field written by [`save_angles`]. Angles must lie in `[0, π]`.
pub fn load_angles(header_path: impl AsRef<Path>) -> Result<AngleField> {
    let header_path = header_path.as_ref();
    let header = Header::read(header_path)?;
    header.expect("kind", "angles")?;
    header.expect("dtype", "f64")?;
    header.expect("interleave", "bsq")?;
    let (h, w, m) = (
        header.require_usize("height")?,
        header.require_usize("width")?,
        header.require_usize("bands")?,
    );
    if h * w == 0 || m == 0 {
        return Err(Error::Format("angle field has an empty dimension".into()));
    }
    let raw = io::read_f64_le(&header.data_path(header_path)?, h * w * m)?;
    let n = h * w;
    let mut values = vec![0.0; raw.len()];
    for b in 0..m {
        for p in 0..n {
            let v = raw[b * n + p];
            if !(0.0..=std::f64::consts::PI).contains(&v) {
                return Err(Error::Data(format!("angle {v} at row {}, col {} outside [0, pi]", p / w, p % w)));
            }
            values[p * m + b] = v;
        }
    }
    Ok(AngleField { height: h, width: w, classes: m, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_split, save_cube_as, synth_scene, SceneSpec};
    use proptest::prelude::*;

    fn line_cube(xs: &[f64]) -> Cube {
        Cube::new(1, xs.len(), 1, xs.to_vec()).unwrap()
    }

    fn samples(classes: &[u32]) -> Vec<Sample> {
        classes
            .iter()
            .enumerate()
            .map(|(pixel, &class)| Sample { pixel, class })
            .collect()
    }

    #[test]
    fn separable_one_dimensional_fit() {
        let cube = line_cube(&[-1.0, 1.0]);
        let fit = train_lr_with(&cube, &samples(&[1, 2]), 2, 1e-3, LR_DEFAULTS).unwrap();
        let p = predict_proba(&fit.model, &cube).unwrap();
        assert_eq!(p.argmax_labels().labels(), &[1, 2]);
        // descent never increases the objective
        assert!(fit.trace.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn huge_penalty_gives_prior() {
        let cube = line_cube(&[-1.0, 1.0, -2.0, 2.0]);
        let fit = train_lr_with(&cube, &samples(&[1, 2, 1, 2]), 2, 1e9, LR_DEFAULTS).unwrap();
        let stride = 2;
        for c in 0..2 {
            assert!(fit.model.weights[c * stride].abs() < 1e-8);
        }
        let p = predict_proba(&fit.model, &cube).unwrap();
        assert!(p.values().iter().all(|v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn gradient_norm_reaches_tolerance() {
        let cube = line_cube(&[-1.0, 0.3, -0.2, 1.0, 0.1, -0.4]);
        let fit = train_lr_with(&cube, &samples(&[1, 1, 2, 2, 1, 2]), 2, 0.1, LR_DEFAULTS).unwrap();
        assert!(fit.trace.converged);
        assert!(fit.trace.gradient_norm < 1e-6);
    }

    #[test]
    fn zero_weights_are_uniform() {
        let model = LrModel::zeros(4, 3, 0.0);
        let cube = Cube::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        let p = predict_proba(&model, &cube).unwrap();
        assert!(p.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn log_three_score_gap() {
        let model = LrModel {
            n_classes: 2,
            n_features: 1,
            weights: vec![3f64.ln(), 0.0, 0.0, 0.0],
            lambda: 0.0,
        };
        let p = model.predict_one(&[1.0]);
        assert!((p[0] - 0.75).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let model = LrModel::zeros(2, 3, 0.0);
        assert!(predict_proba(&model, &line_cube(&[1.0])).is_err());
    }

    #[test]
    fn missing_class_rejected() {
        let cube = line_cube(&[-1.0, 1.0]);
        assert!(matches!(
            train_lr_with(&cube, &samples(&[1, 1]), 2, 0.1, LR_DEFAULTS),
            Err(Error::InsufficientPixels { class: 2, .. })
        ));
    }

    #[test]
    fn lr_gradient_matches_finite_differences() {
        let cube = Cube::new(1, 5, 3, vec![0.3, -1.2, 0.5, 1.1, 0.2, -0.7, -0.4, 0.9, 1.5, 0.0, -0.3, 0.8, 2.0, 0.1, -1.0]).unwrap();
        let data = LrData::from_samples(&cube, &samples(&[1, 3, 2, 2, 3]), 3).unwrap();
        let w: Vec<f64> = (0..12).map(|k| ((k * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let (_, g) = lr_objective(&data, &w, 0.3);
        let h = 1e-5;
        for k in 0..w.len() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[k] += h;
            wm[k] -= h;
            let fd = (lr_objective(&data, &wp, 0.3).0 - lr_objective(&data, &wm, 0.3).0) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-8);
            assert!(rel < 1e-5 || (fd - g[k]).abs() < 1e-9, "component {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn sam_angles_basic() {
        let cube = Cube::new(1, 3, 2, vec![1.0, 2.0, 2.5, 5.0, 0.0, 3.0]).unwrap();
        let train = vec![Sample { pixel: 0, class: 1 }, Sample { pixel: 2, class: 2 }];
        let a = sam_angles_from(&cube, &train, 2).unwrap();
        assert_eq!(a.pixel(0)[0], 0.0);
        assert!(a.pixel(1)[0].abs() < 1e-7);
        let ortho = spectral_angle(&[1.0, 0.0], &[0.0, 2.0]);
        assert!((ortho - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn sam_rejects_zero_spectrum() {
        let cube = Cube::new(1, 2, 2, vec![1.0, 2.0, 0.0, 0.0]).unwrap();
        let err = sam_angles_from(&cube, &[Sample { pixel: 0, class: 1 }], 1).unwrap_err();
        assert!(err.to_string().contains("col 1"));
    }

    #[test]
    fn unary_adapters() {
        let field = ProbabilityField::new(1, 3, 2, vec![1.0, 0.0, (-1f64).exp(), 1.0 - (-1f64).exp(), 0.5, 0.5]).unwrap();
        let u = unary_from_proba(&field, DEFAULT_EPS).unwrap();
        assert_eq!(u.get(0, 0), 0.0);
        assert!((u.get(0, 1) - 27.631021115928547).abs() < 1e-12);
        assert!((u.get(1, 0) - 1.0).abs() < 1e-15);
        let angles = AngleField {
            height: 1,
            width: 1,
            classes: 2,
            values: vec![0.0, std::f64::consts::FRAC_PI_2],
        };
        let ua = unary_from_angles(&angles).unwrap();
        assert_eq!(ua.values(), &[0.0, std::f64::consts::FRAC_PI_2]);
        assert_eq!(exp_neg(&angles).values()[0], 1.0);
    }

    #[test]
    fn ingest_renormalizes_within_tolerance() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.hdr");
        let cube = Cube::new(1, 2, 2, vec![0.5, 0.5000003, 0.25, 0.75]).unwrap();
        save_cube_as(&cube, &p, Some("proba")).unwrap();
        let field = ingest_proba(&p).unwrap();
        let s: f64 = field.pixel(0).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);

        let bad = Cube::new(1, 1, 2, vec![0.25, 0.25]).unwrap();
        save_cube_as(&bad, &p, Some("proba")).unwrap();
        assert!(ingest_proba(&p).is_err());
        let neg = Cube::new(1, 1, 2, vec![-0.25, 1.25]).unwrap();
        save_cube_as(&neg, &p, Some("proba")).unwrap();
        assert!(ingest_proba(&p).is_err());
    }

    #[test]
    fn saved_field_is_read_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.hdr");
        let mut v = vec![0.1, 0.2, 0.7, 1.0 / 3.0, 1.0 / 3.0, 0.0];
        v[5] = 1.0 - v[3] - v[4];
        let field = ProbabilityField::new(1, 2, 3, v).unwrap();
        save_proba(&field, &p).unwrap();
        assert_eq!(ingest_proba(&p).unwrap(), field);
    }

    #[test]
    fn noiseless_scene_nearest_mean_is_perfect() {
        let spec = SceneSpec::random_blocks(16, 16, (4, 4), 3, 6, 0.0, 2);
        let (cube, labels) = synth_scene(&spec, 0).unwrap();
        for p in 0..cube.n_pixels() {
            let x = cube.pixel(p);
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = spec.class_means[a].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                    let db: f64 = spec.class_means[b].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(best as u32 + 1, labels.get(p));
        }
    }

    #[test]
    fn indistinguishable_classes_give_chance_accuracy() {
        let mut spec = SceneSpec::random_blocks(64, 64, (8, 8), 2, 4, 0.3, 5);
        spec.class_means[1] = spec.class_means[0].clone();
        let (cube, labels) = synth_scene(&spec, 6).unwrap();
        let split = sample_split(&labels, 100, 600, 7).unwrap();
        let model = train_lr(&cube, &split, 1.0).unwrap();
        let pred = predict_proba(&model, &cube).unwrap().argmax_labels();
        let correct = split.test.iter().filter(|s| pred.get(s.pixel) == s.class).count();
        let acc = correct as f64 / split.test.len() as f64;
        assert!((acc - 0.5).abs() <= 0.05, "accuracy {acc}");
    }

    proptest! {
        #[test]
        fn predictions_on_simplex(w in proptest::collection::vec(-20.0f64..20.0, 12), x in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let model = LrModel { n_classes: 3, n_features: 3, weights: w, lambda: 0.0 };
            let cube = Cube::new(1, 2, 3, x).unwrap();
            let p = predict_proba(&model, &cube).unwrap();
            for row in p.values().chunks(3) {
                prop_assert!(row.iter().all(|v| *v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_shift_invariant(s in proptest::collection::vec(-30.0f64..30.0, 4), shift in -100.0f64..100.0) {
            let mut a = s.clone();
            let mut b: Vec<f64> = s.iter().map(|v| v + shift).collect();
            softmax_in_place(&mut a);
            softmax_in_place(&mut b);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn sam_scale_invariant(u in proptest::collection::vec(0.1f64..3.0, 5), v in proptest::collection::vec(0.1f64..3.0, 5), k in 0.01f64..100.0) {
            let a = spectral_angle(&u, &v);
            let scaled: Vec<f64> = u.iter().map(|x| x * k).collect();
            prop_assert!((spectral_angle(&scaled, &v) - a).abs() < 1e-12 || a < 1e-6);
            prop_assert!((0.0..=std::f64::consts::PI).contains(&a));
        }
    }

    #[test]
    fn angle_field_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.hdr");
        let field = AngleField { height: 2, width: 3, classes: 2, values: (0..12).map(|i| i as f64 * 0.25).collect() };
        save_angles(&field, &path).unwrap();
        assert_eq!(load_angles(&path).unwrap(), field);
        assert!(ingest_proba(&path).is_err());
    }
}
