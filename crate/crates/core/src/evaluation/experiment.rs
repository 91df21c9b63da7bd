//! The classification pipeline (features, pixel-wise classifier, spatial
//! smoother), validation grid searches and the repeated-trial harness.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::classifiers::{
    ingest_proba, load_angles, predict_proba, sam_angles_from, save_angles, save_proba, spectral_angle, train_lr_with,
    unary_from_angles, unary_from_proba, AngleField, ProbabilityField, DEFAULT_EPS, LR_DEFAULTS,
};
use crate::crf::{crf_predict, train_crf, CrfData, CrfInstance, CrfObjectiveKind, CrfTrainConfig};
use crate::data::{sample_split, Cube, LabelMap, Sample, SplitSet};
use crate::energy::{argmax, grid_graph, EnergyModel, Graph, UnaryTable};
use crate::error::{Error, Result};
use crate::evaluation::metrics::{confusion, metrics, MetricReport};
use crate::features::{pca_detailed, profile_of, standardize, EmpParams};
use crate::inference::alpha_expansion;
use crate::io::Header;
use crate::superpixels::{adjacency, aggregate_unary, project_labels, slic, SlicParams, SuperpixelSegmentation};

pub const BETA_GRID: [f64; 5] = [0.001, 0.01, 0.1, 1.0, 10.0];
pub const LAMBDA_GRID: [f64; 7] = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
/// LR regularization used while the EMP grid is searched.
pub const EMP_TUNING_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    /// The cube's spectra.
    Raw,
    Emp(EmpParams),
    /// EMP with parameters picked on the validation split.
    EmpTuned,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    Fixed(f64),
    /// Grid searched on validation accuracy; ties go to the earlier value.
    Tuned(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierKind {
    /// Multinomial LR on per-band standardized features.
    Lr { lambda: Choice },
    /// Spectral angle mapper; angles are used as energies.
    Sam,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Smoother {
    None,
    MrfGrid,
    MrfSuperpixel(SlicParams),
    Crf(CrfTrainConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub features: FeatureKind,
    pub classifier: ClassifierKind,
    pub smoother: Smoother,
    pub beta: Choice,
    pub n_train_per_class: usize,
    pub n_test_per_class: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    pub validation_fraction: f64,
    pub cycles: usize,
    pub eps: f64,
    /// Classes with fewer labeled pixels are removed before sampling.
    pub min_class_pixels: usize,
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn new(n_train_per_class: usize) -> Self {
        Self {
            features: FeatureKind::Raw,
            classifier: ClassifierKind::Lr {
                lambda: Choice::Tuned(LAMBDA_GRID.to_vec()),
            },
            smoother: Smoother::MrfGrid,
            beta: Choice::Tuned(BETA_GRID.to_vec()),
            n_train_per_class,
            n_test_per_class: 50,
            n_trials: 30,
            base_seed: 0,
            validation_fraction: 0.3,
            cycles: crate::inference::DEFAULT_CYCLES,
            eps: DEFAULT_EPS,
            min_class_pixels: 0,
            parallel: true,
        }
    }

    /// Short method label such as `spectra-LR-MRF`.
    pub fn method_name(&self) -> String {
        let features = match self.features {
            FeatureKind::Raw => "spectra",
            FeatureKind::Emp(_) | FeatureKind::EmpTuned => "EMP",
        };
        let classifier = match self.classifier {
            ClassifierKind::Lr { .. } => "LR",
            ClassifierKind::Sam => "SAM",
        };
        let smoother = match &self.smoother {
            Smoother::None => String::new(),
            Smoother::MrfGrid => "-MRF".into(),
            Smoother::MrfSuperpixel(p) => format!("-MRF-SP{}", p.requested_superpixels),
            Smoother::Crf(c) => match c.objective {
                CrfObjectiveKind::MleBp => "-CRF".into(),
                CrfObjectiveKind::PseudoLikelihood => "-CRF-PL".into(),
            },
        };
        format!("{features}-{classifier}{smoother}")
    }

    pub const KEYS: [&'static str; 25] = [
        "features",
        "emp_variance",
        "emp_levels",
        "emp_step",
        "classifier",
        "lambda",
        "smoother",
        "beta",
        "superpixels",
        "slic_regularizer",
        "slic_min_region",
        "slic_iters",
        "crf_objective",
        "crf_l2",
        "crf_max_iters",
        "crf_tied",
        "n_train",
        "n_test",
        "n_trials",
        "base_seed",
        "validation_fraction",
        "cycles",
        "eps",
        "min_class_pixels",
        "parallel",
    ];

    /// Reads a flat `key=value` configuration. Keys outside [`Self::KEYS`]
    /// and `extra` are rejected.
    pub fn from_header(h: &Header, extra: &[&str]) -> Result<Self> {
        if let Some(k) = h.keys().find(|k| !Self::KEYS.contains(k) && !extra.contains(k)) {
            return Err(Error::Format(format!("unknown configuration key '{k}'")));
        }
        let num = |key: &str, default: f64| -> Result<f64> {
            match h.get(key) {
                None => Ok(default),
                Some(_) => h.require_f64(key),
            }
        };
        let count = |key: &str, default: usize| -> Result<usize> {
            match h.get(key) {
                None => Ok(default),
                Some(_) => h.require_usize(key),
            }
        };
        let flag = |key: &str, default: bool| -> Result<bool> {
            match h.get(key) {
                None => Ok(default),
                Some("true") | Some("yes") | Some("1") => Ok(true),
                Some("false") | Some("no") | Some("0") => Ok(false),
                Some(v) => Err(Error::Format(format!("'{key}' must be true or false, got '{v}'"))),
            }
        };
        let choice = |key: &str, grid: &[f64]| -> Result<Choice> {
            match h.get(key) {
                None | Some("tuned") => Ok(Choice::Tuned(grid.to_vec())),
                Some(_) => Ok(Choice::Fixed(h.require_f64(key)?)),
            }
        };
        let mut cfg = ExperimentConfig::new(h.require_usize("n_train")?);
        cfg.features = match h.get("features").unwrap_or("raw") {
            "raw" | "spectra" => FeatureKind::Raw,
            "emp" => FeatureKind::Emp(EmpParams::new(
                num("emp_variance", 0.99)?,
                count("emp_levels", 4)?,
                num("emp_step", 2.0)?,
            )),
            "emp_tuned" => FeatureKind::EmpTuned,
            other => return Err(Error::Format(format!("unknown features '{other}'"))),
        };
        cfg.classifier = match h.get("classifier").unwrap_or("lr") {
            "lr" => ClassifierKind::Lr {
                lambda: choice("lambda", &LAMBDA_GRID)?,
            },
            "sam" => ClassifierKind::Sam,
            other => return Err(Error::Format(format!("unknown classifier '{other}'"))),
        };
        cfg.smoother = match h.get("smoother").unwrap_or("mrf_grid") {
            "none" => Smoother::None,
            "mrf_grid" => Smoother::MrfGrid,
            "mrf_superpixel" => {
                let mut p = SlicParams::new(count("superpixels", 400)?);
                p.regularizer = num("slic_regularizer", p.regularizer)?;
                p.min_region_size = count("slic_min_region", p.min_region_size)?;
                p.kmeans_iters = count("slic_iters", p.kmeans_iters)?;
                Smoother::MrfSuperpixel(p)
            }
            "crf" => {
                let mut c = CrfTrainConfig::default();
                c.objective = match h.get("crf_objective").unwrap_or("mle") {
                    "mle" | "mle_bp" => CrfObjectiveKind::MleBp,
                    "pseudo_likelihood" | "pl" => CrfObjectiveKind::PseudoLikelihood,
                    other => return Err(Error::Format(format!("unknown crf_objective '{other}'"))),
                };
                c.l2 = num("crf_l2", c.l2)?;
                c.max_iters = count("crf_max_iters", c.max_iters)?;
                c.tied = flag("crf_tied", c.tied)?;
                Smoother::Crf(c)
            }
            other => return Err(Error::Format(format!("unknown smoother '{other}'"))),
        };
        cfg.beta = choice("beta", &BETA_GRID)?;
        cfg.n_test_per_class = count("n_test", cfg.n_test_per_class)?;
        cfg.n_trials = count("n_trials", cfg.n_trials)?;
        cfg.base_seed = count("base_seed", 0)? as u64;
        cfg.validation_fraction = num("validation_fraction", cfg.validation_fraction)?;
        cfg.cycles = count("cycles", cfg.cycles)?;
        cfg.eps = num("eps", cfg.eps)?;
        cfg.min_class_pixels = count("min_class_pixels", 0)?;
        cfg.parallel = flag("parallel", cfg.parallel)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.n_train_per_class < 2 {
            return bad("n_train must be at least 2 (one training and one validation pixel per class)");
        }
        if self.n_trials == 0 || self.n_test_per_class == 0 {
            return bad("n_trials and n_test must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if !(self.eps > 0.0) || self.cycles == 0 {
            return bad("eps and cycles must be positive");
        }
        for c in [&self.beta, match &self.classifier {
            ClassifierKind::Lr { lambda } => lambda,
            ClassifierKind::Sam => &self.beta,
        }] {
            match c {
                Choice::Fixed(v) if !(*v >= 0.0 && v.is_finite()) => return bad("beta and lambda must be finite and >= 0"),
                Choice::Tuned(g) if g.is_empty() => return bad("tuning grids must be non-empty"),
                _ => {}
            }
        }
        Ok(())
    }
}

/// A cube with its ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cube: Cube,
    pub truth: LabelMap,
}

impl Scene {
    pub fn new(cube: Cube, truth: LabelMap) -> Result<Self> {
        truth.check_dims(cube.height(), cube.width())?;
        Ok(Self { cube, truth })
    }
}

/// Output of a pixel-wise classifier.
#[derive(Debug, Clone)]
pub enum Scores {
    Proba(ProbabilityField),
    Angles(AngleField),
}

impl Scores {
    /// Reads a probability or angle field, chosen by the header's `kind`.
    pub fn load(header_path: impl AsRef<Path>) -> Result<Self> {
        let header_path = header_path.as_ref();
        match Header::read(header_path)?.get("kind") {
            Some("angles") => Ok(Scores::Angles(load_angles(header_path)?)),
            _ => Ok(Scores::Proba(ingest_proba(header_path)?)),
        }
    }

    pub fn save(&self, header_path: impl AsRef<Path>) -> Result<()> {
        match self {
            Scores::Proba(p) => save_proba(p, header_path),
            Scores::Angles(a) => save_angles(a, header_path),
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Scores::Proba(p) => (p.height(), p.width(), p.classes()),
            Scores::Angles(a) => (a.height, a.width, a.classes),
        }
    }

    pub fn labels(&self) -> LabelMap {
        match self {
            Scores::Proba(p) => p.argmax_labels(),
            Scores::Angles(a) => a.argmin_labels(),
        }
    }

    pub fn unary(&self, eps: f64) -> Result<UnaryTable> {
        match self {
            Scores::Proba(p) => unary_from_proba(p, eps),
            Scores::Angles(a) => unary_from_angles(a),
        }
    }

    /// Averaged probabilities (or angles) per superpixel as energies.
    pub fn superpixel_unary(&self, seg: &SuperpixelSegmentation, eps: f64) -> Result<UnaryTable> {
        match self {
            Scores::Proba(p) => aggregate_unary(p, seg, eps),
            Scores::Angles(a) => {
                let m = a.classes;
                let mut sums = vec![0.0; seg.n_segments() * m];
                for (p, &s) in seg.assignment().iter().enumerate() {
                    for c in 0..m {
                        sums[s as usize * m + c] += a.values[p * m + c];
                    }
                }
                for (row, n) in sums.chunks_mut(m).zip(seg.sizes()) {
                    row.iter_mut().for_each(|v| *v /= n as f64);
                }
                UnaryTable::new(seg.n_segments(), m, sums)
            }
        }
    }

    /// Per-pixel CRF features: probabilities, or `exp(-angle)`.
    pub fn crf_features(&self) -> (Vec<f64>, usize) {
        match self {
            Scores::Proba(p) => (p.values().to_vec(), p.classes()),
            Scores::Angles(a) => (a.values.iter().map(|v| (-v).exp()).collect(), a.classes),
        }
    }
}

fn prepare_for(classifier: &ClassifierKind, features: &Cube) -> Cube {
    match classifier {
        ClassifierKind::Lr { .. } => standardize(features),
        ClassifierKind::Sam => features.clone(),
    }
}

/// Fits the classifier on raw `features` (standardizing them for LR) and
/// scores every pixel.
pub fn classify(features: &Cube, train: &[Sample], n_classes: usize, classifier: &ClassifierKind, lambda: f64) -> Result<Scores> {
    fit_scores(&prepare_for(classifier, features), train, n_classes, classifier, lambda)
}

/// Fits the classifier on `train` and scores every pixel. `features` must
/// already be prepared (standardized for LR).
fn fit_scores(features: &Cube, train: &[Sample], n_classes: usize, classifier: &ClassifierKind, lambda: f64) -> Result<Scores> {
    match classifier {
        ClassifierKind::Lr { .. } => {
            let fit = train_lr_with(features, train, n_classes, lambda, LR_DEFAULTS)?;
            Ok(Scores::Proba(predict_proba(&fit.model, features)?))
        }
        ClassifierKind::Sam => Ok(Scores::Angles(sam_angles_from(features, train, n_classes)?)),
    }
}

/// Pixel-wise accuracy on `validation` of a classifier fitted on `train`,
/// scoring only the validation pixels.
fn pixelwise_accuracy(
    features: &Cube,
    train: &[Sample],
    validation: &[Sample],
    n_classes: usize,
    classifier: &ClassifierKind,
    lambda: f64,
) -> Result<f64> {
    let correct = match classifier {
        ClassifierKind::Lr { .. } => {
            let model = train_lr_with(features, train, n_classes, lambda, LR_DEFAULTS)?.model;
            validation
                .iter()
                .filter(|s| argmax(&model.predict_one(features.pixel(s.pixel))) + 1 == s.class as usize)
                .count()
        }
        ClassifierKind::Sam => {
            // nearest training spectrum by angle
            validation
                .iter()
                .filter(|s| {
                    let x = features.pixel(s.pixel);
                    let mut best = (f64::INFINITY, 0u32);
                    for t in train {
                        let a = spectral_angle(x, features.pixel(t.pixel));
                        if a < best.0 || (a == best.0 && t.class < best.1) {
                            best = (a, t.class);
                        }
                    }
                    best.1 == s.class
                })
                .count()
        }
    };
    Ok(correct as f64 / validation.len() as f64)
}

/// Fraction of `samples` whose class matches the map.
pub fn accuracy_on(map: &LabelMap, samples: &[Sample]) -> f64 {
    let hits = samples.iter().filter(|s| map.get(s.pixel) == s.class).count();
    hits as f64 / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch<T> {
    pub best: T,
    pub best_score: f64,
    /// Score of every candidate, in candidate order.
    pub scores: Vec<f64>,
}

/// Evaluates every candidate and keeps the first one with the highest score.
pub fn grid_search<T: Clone>(candidates: &[T], mut eval: impl FnMut(&T) -> Result<f64>) -> Result<GridSearch<T>> {
    let mut best: Option<(usize, f64)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for (k, c) in candidates.iter().enumerate() {
        let s = eval(c)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
        scores.push(s);
    }
    let (k, best_score) = best.ok_or_else(|| Error::InvalidArgument("empty search grid".into()))?;
    Ok(GridSearch {
        best: candidates[k].clone(),
        best_score,
        scores,
    })
}

/// Graph structures a smoother needs, built once per image.
#[derive(Debug, Clone)]
pub struct SmoothingContext {
    pub height: usize,
    pub width: usize,
    pub grid: Option<Graph>,
    pub superpixels: Option<(SuperpixelSegmentation, Graph)>,
    pub slic_ms: f64,
}

impl SmoothingContext {
    pub fn new(cube: &Cube, smoother: &Smoother) -> Result<Self> {
        let (h, w) = (cube.height(), cube.width());
        let mut ctx = Self {
            height: h,
            width: w,
            grid: None,
            superpixels: None,
            slic_ms: 0.0,
        };
        match smoother {
            Smoother::None => {}
            Smoother::MrfGrid | Smoother::Crf(_) => ctx.grid = Some(grid_graph(h, w)),
            Smoother::MrfSuperpixel(params) => {
                let start = Instant::now();
                let seg = slic(cube, params)?;
                let graph = adjacency(&seg);
                ctx.slic_ms = ms_since(start);
                ctx.superpixels = Some((seg, graph));
            }
        }
        Ok(ctx)
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn labeling_map(h: usize, w: usize, y: &[usize]) -> Result<LabelMap> {
    LabelMap::new(h, w, y.iter().map(|&c| c as u32 + 1).collect())
}

/// Applies the smoother to classifier scores. `train` gives the observed
/// pixels for CRF training.
pub fn smooth(
    scores: &Scores,
    smoother: &Smoother,
    ctx: &SmoothingContext,
    beta: f64,
    cycles: usize,
    eps: f64,
    train: &[Sample],
) -> Result<LabelMap> {
    let missing = || Error::InvalidArgument("smoothing context does not match the smoother".into());
    let (h, w) = (ctx.height, ctx.width);
    match smoother {
        Smoother::None => Ok(scores.labels()),
        Smoother::MrfGrid => {
            let graph = ctx.grid.clone().ok_or_else(missing)?;
            let model = EnergyModel::potts(graph, scores.unary(eps)?, beta)?;
            labeling_map(h, w, &alpha_expansion(&model, cycles)?)
        }
        Smoother::MrfSuperpixel(_) => {
            let (seg, graph) = ctx.superpixels.as_ref().ok_or_else(missing)?;
            let model = EnergyModel::potts(graph.clone(), scores.superpixel_unary(seg, eps)?, beta)?;
            project_labels(seg, &alpha_expansion(&model, cycles)?)
        }
        Smoother::Crf(cfg) => {
            let graph = ctx.grid.clone().ok_or_else(missing)?;
            let (features, f) = scores.crf_features();
            let inst = CrfInstance::new(graph, features, f)?;
            let mut observed = vec![None; h * w];
            for s in train {
                observed[s.pixel] = Some(s.class as usize - 1);
            }
            let n_classes = f;
            let data = CrfData::new(inst.clone(), observed)?;
            let fit = train_crf(&[data], n_classes, cfg)?;
            let (y, _) = crf_predict(&fit.model, &inst, cfg.engine)?;
            labeling_map(h, w, &y)
        }
    }
}

/// Picks β by validation accuracy of the smoothed map.
pub fn tune_beta(
    scores: &Scores,
    smoother: &Smoother,
    ctx: &SmoothingContext,
    validation: &[Sample],
    grid: &[f64],
    cycles: usize,
    eps: f64,
) -> Result<GridSearch<f64>> {
    if validation.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    grid_search(grid, |&beta| {
        let map = smooth(scores, smoother, ctx, beta, cycles, eps, &[])?;
        Ok(accuracy_on(&map, validation))
    })
}

/// Picks EMP parameters by pixel-wise validation accuracy; `tuning.train`
/// fits the classifier, `tuning.test` scores it.
pub fn tune_emp(
    cube: &Cube,
    tuning: &SplitSet,
    n_classes: usize,
    classifier: &ClassifierKind,
    lambda: f64,
    grid: &[EmpParams],
) -> Result<GridSearch<EmpParams>> {
    if tuning.test.is_empty() {
        return Err(Error::Data("empty validation set".into()));
    }
    let mut cached: Option<(f64, Cube)> = None;
    grid_search(grid, |params| {
        if cached.as_ref().is_none_or(|(f, _)| *f != params.variance_fraction) {
            cached = Some((params.variance_fraction, pca_detailed(cube, params.variance_fraction)?.scores));
        }
        let scores = &cached.as_ref().expect("set above").1;
        let features = prepare_for(classifier, &profile_of(scores, params));
        pixelwise_accuracy(&features, &tuning.train, &tuning.test, n_classes, classifier, lambda)
    })
}

/// Per-stage wall time of one trial, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub features_ms: f64,
    pub tuning_ms: f64,
    pub classify_ms: f64,
    /// Final smoothing, including superpixel segmentation.
    pub smooth_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub emp: Option<EmpParams>,
    pub n_segments: Option<usize>,
    pub report: MetricReport,
    /// Metrics of the unsmoothed classifier output on the same test pixels.
    pub pixelwise: MetricReport,
    pub times: StageTimes,
    pub prediction: LabelMap,
}

/// Removes classes below `min_class_pixels` and renumbers the rest.
fn prepare_truth(truth: &LabelMap, min_class_pixels: usize) -> LabelMap {
    if min_class_pixels == 0 {
        truth.clone()
    } else {
        truth.drop_small_classes(min_class_pixels).0
    }
}

/// One pipeline run with seed `base_seed + trial`: split, tune on the
/// 70/30 hold-out, retrain on all training pixels, smooth, score.
pub fn run_trial(scene: &Scene, cfg: &ExperimentConfig, trial: usize) -> Result<TrialRecord> {
    cfg.validate()?;
    let total = Instant::now();
    let seed = cfg.base_seed.wrapping_add(trial as u64);
    let truth = prepare_truth(&scene.truth, cfg.min_class_pixels);
    let n_classes = truth.n_classes();
    let split = sample_split(&truth, cfg.n_train_per_class, cfg.n_test_per_class, seed)?;
    let tuning = split.hold_out(cfg.validation_fraction, seed)?;
    let mut times = StageTimes::default();

    let start = Instant::now();
    let fixed_lambda = match &cfg.classifier {
        ClassifierKind::Lr {
            lambda: Choice::Fixed(l),
        } => *l,
        _ => EMP_TUNING_LAMBDA,
    };
    let (raw_features, emp) = match &cfg.features {
        FeatureKind::Raw => (scene.cube.clone(), None),
        FeatureKind::Emp(p) => (crate::features::emp(&scene.cube, p)?, Some(*p)),
        FeatureKind::EmpTuned => {
            let best = tune_emp(&scene.cube, &tuning, n_classes, &cfg.classifier, fixed_lambda, &EmpParams::grid())?.best;
            (crate::features::emp(&scene.cube, &best)?, Some(best))
        }
    };
    let features = prepare_for(&cfg.classifier, &raw_features);
    times.features_ms = ms_since(start);

    let start = Instant::now();
    let lambda = match &cfg.classifier {
        ClassifierKind::Lr { lambda: Choice::Fixed(l) } => Some(*l),
        ClassifierKind::Lr { lambda: Choice::Tuned(grid) } => {
            let inner = tuning.hold_out(0.2, seed)?;
            Some(
                grid_search(grid, |&l| {
                    pixelwise_accuracy(&features, &inner.train, &inner.test, n_classes, &cfg.classifier, l)
                })?
                .best,
            )
        }
        ClassifierKind::Sam => None,
    };
    let lam = lambda.unwrap_or(0.0);
    let ctx = SmoothingContext::new(&scene.cube, &cfg.smoother)?;
    let beta = match (&cfg.smoother, &cfg.beta) {
        (Smoother::None | Smoother::Crf(_), _) => None,
        (_, Choice::Fixed(b)) => Some(*b),
        (_, Choice::Tuned(grid)) => {
            let scores = fit_scores(&features, &tuning.train, n_classes, &cfg.classifier, lam)?;
            Some(tune_beta(&scores, &cfg.smoother, &ctx, &tuning.test, grid, cfg.cycles, cfg.eps)?.best)
        }
    };
    times.tuning_ms = ms_since(start);

    let start = Instant::now();
    let scores = fit_scores(&features, &split.train, n_classes, &cfg.classifier, lam)?;
    times.classify_ms = ms_since(start);

    let start = Instant::now();
    let prediction = smooth(
        &scores,
        &cfg.smoother,
        &ctx,
        beta.unwrap_or(0.0),
        cfg.cycles,
        cfg.eps,
        &split.train,
    )?;
    times.smooth_ms = ms_since(start) + ctx.slic_ms;
    times.total_ms = ms_since(total);

    let report = metrics(&confusion(&prediction, &truth, &split.test)?)?;
    let pixelwise = metrics(&confusion(&scores.labels(), &truth, &split.test)?)?;
    Ok(TrialRecord {
        trial,
        seed,
        lambda,
        beta,
        emp,
        n_segments: ctx.superpixels.as_ref().map(|(s, _)| s.n_segments()),
        report,
        pixelwise,
        times,
        prediction,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub sd: f64,
    pub best: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                best: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { mean, sd, best }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub method: String,
    pub n_train: usize,
    pub n_trials: usize,
    pub completed: usize,
    pub oa: Stat,
    pub kappa: Stat,
    pub avg_precision: Stat,
    pub avg_recall: Stat,
    pub avg_f1: Stat,
    pub wall_ms: Stat,
    pub pixelwise_oa: Stat,
}

impl TrialSummary {
    pub fn is_complete(&self) -> bool {
        self.completed == self.n_trials
    }
}

#[derive(Debug)]
pub struct TrialSet {
    pub method: String,
    pub n_train: usize,
    /// One entry per trial; failures keep their error message.
    pub trials: Vec<std::result::Result<TrialRecord, String>>,
    pub summary: TrialSummary,
}

pub fn summarize(method: &str, n_train: usize, trials: &[std::result::Result<TrialRecord, String>]) -> TrialSummary {
    let ok: Vec<&TrialRecord> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
    let stat = |f: &dyn Fn(&TrialRecord) -> f64| Stat::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    TrialSummary {
        method: method.to_string(),
        n_train,
        n_trials: trials.len(),
        completed: ok.len(),
        oa: stat(&|r| r.report.overall_accuracy),
        kappa: stat(&|r| r.report.kappa),
        avg_precision: stat(&|r| r.report.avg_precision),
        avg_recall: stat(&|r| r.report.avg_recall),
        avg_f1: stat(&|r| r.report.avg_f1),
        wall_ms: stat(&|r| r.times.total_ms),
        pixelwise_oa: stat(&|r| r.pixelwise.overall_accuracy),
    }
}

/// Runs `n_trials` independent trials (in parallel when configured) and
/// aggregates them in trial order. A failing trial is recorded, not fatal.
pub fn run_trials(scene: &Scene, cfg: &ExperimentConfig) -> Result<TrialSet> {
    cfg.validate()?;
    let one = |t: usize| run_trial(scene, cfg, t).map_err(|e| e.to_string());
    let trials: Vec<_> = if cfg.parallel {
        (0..cfg.n_trials).into_par_iter().map(one).collect()
    } else {
        (0..cfg.n_trials).map(one).collect()
    };
    let method = cfg.method_name();
    let summary = summarize(&method, cfg.n_train_per_class, &trials);
    Ok(TrialSet {
        method,
        n_train: cfg.n_train_per_class,
        trials,
        summary,
    })
}

pub const RESULTS_HEADER: &str = "method,n_train,trial,OA,kappa,avgP,avgR,avgF1,wall_ms";

/// One row per completed trial; failed trials become `NaN` rows.
pub fn results_csv(set: &TrialSet) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for (t, trial) in set.trials.iter().enumerate() {
        match trial {
            Ok(r) => {
                let m = &r.report;
                let _ = writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
                    set.method,
                    set.n_train,
                    t,
                    m.overall_accuracy,
                    m.kappa,
                    m.avg_precision,
                    m.avg_recall,
                    m.avg_f1,
                    r.times.total_ms
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{},{},{t},NaN,NaN,NaN,NaN,NaN,NaN", set.method, set.n_train);
            }
        }
    }
    out
}

pub const SUMMARY_HEADER: &str = "method,n_train,trials,completed,OA_best,OA_mean,OA_sd,kappa_best,kappa_mean,kappa_sd,\
avgP_mean,avgP_sd,avgR_mean,avgR_sd,avgF1_mean,avgF1_sd,time_s_mean,time_s_sd";

/// Best/mean/SD layout, accuracies in percent and times in seconds.
pub fn summary_csv(summaries: &[TrialSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3},{:.3}",
            s.method,
            s.n_train,
            s.n_trials,
            s.completed,
            100.0 * s.oa.best,
            100.0 * s.oa.mean,
            100.0 * s.oa.sd,
            100.0 * s.kappa.best,
            100.0 * s.kappa.mean,
            100.0 * s.kappa.sd,
            100.0 * s.avg_precision.mean,
            100.0 * s.avg_precision.sd,
            100.0 * s.avg_recall.mean,
            100.0 * s.avg_recall.sd,
            100.0 * s.avg_f1.mean,
            100.0 * s.avg_f1.sd,
            s.wall_ms.mean / 1e3,
            s.wall_ms.sd / 1e3
        );
    }
    out
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl fmt::Display for TrialSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} n_train={} trials={}/{} OA {:.2} ± {:.2} (best {:.2}) kappa {:.2}",
            self.method,
            self.n_train,
            self.completed,
            self.n_trials,
            100.0 * self.oa.mean,
            100.0 * self.oa.sd,
            100.0 * self.oa.best,
            100.0 * self.kappa.mean
        )
    }
}
