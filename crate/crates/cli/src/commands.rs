use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};

use hsi_ugm::crf::{
    crf_predict, load_crf, save_crf, train_crf, CrfData, CrfInstance, CrfObjectiveKind, CrfTrainConfig, LatentHandling,
};
use hsi_ugm::data::{
    load_cube, load_labels, load_split, sample_split, save_cube_as, save_labels, save_split, synth_scene, LabelMap,
    SceneSpec, SplitSet,
};
use hsi_ugm::energy::{grid_graph, EnergyModel};
use hsi_ugm::evaluation::{
    classify, confusion, metrics, results_csv, run_trials, summary_csv, ClassifierKind, ExperimentConfig, Scene, Scores,
};
use hsi_ugm::features::{emp, pca, standardize, EmpParams};
use hsi_ugm::inference::{map_infer, write_reports, MapMethod, MapOptions};
use hsi_ugm::io::Header;
use hsi_ugm::superpixels::{adjacency, load_segmentation, project_labels, save_segmentation, slic, SlicParams, SpatialScale};

use crate::render::{render_ppm, Palette};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract features from a cube (standardize, PCA or extended morphological profile)
    Features(FeaturesArgs),
    /// Train a pixel-wise classifier and score every pixel
    Classify(ClassifyArgs),
    /// MAP labeling of a Potts MRF over pixels or superpixels
    Smooth(SmoothArgs),
    /// SLIC superpixel segmentation of a cube
    Superpixel(SuperpixelArgs),
    /// Train a CRF on the training pixels and predict every pixel
    Crf(CrfArgs),
    /// Accuracy metrics of a label map on a split
    Eval(EvalArgs),
    /// Repeated-trial experiment driven by a key=value config file
    Bench(BenchArgs),
    /// Render a label map to a binary PPM image
    Render(RenderArgs),
    /// Generate a synthetic blocky scene and its ground truth
    Synth(SynthArgs),
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Features(a) => features(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Smooth(a) => smooth(a),
        Command::Superpixel(a) => superpixel(a),
        Command::Crf(a) => crf(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Render(a) => render(a),
        Command::Synth(a) => synth(a),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureMethod {
    /// Zero mean and unit variance per band
    Standardize,
    /// Principal components keeping --variance of the total variance
    Pca,
    /// PCA scores plus openings and closings by reconstruction
    Emp,
}

#[derive(Debug, Args)]
#[command(long_about = "Reads a cube and writes a feature cube in the same header+raw format.\n\n\
EMP features stack each retained principal component with 2*levels openings and closings \
by reconstruction, disk diameters step, 2*step, ..., so the output has n_pc*(2*levels+1) bands.")]
pub struct FeaturesArgs {
    /// Input cube header
    #[arg(long)]
    cube: PathBuf,
    /// Output feature cube header (raw block written alongside)
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "emp")]
    method: FeatureMethod,
    /// Fraction of variance the principal components must explain
    #[arg(long, default_value_t = 0.99)]
    variance: f64,
    /// Opening/closing pairs per component (EMP)
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Disk diameter increment in pixels (EMP)
    #[arg(long, default_value_t = 2.0)]
    step: f64,
}

fn features(a: FeaturesArgs) -> Result<()> {
    let cube = load_cube(&a.cube).with_context(|| format!("reading {}", a.cube.display()))?;
    let out = match a.method {
        FeatureMethod::Standardize => standardize(&cube),
        FeatureMethod::Pca => pca(&cube, a.variance)?,
        FeatureMethod::Emp => emp(&cube, &EmpParams::new(a.variance, a.levels, a.step))?,
    };
    save_cube_as(&out, &a.out, Some("features"))?;
    println!("{}: {}x{}x{}", a.out.display(), out.height(), out.width(), out.channels());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassifierChoice {
    /// Multinomial logistic regression (features are standardized first)
    Lr,
    /// Spectral angle mapper
    Sam,
}

#[derive(Debug, Args)]
#[command(long_about = "Fits a classifier on the training pixels of a split and scores every pixel.\n\n\
The split is read from --split, or sampled from --labels with --n-train/--n-test per class \
and --seed. LR writes a probability field (kind=proba); SAM writes per-class minimum \
spectral angles (kind=angles). Both can be passed to smooth and crf.")]
pub struct ClassifyArgs {
    /// Feature cube header
    #[arg(long)]
    features: PathBuf,
    /// Ground-truth label map
    #[arg(long, required_unless_present = "split")]
    labels: Option<PathBuf>,
    /// Existing split file; sampling flags are ignored when given
    #[arg(long)]
    split: Option<PathBuf>,
    /// Training pixels per class when sampling
    #[arg(long, required_unless_present = "split")]
    n_train: Option<usize>,
    /// Test pixels per class when sampling
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Unlabel classes with fewer pixels and renumber the rest before sampling
    #[arg(long, default_value_t = 0)]
    min_class_pixels: usize,
    /// Write the sampled split here
    #[arg(long)]
    split_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lr")]
    classifier: ClassifierChoice,
    /// L2 penalty of logistic regression
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Output score field header
    #[arg(long)]
    out: PathBuf,
    /// Also write the pixel-wise label map (PGM)
    #[arg(long)]
    map: Option<PathBuf>,
}

fn read_truth(path: &Path, min_class_pixels: usize) -> Result<LabelMap> {
    let truth = load_labels(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(if min_class_pixels > 0 {
        truth.drop_small_classes(min_class_pixels).0
    } else {
        truth
    })
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let cube = load_cube(&a.features).with_context(|| format!("reading {}", a.features.display()))?;
    let (h, w) = (cube.height(), cube.width());
    let truth = a.labels.as_deref().map(|p| read_truth(p, a.min_class_pixels)).transpose()?;
    if let Some(t) = &truth {
        t.check_dims(h, w)?;
    }
    let split = match (&a.split, &truth) {
        (Some(path), _) => read_split(path, h, w)?,
        (None, Some(t)) => {
            let n_train = a.n_train.expect("required by clap");
            sample_split(t, n_train, a.n_test, a.seed)?
        }
        (None, None) => unreachable!("clap requires labels or split"),
    };
    if let Some(path) = &a.split_out {
        save_split(&split, path)?;
    }
    let n_classes = truth.as_ref().map_or(split.n_classes(), |t| t.n_classes().max(split.n_classes()));
    let kind = match a.classifier {
        ClassifierChoice::Lr => ClassifierKind::Lr {
            lambda: hsi_ugm::evaluation::Choice::Fixed(a.lambda),
        },
        ClassifierChoice::Sam => ClassifierKind::Sam,
    };
    let scores = classify(&cube, &split.train, n_classes, &kind, a.lambda)?;
    scores.save(&a.out)?;
    if let Some(path) = &a.map {
        save_labels(&scores.labels(), path)?;
    }
    println!(
        "{}: {} classes, {} training pixels",
        a.out.display(),
        n_classes,
        split.train.len()
    );
    Ok(())
}

fn read_split(path: &Path, h: usize, w: usize) -> Result<SplitSet> {
    let split = load_split(path, Some((h, w))).with_context(|| format!("reading {}", path.display()))?;
    if (split.height, split.width) != (h, w) {
        return Err(hsi_ugm::Error::DimensionMismatch(format!(
            "split is for a {}x{} image, input is {h}x{w}",
            split.height, split.width
        ))
        .into());
    }
    Ok(split)
}

#[derive(Debug, Args)]
#[command(long_about = "Builds a Potts MRF whose unary energies are -ln(p + eps) (or the angles of a \
SAM field) and whose edges charge --beta when labels differ, then finds a MAP labeling.\n\n\
Without --segmentation the graph is the 4-connected pixel grid. With it, probabilities \
(or angles) are averaged per superpixel, the graph is the superpixel adjacency, and the \
superpixel labels are projected back to pixels.")]
pub struct SmoothArgs {
    /// Probability or angle field header
    #[arg(long)]
    scores: PathBuf,
    /// icm, alpha-expansion or max-marginals (max-product BP)
    #[arg(long, default_value = "alpha-expansion")]
    method: MapMethod,
    /// Potts penalty
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Expansion cycles, or ICM sweeps
    #[arg(long, default_value_t = 15)]
    cycles: usize,
    /// Added to probabilities before the logarithm
    #[arg(long, default_value_t = 1e-12)]
    eps: f64,
    /// Superpixel segmentation header
    #[arg(long)]
    segmentation: Option<PathBuf>,
    /// Output label map (PGM)
    #[arg(long)]
    out: PathBuf,
    /// Write the inference report CSV here
    #[arg(long)]
    report: Option<PathBuf>,
}

fn smooth(a: SmoothArgs) -> Result<()> {
    let scores = Scores::load(&a.scores).with_context(|| format!("reading {}", a.scores.display()))?;
    let (h, w, _) = scores.dims();
    let options = MapOptions {
        max_cycles: a.cycles,
        ..MapOptions::default()
    };
    let (map, report) = match &a.segmentation {
        None => {
            let model = EnergyModel::potts(grid_graph(h, w), scores.unary(a.eps)?, a.beta)?;
            let (y, report) = map_infer(&model, a.method, &options)?;
            (LabelMap::new(h, w, y.iter().map(|&c| c as u32 + 1).collect())?, report)
        }
        Some(path) => {
            let seg = load_segmentation(path).with_context(|| format!("reading {}", path.display()))?;
            if (seg.height(), seg.width()) != (h, w) {
                return Err(hsi_ugm::Error::DimensionMismatch(format!(
                    "segmentation is {}x{}, scores are {h}x{w}",
                    seg.height(),
                    seg.width()
                ))
                .into());
            }
            let model = EnergyModel::potts(adjacency(&seg), scores.superpixel_unary(&seg, a.eps)?, a.beta)?;
            let (y, report) = map_infer(&model, a.method, &options)?;
            (project_labels(&seg, &y)?, report)
        }
    };
    save_labels(&map, &a.out)?;
    if let Some(path) = &a.report {
        write_reports(path, std::slice::from_ref(&report))?;
    }
    println!(
        "{}: {} energy {:.6} after {} iterations in {:.1} ms",
        a.out.display(),
        report.method,
        report.energy,
        report.iterations,
        report.wall_ms
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleChoice {
    /// Spatial term weighted by m / S^2
    PerArea,
    /// Spatial term weighted by (m / S)^2
    PerStep,
}

#[derive(Debug, Args)]
#[command(long_about = "Runs SLIC on all bands of a cube. Seeds lie on a grid of step \
S = sqrt(H*W / count); regions smaller than --min-region pixels are merged into a neighbour, \
so the final count is usually close to, not equal to, the request.")]
pub struct SuperpixelArgs {
    #[arg(long)]
    cube: PathBuf,
    /// Requested number of superpixels
    #[arg(long, default_value_t = 400)]
    count: usize,
    /// Spatial regularizer m; larger values give more compact regions
    #[arg(long, default_value_t = 100.0)]
    regularizer: f64,
    /// Minimum region size in pixels
    #[arg(long, default_value_t = 9)]
    min_region: usize,
    /// k-means iterations
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, value_enum, default_value = "per-area")]
    scale: ScaleChoice,
    /// Output segmentation header
    #[arg(long)]
    out: PathBuf,
}

fn superpixel(a: SuperpixelArgs) -> Result<()> {
    let cube = load_cube(&a.cube).with_context(|| format!("reading {}", a.cube.display()))?;
    let params = SlicParams {
        requested_superpixels: a.count,
        regularizer: a.regularizer,
        min_region_size: a.min_region,
        kmeans_iters: a.iters,
        spatial_scale: match a.scale {
            ScaleChoice::PerArea => SpatialScale::PerArea,
            ScaleChoice::PerStep => SpatialScale::PerStep,
        },
    };
    let start = Instant::now();
    let seg = slic(&cube, &params)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    save_segmentation(&seg, &a.out)?;
    println!("{}: {} superpixels in {ms:.1} ms", a.out.display(), seg.n_segments());
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ObjectiveChoice {
    /// Maximum likelihood with loopy-BP marginals
    Mle,
    /// Pseudo-likelihood on the training pixels
    Pl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LatentChoice {
    /// Unlabeled pixels stay in the graph and are summed out
    Marginalize,
    /// Train on the subgraph of labeled pixels only
    Drop,
}

#[derive(Debug, Args)]
#[command(long_about = "Grid CRF whose node features are the classifier scores (probabilities, or \
exp(-angle) for SAM) and whose pairwise weights are shared by all edges. Weights are trained \
on the training pixels of --split unless --model supplies them; prediction labels each pixel \
with the argmax of its sum-product marginal.")]
pub struct CrfArgs {
    /// Probability or angle field header
    #[arg(long)]
    scores: PathBuf,
    /// Split whose training pixels are observed during training
    #[arg(long, required_unless_present = "model")]
    split: Option<PathBuf>,
    /// Use a saved model instead of training
    #[arg(long)]
    model: Option<PathBuf>,
    /// Save the trained model here
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mle")]
    objective: ObjectiveChoice,
    #[arg(long, value_enum, default_value = "marginalize")]
    latent: LatentChoice,
    /// L2 penalty on the weights
    #[arg(long, default_value_t = 1e-2)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Keep the pairwise weights symmetric in the two labels
    #[arg(long)]
    tied: bool,
    /// Output label map (PGM)
    #[arg(long)]
    out: PathBuf,
}

fn crf(a: CrfArgs) -> Result<()> {
    let scores = Scores::load(&a.scores).with_context(|| format!("reading {}", a.scores.display()))?;
    let (h, w, m) = scores.dims();
    let (features, f) = scores.crf_features();
    let inst = CrfInstance::new(grid_graph(h, w), features, f)?;
    let model = match &a.model {
        Some(path) => load_crf(path).with_context(|| format!("reading {}", path.display()))?.0,
        None => {
            let split = read_split(a.split.as_deref().expect("required by clap"), h, w)?;
            let mut observed = vec![None; h * w];
            for s in &split.train {
                if s.class as usize > m {
                    return Err(hsi_ugm::Error::Data(format!("split class {} exceeds the {m} score classes", s.class)).into());
                }
                observed[s.pixel] = Some(s.class as usize - 1);
            }
            let cfg = CrfTrainConfig {
                objective: match a.objective {
                    ObjectiveChoice::Mle => CrfObjectiveKind::MleBp,
                    ObjectiveChoice::Pl => CrfObjectiveKind::PseudoLikelihood,
                },
                latent: match a.latent {
                    LatentChoice::Marginalize => LatentHandling::Marginalize,
                    LatentChoice::Drop => LatentHandling::Drop,
                },
                l2: a.l2,
                max_iters: a.max_iters,
                tied: a.tied,
                ..CrfTrainConfig::default()
            };
            let fit = train_crf(&[CrfData::new(inst.clone(), observed)?], m, &cfg)?;
            eprintln!(
                "trained: objective {:.6} after {} iterations{}",
                fit.trace.objective,
                fit.trace.iterations,
                if fit.bp_converged { "" } else { " (BP did not always converge)" }
            );
            if let Some(path) = &a.model_out {
                save_crf(&fit.model, a.l2, path)?;
            }
            fit.model
        }
    };
    let (y, _) = crf_predict(&model, &inst, CrfTrainConfig::default().engine)?;
    let map = LabelMap::new(h, w, y.iter().map(|&c| c as u32 + 1).collect())?;
    save_labels(&map, &a.out)?;
    println!("{}: {h}x{w}, {m} classes", a.out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Test,
    Train,
    All,
}

#[derive(Debug, Args)]
#[command(long_about = "Scores a label map against ground truth on the pixels of a split and prints \
overall accuracy, kappa, average precision/recall/F1 (user's/producer's accuracy), the \
per-class values and the confusion matrix (rows: truth, columns: prediction).")]
pub struct EvalArgs {
    /// Predicted label map
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth label map
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Which split pixels to score
    #[arg(long, value_enum, default_value = "test")]
    role: Role,
    /// Must match the value given to classify
    #[arg(long, default_value_t = 0)]
    min_class_pixels: usize,
}

fn eval(a: EvalArgs) -> Result<()> {
    let pred = load_labels(&a.pred).with_context(|| format!("reading {}", a.pred.display()))?;
    let truth = read_truth(&a.labels, a.min_class_pixels)?;
    truth.check_dims(pred.height(), pred.width())?;
    let split = read_split(&a.split, truth.height(), truth.width())?;
    let samples: Vec<_> = match a.role {
        Role::Test => split.test.clone(),
        Role::Train => split.train.clone(),
        Role::All => split.train.iter().chain(&split.test).copied().collect(),
    };
    let cm = confusion(&pred, &truth, &samples)?;
    let r = metrics(&cm)?;
    println!("pixels     {}", cm.total());
    println!("OA         {:.4}", r.overall_accuracy);
    println!("kappa      {:.4}", r.kappa);
    println!("avg P      {:.4}", r.avg_precision);
    println!("avg R      {:.4}", r.avg_recall);
    println!("avg F1     {:.4}", r.avg_f1);
    println!("class,precision,recall");
    for c in 0..cm.n_classes() {
        println!("{},{:.4},{:.4}", c + 1, r.precision[c], r.recall[c]);
    }
    println!("confusion");
    for t in 0..cm.n_classes() {
        let row: Vec<String> = (0..cm.n_classes()).map(|p| cm.get(t, p).to_string()).collect();
        println!("{}", row.join(","));
    }
    Ok(())
}

#[derive(Debug, Args)]
#[command(long_about = "Runs repeated trials of one pipeline and writes the per-trial results CSV \
and the summary CSV (best, mean and standard deviation of each metric).\n\n\
The config is flat key=value text. Keys: features (raw|emp|emp_tuned), emp_variance, \
emp_levels, emp_step, classifier (lr|sam), lambda (number|tuned), smoother \
(none|mrf_grid|mrf_superpixel|crf), beta (number|tuned), superpixels, slic_regularizer, \
slic_min_region, slic_iters, crf_objective (mle|pl), crf_l2, crf_max_iters, crf_tied, \
n_train (required), n_test, n_trials, base_seed, validation_fraction, cycles, eps, \
min_class_pixels, parallel, plus the file keys cube, labels, results and summary \
(relative to the config file). Command-line flags override the file keys.")]
pub struct BenchArgs {
    /// Experiment config file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    cube: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Per-trial results CSV
    #[arg(long)]
    results: Option<PathBuf>,
    /// Summary CSV; printed to stdout when neither flag nor key is given
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Overrides base_seed
    #[arg(long)]
    seed: Option<u64>,
}

const FILE_KEYS: [&str; 4] = ["cube", "labels", "results", "summary"];

fn bench(a: BenchArgs) -> Result<()> {
    let header = Header::read(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = ExperimentConfig::from_header(&header, &FILE_KEYS)?;
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    let base = a.config.parent().unwrap_or(Path::new("."));
    let file = |flag: Option<PathBuf>, key: &str| flag.or_else(|| header.get(key).map(|v| base.join(v)));
    let Some(cube_path) = file(a.cube, "cube") else {
        bail!("no cube: pass --cube or set cube= in the config");
    };
    let Some(labels_path) = file(a.labels, "labels") else {
        bail!("no labels: pass --labels or set labels= in the config");
    };
    let cube = load_cube(&cube_path).with_context(|| format!("reading {}", cube_path.display()))?;
    let truth = load_labels(&labels_path).with_context(|| format!("reading {}", labels_path.display()))?;
    let scene = Scene::new(cube, truth)?;
    let set = run_trials(&scene, &cfg)?;
    for (t, trial) in set.trials.iter().enumerate() {
        if let Err(e) = trial {
            eprintln!("trial {t} failed: {e}");
        }
    }
    eprintln!("{}", set.summary);
    if let Some(path) = file(a.results, "results") {
        std::fs::write(&path, results_csv(&set)).with_context(|| format!("writing {}", path.display()))?;
    }
    let summary = summary_csv(std::slice::from_ref(&set.summary));
    match file(a.summary, "summary") {
        Some(path) => std::fs::write(&path, summary).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{summary}"),
    }
    if set.summary.completed == 0 {
        return Err(hsi_ugm::Error::Data("every trial failed".into()).into());
    }
    Ok(())
}

#[derive(Debug, Args)]
#[command(long_about = "Writes a binary PPM (P6) with one palette color per pixel. The palette is a \
CSV of class,r,g,b rows with distinct colors; class 0 (unlabeled) is always black. The word \
`auto` instead of a palette path generates evenly spaced hues.")]
pub struct RenderArgs {
    /// Label map to draw
    map: PathBuf,
    /// Palette CSV, or `auto`
    palette: String,
    /// Output PPM
    out: PathBuf,
    /// Outline the borders of this segmentation in white
    #[arg(long)]
    boundaries: Option<PathBuf>,
    /// Enlarge each pixel to a scale x scale block
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=64))]
    scale: u16,
}

fn render(a: RenderArgs) -> Result<()> {
    let map = load_labels(&a.map).with_context(|| format!("reading {}", a.map.display()))?;
    let palette = if a.palette == "auto" {
        Palette::generated(map.n_classes())
    } else {
        Palette::load(Path::new(&a.palette))?
    };
    let seg = a
        .boundaries
        .as_deref()
        .map(|p| load_segmentation(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let bytes = render_ppm(&map, &palette, seg.as_ref(), a.scale as usize)?;
    std::fs::write(&a.out, bytes).with_context(|| format!("writing {}", a.out.display()))?;
    println!("{}: {}x{}", a.out.display(), map.width() * a.scale as usize, map.height() * a.scale as usize);
    Ok(())
}

#[derive(Debug, Args)]
#[command(long_about = "Draws a blocky scene: a grid of rectangular class regions (every class \
used at least once when the grid has room), a mean spectrum per class drawn uniformly \
from [0.5, 1.5) per band, and i.i.d. Gaussian noise of standard deviation --sigma.")]
pub struct SynthArgs {
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Region grid as ROWSxCOLS
    #[arg(long, default_value = "7x7", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    bands: usize,
    #[arg(long, default_value_t = 0.45)]
    sigma: f64,
    /// Seed of the layout and the class means
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the pixel noise (defaults to --seed)
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Output cube header
    #[arg(long)]
    cube: PathBuf,
    /// Output ground truth (PGM)
    #[arg(long)]
    labels: PathBuf,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(r), parse(c)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(format!("expected positive ROWSxCOLS, got '{s}'")),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.classes == 0 || a.bands == 0 || a.height == 0 || a.width == 0 {
        bail!("height, width, classes and bands must be positive");
    }
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        bail!("sigma must be finite and non-negative");
    }
    let spec = SceneSpec::random_blocks(a.height, a.width, a.grid, a.classes, a.bands, a.sigma, a.seed);
    let (cube, truth) = synth_scene(&spec, a.noise_seed.unwrap_or(a.seed))?;
    save_cube_as(&cube, &a.cube, None)?;
    save_labels(&truth, &a.labels)?;
    println!(
        "{}: {}x{}x{}, {} classes",
        a.cube.display(),
        cube.height(),
        cube.width(),
        cube.channels(),
        truth.n_classes()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("7x5"), Ok((7, 5)));
        assert_eq!(parse_grid("2X3"), Ok((2, 3)));
        assert!(parse_grid("0x3").is_err());
        assert!(parse_grid("7").is_err());
    }
}
