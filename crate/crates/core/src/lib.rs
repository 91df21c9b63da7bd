//! Hyperspectral land-cover classification with pairwise undirected
//! graphical models: feature extraction, per-pixel classifiers, MRF/CRF
//! energies, MAP and marginal inference, superpixels and evaluation.

pub mod classifiers;
pub mod crf;
pub mod data;
pub mod energy;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod inference;
pub mod io;
pub mod superpixels;

pub use error::{Error, Result};

pub use classifiers::{AngleField, LrModel, ProbabilityField};
pub use crf::{CrfInstance, CrfModel, CrfTrainConfig};
pub use data::{Cube, LabelMap, Sample, SceneSpec, SplitSet};
pub use energy::{EnergyModel, Graph, Labeling, Marginals, PairwiseSpec, UnaryTable};
pub use evaluation::{ConfusionMatrix, ExperimentConfig, MetricReport, Scene};
pub use features::EmpParams;
pub use inference::{BpConfig, MapMethod};
pub use superpixels::{SlicParams, SuperpixelSegmentation};
