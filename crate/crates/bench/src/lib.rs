//! Fixtures shared by the benchmarks.

use hsi_ugm::classifiers::{predict_proba, train_lr_with, unary_from_proba, LR_DEFAULTS};
use hsi_ugm::data::{sample_split, synth_scene, SceneSpec};
use hsi_ugm::energy::grid_graph;
use hsi_ugm::features::standardize;
use hsi_ugm::{Cube, EnergyModel, ProbabilityField};

/// The blocky four-class test scene at `size × size`.
pub fn scene(size: usize) -> (Cube, ProbabilityField) {
    let spec = SceneSpec::random_blocks(64, 64, (7, 7), 4, 10, 0.45, 2024).resized(size, size);
    let (cube, truth) = synth_scene(&spec, 7).expect("valid scene");
    let split = sample_split(&truth, 20, 1, 7).expect("enough pixels");
    let features = standardize(&cube);
    let model = train_lr_with(&features, &split.train, 4, 1.0, LR_DEFAULTS)
        .expect("trainable")
        .model;
    let proba = predict_proba(&model, &features).expect("matching features");
    (cube, proba)
}

/// Grid Potts model over the classifier energies of [`scene`].
pub fn grid_potts(proba: &ProbabilityField, beta: f64) -> EnergyModel {
    let unary = unary_from_proba(proba, 1e-12).expect("probabilities");
    EnergyModel::potts(grid_graph(proba.height(), proba.width()), unary, beta).expect("valid model")
}
