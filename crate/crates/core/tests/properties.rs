//! Property tests over the public API.

use hsi_ugm::classifiers::{predict_proba, spectral_angle, train_lr_with, unary_from_proba, LrModel, LR_DEFAULTS};
use hsi_ugm::crf::{crf_energy_model, train_crf, CrfData, CrfInstance, CrfModel, CrfObjectiveKind, CrfTrainConfig, MarginalEngine};
use hsi_ugm::data::{
    load_cube, load_labels, sample_split, save_cube, save_labels, seeded_rng, synth_scene, Cube, LabelMap, Sample, SceneSpec,
};
use hsi_ugm::energy::{brute_force_marginals, grid_graph, total_energy, EnergyModel, Graph, Labeling, PairwiseSpec, UnaryTable};
use hsi_ugm::evaluation::{confusion, metrics, run_trials, ClassifierKind, Choice, ExperimentConfig, Scene, Smoother};
use hsi_ugm::features::{emp, morph_close, morph_open, pca, EmpParams, Image};
use hsi_ugm::inference::{
    alpha_expansion, alpha_expansion_from, icm_detailed, loopy_bp, map_infer, max_flow, BpConfig, BpMode, FlowNetwork, MapMethod,
    MapOptions,
};
use hsi_ugm::superpixels::{adjacency, slic, SlicParams};
use proptest::prelude::*;
use rand::Rng;

fn random_model(seed: u64, graph: Graph, m: usize) -> EnergyModel {
    let mut rng = seeded_rng(seed);
    let n = graph.n_nodes();
    let unary = UnaryTable::new(n, m, (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let tables: Vec<f64> = (0..graph.n_edges() * m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    EnergyModel::new(graph, unary, PairwiseSpec::Full(tables)).unwrap()
}

fn random_graph(seed: u64, n: usize, p: f64) -> Graph {
    let mut rng = seeded_rng(seed ^ 0x9e37);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

fn decode(mut k: usize, n: usize, m: usize) -> Labeling {
    (0..n)
        .map(|_| {
            let c = k % m;
            k /= m;
            c
        })
        .collect()
}

fn small_scene(seed: u64) -> Scene {
    let spec = SceneSpec::random_blocks(20, 20, (3, 3), 3, 6, 0.4, seed);
    let (cube, truth) = synth_scene(&spec, seed).unwrap();
    Scene::new(cube, truth).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cube_and_labels_round_trip(seed in 0u64..1000, h in 1usize..9, w in 1usize..9, b in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let dir = tempfile::tempdir().unwrap();
        // f32 storage: draw values that are exactly representable
        let cube = Cube::new(h, w, b, (0..h * w * b).map(|_| rng.random::<f32>() as f64).collect()).unwrap();
        let labels = LabelMap::new(h, w, (0..h * w).map(|_| rng.random_range(0..5)).collect()).unwrap();
        let (cp, lp) = (dir.path().join("c.hdr"), dir.path().join("l.hdr"));
        save_cube(&cube, &cp).unwrap();
        save_labels(&labels, &lp).unwrap();
        prop_assert_eq!(load_cube(&cp).unwrap(), cube);
        prop_assert_eq!(load_labels(&lp).unwrap(), labels);
    }

    #[test]
    fn splits_are_disjoint_and_exact(seed in 0u64..10_000, n_train in 1usize..6, n_test in 1usize..6) {
        let spec = SceneSpec::random_blocks(12, 12, (3, 3), 3, 2, 0.1, seed);
        let truth = spec.ground_truth().unwrap();
        let split = sample_split(&truth, n_train, n_test, seed).unwrap();
        let mut seen = std::collections::HashSet::new();
        for s in split.train.iter().chain(&split.test) {
            prop_assert!(seen.insert(s.pixel));
            prop_assert_eq!(truth.get(s.pixel), s.class);
        }
        for c in 1..=3u32 {
            prop_assert_eq!(split.train.iter().filter(|s| s.class == c).count(), n_train);
            prop_assert_eq!(split.test.iter().filter(|s| s.class == c).count(), n_test);
        }
    }

    #[test]
    fn noiseless_scene_is_nearest_mean_separable(seed in 0u64..1000) {
        let spec = SceneSpec::random_blocks(10, 10, (2, 3), 4, 3, 0.0, seed);
        let (cube, truth) = synth_scene(&spec, seed).unwrap();
        for p in 0..cube.n_pixels() {
            let x = cube.pixel(p);
            let nearest = spec.class_means.iter().enumerate().min_by(|a, b| {
                let d = |m: &Vec<f64>| m.iter().zip(x).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
                d(a.1).total_cmp(&d(b.1))
            }).unwrap().0;
            // two classes may share a mean only by coincidence of the draw
            prop_assert_eq!(x, &spec.class_means[truth.get(p) as usize - 1][..]);
            prop_assert_eq!(spec.class_means[nearest].as_slice(), x);
        }
    }

    #[test]
    fn opening_and_closing_laws(seed in 0u64..1000, h in 1usize..12, w in 1usize..12, r in 0.0f64..3.5) {
        let mut rng = seeded_rng(seed);
        let f = Image::new(h, w, (0..h * w).map(|_| rng.random_range(-3.0..3.0)).collect());
        let g = Image::new(h, w, f.values.iter().map(|v| v + rng.random_range(0.0..1.0)).collect());
        let (of, cf) = (morph_open(&f, r), morph_close(&f, r));
        let (og, cg) = (morph_open(&g, r), morph_close(&g, r));
        for p in 0..h * w {
            prop_assert!(of.values[p] <= f.values[p]);
            prop_assert!(cf.values[p] >= f.values[p]);
            prop_assert!(of.values[p] <= og.values[p]);
            prop_assert!(cf.values[p] <= cg.values[p]);
        }
        prop_assert_eq!(morph_open(&of, r), of);
        prop_assert_eq!(morph_close(&cf, r), cf);
    }

    #[test]
    fn pca_scores_are_uncorrelated(seed in 0u64..1000, b in 2usize..6) {
        let mut rng = seeded_rng(seed);
        let n = 60;
        let mix: Vec<f64> = (0..b * b).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).flat_map(|_| {
            let z: Vec<f64> = (0..b).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..b).map(|i| (0..b).map(|j| mix[i * b + j] * z[j]).sum::<f64>()).collect::<Vec<_>>()
        }).collect();
        let scores = pca(&Cube::new(n, 1, b, values).unwrap(), 1.0).unwrap();
        let k = scores.channels();
        for a in 0..k {
            for c in a + 1..k {
                let (ba, bc) = (scores.band(a), scores.band(c));
                let cov = ba.iter().zip(&bc).map(|(x, y)| x * y).sum::<f64>() / n as f64;
                let scale = (ba.iter().map(|x| x * x).sum::<f64>() * bc.iter().map(|y| y * y).sum::<f64>()).sqrt() / n as f64;
                prop_assert!(cov.abs() < 1e-8 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn emp_dimension(seed in 0u64..1000, levels in 1usize..4, step in 1.0f64..4.0) {
        let spec = SceneSpec::random_blocks(10, 10, (2, 2), 2, 4, 0.3, seed);
        let (cube, _) = synth_scene(&spec, seed).unwrap();
        let params = EmpParams::new(1.0, levels, step);
        let n_pc = pca(&cube, 1.0).unwrap().channels();
        prop_assert_eq!(emp(&cube, &params).unwrap().channels(), n_pc * (2 * levels + 1));
    }

    #[test]
    fn spectral_angle_ignores_positive_scale(seed in 0u64..1000, s in 0.01f64..100.0, t in 0.01f64..100.0) {
        let mut rng = seeded_rng(seed);
        let u: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..2.0)).collect();
        let v: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..2.0)).collect();
        let su: Vec<f64> = u.iter().map(|x| s * x).collect();
        let tv: Vec<f64> = v.iter().map(|x| t * x).collect();
        prop_assert!((spectral_angle(&u, &v) - spectral_angle(&su, &tv)).abs() < 1e-12);
    }

    #[test]
    fn lr_probabilities_on_simplex(seed in 0u64..1000) {
        let mut rng = seeded_rng(seed);
        let model = LrModel { n_classes: 4, n_features: 3, weights: (0..16).map(|_| rng.random_range(-30.0..30.0)).collect(), lambda: 0.0 };
        let cube = Cube::new(3, 3, 3, (0..27).map(|_| rng.random_range(-10.0..10.0)).collect()).unwrap();
        let p = predict_proba(&model, &cube).unwrap();
        for i in 0..9 {
            prop_assert!((p.pixel(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.pixel(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn local_markov_property(seed in 0u64..10_000, n in 2usize..7, m in 2usize..4) {
        let model = random_model(seed, random_graph(seed, n, 0.5), m);
        let total = m.pow(n as u32);
        let joint: Vec<f64> = (0..total).map(|k| (-total_energy(&model, &decode(k, n, m))).exp()).collect();
        let i = seed as usize % n;
        let neighbours: Vec<usize> = model.graph().neighbors(i).iter().map(|&(j, _)| j).collect();
        for k in 0..total {
            let y = decode(k, n, m);
            // p(y_i | everything else)
            let full_norm: f64 = (0..m).map(|c| {
                let mut z = y.clone();
                z[i] = c;
                joint[z.iter().rev().fold(0, |acc, &v| acc * m + v)]
            }).sum();
            let full = joint[k] / full_norm;
            // p(y_i | neighbours), summing out the rest
            let mut num = 0.0;
            let mut den = 0.0;
            for (k2, &pj) in joint.iter().enumerate() {
                let z = decode(k2, n, m);
                if neighbours.iter().all(|&j| z[j] == y[j]) {
                    den += pj;
                    if z[i] == y[i] {
                        num += pj;
                    }
                }
            }
            prop_assert!((full - num / den).abs() < 1e-10);
        }
    }

    #[test]
    fn log_partition_identity(seed in 0u64..10_000, n in 1usize..6, m in 2usize..4) {
        let model = random_model(seed, random_graph(seed, n, 0.6), m);
        let marg = brute_force_marginals(&model).unwrap();
        let total: f64 = (0..m.pow(n as u32)).map(|k| (-total_energy(&model, &decode(k, n, m)) - marg.log_z).exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn energy_ignores_edge_orientation(seed in 0u64..10_000, n in 2usize..8, m in 2usize..4) {
        let model = random_model(seed, random_graph(seed, n, 0.5), m);
        let PairwiseSpec::Full(tables) = model.pairwise() else { unreachable!() };
        // reverse the node order: every edge flips, so its table is transposed
        let r = |i: usize| n - 1 - i;
        let mut edges = Vec::new();
        let mut flipped_tables = Vec::new();
        for (e, &(i, j)) in model.graph().edges().iter().enumerate() {
            edges.push((r(j), r(i)));
            let t = &tables[e * m * m..(e + 1) * m * m];
            flipped_tables.extend((0..m * m).map(|k| t[(k % m) * m + k / m]));
        }
        let unary: Vec<f64> = (0..n).flat_map(|i| model.unary().row(r(i)).to_vec()).collect();
        let flipped = EnergyModel::new(
            Graph::new(n, edges).unwrap(),
            UnaryTable::new(n, m, unary).unwrap(),
            PairwiseSpec::Full(flipped_tables),
        ).unwrap();
        let y = decode(seed as usize % m.pow(n as u32), n, m);
        let y_rev: Labeling = (0..n).map(|i| y[r(i)]).collect();
        prop_assert!((total_energy(&model, &y) - total_energy(&flipped, &y_rev)).abs() < 1e-12);
    }

    #[test]
    fn icm_and_expansion_never_increase_energy(seed in 0u64..10_000, m in 2usize..5, beta in 0.0f64..3.0) {
        let mut rng = seeded_rng(seed);
        let (h, w) = (rng.random_range(1..7), rng.random_range(1..7));
        let unary = UnaryTable::new(h * w, m, (0..h * w * m).map(|_| rng.random::<f64>()).collect()).unwrap();
        let model = EnergyModel::potts(grid_graph(h, w), unary, beta).unwrap();
        let init: Labeling = (0..h * w).map(|_| rng.random_range(0..m)).collect();
        let e0 = total_energy(&model, &init);
        prop_assert!(icm_detailed(&model, &init).unwrap().energy <= e0 + 1e-12);
        let out = alpha_expansion_from(&model, &init, 15).unwrap();
        prop_assert!(total_energy(&model, &out.labeling) <= e0 + 1e-12);
    }

    #[test]
    fn max_flow_ignores_arc_order(seed in 0u64..10_000, n in 1usize..10) {
        let mut rng = seeded_rng(seed);
        let mut arcs = Vec::new();
        for _ in 0..3 * n {
            let u = rng.random_range(0..n + 2);
            let v = rng.random_range(0..n + 2);
            if u != v {
                arcs.push((u, v, rng.random_range(0.0..5.0)));
            }
        }
        let build = |arcs: &[(usize, usize, f64)]| {
            let mut net = FlowNetwork::new(n);
            let (s, t) = (net.source(), net.sink());
            for &(u, v, c) in arcs {
                let map = |x: usize| if x == n { s } else if x == n + 1 { t } else { x };
                net.add_arc(map(u), map(v), c).unwrap();
            }
            max_flow(&net).flow
        };
        let forward = build(&arcs);
        arcs.reverse();
        let k = arcs.len() / 2;
        arcs.rotate_left(k);
        prop_assert!((forward - build(&arcs)).abs() < 1e-9 * (1.0 + forward));
    }

    #[test]
    fn bp_node_beliefs_are_edge_marginals(seed in 0u64..10_000, n in 2usize..8, m in 2usize..4) {
        let model = random_model(seed, random_graph(seed, n, 0.5), m);
        let cfg = BpConfig { mode: BpMode::SumProduct, max_iters: 2000, damping: 0.5, tol: 1e-13 };
        let out = loopy_bp(&model, &cfg).unwrap();
        prop_assume!(out.converged);
        for (e, &(i, j)) in model.graph().edges().iter().enumerate() {
            let table = out.marginals.edge_belief(e);
            for a in 0..m {
                let row: f64 = (0..m).map(|b| table[a * m + b]).sum();
                let col: f64 = (0..m).map(|b| table[b * m + a]).sum();
                prop_assert!((row - out.marginals.node_belief(i)[a]).abs() < 1e-8);
                prop_assert!((col - out.marginals.node_belief(j)[a]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn crf_potts_pattern_reproduces_the_mrf(seed in 0u64..10_000, beta in 0.0f64..4.0) {
        let mut rng = seeded_rng(seed);
        let (h, w, m) = (rng.random_range(1..6), rng.random_range(1..6), rng.random_range(2..5));
        let energies: Vec<f64> = (0..h * w * m).map(|_| rng.random_range(0.0..3.0)).collect();
        // unary features are the negated energies, so identity weights give back the energies
        let features: Vec<f64> = energies.iter().map(|e| -e).collect();
        let inst = CrfInstance::new(grid_graph(h, w), features, m).unwrap();
        let crf = crf_energy_model(&CrfModel::potts(m, beta), &inst).unwrap();
        let mrf = EnergyModel::potts(grid_graph(h, w), UnaryTable::new(h * w, m, energies).unwrap(), beta).unwrap();
        for method in [MapMethod::Icm, MapMethod::AlphaExpansion, MapMethod::MaxMarginals] {
            let (a, ra) = map_infer(&crf, method, &MapOptions::default()).unwrap();
            let (b, rb) = map_infer(&mrf, method, &MapOptions::default()).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((ra.energy - rb.energy).abs() < 1e-9 * (1.0 + rb.energy.abs()));
        }
    }

    #[test]
    fn slic_partitions_and_adjacency_is_simple(seed in 0u64..1000, k in 1usize..40) {
        let spec = SceneSpec::random_blocks(16, 14, (3, 3), 3, 4, 0.3, seed);
        let (cube, _) = synth_scene(&spec, seed).unwrap();
        let seg = slic(&cube, &SlicParams::new(k)).unwrap();
        prop_assert_eq!(seg.sizes().iter().sum::<usize>(), 16 * 14);
        prop_assert!(seg.sizes().iter().all(|&s| s > 0));
        let g = adjacency(&seg);
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in g.edges() {
            prop_assert!(a < b);
            prop_assert!(seen.insert((a, b)));
        }
    }

    #[test]
    fn kappa_identity_and_self_agreement(seed in 0u64..10_000, m in 2usize..6) {
        let mut rng = seeded_rng(seed);
        let n = 40;
        let truth = LabelMap::new(n, 1, (0..n).map(|_| rng.random_range(1..=m as u32)).collect()).unwrap();
        let pred = LabelMap::new(n, 1, (0..n).map(|_| rng.random_range(1..=m as u32)).collect()).unwrap();
        let test: Vec<Sample> = (0..n).map(|p| Sample { pixel: p, class: truth.get(p) }).collect();
        let cm = confusion(&pred, &truth, &test).unwrap();
        let r = metrics(&cm).unwrap();
        let total = n as f64;
        let pe: f64 = (0..m).map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64).sum::<f64>() / (total * total);
        if pe < 1.0 {
            prop_assert!((r.kappa - (r.overall_accuracy - pe) / (1.0 - pe)).abs() < 1e-12);
        }
        let own = metrics(&confusion(&truth, &truth, &test).unwrap()).unwrap();
        prop_assert_eq!(own.overall_accuracy, 1.0);
        prop_assert_eq!(own.kappa, 1.0);
        prop_assert_eq!(own.avg_recall, 1.0);
    }
}

#[test]
fn trained_lr_gradient_is_small() {
    let scene = small_scene(3);
    let split = sample_split(&scene.truth, 8, 1, 3).unwrap();
    let features = hsi_ugm::features::standardize(&scene.cube);
    let fit = train_lr_with(&features, &split.train, 3, 1.0, LR_DEFAULTS).unwrap();
    assert!(fit.trace.converged || fit.trace.iterations == LR_DEFAULTS.max_iters);
    if fit.trace.converged {
        assert!(fit.trace.gradient_norm < 1e-6);
    }
}

#[test]
fn crf_training_history_never_increases() {
    let scene = small_scene(5);
    let split = sample_split(&scene.truth, 6, 1, 5).unwrap();
    let features = hsi_ugm::features::standardize(&scene.cube);
    let lr = train_lr_with(&features, &split.train, 3, 1.0, LR_DEFAULTS).unwrap().model;
    let probs = predict_proba(&lr, &features).unwrap();
    let inst = CrfInstance::from_probabilities(grid_graph(20, 20), &probs).unwrap();
    let mut observed = vec![None; 400];
    for s in &split.train {
        observed[s.pixel] = Some(s.class as usize - 1);
    }
    for objective in [CrfObjectiveKind::MleBp, CrfObjectiveKind::PseudoLikelihood] {
        let cfg = CrfTrainConfig { objective, max_iters: 15, engine: MarginalEngine::default(), ..CrfTrainConfig::default() };
        let fit = train_crf(&[CrfData::new(inst.clone(), observed.clone()).unwrap()], 3, &cfg).unwrap();
        for pair in fit.trace.history.windows(2) {
            assert!(pair[1] <= pair[0], "{objective:?}: {pair:?}");
        }
        assert!(fit.trace.objective.is_finite());
    }
}

#[test]
fn identity_superpixels_match_grid_mrf_through_the_pipeline() {
    let scene = small_scene(7);
    let split = sample_split(&scene.truth, 5, 1, 7).unwrap();
    let features = hsi_ugm::features::standardize(&scene.cube);
    let lr = train_lr_with(&features, &split.train, 3, 1.0, LR_DEFAULTS).unwrap().model;
    let probs = predict_proba(&lr, &features).unwrap();
    let grid = EnergyModel::potts(grid_graph(20, 20), unary_from_proba(&probs, 1e-12).unwrap(), 0.7).unwrap();
    let seg = hsi_ugm::SuperpixelSegmentation::identity(20, 20);
    let sp = EnergyModel::potts(
        adjacency(&seg),
        hsi_ugm::superpixels::aggregate_unary(&probs, &seg, 1e-12).unwrap(),
        0.7,
    )
    .unwrap();
    assert_eq!(alpha_expansion(&grid, 15).unwrap(), alpha_expansion(&sp, 15).unwrap());
}

#[test]
fn run_trials_is_reproducible() {
    let scene = small_scene(9);
    let mut cfg = ExperimentConfig::new(6);
    cfg.n_test_per_class = 5;
    cfg.n_trials = 3;
    cfg.classifier = ClassifierKind::Lr { lambda: Choice::Fixed(1.0) };
    cfg.smoother = Smoother::MrfGrid;
    let a = run_trials(&scene, &cfg).unwrap();
    let b = run_trials(&scene, &cfg).unwrap();
    assert_eq!(a.summary.oa, b.summary.oa);
    for (x, y) in a.trials.iter().zip(&b.trials) {
        let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
        assert_eq!(x.prediction, y.prediction);
        assert_eq!(x.report, y.report);
    }
}
