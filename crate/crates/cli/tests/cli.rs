use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hsi_ugm::data::{load_split, save_labels, synth_scene, SceneSpec};
use hsi_ugm::energy::{grid_graph, EnergyModel};
use hsi_ugm::evaluation::{classify, ClassifierKind, Choice, Scores};
use hsi_ugm::inference::{map_infer, MapMethod, MapOptions};
use hsi_ugm::superpixels::{adjacency, load_segmentation, project_labels, slic, SlicParams};
use hsi_ugm::LabelMap;

const SUBCOMMANDS: [&str; 9] = [
    "features", "classify", "smooth", "superpixel", "crf", "eval", "bench", "render", "synth",
];

fn ugm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ugm"))
        .args(args)
        .current_dir(dir)
        .env_remove("UGM_THREADS")
        .output()
        .expect("spawn ugm")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ugm(dir, args);
    assert!(
        out.status.success(),
        "ugm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    ugm(dir, args).status.code().expect("exit code")
}

/// A 24×24 synthetic scene written to `dir` as s.hdr / t.pgm.
fn scene(dir: &Path) -> (PathBuf, PathBuf) {
    ok(
        dir,
        &[
            "synth", "--height", "24", "--width", "24", "--grid", "4x4", "--classes", "3", "--bands", "5", "--sigma",
            "0.4", "--seed", "11", "--cube", "s.hdr", "--labels", "t.pgm",
        ],
    );
    (dir.join("s.hdr"), dir.join("t.pgm"))
}

#[test]
fn help_exits_zero_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    for flag in ["--help", "-h"] {
        assert_eq!(code(dir.path(), &[flag]), 0);
        for sub in SUBCOMMANDS {
            let out = ugm(dir.path(), &[sub, flag]);
            assert_eq!(out.status.code(), Some(0), "{sub} {flag}");
            assert!(String::from_utf8_lossy(&out.stdout).contains("Usage: ugm"));
        }
    }
    for sub in SUBCOMMANDS {
        assert_eq!(code(dir.path(), &["help", sub]), 0);
    }
    let long = ok(dir.path(), &["--help"]);
    assert!(long.contains("UGM_THREADS") && long.contains("EXIT STATUS"));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(dir.path(), &[]), 1);
    assert_eq!(code(dir.path(), &["frobnicate"]), 1);
    assert_eq!(code(dir.path(), &["smooth", "--scores", "p.hdr", "--out", "m.pgm", "--bogus"]), 1);
    assert_eq!(code(dir.path(), &["smooth", "--scores", "p.hdr", "--out", "m.pgm", "--method", "annealing"]), 1);
    assert_eq!(code(dir.path(), &["synth", "--cube", "a.hdr", "--labels", "b.pgm", "--grid", "3"]), 1);
    let out = Command::new(env!("CARGO_BIN_EXE_ugm"))
        .args(["synth", "--cube", "a.hdr", "--labels", "b.pgm"])
        .current_dir(dir.path())
        .env("UGM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["smooth", "--scores", "missing.hdr", "--out", "m.pgm"]), 2);
    let (cube, _) = scene(d);
    // truncate the raw block
    let raw = cube.with_extension("raw");
    let bytes = std::fs::read(&raw).unwrap();
    std::fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
    let out = ugm(d, &["features", "--cube", "s.hdr", "--out", "f.hdr", "--method", "pca"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected"));
    std::fs::write(d.join("bad.csv"), "1,1,2,3\n2,1,2,3\n").unwrap();
    std::fs::write(d.join("m.pgm"), b"P5\n2 1\n255\n\x01\x02").unwrap();
    assert_eq!(code(d, &["render", "m.pgm", "bad.csv", "o.ppm"]), 2);
}

#[test]
fn synth_is_seeded() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    scene(a.path());
    scene(b.path());
    for f in ["s.hdr", "s.raw", "t.pgm"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn classify_then_smooth_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(
        d,
        &[
            "classify", "--features", "s.hdr", "--labels", "t.pgm", "--n-train", "8", "--n-test", "10", "--seed", "3",
            "--lambda", "0.5", "--split-out", "split.csv", "--out", "p.hdr",
        ],
    );
    ok(d, &["smooth", "--scores", "p.hdr", "--method", "alpha-expansion", "--beta", "1", "--cycles", "15", "--out", "m.pgm"]);

    let spec = SceneSpec::random_blocks(24, 24, (4, 4), 3, 5, 0.4, 11);
    let (cube, truth) = synth_scene(&spec, 11).unwrap();
    let split = hsi_ugm::data::sample_split(&truth, 8, 10, 3).unwrap();
    assert_eq!(load_split(d.join("split.csv"), None).unwrap(), split);
    // the file holds f32 samples, so go through the file for the cube
    let stored = hsi_ugm::data::load_cube(d.join("s.hdr")).unwrap();
    assert_eq!(stored.values().len(), cube.values().len());
    let kind = ClassifierKind::Lr { lambda: Choice::Fixed(0.5) };
    let scores = classify(&stored, &split.train, 3, &kind, 0.5).unwrap();
    let Scores::Proba(from_file) = Scores::load(d.join("p.hdr")).unwrap() else {
        panic!("expected a probability field");
    };
    let Scores::Proba(in_process) = &scores else { unreachable!() };
    assert_eq!(&from_file, in_process);

    let model = EnergyModel::potts(grid_graph(24, 24), scores.unary(1e-12).unwrap(), 1.0).unwrap();
    let opts = MapOptions { max_cycles: 15, ..MapOptions::default() };
    let (y, _) = map_infer(&model, MapMethod::AlphaExpansion, &opts).unwrap();
    let map = LabelMap::new(24, 24, y.iter().map(|&c| c as u32 + 1).collect()).unwrap();
    save_labels(&map, d.join("expected.pgm")).unwrap();
    assert_eq!(std::fs::read(d.join("m.pgm")).unwrap(), std::fs::read(d.join("expected.pgm")).unwrap());
}

#[test]
fn superpixel_smoothing_matches_in_process_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(d, &["classify", "--features", "s.hdr", "--labels", "t.pgm", "--n-train", "6", "--classifier", "sam", "--out", "a.hdr"]);
    ok(d, &["superpixel", "--cube", "s.hdr", "--count", "30", "--regularizer", "10", "--out", "seg.hdr"]);
    ok(d, &["smooth", "--scores", "a.hdr", "--segmentation", "seg.hdr", "--beta", "0.1", "--method", "icm", "--out", "m.pgm"]);

    let cube = hsi_ugm::data::load_cube(d.join("s.hdr")).unwrap();
    let mut params = SlicParams::new(30);
    params.regularizer = 10.0;
    let seg = slic(&cube, &params).unwrap();
    assert_eq!(load_segmentation(d.join("seg.hdr")).unwrap(), seg);
    let scores = Scores::load(d.join("a.hdr")).unwrap();
    assert!(matches!(scores, Scores::Angles(_)));
    let model = EnergyModel::potts(adjacency(&seg), scores.superpixel_unary(&seg, 1e-12).unwrap(), 0.1).unwrap();
    let (y, _) = map_infer(&model, MapMethod::Icm, &MapOptions::default()).unwrap();
    save_labels(&project_labels(&seg, &y).unwrap(), d.join("expected.pgm")).unwrap();
    assert_eq!(std::fs::read(d.join("m.pgm")).unwrap(), std::fs::read(d.join("expected.pgm")).unwrap());
}

#[test]
fn crf_model_round_trip_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(d, &["classify", "--features", "s.hdr", "--labels", "t.pgm", "--n-train", "6", "--split-out", "sp.csv", "--out", "p.hdr"]);
    ok(d, &["crf", "--scores", "p.hdr", "--split", "sp.csv", "--objective", "pl", "--model-out", "c.hdr", "--out", "a.pgm"]);
    ok(d, &["crf", "--scores", "p.hdr", "--model", "c.hdr", "--out", "b.pgm"]);
    assert_eq!(std::fs::read(d.join("a.pgm")).unwrap(), std::fs::read(d.join("b.pgm")).unwrap());
    let report = ok(d, &["eval", "--pred", "a.pgm", "--labels", "t.pgm", "--split", "sp.csv"]);
    assert!(report.contains("pixels     150"), "{report}");
    let oa: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("OA"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&oa));
    // the truth scored against itself
    let own = ok(d, &["eval", "--pred", "t.pgm", "--labels", "t.pgm", "--split", "sp.csv", "--role", "all"]);
    assert!(own.contains("OA         1.0000") && own.contains("kappa      1.0000"));
}

#[test]
fn bench_writes_summary_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    std::fs::write(
        d.join("exp.txt"),
        "# two quick trials\nn_train=5\nn_test=8\nn_trials=2\nlambda=1\nbeta=tuned\ncube=s.hdr\nlabels=t.pgm\nsummary=summary.csv\n",
    )
    .unwrap();
    ok(d, &["bench", "--config", "exp.txt", "--results", "results.csv"]);
    let summary = std::fs::read_to_string(d.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("method,n_train,trials,completed,OA_best,OA_mean,OA_sd"));
    assert!(lines[1].starts_with("spectra-LR-MRF,5,2,2,"));
    let results = std::fs::read_to_string(d.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.starts_with("method,n_train,trial,OA,kappa,avgP,avgR,avgF1,wall_ms"));

    // same seed, same numbers (timings aside)
    ok(d, &["bench", "--config", "exp.txt", "--summary", "again.csv"]);
    let oa = |s: &str| s.lines().nth(1).unwrap().split(',').take(10).collect::<Vec<_>>().join(",");
    assert_eq!(oa(&summary), oa(&std::fs::read_to_string(d.join("again.csv")).unwrap()));

    std::fs::write(d.join("bad.txt"), "n_train=5\nsmoother=mystery\ncube=s.hdr\nlabels=t.pgm\n").unwrap();
    assert_eq!(code(d, &["bench", "--config", "bad.txt"]), 2);
}

#[test]
fn render_uses_palette_colors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    save_labels(&LabelMap::new(2, 2, vec![0, 1, 2, 1]).unwrap(), d.join("m.pgm")).unwrap();
    std::fs::write(d.join("pal.csv"), "class,r,g,b\n1,255,0,0\n2,0,128,255\n").unwrap();
    ok(d, &["render", "m.pgm", "pal.csv", "o.ppm"]);
    let ppm = std::fs::read(d.join("o.ppm")).unwrap();
    let body = b"P6\n2 2\n255\n".len();
    assert!(ppm.starts_with(b"P6\n2 2\n255\n"));
    assert_eq!(&ppm[body..], &[0, 0, 0, 255, 0, 0, 0, 128, 255, 255, 0, 0]);
    ok(d, &["render", "m.pgm", "auto", "auto.ppm", "--scale", "3"]);
    assert!(std::fs::read(d.join("auto.ppm")).unwrap().starts_with(b"P6\n6 6\n255\n"));
    // label 2 missing from the palette
    std::fs::write(d.join("short.csv"), "1,255,0,0\n").unwrap();
    assert_eq!(code(d, &["render", "m.pgm", "short.csv", "x.ppm"]), 2);
}

#[test]
fn features_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    scene(d);
    ok(d, &["features", "--cube", "s.hdr", "--out", "pc.hdr", "--method", "pca", "--variance", "1.0"]);
    let pcs = hsi_ugm::data::load_cube(d.join("pc.hdr")).unwrap().channels();
    ok(d, &["features", "--cube", "s.hdr", "--out", "e.hdr", "--variance", "1.0", "--levels", "2"]);
    assert_eq!(hsi_ugm::data::load_cube(d.join("e.hdr")).unwrap().channels(), pcs * 5);
    ok(d, &["features", "--cube", "s.hdr", "--out", "z.hdr", "--method", "standardize"]);
    assert_eq!(hsi_ugm::data::load_cube(d.join("z.hdr")).unwrap().channels(), 5);
}
