//! CLI integration: every subcommand through `run_cli` with real files.

use warpforge::amoe::{save_params, ExpertParams, FeatureMap, RouterParams};
use warpforge::cli::run_cli;
use warpforge::imaging::Image;

fn base_image(path: &std::path::Path) {
    let mut img = Image::filled(150, 170, 1, 0.0);
    for y in 0..150 {
        for x in 0..170 {
            let v = 0.5
                + 0.2 * (x as f64 / 21.0 * std::f64::consts::TAU).sin()
                + 0.18 * (y as f64 / 27.0 * std::f64::consts::TAU).cos()
                + 0.1 * ((x + y) as f64 / 53.0 * std::f64::consts::TAU).sin();
            *img.pixel_mut(x, y, 0) = v.clamp(0.02, 0.98);
        }
    }
    img.save(path).unwrap();
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["warpforge"];
    full.extend_from_slice(args);
    run_cli(full)
}

#[test]
fn synth_then_stitch_smoke_path() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.png");
    base_image(&base);
    let pair_dir = dir.path().join("pair");
    let code = run(&[
        "synth",
        "--base",
        base.to_str().unwrap(),
        "--out-dir",
        pair_dir.to_str().unwrap(),
        "--seed",
        "9",
        "--homography-magnitude",
        "5",
        "--tps-magnitude",
        "3",
    ]);
    assert_eq!(code, 0);
    for f in ["ref.png", "tgt.png", "flow.wff1", "matches.txt"] {
        assert!(pair_dir.join(f).exists(), "missing {f}");
    }

    let pano = dir.path().join("pano.png");
    let report = dir.path().join("report.txt");
    let code = run(&[
        "stitch",
        "--ref",
        pair_dir.join("ref.png").to_str().unwrap(),
        "--tgt",
        pair_dir.join("tgt.png").to_str().unwrap(),
        "--matches",
        pair_dir.join("matches.txt").to_str().unwrap(),
        "--out",
        pano.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--max-iterations",
        "40",
    ]);
    assert_eq!(code, 0);
    assert!(pano.exists());
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.contains("[trace]"));
    assert!(text.contains("[final_metrics]"));
    assert!(text.contains("max_iterations=40"));
}

#[test]
fn stitch_rejects_three_point_matches() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.png");
    base_image(&base);
    let matches = dir.path().join("m.txt");
    std::fs::write(
        &matches,
        "ref_points=[[0,0],[10,0],[0,10]]\ntgt_points=[[0,0],[10,0],[0,10]]\n",
    )
    .unwrap();
    let code = run(&[
        "stitch",
        "--ref",
        base.to_str().unwrap(),
        "--tgt",
        base.to_str().unwrap(),
        "--matches",
        matches.to_str().unwrap(),
        "--out",
        dir.path().join("p.png").to_str().unwrap(),
        "--report",
        dir.path().join("r.txt").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["stitch", "--no-such-flag"]), 1);
}

#[test]
fn bench_csv_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let code = run(&[
        "bench",
        "--resolutions",
        "60x80,40x50",
        "--u-cells",
        "4",
        "--v-cells",
        "4",
        "--repeats",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "resolution,method,median_ms,max_intermediate_bytes,mean_flow_dev_px"
    );
    // 2 resolutions x {vanilla, ffd} x {st, mt}.
    assert_eq!(csv.lines().count(), 1 + 8);
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').count(), 5);
    }
}

#[test]
fn warp_flag_validation_and_homography_path() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.png");
    base_image(&base);
    let out = dir.path().join("w.png");
    assert_eq!(
        run(&[
            "warp",
            "--image",
            base.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
    let code = run(&[
        "warp",
        "--image",
        base.to_str().unwrap(),
        "--homography",
        "1,0,-3,0,1,0,0,0,1",
        "--out",
        out.to_str().unwrap(),
        "--mask-out",
        dir.path().join("m.png").to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.exists());
}

#[test]
fn metrics_empty_overlap_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.png");
    base_image(&img);
    let zero_mask = dir.path().join("zero.png");
    Image::filled(150, 170, 1, 0.0).save(&zero_mask).unwrap();
    let code = run(&[
        "metrics",
        "--ref",
        img.to_str().unwrap(),
        "--tgt",
        img.to_str().unwrap(),
        "--mask-ref",
        zero_mask.to_str().unwrap(),
        "--mask-tgt",
        zero_mask.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn fuse_demo_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let map_s = dir.path().join("fs.wfm1");
    let map_g = dir.path().join("fg.wfm1");
    let params = dir.path().join("params.amoe");
    FeatureMap::seeded_random(4, 5, 5, 1)
        .write_wfm1(std::fs::File::create(&map_s).unwrap())
        .unwrap();
    FeatureMap::seeded_random(4, 5, 5, 2)
        .write_wfm1(std::fs::File::create(&map_g).unwrap())
        .unwrap();
    save_params(
        &RouterParams::seeded_random(4, 3),
        &ExpertParams::seeded_random(4, 4),
        std::fs::File::create(&params).unwrap(),
    )
    .unwrap();
    let fused = dir.path().join("fused.wfm1");
    let code = run(&[
        "fuse-demo",
        "--map-s",
        map_s.to_str().unwrap(),
        "--map-g",
        map_g.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--out",
        fused.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let back = FeatureMap::read_wfm1(std::fs::File::open(&fused).unwrap()).unwrap();
    assert_eq!(back.channels, 4);
    assert_eq!(back.grid_h, 5);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.png");
    base_image(&base);
    let pair_dir = dir.path().join("pair");
    assert_eq!(
        run(&[
            "synth",
            "--base",
            base.to_str().unwrap(),
            "--out-dir",
            pair_dir.to_str().unwrap(),
            "--seed",
            "3",
            "--homography-magnitude",
            "4",
            "--tps-magnitude",
            "0",
        ]),
        0
    );
    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "seed=123\nmax_iterations=7\npyramid=2\n").unwrap();
    let report = dir.path().join("r.txt");
    let code = run(&[
        "stitch",
        "--ref",
        pair_dir.join("ref.png").to_str().unwrap(),
        "--tgt",
        pair_dir.join("tgt.png").to_str().unwrap(),
        "--matches",
        pair_dir.join("matches.txt").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "77",
        "--out",
        dir.path().join("p.png").to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&report).unwrap();
    // Flag wins over the file; untouched file keys apply.
    assert!(text.contains("seed=77"), "flag should override config file");
    assert!(text.contains("max_iterations=7"));

    let bad_cfg = dir.path().join("bad.txt");
    std::fs::write(&bad_cfg, "no_such_key=1\n").unwrap();
    let code = run(&[
        "stitch",
        "--ref",
        pair_dir.join("ref.png").to_str().unwrap(),
        "--tgt",
        pair_dir.join("tgt.png").to_str().unwrap(),
        "--matches",
        pair_dir.join("matches.txt").to_str().unwrap(),
        "--config",
        bad_cfg.to_str().unwrap(),
        "--out",
        dir.path().join("p2.png").to_str().unwrap(),
        "--report",
        dir.path().join("r2.txt").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}
