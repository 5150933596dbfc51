use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pats::desc;
use pats::matches::read_matches;
use pats_core::{build_patch_grid, describe_patches, DescriptorBackend, EvalReport, ImportedPatches};

fn pats(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pats"))
        .args(args)
        .env("PATS_THREADS", threads)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: &str, size: &str, warp: &str) {
    let out = pats(&["synth", "--seed", seed, "--size", size, "--warp", warp, "--out", s(dir)], "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn no_arguments_prints_usage() {
    let out = pats(&[], "1");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = pats(&["eval", "--nope"], "1");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.pgm");
    let out = pats(
        &["match", "--src", s(&missing), "--dst", s(&missing), "--out", s(&dir.path().join("m.jsonl"))],
        "1",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.pgm"));
}

#[test]
fn synth_match_eval_on_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "5", "128", "identity");
    let sidecar = fs::read_to_string(d.join("warp.json")).unwrap();
    assert!(sidecar.contains("\"warp_kind\": \"identity\""));

    let matches = d.join("m.jsonl");
    let out = pats(
        &["match", "--src", s(&d.join("source.pgm")), "--dst", s(&d.join("target.pgm")), "--out", s(&matches)],
        "0",
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_path = d.join("report.json");
    let out = pats(
        &["eval", "--matches", s(&matches), "--warp", s(&d.join("warp.json")), "--out", s(&report_path)],
        "1",
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: EvalReport = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report.precision >= 0.95, "{report:?}");
    assert_eq!(report.match_count, read_matches(&matches).unwrap().len());

    let svg = d.join("overlay.svg");
    let out = pats(
        &[
            "export-vis",
            "--matches",
            s(&matches),
            "--src",
            s(&d.join("source.pgm")),
            "--dst",
            s(&d.join("target.pgm")),
            "--out",
            s(&svg),
        ],
        "1",
    );
    assert!(out.status.success());
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<line").count(), report.match_count);
}

#[test]
fn hundred_matches_sorted_by_source() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "6", "80", "identity");
    let config = d.join("two_levels.json");
    fs::write(
        &config,
        r#"{"hierarchy": {"levels": [{"patch_size": 16, "expansion": 2}, {"patch_size": 8, "expansion": null}]}}"#,
    )
    .unwrap();
    let matches = d.join("m.jsonl");
    let out = pats(
        &[
            "match",
            "--src",
            s(&d.join("source.pgm")),
            "--dst",
            s(&d.join("target.pgm")),
            "--config",
            s(&config),
            "--out",
            s(&matches),
        ],
        "2",
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&matches).unwrap();
    assert_eq!(text.lines().count(), 100);
    let recs = read_matches(&matches).unwrap();
    let key = |r: &pats::matches::MatchRecord| ((r.src[1] / 8.0) as usize, (r.src[0] / 8.0) as usize);
    assert!(recs.windows(2).all(|w| key(&w[0]) < key(&w[1])));
    assert!(recs.iter().all(|r| r.level == 2));
}

fn export(image: &Path, out: &Path, patch_size: usize) {
    let img = pats::pnm::read_image(image).unwrap();
    let grid = build_patch_grid(&img, patch_size).unwrap();
    let described = describe_patches(&img, &grid, &DescriptorBackend::default()).unwrap();
    let patches = ImportedPatches {
        patch_size,
        dim: described.dim(),
        positions: described.positions().to_vec(),
        areas: vec![1.0; grid.len()],
        descriptors: described.descriptors().to_vec(),
    };
    desc::write_desc(&patches, out).unwrap();
}

#[test]
fn descriptor_files_drive_the_coarse_level() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "7", "128", "identity");
    let (src, dst) = (d.join("source.pgm"), d.join("target.pgm"));
    export(&src, &d.join("s.desc"), 32);
    export(&dst, &d.join("t.desc"), 32);
    let matches = d.join("m.jsonl");
    let out = pats(
        &[
            "match",
            "--src",
            s(&src),
            "--dst",
            s(&dst),
            "--desc-src",
            s(&d.join("s.desc")),
            "--desc-dst",
            s(&d.join("t.desc")),
            "--out",
            s(&matches),
        ],
        "1",
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!read_matches(&matches).unwrap().is_empty());

    // A descriptor file for the wrong grid size.
    export(&src, &d.join("wrong.desc"), 16);
    let out = pats(
        &[
            "match",
            "--src",
            s(&src),
            "--dst",
            s(&dst),
            "--desc-src",
            s(&d.join("wrong.desc")),
            "--desc-dst",
            s(&d.join("t.desc")),
            "--out",
            s(&matches),
        ],
        "1",
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrong.desc"));
}

#[test]
fn ground_truth_areas_need_a_warp() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "8", "64", "scale:2");
    let config = d.join("gt.json");
    fs::write(&config, r#"{"area_backend": "ground_truth"}"#).unwrap();
    let (src, dst) = (d.join("source.pgm"), d.join("target.pgm"));
    let base = [
        "match",
        "--src",
        s(&src),
        "--dst",
        s(&dst),
        "--config",
        s(&config),
        "--out",
    ];
    let matches = d.join("m.jsonl");
    let mut args = base.to_vec();
    args.push(s(&matches));
    let out = pats(&args, "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gt.json"));

    let warp = d.join("warp.json");
    args.extend(["--warp", s(&warp)]);
    let out = pats(&args, "1");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
