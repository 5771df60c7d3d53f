use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lumiparam::io::{read_image, write_image};
use lumiparam::params::{validate_report_value, ParamFile};
use lumiparam::sphere::GridGeometry;
use lumiparam::EquirectImage;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lumiparam"));
    c.env_remove("LUMIPARAM_JOBS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn panorama(seed: usize) -> EquirectImage {
    let geom = GridGeometry::new(64, 32).unwrap();
    EquirectImage::from_fn(geom, |x, y| {
        let spot = if (x + 7 * seed) % 64 < 3 && (10..13).contains(&y) { 30.0 } else { 0.0 };
        [0.2 + spot + 0.01 * x as f64, 0.3 + 0.005 * y as f64, 0.25 + spot * 0.5]
    })
    .unwrap()
}

fn write_pano(dir: &Path, name: &str, seed: usize) -> PathBuf {
    let p = dir.join(name);
    write_image(&p, &panorama(seed)).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decompose_writes_default_budget() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_pano(dir.path(), "pano.hdr", 0);
    let out = dir.path().join("pano.mixlight.json");
    let o = run(&["decompose", s(&input), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = ParamFile::read(&out).unwrap();
    assert_eq!(f.sh.coeffs.iter().map(Vec::len).sum::<usize>(), 27);
    assert_eq!(f.sg.p.len(), 128);
    assert_eq!(f.meta.width, Some(64));
    assert_eq!(f.meta.source.as_deref(), Some("pano.hdr"));
}

#[test]
fn directory_with_corrupt_file_reports_one_failure() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("in");
    std::fs::create_dir(&inputs).unwrap();
    for i in 0..3 {
        write_pano(&inputs, &format!("p{i}.pfm"), i);
    }
    let bad = write_pano(&inputs, "bad.hdr", 9);
    let bytes = std::fs::read(&bad).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() / 2]).unwrap();
    let outdir = dir.path().join("out");
    let o = run(&["decompose", s(&inputs), "-o", s(&outdir)]);
    assert_eq!(o.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert_eq!(stderr.lines().filter(|l| l.starts_with("error:")).count(), 1, "{stderr}");
    assert!(stderr.contains("bad.hdr"));
    let mut written: Vec<_> = std::fs::read_dir(&outdir).unwrap().map(|e| e.unwrap().file_name()).collect();
    written.sort();
    assert_eq!(written, ["p0.mixlight.json", "p1.mixlight.json", "p2.mixlight.json"]);
}

#[test]
fn empty_input_list_is_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().arg("decompose").current_dir(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no input"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn output_is_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = dir.path().join("in");
    std::fs::create_dir(&inputs).unwrap();
    for i in 0..4 {
        write_pano(&inputs, &format!("p{i}.hdr"), i);
    }
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["--jobs", "1", "decompose", s(&inputs), "-o", s(&a)]).status.success());
    let o = bin().env("LUMIPARAM_JOBS", "3").args(["decompose", s(&inputs), "-o", s(&b)]).output().unwrap();
    assert!(o.status.success());
    for i in 0..4 {
        let name = format!("p{i}.mixlight.json");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
}

#[test]
fn reconstruct_with_preview_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_pano(dir.path(), "pano.pfm", 1);
    let params = dir.path().join("p.json");
    assert!(run(&["decompose", s(&input), "-o", s(&params), "--sparsify"]).status.success());
    let f = ParamFile::read(&params).unwrap();
    assert!(f.meta.sparsified && f.meta.kappa.is_some());
    let out1 = dir.path().join("r1.hdr");
    let out2 = dir.path().join("r2.hdr");
    assert!(run(&["reconstruct", s(&params), "-o", s(&out1), "--preview"]).status.success());
    assert!(run(&["reconstruct", s(&params), "-o", s(&out2)]).status.success());
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
    let png = std::fs::read(dir.path().join("r1.png")).unwrap();
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    let img = read_image(&out1).unwrap();
    assert_eq!((img.width(), img.height()), (64, 32));
}

fn zero_file(dir: &Path) -> PathBuf {
    let input = write_pano(dir, "zero.hdr", 0);
    write_image(&input, &EquirectImage::zeros(GridGeometry::new(32, 16).unwrap())).unwrap();
    let params = dir.join("zero.json");
    assert!(run(&["decompose", s(&input), "-o", s(&params)]).status.success());
    params
}

#[test]
fn zero_parameters_reconstruct_black() {
    let dir = tempfile::tempdir().unwrap();
    let params = zero_file(dir.path());
    let out = dir.path().join("z.pfm");
    assert!(run(&["reconstruct", s(&params), "-o", s(&out), "--width", "40", "--height", "20"]).status.success());
    let img = read_image(&out).unwrap();
    assert_eq!(img.width(), 40);
    assert!(img.pixels().iter().all(|p| *p == [0.0; 3]));
}

#[test]
fn schema_violation_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let params = zero_file(dir.path());
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    doc["sg"]["r"] = serde_json::json!([1.0, 0.0]);
    std::fs::write(&params, doc.to_string()).unwrap();
    let o = run(&["reconstruct", s(&params), "-o", s(&dir.path().join("x.hdr"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/sg/r"));
}

#[test]
fn sparsify_uniform_is_fixed_point_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_pano(dir.path(), "pano.hdr", 2);
    let params = dir.path().join("p.json");
    assert!(run(&["decompose", s(&input), "-o", s(&params)]).status.success());
    let mut f = ParamFile::read(&params).unwrap();
    f.sg.p = vec![1.0 / 128.0; 128];
    f.write(&params).unwrap();
    let once = dir.path().join("once.json");
    let twice = dir.path().join("twice.json");
    assert!(run(&["sparsify", s(&params), "-o", s(&once)]).status.success());
    assert!(run(&["sparsify", s(&once), "-o", s(&twice)]).status.success());
    let a = ParamFile::read(&once).unwrap();
    let b = ParamFile::read(&twice).unwrap();
    assert_eq!(a.sg.p, f.sg.p);
    assert_eq!(a.meta.kappa, Some(128));
    for (x, y) in a.sg.p.iter().zip(&b.sg.p) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn eval_identical_maps_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_pano(dir.path(), "gt.pfm", 3);
    let report = dir.path().join("report.json");
    let o = run(&["eval", s(&gt), s(&gt), "-o", s(&report), "--render", "diffuse,mirror", "--render-size", "24"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("rmse_full"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    validate_report_value(&doc).unwrap();
    for key in ["rmse_full", "si_rmse_full", "rmse_diffuse", "rmse_mirror", "loss_l2_p"] {
        assert_eq!(doc[key].as_f64(), Some(0.0), "{key}");
    }
    for side in ["pred", "gt"] {
        for kind in ["diffuse", "mirror"] {
            let png = std::fs::read(dir.path().join(format!("{side}_{kind}.png"))).unwrap();
            assert_eq!(&png[1..4], b"PNG");
        }
    }
}

#[test]
fn eval_accepts_parameter_file_and_rejects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write_pano(dir.path(), "gt.hdr", 4);
    let params = dir.path().join("p.json");
    assert!(run(&["decompose", s(&gt), "-o", s(&params), "--mode", "paper-literal"]).status.success());
    assert_eq!(ParamFile::read(&params).unwrap().meta.mode.as_str(), "paper-literal");
    let o = run(&["eval", s(&params), s(&gt)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let small = dir.path().join("small.pfm");
    write_image(&small, &EquirectImage::zeros(GridGeometry::new(8, 4).unwrap())).unwrap();
    let o = run(&["eval", s(&small), s(&gt)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_pano(dir.path(), "pano.hdr", 5);
    let cfg = dir.path().join("codec.toml");
    std::fs::write(&cfg, "order = 3\nanchors = 32\nknn = 4\n").unwrap();
    let out = dir.path().join("p.json");
    let o = run(&["decompose", s(&input), "-o", s(&out), "--config", s(&cfg), "--anchors", "64"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let f = ParamFile::read(&out).unwrap();
    assert_eq!(f.sh.order, 3);
    assert_eq!(f.sg.n, 64);
    assert_eq!(f.anchors.k_nn, 4);

    let json = dir.path().join("codec.json");
    std::fs::write(&json, r#"{"percentile": 0.1, "bogus": 1}"#).unwrap();
    assert_eq!(run(&["decompose", s(&input), "-o", s(&out), "--config", s(&json)]).status.code(), Some(1));
}

#[test]
fn info_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_pano(dir.path(), "pano.hdr", 6);
    let o = run(&["info", s(&input)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("64x32"));
    let params = dir.path().join("p.json");
    assert!(run(&["decompose", s(&input), "-o", s(&params)]).status.success());
    let o = run(&["info", s(&params)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("159"));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["decompose", "--mode", "bogus", s(&input)]).status.code(), Some(2));
}
