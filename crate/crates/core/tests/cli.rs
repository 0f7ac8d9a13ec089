use std::path::Path;

use segunc::cli::{run_command, EXIT_DATA, EXIT_OK, EXIT_UNDEFINED, EXIT_USAGE};
use segunc::io::{read_class_map, read_prob_stack, write_tensor, Pgm, Tensor};
use segunc::tensor::{ClassMap, ScalarMap};

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_command(std::iter::once("segunc").chain(args.iter().copied()), &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

const NOISY: &str = r#"
seed = 3
height = 24
width = 20
classes = 3
samples = 8

[[region]]
shape = "rect"
top = 0
left = 0
height = 12
width = 12
class = 1
flip_rate = 0.6

[[region]]
shape = "disk"
row = 16
col = 12
radius = 5
class = 2
softness = 0.9
"#;

const CLEAN: &str = r#"
seed = 3
height = 16
width = 16
classes = 3
samples = 4

[[region]]
shape = "rect"
top = 4
left = 4
height = 8
width = 8
class = 2
"#;

fn synth(dir: &Path, config: &str) {
    std::fs::write(dir.join("scene.toml"), config).unwrap();
    let r = run(&["synth", "--config", &path(dir, "scene.toml"), "--out-dir", &path(dir, "data")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
}

#[test]
fn help_and_usage_errors() {
    let help = run(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.out.contains("patch-eval"));
    assert_eq!(run(&[]).code, EXIT_USAGE);
    assert_eq!(run(&["sweep", "--bogus"]).code, EXIT_USAGE);
    let bad_th = run(&["patch-eval", "--gt", "g", "--stack", "s", "--u-th", "t=1.5"]);
    assert_eq!(bad_th.code, EXIT_USAGE);
    assert!(bad_th.err.contains("u-th"), "{}", bad_th.err);
    let zero_window = run(&["patch-eval", "--gt", "g", "--stack", "s", "--window", "0"]);
    assert_eq!(zero_window.code, EXIT_USAGE, "{}", zero_window.err);
}

#[test]
fn missing_or_malformed_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&["calib", "--stack", &path(dir.path(), "nope.uet"), "--gt", &path(dir.path(), "nope.uet")]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("nope.uet"));
    std::fs::write(dir.path().join("junk.uet"), b"XXXX\x03\x01\x01\x00\x00\x00").unwrap();
    let r = run(&["uncert", "--stack", &path(dir.path(), "junk.uet"), "--out-dir", &path(dir.path(), "o")]);
    assert_eq!(r.code, EXIT_DATA);
    assert!(r.err.contains("magic"), "{}", r.err);
}

#[test]
fn synth_writes_readable_tensors() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), NOISY);
    let gt = read_class_map(dir.path().join("data/gt.uet"), Some(3), None).unwrap();
    let stack = read_prob_stack(dir.path().join("data/stack.uet")).unwrap();
    assert_eq!(gt.dims(), (24, 20));
    assert_eq!((stack.samples(), stack.class_count()), (8, 3));

    let reseeded = run(&[
        "synth",
        "--config",
        &path(dir.path(), "scene.toml"),
        "--seed",
        "4",
        "--out-dir",
        &path(dir.path(), "other"),
        "--format",
        "json",
    ]);
    assert_eq!(reseeded.code, EXIT_OK);
    let summary: serde_json::Value = serde_json::from_str(&reseeded.out).unwrap();
    assert_eq!(summary["seed"], 4);
}

#[test]
fn segscore_on_perfect_prediction() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), NOISY);
    let gt = path(dir.path(), "data/gt.uet");
    let r = run(&["segscore", "--pred", &gt, "--gt", &gt]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(r.out.matches("100.00").count(), 3, "{}", r.out);
}

#[test]
fn uncert_writes_both_maps() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), NOISY);
    let r = run(&["uncert", "--stack", &path(dir.path(), "data/stack.uet"), "--out-dir", &path(dir.path(), "maps")]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(dir.path().join("maps/predictive_entropy.uet").exists());
    assert!(dir.path().join("maps/mutual_information.uet").exists());
}

#[test]
fn patch_eval_reports_and_maps() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), NOISY);
    let r = run(&[
        "patch-eval",
        "--stack",
        &path(dir.path(), "data/stack.uet"),
        "--gt",
        &path(dir.path(), "data/gt.uet"),
        "--window",
        "4",
        "--acc-th",
        "0.5",
        "--u-th",
        "mean",
        "--measure",
        "mi",
        "--out-dir",
        &path(dir.path(), "patches"),
        "--format",
        "json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let report: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    for key in ["p_accurate_given_certain", "p_uncertain_given_inaccurate", "pavpu", "tie_rule", "u_th"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let n = |k: &str| report[k].as_u64().unwrap() as usize;
    assert_eq!(n("n_ac") + n("n_au") + n("n_ic") + n("n_iu"), 6 * 5);

    let acc = Pgm::decode(&std::fs::read(dir.path().join("patches/accuracy_map_0.pgm")).unwrap()).unwrap();
    let unc = Pgm::decode(&std::fs::read(dir.path().join("patches/uncertainty_map_0.pgm")).unwrap()).unwrap();
    assert_eq!((acc.width, acc.height), (5, 6));
    assert_eq!(acc.samples.iter().filter(|&&v| v == 255).count(), n("n_ac") + n("n_au"));
    assert_eq!(unc.samples.iter().filter(|&&v| v == 255).count(), n("n_au") + n("n_iu"));

    let text =
        run(&["patch-eval", "--stack", &path(dir.path(), "data/stack.uet"), "--gt", &path(dir.path(), "data/gt.uet")]);
    assert_eq!(text.code, EXIT_OK);
    assert!(text.out.contains("PAvPU"));
}

#[test]
fn patch_eval_from_explicit_maps() {
    let dir = tempfile::tempdir().unwrap();
    let gt = ClassMap::new(4, 4, 2, None, vec![0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0]).unwrap();
    let pred = ClassMap::new(4, 4, 2, None, vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0]).unwrap();
    let umap =
        ScalarMap::new(4, 4, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
    write_tensor(&Tensor::Class(gt), dir.path().join("gt.uet"), None).unwrap();
    write_tensor(&Tensor::Class(pred), dir.path().join("pred.uet"), None).unwrap();
    write_tensor(&Tensor::Scalar(umap), dir.path().join("u.uet"), None).unwrap();
    let r = run(&[
        "patch-eval",
        "--pred",
        &path(dir.path(), "pred.uet"),
        "--gt",
        &path(dir.path(), "gt.uet"),
        "--umap",
        &path(dir.path(), "u.uet"),
        "--window",
        "2",
        "--u-th",
        "abs=0.5",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let report: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!((report["n_ac"].as_u64(), report["n_iu"].as_u64()), (Some(3), Some(1)));
    assert_eq!(report["pavpu"].as_f64(), Some(1.0));
}

#[test]
fn fully_ignored_ground_truth_is_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let gt = ClassMap::new(4, 4, 2, Some(255), vec![255; 16]).unwrap();
    let pred = ClassMap::filled(4, 4, 2, 0).unwrap();
    write_tensor(&Tensor::Class(gt), dir.path().join("gt.uet"), None).unwrap();
    write_tensor(&Tensor::Class(pred), dir.path().join("pred.uet"), None).unwrap();
    write_tensor(&Tensor::Scalar(ScalarMap::constant(4, 4, 0.3).unwrap()), dir.path().join("u.uet"), None).unwrap();
    let r = run(&[
        "patch-eval",
        "--pred",
        &path(dir.path(), "pred.uet"),
        "--gt",
        &path(dir.path(), "gt.uet"),
        "--umap",
        &path(dir.path(), "u.uet"),
        "--classes",
        "2",
        "--ignore",
        "255",
    ]);
    assert_eq!(r.code, EXIT_UNDEFINED, "{}", r.err);
    assert!(r.out.contains("undefined"));
}

#[test]
fn sweep_csv_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), NOISY);
    let r = run(&[
        "sweep",
        "--stack",
        &path(dir.path(), "data/stack.uet"),
        "--gt",
        &path(dir.path(), "data/gt.uet"),
        "--grid",
        "11",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines[0], "t,u_th,n_ac,n_au,n_ic,n_iu,p_acc_given_cert,p_unc_given_inacc,pavpu");
    assert_eq!(lines.len(), 12);
    let first: Vec<&str> = lines[1].split(',').collect();
    let last: Vec<&str> = lines[11].split(',').collect();
    assert_eq!((first[0], first[6], first[7]), ("0", "", "1"));
    assert_eq!((last[0], last[7]), ("1", "0"));
    assert_eq!(last[6], last[8]);
}

#[test]
fn sweep_on_error_free_data_has_no_inaccurate_patches() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), CLEAN);
    let r = run(&[
        "sweep",
        "--stack",
        &path(dir.path(), "data/stack.uet"),
        "--gt",
        &path(dir.path(), "data/gt.uet"),
        "--grid",
        "11",
        "--out-dir",
        &path(dir.path(), "curve"),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.is_empty());
    let csv = std::fs::read_to_string(dir.path().join("curve/sweep.csv")).unwrap();
    let last: Vec<&str> = csv.lines().last().unwrap().split(',').collect();
    assert_eq!(last[0], "1");
    assert_eq!((last[4], last[5], last[7], last[8]), ("0", "0", "", "1"));
}

#[test]
fn calib_reports_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), NOISY);
    let r = run(&[
        "calib",
        "--stack",
        &path(dir.path(), "data/stack.uet"),
        "--gt",
        &path(dir.path(), "data/gt.uet"),
        "--bins",
        "10",
        "--format",
        "json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let report: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(report["bins"], 10);
    assert_eq!(report["samples"], 24 * 20);
    let before = report["unscaled"]["nll"].as_f64().unwrap();
    let after = report["scaled"]["nll"].as_f64().unwrap();
    assert!(after <= before);
    assert_eq!(run(&["calib", "--stack", "s", "--gt", "g", "--bins", "0"]).code, EXIT_USAGE);
}
