use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use g2hf::image::Image;
use g2hf::objective::{f_measure, BETA2};
use g2hf::train::synthetic_scene;
use g2hf::Tensor;

fn g2hf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2hf")).args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn scene(&self, size: usize) -> (PathBuf, PathBuf) {
        let (image, mask) = synthetic_scene(size, 1);
        let (img, msk) = (self.path("scene.ppm"), self.path("mask.pgm"));
        Image::from_tensor(&image).unwrap().write(&img).unwrap();
        Image::from_tensor(&mask).unwrap().write(&msk).unwrap();
        (img, msk)
    }

    fn toy_weights(&self) -> PathBuf {
        let w = self.path("toy.bin");
        let out = g2hf(&["--toy", "init", "--out", s(&w)]);
        assert!(out.status.success(), "{}", text(&out.stderr));
        w
    }
}

fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> Image {
    Image { width: w, height: h, channels: 1, data: (0..w * h).map(|i| f(i % w, i / w)).collect() }
}

#[test]
fn forward_writes_maps_of_input_size() {
    let fx = Fixture::new();
    let (img, _) = fx.scene(192);
    let w = fx.toy_weights();
    let (out, heads) = (fx.path("s1.pgm"), fx.path("heads"));
    let r = g2hf(&["--toy", "forward", "--image", s(&img), "--weights", s(&w), "--out", s(&out), "--all-heads", s(&heads)]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    let s1 = Image::read(&out).unwrap();
    assert_eq!((s1.width, s1.height, s1.channels), (192, 192, 1));
    for i in 1..=5 {
        let m = Image::read(heads.join(format!("s{i}.pgm"))).unwrap();
        assert_eq!((m.width, m.height), (192, 192));
    }
    assert_eq!(Image::read(heads.join("s1.pgm")).unwrap(), s1);
}

#[test]
fn forward_rejects_indivisible_input() {
    let fx = Fixture::new();
    let img = fx.path("small.ppm");
    Image { width: 100, height: 100, channels: 3, data: vec![90; 30000] }.write(&img).unwrap();
    let w = fx.toy_weights();
    let r = g2hf(&["--toy", "forward", "--image", s(&img), "--weights", s(&w), "--out", s(&fx.path("o.pgm"))]);
    assert_eq!(r.status.code(), Some(4));
    let err = text(&r.stderr);
    assert!(err.contains("divisibility") && err.contains("level 1"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn forward_error_codes() {
    let fx = Fixture::new();
    let (img, msk) = fx.scene(192);
    let w = fx.toy_weights();
    let out = fx.path("o.pgm");
    let bad = fx.path("bad.ppm");
    std::fs::write(&bad, b"P6\n4 4\n255\n\x00\x01").unwrap();
    let r = g2hf(&["--toy", "forward", "--image", s(&bad), "--weights", s(&w), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2), "{}", text(&r.stderr));
    let r = g2hf(&["--toy", "forward", "--image", s(&msk), "--weights", s(&w), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2), "a PGM is not an RGB input");

    let corrupt = fx.path("corrupt.bin");
    let mut bytes = std::fs::read(&w).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&corrupt, bytes).unwrap();
    let r = g2hf(&["--toy", "forward", "--image", s(&img), "--weights", s(&corrupt), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(text(&r.stderr).contains("code 12"), "{}", text(&r.stderr));
    // toy weights do not fit the default network
    let (img384, _) = {
        let (image, mask) = synthetic_scene(384, 1);
        let p = fx.path("big.ppm");
        Image::from_tensor(&image).unwrap().write(&p).unwrap();
        (p, mask)
    };
    let r = g2hf(&["forward", "--image", s(&img384), "--weights", s(&w), "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3), "{}", text(&r.stderr));
    assert!(!out.exists());
}

#[test]
fn selftest_reports_every_check() {
    let r = g2hf(&["selftest"]);
    let out = text(&r.stdout);
    assert_eq!(r.status.code(), Some(0), "{out}");
    let checks = out.lines().filter(|l| l.starts_with("PASS ")).count();
    assert!(checks >= 30, "{checks} checks");
    assert!(!out.contains("FAIL"));
}

#[test]
fn selftest_filter_and_fault() {
    let r = g2hf(&["selftest", "--filter", "unshuffle"]);
    assert_eq!(r.status.code(), Some(0));
    let out = text(&r.stdout);
    let names: Vec<&str> = out.lines().filter(|l| l.starts_with("PASS")).map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert!(names.len() >= 5 && names.iter().all(|n| n.contains("unshuffle")), "{names:?}");

    let r = g2hf(&["selftest", "--filter", "unshuffle.gradient", "--inject-fault", "pixel_unshuffle"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(text(&r.stdout).contains("FAIL unshuffle.gradient"));
}

#[test]
fn gradcheck_lists_modules() {
    let r = g2hf(&["gradcheck", "--toy", "--seed", "42"]);
    let out = text(&r.stdout);
    assert_eq!(r.status.code(), Some(0), "{out}{}", text(&r.stderr));
    let lines: Vec<&str> = out.lines().filter(|l| l.contains("max_rel_err")).collect();
    assert!(lines.len() >= 8);
    for module in ["psa", "pca", "mde", "granular", "geometric", "interaction", "dgc", "dsp", "lgf", "network"] {
        assert!(lines.iter().any(|l| l.split_whitespace().nth(1) == Some(module)), "{module} missing");
    }
}

#[test]
fn train_toy_zero_steps_keeps_initial_weights() {
    let fx = Fixture::new();
    let (img, msk) = fx.scene(192);
    let init = fx.path("init.bin");
    assert!(g2hf(&["--toy", "--seed", "5", "init", "--out", s(&init)]).status.success());
    let out = fx.path("trained.bin");
    let r = g2hf(&["--toy", "--seed", "5", "train-toy", "--image", s(&img), "--mask", s(&msk), "--steps", "0", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    assert_eq!(text(&r.stdout).trim(), "step,bce,iou,fm,total");
    assert_eq!(std::fs::read(init).unwrap(), std::fs::read(out).unwrap());
}

#[test]
fn train_toy_logs_csv_and_checks_mask() {
    let fx = Fixture::new();
    let (img, _) = fx.scene(192);
    let msk = fx.path("m.pgm");
    gray(192, 192, |x, y| if (64..128).contains(&x) && (64..128).contains(&y) { 255 } else { 0 }).write(&msk).unwrap();
    let out = fx.path("w.bin");
    let r = g2hf(&["--toy", "train-toy", "--image", s(&img), "--mask", s(&msk), "--steps", "2", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    let csv = text(&r.stdout);
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 2);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], i as f64);
        assert!((row[1] + row[2] + row[3] - row[4]).abs() < 1e-8);
    }
    assert!(out.exists());

    let small = fx.path("small.pgm");
    gray(96, 96, |_, _| 0).write(&small).unwrap();
    let r = g2hf(&["--toy", "train-toy", "--image", s(&img), "--mask", s(&small), "--steps", "1", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(4));
}

fn eval_dirs(fx: &Fixture, pairs: &[(&str, Option<Image>, Option<Image>)]) -> (PathBuf, PathBuf) {
    let (pred, gt) = (fx.path("pred"), fx.path("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    for (name, p, g) in pairs {
        if let Some(p) = p {
            p.write(pred.join(name)).unwrap();
        }
        if let Some(g) = g {
            g.write(gt.join(name)).unwrap();
        }
    }
    (pred, gt)
}

fn run_eval(pred: &Path, gt: &Path, report: &Path) -> (Option<i32>, String, String) {
    let r = g2hf(&["eval", "--pred", s(pred), "--gt", s(gt), "--report", s(report)]);
    (r.status.code(), std::fs::read_to_string(report).unwrap_or_default(), text(&r.stderr))
}

#[test]
fn eval_identical_and_complementary() {
    let fx = Fixture::new();
    let mask = gray(8, 6, |x, y| if x > 2 && y > 1 { 255 } else { 0 });
    let (pred, gt) = eval_dirs(&fx, &[("a.pgm", Some(mask.clone()), Some(mask.clone()))]);
    let report = fx.path("r.csv");
    let (code, csv, _) = run_eval(&pred, &gt, &report);
    assert_eq!(code, Some(0));
    assert_eq!(csv, "name,mae,fbeta\na.pgm,0.000000,1.000000\nmean,0.000000,1.000000\n");

    let fx = Fixture::new();
    let (pred, gt) = eval_dirs(&fx, &[("b.pgm", Some(gray(5, 5, |_, _| 0)), Some(gray(5, 5, |_, _| 255)))]);
    let (code, csv, _) = run_eval(&pred, &gt, &fx.path("r.csv"));
    assert_eq!(code, Some(0));
    assert!(csv.ends_with("mean,1.000000,0.000000\n"), "{csv}");
}

#[test]
fn eval_matches_scalar_fixture() {
    let fx = Fixture::new();
    let pairs: Vec<(&str, Image, Image)> = vec![
        ("p1.pgm", gray(6, 4, |x, y| (x * 40 + y * 5) as u8), gray(6, 4, |x, _| if x >= 3 { 255 } else { 0 })),
        ("p2.pgm", gray(5, 5, |x, y| ((x + y) % 2 * 200) as u8), gray(5, 5, |x, y| if x == y { 255 } else { 0 })),
        ("p3.pgm", gray(4, 3, |_, _| 128), gray(4, 3, |x, _| if x == 0 { 255 } else { 0 })),
    ];
    let named: Vec<(&str, Option<Image>, Option<Image>)> =
        pairs.iter().map(|(n, p, g)| (*n, Some(p.clone()), Some(g.clone()))).collect();
    let (pred, gt) = eval_dirs(&fx, &named);
    let (code, csv, _) = run_eval(&pred, &gt, &fx.path("r.csv"));
    assert_eq!(code, Some(0));

    // expected rows computed by a scalar loop over the 8-bit samples
    let mut expected = String::from("name,mae,fbeta\n");
    let (mut mae_sum, mut f_sum) = (0.0, 0.0);
    for (name, p, g) in &pairs {
        let s: Vec<f64> = p.data.iter().map(|&v| v as f64 / 255.0).collect();
        let t: Vec<f64> = g.data.iter().map(|&v| v as f64 / 255.0).collect();
        let n = s.len() as f64;
        let mae = s.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
        let thr = (2.0 * s.iter().sum::<f64>() / n).min(1.0);
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (a, b) in s.iter().zip(&t) {
            let (pp, tt) = (*a > 0.0 && *a >= thr, *b >= 0.5);
            tp += (pp && tt) as u8 as f64;
            fp += (pp && !tt) as u8 as f64;
            fn_ += (!pp && tt) as u8 as f64;
        }
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if BETA2 * prec + rec > 0.0 { (1.0 + BETA2) * prec * rec / (BETA2 * prec + rec) } else { 0.0 };
        let lib = f_measure(&p.to_tensor(), &g.to_tensor(), BETA2).unwrap();
        assert!((lib.f_beta - f).abs() < 1e-12 && (lib.mae - mae).abs() < 1e-12);
        expected.push_str(&format!("{name},{mae:.6},{f:.6}\n"));
        mae_sum += mae;
        f_sum += f;
    }
    expected.push_str(&format!("mean,{:.6},{:.6}\n", mae_sum / 3.0, f_sum / 3.0));
    assert_eq!(csv, expected);
}

#[test]
fn eval_skips_unmatched_files() {
    let fx = Fixture::new();
    let m = gray(4, 4, |x, _| if x < 2 { 255 } else { 0 });
    let (pred, gt) = eval_dirs(
        &fx,
        &[("both.pgm", Some(m.clone()), Some(m.clone())), ("only_pred.pgm", Some(m.clone()), None), ("only_gt.pgm", None, Some(m.clone()))],
    );
    let (code, csv, err) = run_eval(&pred, &gt, &fx.path("r.csv"));
    assert_eq!(code, Some(0));
    assert!(err.contains("only_pred.pgm") && err.contains("only_gt.pgm"), "{err}");
    assert_eq!(csv.lines().count(), 3);

    let fx = Fixture::new();
    let (pred, gt) = eval_dirs(&fx, &[("x.pgm", Some(m.clone()), None), ("y.pgm", None, Some(m))]);
    let report = fx.path("r.csv");
    let (code, _, _) = run_eval(&pred, &gt, &report);
    assert_eq!(code, Some(2));
    assert!(!report.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(g2hf(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(g2hf(&["forward"]).status.code(), Some(1));
    assert_eq!(g2hf(&["--help"]).status.code(), Some(0));
}

#[test]
fn thread_count_does_not_change_output() {
    let fx = Fixture::new();
    let (img, _) = fx.scene(192);
    let w = fx.toy_weights();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = fx.path(&format!("s1_{threads}.pgm"));
        let r = Command::new(env!("CARGO_BIN_EXE_g2hf"))
            .args(["--toy", "forward", "--image", s(&img), "--weights", s(&w), "--out", s(&out)])
            .env("G2HF_THREADS", threads)
            .output()
            .unwrap();
        assert!(r.status.success());
        outputs.push(std::fs::read(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let t = Image::read(fx.path("s1_1.pgm")).unwrap().to_tensor();
    assert_eq!(t.shape(), Tensor::zeros(&[1, 192, 192]).shape());
}
