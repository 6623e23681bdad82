use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use foveate::core::ImageBuffer;
use foveate::heatmap::HeatmapFile;
use foveate::raster::{load_image, save_image};
use serde_json::Value;

/// Small rasters and grids so each command finishes quickly.
const SMALL: &str = r#"{
    "input_size": [32, 32],
    "grid": {"n_rho": 32, "n_theta": 32},
    "grid_n": 3,
    "toy": {"train_per_class": 2},
    "synth": {"size": 48}
}"#;

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        let w = Self { dir: tempfile::tempdir().unwrap() };
        fs::write(w.path("cfg.json"), SMALL).unwrap();
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, out: &str, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_foveate"))
            .arg("--config")
            .arg(self.path("cfg.json"))
            .arg("--out")
            .arg(self.path(out))
            .args(args)
            .env_remove("FOVEATE_BRIDGE_CMD")
            .output()
            .unwrap()
    }

    fn ok(&self, out: &str, args: &[&str]) -> String {
        let o = self.run(out, args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    }

    fn synth(&self, out: &str, count: usize) -> PathBuf {
        self.ok(out, &["synth", "--count", &count.to_string()]);
        self.path(out).join("manifest.jsonl")
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn ramp(path: &Path) {
    let img = ImageBuffer::from_fn(40, 40, 3, |r, c, ch| ((r * 5 + c * 3 + ch * 50) % 256) as f32 / 255.0);
    save_image(path, &img).unwrap();
}

#[test]
fn zero_degree_rotation_is_pixel_identical() {
    let w = Work::new();
    let input = w.path("in.png");
    ramp(&input);
    let out = w.path("rot.png");
    w.ok("o", &["transform", input.to_str().unwrap(), "--mode", "rotate", "--angle", "0", "-o", out.to_str().unwrap()]);
    assert_eq!(load_image(&out).unwrap(), load_image(&input).unwrap());
}

#[test]
fn mask_sets_corners_to_fill() {
    let w = Work::new();
    let input = w.path("in.png");
    ramp(&input);
    let stdout = w.ok("o", &["transform", input.to_str().unwrap(), "--mode", "mask"]);
    let out = w.path("o").join("in_mask.png");
    assert!(stdout.contains("in_mask.png"));
    let img = load_image(&out).unwrap();
    for (r, c) in [(0, 0), (0, 39), (39, 0), (39, 39)] {
        assert!(img.pixel(r, c).iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-6));
    }
    assert_eq!(img.pixel(20, 20), load_image(&input).unwrap().pixel(20, 20));
}

#[test]
fn logpolar_then_inverse_has_requested_shape() {
    let w = Work::new();
    let input = w.path("in.png");
    ramp(&input);
    let lp = w.path("lp.png");
    w.ok("o", &["transform", input.to_str().unwrap(), "--mode", "logpolar", "-o", lp.to_str().unwrap()]);
    assert_eq!(load_image(&lp).unwrap().dims(), (32, 32));
    let back = w.path("back.png");
    w.ok("o", &["transform", lp.to_str().unwrap(), "--mode", "inverse", "--size", "40x40", "-o", back.to_str().unwrap()]);
    assert_eq!(load_image(&back).unwrap().dims(), (40, 40));
}

#[test]
fn zoom_attack_reports_attack_and_curve_sweeps() {
    let w = Work::new();
    let manifest = w.synth("s", 3);
    w.ok("z", &["attack", manifest.to_str().unwrap(), "--kind", "zoom"]);
    let report = json(&w.path("z").join("attack_zoom.json"));
    let sweep: Vec<f64> = report["attack_sweep"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(sweep, (1..=10).rev().map(|k| k as f64 / 10.0).collect::<Vec<_>>());
    let curve: Vec<f64> = report["curve"].as_array().unwrap().iter().map(|c| c["param"].as_f64().unwrap()).collect();
    let want: Vec<f64> = (2..=10).rev().map(|k| k as f64).chain((1..=10).rev().map(|k| k as f64 / 10.0)).collect();
    assert_eq!(curve, want);
    assert_eq!(report["images"].as_array().unwrap().len(), 3);
    let csv = fs::read_to_string(w.path("z").join("attack_zoom_curve.csv")).unwrap();
    assert_eq!(csv.lines().count(), want.len() + 1);
}

#[test]
fn rotation_attack_covers_the_default_sweep() {
    let w = Work::new();
    let manifest = w.synth("s", 4);
    w.ok("r", &["attack", manifest.to_str().unwrap()]);
    let report = json(&w.path("r").join("attack_rotation.json"));
    let acc = report["attack_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report["curve"].as_array().unwrap().len(), 25);
}

#[test]
fn empty_manifest_is_an_error() {
    let w = Work::new();
    let manifest = w.path("empty.jsonl");
    fs::write(&manifest, "").unwrap();
    let o = w.run("o", &["attack", manifest.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no records"));
}

#[test]
fn all_labels_give_a_unit_map() {
    let w = Work::new();
    w.synth("s", 1);
    let image = w.path("s").join("scene_00000.png");
    let render = w.path("map.png");
    w.ok("l", &["localize", image.to_str().unwrap(), "--labels", "all", "--render", render.to_str().unwrap()]);
    let map = HeatmapFile::read(&w.path("l").join("scene_00000_heatmap.json")).unwrap();
    assert_eq!((map.n, map.values.len()), (3, 9));
    assert!(map.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
    assert!(render.exists());
}

#[test]
fn unknown_labels_are_rejected() {
    let w = Work::new();
    w.synth("s", 1);
    let image = w.path("s").join("scene_00000.png");
    assert!(!w.run("l", &["localize", image.to_str().unwrap(), "--labels", "purple-blob"]).status.success());
}

#[test]
fn grid_n_flag_overrides_config() {
    let w = Work::new();
    w.synth("s", 1);
    let image = w.path("s").join("scene_00000.png");
    w.ok("l", &["--grid-n", "5", "localize", image.to_str().unwrap(), "--labels", "red-disk,blue-square"]);
    let map = HeatmapFile::read(&w.path("l").join("scene_00000_heatmap.json")).unwrap();
    assert_eq!(map.values.len(), 25);
    assert_eq!(map.label_subset.len(), 2);
}

#[test]
fn synth_is_deterministic_and_accepts_zero() {
    let w = Work::new();
    let a = w.synth("a", 3);
    let b = w.synth("b", 3);
    assert_eq!(fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
    for i in 0..3 {
        let name = format!("scene_{i:05}.png");
        assert_eq!(fs::read(w.path("a").join(&name)).unwrap(), fs::read(w.path("b").join(&name)).unwrap());
    }
    let empty = w.synth("e", 0);
    assert_eq!(fs::read_to_string(empty).unwrap(), "");
    let other = w.path("c");
    w.ok("c", &["--seed", "1", "synth", "--count", "3"]);
    assert_ne!(fs::read(other.join("scene_00000.png")).unwrap(), fs::read(w.path("a").join("scene_00000.png")).unwrap());
}

#[test]
fn evaluate_twice_then_compare_gives_zero_difference() {
    let w = Work::new();
    let manifest = w.synth("s", 3);
    w.ok("e1", &["evaluate", manifest.to_str().unwrap()]);
    w.ok("e2", &["evaluate", manifest.to_str().unwrap()]);
    let report = json(&w.path("e1").join("evaluate.json"));
    assert_eq!(report["aggregate"]["images"], 3);
    let again = json(&w.path("e2").join("evaluate.json"));
    assert_eq!((&report["aggregate"], &report["images"]), (&again["aggregate"], &again["images"]));
    let a = w.path("e1").join("recentered_mean.json");
    let b = w.path("e2").join("recentered_mean.json");
    w.ok("cmp", &["evaluate", "--compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    let diff = HeatmapFile::read(&w.path("cmp").join("difference_map.json")).unwrap();
    let odds = HeatmapFile::read(&w.path("cmp").join("log_odds_map.json")).unwrap();
    assert!(diff.values.iter().chain(&odds.values).all(|&v| v == 0.0));
}

#[test]
fn conflicting_frame_and_oracle_fail() {
    let w = Work::new();
    let manifest = w.synth("s", 1);
    let o = w.run("o", &["--oracle", "toy-cartesian", "--frame", "retinotopic", "attack", manifest.to_str().unwrap()]);
    assert!(!o.status.success());
    let o = w.run("o", &["--oracle", "bridge", "attack", manifest.to_str().unwrap()]);
    assert!(!o.status.success());
}
