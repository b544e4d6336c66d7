use std::fs;
use std::path::Path;
use std::process::Command;

use deeptv::imaging::Image;
use deeptv_cli::{emit_plots, run_task, Overrides, Preset, RunConfig, Rung, Task};

fn small(task: Task, out: &Path) -> RunConfig {
    let flags = Overrides {
        out: Some(out.to_path_buf()),
        iters: Some(60),
        arch: Some(vec![8, 8]),
        size: Some(if task.is_image() { 12 } else { 40 }),
        fine_factor: Some(2),
        ..Overrides::default()
    };
    let mut cfg = RunConfig::resolve(task, Preset::Ci, None, &flags).unwrap();
    cfg.train.log_every = 10;
    cfg.fd.iterations = 200;
    cfg.ladder = match task {
        Task::Sweep1d => [0.0, 1.0, 100.0].iter().map(|&c| Rung { nodes: 40, c }).collect(),
        Task::Sweep2d => vec![Rung { nodes: 9, c: 0.0 }, Rung { nodes: 11, c: 1.0 }],
        _ => Vec::new(),
    };
    cfg
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("plots")] {
        let Ok(entries) = fs::read_dir(&sub) else { continue };
        for e in entries {
            let p = e.unwrap().path();
            if p.extension().is_some_and(|x| x == "csv") {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn sweep1d_writes_one_row_per_rung() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Task::Sweep1d, dir.path());
    let report = run_task(&cfg).unwrap();
    // the zero network: (0.5 + 1.25) * |{x > 1}| * (2 / 40)
    assert!((report.get("energy_0").unwrap() - 1.75).abs() <= 1e-12);
    let plot = fs::read_to_string(dir.path().join("plots/energy_vs_c.csv")).unwrap();
    let rows: Vec<_> = plot.lines().collect();
    assert_eq!(rows[0], "c,energy");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("0,"));
    assert!(dir.path().join("plots/distance_vs_c.csv").is_file());
    for i in 0..3 {
        assert!(dir.path().join(format!("rung{i}_loss.csv")).is_file());
        assert!(dir.path().join(format!("rung{i}_checkpoint.bin")).is_file());
    }
}

#[test]
fn error_track_plots_have_four_columns() {
    let dir = tempfile::tempdir().unwrap();
    run_task(&small(Task::ErrorTrack, dir.path())).unwrap();
    let rho = fs::read_to_string(dir.path().join("plots/rho_vs_updates.csv")).unwrap();
    assert_eq!(rho.lines().next().unwrap(), "update,rho1,rho2,rho");
    assert!(rho.lines().skip(1).all(|l| l.split(',').count() == 4));
    let track = fs::read_to_string(dir.path().join("error_track.csv")).unwrap();
    // every row is a bound: rho >= true error
    for line in track.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[3] >= v[4], "{line}");
    }
}

#[test]
fn reruns_are_bit_identical() {
    for task in [Task::Denoise, Task::Sweep2d, Task::FdBaseline] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_task(&small(task, a.path())).unwrap();
        run_task(&small(task, b.path())).unwrap();
        let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{}", task.name());
        let mut other = small(task, b.path());
        other.seed = 1;
        run_task(&other).unwrap();
        assert_ne!(fa, csv_files(b.path()), "{}", task.name());
    }
}

#[test]
fn image_tasks_write_reconstructions_and_metadata() {
    for task in [Task::Denoise, Task::Inpaint, Task::Deblur] {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(task, dir.path());
        cfg.data.blur_size = 3;
        run_task(&cfg).unwrap();
        let fine = Image::load(dir.path().join("reconstruction_fine.png")).unwrap();
        assert_eq!((fine.width(), fine.height()), (24, 24));
        for name in ["original.png", "observation.png", "reconstruction.png", "loss.csv", "metrics.csv", "checkpoint.bin"] {
            assert!(dir.path().join(name).is_file(), "{} lacks {name}", task.name());
        }
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["task"], task.name());
        assert_eq!(meta["adam"]["beta2"], 0.999);
        // the echo alone reproduces the configuration
        let echo = dir.path().join("config.json");
        let back = RunConfig::resolve(task, Preset::Paper, Some(&echo), &Overrides::default()).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn inpainting_reads_mask_files() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("mask.pgm");
    let keep: Vec<f64> = (0..144).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect();
    Image::new(12, 12, keep).unwrap().save(&mask).unwrap();
    let mut cfg = small(Task::Inpaint, &dir.path().join("run"));
    cfg.data.mask = Some(mask.clone());
    run_task(&cfg).unwrap();
    let used = Image::load(dir.path().join("run/mask.png")).unwrap();
    assert_eq!(used.values().iter().filter(|&&v| v == 0.0).count(), 29);

    Image::new(10, 12, vec![1.0; 120]).unwrap().save(&mask).unwrap();
    assert!(run_task(&cfg).is_err());
}

#[test]
fn plots_of_an_empty_directory_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_plots(dir.path()).is_err());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn binary_resolves_flags_and_reports_errors() {
    let exe = env!("CARGO_BIN_EXE_deeptv");
    let out = Command::new(exe)
        .args(["sweep2d", "--preset", "paper", "--dry-run", "--arch", "32,16", "--tv", "tv21", "--smoothing", "lift"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg.network.hidden_widths, vec![32, 16]);
    assert_eq!(cfg.train.iterations, 300_001);
    assert_eq!(cfg.ladder.len(), 6);

    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(exe).arg("plots").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let out = Command::new(exe).args(["denoise", "--lr", "0", "--dry-run"]).output().unwrap();
    assert!(!out.status.success());
}
