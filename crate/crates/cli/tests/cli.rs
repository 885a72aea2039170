use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bdsg::bdstep::bd_strang_step;
use bdsg::bloch::compute_lattice_table;
use bdsg::lattice::{initial_gaussian, Grid, LatticeKind, RandomKind};
use bdsg::scenarios::{builtin, Scenario, Spacing};
use tempfile::TempDir;

fn bdsg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdsg"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = bdsg(dir, args);
    assert!(
        out.status.success(),
        "bdsg {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_scenario(dir: &Path, s: &Scenario) -> PathBuf {
    let path = dir.join(format!("{}.toml", s.name));
    fs::write(&path, s.to_toml().unwrap()).unwrap();
    path
}

/// Header plus rows of numbers; empty cells become NaN.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| if c.is_empty() { f64::NAN } else { c.parse().unwrap() })
                .collect()
        })
        .collect();
    (header, rows)
}

fn small(name: &str, lattice: LatticeKind, random: RandomKind, epsilon: f64, dx: usize) -> Scenario {
    let mut s = builtin("t1a").unwrap();
    s.name = name.into();
    s.description.clear();
    s.grid.epsilon = epsilon;
    s.grid.dx = Spacing(dx);
    s.grid.dx_levels.clear();
    s.potentials.lattice = lattice;
    s.potentials.random = random;
    s.time.dt = 0.01;
    s.time.dt_levels.clear();
    s.expect = Default::default();
    s
}

#[test]
fn free_lattice_bottom_band_vanishes_at_zero_quasimomentum() {
    let dir = TempDir::new().unwrap();
    let s = small("free", LatticeKind::Free, RandomKind::Zero, 0.25, 32);
    let path = write_scenario(dir.path(), &s);
    ok(dir.path(), &["bands", path.to_str().unwrap(), "--out", "out"]);
    let (header, rows) = read_csv(&dir.path().join("out/bands.csv"));
    assert_eq!(header, ["m", "l", "k", "E"]);
    let row = rows.iter().find(|r| r[0] == 1.0 && r[2] == 0.0).expect("k = 0 row");
    assert!(row[3].abs() < 1e-12, "{}", row[3]);
}

#[test]
fn warm_cache_rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let s = small("kp", LatticeKind::KronigPenney, RandomKind::Zero, 0.25, 64);
    let path = write_scenario(dir.path(), &s);
    let p = path.to_str().unwrap();
    ok(dir.path(), &["bands", p, "--out", "a"]);
    let cache: Vec<PathBuf> = fs::read_dir(dir.path().join(".bdsg-cache"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(cache.len(), 1);
    let cold = fs::read(&cache[0]).unwrap();
    ok(dir.path(), &["bands", p, "--out", "b"]);
    assert_eq!(fs::read(&cache[0]).unwrap(), cold);
    assert_eq!(
        fs::read(dir.path().join("a/bands.csv")).unwrap(),
        fs::read(dir.path().join("b/bands.csv")).unwrap()
    );
}

#[test]
fn mathieu_ground_state_is_resolved() {
    let dir = TempDir::new().unwrap();
    let mut e0 = Vec::new();
    for dx in [64, 128] {
        let s = small(&format!("m{dx}"), LatticeKind::Mathieu, RandomKind::Zero, 0.5, dx);
        let path = write_scenario(dir.path(), &s);
        let out = format!("out{dx}");
        ok(dir.path(), &["--no-cache", "bands", path.to_str().unwrap(), "--out", &out]);
        let (_, rows) = read_csv(&dir.path().join(out).join("bands.csv"));
        e0.push(rows.iter().find(|r| r[0] == 1.0 && r[2] == 0.0).unwrap()[3]);
    }
    assert!((e0[0] - e0[1]).abs() < 1e-8, "{e0:?}");
}

#[test]
fn run_writes_all_outputs_and_conserves_mass() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["run", "f6", "--out", "f6"]);
    let out = dir.path().join("f6");
    for f in ["run.json", "mean_field.csv", "mean_density.csv", "conserved.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let (header, rows) = read_csv(&out.join("conserved.csv"));
    assert_eq!(header, ["t", "mass", "energy", "second_moment"]);
    assert_eq!(rows.len(), 201);
    let m0 = rows[0][1];
    for r in &rows {
        assert!((r[1] / m0 - 1.0).abs() <= 1e-9);
    }
    let record: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["method"], "bdsg");
    assert_eq!(record["scenario"]["name"], "f6");
    assert!(record["seconds"].as_f64().unwrap() > 0.0);
}

#[test]
fn order_zero_run_matches_deterministic_splitting() {
    let dir = TempDir::new().unwrap();
    let mut s = small("q0", LatticeKind::Mathieu, RandomKind::HarmonicNoise, 0.25, 64);
    s.gpc.order = 0;
    s.time.output_every = Some(100);
    let path = write_scenario(dir.path(), &s);
    ok(dir.path(), &["run", path.to_str().unwrap(), "--out", "q0"]);
    let (_, rows) = read_csv(&dir.path().join("q0/mean_field.csv"));

    let grid = Grid::<f64>::with_total_points(0.25, 128).unwrap();
    let table = compute_lattice_table(&LatticeKind::Mathieu.potential(), &grid, grid.points_per_cell()).unwrap();
    // Harmonic noise is affine in z, so its mean is its value at z = 0.
    let u = RandomKind::HarmonicNoise.potential::<f64>(0.0).sample_grid(&grid, 0.0);
    let mut psi = initial_gaussian(&grid);
    for _ in 0..100 {
        psi = bd_strang_step(&psi, &table, &u, 0.01);
    }
    let worst = rows
        .iter()
        .zip(psi.values())
        .map(|(r, v)| (r[2] - v.re).abs().max((r[3] - v.im).abs()))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "{worst:e}");
}

#[test]
fn monte_carlo_runs_repeat_bitwise_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let mut s = builtin("t5").unwrap();
    s.methods.mc_samples = Some(40);
    let path = write_scenario(dir.path(), &s);
    let p = path.to_str().unwrap();
    ok(dir.path(), &["--threads", "1", "run", p, "--method", "ts-mc", "--out", "a"]);
    ok(dir.path(), &["--threads", "3", "run", p, "--method", "ts-mc", "--out", "b"]);
    for f in ["mean_field.csv", "mean_density.csv", "conserved.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn time_step_sweep_shows_second_order() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["sweep", "t1a", "--axis", "dt", "--out", "t1a"]);
    let (header, rows) = read_csv(&dir.path().join("t1a/errors.csv"));
    assert_eq!(header, ["level", "mean", "density", "mean_order", "density_order", "seconds"]);
    assert_eq!(rows.len(), 5);
    assert!(rows[0][3].is_nan());
    for r in &rows[2..] {
        assert!((1.7..=2.3).contains(&r[3]) && (1.7..=2.3).contains(&r[4]), "{r:?}");
    }
    assert!(dir.path().join("t1a/sweep.json").is_file());
}

#[test]
fn gpc_sweep_saturates() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["sweep", "f1a", "--out", "f1a"]);
    let (_, rows) = read_csv(&dir.path().join("f1a/errors.csv"));
    assert_eq!(rows.len(), 9);
    let tail: Vec<f64> = rows[5..].iter().map(|r| r[1]).collect();
    let spread = tail.iter().cloned().fold(0.0, f64::max) / tail.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1.05, "{tail:?}");
    assert!(rows[0][1] > 100.0 * tail[0]);
}

#[test]
fn monte_carlo_sweep_decays_like_inverse_square_root() {
    let dir = TempDir::new().unwrap();
    let mut s = builtin("t5").unwrap();
    s.methods.mc_levels = vec![10, 100, 1000];
    let path = write_scenario(dir.path(), &s);
    ok(dir.path(), &["sweep", path.to_str().unwrap(), "--axis", "mc-k", "--out", "mc"]);
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mc/sweep.json")).unwrap()).unwrap();
    let slope = record["mean_slope"].as_f64().unwrap();
    assert!((-0.7..=-0.3).contains(&slope), "{slope}");
}

#[test]
fn compare_lists_every_method() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["compare", "t6a", "--out", "t6a"]);
    let text = fs::read_to_string(dir.path().join("t6a/compare.csv")).unwrap();
    let methods: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["bdsg", "ts-sc"]);
}

#[test]
fn localize_writes_histories() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["localize", "f8", "--out", "f8"]);
    let (header, rows) = read_csv(&dir.path().join("f8/moments.csv"));
    assert_eq!(header, ["sigma", "t", "second_moment"]);
    assert_eq!(rows.len(), 3 * 31);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f8/localization.json")).unwrap()).unwrap();
    let finals: Vec<f64> = summary["summary"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["final_second_moment"].as_f64().unwrap())
        .collect();
    assert!(finals[0] > finals[1] && finals[1] > finals[2], "{finals:?}");
}

#[test]
fn exported_scenario_runs_from_file() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["scenarios", "export", "t6a", "--out", "t6a.toml"]);
    let text = fs::read_to_string(dir.path().join("t6a.toml")).unwrap();
    assert_eq!(Scenario::from_toml(&text).unwrap(), builtin("t6a").unwrap());
    ok(dir.path(), &["run", "t6a.toml", "--method", "ts-sc", "--out", "sc"]);
}

#[test]
fn failures_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let out = bdsg(dir.path(), &["run", "t1c", "--out", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("heavy"));

    let text = builtin("t1a").unwrap().to_toml().unwrap().replace("[time]\n", "[time]\nspeed = 2\n");
    fs::write(dir.path().join("bad.toml"), text).unwrap();
    assert!(!bdsg(dir.path(), &["run", "bad.toml", "--out", "x"]).status.success());
    assert!(!bdsg(dir.path(), &["run", "no-such-scenario", "--out", "x"]).status.success());
    assert!(!bdsg(dir.path(), &["localize", "t1a", "--out", "x"]).status.success());
}

#[test]
fn single_precision_runs() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["--precision", "f32", "run", "f6", "--out", "f6"]);
    let (_, rows) = read_csv(&dir.path().join("f6/conserved.csv"));
    for r in &rows {
        assert!((r[1] - 1.0).abs() < 1e-3);
    }
}
