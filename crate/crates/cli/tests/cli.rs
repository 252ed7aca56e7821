use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hikm_core::{ClusterTree, EmbeddingDataset};

fn hikm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hikm"))
        .args(args)
        .env_remove("HIKM_THREADS")
        .output()
        .expect("spawn hikm")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// 100 points in the plane on a skewed lattice.
fn write_dataset(dir: &Path) -> std::path::PathBuf {
    let rows: Vec<[f32; 2]> = (0..100)
        .map(|i| {
            [
                ((i * 37) % 23) as f32 * 0.25,
                ((i * 11) % 17) as f32 * 0.4 + (i / 50) as f32 * 8.0,
            ]
        })
        .collect();
    let p = dir.join("pts.hkm");
    EmbeddingDataset::from_rows(&rows).unwrap().save(&p).unwrap();
    p
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn cluster_builds_requested_levels() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let cfg = write_config(dir.path(), "levels = 2\nk = [8, 3]\nm = 2\nseed = 5\n");
    let tree = dir.path().join("t.toml");
    let o = hikm(&["cluster", "--config", s(&cfg), "--data", s(&data), "--out", s(&tree)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = ClusterTree::load(&tree).unwrap();
    let ks: Vec<usize> = t.levels.iter().map(|l| l.k()).collect();
    assert_eq!(ks, vec![8, 3]);
    assert!(dir.path().join("t.toml.manifest.json").exists());
}

#[test]
fn k_above_n_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let cfg = write_config(dir.path(), "levels = 1\nk = [101]\n");
    let o = hikm(&[
        "cluster",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("t.toml")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("k exceeds input size"), "{}", stderr(&o));
    assert!(!dir.path().join("t.toml").exists());
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let cfg = write_config(dir.path(), "levels = 1\nk = [4]\nmm = 3\n");
    let o = hikm(&[
        "cluster",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("t.toml")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn corrupted_dataset_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let mut bytes = fs::read(&data).unwrap();
    bytes[0] = b'X';
    fs::write(&data, bytes).unwrap();
    let cfg = write_config(dir.path(), "levels = 1\nk = [4]\n");
    let o = hikm(&[
        "cluster",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("t.toml")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn sample_all_mismatch_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path());
    let cfg = write_config(dir.path(), "levels = 2\nk = [10, 4]\nm = 1\n");
    let tree = dir.path().join("t.toml");
    assert!(
        hikm(&["cluster", "--config", s(&cfg), "--data", s(&data), "--out", s(&tree)])
            .status
            .success()
    );

    for mode in ["flat", "hier"] {
        let out = dir.path().join(format!("all_{mode}.txt"));
        let o = hikm(&[
            "sample",
            "--tree",
            s(&tree),
            "--data",
            s(&data),
            "--target",
            "100",
            "--mode",
            mode,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let got: Vec<u64> = fs::read_to_string(&out)
            .unwrap()
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(got, (0..100).collect::<Vec<u64>>());
    }

    let bin = dir.path().join("pick.bin");
    let o = hikm(&[
        "sample",
        "--tree",
        s(&tree),
        "--data",
        s(&data),
        "--target",
        "30",
        "--strategy",
        "r",
        "--seed",
        "4",
        "--format",
        "bin",
        "--out",
        s(&bin),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(&bin).unwrap();
    assert_eq!(first.len() % 8, 0);
    let manifest = dir.path().join("pick.bin.manifest.json");
    fs::remove_file(&bin).unwrap();
    let o = hikm(&["rerun", s(&manifest)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&bin).unwrap(), first);

    let tree_bytes = fs::read(&tree).unwrap();
    let o = hikm(&["rerun", s(&dir.path().join("t.toml.manifest.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&tree).unwrap(), tree_bytes);

    // a different dataset of the same shape is caught by the recorded checksum
    let other: Vec<[f32; 2]> = (0..100).map(|i| [i as f32, 0.5]).collect();
    let other_path = dir.path().join("other.hkm");
    EmbeddingDataset::from_rows(&other).unwrap().save(&other_path).unwrap();
    let o = hikm(&[
        "sample",
        "--tree",
        s(&tree),
        "--data",
        s(&other_path),
        "--target",
        "10",
        "--out",
        s(&dir.path().join("x.txt")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let short: Vec<[f32; 2]> = (0..50).map(|i| [i as f32, 0.5]).collect();
    EmbeddingDataset::from_rows(&short).unwrap().save(&other_path).unwrap();
    let o = hikm(&[
        "sample",
        "--tree",
        s(&tree),
        "--data",
        s(&other_path),
        "--target",
        "10",
        "--out",
        s(&dir.path().join("x.txt")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_2() {
    let o = hikm(&["sample", "--mode", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hikm(&["kl-check", "--trials", "10", "--t", "1.5"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn kl_check_reports_no_counterexamples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kl.csv");
    let o = hikm(&["kl-check", "--trials", "500", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,checks,violations,worst_gap,uniform_gap"));
    for l in lines {
        assert_eq!(l.split(',').nth(2), Some("0"), "{l}");
    }
}

#[test]
fn zador_writes_one_row_per_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = hikm(&[
        "zador",
        "--out",
        s(dir.path()),
        "--samples",
        "5000",
        "--k",
        "16",
        "--s",
        "2,4",
        "--density",
        "exponential",
        "--svg",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("zador.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,kl_vs_p,kl_vs_p13,kl_vs_uniform");
    assert_eq!(lines.len(), 3);
    assert!(dir.path().join("zador_s2.svg").exists());
}

#[test]
fn simulate_with_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.toml");
    fs::write(
        &cfg,
        r#"
top_k = 20
bandwidth = 0.8
resolution = 24

[mixture]
n = 600
half_width = 3.0
uniform_weight = 0.4
gaussians = [{ weight = 0.6, mean = [0.0, 0.0], sigma = 0.5 }]

[[configs]]
name = "1-level"
cluster = { levels = 1, k = [20] }

[[configs]]
name = "2-level+resampling"
cluster = { levels = 2, k = [120, 20], m = 2 }
"#,
    )
    .unwrap();
    let out = dir.path().join("sim");
    let o = hikm(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--runs",
        "2",
        "--svg",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("simulate.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "config_name,seed,kl_to_uniform");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[3].starts_with("random_baseline,0,"));
    assert!(out.join("manifest.json").exists());
    assert!(out.join("simulate_2-level_resampling_seed1.svg").exists());
}

#[test]
fn pool_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pool.hkm");
    let labels = dir.path().join("labels.txt");
    let o = hikm(&[
        "gen-pool",
        "--out",
        s(&data),
        "--labels",
        s(&labels),
        "--classes",
        "4",
        "--total",
        "400",
        "--seed",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = write_config(dir.path(), "levels = 1\nk = [12]\n");
    let tree = dir.path().join("pool.toml");
    assert!(
        hikm(&["cluster", "--config", s(&cfg), "--data", s(&data), "--out", s(&tree)])
            .status
            .success()
    );
    let out = dir.path().join("stats");
    let o = hikm(&[
        "stats",
        "--data",
        s(&data),
        "--tree",
        s(&tree),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
        "--svg",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("stats.csv")).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("class_id,class_size,cluster_count,mean_cluster_size")
    );
    assert_eq!(text.lines().count(), 5);
    let total: usize = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 12);
    let fits = fs::read_to_string(out.join("fits.csv")).unwrap();
    assert_eq!(
        fits.lines().next(),
        Some("count_slope,count_intercept,size_slope,size_intercept")
    );
}
