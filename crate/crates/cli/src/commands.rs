//! One function per subcommand. Each writes its outputs atomically, then a run manifest.
//!
//! CSV columns:
//!
//! | file          | columns                                                   |
//! |---------------|-----------------------------------------------------------|
//! | simulate.csv  | config_name, seed, kl_to_uniform                          |
//! | zador.csv     | s, kl_vs_p, kl_vs_p13, kl_vs_uniform                      |
//! | stats.csv     | class_id, class_size, cluster_count, mean_cluster_size    |
//! | fits.csv      | count_slope, count_intercept, size_slope, size_intercept  |
//! | kl_check.csv  | t, checks, violations, worst_gap, uniform_gap             |
//!
//! `mean_cluster_size` and the fit columns are empty when undefined.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hikm_core::evalsim::balance::balance_stats;
use hikm_core::evalsim::divergence::tempering_search;
use hikm_core::evalsim::imbalance::{power_law_pool, PoolSpec};
use hikm_core::evalsim::mixture::{gen_mixture, MixtureSpec};
use hikm_core::evalsim::simulate::{simulate, SimulateParams};
use hikm_core::evalsim::zador::{zador_experiment_1d, Density1d, ZadorParams};
use hikm_core::sampling::sample;
use hikm_core::tree::sibling;
use hikm_core::{build_hierarchy, ClusterConfig, ClusterTree, EmbeddingDataset, SampleSpec};
use serde::Serialize;

use crate::manifest::{checksums, file_sha256, manifest_path, write_atomic, RunManifest};
use crate::svg::{Figure, Frame, PALETTE};
use crate::{
    ClusterArgs, Context, DensityKind, Failure, GenMixtureArgs, GenPoolArgs, KlCheckArgs, OutFormat, RerunArgs,
    SampleArgs, SimulateArgs, StatsArgs, ZadorArgs,
};

fn finish(
    ctx: &Context,
    command: &str,
    config: impl Serialize,
    seed: Option<u64>,
    inputs: &[&Path],
    outputs: &[PathBuf],
    manifest: PathBuf,
) -> Result<(), Failure> {
    let m = RunManifest {
        command: command.to_string(),
        args: ctx.args.clone(),
        config: serde_json::to_value(config).map_err(|e| Failure::new(1, e.to_string()))?,
        seed,
        threads: ctx.threads,
        inputs: checksums(inputs)?,
        outputs: checksums(outputs)?,
        wall_time_secs: ctx.started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    m.save(&manifest)
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure::new(1, format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| Failure::new(1, format!("csv: {e}")))
}

fn load_dataset(path: &Path) -> Result<EmbeddingDataset, Failure> {
    EmbeddingDataset::load(path).map_err(|e| {
        let f = Failure::from(e);
        Failure::new(f.code, format!("{}: {}", path.display(), f.message))
    })
}

fn load_tree(path: &Path) -> Result<ClusterTree, Failure> {
    ClusterTree::load(path).map_err(|e| {
        let f = Failure::from(e);
        Failure::new(f.code, format!("{}: {}", path.display(), f.message))
    })
}

/// Exit 4 unless the tree was built over this dataset.
fn check_pair(tree: &ClusterTree, data: &EmbeddingDataset) -> Result<(), Failure> {
    if tree.n != data.n() || tree.dim != data.d() {
        return Err(Failure::new(
            4,
            format!(
                "tree/data mismatch: tree has n={} d={}, dataset has n={} d={}",
                tree.n,
                tree.dim,
                data.n(),
                data.d()
            ),
        ));
    }
    if let Some(sum) = &tree.data_checksum {
        if *sum != data.checksum() {
            return Err(Failure::new(
                4,
                "tree/data mismatch: dataset checksum differs from the one recorded in the tree",
            ));
        }
    }
    Ok(())
}

pub fn cmd_cluster(ctx: &Context, a: &ClusterArgs) -> Result<(), Failure> {
    let mut cfg = ClusterConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let data = load_dataset(&a.data)?;
    cfg.validate_for(data.n())?;
    let tree = build_hierarchy(&data, &cfg)?;

    ensure_parent(&a.out)?;
    let mut outputs = Vec::new();
    for (name, bytes) in tree.sibling_files(&a.out)? {
        let p = sibling(&a.out, &name);
        write_atomic(&p, &bytes)?;
        outputs.push(p);
    }
    write_atomic(&a.out, tree.manifest_text(&a.out)?.as_bytes())?;
    outputs.insert(0, a.out.clone());
    let ks: Vec<String> = tree.levels.iter().map(|l| l.k().to_string()).collect();
    println!(
        "built {} levels (k = {}) over {} points",
        tree.depth(),
        ks.join(", "),
        tree.n
    );
    finish(
        ctx,
        "cluster",
        &cfg,
        Some(cfg.seed),
        &[&a.config, &a.data],
        &outputs,
        manifest_path(&a.out, false),
    )
}

pub fn cmd_sample(ctx: &Context, a: &SampleArgs) -> Result<(), Failure> {
    let tree = load_tree(&a.tree)?;
    let data = load_dataset(&a.data)?;
    check_pair(&tree, &data)?;
    let spec = SampleSpec {
        target: a.target,
        mode: a.mode,
        strategy: a.strategy,
        seed: a.seed,
    };
    let picked = sample(&tree, Some(data.matrix()), &spec)?;
    let bytes: Vec<u8> = match a.format {
        OutFormat::Text => picked.iter().map(|i| format!("{i}\n")).collect::<String>().into_bytes(),
        OutFormat::Bin => picked.iter().flat_map(|i| i.to_le_bytes()).collect(),
    };
    ensure_parent(&a.out)?;
    write_atomic(&a.out, &bytes)?;
    println!(
        "sampled {} of requested {} ({} mode, strategy {})",
        picked.len(),
        a.target,
        a.mode,
        a.strategy
    );
    #[derive(Serialize)]
    struct Resolved<'a> {
        spec: &'a SampleSpec,
        format: &'a str,
        achieved: usize,
    }
    let resolved = Resolved {
        spec: &spec,
        format: match a.format {
            OutFormat::Text => "text",
            OutFormat::Bin => "bin",
        },
        achieved: picked.len(),
    };
    finish(
        ctx,
        "sample",
        resolved,
        Some(a.seed),
        &[&a.tree, &a.data],
        std::slice::from_ref(&a.out),
        manifest_path(&a.out, false),
    )
}

fn file_token(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

pub fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> Result<(), Failure> {
    let params: SimulateParams = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
            toml::from_str(&text).map_err(|e| Failure::arg(format!("{}: {e}", p.display())))?
        }
        None => SimulateParams::default(),
    };
    if a.runs == 0 {
        return Err(Failure::arg("--runs must be >= 1"));
    }
    ensure_dir(&a.out)?;
    #[derive(Serialize)]
    struct Row<'a> {
        config_name: &'a str,
        seed: u64,
        kl_to_uniform: f64,
    }
    let mut runs = Vec::new();
    for seed in a.seed..a.seed + a.runs {
        runs.push(simulate(&params, seed)?);
    }
    let rows: Vec<Row> = runs
        .iter()
        .flat_map(|r| r.rows.iter())
        .map(|r| Row {
            config_name: &r.config_name,
            seed: r.seed,
            kl_to_uniform: r.kl_to_uniform,
        })
        .collect();
    for r in &rows {
        println!("seed {:>3}  {:<22} {:.6}", r.seed, r.config_name, r.kl_to_uniform);
    }
    let csv_path = a.out.join("simulate.csv");
    write_atomic(&csv_path, &csv_bytes(&rows)?)?;
    let mut outputs = vec![csv_path];
    if a.svg {
        let w = params.mixture.half_width;
        let frame = Frame { x: (-w, w), y: (-w, w) };
        for run in &runs {
            let cloud: Vec<(f64, f64)> = run.data.iter_rows().map(|r| (r[0] as f64, r[1] as f64)).collect();
            for row in &run.rows {
                let cs: Vec<(f64, f64)> = row.centroids.iter_rows().map(|r| (r[0] as f64, r[1] as f64)).collect();
                let title = format!("{} (seed {}), KL {:.4}", row.config_name, row.seed, row.kl_to_uniform);
                let mut fig = Figure::new(frame, &title, "x", "y");
                fig.points(&cloud, 0.6, "#bbbbbb", Some("data"))
                    .points(&cs, 2.2, PALETTE[1], Some("centroids"));
                let p = a.out.join(format!(
                    "simulate_{}_seed{}.svg",
                    file_token(&row.config_name),
                    row.seed
                ));
                write_atomic(&p, fig.render().as_bytes())?;
                outputs.push(p);
            }
        }
    }
    let config_inputs: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
    finish(
        ctx,
        "simulate",
        &params,
        Some(a.seed),
        &config_inputs,
        &outputs,
        manifest_path(&a.out, true),
    )
}

fn density_of(kind: DensityKind) -> Density1d {
    match kind {
        DensityKind::Normal => Density1d::truncated_normal(),
        DensityKind::Bimodal => Density1d::truncated_bimodal(),
        DensityKind::Exponential => Density1d::truncated_exponential(),
    }
}

pub fn cmd_zador(ctx: &Context, a: &ZadorArgs) -> Result<(), Failure> {
    if a.exponents.is_empty() {
        return Err(Failure::arg("--s needs at least one exponent"));
    }
    let density = density_of(a.density);
    ensure_dir(&a.out)?;
    #[derive(Serialize)]
    struct Row {
        s: f64,
        kl_vs_p: f64,
        kl_vs_p13: f64,
        kl_vs_uniform: f64,
    }
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for &s in &a.exponents {
        let mut params = ZadorParams::new(a.samples, a.k, s);
        params.bins = a.bins;
        let r = zador_experiment_1d(&density, &params, a.seed)?;
        println!(
            "s={s}: kl_vs_p={:.5} kl_vs_p13={:.5} kl_vs_uniform={:.5}",
            r.kl_vs_p, r.kl_vs_p13, r.kl_vs_uniform
        );
        if a.svg {
            let (lo, hi) = density.support();
            let width = (hi - lo) / a.bins as f64;
            let mids = |v: &[f64]| -> Vec<(f64, f64)> {
                v.iter()
                    .enumerate()
                    .map(|(i, &m)| (lo + (i as f64 + 0.5) * width, m))
                    .collect()
            };
            let p = density.bin_masses(a.bins, 1.0);
            let p13 = density.bin_masses(a.bins, 1.0 / 3.0);
            let top = r.histogram.iter().chain(&p).chain(&p13).cloned().fold(0.0, f64::max);
            let frame = Frame {
                x: (lo, hi),
                y: (0.0, top * 1.1),
            };
            let mut fig = Figure::new(frame, &format!("centroid histogram, s = {s}"), "x", "mass per bin");
            fig.bars(lo, width, &r.histogram, PALETTE[0], Some("centroids"))
                .line(&mids(&p), PALETTE[1], Some("p"))
                .line(&mids(&p13), PALETTE[2], Some("p^(1/3)"));
            let path = a.out.join(format!("zador_s{}.svg", file_token(&s.to_string())));
            write_atomic(&path, fig.render().as_bytes())?;
            outputs.push(path);
        }
        rows.push(Row {
            s,
            kl_vs_p: r.kl_vs_p,
            kl_vs_p13: r.kl_vs_p13,
            kl_vs_uniform: r.kl_vs_uniform,
        });
    }
    let csv_path = a.out.join("zador.csv");
    write_atomic(&csv_path, &csv_bytes(&rows)?)?;
    outputs.insert(0, csv_path);
    #[derive(Serialize)]
    struct Resolved<'a> {
        density: &'a Density1d,
        exponents: &'a [f64],
        samples: usize,
        k: usize,
        bins: usize,
    }
    let resolved = Resolved {
        density: &density,
        exponents: &a.exponents,
        samples: a.samples,
        k: a.k,
        bins: a.bins,
    };
    finish(
        ctx,
        "zador",
        resolved,
        Some(a.seed),
        &[],
        &outputs,
        manifest_path(&a.out, true),
    )
}

pub fn cmd_kl_check(ctx: &Context, a: &KlCheckArgs) -> Result<(), Failure> {
    if a.ts.is_empty() {
        return Err(Failure::arg("--t needs at least one value"));
    }
    #[derive(Serialize)]
    struct Row {
        t: f64,
        checks: usize,
        violations: usize,
        worst_gap: f64,
        uniform_gap: f64,
    }
    let mut rows = Vec::new();
    for &t in &a.ts {
        let r = tempering_search(a.trials, a.max_support, &[t], a.seed)?;
        println!(
            "t={t}: {} checks, {} violations, max KL(Q|U) - KL(P|U) = {:.3e}, uniform gap {:.1e}",
            r.checks, r.violations, r.worst_gap, r.uniform_gap
        );
        rows.push(Row {
            t,
            checks: r.checks,
            violations: r.violations,
            worst_gap: r.worst_gap,
            uniform_gap: r.uniform_gap,
        });
    }
    let violations: usize = rows.iter().map(|r| r.violations).sum();
    if let Some(out) = &a.out {
        ensure_parent(out)?;
        write_atomic(out, &csv_bytes(&rows)?)?;
        #[derive(Serialize)]
        struct Resolved<'a> {
            trials: usize,
            max_support: usize,
            ts: &'a [f64],
        }
        let resolved = Resolved {
            trials: a.trials,
            max_support: a.max_support,
            ts: &a.ts,
        };
        finish(
            ctx,
            "kl-check",
            resolved,
            Some(a.seed),
            &[],
            std::slice::from_ref(out),
            manifest_path(out, false),
        )?;
    }
    if violations > 0 {
        return Err(Failure::new(1, format!("{violations} counterexamples found")));
    }
    println!("no counterexamples");
    Ok(())
}

fn load_labels(path: &Path, n: usize) -> Result<Vec<u32>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let labels = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<u32>()
                .map_err(|e| Failure::new(3, format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<u32>, Failure>>()?;
    if labels.len() != n {
        return Err(Failure::new(
            4,
            format!("{} holds {} labels for {n} points", path.display(), labels.len()),
        ));
    }
    Ok(labels)
}

pub fn cmd_stats(ctx: &Context, a: &StatsArgs) -> Result<(), Failure> {
    let tree = load_tree(&a.tree)?;
    let data = load_dataset(&a.data)?;
    check_pair(&tree, &data)?;
    let labels = load_labels(&a.labels, data.n())?;
    let stats = balance_stats(data.matrix(), &tree, &labels, a.knn)?;
    ensure_dir(&a.out)?;

    #[derive(Serialize)]
    struct Fits {
        count_slope: Option<f64>,
        count_intercept: Option<f64>,
        size_slope: Option<f64>,
        size_intercept: Option<f64>,
    }
    let fits = Fits {
        count_slope: stats.count_fit.map(|f| f.slope),
        count_intercept: stats.count_fit.map(|f| f.intercept),
        size_slope: stats.size_fit.map(|f| f.slope),
        size_intercept: stats.size_fit.map(|f| f.intercept),
    };
    #[derive(Serialize)]
    struct Row {
        class_id: u32,
        class_size: usize,
        cluster_count: usize,
        mean_cluster_size: Option<f64>,
    }
    let rows: Vec<Row> = stats
        .classes
        .iter()
        .map(|c| Row {
            class_id: c.class_id,
            class_size: c.class_size,
            cluster_count: c.cluster_count,
            mean_cluster_size: c.mean_cluster_size,
        })
        .collect();
    let empty = rows.iter().filter(|r| r.cluster_count == 0).count();
    if empty > 0 {
        println!("{empty} classes received no top-level cluster");
    }
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!(
        "cluster count vs class size: slope {}; mean cluster size vs class size: slope {}",
        show(fits.count_slope),
        show(fits.size_slope)
    );
    let stats_path = a.out.join("stats.csv");
    let fits_path = a.out.join("fits.csv");
    write_atomic(&stats_path, &csv_bytes(&rows)?)?;
    write_atomic(&fits_path, &csv_bytes(&[&fits])?)?;
    let mut outputs = vec![stats_path, fits_path];
    if a.svg {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.class_size as f64, r.cluster_count as f64))
            .collect();
        let mut fig = Figure::new(
            Frame::fit(pts.iter().copied()),
            "clusters per class",
            "class size",
            "clusters",
        );
        fig.points(&pts, 3.0, PALETTE[0], Some("classes"));
        if let Some(f) = stats.count_fit {
            let (x0, x1) = pts
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let line = [(x0, f.intercept + f.slope * x0), (x1, f.intercept + f.slope * x1)];
            fig.line(&line, PALETTE[1], Some("least squares"));
        }
        let p = a.out.join("stats.svg");
        write_atomic(&p, fig.render().as_bytes())?;
        outputs.push(p);
    }
    #[derive(Serialize)]
    struct Resolved {
        knn: usize,
    }
    finish(
        ctx,
        "stats",
        Resolved { knn: a.knn },
        None,
        &[&a.data, &a.tree, &a.labels],
        &outputs,
        manifest_path(&a.out, true),
    )
}

pub fn cmd_gen_mixture(ctx: &Context, a: &GenMixtureArgs) -> Result<(), Failure> {
    let spec = MixtureSpec {
        n: a.n,
        ..MixtureSpec::default()
    };
    let data = gen_mixture(&spec, a.seed)?;
    ensure_parent(&a.out)?;
    write_atomic(&a.out, &data.to_bytes())?;
    println!("wrote {} points in {} dimensions", data.n(), data.d());
    finish(
        ctx,
        "gen-mixture",
        &spec,
        Some(a.seed),
        &[],
        std::slice::from_ref(&a.out),
        manifest_path(&a.out, false),
    )
}

pub fn cmd_gen_pool(ctx: &Context, a: &GenPoolArgs) -> Result<(), Failure> {
    if a.classes == 0 || a.total == 0 {
        return Err(Failure::arg("--classes and --total must be >= 1"));
    }
    let spec = PoolSpec::for_total(a.classes, a.alpha, a.total);
    let (data, labels) = power_law_pool(&spec, a.alpha, a.seed)?;
    ensure_parent(&a.out)?;
    ensure_parent(&a.labels)?;
    write_atomic(&a.out, &data.to_bytes())?;
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(&a.labels, text.as_bytes())?;
    println!("wrote {} points over {} classes", data.n(), a.classes);
    #[derive(Serialize)]
    struct Resolved {
        classes: usize,
        per_class: usize,
        dim: usize,
        spacing: f64,
        sigma: f64,
        alpha: f64,
    }
    let resolved = Resolved {
        classes: spec.classes,
        per_class: spec.per_class,
        dim: spec.dim,
        spacing: spec.spacing,
        sigma: spec.sigma,
        alpha: a.alpha,
    };
    finish(
        ctx,
        "gen-pool",
        resolved,
        Some(a.seed),
        &[],
        &[a.out.clone(), a.labels.clone()],
        manifest_path(&a.out, false),
    )
}

/// Runs the recorded argv again; exit 1 when any output checksum changes.
pub fn cmd_rerun(a: &RerunArgs) -> Result<(), Failure> {
    let m = RunManifest::load(&a.manifest)?;
    if m.command == "rerun" || m.args.first().map(String::as_str) == Some("rerun") {
        return Err(Failure::arg("refusing to replay a rerun"));
    }
    let before: BTreeMap<String, String> = m.inputs.clone();
    for (path, sum) in &before {
        if file_sha256(Path::new(path))? != *sum {
            return Err(Failure::new(4, format!("input {path} changed since the recorded run")));
        }
    }
    let code = crate::run(std::iter::once("hikm".to_string()).chain(m.args.iter().cloned()));
    if code != 0 {
        return Err(Failure::new(code, "replayed command failed"));
    }
    let mut changed = Vec::new();
    for (path, sum) in &m.outputs {
        if file_sha256(Path::new(path))? != *sum {
            changed.push(path.clone());
        }
    }
    if !changed.is_empty() {
        return Err(Failure::new(
            1,
            format!("outputs differ from the recorded run: {}", changed.join(", ")),
        ));
    }
    println!("{} outputs reproduced bit-exactly", m.outputs.len());
    Ok(())
}
