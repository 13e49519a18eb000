use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::Parser;
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sltree::scene::io::{load_camera, load_scene, save_camera, save_scene};
use sltree::scene::{gen_synthetic_tree, oracle_cut, orbit_camera, GenParams};
use sltree::simarch::{exhaustive_baseline, simulate_end_to_end, ArchConfig, SimReport, CSV_HEADER};
use sltree::sltree::{build_sltree, build_sltree_with_stats, read_sltree, write_sltree};
use sltree::splat::{image_metrics, render, write_ppm, BlendMode};
use sltree::traversal::{schedule_dynamic, schedule_static, traverse, workload_report, Cut, WorkloadReport};
use sltree::{Camera, LodTree, SlTree};

use crate::{
    Cli, Command, CompareArgs, GenArgs, OutArgs, PartitionArgs, RenderArgs, RunArgs, Schedule, SimulateArgs, SweepArgs,
    TraverseArgs, ViewArgs,
};

/// Bad arguments or config content; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err
        .chain()
        .any(|e| e.is::<Usage>() || matches!(e.downcast_ref::<sltree::Error>(), Some(sltree::Error::Param(_))));
    if usage {
        2
    } else {
        1
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a),
        Command::Partition(a) => partition(a),
        Command::Traverse(a) => traverse_cmd(a),
        Command::Render(a) => render_cmd(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Run(a) => run(a),
    }
}

fn out_dir(out: &OutArgs) -> Result<&Path> {
    fs::create_dir_all(&out.out).with_context(|| format!("creating {}", out.out.display()))?;
    Ok(&out.out)
}

/// Writes `text` to `<dir>/<name>` and echoes it to stdout.
fn emit(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    say(text)
}

/// Prints a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn say(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn to_json(value: &impl Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialise")
}

fn scene(path: &Path) -> Result<LodTree> {
    load_scene(path).with_context(|| format!("loading scene {}", path.display()))
}

fn camera(view: &ViewArgs, tree: &LodTree) -> Result<Camera> {
    match &view.camera {
        Some(p) => load_camera(p).with_context(|| format!("loading camera {}", p.display())),
        None => {
            if view.size == 0 {
                return Err(Usage("--size must be at least 1".into()).into());
            }
            Ok(orbit_camera(
                tree,
                view.azimuth,
                view.elevation,
                view.distance,
                view.size,
            ))
        }
    }
}

fn arch(path: Option<&PathBuf>) -> Result<ArchConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ArchConfig::from_json(&text).map_err(|e| Usage(format!("{}: {e}", p.display())))?)
        }
        None => Ok(ArchConfig::default()),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let params = GenParams {
        seed: a.seed,
        node_budget: a.nodes,
        max_children: a.max_children,
        depth_limit: a.depth_limit,
        shrink_factor: a.shrink,
    };
    let tree = gen_synthetic_tree(&params)?;
    let dir = out_dir(&a.out)?;
    save_scene(dir.join("scene.json"), &tree)?;
    if a.with_camera {
        if a.size == 0 {
            return Err(Usage("--size must be at least 1".into()).into());
        }
        let cam = orbit_camera(&tree, a.azimuth, a.elevation, a.distance, a.size);
        save_camera(dir.join("camera.json"), &cam)?;
    }
    let summary = json!({
        "params": params,
        "nodes": tree.len(),
        "leaves": tree.leaves().count(),
        "height": tree.height(),
    });
    emit(dir, "gen.json", &to_json(&summary))
}

fn partition(a: PartitionArgs) -> Result<()> {
    let tree = scene(&a.scene.scene)?;
    let (st, stats) = build_sltree_with_stats(&tree, a.tau)?;
    let dir = out_dir(&a.out)?;
    write_sltree(dir.join("scene.slt"), &st)?;
    let (m0, s0) = stats.initial_mean_std();
    let (m1, s1) = stats.final_mean_std();
    let summary = json!({
        "tau_s": a.tau,
        "nodes": tree.len(),
        "subtrees": st.len(),
        "initial": {"count": stats.initial_sizes.len(), "mean": m0, "stddev": s0},
        "final": {"count": stats.final_sizes.len(), "mean": m1, "stddev": s1},
        "initial_sizes": stats.initial_sizes,
        "final_sizes": stats.final_sizes,
    });
    emit(dir, "partition.json", &to_json(&summary))
}

fn load_or_build(tree: &LodTree, sltree: Option<&PathBuf>, tau: usize) -> Result<SlTree> {
    match sltree {
        Some(p) => {
            let st = read_sltree(p).with_context(|| format!("loading {}", p.display()))?;
            st.validate_against(tree).context("SLT file does not match the scene")?;
            Ok(st)
        }
        None => Ok(build_sltree(tree, tau)?),
    }
}

#[derive(Serialize, Deserialize)]
struct TraverseReport {
    epsilon: f64,
    tau_s: usize,
    schedule: String,
    cut: Cut,
    workload: WorkloadReport,
}

fn traverse_cmd(a: TraverseArgs) -> Result<()> {
    let tree = scene(&a.scene.scene)?;
    let st = load_or_build(&tree, a.sltree.as_ref(), a.tau)?;
    let cam = camera(&a.view, &tree)?;
    let (cut, stats) = match a.schedule {
        Schedule::Dynamic => schedule_dynamic(&st, &cam, a.epsilon, a.workers)?,
        Schedule::Static => schedule_static(&st, &cam, a.epsilon, a.workers)?,
        Schedule::Threads => traverse(&st, &cam, a.epsilon, a.workers)?,
    };
    let report = TraverseReport {
        epsilon: a.epsilon,
        tau_s: st.tau_s(),
        schedule: format!("{:?}", a.schedule).to_lowercase(),
        cut,
        workload: workload_report(&stats),
    };
    emit(out_dir(&a.out)?, "cut.json", &to_json(&report))
}

fn render_cmd(a: RenderArgs) -> Result<()> {
    let tree = scene(&a.scene.scene)?;
    let cam = camera(&a.view, &tree)?;
    let mut cut = Cut::from_unsorted(oracle_cut(&tree, &cam, a.epsilon));
    if a.weights {
        cut = cut.with_weights(&tree, &cam, a.epsilon);
    }
    let gaussians = tree.gaussians();
    let weights = cut.weights.as_deref();
    let mode = BlendMode::from(a.mode);
    let out = render(&gaussians, &cut.selected, weights, &cam, mode);
    let reference = render(&gaussians, &cut.selected, weights, &cam, BlendMode::Reference);
    let metrics = image_metrics(&reference.image, &out.image)?;
    let dir = out_dir(&a.out)?;
    write_ppm(&out.image, dir.join("render.ppm"))?;
    let summary = json!({
        "mode": mode,
        "epsilon": a.epsilon,
        "width": cam.width,
        "height": cam.height,
        "gaussians": cut.len(),
        "divergence": out.stats,
        "versus_reference": metrics,
    });
    emit(dir, "render.json", &to_json(&summary))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg = arch(a.arch.as_ref())?;
    let tree = scene(&a.scene.scene)?;
    let st = build_sltree(&tree, a.tau)?;
    let cam = camera(&a.view, &tree)?;
    let (image, report) = simulate_end_to_end(&st, &cam, a.epsilon, &cfg, a.mode.into())?;
    let baseline = exhaustive_baseline(&tree, &cfg)?;
    let dir = out_dir(&a.out)?;
    write_ppm(&image, dir.join("simulate.ppm"))?;
    fs::write(dir.join("report.csv"), format!("{CSV_HEADER}\n{}\n", report.csv_row()))?;
    let summary = json!({
        "report": report,
        "baseline_lod_dram_bytes": baseline.lod_dram_bytes,
        "lod_traffic_reduction": reduction(&report, &baseline),
    });
    emit(dir, "report.json", &to_json(&summary))
}

fn reduction(report: &SimReport, baseline: &SimReport) -> f64 {
    if baseline.lod_dram_bytes == 0 {
        return 0.0;
    }
    1.0 - report.lod_dram_bytes as f64 / baseline.lod_dram_bytes as f64
}

fn compare(a: CompareArgs) -> Result<()> {
    let tree = scene(&a.scene.scene)?;
    let dir = out_dir(&a.out)?;
    if a.oracle {
        let path = a.cut.clone().unwrap_or_else(|| dir.join("cut.json"));
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let saved: TraverseReport =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let cam = camera(&a.view, &tree)?;
        let reference = oracle_cut(&tree, &cam, saved.epsilon);
        let identical = saved.cut.selected == reference;
        say(&format!("cuts identical: {identical}"))?;
        let summary = json!({
            "epsilon": saved.epsilon,
            "cut_size": saved.cut.len(),
            "oracle_size": reference.len(),
            "cuts_identical": identical,
        });
        return emit(dir, "compare.json", &to_json(&summary));
    }
    let cam = camera(&a.view, &tree)?;
    let cut = oracle_cut(&tree, &cam, a.epsilon);
    let gaussians = tree.gaussians();
    let reference = render(&gaussians, &cut, None, &cam, BlendMode::Reference);
    let grouped = render(&gaussians, &cut, None, &cam, BlendMode::Grouped);
    let metrics = image_metrics(&reference.image, &grouped.image)?;
    let summary = json!({
        "epsilon": a.epsilon,
        "gaussians": cut.len(),
        "reference": reference.stats,
        "grouped": grouped.stats,
        "grouped_versus_reference": metrics,
    });
    emit(dir, "compare.json", &to_json(&summary))
}

/// `a,b,c`, or `a..b` inclusive when `ranges` is set.
fn parse_list<T>(flag: &str, text: &str, ranges: bool, step: impl Fn(T) -> Option<T>) -> Result<Vec<T>>
where
    T: FromStr + Copy + PartialOrd,
{
    let bad = || Usage(format!("--{flag}: cannot parse {text:?}"));
    if let Some((lo, hi)) = text.split_once("..") {
        if !ranges {
            return Err(bad().into());
        }
        let (lo, hi): (T, T) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
        );
        if lo > hi {
            return Err(bad().into());
        }
        let mut out = vec![lo];
        while let Some(next) = step(*out.last().expect("non-empty")).filter(|n| *n <= hi) {
            out.push(next);
        }
        return Ok(out);
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad().into()))
        .collect()
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = arch(a.arch.as_ref())?;
    let epsilons: Vec<f64> = parse_list("epsilon", &a.epsilon, false, |_| None)?;
    let taus: Vec<usize> = parse_list("tau", &a.tau, true, |t: usize| t.checked_add(1))?;
    let workers: Vec<usize> = parse_list("workers", &a.workers, true, |w: usize| w.checked_add(1))?;
    let tree = scene(&a.scene.scene)?;
    let cam = camera(&a.view, &tree)?;
    let baseline = exhaustive_baseline(&tree, &cfg)?;
    let mut csv = format!(
        "epsilon,tau,workers,cut_size,max_worker_load,worker_mean,worker_stddev,imbalance,lod_traffic_reduction,\
         {CSV_HEADER}\n"
    );
    for &tau in &taus {
        let st = build_sltree(&tree, tau)?;
        for &eps in &epsilons {
            let (_, report) = simulate_end_to_end(&st, &cam, eps, &cfg, a.mode.into())?;
            for &w in &workers {
                let (cut, stats) = schedule_dynamic(&st, &cam, eps, w)?;
                let wl = workload_report(&stats);
                csv.push_str(&format!(
                    "{eps},{tau},{w},{},{},{:.3},{:.3},{:.6},{:.6},{}\n",
                    cut.len(),
                    wl.max,
                    wl.mean,
                    wl.stddev,
                    wl.imbalance,
                    reduction(&report, &baseline),
                    report.csv_row()
                ));
            }
        }
    }
    let dir = out_dir(&a.out)?;
    emit(dir, "sweep.csv", csv.trim_end())
}

fn run(a: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", a.config.display())))?;
    let argv = crate::config::to_argv(&doc)?;
    let cli = Cli::try_parse_from(argv).map_err(|e| Usage(e.render().to_string()))?;
    dispatch(cli.command)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        let inc = |v: usize| v.checked_add(1);
        assert_eq!(parse_list("w", "1..4", true, inc).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_list("w", "3, 5", true, inc).unwrap(), vec![3, 5]);
        assert!(parse_list("w", "4..1", true, inc).is_err());
        assert!(parse_list::<f64>("e", "1..2", false, |_| None).is_err());
        assert_eq!(
            parse_list::<f64>("e", "0.5,2", false, |_| None).unwrap(),
            vec![0.5, 2.0]
        );
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(exit_code(&Usage("x".into()).into()), 2);
        assert_eq!(exit_code(&anyhow::Error::from(sltree::Error::Param("x".into()))), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), 1);
    }
}
