use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use diffsynth::discrete::{enumerate, pretty, Budget, ConcreteProgram};
use diffsynth::tasks::TaskKind;
use diffsynth::train::{fits_examples, success_ratio, RunResult};
use diffsynth::value::Example;
use serde::Serialize;

use crate::config::{Cell, ExperimentConfig};
use crate::report::{self, EnumerateRow, SummaryRow};

#[derive(Serialize)]
struct RunRecord<'a> {
    model: &'a str,
    task: &'a str,
    preset: &'a str,
    #[serde(flatten)]
    run: &'a RunResult,
}

fn init_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        // Fails only if a pool was already installed, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn write_program(dir: &Path, file: &str, header: &str, cell: &Cell, program: &ConcreteProgram) -> Result<()> {
    let text = pretty(&cell.layout, program)?;
    let path = dir.join("programs").join(file);
    fs::write(&path, format!("{header}\n{text}")).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    init_pool(cfg.jobs)?;
    let out = &cfg.output;
    fs::create_dir_all(out.join("programs")).with_context(|| format!("creating {}", out.display()))?;
    let train = cfg.train_config()?;
    let mut runs_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("runs.jsonl"))?;
    for variant in cfg.variants()? {
        for kind in cfg.task_kinds()? {
            let cell = cfg.cell(variant, kind)?;
            let task_name = cell.task.name();
            let sets = (0..cfg.groups)
                .map(|g| cell.task.generate(g, cfg.seed))
                .collect::<diffsynth::Result<Vec<_>>>()?;
            let t0 = Instant::now();
            let summary = success_ratio(&cell.layout, &sets, cell.task.output(), &train, cfg.restarts)?;
            println!(
                "{:<6} {:<12} success {:.2}  zero loss {:.2}  ({} runs, {:.1?})",
                variant.name(),
                task_name,
                summary.success_ratio,
                summary.zero_loss_ratio,
                summary.runs.len(),
                t0.elapsed()
            );
            let mut rows = vec![];
            for set in &sets {
                let runs: Vec<&RunResult> = summary.runs.iter().filter(|r| r.group == set.group).collect();
                let n = runs.len() as f64;
                rows.push(SummaryRow {
                    model: variant.name().into(),
                    task: task_name.clone(),
                    group: set.group,
                    restarts: runs.len(),
                    success_ratio: runs.iter().filter(|r| r.success).count() as f64 / n,
                    zero_loss_ratio: runs.iter().filter(|r| r.zero_loss).count() as f64 / n,
                });
            }
            for r in &summary.runs {
                let rec = RunRecord {
                    model: variant.name(),
                    task: &task_name,
                    preset: cell.preset.name(),
                    run: r,
                };
                writeln!(runs_file, "{}", serde_json::to_string(&rec)?)?;
                if r.success {
                    let header = format!(
                        "# {} on {} (group {}, restart {}, loss {:.3e})",
                        variant.name(),
                        task_name,
                        r.group,
                        r.restart,
                        r.final_loss
                    );
                    let file = format!("{}_{}_g{}_r{}.txt", variant.slug(), task_name, r.group, r.restart);
                    write_program(out, &file, &header, &cell, &r.program)?;
                }
            }
            report::merge_summary(out, rows)?;
        }
    }
    print!("\n{}", report::report_dir(out)?);
    Ok(())
}

pub fn run_enumerate(cfg: &ExperimentConfig, examples: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let out = &cfg.output;
    fs::create_dir_all(out.join("programs")).with_context(|| format!("creating {}", out.display()))?;
    let custom: Option<Vec<Example>> = match examples {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
        None => None,
    };
    let budget = Budget {
        max_nodes: cfg.enumerate.max_nodes.unwrap_or(u64::MAX),
        max_time: Some(Duration::from_secs_f64(cfg.enumerate.time_limit_secs)),
    };
    let mut rows = vec![];
    for variant in cfg.variants()? {
        for kind in cfg.task_kinds()? {
            let cell = cfg.cell(variant, kind)?;
            let task_name = cell.task.name();
            let set = cell.task.generate(0, cfg.seed)?;
            let (train, test) = match &custom {
                Some(ex) => (ex.clone(), vec![]),
                None => (set.train, set.test),
            };
            let outcome = enumerate(&cell.layout, &train, cell.task.output(), budget)?;
            let solved = outcome
                .program
                .as_ref()
                .is_some_and(|p| fits_examples(&cell.layout, p, &test, cell.task.output()));
            println!(
                "{:<6} {:<12} {}  ({} nodes, {:.2}s{})",
                variant.name(),
                task_name,
                u8::from(solved),
                outcome.nodes,
                outcome.elapsed.as_secs_f64(),
                if outcome.exhausted { ", space exhausted" } else { "" }
            );
            if let (true, Some(p)) = (solved, &outcome.program) {
                let header = format!("# enumerated {} program for {}", variant.name(), task_name);
                write_program(out, &format!("enum_{}_{}.txt", variant.slug(), task_name), &header, &cell, p)?;
            }
            rows.push(EnumerateRow {
                model: variant.name().into(),
                task: task_name,
                group: 0,
                solved: u8::from(solved),
                nodes: outcome.nodes,
                seconds: outcome.elapsed.as_secs_f64(),
            });
        }
    }
    report::merge_enumerate(out, rows)?;
    Ok(())
}

pub fn list_tasks() {
    for kind in TaskKind::ALL {
        let inputs: Vec<String> = kind.inputs().iter().map(|k| format!("{k:?}").to_lowercase()).collect();
        println!(
            "{:<12} ({}) -> {:<6} [{}] {}",
            kind.name(),
            inputs.join(", "),
            format!("{:?}", kind.output()).to_lowercase(),
            kind.default_preset(),
            kind.description()
        );
    }
}
