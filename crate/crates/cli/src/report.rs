//! Result files and the markdown success-ratio table.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use diffsynth::models::Variant;
use serde::{Deserialize, Serialize};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const ENUMERATE_FILE: &str = "enumerate.csv";
pub const REPORT_FILE: &str = "report.md";
const ENUM_COLUMN: &str = "enum";

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub task: String,
    pub group: u32,
    pub restarts: usize,
    pub success_ratio: f64,
    pub zero_loss_ratio: f64,
}

/// One row of `enumerate.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerateRow {
    pub model: String,
    pub task: String,
    pub group: u32,
    pub solved: u8,
    pub nodes: u64,
    pub seconds: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(vec![]);
    }
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("malformed row in {}", path.display())))
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn model_rank(name: &str) -> usize {
    Variant::REPORT_ORDER
        .iter()
        .position(|v| v.name() == name)
        .unwrap_or(Variant::REPORT_ORDER.len())
}

/// Replace rows with the same (model, task, group) key and rewrite the
/// file in a canonical order.
pub fn merge_summary(dir: &Path, new: Vec<SummaryRow>) -> Result<()> {
    let path = dir.join(SUMMARY_FILE);
    let mut rows: Vec<SummaryRow> = read_rows(&path)?;
    rows.retain(|r| !new.iter().any(|n| (&n.model, &n.task, n.group) == (&r.model, &r.task, r.group)));
    rows.extend(new);
    rows.sort_by(|a, b| {
        (&a.task, model_rank(&a.model), &a.model, a.group).cmp(&(&b.task, model_rank(&b.model), &b.model, b.group))
    });
    write_rows(
        &path,
        &rows,
        &["model", "task", "group", "restarts", "success_ratio", "zero_loss_ratio"],
    )
}

pub fn merge_enumerate(dir: &Path, new: Vec<EnumerateRow>) -> Result<()> {
    let path = dir.join(ENUMERATE_FILE);
    let mut rows: Vec<EnumerateRow> = read_rows(&path)?;
    rows.retain(|r| !new.iter().any(|n| (&n.model, &n.task, n.group) == (&r.model, &r.task, r.group)));
    rows.extend(new);
    rows.sort_by(|a, b| (&a.task, &a.model, a.group).cmp(&(&b.task, &b.model, b.group)));
    write_rows(&path, &rows, &["model", "task", "group", "solved", "nodes", "seconds"])
}

/// Markdown table of mean success ratios (percent) with tasks as rows and
/// models as columns; the best entry of each row is bold and missing
/// cells are dashes.
pub fn render(summary: &[SummaryRow], enumerated: &[EnumerateRow]) -> String {
    let mut cells: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    let mut tasks: Vec<String> = vec![];
    let mut models: Vec<String> = vec![];
    let mut add = |task: &str, model: &str, value: f64| {
        if !tasks.iter().any(|t| t == task) {
            tasks.push(task.to_string());
        }
        if !models.iter().any(|m| m == model) {
            models.push(model.to_string());
        }
        let e = cells.entry((task.to_string(), model.to_string())).or_insert((0.0, 0));
        e.0 += value;
        e.1 += 1;
    };
    for r in summary {
        add(&r.task, &r.model, r.success_ratio);
    }
    for r in enumerated {
        add(&r.task, ENUM_COLUMN, r.solved as f64);
    }
    models.sort_by_key(|m| (m == ENUM_COLUMN, model_rank(m), m.clone()));

    let mut out = String::new();
    out.push_str("| task |");
    for m in &models {
        out.push_str(&format!(" {m} |"));
    }
    out.push_str("\n|---|");
    for _ in &models {
        out.push_str("---:|");
    }
    out.push('\n');
    for t in &tasks {
        let values: Vec<Option<f64>> = models
            .iter()
            .map(|m| cells.get(&(t.clone(), m.clone())).map(|&(s, n)| 100.0 * s / n as f64))
            .collect();
        let best = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push_str(&format!("| {t} |"));
        for v in values {
            match v {
                Some(x) if x == best => out.push_str(&format!(" **{x:.2}** |")),
                Some(x) => out.push_str(&format!(" {x:.2} |")),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Render the table for a result directory and write it to `report.md`.
pub fn report_dir(dir: &Path) -> Result<String> {
    let summary: Vec<SummaryRow> = read_rows(&dir.join(SUMMARY_FILE))?;
    let enumerated: Vec<EnumerateRow> = read_rows(&dir.join(ENUMERATE_FILE))?;
    if summary.is_empty() && enumerated.is_empty() {
        bail!("no results in {}", dir.display());
    }
    let table = render(&summary, &enumerated);
    std::fs::write(dir.join(REPORT_FILE), &table)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, task: &str, group: u32, s: f64) -> SummaryRow {
        SummaryRow {
            model: model.into(),
            task: task.into(),
            group,
            restarts: 20,
            success_ratio: s,
            zero_loss_ratio: s,
        }
    }

    #[test]
    fn single_cell() {
        let t = render(&[row("C+T+I", "len", 0, 0.5)], &[]);
        assert_eq!(t, "| task | C+T+I |\n|---|---:|\n| len | **50.00** |\n");
    }

    #[test]
    fn columns_follow_report_order_with_dashes_and_bold() {
        let rows = [
            row("A", "len", 0, 0.0),
            row("C+T+I", "len", 0, 1.0),
            row("C+T+I", "len", 1, 0.5),
            row("C", "sum", 0, 0.25),
        ];
        let e = EnumerateRow {
            model: "C+T+I".into(),
            task: "sum".into(),
            group: 0,
            solved: 1,
            nodes: 10,
            seconds: 0.1,
        };
        let t = render(&rows, &[e]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "| task | C+T+I | C | A | enum |");
        assert_eq!(lines[2], "| len | **75.00** | - | 0.00 | - |");
        assert_eq!(lines[3], "| sum | - | 25.00 | - | **100.00** |");
    }

    #[test]
    fn merging_replaces_and_report_is_idempotent() {
        let dir = std::env::temp_dir().join(format!("diffsynth-report-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        assert!(report_dir(&dir).is_err(), "empty directory");
        merge_summary(&dir, vec![row("C", "len", 0, 0.1), row("C+T+I", "len", 0, 0.2)]).unwrap();
        merge_summary(&dir, vec![row("C", "len", 0, 0.3)]).unwrap();
        let rows: Vec<SummaryRow> = read_rows(&dir.join(SUMMARY_FILE)).unwrap();
        assert_eq!(rows, vec![row("C+T+I", "len", 0, 0.2), row("C", "len", 0, 0.3)]);
        let header = std::fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap();
        assert!(header.starts_with("model,task,group,restarts,success_ratio,zero_loss_ratio\n"));
        let a = report_dir(&dir).unwrap();
        let b = report_dir(&dir).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read_to_string(dir.join(REPORT_FILE)).unwrap(), a);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
