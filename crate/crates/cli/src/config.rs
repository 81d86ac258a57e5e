//! Experiment configuration: a JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use diffsynth::models::{Layout, ModelSpec, Preset, Variant};
use diffsynth::tasks::{Task, TaskKind};
use diffsynth::train::TrainConfig;
use serde::{Deserialize, Serialize};

/// Optional overrides of a preset's model sizes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sizes {
    pub m: Option<usize>,
    pub registers: Option<usize>,
    pub program_len: Option<usize>,
    pub timesteps: Option<usize>,
    pub prefix: Option<usize>,
    pub body: Option<usize>,
    pub suffix: Option<usize>,
    pub max_list_len: Option<usize>,
}

impl Sizes {
    pub fn apply(&self, spec: &mut ModelSpec) {
        let set = |field: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut spec.m, self.m);
        set(&mut spec.registers, self.registers);
        if spec.variant.is_assembly() {
            set(&mut spec.program_len, self.program_len);
            set(&mut spec.timesteps, self.timesteps);
        } else {
            set(&mut spec.prefix, self.prefix);
            set(&mut spec.body, self.body);
            set(&mut spec.suffix, self.suffix);
        }
        set(&mut spec.max_list_len, self.max_list_len);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerateConfig {
    pub time_limit_secs: f64,
    pub max_nodes: Option<u64>,
}

impl Default for EnumerateConfig {
    fn default() -> Self {
        EnumerateConfig {
            time_limit_secs: 60.0,
            max_nodes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Model names such as `C+T+I` or `ctpi`.
    pub models: Vec<String>,
    pub tasks: Vec<String>,
    /// Fixed parameter of `dupK` and `getK`.
    pub k: Option<usize>,
    /// `None` uses each task's own preset.
    pub preset: Option<String>,
    pub sizes: Sizes,
    /// Epochs per restart; overrides `train.epochs`.
    pub epochs: usize,
    pub train: TrainConfig,
    pub restarts: usize,
    pub groups: u32,
    pub output: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub jobs: Option<usize>,
    pub enumerate: EnumerateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: vec!["C+T+I".into()],
            tasks: vec!["len".into()],
            k: None,
            preset: None,
            sizes: Sizes::default(),
            epochs: 1500,
            train: TrainConfig::default(),
            restarts: 20,
            groups: 1,
            output: PathBuf::from("results"),
            seed: 0,
            jobs: None,
            enumerate: EnumerateConfig::default(),
        }
    }
}

/// One (model, task) cell of an experiment, fully resolved.
#[derive(Clone, Debug)]
pub struct Cell {
    pub task: Task,
    pub preset: Preset,
    pub layout: Layout,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Restore the full-size protocol: 100 restarts on each of 3 example
    /// groups, 3500 epochs.
    pub fn paper_scale(&mut self) {
        self.restarts = 100;
        self.groups = 3;
        self.epochs = 3500;
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        if self.models.is_empty() {
            bail!("no models selected");
        }
        let mut out = vec![];
        for m in &self.models {
            if m.eq_ignore_ascii_case("all") {
                out.extend(Variant::REPORT_ORDER);
            } else {
                out.push(m.parse()?);
            }
        }
        out.dedup();
        Ok(out)
    }

    pub fn task_kinds(&self) -> Result<Vec<TaskKind>> {
        if self.tasks.is_empty() {
            bail!("no tasks selected");
        }
        let mut out = vec![];
        for t in &self.tasks {
            if t.eq_ignore_ascii_case("all") {
                out.extend(TaskKind::ALL);
            } else {
                out.push(t.parse()?);
            }
        }
        Ok(out)
    }

    pub fn preset_for(&self, kind: TaskKind) -> Result<Preset> {
        Ok(match &self.preset {
            Some(p) => p.parse()?,
            None => kind.default_preset(),
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            seed: self.seed,
            ..self.train.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cell(&self, variant: Variant, kind: TaskKind) -> Result<Cell> {
        let preset = self.preset_for(kind)?;
        let mut spec = preset.spec(variant, &kind.inputs());
        self.sizes.apply(&mut spec);
        let k = if kind.takes_fixed_k() {
            Some(self.k.with_context(|| format!("task {} needs --k", kind.name()))?)
        } else {
            None
        };
        let task = Task::new(kind, k, spec.m, spec.max_list_len)?;
        let layout = Layout::new(&spec)?;
        Ok(Cell {
            task,
            preset,
            layout,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            bail!("restarts must be at least 1");
        }
        if self.groups == 0 {
            bail!("groups must be at least 1");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be at least 1");
        }
        if !(self.enumerate.time_limit_secs > 0.0) || self.enumerate.max_nodes == Some(0) {
            bail!("the enumeration budget must be positive");
        }
        self.train_config()?;
        for v in self.variants()? {
            for t in self.task_kinds()? {
                self.cell(v, t)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"models": ["ctpi", "A"], "tasks": ["sum"], "train": {"clip": 5.0}}"#).unwrap();
        assert_eq!(cfg.variants().unwrap(), vec![Variant::CTI, Variant::A]);
        assert_eq!(cfg.restarts, 20);
        assert_eq!(cfg.train_config().unwrap().epochs, 1500);
        assert_eq!(cfg.train.clip, 5.0);
        assert_eq!(cfg.train.learning_rate, 0.1);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"restart": 3}"#).is_err());
        let cfg = ExperimentConfig {
            tasks: vec!["dupK".into()],
            ..Default::default()
        };
        assert!(cfg.validate().is_err(), "dupK without k");
        let cfg = ExperimentConfig {
            models: vec!["B".into()],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sizes_override_the_preset() {
        let cfg = ExperimentConfig {
            sizes: Sizes {
                m: Some(8),
                body: Some(1),
                ..Default::default()
            },
            ..Default::default()
        };
        let cell = cfg.cell(Variant::CTI, TaskKind::Len).unwrap();
        assert_eq!(cell.layout.spec.m, 8);
        assert_eq!(cell.layout.spec.body, 1);
        assert_eq!(cell.task.m, 8);
    }

    #[test]
    fn paper_scale_restores_full_protocol() {
        let mut cfg = ExperimentConfig::default();
        cfg.paper_scale();
        assert_eq!((cfg.restarts, cfg.groups, cfg.epochs), (100, 3, 3500));
    }
}
