//! Python bindings: build models, generate task examples, run and print
//! concrete programs, train, and enumerate.

use ::diffsynth as core;
use core::discrete::{self, Budget, ConcreteProgram};
use core::models::{Layout, Preset, Variant};
use core::tasks::{Task as CoreTask, TaskKind};
use core::train::{self, TrainConfig};
use core::value::{Example, Input, Output};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[derive(FromPyObject)]
enum PyValue {
    Scalar(usize),
    List(Vec<usize>),
}

impl From<PyValue> for Input {
    fn from(v: PyValue) -> Self {
        match v {
            PyValue::Scalar(x) => Input::Scalar(x),
            PyValue::List(xs) => Input::List(xs),
        }
    }
}

impl From<PyValue> for Output {
    fn from(v: PyValue) -> Self {
        match v {
            PyValue::Scalar(x) => Output::Scalar(x),
            PyValue::List(xs) => Output::List(xs),
        }
    }
}

fn output_to_py(py: Python<'_>, o: &Output) -> PyResult<Py<PyAny>> {
    Ok(match o {
        Output::Scalar(x) => x.into_pyobject(py)?.into_any().unbind(),
        Output::List(xs) => xs.clone().into_pyobject(py)?.into_any().unbind(),
    })
}

fn input_to_py(py: Python<'_>, i: &Input) -> PyResult<Py<PyAny>> {
    Ok(match i {
        Input::Scalar(x) => x.into_pyobject(py)?.into_any().unbind(),
        Input::List(xs) => xs.clone().into_pyobject(py)?.into_any().unbind(),
    })
}

/// A benchmark task with its value bounds.
#[pyclass(frozen)]
struct Task {
    inner: CoreTask,
}

#[pymethods]
impl Task {
    #[new]
    #[pyo3(signature = (name, k=None, preset="simple-loop"))]
    fn new(name: &str, k: Option<usize>, preset: &str) -> PyResult<Self> {
        let kind: TaskKind = name.parse().map_err(err)?;
        let preset: Preset = preset.parse().map_err(err)?;
        Ok(Task {
            inner: CoreTask::for_preset(kind, k, preset).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name()
    }

    /// Expected output for the given inputs.
    fn reference(&self, py: Python<'_>, inputs: Vec<PyValue>) -> PyResult<Py<PyAny>> {
        let inputs: Vec<Input> = inputs.into_iter().map(Into::into).collect();
        output_to_py(py, &self.inner.reference(&inputs).map_err(err)?)
    }

    /// `(train, test)` lists of `(inputs, output)` pairs.
    #[pyo3(signature = (group=0, seed=0))]
    fn generate(&self, py: Python<'_>, group: u32, seed: u64) -> PyResult<(Vec<(Vec<Py<PyAny>>, Py<PyAny>)>, Vec<(Vec<Py<PyAny>>, Py<PyAny>)>)> {
        let set = self.inner.generate(group, seed).map_err(err)?;
        let conv = |xs: &[Example]| -> PyResult<Vec<(Vec<Py<PyAny>>, Py<PyAny>)>> {
            xs.iter()
                .map(|e| {
                    let ins = e.inputs.iter().map(|i| input_to_py(py, i)).collect::<PyResult<_>>()?;
                    Ok((ins, output_to_py(py, &e.output)?))
                })
                .collect()
        };
        Ok((conv(&set.train)?, conv(&set.test)?))
    }

    fn __repr__(&self) -> String {
        format!("Task({:?})", self.inner.name())
    }
}

/// A model variant at a preset size, shaped for a task's inputs.
#[pyclass(frozen)]
struct Model {
    layout: Layout,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (variant, task, preset="simple-loop"))]
    fn new(variant: &str, task: &Task, preset: &str) -> PyResult<Self> {
        let variant: Variant = variant.parse().map_err(err)?;
        let preset: Preset = preset.parse().map_err(err)?;
        let mut spec = preset.spec(variant, &task.inner.inputs());
        spec.m = task.inner.m;
        spec.max_list_len = task.inner.max_list_len;
        Ok(Model {
            layout: Layout::new(&spec).map_err(err)?,
        })
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.layout.spec.variant.name()
    }

    #[getter]
    fn num_slots(&self) -> usize {
        self.layout.num_slots()
    }

    /// Number of choices of every slot.
    #[getter]
    fn slot_sizes(&self) -> Vec<usize> {
        self.layout.slots.iter().map(|s| s.size()).collect()
    }

    /// log10 of the number of distinct programs.
    #[getter]
    fn program_space_log10(&self) -> f64 {
        self.layout.program_space_log10()
    }

    /// Run the program given by one choice index per slot.
    fn run(&self, py: Python<'_>, choices: Vec<usize>, inputs: Vec<PyValue>, output: &str) -> PyResult<Option<Py<PyAny>>> {
        let kind = match output {
            "scalar" => core::value::OutputKind::Scalar,
            "bool" => core::value::OutputKind::Bool,
            "list" => core::value::OutputKind::List,
            other => return Err(err(format!("unknown output kind `{other}`"))),
        };
        let inputs: Vec<Input> = inputs.into_iter().map(Into::into).collect();
        let program = ConcreteProgram { choices };
        let out = discrete::run_program(&self.layout, &program, &inputs, kind).map_err(err)?;
        out.map(|o| output_to_py(py, &o)).transpose()
    }

    fn pretty(&self, choices: Vec<usize>) -> PyResult<String> {
        discrete::pretty(&self.layout, &ConcreteProgram { choices }).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.layout.spec.variant)
    }
}

/// Train `restarts` random restarts and return a summary dict.
#[pyfunction]
#[pyo3(signature = (model, task, restarts=5, epochs=1500, seed=0, group=0))]
fn train_model<'py>(
    py: Python<'py>,
    model: &Model,
    task: &Task,
    restarts: usize,
    epochs: usize,
    seed: u64,
    group: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let set = task.inner.generate(group, seed).map_err(err)?;
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let layout = model.layout.clone();
    let kind = task.inner.output();
    let summary = py
        .detach(move || train::success_ratio(&layout, &[set], kind, &cfg, restarts))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("success_ratio", summary.success_ratio)?;
    d.set_item("zero_loss_ratio", summary.zero_loss_ratio)?;
    let programs: Vec<Vec<usize>> = summary.runs.iter().map(|r| r.program.choices.clone()).collect();
    let success: Vec<bool> = summary.runs.iter().map(|r| r.success).collect();
    let losses: Vec<f64> = summary.runs.iter().map(|r| r.final_loss).collect();
    d.set_item("programs", programs)?;
    d.set_item("success", success)?;
    d.set_item("final_losses", losses)?;
    Ok(d)
}

/// Search for a program consistent with the task's training examples.
/// Returns the slot choices or `None`.
#[pyfunction]
#[pyo3(signature = (model, task, time_limit=60.0, seed=0))]
fn enumerate(py: Python<'_>, model: &Model, task: &Task, time_limit: f64, seed: u64) -> PyResult<Option<Vec<usize>>> {
    if !(time_limit > 0.0) {
        return Err(err("time_limit must be positive"));
    }
    let set = task.inner.generate(0, seed).map_err(err)?;
    let budget = Budget {
        max_nodes: u64::MAX,
        max_time: Some(std::time::Duration::from_secs_f64(time_limit)),
    };
    let layout = model.layout.clone();
    let kind = task.inner.output();
    let out = py
        .detach(move || discrete::enumerate(&layout, &set.train, kind, budget))
        .map_err(err)?;
    Ok(out.program.map(|p| p.choices))
}

#[pymodule]
fn diffsynth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Task>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add("VARIANTS", Variant::REPORT_ORDER.iter().map(|v| v.name()).collect::<Vec<_>>())?;
    m.add("TASKS", TaskKind::ALL.iter().map(|t| t.name()).collect::<Vec<_>>())?;
    Ok(())
}
