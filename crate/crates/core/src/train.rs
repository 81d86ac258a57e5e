//! Gradient-based synthesis: RMSProp on the example loss, random restarts,
//! discretization and success evaluation.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::discrete::{execute, ConcreteProgram};
use crate::error::{Error, Result};
use crate::machine::Lifter;
use crate::models::{build_run, Layout, ParamSet, ProgramNodes};
use crate::observe::{negative_entropy, observe};
use crate::tasks::{stream_seed, ExampleSet};
use crate::value::{Example, OutputKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// Rescale the whole gradient when its L2 norm exceeds the threshold.
    Norm,
    /// Clamp every coordinate to `[-clip, clip]`.
    Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub clip: f64,
    pub clip_mode: ClipMode,
    pub epochs: usize,
    pub entropy_weight: f64,
    /// Multiplier applied to the entropy weight after every epoch.
    pub entropy_decay: f64,
    pub init_scale: f64,
    /// A loss at or below this counts as converged to zero.
    pub zero_loss_tol: f64,
    /// Stop a restart once its loss is within `zero_loss_tol` and the
    /// discretized program fits the training examples.
    pub early_stop: bool,
    pub seed: u64,
    /// Keep the loss of every epoch in the result.
    pub record_losses: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-8,
            clip: 1.0,
            clip_mode: ClipMode::Norm,
            epochs: 3500,
            entropy_weight: 0.0,
            entropy_decay: 1.0,
            init_scale: 1.0,
            zero_loss_tol: 1e-2,
            early_stop: true,
            seed: 0,
            record_losses: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return bad("rmsprop_decay must lie in [0, 1)");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if !(self.init_scale > 0.0) {
            return bad("init_scale must be positive");
        }
        Ok(())
    }
}

/// Clip a gradient in place; returns the norm before clipping.
pub fn clip_gradient(grad: &mut [f64], clip: f64, mode: ClipMode) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    match mode {
        ClipMode::Norm => {
            if norm > clip {
                let s = clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        ClipMode::Value => grad.iter_mut().for_each(|g| *g = g.clamp(-clip, clip)),
    }
    norm
}

/// RMSProp state for a flat parameter vector.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    cache: Vec<f64>,
}

impl RmsProp {
    pub fn new(n: usize, lr: f64, decay: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            decay,
            eps,
            cache: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, &g), c) in params.iter_mut().zip(grad).zip(&mut self.cache) {
            *c = self.decay * *c + (1.0 - self.decay) * g * g;
            *p -= self.lr * g / (c.sqrt() + self.eps);
        }
    }
}

/// The training loss of a model on a fixed example batch, compiled once
/// onto a tape and re-evaluated for new parameters.
#[derive(Clone)]
pub struct Objective {
    tape: Tape,
    nodes: ProgramNodes,
    weight: NodeId,
    loss: NodeId,
    shapes: Vec<usize>,
}

impl Objective {
    pub fn new(layout: &Layout, examples: &[Example], kind: OutputKind) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("no training examples".into()));
        }
        let mut tape = Tape::new();
        let init = ParamSet::uniform(layout);
        let nodes = ProgramNodes::attach(&mut tape, &init)?;
        let mut lls = vec![];
        {
            let mut lifter = Lifter::new(&mut tape, layout.domains);
            for ex in examples {
                let mut run = build_run(&mut lifter, layout, &nodes, &ex.inputs)?;
                let cells = run.state.heap.cells(&mut lifter)?;
                lls.push(observe(&mut lifter, &run.output, &cells, kind, &ex.output)?);
            }
        }
        let total = tape.add(&lls)?;
        let nll = tape.scale(total, -1.0);
        let neg_h = negative_entropy(&mut tape, &nodes.dists)?;
        let weight = tape.constant(&[0.0]);
        let bonus = tape.mul(weight, neg_h)?;
        let loss = tape.add(&[nll, bonus])?;
        Ok(Objective {
            tape,
            nodes,
            weight,
            loss,
            shapes: layout.slots.iter().map(|s| s.size()).collect(),
        })
    }

    pub fn tape_len(&self) -> usize {
        self.tape.arena_size()
    }

    fn load(&mut self, flat: &[f64], entropy_weight: f64) -> Result<()> {
        let mut at = 0;
        for (&leaf, &n) in self.nodes.logits.iter().zip(&self.shapes) {
            self.tape.set_value(leaf, &flat[at..at + n])?;
            at += n;
        }
        self.tape.set_value(self.weight, &[entropy_weight])?;
        self.tape.forward();
        Ok(())
    }

    /// Loss at the given flattened logits.
    pub fn loss(&mut self, flat: &[f64], entropy_weight: f64) -> Result<f64> {
        self.load(flat, entropy_weight)?;
        Ok(self.tape.scalar(self.loss))
    }

    /// Loss and its gradient with respect to the flattened logits.
    pub fn loss_and_gradient(&mut self, flat: &[f64], entropy_weight: f64) -> Result<(f64, Vec<f64>)> {
        self.load(flat, entropy_weight)?;
        let loss = self.tape.scalar(self.loss);
        if !loss.is_finite() {
            return Ok((loss, vec![]));
        }
        self.tape.backward(self.loss)?;
        let mut grad = Vec::with_capacity(flat.len());
        for &leaf in &self.nodes.logits {
            grad.extend_from_slice(self.tape.adjoint(leaf));
        }
        Ok((loss, grad))
    }
}

fn unflatten(layout: &Layout, flat: &[f64]) -> ParamSet {
    let mut at = 0;
    ParamSet {
        logits: layout
            .slots
            .iter()
            .map(|s| {
                let v = flat[at..at + s.size()].to_vec();
                at += s.size();
                v
            })
            .collect(),
    }
}

/// Whether `program` reproduces every example exactly.
pub fn fits_examples(layout: &Layout, program: &ConcreteProgram, examples: &[Example], kind: OutputKind) -> bool {
    let Ok(decoded) = program.decode(layout) else {
        return false;
    };
    examples.iter().all(|ex| {
        execute(layout, &decoded, &ex.inputs)
            .ok()
            .and_then(|run| run.decode(kind))
            .is_some_and(|o| o == ex.output)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub group: u32,
    pub restart: usize,
    pub final_loss: f64,
    pub program: ConcreteProgram,
    pub train_correct: bool,
    pub test_correct: bool,
    pub success: bool,
    pub zero_loss: bool,
    pub epochs_run: usize,
    pub wall_time_ms: f64,
    /// Why the restart was abandoned, if it was.
    pub aborted: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub losses: Vec<f64>,
}

/// Train from the given initial logits.
pub fn train_from(
    layout: &Layout,
    objective: &mut Objective,
    examples: &ExampleSet,
    kind: OutputKind,
    cfg: &TrainConfig,
    init: &ParamSet,
    restart: usize,
) -> Result<RunResult> {
    cfg.validate()?;
    init.validate(layout)?;
    let start = Instant::now();
    let mut flat = init.flatten();
    let mut opt = RmsProp::new(flat.len(), cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon);
    let mut weight = cfg.entropy_weight;
    let mut losses = vec![];
    let mut aborted = None;
    let mut epochs_run = 0;
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let (loss, mut grad) = objective.loss_and_gradient(&flat, weight)?;
        last_loss = loss;
        if cfg.record_losses {
            losses.push(loss);
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            aborted = Some(Error::NonFiniteLoss { epoch }.to_string());
            break;
        }
        if cfg.early_stop && loss <= cfg.zero_loss_tol && epoch % 10 == 0 {
            let program = ConcreteProgram::discretize(&unflatten(layout, &flat));
            if fits_examples(layout, &program, &examples.train, kind) {
                break;
            }
        }
        clip_gradient(&mut grad, cfg.clip, cfg.clip_mode);
        opt.step(&mut flat, &grad);
        weight *= cfg.entropy_decay;
        epochs_run = epoch + 1;
    }
    let params = unflatten(layout, &flat);
    let final_loss = if aborted.is_some() {
        last_loss
    } else {
        let l = objective.loss(&flat, weight)?;
        if cfg.record_losses && epochs_run == cfg.epochs {
            losses.push(l);
        }
        l
    };
    let program = ConcreteProgram::discretize(&params);
    let train_correct = aborted.is_none() && fits_examples(layout, &program, &examples.train, kind);
    let test_correct = aborted.is_none() && fits_examples(layout, &program, &examples.test, kind);
    Ok(RunResult {
        group: examples.group,
        restart,
        final_loss,
        program,
        train_correct,
        test_correct,
        success: train_correct && test_correct,
        zero_loss: aborted.is_none() && final_loss <= cfg.zero_loss_tol,
        epochs_run,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        aborted,
        losses,
    })
}

/// Seed of one restart; independent across task, group and restart.
pub fn restart_seed(cfg: &TrainConfig, task: &str, group: u32, restart: usize) -> u64 {
    stream_seed(cfg.seed, task, group as u64, restart as u64 + 1)
}

/// One random restart: initialize, train, discretize and evaluate.
pub fn train_restart(
    layout: &Layout,
    objective: &mut Objective,
    examples: &ExampleSet,
    kind: OutputKind,
    cfg: &TrainConfig,
    restart: usize,
) -> Result<RunResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg, &examples.task, examples.group, restart));
    let init = ParamSet::random(layout, cfg.init_scale, &mut rng)?;
    train_from(layout, objective, examples, kind, cfg, &init, restart)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: Vec<RunResult>,
    pub success_ratio: f64,
    pub zero_loss_ratio: f64,
}

impl Summary {
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let n = runs.len().max(1) as f64;
        let success = runs.iter().filter(|r| r.success).count() as f64;
        let zero = runs.iter().filter(|r| r.zero_loss).count() as f64;
        Summary {
            success_ratio: success / n,
            zero_loss_ratio: zero / n,
            runs,
        }
    }
}

/// Train `restarts` times on every example set, in parallel on the current
/// rayon pool.
pub fn success_ratio(
    layout: &Layout,
    sets: &[ExampleSet],
    kind: OutputKind,
    cfg: &TrainConfig,
    restarts: usize,
) -> Result<Summary> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let objectives = sets
        .iter()
        .map(|s| Objective::new(layout, &s.train, kind))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..sets.len())
        .flat_map(|g| (0..restarts).map(move |r| (g, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(g, r)| {
            let mut obj = objectives[g].clone();
            train_restart(layout, &mut obj, &sets[g], kind, cfg, r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_clipping_bounds_the_norm() {
        let mut g = vec![3.0, 4.0];
        let before = clip_gradient(&mut g, 1.0, ClipMode::Norm);
        assert_eq!(before, 5.0);
        let after = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(after <= 1.0 + 1e-12);
        let mut g = vec![0.3, -0.4];
        clip_gradient(&mut g, 1.0, ClipMode::Norm);
        assert_eq!(g, vec![0.3, -0.4]);
    }

    #[test]
    fn value_clipping_clamps_coordinates() {
        let mut g = vec![3.0, -0.5, -7.0];
        clip_gradient(&mut g, 1.0, ClipMode::Value);
        assert_eq!(g, vec![1.0, -0.5, -1.0]);
    }

    #[test]
    fn rmsprop_first_step() {
        let mut opt = RmsProp::new(1, 0.1, 0.9, 1e-8);
        let mut p = vec![1.0];
        opt.step(&mut p, &[2.0]);
        let expected = 1.0 - 0.1 * 2.0 / ((0.1f64 * 4.0).sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = TrainConfig::default();
        cfg.learning_rate = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.rmsprop_decay = 1.0;
        assert!(cfg.validate().is_err());
    }
}
