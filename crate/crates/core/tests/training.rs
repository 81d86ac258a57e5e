use diffsynth::discrete::ConcreteProgram;
use diffsynth::machine::InstrKind;
use diffsynth::models::{Block, Choice, ClosureVar, Combinator, Layout, ParamSet, Preset, Variant};
use diffsynth::tasks::{Task, TaskKind};
use diffsynth::train::{success_ratio, train_from, train_restart, Objective, RunResult, TrainConfig};

fn len_setup() -> (Task, Layout) {
    let task = Task::for_preset(TaskKind::Len, None, Preset::SimpleLoop).unwrap();
    let spec = Preset::SimpleLoop.spec(Variant::CTI, &task.inputs());
    (task, Layout::new(&spec).unwrap())
}

fn len_program(layout: &Layout) -> ConcreteProgram {
    let mut p = ConcreteProgram::noops(layout);
    let body = layout.lines.iter().find(|l| l.line.block == Block::Body).unwrap();
    p.set(layout, body.instr, Choice::Instr(InstrKind::Inc)).unwrap();
    p.set(layout, body.arg1, Choice::Reg(layout.closure_reg(ClosureVar::Acc).unwrap()))
        .unwrap();
    let ls = layout.loop_slots.as_ref().unwrap();
    p.set(layout, ls.combinator.unwrap(), Choice::Combinator(Combinator::Foldli)).unwrap();
    p.set(layout, ls.list1, Choice::Reg(0)).unwrap();
    p.set(layout, ls.acc_init.unwrap(), Choice::Reg(1)).unwrap();
    p.set(layout, ls.body_result.unwrap(), Choice::Reg(layout.body_reg(0).unwrap()))
        .unwrap();
    p.set(layout, layout.ret.unwrap(), Choice::Reg(layout.loop_result_reg().unwrap()))
        .unwrap();
    p
}

fn strip_time(mut r: RunResult) -> RunResult {
    r.wall_time_ms = 0.0;
    r
}

#[test]
fn point_mass_start_on_a_solution_succeeds() {
    let (task, layout) = len_setup();
    let set = task.generate(0, 1).unwrap();
    let mut obj = Objective::new(&layout, &set.train, task.output()).unwrap();
    let init = ParamSet::point_mass(&layout, &len_program(&layout)).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let r = train_from(&layout, &mut obj, &set, task.output(), &cfg, &init, 0).unwrap();
    assert!(r.success, "{r:?}");
    assert!(r.zero_loss && r.final_loss < 1e-9);
    assert_eq!(r.epochs_run, 0, "early stopping fires on the first check");
}

#[test]
fn zero_epochs_evaluates_the_initialization() {
    let (task, layout) = len_setup();
    let set = task.generate(0, 1).unwrap();
    let mut obj = Objective::new(&layout, &set.train, task.output()).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let init = ParamSet::uniform(&layout);
    let r = train_from(&layout, &mut obj, &set, task.output(), &cfg, &init, 0).unwrap();
    assert_eq!(r.epochs_run, 0);
    assert_eq!(r.program, ConcreteProgram::discretize(&init));
    assert!(r.final_loss > 0.0);
}

#[test]
fn restarts_are_reproducible() {
    let (task, layout) = len_setup();
    let sets = vec![task.generate(0, 3).unwrap(), task.generate(1, 3).unwrap()];
    let cfg = TrainConfig {
        epochs: 60,
        seed: 42,
        record_losses: true,
        ..TrainConfig::default()
    };
    let a = success_ratio(&layout, &sets, task.output(), &cfg, 2).unwrap();
    let b = success_ratio(&layout, &sets, task.output(), &cfg, 2).unwrap();
    let strip = |s: diffsynth::train::Summary| s.runs.into_iter().map(strip_time).collect::<Vec<_>>();
    let (ra, rb) = (strip(a), strip(b));
    assert_eq!(ra, rb);
    assert_eq!(ra.len(), 4);
    assert_ne!(ra[0].losses, ra[1].losses, "restarts start from different points");

    let mut obj = Objective::new(&layout, &sets[1].train, task.output()).unwrap();
    let single = train_restart(&layout, &mut obj, &sets[1], task.output(), &cfg, 1).unwrap();
    assert_eq!(strip_time(single), ra[3]);
}

#[test]
fn loss_decreases_and_length_is_learned() {
    let (task, layout) = len_setup();
    let sets = vec![task.generate(0, 5).unwrap()];
    let cfg = TrainConfig {
        epochs: 1500,
        record_losses: true,
        ..TrainConfig::default()
    };
    let s = success_ratio(&layout, &sets, task.output(), &cfg, 3).unwrap();
    for r in &s.runs {
        assert!(r.losses.last().unwrap() < &r.losses[0], "{:?}", r.losses.first());
    }
    assert!(s.success_ratio > 0.0, "no restart learned len");
}
