//! Human-readable listings of concrete programs. Lines that cannot affect
//! the result are prefixed with `# `.

use std::collections::BTreeSet;
use std::fmt::Write;

use super::program::{ConcreteProgram, DLine, DLoop, Decoded};
use crate::error::Result;
use crate::machine::InstrKind;
use crate::models::{Block, ClosureVar, Combinator, Layout, RegRole};

fn reads(line: &DLine) -> Vec<usize> {
    use InstrKind::*;
    match line.kind {
        Cons | Add | Eq | Gt | And | Or => vec![line.arg1, line.arg2],
        Head | Tail | Inc | Dec | Jz | Jnz | Return => vec![line.arg1],
        Ite => vec![line.cond.expect("ite has a condition"), line.arg1, line.arg2],
        Zero | One | Noop => vec![],
    }
}

fn writes(line: &DLine) -> Option<usize> {
    match line.kind {
        InstrKind::Noop | InstrKind::Jz | InstrKind::Jnz | InstrKind::Return => line.target,
        _ => line.target.or(line.out),
    }
}

fn loop_reads(lp: &DLoop) -> Vec<usize> {
    let mut r = vec![lp.list1];
    match lp.combinator {
        Some(Combinator::ZipWithi) => r.extend(lp.list2),
        Some(Combinator::Foldli) => r.extend(lp.acc_init),
        _ => {}
    }
    r
}

/// Per line of `layout.lines`: whether it is dead, plus whether the loop's
/// result is unused. Assembly programs are not analysed.
pub fn dead_code(layout: &Layout, program: &Decoded) -> (Vec<bool>, bool) {
    let n = program.lines.len();
    if layout.spec.variant.is_assembly() {
        return (vec![false; n], false);
    }
    let mut dead = vec![true; n];
    let idx = |block: Block| -> Vec<usize> { (0..n).filter(|&i| program.lines[i].block == block).collect() };
    let (prefix, body, suffix) = (idx(Block::Prefix), idx(Block::Body), idx(Block::Suffix));

    if layout.spec.variant.is_immutable() {
        let mut producer = vec![None; layout.regs.len()];
        for (i, l) in program.lines.iter().enumerate() {
            if let Some(t) = l.target {
                producer[t] = Some(i);
            }
        }
        let result = layout.loop_result_reg();
        let mut used = vec![false; layout.regs.len()];
        let mut stack: Vec<usize> = program.ret.into_iter().collect();
        while let Some(r) = stack.pop() {
            if std::mem::replace(&mut used[r], true) {
                continue;
            }
            if let Some(i) = producer[r] {
                dead[i] = false;
                stack.extend(reads(&program.lines[i]));
            } else if Some(r) == result {
                if let Some(lp) = &program.loop_ {
                    stack.extend(loop_reads(lp));
                    stack.extend(lp.body_result);
                }
            }
        }
        let loop_dead = result.is_none_or(|r| !used[r]);
        return (dead, loop_dead);
    }

    let transfer = |lines: &[usize], live: &mut BTreeSet<usize>, dead: &mut Vec<bool>| {
        for &i in lines.iter().rev() {
            let l = &program.lines[i];
            match writes(l) {
                Some(w) if live.contains(&w) => {
                    dead[i] = false;
                    live.remove(&w);
                    live.extend(reads(l));
                }
                _ => dead[i] = true,
            }
        }
    };
    let mut live: BTreeSet<usize> = layout.output_reg().into_iter().collect();
    transfer(&suffix, &mut live, &mut dead);
    let mut loop_dead = true;
    if let Some(lp) = &program.loop_ {
        let closure: Vec<usize> = ClosureVar::ALL.iter().filter_map(|&v| layout.closure_reg(v)).collect();
        let mut after = live.clone();
        let mut end_need = BTreeSet::new();
        match lp.loop_out {
            Some(o) if after.contains(&o) => {
                loop_dead = false;
                after.remove(&o);
                after.extend(loop_reads(lp));
                end_need.extend(lp.body_result);
            }
            Some(_) => {}
            None => loop_dead = false,
        }
        let mut start = BTreeSet::new();
        loop {
            let mut cur: BTreeSet<usize> = after.union(&end_need).copied().collect();
            cur.extend(start.iter().copied());
            transfer(&body, &mut cur, &mut dead);
            for c in &closure {
                cur.remove(c);
            }
            if cur == start {
                break;
            }
            start = cur;
        }
        loop_dead &= body.iter().all(|&i| dead[i]);
        live = after;
        live.extend(start);
        live.insert(lp.list1);
    }
    transfer(&prefix, &mut live, &mut dead);
    (dead, loop_dead)
}

fn expr(layout: &Layout, line: &DLine, comb: Option<Combinator>) -> String {
    use InstrKind::*;
    let r = |x: usize| layout.reg_name(x, comb);
    let (a, b) = (r(line.arg1), r(line.arg2));
    match line.kind {
        Cons => format!("cons {a} {b}"),
        Head => format!("head {a}"),
        Tail => format!("tail {a}"),
        Add => format!("{a} + {b}"),
        Inc => format!("{a} + 1"),
        Dec => format!("{a} - 1"),
        Eq => format!("{a} = {b}"),
        Gt => format!("{a} > {b}"),
        And => format!("{a} and {b}"),
        Or => format!("{a} or {b}"),
        Zero => "0".into(),
        One => "1".into(),
        Noop => "noop".into(),
        Ite => format!("if {} then {a} else {b}", r(line.cond.expect("ite has a condition"))),
        Jz => format!("jz {a} -> {}", line.branch.unwrap_or(0)),
        Jnz => format!("jnz {a} -> {}", line.branch.unwrap_or(0)),
        Return => format!("return {a}"),
    }
}

/// Render a program as text.
pub fn pretty(layout: &Layout, program: &ConcreteProgram) -> Result<String> {
    let decoded = program.decode(layout)?;
    Ok(render(layout, &decoded))
}

pub fn render(layout: &Layout, program: &Decoded) -> String {
    let spec = &layout.spec;
    let mut s = String::new();
    let (dead, loop_dead) = dead_code(layout, program);
    let immutable = spec.variant.is_immutable();
    let comb = program.loop_.and_then(|l| l.combinator);
    let name = |r: usize| layout.reg_name(r, comb);
    let mark = |d: bool| if d { "# " } else { "" };

    for r in 0..layout.initial_regs() {
        let value = if r < spec.inputs.len() {
            format!("in{r}")
        } else {
            "0".to_string()
        };
        if immutable {
            let _ = writeln!(s, "let {} = {value} in", name(r));
        } else if r < spec.inputs.len() {
            let _ = writeln!(s, "{} <- {value}", name(r));
        }
    }
    if spec.variant.is_assembly() {
        for (p, line) in program.lines.iter().enumerate() {
            let e = expr(layout, line, None);
            match (line.kind, line.out) {
                (InstrKind::Noop | InstrKind::Jz | InstrKind::Jnz | InstrKind::Return, _) | (_, None) => {
                    let _ = writeln!(s, "{p}: {e}");
                }
                (_, Some(o)) => {
                    let _ = writeln!(s, "{p}: {} <- {e}", name(o));
                }
            }
        }
        let _ = writeln!(s, "return {}", name(spec.registers - 1));
        return s;
    }

    let stmt = |s: &mut String, i: usize, indent: &str| {
        let line = &program.lines[i];
        let e = expr(layout, line, comb);
        let m = mark(dead[i]);
        match (line.target, line.out) {
            (Some(t), _) => {
                let _ = writeln!(s, "{indent}{m}let {} = {e} in", name(t));
            }
            (None, Some(o)) if line.kind != InstrKind::Noop => {
                let _ = writeln!(s, "{indent}{m}{} <- {e}", name(o));
            }
            _ => {
                let _ = writeln!(s, "{indent}{m}{e}");
            }
        }
    };
    let lines_of = |b: Block| (0..program.lines.len()).filter(move |&i| program.lines[i].block == b);
    for i in lines_of(Block::Prefix) {
        stmt(&mut s, i, "");
    }
    if let Some(lp) = &program.loop_ {
        let m = mark(loop_dead);
        let l1 = name(lp.list1);
        let head = match lp.combinator {
            None => format!("for ele in {l1}:"),
            Some(Combinator::Foldli) => format!(
                "foldli {l1} {} (λ ele acc idx ->",
                name(lp.acc_init.expect("foldli has an accumulator"))
            ),
            Some(Combinator::Mapi) => format!("mapi {l1} (λ ele idx ->"),
            Some(Combinator::ZipWithi) => format!(
                "zipWithi {l1} {} (λ ele1 ele2 idx ->",
                name(lp.list2.expect("zipWithi has a second list"))
            ),
        };
        let target = layout
            .loop_result_reg()
            .or(lp.loop_out)
            .map(|r| (r, layout.regs[r]));
        match target {
            Some((r, RegRole::LoopResult)) => {
                let _ = writeln!(s, "{m}let {} = {head}", name(r));
            }
            Some((r, _)) => {
                let _ = writeln!(s, "{m}{} <- {head}", name(r));
            }
            None => {
                let _ = writeln!(s, "{m}{head}");
            }
        }
        for i in lines_of(Block::Body) {
            stmt(&mut s, i, "    ");
        }
        match (lp.combinator, lp.body_result) {
            (None, _) => {
                let _ = writeln!(s, "{m}end");
            }
            (Some(_), Some(b)) => {
                let tail = if immutable { ") in" } else { ")" };
                let _ = writeln!(s, "{m}    {}{tail}", name(b));
            }
            (Some(_), None) => {}
        }
    }
    for i in lines_of(Block::Suffix) {
        stmt(&mut s, i, "");
    }
    let out = program.ret.or(layout.output_reg()).expect("an output register");
    let _ = writeln!(s, "return {}", name(out));
    s
}
