//! Differentiable log-likelihoods of expected outputs under a final lifted
//! state, and the training loss built from them.

use crate::autodiff::{MixTerm, NodeId, Tape};
use crate::error::{Error, Result};
use crate::machine::{LCell, LReg, Lifter, MachineState, Register, ValueType};
use crate::value::{Output, OutputKind};

fn check_value(v: usize, size: usize) -> Result<()> {
    if v >= size {
        return Err(Error::InvalidInput(format!(
            "expected value {v} outside the domain of size {size}"
        )));
    }
    Ok(())
}

/// `log P(slot = expected)` for a scalar or boolean output.
pub fn observe_scalar(lifter: &mut Lifter<'_>, reg: &LReg, expected: usize, ty: ValueType) -> Result<NodeId> {
    check_value(expected, lifter.size(ty))?;
    let p = lifter.tape.select(lifter.slot_of(reg, ty), &[expected])?;
    Ok(lifter.tape.log(p))
}

/// Log-likelihood of a list output: the pointer in `reg` is followed
/// through the heap, `a_{i+1} = tail(a_i)` with null absorbing, and the
/// result is `log P(a_{k+1} null) + sum_i log P(v_i = expected_i)` where
/// `v_i` collects the data of the non-null addresses `a_i` may take.
pub fn observe_list(lifter: &mut Lifter<'_>, reg: &LReg, cells: &[LCell], expected: &[usize]) -> Result<NodeId> {
    let int_size = lifter.size(ValueType::Int);
    for &v in expected {
        check_value(v, int_size)?;
    }
    if expected.len() > lifter.dom.h {
        return Err(Error::InvalidInput(format!(
            "expected list of length {} exceeds the heap size {}",
            expected.len(),
            lifter.dom.h
        )));
    }
    let mut addr = lifter.slot_of(reg, ValueType::Ptr);
    let mut terms = vec![];
    for &v in expected {
        let data: Vec<MixTerm> = cells
            .iter()
            .enumerate()
            .map(|(k, c)| MixTerm::new(addr, k + 1, c.data))
            .collect();
        let value = lifter.mix(data)?;
        let p = lifter.tape.select(value, &[v])?;
        terms.push(lifter.tape.log(p));
        addr = lifter.tail(addr, cells)?;
    }
    let end = lifter.null_prob(addr)?;
    terms.push(lifter.tape.log(end));
    Ok(lifter.tape.add(&terms)?)
}

/// Log-likelihood of `expected` read from `reg` as an output of `kind`.
pub fn observe(
    lifter: &mut Lifter<'_>,
    reg: &LReg,
    cells: &[LCell],
    kind: OutputKind,
    expected: &Output,
) -> Result<NodeId> {
    match (kind, expected) {
        (OutputKind::Scalar, Output::Scalar(v)) => observe_scalar(lifter, reg, *v, ValueType::Int),
        (OutputKind::Bool, Output::Scalar(v)) => observe_scalar(lifter, reg, *v, ValueType::Bool),
        (OutputKind::List, Output::List(xs)) => observe_list(lifter, reg, cells, xs),
        _ => Err(Error::InvalidInput(format!(
            "expected value {expected} does not match output kind {kind:?}"
        ))),
    }
}

/// Log-likelihood of `expected` under a plain-valued state.
pub fn log_likelihood(state: &MachineState, reg: &Register, kind: OutputKind, expected: &Output) -> Result<f64> {
    let mut tape = Tape::new();
    let mut lifter = Lifter::new(&mut tape, state.domains);
    let reg = lifter.reg_from_dists(reg);
    let cells: Vec<LCell> = state.heap.iter().map(|c| lifter.cell_from_dists(c)).collect();
    let ll = observe(&mut lifter, &reg, &cells, kind, expected)?;
    Ok(tape.scalar(ll))
}

/// `sum(p . log p)` over parameter distributions, i.e. the negated total
/// entropy.
pub fn negative_entropy(tape: &mut Tape, dists: &[NodeId]) -> Result<NodeId> {
    let mut terms = vec![];
    for &d in dists {
        let logd = tape.log(d);
        terms.push(tape.dot(d, logd)?);
    }
    if terms.is_empty() {
        return Ok(tape.constant(&[0.0]));
    }
    Ok(tape.add(&terms)?)
}

/// `-sum(log_likelihoods) - entropy_weight * sum(H(dist))` as a scalar node.
pub fn batch_loss(tape: &mut Tape, log_likelihoods: &[NodeId], dists: &[NodeId], entropy_weight: f64) -> Result<NodeId> {
    if log_likelihoods.is_empty() {
        return Err(Error::InvalidInput("no examples to observe".into()));
    }
    let total = tape.add(log_likelihoods)?;
    let nll = tape.scale(total, -1.0);
    if entropy_weight == 0.0 || dists.is_empty() {
        return Ok(nll);
    }
    let neg_h = negative_entropy(tape, dists)?;
    let bonus = tape.scale(neg_h, entropy_weight);
    Ok(tape.add(&[nll, bonus])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::{Dist, Domains, HeapCell};

    fn state(dom: Domains, heap: &[(usize, usize)]) -> MachineState {
        let mut cells: Vec<HeapCell> = heap
            .iter()
            .map(|&(d, n)| HeapCell {
                data: Dist::point(dom.size(ValueType::Int), d),
                next: Dist::point(dom.size(ValueType::Ptr), n),
            })
            .collect();
        cells.resize(dom.h, HeapCell::empty(&dom));
        MachineState {
            domains: dom,
            ip: None,
            registers: vec![],
            heap: cells,
            sp: None,
            t: 0,
        }
    }

    fn reg(dom: Domains, ptr: Dist) -> Register {
        let mut r = Register::zero(&dom);
        r.slots[dom.slot(ValueType::Ptr)] = ptr;
        r
    }

    #[test]
    fn scalar_read_off() {
        let dom = Domains::new(true, 10, 4);
        let st = state(dom, &[]);
        let mut r = Register::zero(&dom);
        r.slots[0] = Dist::new(vec![0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 0.75, 0.0, 0.0]).unwrap();
        let ll = log_likelihood(&st, &r, OutputKind::Scalar, &Output::Scalar(7)).unwrap();
        assert!((ll - 0.75f64.ln()).abs() < 1e-12);
        r.slots[0] = Dist::uniform(10);
        let ll = log_likelihood(&st, &r, OutputKind::Scalar, &Output::Scalar(3)).unwrap();
        assert!((ll - 0.1f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn exact_list_and_length_mismatch() {
        let dom = Domains::new(true, 10, 4);
        let st = state(dom, &[(2, 2), (3, 0)]);
        let r = reg(dom, Dist::point(5, 1));
        let ll = log_likelihood(&st, &r, OutputKind::List, &Output::List(vec![2, 3])).unwrap();
        assert_eq!(ll, 0.0);
        let short = log_likelihood(&st, &r, OutputKind::List, &Output::List(vec![2])).unwrap();
        assert!(short < -60.0);
    }

    #[test]
    fn uncertain_head_pointer() {
        let dom = Domains::new(true, 10, 4);
        let st = state(dom, &[(5, 0), (6, 0)]);
        let r = reg(dom, Dist::uniform_over(5, &[1, 2]));
        let ll = log_likelihood(&st, &r, OutputKind::List, &Output::List(vec![5])).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loss_with_entropy_bonus() {
        let mut tape = Tape::new();
        let ll = tape.constant(&[0.0]);
        let d = tape.constant(&[0.5, 0.5]);
        let loss = batch_loss(&mut tape, &[ll], &[d], 0.1).unwrap();
        assert!((tape.scalar(loss) + 0.1 * 2f64.ln()).abs() < 1e-12);
        let half = tape.constant(&[0.5f64.ln()]);
        let loss = batch_loss(&mut tape, &[half], &[d], 0.0).unwrap();
        assert!((tape.scalar(loss) - 2f64.ln()).abs() < 1e-12);
    }
}
