use serde::{Deserialize, Serialize};

use super::dist::Dist;
use super::instr::ValueType;
use crate::error::{Error, Result};
use crate::value::{Input, Output, OutputKind};

/// Value domains of a machine.
///
/// Typed machines keep integers in `[0, m)`, pointers in `[0, h]` and
/// booleans in `{0, 1}`, each in its own register slot. Untyped machines use
/// one shared domain `[0, max(m, h + 1))` for everything; there, any value
/// outside `[1, h]` used as a pointer behaves like null.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domains {
    pub typed: bool,
    pub m: usize,
    pub h: usize,
}

impl Domains {
    pub fn new(typed: bool, m: usize, h: usize) -> Self {
        Domains { typed, m, h }
    }

    /// Size of the shared domain of untyped machines.
    pub fn shared(&self) -> usize {
        self.m.max(self.h + 1)
    }

    pub fn size(&self, ty: ValueType) -> usize {
        if !self.typed {
            return self.shared();
        }
        match ty {
            ValueType::Int => self.m,
            ValueType::Ptr => self.h + 1,
            ValueType::Bool => 2,
        }
    }

    pub fn slot_count(&self) -> usize {
        if self.typed {
            3
        } else {
            1
        }
    }

    pub fn slot(&self, ty: ValueType) -> usize {
        if self.typed {
            ty.slot()
        } else {
            0
        }
    }

    pub fn slot_sizes(&self) -> Vec<usize> {
        if self.typed {
            ValueType::ALL.iter().map(|&t| self.size(t)).collect()
        } else {
            vec![self.shared()]
        }
    }

    /// Type of each slot, in slot order.
    pub fn slot_types(&self) -> &'static [ValueType] {
        if self.typed {
            &ValueType::ALL
        } else {
            &[ValueType::Int]
        }
    }

    pub fn is_null(&self, ptr: usize) -> bool {
        ptr == 0 || ptr > self.h
    }

    /// Pointer-slot values that behave like null.
    pub fn null_values(&self) -> Vec<usize> {
        let mut v = vec![0];
        v.extend(self.h + 1..self.size(ValueType::Ptr));
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Register {
    pub slots: Vec<Dist>,
}

impl Register {
    pub fn zero(dom: &Domains) -> Self {
        Register {
            slots: dom.slot_sizes().into_iter().map(|n| Dist::point(n, 0)).collect(),
        }
    }

    pub fn slot(&self, dom: &Domains, ty: ValueType) -> &Dist {
        &self.slots[dom.slot(ty)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeapCell {
    pub data: Dist,
    pub next: Dist,
}

impl HeapCell {
    pub fn empty(dom: &Domains) -> Self {
        HeapCell {
            data: Dist::point(dom.size(ValueType::Int), 0),
            next: Dist::point(dom.size(ValueType::Ptr), 0),
        }
    }
}

/// A plain-valued snapshot of the lifted machine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    pub domains: Domains,
    /// Distribution over program lines; the extra last entry is the halt
    /// bucket. Only present for assembly machines.
    pub ip: Option<Dist>,
    pub registers: Vec<Register>,
    /// Cells for addresses `1..=h`; address `a` lives at index `a - 1`.
    pub heap: Vec<HeapCell>,
    /// Stack pointer over addresses `0..=h + 1`, for machines with a
    /// stack-allocated heap.
    pub sp: Option<Dist>,
    pub t: usize,
}

impl MachineState {
    pub fn halt_mass(&self) -> Option<f64> {
        self.ip.as_ref().map(|ip| ip.probs()[ip.domain_size() - 1])
    }

    pub fn cell(&self, addr: usize) -> Option<&HeapCell> {
        if addr == 0 {
            return None;
        }
        self.heap.get(addr - 1)
    }

    /// Every distribution in the state.
    pub fn dists(&self) -> impl Iterator<Item = &Dist> {
        self.ip
            .iter()
            .chain(self.sp.iter())
            .chain(self.registers.iter().flat_map(|r| r.slots.iter()))
            .chain(self.heap.iter().flat_map(|c| [&c.data, &c.next]))
    }

    /// Decode a register as a concrete output, requiring point masses along
    /// the way. Returns `None` when a value is uncertain or a list does not
    /// terminate within `h` cells.
    pub fn decode(&self, reg: &Register, kind: OutputKind) -> Option<Output> {
        let dom = &self.domains;
        match kind {
            OutputKind::Scalar => reg.slot(dom, ValueType::Int).as_point().map(Output::Scalar),
            OutputKind::Bool => reg.slot(dom, ValueType::Bool).as_point().map(Output::Scalar),
            OutputKind::List => {
                let mut ptr = reg.slot(dom, ValueType::Ptr).as_point()?;
                let mut out = vec![];
                while !dom.is_null(ptr) {
                    if out.len() >= dom.h {
                        return None;
                    }
                    let cell = self.cell(ptr)?;
                    out.push(cell.data.as_point()?);
                    ptr = cell.next.as_point()?;
                }
                Some(Output::List(out))
            }
        }
    }
}

/// Concrete initial contents: registers (one value per slot) and heap
/// cells `(data, next)` from address 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub registers: Vec<Vec<usize>>,
    pub heap: Vec<(usize, usize)>,
    /// Last address used by the inputs; allocation starts after it.
    pub cursor: usize,
}

/// Lay out program inputs: every list input owns a region of
/// `max_list_len` cells, the first starting at address 1, and fills it
/// from the front. Input `i` goes into register `i` (pointer slot for
/// lists, integer slot for scalars), every other register is zero.
///
/// Allocation starts after the reserved regions rather than after the
/// last used cell, so allocated addresses carry no information about
/// input lengths.
pub fn encode_concrete(
    inputs: &[Input],
    dom: &Domains,
    registers: usize,
    max_list_len: usize,
) -> Result<Encoded> {
    if inputs.len() > registers {
        return Err(Error::InvalidInput(format!(
            "{} inputs do not fit into {registers} registers",
            inputs.len()
        )));
    }
    let mut regs = vec![vec![0; dom.slot_count()]; registers];
    let mut heap = vec![(0, 0); dom.h];
    let mut cursor = 0;
    for (i, input) in inputs.iter().enumerate() {
        match input {
            Input::Scalar(v) => {
                if *v >= dom.m {
                    return Err(Error::InvalidInput(format!("scalar {v} exceeds M = {}", dom.m)));
                }
                regs[i][dom.slot(ValueType::Int)] = *v;
            }
            Input::List(xs) => {
                if xs.len() > max_list_len {
                    return Err(Error::InvalidInput(format!(
                        "list of length {} exceeds the bound {max_list_len}",
                        xs.len()
                    )));
                }
                if let Some(v) = xs.iter().find(|&&v| v >= dom.m) {
                    return Err(Error::InvalidInput(format!("element {v} exceeds M = {}", dom.m)));
                }
                if cursor + max_list_len > dom.h {
                    return Err(Error::InvalidInput("inputs do not fit into the heap".into()));
                }
                let head = if xs.is_empty() { 0 } else { cursor + 1 };
                for (j, &x) in xs.iter().enumerate() {
                    let addr = cursor + 1 + j;
                    let next = if j + 1 == xs.len() { 0 } else { addr + 1 };
                    heap[addr - 1] = (x, next);
                }
                cursor += max_list_len;
                regs[i][dom.slot(ValueType::Ptr)] = head;
            }
        }
    }
    Ok(Encoded {
        registers: regs,
        heap,
        cursor,
    })
}

/// Point-mass machine state holding the encoded inputs.
pub fn encode_inputs(
    inputs: &[Input],
    dom: &Domains,
    registers: usize,
    max_list_len: usize,
) -> Result<(MachineState, usize)> {
    let enc = encode_concrete(inputs, dom, registers, max_list_len)?;
    let sizes = dom.slot_sizes();
    let registers = enc
        .registers
        .iter()
        .map(|vals| Register {
            slots: vals
                .iter()
                .zip(&sizes)
                .map(|(&v, &n)| Dist::point(n, v))
                .collect(),
        })
        .collect();
    let heap = enc
        .heap
        .iter()
        .map(|&(d, n)| HeapCell {
            data: Dist::point(dom.size(ValueType::Int), d),
            next: Dist::point(dom.size(ValueType::Ptr), n),
        })
        .collect();
    Ok((
        MachineState {
            domains: *dom,
            ip: None,
            registers,
            heap,
            sp: None,
            t: 0,
        },
        enc.cursor,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_layout() {
        let dom = Domains::new(true, 10, 6);
        let (s, cursor) = encode_inputs(&[Input::List(vec![2, 3])], &dom, 3, 4).unwrap();
        assert_eq!(cursor, 4);
        assert_eq!(s.heap[0].data.as_point(), Some(2));
        assert_eq!(s.heap[0].next.as_point(), Some(2));
        assert_eq!(s.heap[1].data.as_point(), Some(3));
        assert_eq!(s.heap[1].next.as_point(), Some(0));
        assert_eq!(s.registers[0].slot(&dom, ValueType::Ptr).as_point(), Some(1));
        assert_eq!(
            s.decode(&s.registers[0], OutputKind::List),
            Some(Output::List(vec![2, 3]))
        );
    }

    #[test]
    fn empty_list_is_null() {
        let dom = Domains::new(true, 10, 6);
        let (s, cursor) = encode_inputs(&[Input::List(vec![])], &dom, 2, 4).unwrap();
        assert_eq!(cursor, 4);
        assert_eq!(s.registers[0].slot(&dom, ValueType::Ptr).as_point(), Some(0));
    }

    #[test]
    fn scalar_goes_to_int_slot() {
        let dom = Domains::new(true, 10, 6);
        let inputs = [Input::List(vec![1]), Input::Scalar(4)];
        let (s, _) = encode_inputs(&inputs, &dom, 3, 4).unwrap();
        assert_eq!(s.registers[1].slot(&dom, ValueType::Int).as_point(), Some(4));
        assert_eq!(s.registers[2], Register::zero(&dom));
    }

    #[test]
    fn bounds_are_checked() {
        let dom = Domains::new(false, 10, 6);
        assert!(encode_inputs(&[Input::Scalar(10)], &dom, 1, 4).is_err());
        assert!(encode_inputs(&[Input::List(vec![1; 5])], &dom, 1, 4).is_err());
        assert!(encode_inputs(&[Input::Scalar(1), Input::Scalar(1)], &dom, 1, 4).is_err());
    }

    #[test]
    fn untyped_out_of_range_pointers_are_null() {
        let dom = Domains::new(false, 20, 6);
        assert_eq!(dom.shared(), 20);
        assert!(dom.is_null(0) && dom.is_null(7) && !dom.is_null(6));
        assert_eq!(dom.null_values(), [0].into_iter().chain(7..20).collect::<Vec<_>>());
    }
}
