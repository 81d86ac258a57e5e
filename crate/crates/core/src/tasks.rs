//! Benchmark tasks: reference semantics and reproducible example sets.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Preset;
use crate::value::{Example, Input, InputKind, Output, OutputKind};

pub const TRAIN_EXAMPLES: usize = 5;
pub const TEST_EXAMPLES: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    /// `k` copies of a scalar.
    #[serde(rename = "dupK")]
    DupK,
    /// The `k`-th element (1-based, `k` fixed).
    #[serde(rename = "getK")]
    GetK,
    #[serde(rename = "len")]
    Len,
    #[serde(rename = "rev")]
    Rev,
    #[serde(rename = "sum")]
    Sum,
    #[serde(rename = "allGtK")]
    AllGtK,
    #[serde(rename = "exGtK")]
    ExGtK,
    /// 0-based index of the last element equal to `v`.
    #[serde(rename = "findLastIdx")]
    FindLastIdx,
    /// Element at a 0-based index given as input.
    #[serde(rename = "getIdx")]
    GetIdx,
    #[serde(rename = "last2")]
    Last2,
    #[serde(rename = "mapAddK")]
    MapAddK,
    #[serde(rename = "mapInc")]
    MapInc,
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "pairwiseSum")]
    PairwiseSum,
    #[serde(rename = "revMapInc")]
    RevMapInc,
}

use TaskKind::*;

impl TaskKind {
    pub const ALL: [TaskKind; 15] = [
        DupK, GetK, Len, Rev, Sum, AllGtK, ExGtK, FindLastIdx, GetIdx, Last2, MapAddK, MapInc, Max,
        PairwiseSum, RevMapInc,
    ];

    /// Tasks needing loops, simple ones first.
    pub const LOOP: [TaskKind; 13] = [
        Len, Rev, Sum, AllGtK, ExGtK, FindLastIdx, GetIdx, Last2, MapAddK, MapInc, Max, PairwiseSum,
        RevMapInc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DupK => "dupK",
            GetK => "getK",
            Len => "len",
            Rev => "rev",
            Sum => "sum",
            AllGtK => "allGtK",
            ExGtK => "exGtK",
            FindLastIdx => "findLastIdx",
            GetIdx => "getIdx",
            Last2 => "last2",
            MapAddK => "mapAddK",
            MapInc => "mapInc",
            Max => "max",
            PairwiseSum => "pairwiseSum",
            RevMapInc => "revMapInc",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            DupK => "Duplicate a scalar input k times (k fixed).",
            GetK => "Return the k-th element of a list (k fixed, 1-based).",
            Len => "Return the length of a list.",
            Rev => "Reverse a list.",
            Sum => "Sum all elements of a list.",
            AllGtK => "Check if all elements of a list are greater than k.",
            ExGtK => "Check if at least one element of a list is greater than k.",
            FindLastIdx => "Find the 0-based index of the last element equal to v.",
            GetIdx => "Return the element at 0-based index k.",
            Last2 => "Return the second to last element of a list.",
            MapAddK => "Add k to each element of a list.",
            MapInc => "Increment each element of a list.",
            Max => "Return the maximum element of a list.",
            PairwiseSum => "Sum the corresponding elements of two lists.",
            RevMapInc => "Reverse a list and increment each element.",
        }
    }

    /// Whether `k` is fixed when the task is built.
    pub fn takes_fixed_k(self) -> bool {
        matches!(self, DupK | GetK)
    }

    pub fn inputs(self) -> Vec<InputKind> {
        use InputKind::*;
        match self {
            DupK => vec![Scalar],
            AllGtK | ExGtK | FindLastIdx | GetIdx | MapAddK => vec![List, Scalar],
            PairwiseSum => vec![List, List],
            _ => vec![List],
        }
    }

    pub fn output(self) -> OutputKind {
        match self {
            DupK | Rev | MapAddK | MapInc | PairwiseSum | RevMapInc => OutputKind::List,
            AllGtK | ExGtK => OutputKind::Bool,
            _ => OutputKind::Scalar,
        }
    }

    /// Preset the task is usually run with.
    pub fn default_preset(self) -> Preset {
        match self {
            DupK | GetK => Preset::Straightline,
            Len | Rev | Sum => Preset::SimpleLoop,
            _ => Preset::Loop,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownTask(s.to_string()))
    }
}

/// A task instance with its value bounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    /// Fixed parameter of `dupK` and `getK`.
    pub k: Option<usize>,
    /// Values are in `[0, m)`.
    pub m: usize,
    pub max_list_len: usize,
}

impl Task {
    pub fn new(kind: TaskKind, k: Option<usize>, m: usize, max_list_len: usize) -> Result<Self> {
        let bad = |reason: String| {
            Err(Error::TaskBounds {
                task: kind.name().to_string(),
                reason,
            })
        };
        if m < 4 || max_list_len == 0 {
            return bad(format!("m = {m} and max_list_len = {max_list_len} are too small"));
        }
        if kind.takes_fixed_k() {
            match k {
                Some(k) if k >= 1 && k <= max_list_len => {}
                Some(k) => return bad(format!("k = {k} must lie in [1, {max_list_len}]")),
                None => return bad("k is required".into()),
            }
        } else if k.is_some() {
            return bad("k is only fixed for dupK and getK".into());
        }
        if kind == Last2 && max_list_len < 2 {
            return bad("last2 needs lists of length 2".into());
        }
        if max_list_len >= m && kind == Len {
            return bad(format!("lengths up to {max_list_len} do not fit below m = {m}"));
        }
        Ok(Task {
            kind,
            k,
            m,
            max_list_len,
        })
    }

    /// Task with the bounds of a preset.
    pub fn for_preset(kind: TaskKind, k: Option<usize>, preset: Preset) -> Result<Self> {
        let spec = preset.spec(crate::models::Variant::CTI, &kind.inputs());
        Task::new(kind, k, spec.m, spec.max_list_len)
    }

    pub fn name(&self) -> String {
        match self.k {
            Some(k) => format!("{}{}", self.kind.name().trim_end_matches('K'), k),
            None => self.kind.name().to_string(),
        }
    }

    pub fn inputs(&self) -> Vec<InputKind> {
        self.kind.inputs()
    }

    pub fn output(&self) -> OutputKind {
        self.kind.output()
    }

    /// The intended output on `inputs`.
    pub fn reference(&self, inputs: &[Input]) -> Result<Output> {
        let bad = |reason: &str| Error::TaskBounds {
            task: self.kind.name().into(),
            reason: reason.into(),
        };
        let kinds: Vec<InputKind> = inputs.iter().map(Input::kind).collect();
        if kinds != self.inputs() {
            return Err(bad("inputs do not match the task signature"));
        }
        let list = |i: usize| match &inputs[i] {
            Input::List(xs) => xs.as_slice(),
            Input::Scalar(_) => unreachable!("signature checked"),
        };
        let scalar = |i: usize| match inputs[i] {
            Input::Scalar(v) => v,
            Input::List(_) => unreachable!("signature checked"),
        };
        let m = self.m;
        let fits = |v: usize| if v < m { Ok(v) } else { Err(bad("output exceeds m")) };
        let fits_all = |xs: Vec<usize>| {
            if xs.iter().all(|&v| v < m) {
                Ok(Output::List(xs))
            } else {
                Err(bad("output exceeds m"))
            }
        };
        Ok(match self.kind {
            DupK => fits_all(vec![scalar(0); self.k.expect("validated")])?,
            GetK => {
                let k = self.k.expect("validated");
                Output::Scalar(*list(0).get(k - 1).ok_or_else(|| bad("list shorter than k"))?)
            }
            Len => Output::Scalar(fits(list(0).len())?),
            Rev => Output::List(list(0).iter().rev().copied().collect()),
            Sum => Output::Scalar(fits(list(0).iter().sum())?),
            AllGtK => Output::bool(list(0).iter().all(|&x| x > scalar(1))),
            ExGtK => Output::bool(list(0).iter().any(|&x| x > scalar(1))),
            FindLastIdx => {
                let v = scalar(1);
                let i = list(0).iter().rposition(|&x| x == v).ok_or_else(|| bad("v does not occur"))?;
                Output::Scalar(i)
            }
            GetIdx => Output::Scalar(*list(0).get(scalar(1)).ok_or_else(|| bad("index out of range"))?),
            Last2 => {
                let xs = list(0);
                if xs.len() < 2 {
                    return Err(bad("list shorter than 2"));
                }
                Output::Scalar(xs[xs.len() - 2])
            }
            MapAddK => fits_all(list(0).iter().map(|&x| x + scalar(1)).collect())?,
            MapInc => fits_all(list(0).iter().map(|&x| x + 1).collect())?,
            Max => Output::Scalar(*list(0).iter().max().ok_or_else(|| bad("empty list"))?),
            PairwiseSum => fits_all(list(0).iter().zip(list(1)).map(|(a, b)| a + b).collect())?,
            RevMapInc => fits_all(list(0).iter().rev().map(|&x| x + 1).collect())?,
        })
    }

    /// Draw one input. Lengths are uniform in `[1, max_list_len]` (at least
    /// 2 for `last2`, at least `k` for `getK`); element ranges leave room
    /// for the output to stay below `m`.
    pub fn sample_input<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Input> {
        let (m, l) = (self.m, self.max_list_len);
        let list = |rng: &mut R, min_len: usize, hi: usize| -> Vec<usize> {
            let len = rng.random_range(min_len..=l);
            (0..len).map(|_| rng.random_range(0..hi)).collect()
        };
        match self.kind {
            DupK => vec![Input::Scalar(rng.random_range(0..m))],
            GetK => vec![Input::List(list(rng, self.k.expect("validated"), m))],
            Len | Rev | Max => vec![Input::List(list(rng, 1, m))],
            Last2 => vec![Input::List(list(rng, 2, m))],
            Sum => vec![Input::List(list(rng, 1, (m - 1) / l + 1))],
            MapInc | RevMapInc => vec![Input::List(list(rng, 1, m - 1))],
            AllGtK | ExGtK => {
                let xs = list(rng, 1, m);
                vec![Input::List(xs), Input::Scalar(rng.random_range(0..m))]
            }
            FindLastIdx => {
                let xs = list(rng, 1, m);
                let v = *xs.choose(rng).expect("non-empty");
                vec![Input::List(xs), Input::Scalar(v)]
            }
            GetIdx => {
                let xs = list(rng, 1, m);
                let k = rng.random_range(0..xs.len());
                vec![Input::List(xs), Input::Scalar(k)]
            }
            MapAddK => {
                let half = m / 2;
                vec![Input::List(list(rng, 1, half)), Input::Scalar(rng.random_range(0..half))]
            }
            PairwiseSum => {
                let len = rng.random_range(1..=l);
                let half = m / 2;
                let a = (0..len).map(|_| rng.random_range(0..half)).collect();
                let b = (0..len).map(|_| rng.random_range(0..half)).collect();
                vec![Input::List(a), Input::List(b)]
            }
        }
    }

    /// Five training and 25 test examples for `group`. Training inputs are
    /// distinct and never reused for testing; test inputs are distinct
    /// while the input space allows it.
    pub fn generate(&self, group: u32, seed: u64) -> Result<ExampleSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &self.name(), group as u64, 0));
        let mut seen: Vec<Vec<Input>> = vec![];
        let mut draw = |rng: &mut ChaCha8Rng, fresh: bool, avoid: &[Vec<Input>]| -> Result<Vec<Input>> {
            for attempt in 0..10_000 {
                let x = self.sample_input(rng);
                if avoid.contains(&x) || (fresh && attempt < 1_000 && seen.contains(&x)) {
                    continue;
                }
                seen.push(x.clone());
                return Ok(x);
            }
            Err(Error::TaskBounds {
                task: self.name(),
                reason: "input space too small for disjoint train and test sets".into(),
            })
        };
        let mut train_inputs = vec![];
        for _ in 0..TRAIN_EXAMPLES {
            let x = draw(&mut rng, true, &train_inputs)?;
            train_inputs.push(x);
        }
        let mut test_inputs = vec![];
        for _ in 0..TEST_EXAMPLES {
            test_inputs.push(draw(&mut rng, true, &train_inputs)?);
        }
        let label = |xs: Vec<Vec<Input>>| -> Result<Vec<Example>> {
            xs.into_iter()
                .map(|x| {
                    let y = self.reference(&x)?;
                    Ok(Example::new(x, y))
                })
                .collect()
        };
        Ok(ExampleSet {
            task: self.name(),
            group,
            seed,
            train: label(train_inputs)?,
            test: label(test_inputs)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleSet {
    pub task: String,
    pub group: u32,
    pub seed: u64,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl ExampleSet {
    pub fn all(&self) -> impl Iterator<Item = &Example> {
        self.train.iter().chain(&self.test)
    }
}

/// Derive an independent seed from a base seed and a labelled position.
pub fn stream_seed(seed: u64, label: &str, a: u64, b: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        h = (h ^ byte as u64).wrapping_mul(0x0100_0000_01b3);
    }
    let mut x = seed ^ h.rotate_left(17) ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.rotate_left(41);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(xs: &[usize]) -> Input {
        Input::List(xs.to_vec())
    }

    fn task(kind: TaskKind, k: Option<usize>) -> Task {
        Task::new(kind, k, 32, 5).unwrap()
    }

    #[test]
    fn reference_examples() {
        assert_eq!(task(Len, None).reference(&[list(&[3, 1, 4])]).unwrap(), Output::Scalar(3));
        assert_eq!(
            task(PairwiseSum, None).reference(&[list(&[1, 2]), list(&[3, 4])]).unwrap(),
            Output::List(vec![4, 6])
        );
        assert_eq!(
            task(FindLastIdx, None)
                .reference(&[list(&[5, 1, 5, 2]), Input::Scalar(5)])
                .unwrap(),
            Output::Scalar(2)
        );
        assert_eq!(
            task(DupK, Some(3)).reference(&[Input::Scalar(7)]).unwrap(),
            Output::List(vec![7, 7, 7])
        );
        let all = task(AllGtK, None);
        assert_eq!(all.reference(&[list(&[3, 4]), Input::Scalar(2)]).unwrap(), Output::bool(true));
        assert_eq!(all.reference(&[list(&[3, 1]), Input::Scalar(2)]).unwrap(), Output::bool(false));
        assert_eq!(
            task(RevMapInc, None).reference(&[list(&[1, 2, 3])]).unwrap(),
            Output::List(vec![4, 3, 2])
        );
        assert_eq!(task(GetK, Some(2)).reference(&[list(&[4, 8, 1])]).unwrap(), Output::Scalar(8));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(task(Last2, None).reference(&[list(&[1])]).is_err());
        assert!(task(GetIdx, None).reference(&[list(&[1]), Input::Scalar(1)]).is_err());
        assert!(Task::new(DupK, None, 20, 10).is_err());
        assert!(Task::new(Len, Some(2), 20, 10).is_err());
    }

    #[test]
    fn generation_is_reproducible_and_consistent() {
        for &kind in &TaskKind::ALL {
            let k = kind.takes_fixed_k().then_some(3);
            let t = Task::for_preset(kind, k, kind.default_preset()).unwrap();
            let a = t.generate(2, 7).unwrap();
            assert_eq!(a, t.generate(2, 7).unwrap());
            assert_ne!(a, t.generate(3, 7).unwrap());
            assert_eq!((a.train.len(), a.test.len()), (TRAIN_EXAMPLES, TEST_EXAMPLES));
            for ex in a.all() {
                assert_eq!(t.reference(&ex.inputs).unwrap(), ex.output);
            }
            for ex in &a.test {
                assert!(a.train.iter().all(|tr| tr.inputs != ex.inputs), "{kind}");
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("findlastidx".parse::<TaskKind>().unwrap(), FindLastIdx);
        assert!("nope".parse::<TaskKind>().is_err());
    }
}
