//! Monotone circuits with a local oracle (CLOs).
//!
//! A CLO is a monotone circuit `D(x, y)` plus one rectangle `U_j × V_j` per oracle input
//! `y_j`. It separates `U` from `V` if `D(x, f(x))` does for every choice of monotone `f_j`
//! that is 1 on `U_j` and 0 on `V_j`. Rectangles are index sets into the enumerated
//! minimal positive points `U_min` and maximal negative points `V_max`.

use std::collections::HashMap;
use std::fmt;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::f2::{ceil_log2, BitVec};
use crate::instances::{enumerate_umin, enumerate_vmax, InstanceError, SplitInstance, WitnessedPoint};
use crate::protocols::{simulate, Engine, NodeId, NodeKind, PairCtx, RandomizedProtocol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CloError {
    #[error("{0}")]
    Instance(#[from] InstanceError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("interpretation of y{j} is not valid: {reason}")]
    InvalidInterpretation { j: usize, reason: String },
    #[error("CLO does not separate: {0}")]
    NotSeparating(Counterexample),
    #[error("protocol violates its consistency conditions at node {node}: {reason}")]
    Protocol { node: usize, reason: String },
    #[error("node {node} needs {bits} bits in one phase, more than t = {t}")]
    Schedule { node: usize, bits: u32, t: u32 },
    #[error("empty ambient set")]
    EmptyAmbient,
}

/// Values of 3-valued logic, ordered `Zero < Half < One`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tri {
    Zero,
    Half,
    One,
}

impl Tri {
    pub fn from_bool(b: bool) -> Tri {
        if b {
            Tri::One
        } else {
            Tri::Zero
        }
    }
}

impl fmt::Display for Tri {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tri::Zero => "0",
            Tri::Half => "1/2",
            Tri::One => "1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Gate {
    X { i: usize },
    Y { j: usize },
    Const { value: bool },
    And { a: usize, b: usize },
    Or { a: usize, b: usize },
}

/// Hash-consed monotone circuit; every gate's inputs precede it.
#[derive(Debug, Clone, Default)]
pub struct MonoCircuit {
    pub n: usize,
    pub e: usize,
    gates: Vec<Gate>,
    index: HashMap<Gate, usize>,
    pub output: usize,
}

impl MonoCircuit {
    pub fn new(n: usize, e: usize) -> Self {
        let mut c = MonoCircuit {
            n,
            e,
            ..Default::default()
        };
        c.output = c.konst(false);
        c
    }

    /// Rebuilds from a topologically sorted gate list.
    pub fn from_gates(n: usize, e: usize, gates: &[Gate], output: usize) -> Result<Self, CloError> {
        let mut c = MonoCircuit {
            n,
            e,
            ..Default::default()
        };
        let mut map = Vec::with_capacity(gates.len());
        for (k, g) in gates.iter().enumerate() {
            let bad = |what: &str| CloError::Dimension(format!("gate {k}: {what}"));
            let id = match *g {
                Gate::X { i } if i < n => c.x(i),
                Gate::Y { j } if j < e => c.y(j),
                Gate::X { .. } => return Err(bad("x index out of range")),
                Gate::Y { .. } => return Err(bad("y index out of range")),
                Gate::Const { value } => c.konst(value),
                Gate::And { a, b } | Gate::Or { a, b } if a >= k || b >= k => {
                    return Err(bad("input does not precede gate"))
                }
                Gate::And { a, b } => c.and(map[a], map[b]),
                Gate::Or { a, b } => c.or(map[a], map[b]),
            };
            map.push(id);
        }
        c.output = *map
            .get(output)
            .ok_or_else(|| CloError::Dimension("output out of range".into()))?;
        Ok(c)
    }

    fn intern(&mut self, g: Gate) -> usize {
        if let Some(&id) = self.index.get(&g) {
            return id;
        }
        self.gates.push(g);
        self.index.insert(g, self.gates.len() - 1);
        self.gates.len() - 1
    }

    pub fn x(&mut self, i: usize) -> usize {
        self.intern(Gate::X { i })
    }

    pub fn y(&mut self, j: usize) -> usize {
        self.intern(Gate::Y { j })
    }

    pub fn konst(&mut self, value: bool) -> usize {
        self.intern(Gate::Const { value })
    }

    fn as_const(&self, a: usize) -> Option<bool> {
        match self.gates[a] {
            Gate::Const { value } => Some(value),
            _ => None,
        }
    }

    pub fn and(&mut self, a: usize, b: usize) -> usize {
        match (self.as_const(a), self.as_const(b)) {
            (Some(false), _) | (_, Some(true)) => a,
            (_, Some(false)) | (Some(true), _) => b,
            _ if a == b => a,
            _ => self.intern(Gate::And { a: a.min(b), b: a.max(b) }),
        }
    }

    pub fn or(&mut self, a: usize, b: usize) -> usize {
        match (self.as_const(a), self.as_const(b)) {
            (Some(true), _) | (_, Some(false)) => a,
            (_, Some(true)) | (Some(false), _) => b,
            _ if a == b => a,
            _ => self.intern(Gate::Or { a: a.min(b), b: a.max(b) }),
        }
    }

    pub fn and_all(&mut self, xs: &[usize]) -> usize {
        let mut acc = self.konst(true);
        for &x in xs {
            acc = self.and(acc, x);
        }
        acc
    }

    pub fn or_all(&mut self, xs: &[usize]) -> usize {
        let mut acc = self.konst(false);
        for &x in xs {
            acc = self.or(acc, x);
        }
        acc
    }

    pub fn gate(&self, id: usize) -> Gate {
        self.gates[id]
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Gates reachable from `root`, in increasing (topological) order.
    pub fn reachable_from(&self, root: usize) -> Vec<usize> {
        let mut seen = vec![false; self.gates.len()];
        let mut stack = vec![root];
        while let Some(g) = stack.pop() {
            if std::mem::replace(&mut seen[g], true) {
                continue;
            }
            if let Gate::And { a, b } | Gate::Or { a, b } = self.gates[g] {
                stack.push(a);
                stack.push(b);
            }
        }
        (0..self.gates.len()).filter(|&g| seen[g]).collect()
    }

    /// Number of gates (inputs included) the output depends on.
    pub fn size(&self) -> usize {
        self.reachable_from(self.output).len()
    }

    /// Values of all gates, with `min`/`max` for AND/OR.
    pub fn eval_all(&self, x: &BitVec, y: &[Tri]) -> Vec<Tri> {
        let mut val: Vec<Tri> = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let v = match *g {
                Gate::X { i } => Tri::from_bool(x.get(i)),
                Gate::Y { j } => y[j],
                Gate::Const { value } => Tri::from_bool(value),
                Gate::And { a, b } => val[a].min(val[b]),
                Gate::Or { a, b } => val[a].max(val[b]),
            };
            val.push(v);
        }
        val
    }

    /// Copies the gates reachable from `root` of `other` into `self`, renaming inputs.
    pub fn import(
        &mut self,
        other: &MonoCircuit,
        root: usize,
        mut input: impl FnMut(&mut MonoCircuit, Gate) -> usize,
    ) -> usize {
        let mut map: HashMap<usize, usize> = HashMap::new();
        for g in other.reachable_from(root) {
            let id = match other.gates[g] {
                Gate::And { a, b } => self.and(map[&a], map[&b]),
                Gate::Or { a, b } => self.or(map[&a], map[&b]),
                leaf => input(self, leaf),
            };
            map.insert(g, id);
        }
        map[&root]
    }
}

/// `U_j × V_j` as index sets into the ambient `U_min` and `V_max`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rectangle {
    pub u: BitVec,
    pub v: BitVec,
}

impl Rectangle {
    pub fn full(amb: &Ambient) -> Self {
        Rectangle {
            u: BitVec::ones(amb.us.len()),
            v: BitVec::ones(amb.vs.len()),
        }
    }

    pub fn is_subset_of(&self, other: &Rectangle) -> bool {
        self.u.is_below(&other.u) && self.v.is_below(&other.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RectOp {
    And,
    Or,
}

/// The rectangle of the composite oracle variable: OR gives `(U₁∪U₂, V₁∩V₂)`, AND gives
/// `(U₁∩U₂, V₁∪V₂)`.
pub fn rect_algebra(op: RectOp, r1: &Rectangle, r2: &Rectangle) -> Rectangle {
    match op {
        RectOp::Or => Rectangle {
            u: r1.u.or(&r2.u),
            v: r1.v.and(&r2.v),
        },
        RectOp::And => Rectangle {
            u: r1.u.and(&r2.u),
            v: r1.v.or(&r2.v),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TwoValued,
    ThreeValued,
}

#[derive(Debug, Clone)]
pub struct Clo {
    pub circuit: MonoCircuit,
    pub rects: Vec<Rectangle>,
    pub mode: Mode,
}

/// The enumerated `U_min` and `V_max` of an instance.
#[derive(Debug, Clone)]
pub struct Ambient {
    pub n: usize,
    pub us: Vec<WitnessedPoint>,
    pub vs: Vec<WitnessedPoint>,
    u_index: HashMap<BitVec, usize>,
    v_index: HashMap<BitVec, usize>,
}

impl Ambient {
    pub fn new(n: usize, us: Vec<WitnessedPoint>, vs: Vec<WitnessedPoint>) -> Self {
        let u_index = us.iter().enumerate().map(|(k, p)| (p.x.clone(), k)).collect();
        let v_index = vs.iter().enumerate().map(|(k, p)| (p.x.clone(), k)).collect();
        Ambient {
            n,
            us,
            vs,
            u_index,
            v_index,
        }
    }

    pub fn from_instance(inst: &SplitInstance) -> Result<Self, CloError> {
        Ok(Self::new(inst.n, enumerate_umin(inst)?, enumerate_vmax(inst)?))
    }

    pub fn u_pos(&self, x: &BitVec) -> Option<usize> {
        self.u_index.get(x).copied()
    }

    pub fn v_pos(&self, x: &BitVec) -> Option<usize> {
        self.v_index.get(x).copied()
    }

    pub fn pairs(&self) -> usize {
        self.us.len() * self.vs.len()
    }

    pub fn rect_from_points(&self, u: &[BitVec], v: &[BitVec]) -> Result<Rectangle, CloError> {
        let mut r = Rectangle {
            u: BitVec::zeros(self.us.len()),
            v: BitVec::zeros(self.vs.len()),
        };
        for x in u {
            let k = self
                .u_pos(x)
                .ok_or_else(|| CloError::Dimension(format!("{x} is not in U_min")))?;
            r.u.set(k, true);
        }
        for x in v {
            let k = self
                .v_pos(x)
                .ok_or_else(|| CloError::Dimension(format!("{x} is not in V_max")))?;
            r.v.set(k, true);
        }
        Ok(r)
    }

    pub fn rect_points(&self, r: &Rectangle) -> (Vec<BitVec>, Vec<BitVec>) {
        (
            r.u.iter_ones().map(|k| self.us[k].x.clone()).collect(),
            r.v.iter_ones().map(|k| self.vs[k].x.clone()).collect(),
        )
    }
}

/// How the oracle inputs are read.
#[derive(Debug, Clone, PartialEq)]
pub enum Interpretation {
    /// `y_j` is the indicator of the up-closure of `U_j`.
    ExtremeU,
    /// `y_j` is 0 on the down-closure of `V_j` and 1 elsewhere.
    ExtremeV,
    /// Full truth tables indexed by `x` as an integer.
    Tables(Vec<Vec<Tri>>),
    /// 1 on `U_j`, 0 on `V_j`, the given default elsewhere.
    Pointwise(Vec<Tri>),
}

impl Interpretation {
    /// Checks tables: monotone, 1 on `U_j`, 0 on `V_j`.
    pub fn validate(&self, c: &Clo, amb: &Ambient) -> Result<(), CloError> {
        let Interpretation::Tables(tables) = self else {
            return Ok(());
        };
        if tables.len() != c.rects.len() {
            return Err(CloError::Dimension("one table per oracle input".into()));
        }
        let n = c.circuit.n;
        for (j, t) in tables.iter().enumerate() {
            let bad = |reason: String| CloError::InvalidInterpretation { j, reason };
            if n > 20 || t.len() != 1 << n {
                return Err(bad(format!("table must have 2^{n} entries")));
            }
            for x in 0..t.len() {
                for i in 0..n {
                    if x & (1 << i) == 0 && t[x] > t[x | (1 << i)] {
                        return Err(bad(format!("not monotone at {x:#b}")));
                    }
                }
            }
            for k in c.rects[j].u.iter_ones() {
                if t[amb.us[k].x.to_u64() as usize] != Tri::One {
                    return Err(bad(format!("not 1 on {}", amb.us[k].x)));
                }
            }
            for k in c.rects[j].v.iter_ones() {
                if t[amb.vs[k].x.to_u64() as usize] != Tri::Zero {
                    return Err(bad(format!("not 0 on {}", amb.vs[k].x)));
                }
            }
        }
        Ok(())
    }

    pub fn y_values(&self, c: &Clo, amb: &Ambient, x: &BitVec) -> Vec<Tri> {
        c.rects
            .iter()
            .enumerate()
            .map(|(j, r)| match self {
                Interpretation::ExtremeU => {
                    Tri::from_bool(r.u.iter_ones().any(|k| amb.us[k].x.is_below(x)))
                }
                Interpretation::ExtremeV => {
                    Tri::from_bool(!r.v.iter_ones().any(|k| x.is_below(&amb.vs[k].x)))
                }
                Interpretation::Tables(t) => t[j][x.to_u64() as usize],
                Interpretation::Pointwise(default) => {
                    if amb.u_pos(x).is_some_and(|k| r.u.get(k)) {
                        Tri::One
                    } else if amb.v_pos(x).is_some_and(|k| r.v.get(k)) {
                        Tri::Zero
                    } else {
                        default[j]
                    }
                }
            })
            .collect()
    }
}

impl Clo {
    pub fn new(circuit: MonoCircuit, rects: Vec<Rectangle>, mode: Mode) -> Result<Self, CloError> {
        if rects.len() != circuit.e {
            return Err(CloError::Dimension(format!(
                "{} rectangles for {} oracle inputs",
                rects.len(),
                circuit.e
            )));
        }
        Ok(Clo {
            circuit,
            rects,
            mode,
        })
    }

    pub fn size(&self) -> usize {
        self.circuit.size()
    }

    pub fn eval(&self, amb: &Ambient, x: &BitVec, interp: &Interpretation) -> Result<Tri, CloError> {
        if x.len() != self.circuit.n {
            return Err(CloError::Dimension(format!(
                "point has {} bits, circuit {}",
                x.len(),
                self.circuit.n
            )));
        }
        let y = interp.y_values(self, amb, x);
        Ok(self.circuit.eval_all(x, &y)[self.circuit.output])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub point: BitVec,
    pub positive: bool,
    pub value: Tri,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (side, interp) = if self.positive {
            ("U_min", "ExtremeU")
        } else {
            ("V_max", "ExtremeV")
        };
        write!(f, "{side} point {} evaluates to {} under {interp}", self.point, self.value)
    }
}

/// `D(u, ExtremeU) = 1` on `U_min` and `D(v, ExtremeV) = 0` on `V_max`. Every valid
/// interpretation lies between the two extremes, so this is equivalent to separation.
pub fn verify_separation(c: &Clo, amb: &Ambient) -> Result<(), Counterexample> {
    for p in &amb.us {
        let value = c.eval(amb, &p.x, &Interpretation::ExtremeU).expect("ambient dimensions");
        if value != Tri::One {
            return Err(Counterexample {
                point: p.x.clone(),
                positive: true,
                value,
            });
        }
    }
    for p in &amb.vs {
        let value = c.eval(amb, &p.x, &Interpretation::ExtremeV).expect("ambient dimensions");
        if value != Tri::Zero {
            return Err(Counterexample {
                point: p.x.clone(),
                positive: false,
                value,
            });
        }
    }
    Ok(())
}

/// Pairs of `U_min × V_max` covered by some rectangle, as a bitset indexed `iu·|V| + iv`.
pub fn bad_set(rects: &[Rectangle], amb: &Ambient) -> BitVec {
    let nv = amb.vs.len();
    let mut bad = BitVec::zeros(amb.pairs());
    for r in rects {
        for iu in r.u.iter_ones() {
            for iv in r.v.iter_ones() {
                bad.set(iu * nv + iv, true);
            }
        }
    }
    bad
}

/// Exact measure of the rectangle union in `U_min × V_max`.
pub fn locality(c: &Clo, amb: &Ambient) -> Result<Ratio<u64>, CloError> {
    rect_measure(&c.rects, amb)
}

pub fn rect_measure(rects: &[Rectangle], amb: &Ambient) -> Result<Ratio<u64>, CloError> {
    if amb.pairs() == 0 {
        return Err(CloError::EmptyAmbient);
    }
    Ok(Ratio::new(
        bad_set(rects, amb).count_ones() as u64,
        amb.pairs() as u64,
    ))
}

/// Measure of the rectangle union in the full `U × V` (all graphs with an ω-clique times
/// all ξ-colorable graphs), when that is small enough to enumerate.
pub fn locality_full(c: &Clo, amb: &Ambient, inst: &SplitInstance) -> Option<Ratio<u64>> {
    let cc = inst.family?;
    if inst.n > 20 {
        return None;
    }
    let edges = inst.edges();
    let (mut nu, mut nv) = (0u64, 0u64);
    for g in 0..1u64 << inst.n {
        let x = BitVec::from_u64(inst.n, g);
        let adj = |a: usize, b: usize| {
            let (i, j) = (a.min(b), a.max(b));
            x.get(edges.iter().position(|&e| e == (i, j)).expect("edge"))
        };
        nu += has_clique(cc.n0, cc.omega, &adj) as u64;
        nv += colorable(cc.n0, cc.xi, &adj) as u64;
    }
    let covered = bad_set(&c.rects, amb).count_ones() as u64;
    (nu * nv > 0).then(|| Ratio::new(covered, nu * nv))
}

fn has_clique(n0: usize, k: usize, adj: &dyn Fn(usize, usize) -> bool) -> bool {
    fn rec(start: usize, n0: usize, k: usize, chosen: &mut Vec<usize>, adj: &dyn Fn(usize, usize) -> bool) -> bool {
        if chosen.len() == k {
            return true;
        }
        for v in start..n0 {
            if chosen.iter().all(|&c| adj(c, v)) {
                chosen.push(v);
                if rec(v + 1, n0, k, chosen, adj) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    rec(0, n0, k, &mut Vec::new(), adj)
}

fn colorable(n0: usize, k: usize, adj: &dyn Fn(usize, usize) -> bool) -> bool {
    fn rec(v: usize, n0: usize, k: usize, col: &mut Vec<usize>, adj: &dyn Fn(usize, usize) -> bool) -> bool {
        if v == n0 {
            return true;
        }
        let used = col.iter().copied().max().map_or(0, |m| m + 1);
        for c in 0..k.min(used + 1) {
            if (0..v).all(|w| col[w] != c || !adj(w, v)) {
                col.push(c);
                if rec(v + 1, n0, k, col, adj) {
                    return true;
                }
                col.pop();
            }
        }
        false
    }
    rec(0, n0, k, &mut Vec::new(), adj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Player {
    U,
    V,
}

/// A two-party bit-exchange tree; leaves carry formula variables `z_ω`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExchangeTree {
    Speak {
        player: Player,
        children: Vec<ExchangeTree>,
    },
    Leaf(usize),
    /// No pair reaches this branch; `u_empty` says U's side is empty there.
    Dead { u_empty: bool },
}

/// Monotone formula from an exchange tree: U nodes become OR, V nodes AND, leaves the
/// given subcircuits, dead branches the constant that cannot be wrong there.
pub fn kw_formula_from_tree(
    tree: &ExchangeTree,
    c: &mut MonoCircuit,
    leaf: &mut dyn FnMut(&mut MonoCircuit, usize) -> Result<usize, CloError>,
) -> Result<usize, CloError> {
    match tree {
        ExchangeTree::Leaf(z) => leaf(c, *z),
        ExchangeTree::Dead { u_empty } => Ok(c.konst(!u_empty)),
        ExchangeTree::Speak { player, children } => {
            let mut ids = Vec::with_capacity(children.len());
            for ch in children {
                ids.push(kw_formula_from_tree(ch, c, leaf)?);
            }
            Ok(match player {
                Player::U => c.or_all(&ids),
                Player::V => c.and_all(&ids),
            })
        }
    }
}

/// A protocol tabulated over `U_min × V_max` (pair index `iu·|V| + iv`).
#[derive(Debug, Clone)]
pub struct ExtProtocol {
    pub nu: usize,
    pub nv: usize,
    pub root: usize,
    pub nodes: Vec<ExtNode>,
}

#[derive(Debug, Clone)]
pub struct ExtNode {
    pub label: Option<usize>,
    pub children: Vec<usize>,
    /// Child position chosen by the strategy, per pair (inner nodes only).
    pub step: Vec<u8>,
    /// Membership in `F`, per pair.
    pub f: BitVec,
}

/// Membership answers: 0 no, 1 yes (inner) or yes with a correct label (leaf), 2 yes with
/// a wrong label.
const NO: u8 = 0;
const WRONG: u8 = 2;

impl ExtProtocol {
    /// Tabulates the part of `e` reachable from its root by strategy moves on ambient pairs.
    pub fn from_engine(e: &dyn Engine, inst: &SplitInstance, amb: &Ambient) -> Result<Self, CloError> {
        let ctx: Vec<PairCtx> = amb
            .us
            .iter()
            .flat_map(|u| amb.vs.iter().map(move |v| PairCtx::new(inst, u, v)))
            .collect();
        let mut ids: HashMap<NodeId, usize> = HashMap::new();
        let mut order: Vec<NodeId> = vec![e.root()];
        ids.insert(e.root(), 0);
        let mut nodes = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let x = order[k];
            k += 1;
            let f = BitVec::from_bools(&ctx.iter().map(|p| e.in_f(x, p)).collect::<Vec<_>>());
            let node = match e.kind(x) {
                NodeKind::Leaf(i) => ExtNode {
                    label: Some(i),
                    children: vec![],
                    step: vec![],
                    f,
                },
                NodeKind::Inner => {
                    let mut children: Vec<usize> = Vec::new();
                    let mut step = Vec::with_capacity(ctx.len());
                    for p in &ctx {
                        let y = e.step(x, p).0;
                        let id = *ids.entry(y).or_insert_with(|| {
                            order.push(y);
                            order.len() - 1
                        });
                        let pos = match children.iter().position(|&c| c == id) {
                            Some(pos) => pos,
                            None => {
                                children.push(id);
                                children.len() - 1
                            }
                        };
                        step.push(u8::try_from(pos).map_err(|_| CloError::Protocol {
                            node: k - 1,
                            reason: "out-degree above 255".into(),
                        })?);
                    }
                    ExtNode {
                        label: None,
                        children,
                        step,
                        f,
                    }
                }
            };
            nodes.push(node);
        }
        Ok(ExtProtocol {
            nu: amb.us.len(),
            nv: amb.vs.len(),
            root: 0,
            nodes,
        })
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    fn answer(&self, b: usize, pair: usize, amb: &Ambient) -> u8 {
        let node = &self.nodes[b];
        if !node.f.get(pair) {
            return NO;
        }
        match node.label {
            None => 1,
            Some(i) => {
                let (iu, iv) = (pair / self.nv, pair % self.nv);
                if i < amb.n && amb.us[iu].x.get(i) && !amb.vs[iv].x.get(i) {
                    1
                } else {
                    WRONG
                }
            }
        }
    }

    /// Pairs where some node in `F` leaves `F`, or a leaf in `F` has a wrong label.
    pub fn definitional_errors(&self, amb: &Ambient) -> BitVec {
        let mut err = BitVec::zeros(self.nu * self.nv);
        for (b, node) in self.nodes.iter().enumerate() {
            for p in node.f.iter_ones() {
                let bad = match node.label {
                    Some(_) => self.answer(b, p, amb) == WRONG,
                    None => {
                        let ch = node.children[node.step[p] as usize];
                        !self.nodes[ch].f.get(p)
                    }
                };
                if bad {
                    err.set(p, true);
                }
            }
        }
        err
    }
}

/// Classes of identical rows of an answer matrix, and the class of each U-point.
struct Classes {
    of_u: Vec<usize>,
    reps: Vec<usize>,
}

impl Classes {
    fn new(nu: usize, nv: usize, cell: impl Fn(usize) -> u8) -> Self {
        let mut seen: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut of_u = Vec::with_capacity(nu);
        let mut reps = Vec::new();
        for iu in 0..nu {
            let row: Vec<u8> = (0..nv).map(|iv| cell(iu * nv + iv)).collect();
            let next = reps.len();
            let c = *seen.entry(row).or_insert(next);
            if c == next {
                reps.push(iu);
            }
            of_u.push(c);
        }
        Classes { of_u, reps }
    }

    fn bits(&self) -> u32 {
        ceil_log2(self.reps.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct P2cReport {
    /// Protocol nodes.
    pub protocol_size: usize,
    /// Largest number of bits in one phase under the canonical schedule.
    pub t: u32,
    pub circuit_size: usize,
    /// `log₂(circuit_size / protocol_size) / t`.
    pub c: f64,
    pub rectangles: usize,
    pub locality: (u64, u64),
    /// Measure of pairs with a definitional error in the tabulated protocol.
    pub protocol_error: (u64, u64),
}

/// Builds a CLO from a tabulated protocol whose strategy never leaves `F` (errors only at
/// leaves). Each node's communication is replaced by a canonical schedule: U names the
/// class of its row of the node's answer matrix, V replies with the answer. A phase may
/// use at most `t` bits when `t` is given.
pub fn protocol_to_clo(
    p: &ExtProtocol,
    amb: &Ambient,
    t: Option<u32>,
) -> Result<(Clo, P2cReport), CloError> {
    let (nu, nv) = (p.nu, p.nv);
    let strat: Vec<Option<Classes>> = p
        .nodes
        .iter()
        .map(|node| {
            (node.label.is_none()).then(|| Classes::new(nu, nv, |pair| node.step[pair]))
        })
        .collect();
    let memb: Vec<Classes> = (0..p.nodes.len())
        .map(|b| Classes::new(nu, nv, |pair| p.answer(b, pair, amb)))
        .collect();
    let mut t_used = 0u32;
    for (b, node) in p.nodes.iter().enumerate() {
        let answers = if node.label.is_some() { 3 } else { 2 };
        let mut bits = memb[b].bits() + ceil_log2(answers);
        if let Some(s) = &strat[b] {
            bits = bits.max(s.bits() + ceil_log2(node.children.len()));
        }
        if let Some(t) = t {
            if bits > t {
                return Err(CloError::Schedule { node: b, bits, t });
            }
        }
        t_used = t_used.max(bits);
    }
    let root_f = &p.nodes[p.root].f;
    if root_f.count_ones() != nu * nv {
        return Err(CloError::Protocol {
            node: p.root,
            reason: "root is not in F for every pair".into(),
        });
    }
    let mut b = Builder {
        p,
        amb,
        strat: &strat,
        memb: &memb,
        circuit: MonoCircuit::new(amb.n, 0),
        rects: Vec::new(),
        memo: HashMap::new(),
    };
    let out = b.build(p.root, memb[p.root].of_u[0], 1)?;
    let mut circuit = b.circuit;
    circuit.output = out;
    circuit.e = b.rects.len();
    let clo = Clo::new(circuit, b.rects, Mode::TwoValued)?;
    let loc = locality(&clo, amb)?;
    let perr = p.definitional_errors(amb).count_ones() as u64;
    let size = clo.size();
    let report = P2cReport {
        protocol_size: p.size(),
        t: t_used,
        circuit_size: size,
        c: if t_used == 0 {
            0.0
        } else {
            (size as f64 / p.size() as f64).log2() / t_used as f64
        },
        rectangles: clo.rects.len(),
        locality: (*loc.numer(), *loc.denom()),
        protocol_error: (perr, (nu * nv) as u64),
    };
    Ok((clo, report))
}

struct Builder<'a> {
    p: &'a ExtProtocol,
    amb: &'a Ambient,
    strat: &'a [Option<Classes>],
    memb: &'a [Classes],
    circuit: MonoCircuit,
    rects: Vec<Rectangle>,
    memo: HashMap<(usize, usize, u8), usize>,
}

impl Builder<'_> {
    /// The rectangle of pairs whose membership transcript at `b` is (class, answer).
    fn rect(&self, b: usize, class: usize, answer: u8) -> Rectangle {
        let (nu, nv) = (self.p.nu, self.p.nv);
        let m = &self.memb[b];
        let rep = m.reps[class];
        Rectangle {
            u: BitVec::from_bools(&(0..nu).map(|iu| m.of_u[iu] == class).collect::<Vec<_>>()),
            v: BitVec::from_bools(
                &(0..nv)
                    .map(|iv| self.p.answer(b, rep * nv + iv, self.amb) == answer)
                    .collect::<Vec<_>>(),
            ),
        }
    }

    /// Circuit separating the rectangle of transcript (class, answer) at node `b`.
    fn build(&mut self, b: usize, class: usize, answer: u8) -> Result<usize, CloError> {
        if let Some(&g) = self.memo.get(&(b, class, answer)) {
            return Ok(g);
        }
        let r = self.rect(b, class, answer);
        let node = &self.p.nodes[b];
        let g = match node.label {
            Some(i) if answer != WRONG => self.circuit.x(i),
            Some(_) => {
                self.rects.push(r);
                self.circuit.y(self.rects.len() - 1)
            }
            None => {
                let tree = self.exchange_tree(b, &r)?;
                let mut leaves = Vec::new();
                collect_leaves(&tree, &mut leaves);
                let mut ids = HashMap::new();
                for z in leaves {
                    let (ch, c2, a2) = decode(z);
                    ids.insert(z, self.build(ch, c2, a2)?);
                }
                let mut circuit = std::mem::take(&mut self.circuit);
                let g = kw_formula_from_tree(&tree, &mut circuit, &mut |_, z| Ok(ids[&z]));
                self.circuit = circuit;
                g?
            }
        };
        self.memo.insert((b, class, answer), g);
        Ok(g)
    }

    /// U names its strategy class, V the child, U its membership class at the child, V the
    /// membership answer.
    fn exchange_tree(&self, b: usize, r: &Rectangle) -> Result<ExchangeTree, CloError> {
        let nv = self.p.nv;
        let node = &self.p.nodes[b];
        let s = self.strat[b].as_ref().expect("inner node");
        let us: Vec<usize> = r.u.iter_ones().collect();
        let vs: Vec<usize> = r.v.iter_ones().collect();
        if us.is_empty() || vs.is_empty() {
            return Ok(ExchangeTree::Dead {
                u_empty: us.is_empty(),
            });
        }
        let mut by_class1: Vec<(usize, Vec<usize>)> = Vec::new();
        group(&us, |iu| s.of_u[iu], &mut by_class1);
        let mut u_children = Vec::new();
        for (_, us1) in &by_class1 {
            let rep1 = us1[0];
            let mut by_child: Vec<(usize, Vec<usize>)> = Vec::new();
            group(&vs, |iv| node.step[rep1 * nv + iv] as usize, &mut by_child);
            let mut v_children = Vec::new();
            for (pos, vs1) in &by_child {
                let ch = node.children[*pos];
                let m = &self.memb[ch];
                let mut by_class2: Vec<(usize, Vec<usize>)> = Vec::new();
                group(us1, |iu| m.of_u[iu], &mut by_class2);
                let mut u2 = Vec::new();
                for (c2, us2) in &by_class2 {
                    let rep2 = us2[0];
                    let mut by_answer: Vec<(usize, Vec<usize>)> = Vec::new();
                    group(vs1, |iv| self.p.answer(ch, rep2 * nv + iv, self.amb) as usize, &mut by_answer);
                    let mut v2 = Vec::new();
                    for (a2, _) in &by_answer {
                        if *a2 as u8 == NO {
                            return Err(CloError::Protocol {
                                node: b,
                                reason: format!("strategy moves to node {ch} outside F"),
                            });
                        }
                        v2.push(ExchangeTree::Leaf(encode(ch, *c2, *a2 as u8)));
                    }
                    u2.push(ExchangeTree::Speak {
                        player: Player::V,
                        children: v2,
                    });
                }
                v_children.push(ExchangeTree::Speak {
                    player: Player::U,
                    children: u2,
                });
            }
            u_children.push(ExchangeTree::Speak {
                player: Player::V,
                children: v_children,
            });
        }
        Ok(ExchangeTree::Speak {
            player: Player::U,
            children: u_children,
        })
    }
}

fn group(items: &[usize], key: impl Fn(usize) -> usize, out: &mut Vec<(usize, Vec<usize>)>) {
    for &it in items {
        let k = key(it);
        match out.iter_mut().find(|(kk, _)| *kk == k) {
            Some((_, v)) => v.push(it),
            None => out.push((k, vec![it])),
        }
    }
}

fn encode(node: usize, class: usize, answer: u8) -> usize {
    (node << 24) | (class << 2) | answer as usize
}

fn decode(z: usize) -> (usize, usize, u8) {
    (z >> 24, (z >> 2) & ((1 << 22) - 1), (z & 3) as u8)
}

fn collect_leaves(t: &ExchangeTree, out: &mut Vec<usize>) {
    match t {
        ExchangeTree::Leaf(z) => out.push(*z),
        ExchangeTree::Dead { .. } => {}
        ExchangeTree::Speak { children, .. } => children.iter().for_each(|c| collect_leaves(c, out)),
    }
}

/// The sample with the fewest definitional errors among `samples` seeds, repaired so its
/// strategy never leaves `F`, then tabulated.
pub fn best_sample(
    proto: &dyn RandomizedProtocol,
    inst: &SplitInstance,
    amb: &Ambient,
    samples: u64,
    master: u64,
) -> Result<(u64, ExtProtocol), CloError> {
    let mut best: Option<(u64, u64)> = None;
    let ctx: Vec<PairCtx> = amb
        .us
        .iter()
        .flat_map(|u| amb.vs.iter().map(move |v| PairCtx::new(inst, u, v)))
        .collect();
    for s in 0..samples {
        let seed = crate::seed::derive(master, crate::seed::tag::PROTOCOL, &[s]);
        let e = proto.sample(seed);
        let errs = ctx.iter().filter(|p| e.definitional_error(p)).count() as u64;
        if best.is_none_or(|(_, b)| errs < b) {
            best = Some((seed, errs));
        }
    }
    let (seed, _) = best.ok_or_else(|| CloError::Dimension("no samples".into()))?;
    let repaired = crate::protocols::Repaired::new(proto.sample(seed));
    Ok((seed, ExtProtocol::from_engine(&repaired, inst, amb)?))
}

/// Random tabulated protocol with at most `k` nodes: inner nodes branch on one bit of `u`
/// or of `v`, leaves carry random labels, `F` is the set of pairs whose walk passes the
/// node. Errors occur only at leaves.
pub fn random_tiny_protocol(amb: &Ambient, k: usize, rng: &mut impl Rng) -> ExtProtocol {
    let (nu, nv) = (amb.us.len(), amb.vs.len());
    let inner = (k.max(3) - 1) / 2;
    let total = 2 * inner + 1;
    let mut nodes: Vec<ExtNode> = Vec::with_capacity(total);
    let mut queries = Vec::with_capacity(inner);
    for a in 0..inner {
        let later: Vec<usize> = (a + 1..total).collect();
        let c0 = later[rng.random_range(0..later.len())];
        let mut c1 = later[rng.random_range(0..later.len())];
        if c1 == c0 {
            c1 = if c0 + 1 < total { c0 + 1 } else { a + 1 };
        }
        queries.push((rng.random::<bool>(), rng.random_range(0..amb.n)));
        nodes.push(ExtNode {
            label: None,
            children: vec![c0, c1],
            step: Vec::with_capacity(nu * nv),
            f: BitVec::zeros(nu * nv),
        });
    }
    for _ in inner..total {
        nodes.push(ExtNode {
            label: Some(rng.random_range(0..amb.n)),
            children: vec![],
            step: vec![],
            f: BitVec::zeros(nu * nv),
        });
    }
    for (a, &(on_u, i)) in queries.iter().enumerate() {
        for iu in 0..nu {
            for iv in 0..nv {
                let bit = if on_u { amb.us[iu].x.get(i) } else { amb.vs[iv].x.get(i) };
                nodes[a].step.push(bit as u8);
            }
        }
    }
    for pair in 0..nu * nv {
        let mut x = 0;
        loop {
            nodes[x].f.set(pair, true);
            if nodes[x].label.is_some() {
                break;
            }
            x = nodes[x].children[nodes[x].step[pair] as usize];
        }
    }
    let mut p = ExtProtocol {
        nu,
        nv,
        root: 0,
        nodes,
    };
    prune_unreachable(&mut p);
    p
}

fn prune_unreachable(p: &mut ExtProtocol) {
    let keep: Vec<bool> = p.nodes.iter().map(|n| n.f.count_ones() > 0).collect();
    let mut new_id = vec![usize::MAX; p.nodes.len()];
    let mut next = 0;
    for (i, &k) in keep.iter().enumerate() {
        if k {
            new_id[i] = next;
            next += 1;
        }
    }
    let old = std::mem::take(&mut p.nodes);
    for (i, mut node) in old.into_iter().enumerate() {
        if !keep[i] {
            continue;
        }
        // children never reached from this node keep their slot but point at a kept node
        let fallback = node
            .children
            .iter()
            .map(|&c| new_id[c])
            .find(|&c| c != usize::MAX)
            .unwrap_or(usize::MAX);
        for c in node.children.iter_mut() {
            *c = if new_id[*c] == usize::MAX { fallback } else { new_id[*c] };
        }
        p.nodes.push(node);
    }
    p.root = new_id[p.root];
}

/// Walks a CLO's circuit from the output: at an AND gate move to an input that is 0 on
/// `v`, at an OR gate to one that is 1 on `u`. Oracle inputs are read through fixed
/// functions `f_j`; an `x_i` leaf answers `i`, every other leaf answers 0.
pub struct CircuitEngine<'a> {
    clo: &'a Clo,
    nodes: Vec<usize>,
    values: HashMap<BitVec, Vec<Tri>>,
}

impl<'a> CircuitEngine<'a> {
    pub fn new(clo: &'a Clo, amb: &Ambient, interp: &Interpretation) -> Self {
        let mut values = HashMap::new();
        for p in amb.us.iter().chain(&amb.vs) {
            let y = interp.y_values(clo, amb, &p.x);
            values.insert(p.x.clone(), clo.circuit.eval_all(&p.x, &y));
        }
        CircuitEngine {
            clo,
            nodes: clo.circuit.reachable_from(clo.circuit.output),
            values,
        }
    }

    fn val(&self, x: &BitVec, g: usize) -> Tri {
        self.values.get(x).expect("ambient point")[g]
    }
}

impl Engine for CircuitEngine<'_> {
    fn root(&self) -> NodeId {
        self.clo.circuit.output as NodeId
    }

    fn kind(&self, x: NodeId) -> NodeKind {
        match self.clo.circuit.gate(x as usize) {
            Gate::X { i } => NodeKind::Leaf(i),
            Gate::Y { .. } | Gate::Const { .. } => NodeKind::Leaf(0),
            Gate::And { .. } | Gate::Or { .. } => NodeKind::Inner,
        }
    }

    fn in_f(&self, x: NodeId, p: &PairCtx) -> bool {
        self.val(&p.u, x as usize) == Tri::One && self.val(&p.v, x as usize) == Tri::Zero
    }

    fn step(&self, x: NodeId, p: &PairCtx) -> (NodeId, u32) {
        let (a, b, and) = match self.clo.circuit.gate(x as usize) {
            Gate::And { a, b } => (a, b, true),
            Gate::Or { a, b } => (a, b, false),
            _ => return (x, 0),
        };
        let take_a = if and {
            self.val(&p.v, a) == Tri::Zero
        } else {
            self.val(&p.u, a) == Tri::One
        };
        ((if take_a { a } else { b }) as NodeId, 2)
    }

    fn membership_bits(&self, _x: NodeId) -> u32 {
        2
    }

    fn node_budget(&self) -> u32 {
        2
    }

    fn size(&self) -> usize {
        self.nodes.len()
    }

    fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|&&g| self.kind(g as NodeId) != NodeKind::Inner)
            .count()
    }

    fn nodes(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|&g| g as NodeId).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2pReport {
    pub size: usize,
    pub locality: (u64, u64),
    pub error: (u64, u64),
    pub bound: f64,
    /// Rectangles with neither side below `μ^{1/2}`.
    pub flagged: Vec<usize>,
    /// Every erroneous pair lies in the rectangle union.
    pub errors_in_rectangles: bool,
}

fn walk_errors(
    clo: &Clo,
    amb: &Ambient,
    inst: &SplitInstance,
    interp: &Interpretation,
) -> BitVec {
    let e = CircuitEngine::new(clo, amb, interp);
    let mut err = BitVec::zeros(amb.pairs());
    for (iu, u) in amb.us.iter().enumerate() {
        for (iv, v) in amb.vs.iter().enumerate() {
            if simulate(&e, &PairCtx::new(inst, u, v)).is_error() {
                err.set(iu * amb.vs.len() + iv, true);
            }
        }
    }
    err
}

fn report(clo: &Clo, amb: &Ambient, err: &BitVec, bound: f64, flagged: Vec<usize>) -> C2pReport {
    let bad = bad_set(&clo.rects, amb);
    let loc = rect_measure(&clo.rects, amb).expect("nonempty ambient");
    C2pReport {
        size: clo.size(),
        locality: (*loc.numer(), *loc.denom()),
        error: (err.count_ones() as u64, amb.pairs() as u64),
        bound,
        flagged,
        errors_in_rectangles: err.is_below(&bad),
    }
}

/// Protocol of communication 2 from a separating CLO. Each `f_j` is 1 on `U_j`, 0 on
/// `V_j`, and elsewhere 0 if `U_j` is small (below `μ^{1/2}` of `U_min`), else 1.
pub fn clo_to_protocol(clo: &Clo, amb: &Ambient, inst: &SplitInstance) -> Result<C2pReport, CloError> {
    verify_separation(clo, amb).map_err(CloError::NotSeparating)?;
    let mu = locality(clo, amb)?;
    let root = (*mu.numer() as f64 / *mu.denom() as f64).sqrt();
    let (nu, nv) = (amb.us.len() as f64, amb.vs.len() as f64);
    let mut flagged = Vec::new();
    let defaults = clo
        .rects
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let (fu, fv) = (r.u.count_ones() as f64 / nu, r.v.count_ones() as f64 / nv);
            if !(fu < root || fv < root) {
                flagged.push(j);
            }
            if fu < root || (fv >= root && fu <= fv) {
                Tri::Zero
            } else {
                Tri::One
            }
        })
        .collect();
    let err = walk_errors(clo, amb, inst, &Interpretation::Pointwise(defaults));
    Ok(report(clo, amb, &err, clo.size() as f64 * root, flagged))
}

/// As [`clo_to_protocol`] with 3-valued evaluation and `f_j = 1/2` off the rectangle.
pub fn clo_to_protocol_3v(clo: &Clo, amb: &Ambient, inst: &SplitInstance) -> Result<C2pReport, CloError> {
    verify_separation(clo, amb).map_err(CloError::NotSeparating)?;
    let mu = locality(clo, amb)?;
    let err = walk_errors(
        clo,
        amb,
        inst,
        &Interpretation::Pointwise(vec![Tri::Half; clo.rects.len()]),
    );
    Ok(report(clo, amb, &err, *mu.numer() as f64 / *mu.denom() as f64, vec![]))
}

/// `⌈X⌉`: all edges inside the vertex set `X` are present.
pub fn clique_term(c: &mut MonoCircuit, inst: &SplitInstance, xs: &[usize]) -> usize {
    let mut edges = Vec::new();
    for (a, &i) in xs.iter().enumerate() {
        for &j in &xs[a + 1..] {
            edges.push(c.x(inst.edge_index(i.min(j), i.max(j))));
        }
    }
    c.and_all(&edges)
}

fn random_y_formula(c: &mut MonoCircuit, e: usize, rng: &mut impl Rng) -> usize {
    let a = c.y(rng.random_range(0..e));
    match rng.random_range(0..3) {
        0 => a,
        1 => {
            let b = c.y(rng.random_range(0..e));
            c.and(a, b)
        }
        _ => {
            let b = c.y(rng.random_range(0..e));
            c.or(a, b)
        }
    }
}

fn clique_vertices(inst: &SplitInstance, u: &WitnessedPoint) -> Vec<usize> {
    let n0 = inst.family.expect("clique-color instance").n0;
    let mut vs: Vec<usize> = (0..n0)
        .filter(|&i| (0..n0).any(|j| j != i && u.x.get(inst.edge_index(i.min(j), i.max(j)))))
        .collect();
    vs.sort_unstable();
    vs
}

/// Random separating CLO: a disjunction of clique terms `⌈X⌉`, some conjoined with small
/// oracle formulas, covering every positive point. Rectangles start full and are shrunk
/// point by point (in random order) while separation holds.
pub fn random_clo(inst: &SplitInstance, amb: &Ambient, rng: &mut impl Rng) -> Clo {
    let cc = inst.family.expect("clique-color instance");
    let e = rng.random_range(1..=3);
    let mut c = MonoCircuit::new(inst.n, e);
    let mut terms = Vec::new();
    for u in &amb.us {
        let mut vs = clique_vertices(inst, u);
        vs.shuffle(rng);
        if rng.random_range(0..4) == 0 && vs.len() > cc.xi {
            vs.truncate(cc.xi + 1);
            terms.push(clique_term(&mut c, inst, &vs));
        } else {
            vs.truncate(rng.random_range(1..=cc.xi.min(vs.len())));
            let x = clique_term(&mut c, inst, &vs);
            let y = random_y_formula(&mut c, e, rng);
            terms.push(c.and(x, y));
        }
    }
    c.output = c.or_all(&terms);
    let mut clo = Clo::new(c, vec![Rectangle::full(amb); e], Mode::TwoValued).expect("dims");
    let mut moves: Vec<(usize, bool, usize)> = (0..e)
        .flat_map(|j| {
            (0..amb.us.len())
                .map(move |k| (j, true, k))
                .chain((0..amb.vs.len()).map(move |k| (j, false, k)))
        })
        .collect();
    moves.shuffle(rng);
    let keep = rng.random_range(0..moves.len() / 2 + 1);
    for (j, on_u, k) in moves.into_iter().skip(keep) {
        let side = if on_u { &mut clo.rects[j].u } else { &mut clo.rects[j].v };
        side.set(k, false);
        if verify_separation(&clo, amb).is_err() {
            let side = if on_u { &mut clo.rects[j].u } else { &mut clo.rects[j].v };
            side.set(k, true);
        }
    }
    clo
}

/// One term `⌈X⌉ ∧ C(y)` of a restricted CLO; `c` is a gate of the oracle-only circuit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictedTerm {
    pub x: Vec<usize>,
    pub c: usize,
}

/// `⋁ (⌈X_i⌉ ∧ C_i(y))` with each `C_i` free of `x`-inputs.
#[derive(Debug, Clone)]
pub struct RestrictedClo {
    pub terms: Vec<RestrictedTerm>,
    pub ycirc: MonoCircuit,
    pub rects: Vec<Rectangle>,
}

impl RestrictedClo {
    pub fn to_clo(&self, inst: &SplitInstance) -> Clo {
        let e = self.rects.len();
        let mut c = MonoCircuit::new(inst.n, e);
        let mut terms = Vec::new();
        for t in &self.terms {
            let x = clique_term(&mut c, inst, &t.x);
            let y = c.import(&self.ycirc, t.c, |c, g| match g {
                Gate::Y { j } => c.y(j),
                Gate::Const { value } => c.konst(value),
                Gate::X { .. } => panic!("oracle formula uses an x input"),
                _ => unreachable!(),
            });
            terms.push(c.and(x, y));
        }
        c.output = c.or_all(&terms);
        Clo::new(c, self.rects.clone(), Mode::TwoValued).expect("dims")
    }

    /// The single rectangle `y[U, V]` equivalent to gate `g` under both extreme
    /// interpretations.
    pub fn collapse(&self, g: usize, amb: &Ambient) -> Result<Rectangle, CloError> {
        let mut memo: HashMap<usize, Rectangle> = HashMap::new();
        for k in self.ycirc.reachable_from(g) {
            let r = match self.ycirc.gate(k) {
                Gate::Y { j } => self.rects[j].clone(),
                Gate::Const { value: true } => Rectangle {
                    u: BitVec::ones(amb.us.len()),
                    v: BitVec::zeros(amb.vs.len()),
                },
                Gate::Const { value: false } => Rectangle {
                    u: BitVec::zeros(amb.us.len()),
                    v: BitVec::ones(amb.vs.len()),
                },
                Gate::X { .. } => {
                    return Err(CloError::Dimension("oracle formula uses an x input".into()))
                }
                Gate::And { a, b } => rect_algebra(RectOp::And, &memo[&a], &memo[&b]),
                Gate::Or { a, b } => rect_algebra(RectOp::Or, &memo[&a], &memo[&b]),
            };
            memo.insert(k, r);
        }
        Ok(memo.remove(&g).expect("root visited"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyReport {
    /// Fraction of `V_max` accepted under the `V`-extreme interpretation.
    pub accept_v: (u64, u64),
    /// Fraction of `U_min` rejected under the `U`-extreme interpretation.
    pub reject_u: (u64, u64),
    pub branch_accepts: bool,
    pub branch_rejects: bool,
    pub holds: bool,
    pub mu: (u64, u64),
    pub ell: usize,
    /// Whether `4 ≤ ξ < ω`, `|X_i| ≤ ⌊√ξ⌋` and `μ ≤ 1/16` hold; otherwise report only.
    pub hypotheses_ok: bool,
    pub violations: Vec<String>,
    /// Terms whose collapsed `V_i` has measure at most `μ^{1/2}`.
    pub small_v_terms: usize,
    /// For such terms: smallest exact acceptance of the term alone under the `V`-extreme
    /// interpretation, and `1 − C(ℓ,2)/ξ − μ^{1/2}`.
    pub small_v_acceptance: Option<f64>,
    pub small_v_bound: Option<f64>,
}

fn clique_holds(inst: &SplitInstance, xs: &[usize], x: &BitVec) -> bool {
    xs.iter().enumerate().all(|(a, &i)| {
        xs[a + 1..]
            .iter()
            .all(|&j| x.get(inst.edge_index(i.min(j), i.max(j))))
    })
}

pub fn dichotomy_check(
    e: &RestrictedClo,
    inst: &SplitInstance,
    amb: &Ambient,
) -> Result<DichotomyReport, CloError> {
    let cc = inst
        .family
        .ok_or_else(|| CloError::Dimension("clique-color instance required".into()))?;
    let mu = rect_measure(&e.rects, amb)?;
    let mu_f = *mu.numer() as f64 / *mu.denom() as f64;
    let sqrt_xi = (cc.xi as f64).sqrt().floor() as usize;
    let ell = e.terms.iter().map(|t| t.x.len()).max().unwrap_or(0);
    let mut violations = Vec::new();
    if !(4 <= cc.xi && cc.xi < cc.omega) {
        violations.push(format!("needs 4 ≤ ξ < ω, got ξ={}, ω={}", cc.xi, cc.omega));
    }
    if ell > sqrt_xi {
        violations.push(format!("a term has |X| = {ell} > ⌊√ξ⌋ = {sqrt_xi}"));
    }
    if mu > Ratio::new(1, 16) {
        violations.push(format!("locality {mu} > 1/16"));
    }
    let collapsed: Vec<Rectangle> = e
        .terms
        .iter()
        .map(|t| e.collapse(t.c, amb))
        .collect::<Result<_, _>>()?;
    let term_accepts_v = |k: usize, iv: usize| {
        !collapsed[k].v.get(iv) && clique_holds(inst, &e.terms[k].x, &amb.vs[iv].x)
    };
    let accepted_v = (0..amb.vs.len())
        .filter(|&iv| (0..e.terms.len()).any(|k| term_accepts_v(k, iv)))
        .count() as u64;
    let rejected_u = (0..amb.us.len())
        .filter(|&iu| {
            !(0..e.terms.len()).any(|k| {
                collapsed[k].u.get(iu) && clique_holds(inst, &e.terms[k].x, &amb.us[iu].x)
            })
        })
        .count() as u64;
    let (nu, nv) = (amb.us.len() as u64, amb.vs.len() as u64);
    let branch_accepts = 4 * accepted_v >= nv;
    let branch_rejects = 4 * rejected_u >= 3 * nu;
    let small: Vec<usize> = (0..e.terms.len())
        .filter(|&k| (collapsed[k].v.count_ones() as f64 / nv as f64) <= mu_f.sqrt())
        .collect();
    let small_v_acceptance = small
        .iter()
        .map(|&k| (0..amb.vs.len()).filter(|&iv| term_accepts_v(k, iv)).count() as f64 / nv as f64)
        .min_by(f64::total_cmp);
    let binom = ell * ell.saturating_sub(1) / 2;
    Ok(DichotomyReport {
        accept_v: (accepted_v, nv),
        reject_u: (rejected_u, nu),
        branch_accepts,
        branch_rejects,
        holds: branch_accepts || branch_rejects,
        mu: (*mu.numer(), *mu.denom()),
        ell,
        hypotheses_ok: violations.is_empty(),
        violations,
        small_v_terms: small.len(),
        small_v_acceptance,
        small_v_bound: (!small.is_empty())
            .then(|| 1.0 - binom as f64 / cc.xi as f64 - mu_f.sqrt()),
    })
}

fn random_subset(len: usize, size: usize, rng: &mut impl Rng) -> BitVec {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    let mut b = BitVec::zeros(len);
    for &i in &idx[..size.min(len)] {
        b.set(i, true);
    }
    b
}

/// Random restricted CLO with rectangles of total measure at most `mu_max`, terms with
/// `|X| ≤ ⌊√ξ⌋`, and small random oracle formulas.
pub fn random_restricted_clo(
    inst: &SplitInstance,
    amb: &Ambient,
    mu_max: f64,
    rng: &mut impl Rng,
) -> RestrictedClo {
    let cc = inst.family.expect("clique-color instance");
    let sqrt_xi = (cc.xi as f64).sqrt().floor() as usize;
    let (nu, nv) = (amb.us.len(), amb.vs.len());
    let e = rng.random_range(1..=4);
    let share = mu_max / e as f64;
    let rects: Vec<Rectangle> = (0..e)
        .map(|_| {
            // pick one side's fraction freely, then the other to keep the product in budget
            let a: f64 = rng.random_range(share..=1.0);
            let b = share / a;
            let (fu, fv) = if rng.random() { (a, b) } else { (b, a) };
            let su = ((fu * nu as f64).floor() as usize).clamp(1, nu);
            let sv = ((fv * nv as f64).floor() as usize).min(nv);
            Rectangle {
                u: random_subset(nu, su, rng),
                v: random_subset(nv, sv, rng),
            }
        })
        .collect();
    let mut ycirc = MonoCircuit::new(0, e);
    let terms = (0..rng.random_range(0..=8))
        .map(|_| {
            let size = rng.random_range(0..=sqrt_xi);
            let mut vs: Vec<usize> = (0..cc.n0).collect();
            vs.shuffle(rng);
            vs.truncate(size);
            vs.sort_unstable();
            RestrictedTerm {
                x: vs,
                c: random_y_formula(&mut ycirc, e, rng),
            }
        })
        .collect();
    RestrictedClo { terms, ycirc, rects }
}
