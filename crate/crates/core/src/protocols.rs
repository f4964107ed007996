//! Karchmer–Wigderson style protocols for split instances.
//!
//! Player U holds a point `(u, q^u)` satisfying the A-clauses, player V holds `(v, r^v)`
//! satisfying the B-clauses. Protocols are dags walked from the root by a strategy; every
//! node carries a set `F` of pairs for which it is "correct". A walk ends at a leaf labelled
//! with a coordinate `i`, which is right when `u_i = 1` and `v_i = 0`.
//!
//! Interpolation protocols are built from refutations: a line is in `F` when the mixed point
//! `(v, q^u, r^v)` falsifies its clause.

use std::cell::OnceCell;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::approx::Reducer;
use crate::f2::{ceil_log2, BitVec, F2Matrix};
use crate::instances::{SplitInstance, WitnessedPoint};
use crate::proof::{proof_width, trim, Clause, Proof, Rule};
use crate::seed;

pub type NodeId = u64;

const LEAF: u64 = 1 << 62;
const TWIN: u64 = 1 << 61;
const YLEAF: u64 = 1 << 60;
const FRAG_SHIFT: u32 = 24;
const TAGS: u64 = LEAF | TWIN | YLEAF;

pub fn leaf(i: usize) -> NodeId {
    LEAF | i as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("proof initials do not start with the instance clauses")]
    InitialsMismatch,
    #[error("proof is not a refutation: {0}")]
    NotRefutation(String),
    #[error("bad parameter: {0}")]
    Parameter(String),
}

/// One input pair with the derived points both players can refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCtx {
    pub u: BitVec,
    pub q: BitVec,
    pub v: BitVec,
    pub r: BitVec,
    /// `(v, q^u, r^v)`.
    pub vpt: BitVec,
}

impl PairCtx {
    pub fn new(inst: &SplitInstance, u: &WitnessedPoint, v: &WitnessedPoint) -> Self {
        PairCtx {
            vpt: inst.point(&v.x, &u.witness, &v.witness),
            u: u.x.clone(),
            q: u.witness.clone(),
            v: v.x.clone(),
            r: v.witness.clone(),
        }
    }

    pub fn label_valid(&self, i: usize) -> bool {
        i < self.u.len() && self.u.get(i) && !self.v.get(i)
    }
}

/// `D` split as `Ax + Bq + Cr + e` over the `x`, `q`, `r` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClauseMatrices {
    pub a: F2Matrix,
    pub b: F2Matrix,
    pub c: F2Matrix,
    pub e: BitVec,
}

impl ClauseMatrices {
    pub fn new(d: &Clause, n: usize, s: usize, r: usize) -> Self {
        let polys = d.polys();
        let block = |start: usize, len: usize| {
            F2Matrix::from_rows(len, polys.iter().map(|p| p.coeffs().slice(start, len)).collect())
                .expect("consistent widths")
        };
        ClauseMatrices {
            a: block(0, n),
            b: block(n, s),
            c: block(n + s, r),
            e: BitVec::from_bools(&polys.iter().map(|p| p.constant()).collect::<Vec<_>>()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task4 {
    /// Precondition `(u,q,r) ∈ D`, `(v,q,r) ∉ D` does not hold.
    NotApplicable,
    /// A coordinate with `u_i = 1`, `v_i = 0`.
    Coordinate(usize),
    /// `u' ≥ u` with `(u', q, r) ∉ D`.
    Raise(BitVec),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McOutcome {
    pub u_in: bool,
    pub v_in: bool,
    /// Some coordinate with `u_i ≠ v_i`, when the two membership answers differ.
    pub coordinate: Option<usize>,
    pub task4: Task4,
    pub exchange_bits: u32,
    pub task3_bits: u32,
    pub task4_bits: u32,
}

impl McOutcome {
    pub fn total_bits(&self) -> u32 {
        self.exchange_bits + self.task3_bits + self.task4_bits
    }
}

/// Bits for naming one of `n` coordinates or "none".
fn index_bits(n: usize) -> u32 {
    ceil_log2(n + 1)
}

/// Worst-case bits of [`mcc_tasks`] on a clause of width `w` with `n` coordinates.
pub fn mcc_budget(w: usize, n: usize) -> u32 {
    4 * w as u32 + (w as u32 + 2) * index_bits(n) + 2 * ceil_log2(n)
}

/// The four membership tasks on `D` for the points `(u, q, r)` and `(v, q, r)`.
///
/// U holds `u, q`, V holds `v, r`. Both first exchange `Au, Bq` and `Av, Cr` (`4w` bits).
/// Membership then follows. A differing coordinate is found by binary search on a row of
/// `A` where `Au ≠ Av`. Task 4 has U announce pivots `i` with `u_i = 0` while the reduced
/// matrix allows; V then either names a coordinate or U raises `u`.
pub fn mcc_tasks(
    d: &Clause,
    dims: (usize, usize, usize),
    u: &BitVec,
    q: &BitVec,
    v: &BitVec,
    r: &BitVec,
) -> McOutcome {
    let (n, s, rr) = dims;
    let m = ClauseMatrices::new(d, n, s, rr);
    let w = d.lw();
    let au = m.a.mat_vec(u).expect("u length");
    let av = m.a.mat_vec(v).expect("v length");
    let mut shared = m.b.mat_vec(q).expect("q length");
    shared.xor_assign(&m.c.mat_vec(r).expect("r length"));
    shared.xor_assign(&m.e);
    let u_in = !au.xor(&shared).is_zero();
    let v_in = !av.xor(&shared).is_zero();
    let mut out = McOutcome {
        u_in,
        v_in,
        coordinate: None,
        task4: Task4::NotApplicable,
        exchange_bits: 4 * w as u32,
        task3_bits: 0,
        task4_bits: 0,
    };
    let diff = au.xor(&av);
    if u_in != v_in {
        let k = diff.first_one().expect("membership differs so Au ≠ Av");
        let mut support: Vec<usize> = m.a.row(k).iter_ones().collect();
        while support.len() > 1 {
            let half = support.len().div_ceil(2);
            let pu = support[..half].iter().filter(|&&i| u.get(i)).count() % 2;
            let pv = support[..half].iter().filter(|&&i| v.get(i)).count() % 2;
            out.task3_bits += 2;
            if pu != pv {
                support.truncate(half);
            } else {
                support.drain(..half);
            }
        }
        out.coordinate = Some(support[0]);
    }
    if u_in && !v_in {
        let (task4, bits) = raise_or_name(&m.a, &diff, u, v, n);
        out.task4 = task4;
        out.task4_bits = bits;
    }
    out
}

fn raise_or_name(a: &F2Matrix, diff: &BitVec, u: &BitVec, v: &BitVec, n: usize) -> (Task4, u32) {
    let w = a.n_rows();
    let l = index_bits(n);
    let rows = a
        .rows()
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let mut x = row.concat(&BitVec::zeros(1));
            x.set(n, diff.get(k));
            x
        })
        .collect();
    let mut m = F2Matrix::from_rows(n + 1, rows).expect("augmented widths");
    let mut pivots = Vec::new();
    let mut bits = 0;
    let live = |m: &F2Matrix, t: usize, i: usize| (t..w).any(|k| m.get(k, i));
    while pivots.len() < w {
        let t = pivots.len();
        bits += l;
        match (0..n).find(|&i| !u.get(i) && live(&m, t, i)) {
            Some(i) => {
                m.pivot_step(t, i);
                pivots.push(i);
            }
            None => break,
        }
    }
    let t = pivots.len();
    if (0..n).any(|i| live(&m, t, i)) {
        bits += l;
        if let Some(i) = (0..n).find(|&i| !v.get(i) && live(&m, t, i)) {
            return (Task4::Coordinate(i), bits);
        }
    }
    let mut raised = u.clone();
    for (k, &i) in pivots.iter().enumerate() {
        if m.get(k, n) {
            raised.set(i, true);
        }
    }
    (Task4::Raise(raised), bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Inner,
    Leaf(usize),
}

/// A protocol dag together with its `F` sets and strategy.
pub trait Engine {
    fn root(&self) -> NodeId;
    fn kind(&self, x: NodeId) -> NodeKind;
    fn in_f(&self, x: NodeId, p: &PairCtx) -> bool;
    /// Next node and the bits spent choosing it.
    fn step(&self, x: NodeId, p: &PairCtx) -> (NodeId, u32);
    /// Bits to decide whether the pair is in `F` at `x`.
    fn membership_bits(&self, x: NodeId) -> u32;
    fn node_budget(&self) -> u32;
    fn size(&self) -> usize;
    fn leaf_count(&self) -> usize;
    fn nodes(&self) -> Vec<NodeId>;

    /// Does the sampled protocol err on the pair, by definition: some node in `F` whose
    /// strategy leaves `F`, or a leaf in `F` with a wrong label.
    fn definitional_error(&self, p: &PairCtx) -> bool {
        audit(self, p)
    }
}

pub fn audit<E: Engine + ?Sized>(e: &E, p: &PairCtx) -> bool {
    e.nodes().into_iter().any(|x| {
        e.in_f(x, p)
            && match e.kind(x) {
                NodeKind::Leaf(i) => !p.label_valid(i),
                NodeKind::Inner => !e.in_f(e.step(x, p).0, p),
            }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    CorrectLeaf(usize),
    WrongLeaf(usize),
    StrategyFailure { node: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub path: Vec<NodeId>,
    pub total_bits: u64,
    pub max_node_bits: u32,
    pub outcome: Outcome,
}

impl Transcript {
    pub fn is_error(&self) -> bool {
        !matches!(self.outcome, Outcome::CorrectLeaf(_))
    }
}

/// Walks the strategy from the root. Panics if a node spends more bits than the declared
/// budget or the walk does not terminate.
pub fn simulate<E: Engine + ?Sized>(e: &E, p: &PairCtx) -> Transcript {
    let mut x = e.root();
    let mut path = vec![x];
    let mut total = 0u64;
    let mut max_bits = 0u32;
    let mut failure = None;
    let mut x_in = e.in_f(x, p);
    // sizing a lazy engine builds all of it, so only long walks pay for the check
    let mut limit = 1 << 12;
    let label = loop {
        match e.kind(x) {
            NodeKind::Leaf(i) => break i,
            NodeKind::Inner => {
                let (y, b) = e.step(x, p);
                assert!(
                    b <= e.node_budget(),
                    "node {x:#x} spent {b} bits, budget {}",
                    e.node_budget()
                );
                total += b as u64;
                max_bits = max_bits.max(b);
                let y_in = e.in_f(y, p);
                if failure.is_none() && x_in && !y_in {
                    failure = Some(x);
                }
                x = y;
                x_in = y_in;
                path.push(x);
                if path.len() > limit {
                    limit = limit.max(e.size() + 1);
                    assert!(path.len() <= limit, "walk does not terminate");
                }
            }
        }
    };
    let outcome = match failure {
        Some(node) => Outcome::StrategyFailure { node },
        None if x_in && p.label_valid(label) => Outcome::CorrectLeaf(label),
        None => Outcome::WrongLeaf(label),
    };
    Transcript {
        path,
        total_bits: total,
        max_node_bits: max_bits,
        outcome,
    }
}

/// How a protocol node derives from its proof line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineRule {
    Initial(usize),
    Axiom,
    Premise(NodeId),
    Binary(NodeId, NodeId),
}

/// A proof seen as a dag of clause-labelled nodes.
pub trait LineView {
    fn root(&self) -> NodeId;
    fn rule(&self, x: NodeId) -> LineRule;
    fn clause(&self, x: NodeId) -> &Clause;
    fn lines(&self) -> Vec<NodeId>;
    fn ax_count(&self) -> usize {
        0
    }
    /// Errors decided from the extra axioms alone, if every other node is known sound.
    fn ax_error(&self, _p: &PairCtx) -> Option<bool> {
        None
    }
}

fn premise_rule(rule: &Rule) -> LineRule {
    match rule {
        Rule::Initial(k) => LineRule::Initial(*k),
        Rule::Axiom(_) => LineRule::Axiom,
        Rule::Weaken { premise, .. } | Rule::Contract { premise } => {
            LineRule::Premise(*premise as NodeId)
        }
        Rule::Binary { left, right, .. } => LineRule::Binary(*left as NodeId, *right as NodeId),
    }
}

/// The refutation itself.
pub struct ExactView<'a> {
    proof: &'a Proof,
}

impl LineView for ExactView<'_> {
    fn root(&self) -> NodeId {
        (self.proof.lines.len() - 1) as NodeId
    }
    fn rule(&self, x: NodeId) -> LineRule {
        premise_rule(&self.proof.lines[x as usize].rule)
    }
    fn clause(&self, x: NodeId) -> &Clause {
        &self.proof.lines[x as usize].conclusion
    }
    fn lines(&self) -> Vec<NodeId> {
        (0..self.proof.lines.len() as NodeId).collect()
    }
}

/// Every line replaced by its random approximation, with the source rules kept.
pub struct ApproxView<'a> {
    reducer: Reducer<'a>,
}

impl LineView for ApproxView<'_> {
    fn root(&self) -> NodeId {
        (self.reducer.source().lines.len() - 1) as NodeId
    }
    fn rule(&self, x: NodeId) -> LineRule {
        premise_rule(&self.reducer.source().lines[x as usize].rule)
    }
    fn clause(&self, x: NodeId) -> &Clause {
        &self.reducer.line_approx(x as usize).clause
    }
    fn lines(&self) -> Vec<NodeId> {
        (0..self.reducer.source().lines.len() as NodeId).collect()
    }
}

/// The width-reduced refutation over the instance plus extra axioms, built lazily
/// fragment by fragment as the walk needs it. Node `(j, i)` is line `i` of the image of
/// source line `j`.
pub struct AxiomView<'a> {
    reducer: Reducer<'a>,
}

impl AxiomView<'_> {
    fn node(j: usize, i: usize) -> NodeId {
        ((j as u64) << FRAG_SHIFT) | i as u64
    }

    fn split(x: NodeId) -> (usize, usize) {
        ((x >> FRAG_SHIFT) as usize, (x & ((1 << FRAG_SHIFT) - 1)) as usize)
    }

    fn resolve(&self, mut j: usize, mut i: usize) -> NodeId {
        while let Some(key) = self.reducer.fragment(j).import_key(i) {
            j = key;
            i = self.reducer.fragment(j).last();
        }
        Self::node(j, i)
    }
}

impl LineView for AxiomView<'_> {
    fn root(&self) -> NodeId {
        let j = self.reducer.source().lines.len() - 1;
        self.resolve(j, self.reducer.fragment(j).last())
    }
    fn rule(&self, x: NodeId) -> LineRule {
        let (j, i) = Self::split(x);
        let frag = self.reducer.fragment(j);
        match &frag.lines[i].rule {
            Rule::Initial(k) => LineRule::Initial(*k),
            Rule::Axiom(_) => LineRule::Axiom,
            Rule::Weaken { premise, .. } | Rule::Contract { premise } => {
                LineRule::Premise(self.resolve(j, *premise))
            }
            Rule::Binary { left, right, .. } => {
                LineRule::Binary(self.resolve(j, *left), self.resolve(j, *right))
            }
        }
    }
    fn clause(&self, x: NodeId) -> &Clause {
        let (j, i) = Self::split(x);
        self.reducer.fragment(j).clause(i)
    }
    fn lines(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        for j in 0..self.reducer.source().lines.len() {
            let frag = self.reducer.fragment(j);
            out.extend(
                (0..frag.len())
                    .filter(|&i| frag.import_key(i).is_none())
                    .map(|i| Self::node(j, i)),
            );
        }
        out
    }
    fn ax_count(&self) -> usize {
        self.reducer.ax_count()
    }
    /// Only extra-axiom nodes can fail: the rest is an exact interpolation walk over a
    /// sound derivation. An extra axiom `C^r ∪ {f+1}` is falsified exactly when `C` holds
    /// and `C^r` does not; the walk then lands on a leaf labelled 0. Taken over all extra
    /// axioms, so it bounds the error of the trimmed dag from above.
    fn ax_error(&self, p: &PairCtx) -> Option<bool> {
        if p.label_valid(0) {
            return Some(false);
        }
        Some((0..self.reducer.distinct_count()).any(|cid| {
            self.reducer.distinct_clause(cid).eval_unchecked(&p.vpt)
                && !self.reducer.clause_approx(cid).clause.eval_unchecked(&p.vpt)
        }))
    }
}

/// Interpolation protocol over a clause-labelled dag plus `n` coordinate leaves (and one
/// extra leaf per extra axiom).
pub struct InterpolationEngine<V> {
    view: V,
    dims: (usize, usize, usize),
    a_count: usize,
    source_initials: usize,
    budget: u32,
    line_count: OnceCell<usize>,
}

impl<V: LineView> InterpolationEngine<V> {
    fn with_view(inst: &SplitInstance, view: V, source_initials: usize, width: usize) -> Self {
        InterpolationEngine {
            view,
            dims: (inst.n, inst.s, inst.r),
            a_count: inst.a_clauses.len(),
            source_initials,
            budget: mcc_budget(width, inst.n),
            line_count: OnceCell::new(),
        }
    }

    pub fn view(&self) -> &V {
        &self.view
    }

    pub fn line_count(&self) -> usize {
        *self.line_count.get_or_init(|| self.view.lines().len())
    }
}

fn check_refutation_of(inst: &SplitInstance, proof: &Proof) -> Result<Proof, ProtocolError> {
    crate::proof::check_refutation(proof)
        .map_err(|v| ProtocolError::NotRefutation(v.to_string()))?;
    let clauses = inst.clauses();
    if proof.initials.len() < clauses.len() || proof.initials[..clauses.len()] != clauses[..] {
        return Err(ProtocolError::InitialsMismatch);
    }
    Ok(trim(proof))
}

impl<'a> InterpolationEngine<ExactView<'a>> {
    /// `proof` must be trimmed (every line an ancestor of the last).
    pub fn exact(inst: &SplitInstance, proof: &'a Proof) -> Self {
        Self::with_view(inst, ExactView { proof }, proof.initials.len(), proof_width(proof))
    }
}

impl<'a> InterpolationEngine<ApproxView<'a>> {
    pub fn approx(inst: &SplitInstance, proof: &'a Proof, w: usize, seed: u64) -> Self {
        let reducer = Reducer::new(proof, w, seed);
        Self::with_view(inst, ApproxView { reducer }, proof.initials.len(), w)
    }
}

impl<'a> InterpolationEngine<AxiomView<'a>> {
    pub fn axiom(inst: &SplitInstance, proof: &'a Proof, w: usize, seed: u64) -> Self {
        let reducer = Reducer::new(proof, w, seed);
        let w0 = proof_width(proof);
        let width = (2 * w + 3).max(w0 + w + 2);
        Self::with_view(
            inst,
            AxiomView { reducer },
            proof.initials.len(),
            width,
        )
    }
}

impl<V: LineView> Engine for InterpolationEngine<V> {
    fn root(&self) -> NodeId {
        self.view.root()
    }

    fn kind(&self, x: NodeId) -> NodeKind {
        if x & LEAF != 0 {
            NodeKind::Leaf((x & !TAGS) as usize)
        } else if x & YLEAF != 0 {
            NodeKind::Leaf(0)
        } else {
            NodeKind::Inner
        }
    }

    fn in_f(&self, x: NodeId, p: &PairCtx) -> bool {
        match self.kind(x) {
            NodeKind::Leaf(i) => p.label_valid(i),
            NodeKind::Inner => !self.view.clause(x).eval_unchecked(&p.vpt),
        }
    }

    fn step(&self, x: NodeId, p: &PairCtx) -> (NodeId, u32) {
        match self.view.rule(x) {
            LineRule::Premise(y) => (y, 0),
            LineRule::Binary(l, r) => {
                let bits = self.view.clause(l).lw() as u32 + 1;
                if self.view.clause(l).eval_unchecked(&p.vpt) {
                    (r, bits)
                } else {
                    (l, bits)
                }
            }
            LineRule::Axiom => (leaf(0), 0),
            LineRule::Initial(k) if k >= self.source_initials => {
                (YLEAF | (k - self.source_initials) as u64, 0)
            }
            LineRule::Initial(k) if k < self.a_count => {
                let out = mcc_tasks(self.view.clause(x), self.dims, &p.u, &p.q, &p.v, &p.r);
                let bits = out.exchange_bits + out.task4_bits;
                match out.task4 {
                    Task4::Coordinate(i) => (leaf(i), bits),
                    _ => (leaf(0), bits),
                }
            }
            LineRule::Initial(_) => (leaf(0), 0),
        }
    }

    fn membership_bits(&self, x: NodeId) -> u32 {
        match self.kind(x) {
            NodeKind::Leaf(_) => 2,
            NodeKind::Inner => self.view.clause(x).lw() as u32 + 1,
        }
    }

    fn node_budget(&self) -> u32 {
        self.budget
    }

    fn size(&self) -> usize {
        self.line_count() + self.leaf_count()
    }

    fn leaf_count(&self) -> usize {
        self.dims.0 + self.view.ax_count()
    }

    fn nodes(&self) -> Vec<NodeId> {
        let mut out = self.view.lines();
        out.extend((0..self.dims.0).map(leaf));
        out.extend((0..self.view.ax_count() as u64).map(|k| YLEAF | k));
        out
    }

    fn definitional_error(&self, p: &PairCtx) -> bool {
        match self.view.ax_error(p) {
            Some(e) => e,
            None => audit(self, p),
        }
    }
}

/// Adds a twin leaf (label 0) under every inner node and diverts the strategy there
/// whenever it would leave `F`. The twin is in `F` exactly when that happens, so walks
/// never fail inside the dag; the error moves to the twin's label.
pub struct Repaired<'a> {
    inner: Box<dyn Engine + 'a>,
}

impl<'a> Repaired<'a> {
    pub fn new(inner: Box<dyn Engine + 'a>) -> Self {
        Repaired { inner }
    }
}

impl Engine for Repaired<'_> {
    fn root(&self) -> NodeId {
        self.inner.root()
    }

    fn kind(&self, x: NodeId) -> NodeKind {
        if x & TWIN != 0 {
            NodeKind::Leaf(0)
        } else {
            self.inner.kind(x)
        }
    }

    fn in_f(&self, x: NodeId, p: &PairCtx) -> bool {
        if x & TWIN != 0 {
            let base = x ^ TWIN;
            self.inner.in_f(base, p) && !self.inner.in_f(self.inner.step(base, p).0, p)
        } else {
            self.inner.in_f(x, p)
        }
    }

    fn step(&self, x: NodeId, p: &PairCtx) -> (NodeId, u32) {
        let (y, b) = self.inner.step(x, p);
        let bits = b + self.inner.membership_bits(x) + self.inner.membership_bits(y);
        if self.inner.in_f(x, p) && !self.inner.in_f(y, p) {
            (TWIN | x, bits)
        } else {
            (y, bits)
        }
    }

    fn membership_bits(&self, x: NodeId) -> u32 {
        if x & TWIN != 0 {
            let base = x ^ TWIN;
            self.inner.node_budget() + 2 * self.inner.membership_bits(base)
        } else {
            self.inner.membership_bits(x)
        }
    }

    fn node_budget(&self) -> u32 {
        3 * self.inner.node_budget()
    }

    fn size(&self) -> usize {
        2 * self.inner.size() - self.inner.leaf_count()
    }

    fn leaf_count(&self) -> usize {
        self.inner.size()
    }

    fn nodes(&self) -> Vec<NodeId> {
        let base = self.inner.nodes();
        let twins: Vec<NodeId> = base
            .iter()
            .filter(|&&x| self.inner.kind(x) == NodeKind::Inner)
            .map(|&x| TWIN | x)
            .collect();
        base.into_iter().chain(twins).collect()
    }
}

/// Declared complexity of a protocol distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Declared {
    pub size: usize,
    pub node_bits: u32,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Exact,
    Randomized,
    Axiom,
}

/// A distribution over protocol dags, sampled by seed.
pub trait RandomizedProtocol: Sync {
    fn sample(&self, seed: u64) -> Box<dyn Engine + '_>;
    fn declared(&self) -> Declared;
}

/// Protocol built from a refutation of a split instance.
pub struct InterpolationProtocol {
    pub inst: SplitInstance,
    /// Trimmed.
    pub proof: Proof,
    pub kind: ProtocolKind,
    pub w: usize,
}

impl InterpolationProtocol {
    pub fn new(
        inst: &SplitInstance,
        proof: &Proof,
        kind: ProtocolKind,
        w: usize,
    ) -> Result<Self, ProtocolError> {
        if kind != ProtocolKind::Exact && w == 0 {
            return Err(ProtocolError::Parameter("w must be at least 1".into()));
        }
        Ok(InterpolationProtocol {
            inst: inst.clone(),
            proof: check_refutation_of(inst, proof)?,
            kind,
            w,
        })
    }

    pub fn lines(&self) -> usize {
        self.proof.lines.len()
    }
}

impl RandomizedProtocol for InterpolationProtocol {
    fn sample(&self, seed: u64) -> Box<dyn Engine + '_> {
        match self.kind {
            ProtocolKind::Exact => Box::new(InterpolationEngine::exact(&self.inst, &self.proof)),
            ProtocolKind::Randomized => Box::new(InterpolationEngine::approx(
                &self.inst,
                &self.proof,
                self.w,
                seed,
            )),
            ProtocolKind::Axiom => Box::new(InterpolationEngine::axiom(
                &self.inst,
                &self.proof,
                self.w,
                seed,
            )),
        }
    }

    fn declared(&self) -> Declared {
        let k = self.lines();
        let n = self.inst.n;
        let miss = (-(self.w as f64)).exp2() * k as f64;
        match self.kind {
            ProtocolKind::Exact => Declared {
                size: k + n,
                node_bits: mcc_budget(proof_width(&self.proof), n),
                error: 0.0,
            },
            ProtocolKind::Randomized => Declared {
                size: k + n,
                node_bits: mcc_budget(self.w, n),
                error: 3.0 * miss,
            },
            ProtocolKind::Axiom => {
                let e = self.sample(0);
                Declared {
                    size: e.size(),
                    node_bits: e.node_budget(),
                    error: miss,
                }
            }
        }
    }
}

/// [`Repaired`] applied to every sample.
pub struct RepairedProtocol<P> {
    pub inner: P,
}

pub fn repair_p4b<P: RandomizedProtocol>(inner: P) -> RepairedProtocol<P> {
    RepairedProtocol { inner }
}

impl<P: RandomizedProtocol> RandomizedProtocol for RepairedProtocol<P> {
    fn sample(&self, seed: u64) -> Box<dyn Engine + '_> {
        Box::new(Repaired::new(self.inner.sample(seed)))
    }

    fn declared(&self) -> Declared {
        let d = self.inner.declared();
        Declared {
            size: 2 * d.size,
            node_bits: 3 * d.node_bits,
            error: d.error,
        }
    }
}

/// Bounds of a Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// The walk ends at a wrong leaf or leaves `F` on the way.
    Walk,
    /// Some node of the sampled dag violates its local correctness condition.
    Definitional,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStat {
    pub pair: usize,
    pub errors: u64,
    pub trials: u64,
    pub rate: f64,
    /// One-sided lower and upper confidence bounds.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub mode: ErrorMode,
    pub seeds: u64,
    pub pairs: usize,
    pub errors: u64,
    pub trials: u64,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub strategy_failures: u64,
    pub max_node_bits: u32,
    pub max_total_bits: u64,
    pub per_pair: Vec<PairStat>,
}

impl ErrorReport {
    pub fn worst_pair(&self) -> Option<&PairStat> {
        self.per_pair
            .iter()
            .max_by(|a, b| a.rate.total_cmp(&b.rate))
    }
}

#[derive(Clone, Default)]
struct Tally {
    errors: Vec<u64>,
    failures: u64,
    max_node_bits: u32,
    max_total_bits: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        if self.errors.is_empty() {
            return other;
        }
        for (a, b) in self.errors.iter_mut().zip(other.errors) {
            *a += b;
        }
        self.failures += other.failures;
        self.max_node_bits = self.max_node_bits.max(other.max_node_bits);
        self.max_total_bits = self.max_total_bits.max(other.max_total_bits);
        self
    }
}

/// Monte-Carlo error of a protocol distribution: for each of `seeds` samples (seed `i`
/// derived from `master`), every pair is run once. Bounds are one-sided Wilson bounds at
/// `confidence`. Counts do not depend on the thread count.
pub fn estimate_error(
    proto: &dyn RandomizedProtocol,
    inst: &SplitInstance,
    pairs: &[(WitnessedPoint, WitnessedPoint)],
    seeds: u64,
    master: u64,
    mode: ErrorMode,
    confidence: f64,
) -> ErrorReport {
    let ctx: Vec<PairCtx> = pairs.iter().map(|(u, v)| PairCtx::new(inst, u, v)).collect();
    let tally = (0..seeds)
        .into_par_iter()
        .fold(Tally::default, |mut t, i| {
            if t.errors.is_empty() {
                t.errors = vec![0; ctx.len()];
            }
            let e = proto.sample(seed::derive(master, seed::tag::PROTOCOL, &[i]));
            for (k, p) in ctx.iter().enumerate() {
                let err = match mode {
                    ErrorMode::Definitional => e.definitional_error(p),
                    ErrorMode::Walk => {
                        let tr = simulate(e.as_ref(), p);
                        if matches!(tr.outcome, Outcome::StrategyFailure { .. }) {
                            t.failures += 1;
                        }
                        t.max_node_bits = t.max_node_bits.max(tr.max_node_bits);
                        t.max_total_bits = t.max_total_bits.max(tr.total_bits);
                        tr.is_error()
                    }
                };
                t.errors[k] += err as u64;
            }
            t
        })
        .reduce(Tally::default, Tally::merge);
    let errors = if tally.errors.is_empty() {
        vec![0; ctx.len()]
    } else {
        tally.errors
    };
    let z = normal_quantile(confidence);
    let per_pair: Vec<PairStat> = errors
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let (lower, upper) = wilson(e, seeds, z);
            PairStat {
                pair: k,
                errors: e,
                trials: seeds,
                rate: if seeds == 0 { 0.0 } else { e as f64 / seeds as f64 },
                lower,
                upper,
            }
        })
        .collect();
    let total: u64 = errors.iter().sum();
    let trials = seeds * ctx.len() as u64;
    let (lower, upper) = wilson(total, trials, z);
    ErrorReport {
        mode,
        seeds,
        pairs: ctx.len(),
        errors: total,
        trials,
        rate: if trials == 0 { 0.0 } else { total as f64 / trials as f64 },
        lower,
        upper,
        confidence,
        strategy_failures: tally.failures,
        max_node_bits: tally.max_node_bits,
        max_total_bits: tally.max_total_bits,
        per_pair,
    }
}

/// Randomized protocol finding a coordinate where two arbitrary strings differ: compare
/// parities of `m = ⌈log₂(1/ε)⌉` random subsets; on the first differing subset, binary
/// search inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RwProtocol {
    pub n: usize,
    pub eps: f64,
    pub m: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RwOutcome {
    Found(usize),
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RwTranscript {
    pub outcome: RwOutcome,
    pub bits: u32,
}

impl RwProtocol {
    pub fn new(n: usize, eps: f64) -> Result<Self, ProtocolError> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ProtocolError::Parameter(format!("eps {eps} not in (0,1)")));
        }
        if n == 0 {
            return Err(ProtocolError::Parameter("n must be positive".into()));
        }
        let m = (1.0 / eps).log2().ceil() as usize;
        Ok(RwProtocol { n, eps, m })
    }

    pub fn declared_error(&self) -> f64 {
        (-(self.m as f64)).exp2()
    }

    /// Nodes of the protocol tree: a chain of parity checks, a halving tree under each, and
    /// one error leaf.
    pub fn declared_size(&self) -> usize {
        self.m * 2 * self.n + 1
    }

    pub fn declared_bits(&self) -> u32 {
        2 * self.m as u32 + 2 * ceil_log2(self.n)
    }

    pub fn run(&self, u: &BitVec, v: &BitVec, rng: &mut impl Rng) -> RwTranscript {
        let mut bits = 0;
        for _ in 0..self.m {
            let mut set: Vec<usize> = (0..self.n).filter(|_| rng.random::<bool>()).collect();
            let parity = |x: &BitVec, s: &[usize]| s.iter().filter(|&&i| x.get(i)).count() % 2;
            bits += 2;
            if parity(u, &set) == parity(v, &set) {
                continue;
            }
            while set.len() > 1 {
                let half = set.len().div_ceil(2);
                bits += 2;
                if parity(u, &set[..half]) != parity(v, &set[..half]) {
                    set.truncate(half);
                } else {
                    set.drain(..half);
                }
            }
            return RwTranscript {
                outcome: RwOutcome::Found(set[0]),
                bits,
            };
        }
        RwTranscript {
            outcome: RwOutcome::Error,
            bits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{enumerate_umin, enumerate_vmax, gen_clique_color, refute_linear};
    use crate::f2::LinPoly;

    fn bv(s: &str) -> BitVec {
        s.parse().unwrap()
    }

    #[test]
    fn mcc_single_sum_example() {
        let d = Clause::parse(&["x1+x2"], 2).unwrap();
        let e = BitVec::zeros(0);
        let out = mcc_tasks(&d, (2, 0, 0), &bv("10"), &e, &bv("00"), &e);
        assert!(out.u_in && !out.v_in);
        assert_eq!(out.coordinate, Some(0));
        assert_eq!(out.task4, Task4::Raise(bv("11")));
        assert!(out.total_bits() <= mcc_budget(1, 2));
    }

    fn small_clause(rng: &mut impl Rng, vars: usize, w: usize) -> Clause {
        Clause::new((0..w).map(|_| {
            let coeffs = BitVec::from_bools(&(0..vars).map(|_| rng.random()).collect::<Vec<_>>());
            LinPoly::new(coeffs, rng.random())
        }))
    }

    #[test]
    fn mcc_exhaustive_sixteen_coordinates() {
        let (n, s, r) = (16, 2, 2);
        let mut rng = seed::rng(5, seed::tag::MUTATE, &[]);
        for w in 1..=4 {
            let d = small_clause(&mut rng, n + s + r, w);
            let q = BitVec::from_u64(s, rng.random_range(0..4));
            let rv = BitVec::from_u64(r, rng.random_range(0..4));
            for ui in (0..1u64 << n).step_by(257) {
                for vi in (0..1u64 << n).step_by(263) {
                    let (u, v) = (BitVec::from_u64(n, ui), BitVec::from_u64(n, vi));
                    let out = mcc_tasks(&d, (n, s, r), &u, &q, &v, &rv);
                    let w = d.lw() as u32;
                    let bound = 4 * w + (w + 4) * 4;
                    assert!(out.exchange_bits + out.task3_bits <= bound);
                    assert!(out.exchange_bits + out.task4_bits <= bound);
                    assert!(out.total_bits() <= mcc_budget(w as usize, n));
                    let upt = u.concat(&q).concat(&rv);
                    let vpt = v.concat(&q).concat(&rv);
                    assert_eq!(out.u_in, d.eval_unchecked(&upt));
                    assert_eq!(out.v_in, d.eval_unchecked(&vpt));
                    if let Some(i) = out.coordinate {
                        assert_ne!(u.get(i), v.get(i));
                    }
                    match &out.task4 {
                        Task4::Coordinate(i) => assert!(u.get(*i) && !v.get(*i)),
                        Task4::Raise(u2) => {
                            assert!(u.is_below(u2));
                            assert!(!d.eval_unchecked(&u2.concat(&q).concat(&rv)));
                        }
                        Task4::NotApplicable => assert!(!(out.u_in && !out.v_in)),
                    }
                }
            }
        }
    }

    fn small() -> (SplitInstance, Proof) {
        let inst = gen_clique_color(4, 3, 2).unwrap();
        let p = refute_linear(&inst.clauses(), inst.vars()).unwrap();
        (inst, p)
    }

    fn all_pairs(inst: &SplitInstance) -> Vec<PairCtx> {
        let us = enumerate_umin(inst).unwrap();
        let vs = enumerate_vmax(inst).unwrap();
        us.iter()
            .flat_map(|u| vs.iter().map(move |v| PairCtx::new(inst, u, v)))
            .collect()
    }

    #[test]
    fn exact_protocol_is_correct_everywhere() {
        let (inst, p) = small();
        let proto = InterpolationProtocol::new(&inst, &p, ProtocolKind::Exact, 0).unwrap();
        let e = proto.sample(0);
        assert_eq!(e.size(), proto.lines() + inst.n);
        for ctx in all_pairs(&inst) {
            assert!(e.in_f(e.root(), &ctx));
            let t = simulate(e.as_ref(), &ctx);
            assert!(matches!(t.outcome, Outcome::CorrectLeaf(_)), "{t:?}");
            assert!(t.path.iter().all(|&x| e.in_f(x, &ctx)));
        }
    }

    #[test]
    fn axiom_walk_matches_assembled_proof() {
        let (inst, p) = small();
        let proto = InterpolationProtocol::new(&inst, &p, ProtocolKind::Axiom, 3).unwrap();
        let pairs = all_pairs(&inst);
        for s in 0..4 {
            let lazy = proto.sample(s);
            let reduced = crate::approx::width_reduce(&proto.proof, 3, s).unwrap();
            let flat = InterpolationEngine::exact(&inst, &reduced.proof);
            for ctx in &pairs {
                let a = simulate(lazy.as_ref(), ctx);
                let b = simulate(&flat, ctx);
                assert_eq!(a.is_error(), b.is_error());
                assert_eq!(a.total_bits, b.total_bits);
            }
        }
    }

    #[test]
    fn walk_errors_imply_definitional_errors() {
        let (inst, p) = small();
        let pairs = all_pairs(&inst);
        for kind in [ProtocolKind::Randomized, ProtocolKind::Axiom] {
            let proto = InterpolationProtocol::new(&inst, &p, kind, 2).unwrap();
            for s in 0..3 {
                let e = proto.sample(s);
                for ctx in &pairs {
                    if simulate(e.as_ref(), ctx).is_error() {
                        assert!(e.definitional_error(ctx));
                    }
                }
            }
        }
    }

    /// Reports label 1 wherever the inner engine has label 0.
    struct Relabel<'a>(Box<dyn Engine + 'a>);

    impl Engine for Relabel<'_> {
        fn root(&self) -> NodeId {
            self.0.root()
        }
        fn kind(&self, x: NodeId) -> NodeKind {
            match self.0.kind(x) {
                NodeKind::Leaf(0) => NodeKind::Leaf(1),
                k => k,
            }
        }
        fn in_f(&self, x: NodeId, p: &PairCtx) -> bool {
            self.0.in_f(x, p)
        }
        fn step(&self, x: NodeId, p: &PairCtx) -> (NodeId, u32) {
            self.0.step(x, p)
        }
        fn membership_bits(&self, x: NodeId) -> u32 {
            self.0.membership_bits(x)
        }
        fn node_budget(&self) -> u32 {
            self.0.node_budget()
        }
        fn size(&self) -> usize {
            self.0.size()
        }
        fn leaf_count(&self) -> usize {
            self.0.leaf_count()
        }
        fn nodes(&self) -> Vec<NodeId> {
            self.0.nodes()
        }
    }

    #[test]
    fn mislabelled_leaves_are_counted() {
        let (inst, p) = small();
        let proto = InterpolationProtocol::new(&inst, &p, ProtocolKind::Exact, 0).unwrap();
        let e = Relabel(proto.sample(0));
        let wrong = all_pairs(&inst)
            .iter()
            .filter(|ctx| {
                let t = simulate(&e, ctx);
                matches!(t.outcome, Outcome::CorrectLeaf(0))
                    || matches!(t.outcome, Outcome::WrongLeaf(1))
            })
            .count();
        assert!(wrong > 0);
    }

    #[test]
    fn repair_removes_strategy_failures() {
        let (inst, p) = small();
        let base = InterpolationProtocol::new(&inst, &p, ProtocolKind::Randomized, 2).unwrap();
        let size = base.sample(0).size();
        let rep = repair_p4b(base);
        let pairs = all_pairs(&inst);
        let mut failures_before = 0;
        for s in 0..20 {
            let raw = rep.inner.sample(s);
            let e = rep.sample(s);
            assert!(e.size() <= 2 * size);
            for ctx in &pairs {
                let a = simulate(raw.as_ref(), ctx);
                let b = simulate(e.as_ref(), ctx);
                failures_before += matches!(a.outcome, Outcome::StrategyFailure { .. }) as u32;
                assert!(!matches!(b.outcome, Outcome::StrategyFailure { .. }));
                if !matches!(a.outcome, Outcome::StrategyFailure { .. }) {
                    assert_eq!(a.outcome, b.outcome);
                }
            }
        }
        assert!(failures_before > 0);
    }

    #[test]
    fn estimate_is_thread_independent() {
        let (inst, p) = small();
        let proto = InterpolationProtocol::new(&inst, &p, ProtocolKind::Randomized, 3).unwrap();
        let us = enumerate_umin(&inst).unwrap();
        let vs = enumerate_vmax(&inst).unwrap();
        let pairs: Vec<_> = vec![(us[0].clone(), vs[0].clone()), (us[1].clone(), vs[2].clone())];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_error(&proto, &inst, &pairs, 40, 9, ErrorMode::Walk, 0.99))
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn wilson_contains_rate() {
        let (lo, hi) = wilson(30, 100, normal_quantile(0.99));
        assert!(lo < 0.3 && 0.3 < hi);
        assert_eq!(wilson(0, 10, 2.0).0, 0.0);
    }

    #[test]
    fn rw_finds_differing_coordinates() {
        let rw = RwProtocol::new(10, 0.25).unwrap();
        assert_eq!(rw.m, 2);
        let mut rng = seed::rng(1, seed::tag::PARITY, &[]);
        let (u, v) = (bv("1100110011"), bv("1100110010"));
        let mut errors = 0;
        for _ in 0..2000 {
            let t = rw.run(&u, &v, &mut rng);
            assert!(t.bits <= rw.declared_bits());
            match t.outcome {
                RwOutcome::Found(i) => assert_eq!(i, 9),
                RwOutcome::Error => errors += 1,
            }
        }
        assert!((300..700).contains(&errors), "{errors}");
        assert!(RwProtocol::new(10, 1.5).is_err());
    }
}
