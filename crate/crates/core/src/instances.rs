//! Formula families, the split set-up with witness samplers, a saturation refuter and the
//! embedding of resolution refutations into linear-clause proofs.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::f2::{BitVec, LinPoly};
use crate::proof::{trim, Clause, Fragment, Proof};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("invalid parameters: {0}")]
    Parameters(String),
    #[error("enumeration would produce {count} points, above the limit {limit}")]
    TooLarge { count: u128, limit: u128 },
    #[error("invalid resolution refutation: {0}")]
    BadRefutation(String),
}

/// Unsatisfiable pigeonhole clauses: `n+1` pigeons, `n` holes, variable `x_{ij}` (pigeon
/// `i` sits in hole `j`) at index `i*n + j`.
pub fn gen_php(n: usize) -> Result<(usize, Vec<Clause>), InstanceError> {
    if n == 0 {
        return Err(InstanceError::Parameters("php needs n >= 1".into()));
    }
    let vars = (n + 1) * n;
    let x = |i: usize, j: usize| i * n + j;
    let neg = |v: usize| LinPoly::literal(vars, v, false);
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..=n {
            for k in i + 1..=n {
                out.push(Clause::new([neg(x(i, j)), neg(x(k, j))]));
            }
        }
    }
    for i in 0..=n {
        for j in 0..n {
            for k in j + 1..n {
                out.push(Clause::new([neg(x(i, j)), neg(x(i, k))]));
            }
        }
    }
    for i in 0..=n {
        out.push(Clause::new([LinPoly::sum_of_vars(vars, (0..n).map(|j| x(i, j)))]));
    }
    Ok((vars, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    U,
    V,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WitnessedPoint {
    pub x: BitVec,
    pub witness: BitVec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CliqueColor {
    pub n0: usize,
    pub omega: usize,
    pub xi: usize,
}

/// Variables are laid out as `x` (n), then `q` (s), then `r` (r).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitInstance {
    pub n: usize,
    pub s: usize,
    pub r: usize,
    pub a_clauses: Vec<Clause>,
    pub b_clauses: Vec<Clause>,
    pub family: Option<CliqueColor>,
}

impl SplitInstance {
    pub fn vars(&self) -> usize {
        self.n + self.s + self.r
    }

    /// A-clauses followed by B-clauses.
    pub fn clauses(&self) -> Vec<Clause> {
        self.a_clauses
            .iter()
            .chain(self.b_clauses.iter())
            .cloned()
            .collect()
    }

    /// Full assignment `(x, q, r)`.
    pub fn point(&self, x: &BitVec, q: &BitVec, r: &BitVec) -> BitVec {
        debug_assert_eq!((x.len(), q.len(), r.len()), (self.n, self.s, self.r));
        x.concat(q).concat(r)
    }

    pub fn satisfies(&self, side: Side, p: &WitnessedPoint) -> bool {
        let (clauses, a) = match side {
            Side::U => (
                &self.a_clauses,
                self.point(&p.x, &p.witness, &BitVec::zeros(self.r)),
            ),
            Side::V => (
                &self.b_clauses,
                self.point(&p.x, &BitVec::zeros(self.s), &p.witness),
            ),
        };
        clauses.iter().all(|c| c.eval_unchecked(&a))
    }

    fn cc(&self) -> CliqueColor {
        self.family.expect("clique-color instance required")
    }

    pub fn edge_index(&self, i: usize, j: usize) -> usize {
        edge_index(self.cc().n0, i, j)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n0 = self.cc().n0;
        (0..n0)
            .flat_map(|i| (i + 1..n0).map(move |j| (i, j)))
            .collect()
    }

    /// Graph with all edges inside `vertices`, plus the witness placing slot `u` at the
    /// `u`-th vertex.
    pub fn clique_point(&self, vertices: &[usize]) -> WitnessedPoint {
        let CliqueColor { n0, .. } = self.cc();
        let mut x = BitVec::zeros(self.n);
        for (a, &i) in vertices.iter().enumerate() {
            for &j in &vertices[a + 1..] {
                x.set(edge_index(n0, i.min(j), i.max(j)), true);
            }
        }
        let mut q = BitVec::zeros(self.s);
        for (u, &i) in vertices.iter().enumerate() {
            q.set(u * n0 + i, true);
        }
        WitnessedPoint { x, witness: q }
    }

    /// Complete multipartite graph of a coloring, with the coloring as witness.
    pub fn coloring_point(&self, colors: &[usize]) -> WitnessedPoint {
        let CliqueColor { n0, xi, .. } = self.cc();
        let mut x = BitVec::zeros(self.n);
        for i in 0..n0 {
            for j in i + 1..n0 {
                if colors[i] != colors[j] {
                    x.set(edge_index(n0, i, j), true);
                }
            }
        }
        let mut r = BitVec::zeros(self.r);
        for (i, &c) in colors.iter().enumerate() {
            r.set(i * xi + c, true);
        }
        WitnessedPoint { x, witness: r }
    }
}

fn edge_index(n0: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n0);
    // edges (i, j), i < j, in lexicographic order
    i * n0 - i * (i + 1) / 2 + (j - i - 1)
}

fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Clique (positive side, ω-cliques) versus coloring (negative side, ξ-colorable graphs)
/// on `n0` vertices. Edge variables `p_ij`, clique-slot variables `q_ui`, color variables
/// `r_ia`.
pub fn gen_clique_color(n0: usize, omega: usize, xi: usize) -> Result<SplitInstance, InstanceError> {
    if !(n0 >= omega && omega > xi && xi >= 1) {
        return Err(InstanceError::Parameters(format!(
            "need n0 >= omega > xi >= 1, got n0={n0}, omega={omega}, xi={xi}"
        )));
    }
    let n = n0 * (n0 - 1) / 2;
    let s = omega * n0;
    let r = n0 * xi;
    let vars = n + s + r;
    let p = |i: usize, j: usize| edge_index(n0, i.min(j), i.max(j));
    let q = |u: usize, i: usize| n + u * n0 + i;
    let rv = |i: usize, a: usize| n + s + i * xi + a;
    let pos = |v: usize| LinPoly::literal(vars, v, true);
    let neg = |v: usize| LinPoly::literal(vars, v, false);

    let mut a_clauses = Vec::new();
    for u in 0..omega {
        a_clauses.push(Clause::new((0..n0).map(|i| pos(q(u, i)))));
    }
    for u in 0..omega {
        for v in u + 1..omega {
            for i in 0..n0 {
                a_clauses.push(Clause::new([neg(q(u, i)), neg(q(v, i))]));
            }
        }
    }
    for u in 0..omega {
        for v in u + 1..omega {
            for i in 0..n0 {
                for j in 0..n0 {
                    if i != j {
                        a_clauses.push(Clause::new([neg(q(u, i)), neg(q(v, j)), pos(p(i, j))]));
                    }
                }
            }
        }
    }

    let mut b_clauses = Vec::new();
    for i in 0..n0 {
        b_clauses.push(Clause::new((0..xi).map(|a| pos(rv(i, a)))));
    }
    for i in 0..n0 {
        for a in 0..xi {
            for b in a + 1..xi {
                b_clauses.push(Clause::new([neg(rv(i, a)), neg(rv(i, b))]));
            }
        }
    }
    for a in 0..xi {
        for i in 0..n0 {
            for j in i + 1..n0 {
                b_clauses.push(Clause::new([neg(rv(i, a)), neg(rv(j, a)), neg(p(i, j))]));
            }
        }
    }

    Ok(SplitInstance {
        n,
        s,
        r,
        a_clauses,
        b_clauses,
        family: Some(CliqueColor { n0, omega, xi }),
    })
}

/// A pure ω-clique on a uniformly random vertex set.
pub fn sample_u(inst: &SplitInstance, rng: &mut impl Rng) -> WitnessedPoint {
    let CliqueColor { n0, omega, .. } = inst.cc();
    let mut vs = sample(rng, n0, omega).into_vec();
    vs.sort_unstable();
    inst.clique_point(&vs)
}

/// The complete multipartite graph of a uniformly random coloring using all
/// `min(ξ, n0)` colors (rejection sampling).
pub fn sample_v(inst: &SplitInstance, rng: &mut impl Rng) -> WitnessedPoint {
    let CliqueColor { n0, xi, .. } = inst.cc();
    let used = xi.min(n0);
    loop {
        let colors: Vec<usize> = (0..n0).map(|_| rng.random_range(0..xi)).collect();
        let distinct: HashSet<usize> = colors.iter().copied().collect();
        if distinct.len() == used {
            return inst.coloring_point(&colors);
        }
    }
}

pub const ENUM_LIMIT: u128 = 2_000_000;

/// All pure ω-cliques.
pub fn enumerate_umin(inst: &SplitInstance) -> Result<Vec<WitnessedPoint>, InstanceError> {
    let CliqueColor { n0, omega, .. } = inst.cc();
    let count = binom(n0, omega);
    if count > ENUM_LIMIT {
        return Err(InstanceError::TooLarge {
            count,
            limit: ENUM_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut comb: Vec<usize> = (0..omega).collect();
    loop {
        out.push(inst.clique_point(&comb));
        // next combination in lexicographic order
        let mut k = omega;
        while k > 0 && comb[k - 1] == n0 - omega + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        comb[k - 1] += 1;
        for m in k..omega {
            comb[m] = comb[m - 1] + 1;
        }
    }
    Ok(out)
}

fn stirling2(n: usize, k: usize) -> u128 {
    let mut t = vec![vec![0u128; k + 1]; n + 1];
    t[0][0] = 1;
    for i in 1..=n {
        for j in 1..=k.min(i) {
            t[i][j] = j as u128 * t[i - 1][j] + t[i - 1][j - 1];
        }
    }
    t[n][k]
}

/// All complete multipartite graphs with exactly `min(ξ, n0)` nonempty parts, one per set
/// partition (restricted growth strings), witness = the partition's block indices.
pub fn enumerate_vmax(inst: &SplitInstance) -> Result<Vec<WitnessedPoint>, InstanceError> {
    let CliqueColor { n0, xi, .. } = inst.cc();
    let parts = xi.min(n0);
    let count = stirling2(n0, parts);
    if count > ENUM_LIMIT {
        return Err(InstanceError::TooLarge {
            count,
            limit: ENUM_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut rgs = vec![0usize; n0];
    fn rec(
        pos: usize,
        max_used: usize,
        parts: usize,
        rgs: &mut Vec<usize>,
        inst: &SplitInstance,
        out: &mut Vec<WitnessedPoint>,
    ) {
        let n0 = rgs.len();
        let remaining = n0 - pos;
        if remaining + max_used < parts {
            return;
        }
        if pos == n0 {
            out.push(inst.coloring_point(rgs));
            return;
        }
        for c in 0..=max_used.min(parts - 1) {
            rgs[pos] = c;
            rec(pos + 1, max_used.max(c + 1), parts, rgs, inst, out);
        }
    }
    if n0 > 0 {
        rgs[0] = 0;
        rec(1, 1, parts, &mut rgs, inst, &mut out);
    }
    Ok(out)
}

/// Literal code: `2·var + negated`.
pub type Lit = u32;

/// Disjunction of literals over at most 64 variables, as (positive, negative) masks.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct CnfClause {
    pub pos: u64,
    pub neg: u64,
}

impl CnfClause {
    pub fn len(&self) -> u32 {
        self.pos.count_ones() + self.neg.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.pos == 0 && self.neg == 0
    }

    pub fn is_tautology(&self) -> bool {
        self.pos & self.neg != 0
    }

    pub fn subsumes(&self, other: &CnfClause) -> bool {
        self.pos & !other.pos == 0 && self.neg & !other.neg == 0
    }

    /// Literals as linear polynomials: `x` for positive, `x+1` for negative.
    pub fn to_clause(&self, vars: usize) -> Clause {
        let mut polys = Vec::new();
        for v in 0..64 {
            if (self.pos >> v) & 1 == 1 {
                polys.push(LinPoly::literal(vars, v, true));
            }
            if (self.neg >> v) & 1 == 1 {
                polys.push(LinPoly::literal(vars, v, false));
            }
        }
        Clause::new(polys)
    }
}

/// One input clause of the CNF expansion: which linear clause it came from and, per
/// polynomial of that clause (in canonical order), the literal polynomials it splits into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CnfInput {
    pub clause: CnfClause,
    pub origin: usize,
    pub parts: Vec<Vec<LinPoly>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolutionStep {
    pub left: usize,
    pub right: usize,
    pub var: usize,
    pub resolvent: CnfClause,
}

/// Nodes `0..inputs.len()` are inputs, then one node per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolutionRefutation {
    pub vars: usize,
    pub inputs: Vec<CnfInput>,
    pub steps: Vec<ResolutionStep>,
}

impl ResolutionRefutation {
    pub fn node(&self, i: usize) -> CnfClause {
        if i < self.inputs.len() {
            self.inputs[i].clause
        } else {
            self.steps[i - self.inputs.len()].resolvent
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let base = self.inputs.len();
        for (k, st) in self.steps.iter().enumerate() {
            let me = base + k;
            if st.left >= me || st.right >= me || st.var >= 64 {
                return Err(InstanceError::BadRefutation(format!("step {k} has bad indices")));
            }
            let (l, r) = (self.node(st.left), self.node(st.right));
            let bit = 1u64 << st.var;
            if l.pos & bit == 0 || r.neg & bit == 0 {
                return Err(InstanceError::BadRefutation(format!(
                    "step {k}: pivot not present with opposite signs"
                )));
            }
            let expect = CnfClause {
                pos: (l.pos & !bit) | r.pos,
                neg: l.neg | (r.neg & !bit),
            };
            if expect != st.resolvent {
                return Err(InstanceError::BadRefutation(format!("step {k}: wrong resolvent")));
            }
        }
        match self.steps.last() {
            Some(st) if st.resolvent.is_empty() => Ok(()),
            _ if self.inputs.iter().any(|i| i.clause.is_empty()) && self.steps.is_empty() => Ok(()),
            _ => Err(InstanceError::BadRefutation("does not end in the empty clause".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GaveUp {
    Fixpoint,
    Cap(usize),
    TooManyVariables(usize),
    ExpansionTooLarge,
}

pub const DEFAULT_CAP: usize = 1_000_000;

/// Expands each linear clause into an equivalent CNF. A polynomial `Σ_S x + c` is true
/// exactly off the assignments `b` of `S` with `Σ b = c`; each such `b` yields the literal
/// set `{x_j + b_j : j ∈ S}`, whose sum is the polynomial itself.
pub fn cnf_expand(clauses: &[Clause], vars: usize) -> Result<Vec<CnfInput>, GaveUp> {
    if vars > 64 {
        return Err(GaveUp::TooManyVariables(vars));
    }
    const MAX_PER_CLAUSE: usize = 1 << 12;
    let mut out = Vec::new();
    for (origin, c) in clauses.iter().enumerate() {
        if c.polys().iter().any(|p| p.is_constant() && p.constant()) {
            continue;
        }
        // partial products: (cnf clause, parts so far)
        let mut partial: Vec<(CnfClause, Vec<Vec<LinPoly>>)> =
            vec![(CnfClause { pos: 0, neg: 0 }, Vec::new())];
        for p in c.polys() {
            let support: Vec<usize> = p.coeffs().iter_ones().collect();
            let mut options: Vec<(CnfClause, Vec<LinPoly>)> = Vec::new();
            if !support.is_empty() {
                if support.len() > 12 {
                    return Err(GaveUp::ExpansionTooLarge);
                }
                for b in 0u64..(1 << support.len()) {
                    if (b.count_ones() % 2 == 1) != p.constant() {
                        continue;
                    }
                    let mut cl = CnfClause { pos: 0, neg: 0 };
                    let mut lits = Vec::new();
                    for (k, &v) in support.iter().enumerate() {
                        let bk = (b >> k) & 1 == 1;
                        if bk {
                            cl.neg |= 1 << v;
                        } else {
                            cl.pos |= 1 << v;
                        }
                        lits.push(LinPoly::literal(vars, v, !bk));
                    }
                    options.push((cl, lits));
                }
            } else {
                // the zero polynomial contributes nothing
                options.push((CnfClause { pos: 0, neg: 0 }, Vec::new()));
            }
            let mut next = Vec::new();
            for (acc, parts) in &partial {
                for (cl, lits) in &options {
                    let mut parts = parts.clone();
                    parts.push(lits.clone());
                    next.push((
                        CnfClause {
                            pos: acc.pos | cl.pos,
                            neg: acc.neg | cl.neg,
                        },
                        parts,
                    ));
                }
            }
            if next.len() > MAX_PER_CLAUSE {
                return Err(GaveUp::ExpansionTooLarge);
            }
            partial = next;
        }
        for (clause, parts) in partial {
            if !clause.is_tautology() {
                out.push(CnfInput {
                    clause,
                    origin,
                    parts,
                });
            }
        }
    }
    Ok(out)
}

/// Given-clause saturation with forward subsumption; returns the trimmed refutation.
pub fn naive_refute(clauses: &[Clause], vars: usize) -> Result<ResolutionRefutation, GaveUp> {
    naive_refute_capped(clauses, vars, DEFAULT_CAP)
}

pub fn naive_refute_capped(
    clauses: &[Clause],
    vars: usize,
    cap: usize,
) -> Result<ResolutionRefutation, GaveUp> {
    let inputs = cnf_expand(clauses, vars)?;
    // node storage: clause and parents (left has the positive pivot)
    let mut nodes: Vec<(CnfClause, Option<(usize, usize, usize)>)> =
        inputs.iter().map(|i| (i.clause, None)).collect();
    let mut seen: HashSet<CnfClause> = HashSet::new();
    let mut passive: BinaryHeap<Reverse<(u32, usize)>> = BinaryHeap::new();
    for (id, inp) in inputs.iter().enumerate() {
        if seen.insert(inp.clause) {
            passive.push(Reverse((inp.clause.len(), id)));
        }
    }
    let mut active: Vec<usize> = Vec::new();
    let mut generated = 0usize;
    let mut empty: Option<usize> = nodes.iter().position(|(c, _)| c.is_empty());

    while empty.is_none() {
        let Some(Reverse((_, given))) = passive.pop() else {
            return Err(GaveUp::Fixpoint);
        };
        let gc = nodes[given].0;
        if active.iter().any(|&a| nodes[a].0.subsumes(&gc)) {
            continue;
        }
        active.retain(|&a| !gc.subsumes(&nodes[a].0));
        active.push(given);
        for &other in &active {
            let oc = nodes[other].0;
            let pivots = (gc.pos & oc.neg) | (gc.neg & oc.pos);
            if pivots.count_ones() != 1 {
                // zero pivots: nothing to resolve; several: every resolvent is a tautology
                continue;
            }
            let var = pivots.trailing_zeros() as usize;
            let bit = 1u64 << var;
            let (l, r) = if gc.pos & bit != 0 {
                (given, other)
            } else {
                (other, given)
            };
            let (lc, rc) = (nodes[l].0, nodes[r].0);
            let res = CnfClause {
                pos: (lc.pos & !bit) | rc.pos,
                neg: lc.neg | (rc.neg & !bit),
            };
            generated += 1;
            if generated > cap {
                return Err(GaveUp::Cap(cap));
            }
            if !seen.insert(res) {
                continue;
            }
            nodes.push((res, Some((l, r, var))));
            let id = nodes.len() - 1;
            if res.is_empty() {
                empty = Some(id);
                break;
            }
            passive.push(Reverse((res.len(), id)));
        }
    }

    // keep only ancestors of the empty clause
    let root = empty.expect("loop exits with an empty clause");
    let mut keep = vec![false; nodes.len()];
    keep[root] = true;
    for i in (0..=root).rev() {
        if keep[i] {
            if let Some((l, r, _)) = nodes[i].1 {
                keep[l] = true;
                keep[r] = true;
            }
        }
    }
    let mut map = vec![usize::MAX; nodes.len()];
    let mut out_inputs = Vec::new();
    for (i, inp) in inputs.into_iter().enumerate() {
        if keep[i] {
            map[i] = out_inputs.len();
            out_inputs.push(inp);
        }
    }
    let base = out_inputs.len();
    let mut steps = Vec::new();
    for (i, (c, parents)) in nodes.iter().enumerate() {
        if let (true, Some((l, r, var))) = (keep[i], parents) {
            map[i] = base + steps.len();
            steps.push(ResolutionStep {
                left: map[*l],
                right: map[*r],
                var: *var,
                resolvent: *c,
            });
        }
    }
    Ok(ResolutionRefutation {
        vars,
        inputs: out_inputs,
        steps,
    })
}

/// Replays a resolution refutation as a proof over the original linear clauses. Inputs are
/// first split from their linear clause into literals; each resolution step becomes
/// weakenings to a common context, a binary step on `x` and `x+1` producing `0`, and a
/// contraction.
pub fn resolution_embed(
    refutation: &ResolutionRefutation,
    initials: &[Clause],
) -> Result<Proof, InstanceError> {
    refutation.validate()?;
    let vars = refutation.vars;
    let mut f = Fragment::new(vars);
    let mut node_line = Vec::with_capacity(refutation.inputs.len() + refutation.steps.len());
    for inp in &refutation.inputs {
        let src = initials.get(inp.origin).ok_or_else(|| {
            InstanceError::BadRefutation(format!("input refers to missing clause {}", inp.origin))
        })?;
        if inp.parts.len() != src.lw() {
            return Err(InstanceError::BadRefutation("input parts do not match clause".into()));
        }
        let mut cur = f.initial(inp.origin, src.clone());
        for (p, lits) in src.polys().iter().zip(&inp.parts) {
            if lits.is_empty() {
                continue;
            }
            let mut rest = p.clone();
            for lit in &lits[..lits.len() - 1] {
                let tail = rest.add_unchecked(lit);
                cur = f.split(cur, lit, &tail);
                rest = tail;
            }
        }
        cur = f.contract_if_zero(cur);
        let target = inp.clause.to_clause(vars);
        if !f.clause(cur).is_subset(&target) {
            return Err(InstanceError::BadRefutation(
                "input clause is not derivable from its origin".into(),
            ));
        }
        cur = f.weaken_to(cur, &target);
        node_line.push(cur);
    }
    for st in &refutation.steps {
        let x = LinPoly::var(vars, st.var);
        let l = f.resolve(node_line[st.left], &x, node_line[st.right]);
        node_line.push(l);
    }
    Ok(trim(&f.into_proof(initials.to_vec())))
}

/// Saturation followed by the embedding.
pub fn refute_linear(clauses: &[Clause], vars: usize) -> Result<Proof, RefuteError> {
    let res = naive_refute(clauses, vars).map_err(RefuteError::GaveUp)?;
    resolution_embed(&res, clauses).map_err(RefuteError::Instance)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RefuteError {
    #[error("no refutation found: {0:?}")]
    GaveUp(GaveUp),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Distinct graphs in a list of points (by the `x` part).
pub fn distinct_graphs(points: &[WitnessedPoint]) -> usize {
    points.iter().map(|p| &p.x).collect::<HashSet<_>>().len()
}

/// Index of each point's graph, for quick membership lookups.
pub fn graph_index(points: &[WitnessedPoint]) -> HashMap<BitVec, usize> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.x.clone(), i))
        .collect()
}
