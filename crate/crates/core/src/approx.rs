//! Random subset-sum approximation of clauses and the randomized width reduction built on it.
//!
//! A clause `C` is replaced by `C^r = {ΣL₁, …, ΣL_w}` for random subsets `L_j ⊆ C`. The
//! approximation is one-sided (`C^r(a) = 1 ⇒ C(a) = 1`) and misses a point of `C` with
//! probability exactly `2^{-w}`. The width reduction maps every line `D` of a refutation
//! to `D^r`, using extra axioms `C^r ∪ {f+1}` (`f ∈ C`) to license the steps.

use std::cell::OnceCell;
use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::f2::LinPoly;
use crate::proof::{check_refutation, Clause, Fragment, Proof, Rule, Violation};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApproxError {
    #[error("input is not a valid refutation: {0}")]
    InvalidProof(#[from] Violation),
    #[error("w must be at least 1")]
    ZeroW,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// `C^r` together with the subsets that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Approximation {
    pub clause: Clause,
    /// For each polynomial of `clause`, a subset of positions in the source clause summing
    /// to it.
    pub reps: Vec<Vec<usize>>,
    /// All `w` sampled subsets, in order (including those with zero sum).
    pub subsets: Vec<Vec<usize>>,
}

/// Sums of `w` uniformly random subsets of `c`. Zero sums are dropped: the zero polynomial
/// is never true, so dropping it does not change the clause's truth value.
pub fn rs_approx(c: &Clause, w: usize, rng: &mut impl Rng) -> Approximation {
    let subsets: Vec<Vec<usize>> = (0..w)
        .map(|_| (0..c.lw()).filter(|_| rng.random::<bool>()).collect())
        .collect();
    approximation_from_subsets(c, subsets)
}

pub fn approximation_from_subsets(c: &Clause, subsets: Vec<Vec<usize>>) -> Approximation {
    let mut by_poly: HashMap<LinPoly, Vec<usize>> = HashMap::new();
    for s in &subsets {
        let Some(first) = c.polys().first() else {
            continue;
        };
        let mut sum = LinPoly::zero(first.vars());
        for &i in s {
            sum = sum.add_unchecked(&c.polys()[i]);
        }
        if !sum.is_zero() {
            by_poly.entry(sum).or_insert_with(|| s.clone());
        }
    }
    let clause = Clause::new(by_poly.keys().cloned());
    let reps = clause.polys().iter().map(|p| by_poly[p].clone()).collect();
    Approximation {
        clause,
        reps,
        subsets,
    }
}

/// Where the approximation of a target clause and its extra axioms live.
pub struct Target<'a> {
    pub clause: &'a Clause,
    pub approx: &'a Approximation,
    /// Initial-clause index of the extra axiom for the target's first polynomial; the
    /// axiom for polynomial `j` has index `ax_base + j`.
    pub ax_base: usize,
}

impl Target<'_> {
    pub fn ax_clause(&self, j: usize) -> Clause {
        self.approx.clause.with(&self.clause.polys()[j].negate())
    }

    fn ax_line(&self, frag: &mut Fragment, j: usize) -> usize {
        frag.initial(self.ax_base + j, self.ax_clause(j))
    }
}

/// The extra axioms `C^r ∪ {f_j + 1}` of one clause.
pub fn ax_clauses(c: &Clause, a: &Approximation) -> Vec<Clause> {
    c.polys()
        .iter()
        .map(|f| a.clause.with(&f.negate()))
        .collect()
}

/// From `context ∪ {g+h}` derives `context ∪ {g, h}`, returning a standalone proof with the
/// premise as its only initial clause.
pub fn derive_split(g: &LinPoly, h: &LinPoly, context: &Clause) -> Proof {
    let premise = context.with(&g.add_unchecked(h));
    let mut f = Fragment::new(g.vars());
    let l = f.initial(0, premise.clone());
    let l = f.split(l, g, h);
    let target = context.with(g).with(h);
    if f.clause(l) != &target {
        f.weaken_to(l, &target);
    }
    f.into_proof(vec![premise])
}

/// Line `line` contains `s = Σ_{j ∈ subset} f_j` (positions in the target clause). Peels
/// the summands off one at a time by resolving against the extra axioms
/// `C^r ∪ {f_j + 1}`, until the sum is zero (contracted away) or lands in `C^r`. The
/// returned line is `⊆ (line \ {s}) ∪ C^r`.
pub fn derive_from_sum(
    frag: &mut Fragment,
    line: usize,
    s: &LinPoly,
    subset: &[usize],
    t: &Target,
) -> Result<usize, ApproxError> {
    if !frag.clause(line).contains(s) {
        return Err(ApproxError::Precondition(format!("{s} not in the line")));
    }
    let mut cur = line;
    let mut s = s.clone();
    let mut rest = subset.to_vec();
    loop {
        if s.is_zero() {
            return Ok(frag.contract(cur));
        }
        if t.approx.clause.contains(&s) {
            return Ok(cur);
        }
        let Some(j) = rest.pop() else {
            return Err(ApproxError::Precondition(
                "subset does not sum to the polynomial".into(),
            ));
        };
        let fj = &t.clause.polys()[j];
        let ax = t.ax_line(frag, j);
        cur = frag.combine(cur, &s, ax, &fj.negate());
        s = s.add_unchecked(fj);
    }
}

/// From a line whose polynomials outside `C^r ∪ {side}` are all listed in `elems` as sums
/// of subsets of the target clause, derives exactly `C^r ∪ {side}`.
pub fn derive_superset_image(
    frag: &mut Fragment,
    line: usize,
    elems: &[(LinPoly, Vec<usize>)],
    side: Option<&LinPoly>,
    t: &Target,
) -> Result<usize, ApproxError> {
    let mut cur = line;
    for (d, subset) in elems {
        if t.approx.clause.contains(d) || side == Some(d) {
            continue;
        }
        if subset.is_empty() && !d.is_zero() {
            return Err(ApproxError::Precondition(format!(
                "{d} is not a sum of a nonempty subset of the target"
            )));
        }
        if !frag.clause(cur).contains(d) {
            continue;
        }
        cur = derive_from_sum(frag, cur, d, subset, t)?;
    }
    let mut target = t.approx.clause.clone();
    if let Some(g) = side {
        target = target.with(g);
    }
    if !frag.clause(cur).is_subset(&target) {
        return Err(ApproxError::Precondition(format!(
            "line {} is not covered by the listed sums",
            frag.clause(cur)
        )));
    }
    Ok(frag.weaken_to(cur, &target))
}

/// Re-expresses the subset representatives of `premise`'s approximation as positions in
/// `target`. Positions whose polynomial is missing from `target` are reported as `None`
/// so the caller can treat them (zero polynomial: dropped; side polynomial: split off).
fn remap_reps(
    premise: &Clause,
    a: &Approximation,
    target: &Clause,
) -> Vec<(LinPoly, Vec<Option<usize>>, Vec<usize>)> {
    a.clause
        .polys()
        .iter()
        .zip(&a.reps)
        .map(|(p, rep)| {
            let mapped: Vec<Option<usize>> = rep
                .iter()
                .map(|&i| target.position(&premise.polys()[i]))
                .collect();
            (p.clone(), mapped, rep.clone())
        })
        .collect()
}

/// From `line ⊇ P^r` where `P = Z ∪ {g}` and `Z ⊆ target`, derives `C^r ∪ {g}`, splitting
/// `g` off every sum that uses it.
fn image_with_side(
    frag: &mut Fragment,
    line: usize,
    premise: &Clause,
    pa: &Approximation,
    g: &LinPoly,
    t: &Target,
) -> Result<usize, ApproxError> {
    let g_pos = premise.position(g);
    let mut cur = line;
    let mut elems = Vec::new();
    for (p, mapped, rep) in remap_reps(premise, pa, t.clause) {
        let uses_g = g_pos.is_some_and(|gp| rep.contains(&gp));
        let mut subset = Vec::new();
        for (m, &orig) in mapped.iter().zip(&rep) {
            if Some(orig) == g_pos {
                continue;
            }
            match m {
                Some(j) => subset.push(*j),
                None if premise.polys()[orig].is_zero() => {}
                None => {
                    return Err(ApproxError::Precondition(format!(
                        "{} is neither in the target nor the side",
                        premise.polys()[orig]
                    )))
                }
            }
        }
        if uses_g {
            let c = p.add_unchecked(g);
            if c.is_zero() {
                continue;
            }
            if frag.clause(cur).contains(&p) {
                cur = frag.split(cur, &c, g);
            }
            elems.push((c, subset));
        } else {
            elems.push((p, subset));
        }
    }
    derive_superset_image(frag, cur, &elems, Some(g), t)
}

/// From `(Z ∪ {g})^r` at `l1` and `(Z ∪ {h})^r` at `l2` derives `(Z ∪ {g+h+1})^r`: both
/// premises are brought to `C^r` with `g` (resp. `h`) kept as a side polynomial, the
/// binary rule combines the sides, and the extra axiom for `g+h+1` removes the result.
#[allow(clippy::too_many_arguments)]
pub fn derive_binary_image(
    frag: &mut Fragment,
    l1: usize,
    p1: &Clause,
    a1: &Approximation,
    l2: usize,
    p2: &Clause,
    a2: &Approximation,
    g: &LinPoly,
    h: &LinPoly,
    t: &Target,
) -> Result<usize, ApproxError> {
    let s1 = image_with_side(frag, l1, p1, a1, g, t)?;
    let s2 = image_with_side(frag, l2, p2, a2, h, t)?;
    let sum = g.add_unchecked(h).negate();
    let b = frag.combine(s1, g, s2, h);
    let j = t.clause.position(&sum).ok_or_else(|| {
        ApproxError::Precondition(format!("{sum} is not in the target clause"))
    })?;
    let ax = t.ax_line(frag, j);
    let r = frag.resolve(b, &sum, ax);
    let target = t.approx.clause.clone();
    if !frag.clause(r).is_subset(&target) {
        return Err(ApproxError::Precondition("binary image left extra polynomials".into()));
    }
    Ok(frag.weaken_to(r, &target))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClauseSubsets {
    pub clause: Vec<String>,
    pub subsets: Vec<Vec<usize>>,
}

/// Everything needed to replay a width reduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApproxSpec {
    pub w: usize,
    pub seed: u64,
    pub per_clause: Vec<ClauseSubsets>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WidthReport {
    /// Max width inside images of derived lines (binary, weakening, contraction).
    pub image_width: usize,
    /// Max width while processing initial clauses and axioms.
    pub initial_width: usize,
    /// Max width over the whole output, initial clauses included.
    pub total_width: usize,
}

#[derive(Debug, Clone)]
pub struct ReducedProof {
    pub proof: Proof,
    /// Indices `proof.initials[source_initials..]`.
    pub ax_clauses: Vec<Clause>,
    pub source_initials: usize,
    pub spec: ApproxSpec,
    pub width_report: WidthReport,
    pub source_lines: usize,
    pub source_width: usize,
    /// `lines / (w · w₀ · k)`.
    pub line_constant: f64,
}

/// Lazily built width reduction: approximations and per-line fragments are computed on
/// first use, so a walk that touches few lines pays only for those.
pub struct Reducer<'a> {
    src: &'a Proof,
    w: usize,
    seed: u64,
    line_clause: Vec<usize>,
    distinct: Vec<Clause>,
    ax_base: Vec<usize>,
    ax_total: usize,
    approx: Vec<OnceCell<Approximation>>,
    frags: Vec<OnceCell<Fragment>>,
}

impl<'a> Reducer<'a> {
    /// `src` must be a checked refutation (see [`width_reduce`]).
    pub fn new(src: &'a Proof, w: usize, seed: u64) -> Self {
        let mut ids: HashMap<&Clause, usize> = HashMap::new();
        let mut distinct = Vec::new();
        let mut line_clause = Vec::with_capacity(src.lines.len());
        for l in &src.lines {
            let id = *ids.entry(&l.conclusion).or_insert_with(|| {
                distinct.push(l.conclusion.clone());
                distinct.len() - 1
            });
            line_clause.push(id);
        }
        let mut ax_base = Vec::with_capacity(distinct.len());
        let mut acc = src.initials.len();
        for c in &distinct {
            ax_base.push(acc);
            acc += c.lw();
        }
        Reducer {
            src,
            w,
            seed,
            line_clause,
            ax_base,
            ax_total: acc - src.initials.len(),
            approx: (0..distinct.len()).map(|_| OnceCell::new()).collect(),
            frags: (0..src.lines.len()).map(|_| OnceCell::new()).collect(),
            distinct,
        }
    }

    pub fn source(&self) -> &Proof {
        self.src
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn clause_approx(&self, cid: usize) -> &Approximation {
        self.approx[cid].get_or_init(|| {
            let mut rng = seed::rng(self.seed, seed::tag::APPROX, &[cid as u64]);
            rs_approx(&self.distinct[cid], self.w, &mut rng)
        })
    }

    pub fn line_approx(&self, j: usize) -> &Approximation {
        self.clause_approx(self.line_clause[j])
    }

    pub fn distinct_count(&self) -> usize {
        self.distinct.len()
    }

    pub fn distinct_clause(&self, cid: usize) -> &Clause {
        &self.distinct[cid]
    }

    pub fn ax_count(&self) -> usize {
        self.ax_total
    }

    /// Initial-clause index of the extra axiom `C^r ∪ {f+1}` for position `pos` of the
    /// clause of source line `j`.
    pub fn ax_index(&self, j: usize, pos: usize) -> usize {
        self.ax_base[self.line_clause[j]] + pos
    }

    /// The clause at any initial index of the reduced proof.
    pub fn initial_clause(&self, k: usize) -> Clause {
        if k < self.src.initials.len() {
            return self.src.initials[k].clone();
        }
        let cid = self.ax_base.partition_point(|&b| b <= k) - 1;
        let c = &self.distinct[cid];
        let a = self.clause_approx(cid);
        a.clause.with(&c.polys()[k - self.ax_base[cid]].negate())
    }

    /// Is the initial index an extra axiom (rather than a source initial clause)?
    pub fn is_ax(&self, k: usize) -> bool {
        k >= self.src.initials.len()
    }

    fn target(&self, j: usize) -> Target<'_> {
        let cid = self.line_clause[j];
        Target {
            clause: &self.distinct[cid],
            approx: self.clause_approx(cid),
            ax_base: self.ax_base[cid],
        }
    }

    /// Image of source line `j`; imports are keyed by source line index and stand for the
    /// last line of that line's fragment.
    pub fn fragment(&self, j: usize) -> &Fragment {
        self.frags[j].get_or_init(|| {
            self.build_fragment(j)
                .unwrap_or_else(|e| panic!("width reduction failed at line {j}: {e}"))
        })
    }

    fn build_fragment(&self, j: usize) -> Result<Fragment, ApproxError> {
        let line = &self.src.lines[j];
        let d = &line.conclusion;
        let t = self.target(j);
        let mut f = Fragment::new(self.src.vars);
        let singletons = |c: &Clause| -> Vec<(LinPoly, Vec<usize>)> {
            c.polys()
                .iter()
                .map(|p| (p.clone(), d.position(p).into_iter().collect()))
                .collect()
        };
        match &line.rule {
            Rule::Initial(k) => {
                let l = f.initial(*k, d.clone());
                derive_superset_image(&mut f, l, &singletons(d), None, &t)?;
            }
            Rule::Axiom(h) => {
                let l = f.axiom(h);
                let elems = singletons(&f.clause(l).clone());
                derive_superset_image(&mut f, l, &elems, None, &t)?;
            }
            Rule::Weaken { premise, .. } | Rule::Contract { premise } => {
                let p = &self.src.lines[*premise].conclusion;
                let pa = self.line_approx(*premise);
                let l = f.import(*premise, pa.clause.clone());
                let mut elems = Vec::new();
                for (poly, mapped, rep) in remap_reps(p, pa, d) {
                    let mut subset = Vec::new();
                    for (m, &orig) in mapped.iter().zip(&rep) {
                        match m {
                            Some(x) => subset.push(*x),
                            None if p.polys()[orig].is_zero() => {}
                            None => {
                                return Err(ApproxError::Precondition(
                                    "premise polynomial missing from conclusion".into(),
                                ))
                            }
                        }
                    }
                    elems.push((poly, subset));
                }
                derive_superset_image(&mut f, l, &elems, None, &t)?;
            }
            Rule::Binary { left, right, g, h } => {
                let (p1, p2) = (
                    &self.src.lines[*left].conclusion,
                    &self.src.lines[*right].conclusion,
                );
                let (a1, a2) = (self.line_approx(*left), self.line_approx(*right));
                let l1 = f.import(*left, a1.clause.clone());
                let l2 = f.import(*right, a2.clause.clone());
                derive_binary_image(&mut f, l1, p1, a1, l2, p2, a2, g, h, &t)?;
            }
        }
        Ok(f)
    }

    pub fn ax_clauses(&self) -> Vec<Clause> {
        let mut out = Vec::with_capacity(self.ax_total);
        for cid in 0..self.distinct.len() {
            out.extend(ax_clauses(&self.distinct[cid], self.clause_approx(cid)));
        }
        out
    }

    pub fn spec(&self) -> ApproxSpec {
        ApproxSpec {
            w: self.w,
            seed: self.seed,
            per_clause: (0..self.distinct.len())
                .map(|cid| ClauseSubsets {
                    clause: self.distinct[cid].to_strings(),
                    subsets: self.clause_approx(cid).subsets.clone(),
                })
                .collect(),
        }
    }

    /// Concatenates all fragments into one proof over `initials ∪ ax`.
    pub fn assemble(&self) -> ReducedProof {
        let mut lines = Vec::new();
        let mut last = vec![0usize; self.src.lines.len()];
        let mut report = WidthReport {
            image_width: 0,
            initial_width: 0,
            total_width: 0,
        };
        for j in 0..self.src.lines.len() {
            let frag = self.fragment(j);
            last[j] = frag.append_to(&mut lines, |key| last[key]);
            let wdt = frag.width();
            match self.src.lines[j].rule {
                Rule::Initial(_) | Rule::Axiom(_) => {
                    report.initial_width = report.initial_width.max(wdt)
                }
                _ => report.image_width = report.image_width.max(wdt),
            }
        }
        let ax = self.ax_clauses();
        let mut initials = self.src.initials.clone();
        initials.extend(ax.iter().cloned());
        let proof = crate::proof::trim(&Proof {
            vars: self.src.vars,
            initials,
            lines,
        });
        report.total_width = crate::proof::proof_width(&proof);
        let k = self.src.lines.len();
        let w0 = crate::proof::proof_width(self.src).max(1);
        let line_constant = proof.lines.len() as f64 / (self.w * w0 * k.max(1)) as f64;
        ReducedProof {
            proof,
            ax_clauses: ax,
            source_initials: self.src.initials.len(),
            spec: self.spec(),
            width_report: report,
            source_lines: k,
            source_width: w0,
            line_constant,
        }
    }
}

/// Width reduction of a checked refutation with `w` random subsets per clause.
pub fn width_reduce(proof: &Proof, w: usize, seed: u64) -> Result<ReducedProof, ApproxError> {
    if w == 0 {
        return Err(ApproxError::ZeroW);
    }
    check_refutation(proof)?;
    Ok(Reducer::new(proof, w, seed).assemble())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::f2::BitVec;
    use crate::instances::{gen_php, refute_linear};
    use crate::proof::{check_proof, proof_width, semantic_soundness_check};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn poly(s: &str, n: usize) -> LinPoly {
        LinPoly::parse(s, n).unwrap()
    }

    fn clause(items: &[&str], n: usize) -> Clause {
        Clause::parse(items, n).unwrap()
    }

    #[test]
    fn miss_probability_by_subset_enumeration() {
        // C = {x1, x2}, a = (1,0): ΣL(a) = 1 exactly for the subsets containing x1
        let n = 2;
        let c = clause(&["x1", "x2"], n);
        let a: BitVec = "10".parse().unwrap();
        let hits = (0..4u32)
            .filter(|mask| {
                let subset: Vec<usize> = (0..2).filter(|i| (mask >> i) & 1 == 1).collect();
                approximation_from_subsets(&c, vec![subset]).clause.eval_unchecked(&a)
            })
            .count();
        assert_eq!(hits, 2);
    }

    #[test]
    fn one_sided_for_every_seed() {
        let n = 4;
        let c = clause(&["x1+x2", "x3", "x2+x4+1"], n);
        for s in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let ap = rs_approx(&c, 3, &mut rng);
            assert!(ap.clause.lw() <= 3);
            for a in 0..16 {
                let a = BitVec::from_u64(n, a);
                if ap.clause.eval_unchecked(&a) {
                    assert!(c.eval_unchecked(&a));
                }
            }
        }
    }

    #[test]
    fn empty_clause_approximates_to_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ap = rs_approx(&Clause::empty(), 5, &mut rng);
        assert!(ap.clause.is_empty());
    }

    #[test]
    fn split_examples() {
        let n = 3;
        let p = derive_split(&poly("x1", n), &poly("x2", n), &Clause::empty());
        check_proof(&p).unwrap();
        assert_eq!(p.lines.last().unwrap().conclusion, clause(&["x1", "x2"], n));
        assert_eq!(proof_width(&p), 2);
        let p = derive_split(&poly("x1", n), &LinPoly::zero(n), &clause(&["x3"], n));
        check_proof(&p).unwrap();
        assert!(proof_width(&p) <= 3);
    }

    /// Builds a target with its ax clauses as initial clauses `0..|C|`.
    fn target_fixture(c: &Clause, w: usize, seed: u64) -> (Approximation, Vec<Clause>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rs_approx(c, w, &mut rng);
        let ax = ax_clauses(c, &a);
        (a, ax)
    }

    #[test]
    fn from_sum_single_summand() {
        let n = 3;
        let c = clause(&["x1", "x2+x3"], n);
        let a = approximation_from_subsets(&c, vec![vec![1]]);
        let ax = ax_clauses(&c, &a);
        let t = Target {
            clause: &c,
            approx: &a,
            ax_base: 0,
        };
        let mut initials = ax.clone();
        initials.push(clause(&["x1"], n));
        let mut f = Fragment::new(n);
        let l = f.initial(2, initials[2].clone());
        let before = f.len();
        let end = derive_from_sum(&mut f, l, &poly("x1", n), &[0], &t).unwrap();
        assert_eq!(f.clause(end), &a.clause);
        let p = f.into_proof(initials);
        check_proof(&p).unwrap();
        semantic_soundness_check(&p, 16).unwrap();
        assert!(p.lines.iter().filter(|l| matches!(l.rule, Rule::Binary { .. })).count() == 1);
        assert!(p.lines.len() > before);
    }

    #[test]
    fn from_sum_width_bound() {
        let n = 6;
        let c = clause(&["x1", "x2+x3", "x4+x5+1", "x6"], n);
        for seed in 0..50 {
            let (a, ax) = target_fixture(&c, 2, seed);
            let t = Target {
                clause: &c,
                approx: &a,
                ax_base: 0,
            };
            let g = c.polys()[0].add_unchecked(&c.polys()[1]);
            let mut initials = ax.clone();
            initials.push(Clause::new([g.clone()]));
            let mut f = Fragment::new(n);
            let l = f.initial(initials.len() - 1, initials.last().unwrap().clone());
            let end = derive_from_sum(&mut f, l, &g, &[0, 1], &t).unwrap();
            let end = f.weaken_to(end, &a.clause);
            assert_eq!(f.clause(end), &a.clause);
            assert!(f.width() <= 2 + 3);
            let p = f.into_proof(initials);
            check_proof(&p).unwrap();
            semantic_soundness_check(&p, 12).unwrap();
        }
    }

    #[test]
    fn superset_image_bounds() {
        let n = 6;
        let c = clause(&["x1", "x2+x3", "x4+x5+1", "x6+1"], n);
        for w in 1..=3 {
            for seed in 0..40 {
                let (a, ax) = target_fixture(&c, w, seed);
                let t = Target {
                    clause: &c,
                    approx: &a,
                    ax_base: 0,
                };
                // D = the initial clause itself
                let mut initials = ax.clone();
                initials.push(c.clone());
                let mut f = Fragment::new(n);
                let l = f.initial(initials.len() - 1, c.clone());
                let elems: Vec<_> = c.polys().iter().enumerate().map(|(i, p)| (p.clone(), vec![i])).collect();
                let end = derive_superset_image(&mut f, l, &elems, None, &t).unwrap();
                assert_eq!(f.clause(end), &a.clause);
                assert!(f.width() <= c.lw() + w + 2);
                let p = f.into_proof(initials);
                check_proof(&p).unwrap();
                semantic_soundness_check(&p, 12).unwrap();
            }
        }
    }

    #[test]
    fn axiom_image_bound() {
        let n = 3;
        let h = poly("x1+x3", n);
        let c = Clause::new([h.clone(), h.negate()]);
        for w in 1..=4 {
            for seed in 0..20 {
                let (a, ax) = target_fixture(&c, w, seed);
                let t = Target {
                    clause: &c,
                    approx: &a,
                    ax_base: 0,
                };
                let mut f = Fragment::new(n);
                let l = f.axiom(&h);
                let elems: Vec<_> = c.polys().iter().enumerate().map(|(i, p)| (p.clone(), vec![i])).collect();
                let end = derive_superset_image(&mut f, l, &elems, None, &t).unwrap();
                assert_eq!(f.clause(end), &a.clause);
                assert!(f.width() <= w + 4);
                check_proof(&f.into_proof(ax)).unwrap();
            }
        }
    }

    #[test]
    fn binary_image_bound() {
        let n = 5;
        let z = clause(&["x1", "x2+x3"], n);
        let g = poly("x4", n);
        let h = poly("x5+x1", n);
        let p1 = z.with(&g);
        let p2 = z.with(&h);
        let c = z.with(&g.add_unchecked(&h).negate());
        for w in 1..=3 {
            for seed in 0..40 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a1 = rs_approx(&p1, w, &mut rng);
                let a2 = rs_approx(&p2, w, &mut rng);
                let a = rs_approx(&c, w, &mut rng);
                let ax = ax_clauses(&c, &a);
                let t = Target {
                    clause: &c,
                    approx: &a,
                    ax_base: 2,
                };
                let mut initials = vec![a1.clause.clone(), a2.clause.clone()];
                initials.extend(ax);
                let mut f = Fragment::new(n);
                let l1 = f.initial(0, a1.clause.clone());
                let l2 = f.initial(1, a2.clause.clone());
                let end =
                    derive_binary_image(&mut f, l1, &p1, &a1, l2, &p2, &a2, &g, &h, &t).unwrap();
                assert_eq!(f.clause(end), &a.clause);
                assert!(f.width() <= 2 * w + 3, "width {} at w={w}", f.width());
                let p = f.into_proof(initials);
                check_proof(&p).unwrap();
                semantic_soundness_check(&p, 16).unwrap();
            }
        }
    }

    #[test]
    fn php1_width_reduction() {
        let (vars, cs) = gen_php(1).unwrap();
        let p = refute_linear(&cs, vars).unwrap();
        let r = width_reduce(&p, 2, 11).unwrap();
        check_refutation(&r.proof).unwrap();
        let distinct: std::collections::HashSet<&Clause> =
            p.lines.iter().map(|l| &l.conclusion).collect();
        assert_eq!(r.ax_clauses.len(), distinct.iter().map(|c| c.lw()).sum::<usize>());
        assert!(r.width_report.image_width <= 2 * 2 + 3);
        semantic_soundness_check(&r.proof, 16).unwrap();
    }

    #[test]
    fn php2_width_reduction_many_seeds() {
        let (vars, cs) = gen_php(2).unwrap();
        let p = refute_linear(&cs, vars).unwrap();
        let w0 = proof_width(&p);
        for w in 1..=3 {
            for seed in 0..10 {
                let r = width_reduce(&p, w, seed).unwrap();
                check_refutation(&r.proof).unwrap();
                assert!(r.width_report.image_width <= 2 * w + 3);
                assert!(r.width_report.initial_width <= w0 + w + 2);
            }
        }
    }

    #[test]
    fn replayable_from_seed() {
        let (vars, cs) = gen_php(2).unwrap();
        let p = refute_linear(&cs, vars).unwrap();
        let a = width_reduce(&p, 3, 5).unwrap();
        let b = width_reduce(&p, 3, 5).unwrap();
        assert_eq!(a.proof, b.proof);
        assert_eq!(a.spec, b.spec);
    }

    #[test]
    fn ax_group_violation_rate_matches_miss_rate() {
        // some ax clause of C is false at a iff C(a)=1 and C^r(a)=0
        let n = 4;
        let c = clause(&["x1", "x2+x3", "x4+1"], n);
        let a = BitVec::from_u64(n, 0b1001);
        assert!(c.eval_unchecked(&a));
        let w = 2;
        let trials = 40_000u32;
        let mut violated = 0;
        for s in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(s as u64);
            let ap = rs_approx(&c, w, &mut rng);
            let ax = ax_clauses(&c, &ap);
            if ax.iter().any(|k| !k.eval_unchecked(&a)) {
                violated += 1;
            }
        }
        let rate = violated as f64 / trials as f64;
        let p = 0.25f64;
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() <= 4.0 * sigma, "rate {rate}");
    }
}
