//! Clauses of affine F₂ polynomials and the four-rule proof system over them.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::f2::{BitVec, F2Error, LinPoly};

/// A finite set of polynomials, read as their disjunction (`f₁ = 1 ∨ … ∨ f_k = 1`).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Clause {
    polys: Vec<LinPoly>,
}

impl Clause {
    pub fn empty() -> Self {
        Clause { polys: Vec::new() }
    }

    pub fn new(polys: impl IntoIterator<Item = LinPoly>) -> Self {
        let mut polys: Vec<LinPoly> = polys.into_iter().collect();
        polys.sort();
        polys.dedup();
        Clause { polys }
    }

    pub fn polys(&self) -> &[LinPoly] {
        &self.polys
    }

    /// Linear width: number of polynomials.
    pub fn lw(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn contains(&self, p: &LinPoly) -> bool {
        self.polys.binary_search(p).is_ok()
    }

    pub fn position(&self, p: &LinPoly) -> Option<usize> {
        self.polys.binary_search(p).ok()
    }

    pub fn with(&self, p: &LinPoly) -> Clause {
        let mut c = self.clone();
        if let Err(pos) = c.polys.binary_search(p) {
            c.polys.insert(pos, p.clone());
        }
        c
    }

    pub fn without(&self, p: &LinPoly) -> Clause {
        let mut c = self.clone();
        if let Ok(pos) = c.polys.binary_search(p) {
            c.polys.remove(pos);
        }
        c
    }

    pub fn union(&self, other: &Clause) -> Clause {
        Clause::new(self.polys.iter().chain(other.polys.iter()).cloned())
    }

    pub fn is_subset(&self, other: &Clause) -> bool {
        self.polys.iter().all(|p| other.contains(p))
    }

    pub fn contains_zero(&self) -> bool {
        self.polys.first().is_some_and(|p| p.is_zero())
    }

    pub fn eval(&self, a: &BitVec) -> Result<bool, F2Error> {
        for p in &self.polys {
            if p.eval(a)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    #[inline]
    pub fn eval_unchecked(&self, a: &BitVec) -> bool {
        self.polys.iter().any(|p| p.eval_unchecked(a))
    }

    /// Polynomials as text, in canonical order.
    pub fn to_strings(&self) -> Vec<String> {
        self.polys.iter().map(|p| p.to_string()).collect()
    }

    pub fn parse<S: AsRef<str>>(items: &[S], vars: usize) -> Result<Clause, F2Error> {
        let polys = items
            .iter()
            .map(|s| LinPoly::parse(s.as_ref(), vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Clause::new(polys))
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.to_strings().join(", "))
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Clause{self}")
    }
}

/// `true` iff some polynomial of the clause is 1 at `a`.
pub fn clause_eval(c: &Clause, a: &BitVec) -> Result<bool, F2Error> {
    c.eval(a)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    Initial(usize),
    Axiom(LinPoly),
    Weaken { premise: usize, added: LinPoly },
    Contract { premise: usize },
    Binary { left: usize, right: usize, g: LinPoly, h: LinPoly },
}

impl Rule {
    pub fn premises(&self) -> Vec<usize> {
        match self {
            Rule::Initial(_) | Rule::Axiom(_) => vec![],
            Rule::Weaken { premise, .. } | Rule::Contract { premise } => vec![*premise],
            Rule::Binary { left, right, .. } => vec![*left, *right],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Initial(_) => "initial",
            Rule::Axiom(_) => "axiom",
            Rule::Weaken { .. } => "weaken",
            Rule::Contract { .. } => "contract",
            Rule::Binary { .. } => "binary",
        }
    }

    fn remap(&self, f: impl Fn(usize) -> usize) -> Rule {
        match self {
            Rule::Initial(k) => Rule::Initial(*k),
            Rule::Axiom(h) => Rule::Axiom(h.clone()),
            Rule::Weaken { premise, added } => Rule::Weaken {
                premise: f(*premise),
                added: added.clone(),
            },
            Rule::Contract { premise } => Rule::Contract {
                premise: f(*premise),
            },
            Rule::Binary { left, right, g, h } => Rule::Binary {
                left: f(*left),
                right: f(*right),
                g: g.clone(),
                h: h.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ProofLine {
    pub rule: Rule,
    pub conclusion: Clause,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub vars: usize,
    pub initials: Vec<Clause>,
    pub lines: Vec<ProofLine>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct Violation {
    pub line: usize,
    pub reason: String,
}

fn violation(line: usize, reason: impl Into<String>) -> Violation {
    Violation {
        line,
        reason: reason.into(),
    }
}

/// The conclusion a rule application must have, or why the rule cannot apply.
fn expected_conclusion(
    proof: &Proof,
    idx: usize,
    rule: &Rule,
) -> Result<Clause, String> {
    let vars = proof.vars;
    let dim = |p: &LinPoly| -> Result<(), String> {
        if p.vars() != vars {
            Err(format!(
                "polynomial {p} has {} variables, proof has {vars}",
                p.vars()
            ))
        } else {
            Ok(())
        }
    };
    let premise = |i: usize| -> Result<&Clause, String> {
        if i >= idx {
            Err(format!("premise {i} does not precede line {idx}"))
        } else {
            Ok(&proof.lines[i].conclusion)
        }
    };
    match rule {
        Rule::Initial(k) => proof
            .initials
            .get(*k)
            .cloned()
            .ok_or_else(|| format!("initial clause {k} does not exist")),
        Rule::Axiom(h) => {
            dim(h)?;
            Ok(Clause::new([h.clone(), h.negate()]))
        }
        Rule::Weaken { premise: i, added } => {
            dim(added)?;
            Ok(premise(*i)?.with(added))
        }
        Rule::Contract { premise: i } => {
            let p = premise(*i)?;
            if !p.contains_zero() {
                return Err("contraction premise lacks the zero polynomial".into());
            }
            Ok(p.without(&LinPoly::zero(vars)))
        }
        Rule::Binary { left, right, g, h } => {
            dim(g)?;
            dim(h)?;
            let pl = premise(*left)?;
            let pr = premise(*right)?;
            if !pl.contains(g) {
                return Err(format!("g = {g} not in left premise"));
            }
            if !pr.contains(h) {
                return Err(format!("h = {h} not in right premise"));
            }
            let cl = pl.without(g);
            if cl != pr.without(h) {
                return Err("context mismatch".into());
            }
            Ok(cl.with(&g.add_unchecked(h).negate()))
        }
    }
}

/// Strict syntactic check of every line. Never panics on malformed input.
pub fn check_proof(p: &Proof) -> Result<(), Violation> {
    for (k, c) in p.initials.iter().enumerate() {
        if let Some(bad) = c.polys().iter().find(|f| f.vars() != p.vars) {
            return Err(violation(
                k,
                format!("initial clause {k} polynomial {bad} has wrong dimension"),
            ));
        }
    }
    for (idx, line) in p.lines.iter().enumerate() {
        let expected = expected_conclusion(p, idx, &line.rule).map_err(|r| violation(idx, r))?;
        if expected != line.conclusion {
            return Err(violation(
                idx,
                format!(
                    "{} conclusion {} differs from expected {}",
                    line.rule.name(),
                    line.conclusion,
                    expected
                ),
            ));
        }
    }
    Ok(())
}

/// A checked proof whose last line is the empty clause.
pub fn check_refutation(p: &Proof) -> Result<(), Violation> {
    check_proof(p)?;
    match p.lines.last() {
        Some(l) if l.conclusion.is_empty() => Ok(()),
        _ => Err(violation(
            p.lines.len().saturating_sub(1),
            "last line is not the empty clause",
        )),
    }
}

/// Maximum linear width over all conclusions and all initial clauses.
pub fn proof_width(p: &Proof) -> usize {
    p.lines
        .iter()
        .map(|l| l.conclusion.lw())
        .chain(p.initials.iter().map(|c| c.lw()))
        .max()
        .unwrap_or(0)
}

/// Keeps only ancestors of the last line, preserving order.
pub fn trim(p: &Proof) -> Proof {
    let Some(last) = p.lines.len().checked_sub(1) else {
        return p.clone();
    };
    let mut keep = vec![false; p.lines.len()];
    keep[last] = true;
    for i in (0..=last).rev() {
        if keep[i] {
            for j in p.lines[i].rule.premises() {
                if j < i {
                    keep[j] = true;
                }
            }
        }
    }
    let mut map = vec![usize::MAX; p.lines.len()];
    let mut lines = Vec::new();
    for (i, line) in p.lines.iter().enumerate() {
        if keep[i] {
            map[i] = lines.len();
            lines.push(ProofLine {
                rule: line.rule.remap(|j| map[j]),
                conclusion: line.conclusion.clone(),
            });
        }
    }
    Proof {
        vars: p.vars,
        initials: p.initials.clone(),
        lines,
    }
}

/// Truth table of a function on `{0,1}^vars`: bit `a` is the value at the assignment whose
/// variable `i` equals bit `i` of `a`.
#[derive(Clone, PartialEq, Eq, Debug)]
struct Table(Vec<u64>);

struct Tables {
    vars: usize,
    full: Table,
    var_tables: Vec<Table>,
    cache: HashMap<LinPoly, Table>,
}

impl Tables {
    fn new(vars: usize) -> Self {
        let points = 1usize << vars;
        let words = points.div_ceil(64);
        let mut full = vec![u64::MAX; words];
        if points < 64 {
            full[0] = (1u64 << points) - 1;
        }
        let var_tables = (0..vars)
            .map(|i| {
                let mut t = vec![0u64; words];
                for a in 0..points {
                    if (a >> i) & 1 == 1 {
                        t[a >> 6] |= 1 << (a & 63);
                    }
                }
                Table(t)
            })
            .collect();
        Tables {
            vars,
            full: Table(full),
            var_tables,
            cache: HashMap::new(),
        }
    }

    fn poly(&mut self, p: &LinPoly) -> Table {
        if let Some(t) = self.cache.get(p) {
            return t.clone();
        }
        let mut t = if p.constant() {
            self.full.0.clone()
        } else {
            vec![0; self.full.0.len()]
        };
        for i in p.coeffs().iter_ones() {
            for (a, b) in t.iter_mut().zip(self.var_tables[i].0.iter()) {
                *a ^= b;
            }
        }
        let t = Table(t);
        self.cache.insert(p.clone(), t.clone());
        t
    }

    fn clause(&mut self, c: &Clause) -> Table {
        let mut t = vec![0u64; self.full.0.len()];
        for p in c.polys() {
            let pt = self.poly(p);
            for (a, b) in t.iter_mut().zip(pt.0.iter()) {
                *a |= b;
            }
        }
        Table(t)
    }

    /// First point of `required` outside `have`.
    fn first_gap(&self, required: &Table, have: &Table) -> Option<BitVec> {
        for (w, (r, h)) in required.0.iter().zip(have.0.iter()).enumerate() {
            let gap = r & !h;
            if gap != 0 {
                let a = w * 64 + gap.trailing_zeros() as usize;
                return Some(BitVec::from_u64(self.vars, a as u64));
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SemanticError {
    #[error("{vars} variables exceeds the enumeration limit of {limit}")]
    TooLarge { vars: usize, limit: usize },
    #[error("line {line} is not implied by its premises at {point}")]
    Counterexample { line: usize, point: BitVec },
}

pub const SEMANTIC_LIMIT: usize = 20;

/// Exhaustive oracle: each line's satisfying set must contain the intersection of its
/// premises' satisfying sets (initial lines: the initial clause; axioms: everything).
pub fn semantic_soundness_check(p: &Proof, universe_bits: usize) -> Result<(), SemanticError> {
    let limit = universe_bits.min(SEMANTIC_LIMIT);
    if p.vars > limit {
        return Err(SemanticError::TooLarge {
            vars: p.vars,
            limit,
        });
    }
    let mut tables = Tables::new(p.vars);
    let mut line_tables: Vec<Table> = Vec::with_capacity(p.lines.len());
    for (idx, line) in p.lines.iter().enumerate() {
        let required = match &line.rule {
            Rule::Initial(k) => match p.initials.get(*k) {
                Some(c) => tables.clause(c),
                None => Table(vec![0; tables.full.0.len()]),
            },
            Rule::Axiom(_) => tables.full.clone(),
            rule => {
                let mut t = tables.full.clone();
                for j in rule.premises() {
                    let pt = line_tables.get(j).cloned().unwrap_or_else(|| tables.full.clone());
                    for (a, b) in t.0.iter_mut().zip(pt.0.iter()) {
                        *a &= b;
                    }
                }
                t
            }
        };
        let have = tables.clause(&line.conclusion);
        if let Some(point) = tables.first_gap(&required, &have) {
            return Err(SemanticError::Counterexample { line: idx, point });
        }
        line_tables.push(have);
    }
    Ok(())
}

/// Multilinear polynomial over F₂, as a set of monomials (each a set of variable indices).
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct PcPoly {
    monomials: BTreeSet<Vec<usize>>,
}

impl PcPoly {
    pub fn zero() -> Self {
        PcPoly::default()
    }

    pub fn one() -> Self {
        let mut p = PcPoly::default();
        p.monomials.insert(Vec::new());
        p
    }

    pub fn monomials(&self) -> impl Iterator<Item = &[usize]> {
        self.monomials.iter().map(|m| m.as_slice())
    }

    fn toggle(&mut self, m: Vec<usize>) {
        if !self.monomials.remove(&m) {
            self.monomials.insert(m);
        }
    }

    pub fn from_linear(f: &LinPoly) -> Self {
        let mut p = PcPoly::zero();
        if f.constant() {
            p.toggle(Vec::new());
        }
        for i in f.coeffs().iter_ones() {
            p.toggle(vec![i]);
        }
        p
    }

    pub fn add(&self, other: &PcPoly) -> PcPoly {
        let mut r = self.clone();
        for m in &other.monomials {
            r.toggle(m.clone());
        }
        r
    }

    /// Product with `x² = x`.
    pub fn mul(&self, other: &PcPoly) -> PcPoly {
        let mut r = PcPoly::zero();
        for a in &self.monomials {
            for b in &other.monomials {
                let m: BTreeSet<usize> = a.iter().chain(b.iter()).copied().collect();
                r.toggle(m.into_iter().collect());
            }
        }
        r
    }

    pub fn degree(&self) -> usize {
        self.monomials.iter().map(|m| m.len()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn eval(&self, a: &BitVec) -> bool {
        self.monomials
            .iter()
            .filter(|m| m.iter().all(|&i| a.get(i)))
            .count()
            % 2
            == 1
    }
}

impl fmt::Display for PcPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.monomials.is_empty() {
            return f.write_str("0");
        }
        let terms: Vec<String> = self
            .monomials
            .iter()
            .map(|m| {
                if m.is_empty() {
                    "1".to_string()
                } else {
                    m.iter()
                        .map(|i| format!("x{}", i + 1))
                        .collect::<Vec<_>>()
                        .join("*")
                }
            })
            .collect();
        f.write_str(&terms.join("+"))
    }
}

/// `Π (1 + f)` over the clause: vanishes exactly on the clause's satisfying points.
pub fn to_pc(c: &Clause) -> PcPoly {
    c.polys().iter().fold(PcPoly::one(), |acc, f| {
        acc.mul(&PcPoly::from_linear(&f.negate()))
    })
}

/// Incrementally built derivation. Lines may be imports: placeholders standing for a line
/// proved elsewhere, identified by a caller-chosen key, whose conclusion is given.
#[derive(Clone, Debug)]
pub struct Fragment {
    pub vars: usize,
    pub lines: Vec<ProofLine>,
    imports: Vec<Option<usize>>,
}

impl Fragment {
    pub fn new(vars: usize) -> Self {
        Fragment {
            vars,
            lines: Vec::new(),
            imports: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn last(&self) -> usize {
        self.lines.len() - 1
    }

    pub fn clause(&self, i: usize) -> &Clause {
        &self.lines[i].conclusion
    }

    pub fn import_key(&self, i: usize) -> Option<usize> {
        self.imports[i]
    }

    pub fn width(&self) -> usize {
        self.lines
            .iter()
            .zip(&self.imports)
            .filter(|(_, imp)| imp.is_none())
            .map(|(l, _)| l.conclusion.lw())
            .max()
            .unwrap_or(0)
    }

    fn push(&mut self, rule: Rule, conclusion: Clause, import: Option<usize>) -> usize {
        self.lines.push(ProofLine { rule, conclusion });
        self.imports.push(import);
        self.lines.len() - 1
    }

    pub fn import(&mut self, key: usize, conclusion: Clause) -> usize {
        self.push(Rule::Initial(key), conclusion, Some(key))
    }

    pub fn initial(&mut self, k: usize, clause: Clause) -> usize {
        self.push(Rule::Initial(k), clause, None)
    }

    pub fn axiom(&mut self, h: &LinPoly) -> usize {
        let c = Clause::new([h.clone(), h.negate()]);
        self.push(Rule::Axiom(h.clone()), c, None)
    }

    pub fn weaken(&mut self, i: usize, f: &LinPoly) -> usize {
        let c = self.clause(i).with(f);
        self.push(
            Rule::Weaken {
                premise: i,
                added: f.clone(),
            },
            c,
            None,
        )
    }

    pub fn contract(&mut self, i: usize) -> usize {
        debug_assert!(self.clause(i).contains_zero());
        let c = self.clause(i).without(&LinPoly::zero(self.vars));
        self.push(Rule::Contract { premise: i }, c, None)
    }

    pub fn contract_if_zero(&mut self, i: usize) -> usize {
        if self.clause(i).contains_zero() {
            self.contract(i)
        } else {
            i
        }
    }

    pub fn binary(&mut self, left: usize, right: usize, g: &LinPoly, h: &LinPoly) -> usize {
        let c = self.clause(left).without(g).with(&g.add_unchecked(h).negate());
        debug_assert_eq!(self.clause(left).without(g), self.clause(right).without(h));
        self.push(
            Rule::Binary {
                left,
                right,
                g: g.clone(),
                h: h.clone(),
            },
            c,
            None,
        )
    }

    /// Weakens line `i` up to `target`, one polynomial at a time. Requires `clause(i) ⊆ target`.
    pub fn weaken_to(&mut self, i: usize, target: &Clause) -> usize {
        debug_assert!(self.clause(i).is_subset(target));
        let missing: Vec<LinPoly> = target
            .polys()
            .iter()
            .filter(|p| !self.clause(i).contains(p))
            .cloned()
            .collect();
        missing.iter().fold(i, |cur, f| self.weaken(cur, f))
    }

    /// Derives `(P_i \ {g}) ∪ (P_j \ {h}) ∪ {g+h+1}` for `g ∈ P_i`, `h ∈ P_j`, aligning the
    /// contexts with weakenings and skipping the rule when a premise already suffices.
    pub fn combine(&mut self, i: usize, g: &LinPoly, j: usize, h: &LinPoly) -> usize {
        let ctx = self.clause(i).without(g).union(&self.clause(j).without(h));
        let sum = g.add_unchecked(h).negate();
        let target = ctx.with(&sum);
        if self.clause(i).is_subset(&target) {
            return self.weaken_to(i, &target);
        }
        if self.clause(j).is_subset(&target) {
            return self.weaken_to(j, &target);
        }
        // here g, h ∉ ctx, so both weakened premises have context exactly ctx
        let left_target = ctx.with(g);
        let right_target = ctx.with(h);
        let l = self.weaken_to(i, &left_target);
        let r = self.weaken_to(j, &right_target);
        self.binary(l, r, g, h)
    }

    /// Resolution on `f`: from `P_i ∋ f` and `P_j ∋ f+1` derive `(P_i\{f}) ∪ (P_j\{f+1})`.
    pub fn resolve(&mut self, i: usize, f: &LinPoly, j: usize) -> usize {
        let l = self.combine(i, f, j, &f.negate());
        self.contract_if_zero(l)
    }

    /// From `P ∋ g+h` derive `(P \ {g+h}) ∪ {g, h}` using the axiom `{g, g+1}`.
    pub fn split(&mut self, i: usize, g: &LinPoly, h: &LinPoly) -> usize {
        let s = g.add_unchecked(h);
        let target = self.clause(i).without(&s).with(g).with(h);
        if self.clause(i).is_subset(&target) {
            return self.weaken_to(i, &target);
        }
        let ax = self.axiom(g);
        self.combine(i, &s, ax, &g.negate())
    }

    /// Checked proof of this fragment; fails if any import remains.
    pub fn into_proof(self, initials: Vec<Clause>) -> Proof {
        assert!(
            self.imports.iter().all(|k| k.is_none()),
            "fragment still has imports"
        );
        Proof {
            vars: self.vars,
            initials,
            lines: self.lines,
        }
    }

    /// Appends this fragment's lines to `out`, mapping imports through `resolve_import`.
    /// Returns the index of the fragment's last line in `out`.
    pub fn append_to(
        &self,
        out: &mut Vec<ProofLine>,
        resolve_import: impl Fn(usize) -> usize,
    ) -> usize {
        let mut map = Vec::with_capacity(self.lines.len());
        for (line, imp) in self.lines.iter().zip(&self.imports) {
            match imp {
                Some(key) => map.push(resolve_import(*key)),
                None => {
                    out.push(ProofLine {
                        rule: line.rule.remap(|j| map[j]),
                        conclusion: line.conclusion.clone(),
                    });
                    map.push(out.len() - 1);
                }
            }
        }
        *map.last().expect("empty fragment")
    }
}
