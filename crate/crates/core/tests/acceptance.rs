//! Acceptance run: one PASS/FAIL line per criterion, tolerances fixed below.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always printed.

use std::time::Instant;

use num_rational::Ratio;
use rand::Rng;

use rlin::approx::{rs_approx, width_reduce};
use rlin::clo::{
    best_sample, clo_to_protocol, clo_to_protocol_3v, dichotomy_check, locality, protocol_to_clo,
    random_clo, random_restricted_clo, random_tiny_protocol, verify_separation, Ambient,
};
use rlin::instances::{gen_clique_color, gen_php, refute_linear, SplitInstance, WitnessedPoint};
use rlin::proof::{check_proof, check_refutation, semantic_soundness_check, to_pc, Proof, Rule};
use rlin::protocols::{
    estimate_error, repair_p4b, simulate, ErrorMode, InterpolationProtocol, Outcome, PairCtx,
    ProtocolKind, RandomizedProtocol, RwOutcome, RwProtocol,
};
use rlin::seed::{self, tag};
use rlin::{BitVec, Clause, LinPoly};

const MASTER: u64 = 20161130;
/// One-sided confidence for empirical error bounds.
const CONFIDENCE: f64 = 0.99;
/// Binomial standard deviations allowed for the miss rate.
const SIGMAS: f64 = 4.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn cc432() -> (SplitInstance, Proof) {
    let inst = gen_clique_color(4, 3, 2).unwrap();
    let proof = refute_linear(&inst.clauses(), inst.vars()).unwrap();
    (inst, proof)
}

fn all_pairs(amb: &Ambient) -> Vec<(WitnessedPoint, WitnessedPoint)> {
    amb.us
        .iter()
        .flat_map(|u| amb.vs.iter().map(move |v| (u.clone(), v.clone())))
        .collect()
}

fn php_refutation(n: usize) -> Proof {
    let (vars, clauses) = gen_php(n).unwrap();
    refute_linear(&clauses, vars).unwrap()
}

fn random_poly(vars: usize, rng: &mut impl Rng) -> LinPoly {
    let coeffs = BitVec::from_bools(&(0..vars).map(|_| rng.random()).collect::<Vec<_>>());
    LinPoly::new(coeffs, rng.random())
}

fn mutate(p: &Proof, rng: &mut impl Rng) -> Proof {
    let mut m = p.clone();
    let j = rng.random_range(0..m.lines.len());
    let vars = m.vars;
    let line = &mut m.lines[j];
    match rng.random_range(0..6) {
        0 => line.conclusion = line.conclusion.with(&random_poly(vars, rng)),
        1 => {
            if let Some(f) = line.conclusion.polys().first().cloned() {
                line.conclusion = line.conclusion.without(&f);
            }
        }
        2 => {
            let polys: Vec<LinPoly> = line.conclusion.polys().to_vec();
            if !polys.is_empty() {
                let k = rng.random_range(0..polys.len());
                let flipped = line.conclusion.without(&polys[k]).with(&polys[k].negate());
                line.conclusion = flipped;
            }
        }
        3 => {
            let r = rng.random_range(0..j.max(1));
            line.rule = match &line.rule {
                Rule::Weaken { added, .. } => Rule::Weaken {
                    premise: r,
                    added: added.clone(),
                },
                Rule::Contract { .. } => Rule::Contract { premise: r },
                Rule::Binary { right, g, h, .. } => Rule::Binary {
                    left: r,
                    right: *right,
                    g: g.clone(),
                    h: h.clone(),
                },
                Rule::Initial(_) => Rule::Initial(rng.random_range(0..m.initials.len())),
                Rule::Axiom(_) => Rule::Axiom(random_poly(vars, rng)),
            };
        }
        4 => {
            if let Rule::Binary { left, right, g, h } = &line.rule {
                let g = if rng.random() { random_poly(vars, rng) } else { g.clone() };
                line.rule = Rule::Binary {
                    left: *left,
                    right: *right,
                    g,
                    h: h.negate(),
                };
            } else {
                line.rule = Rule::Axiom(random_poly(vars, rng));
            }
        }
        _ => {
            let k = rng.random_range(0..m.lines.len());
            m.lines.swap(j, k);
        }
    }
    m
}

fn c1_checker_soundness() -> Verdict {
    let proofs = [php_refutation(1), php_refutation(2), php_refutation(3)];
    let mut rng = seed::rng(MASTER, tag::MUTATE, &[]);
    let (mut rejected, mut sound, mut unsound) = (0, 0, 0);
    for i in 0..1000 {
        let m = mutate(&proofs[i % 3], &mut rng);
        if check_proof(&m).is_err() {
            rejected += 1;
        } else if semantic_soundness_check(&m, 20).is_ok() {
            sound += 1;
        } else {
            unsound += 1;
        }
    }
    verdict(
        unsound == 0,
        format!("1000 mutations: {rejected} rejected, {sound} accepted and sound, {unsound} accepted-unsound"),
    )
}

fn c2_one_sided() -> Verdict {
    let mut rng = seed::rng(MASTER, tag::APPROX, &[2]);
    let mut violations = 0u64;
    let mut points = 0u64;
    let sizes = [4usize, 6, 8, 10, 12, 14, 16, 16];
    for (ci, &vars) in sizes.iter().enumerate() {
        let lw = rng.random_range(1..=8);
        let c = Clause::new((0..lw).map(|_| random_poly(vars, &mut rng)));
        for s in 0..100u64 {
            let w = 1 + (s as usize % 6);
            let mut r = seed::rng(MASTER, tag::APPROX, &[2, ci as u64, s]);
            let y = rs_approx(&c, w, &mut r).clause;
            for a in 0..1u64 << vars {
                let a = BitVec::from_u64(vars, a);
                points += 1;
                if y.eval_unchecked(&a) && !c.eval_unchecked(&a) {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        violations == 0,
        format!("8 clauses on 4..16 variables x 100 seeds, {points} points: {violations} violations"),
    )
}

fn c3_miss_rate() -> Verdict {
    let n = 4;
    let c = Clause::parse(&["x1+x2", "x3", "x2+x4+1"], n).unwrap();
    let a = BitVec::from_bools(&[true, false, false, false]);
    assert!(c.eval_unchecked(&a));
    let trials = 100_000u64;
    let mut parts = Vec::new();
    let mut pass = true;
    for w in [1usize, 2, 5, 10] {
        let mut miss = 0u64;
        for s in 0..trials {
            let mut r = seed::rng(MASTER, tag::APPROX, &[3, w as u64, s]);
            miss += !rs_approx(&c, w, &mut r).clause.eval_unchecked(&a) as u64;
        }
        let p = (-(w as f64)).exp2();
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let dev = (miss as f64 - trials as f64 * p).abs() / sigma;
        pass &= dev <= SIGMAS;
        parts.push(format!("w={w}: {miss}/{trials} vs {p}, {dev:.2} sigma"));
    }
    verdict(pass, format!("{} (limit {SIGMAS} sigma)", parts.join("; ")))
}

fn c4_width_reduction() -> Verdict {
    let (_, cc) = cc432();
    let proofs = [php_refutation(1), php_refutation(2), php_refutation(3), cc];
    let ws = [1usize, 2, 3, 5];
    let mut pass = true;
    let mut max_c: f64 = 0.0;
    let mut worst = String::new();
    for i in 0..50u64 {
        let p = &proofs[i as usize % 4];
        let w = ws[(i as usize / 4) % 4];
        let r = width_reduce(p, w, seed::derive(MASTER, tag::APPROX, &[4, i])).unwrap();
        let ok = check_proof(&r.proof).is_ok() && check_refutation(&r.proof).is_ok();
        let width_ok = r.width_report.image_width <= 2 * w + 3;
        if !(ok && width_ok) {
            pass = false;
            worst = format!("pair {i}: valid={ok}, image width {} > {}", r.width_report.image_width, 2 * w + 3);
        }
        max_c = max_c.max(r.line_constant);
    }
    verdict(
        pass,
        format!("50 (proof, seed) pairs valid refutations with image width <= 2w+3; measured c = {max_c:.3} {worst}"),
    )
}

fn c5_exact() -> Verdict {
    let (inst, proof) = cc432();
    let amb = Ambient::from_instance(&inst).unwrap();
    let proto = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Exact, 0).unwrap();
    let e = proto.sample(0);
    let correct = all_pairs(&amb)
        .iter()
        .filter(|(u, v)| matches!(simulate(e.as_ref(), &PairCtx::new(&inst, u, v)).outcome, Outcome::CorrectLeaf(_)))
        .count();
    let pairs = amb.pairs();
    let k = proto.lines();
    verdict(
        correct == pairs && e.size() == k + inst.n,
        format!("{correct}/{pairs} pairs end at a correct leaf; size {} = k+n = {k}+{}", e.size(), inst.n),
    )
}

struct ErrorCheck {
    pass: bool,
    text: String,
}

fn error_check(
    proto: &dyn RandomizedProtocol,
    inst: &SplitInstance,
    pairs: &[(WitnessedPoint, WitnessedPoint)],
    seeds: u64,
    bound: f64,
    bits: Option<u32>,
    path: u64,
) -> ErrorCheck {
    let er = estimate_error(proto, inst, pairs, seeds, seed::derive(MASTER, tag::PROTOCOL, &[path]), ErrorMode::Walk, CONFIDENCE);
    let worst = er.worst_pair().unwrap();
    let max_lower = er.per_pair.iter().map(|p| p.lower).fold(0.0, f64::max);
    let mut pass = max_lower <= bound;
    let mut text = format!(
        "worst pair rate {:.4} (lower {:.4}) vs bound {bound:.4}",
        worst.rate, max_lower
    );
    if let Some(b) = bits {
        pass &= er.max_node_bits <= b;
        text += &format!(", node bits {} <= {b}", er.max_node_bits);
    }
    ErrorCheck { pass, text }
}

fn log2_ceil(n: usize) -> u32 {
    usize::BITS - (n - 1).leading_zeros()
}

fn c6_randomized() -> Verdict {
    let (inst, proof) = cc432();
    let amb = Ambient::from_instance(&inst).unwrap();
    let pairs = all_pairs(&amb);
    let k = proof.lines.len() as f64;
    let w = 10;
    let proto = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Randomized, w).unwrap();
    let bits = 4 * w as u32 + (w as u32 + 4) * log2_ceil(inst.n);
    let main = error_check(&proto, &inst, &pairs, 10_000, 3.0 * (-(w as f64)).exp2() * k, Some(bits), 6);
    let w2 = 14;
    let proto2 = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Randomized, w2).unwrap();
    let extra = error_check(&proto2, &inst, &pairs, 2_000, 3.0 * (-(w2 as f64)).exp2() * k, None, 60);
    verdict(
        main.pass && extra.pass,
        format!(
            "k={k}, w=10, 10^4 seeds x {} pairs: {}; at w=14 (non-vacuous bound), 2000 seeds: {}",
            pairs.len(),
            main.text,
            extra.text
        ),
    )
}

fn c7_axiom() -> Verdict {
    let (inst, proof) = cc432();
    let amb = Ambient::from_instance(&inst).unwrap();
    let pairs = all_pairs(&amb);
    let k = proof.lines.len() as f64;
    let proto = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Axiom, 10).unwrap();
    let main = error_check(&proto, &inst, &pairs, 10_000, (-10f64).exp2() * k, None, 7);
    let proto2 = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Axiom, 13).unwrap();
    let extra = error_check(&proto2, &inst, &pairs, 2_000, (-13f64).exp2() * k, None, 70);
    verdict(
        main.pass && extra.pass,
        format!("w=10, 10^4 seeds: {}; at w=13 (non-vacuous bound), 2000 seeds: {}", main.text, extra.text),
    )
}

fn c8_parity() -> Verdict {
    let n = 10;
    let trials = 100_000u64;
    let z = rlin::protocols::normal_quantile(CONFIDENCE);
    let mut rng = seed::rng(MASTER, tag::PARITY, &[]);
    let mut pairs: Vec<(BitVec, BitVec)> = Vec::new();
    for k in 0..12 {
        let u = BitVec::from_u64(n, rng.random_range(0..1 << n));
        let mask = match k {
            0 => 1,
            1 => (1 << n) - 1,
            _ => rng.random_range(1..1 << n),
        };
        let v = BitVec::from_u64(n, u.to_u64() ^ mask);
        pairs.push((u, v));
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.25, 1.0 / 16.0] {
        let rw = RwProtocol::new(n, eps).unwrap();
        let mut worst: f64 = 0.0;
        let mut bad_found = 0u64;
        for (pi, (u, v)) in pairs.iter().enumerate() {
            let mut r = seed::rng(MASTER, tag::PARITY, &[(eps * 64.0) as u64, pi as u64]);
            let mut errors = 0u64;
            for _ in 0..trials {
                match rw.run(u, v, &mut r).outcome {
                    RwOutcome::Error => errors += 1,
                    RwOutcome::Found(i) => bad_found += (u.get(i) == v.get(i)) as u64,
                }
            }
            let (lower, _) = rlin::protocols::wilson(errors, trials, z);
            pass &= lower <= eps;
            worst = worst.max(errors as f64 / trials as f64);
        }
        pass &= bad_found == 0;
        parts.push(format!("eps={eps}: worst rate {worst:.4}, {bad_found} wrong coordinates"));
    }
    verdict(pass, format!("n=10, 12 pairs x 10^5 seeds: {}", parts.join("; ")))
}

fn c9_repair() -> Verdict {
    let (inst, proof) = cc432();
    let amb = Ambient::from_instance(&inst).unwrap();
    let pairs = all_pairs(&amb);
    let seeds = 100_000u64.div_ceil(pairs.len() as u64);
    let raw = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Randomized, 3).unwrap();
    let before = estimate_error(&raw, &inst, &pairs, seeds, MASTER, ErrorMode::Walk, CONFIDENCE).strategy_failures;
    let mut sizes_ok = true;
    for s in 0..20 {
        let e = raw.sample(s);
        let (inner_size, _) = (e.size(), ());
        let rep = rlin::protocols::Repaired::new(e);
        sizes_ok &= rlin::protocols::Engine::size(&rep) <= 2 * inner_size;
    }
    let repaired = repair_p4b(raw);
    let after = estimate_error(&repaired, &inst, &pairs, seeds, MASTER, ErrorMode::Walk, CONFIDENCE);
    let sims = seeds * pairs.len() as u64;
    verdict(
        after.strategy_failures == 0 && sizes_ok,
        format!(
            "w=3, {sims} simulations: {} strategy failures before repair, {} after; size <= 2x on 20 samples: {sizes_ok}",
            before, after.strategy_failures
        ),
    )
}

fn c10_protocol_to_clo() -> Verdict {
    let (inst, proof) = cc432();
    let amb = Ambient::from_instance(&inst).unwrap();
    let exact = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Exact, 0).unwrap();
    let (_, ext) = best_sample(&exact, &inst, &amb, 1, MASTER).unwrap();
    let (clo, rep) = protocol_to_clo(&ext, &amb, None).unwrap();
    let exact_ok = clo.rects.is_empty() && verify_separation(&clo, &amb).is_ok();
    let mut pass = exact_ok;
    let mut max_c: f64 = 0.0;
    let mut built = 0;
    for trial in 0..50u64 {
        let mut best: Option<(u64, rlin::clo::ExtProtocol)> = None;
        for s in 0..64u64 {
            let mut rng = seed::rng(MASTER, tag::CLO, &[10, trial, s]);
            let p = random_tiny_protocol(&amb, 7, &mut rng);
            if protocol_to_clo(&p, &amb, Some(3)).is_err() {
                continue;
            }
            let err = p.definitional_errors(&amb).count_ones() as u64;
            if best.as_ref().is_none_or(|(b, _)| err < *b) {
                best = Some((err, p));
            }
        }
        let Some((err, p)) = best else {
            pass = false;
            continue;
        };
        let (clo, r) = protocol_to_clo(&p, &amb, Some(3)).unwrap();
        built += 1;
        pass &= verify_separation(&clo, &amb).is_ok();
        pass &= locality(&clo, &amb).unwrap() <= Ratio::new(err, amb.pairs() as u64);
        pass &= p.size() <= 8 && r.t <= 3;
        max_c = max_c.max(r.c);
    }
    verdict(
        pass,
        format!(
            "exact: e={}, size {}, separates={exact_ok}; tiny randomized (s<=8, t<=3): {built}/50 CLOs separate with locality <= sample error, size <= s*2^(c*t) with measured c = {max_c:.3}",
            clo.rects.len(),
            rep.circuit_size
        ),
    )
}

fn c11_clo_to_protocol() -> Verdict {
    let mut pass = true;
    let mut count = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_3v = Ratio::new(0u64, 1);
    for (n0, omega, xi) in [(4, 3, 2), (5, 3, 2)] {
        let inst = gen_clique_color(n0, omega, xi).unwrap();
        let amb = Ambient::from_instance(&inst).unwrap();
        for i in 0..30u64 {
            let mut rng = seed::rng(MASTER, tag::CLO, &[11, n0 as u64, i]);
            let clo = random_clo(&inst, &amb, &mut rng);
            let two = clo_to_protocol(&clo, &amb, &inst).unwrap();
            let three = clo_to_protocol_3v(&clo, &amb, &inst).unwrap();
            let rate = two.error.0 as f64 / two.error.1 as f64;
            pass &= rate <= two.bound;
            if two.bound > 0.0 {
                worst_ratio = worst_ratio.max(rate / two.bound);
            }
            let e3 = Ratio::new(three.error.0, three.error.1);
            let mu = Ratio::new(three.locality.0, three.locality.1);
            pass &= e3 <= mu;
            if mu > Ratio::new(0, 1) {
                worst_3v = worst_3v.max(e3 / mu);
            }
            count += 1;
        }
    }
    verdict(
        pass,
        format!("{count} CLOs: max error/(s*mu^1/2) = {worst_ratio:.4}, max 3-valued error/mu = {worst_3v}"),
    )
}

fn c12_dichotomy() -> Verdict {
    let inst = gen_clique_color(10, 5, 4).unwrap();
    let amb = Ambient::from_instance(&inst).unwrap();
    let (mut holds, mut hyp, mut acc, mut rej) = (0, 0, 0, 0);
    for i in 0..100u64 {
        let mut rng = seed::rng(MASTER, tag::CLO, &[12, i]);
        let e = random_restricted_clo(&inst, &amb, 1.0 / 16.0, &mut rng);
        let d = dichotomy_check(&e, &inst, &amb).unwrap();
        holds += d.holds as u32;
        hyp += d.hypotheses_ok as u32;
        acc += d.branch_accepts as u32;
        rej += d.branch_rejects as u32;
    }
    verdict(
        holds == 100 && hyp == 100,
        format!(
            "|U_min|={}, |V_max|={}: {holds}/100 trials satisfy the dichotomy ({acc} accept >= 1/4 of V_max, {rej} reject >= 3/4 of U_min), {hyp}/100 within hypotheses",
            amb.us.len(),
            amb.vs.len()
        ),
    )
}

fn c13_counts() -> Verdict {
    let (_, php2) = gen_php(2).unwrap();
    let cc = gen_clique_color(5, 3, 2).unwrap();
    let mut all: Vec<Clause> = Vec::new();
    for n in 1..=3 {
        all.extend(gen_php(n).unwrap().1);
    }
    all.extend(gen_clique_color(4, 3, 2).unwrap().clauses());
    all.extend(cc.clauses());
    let deg_ok = all.iter().all(|c| to_pc(c).degree() <= c.lw());
    verdict(
        php2.len() == 12 && cc.a_clauses.len() == 78 && cc.b_clauses.len() == 30 && deg_ok,
        format!(
            "php(2): {} clauses; clique-color(5,3,2): {} A, {} B; deg(to_pc) <= lw on {} clauses: {deg_ok}",
            php2.len(),
            cc.a_clauses.len(),
            cc.b_clauses.len(),
            all.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("checker soundness under mutation", c1_checker_soundness),
        ("approximation is one-sided", c2_one_sided),
        ("approximation miss rate", c3_miss_rate),
        ("width reduction", c4_width_reduction),
        ("exact interpolation", c5_exact),
        ("randomized protocol error and bits", c6_randomized),
        ("axiom-extended protocol error", c7_axiom),
        ("parity protocol", c8_parity),
        ("repaired strategy never fails", c9_repair),
        ("protocol to CLO", c10_protocol_to_clo),
        ("CLO to protocol", c11_clo_to_protocol),
        ("dichotomy for restricted CLOs", c12_dichotomy),
        ("structural counts", c13_counts),
    ];
    let filter: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if filter.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        failed += !o.pass as u32;
        println!(
            "criterion {:>2} [{}] {name}: {} ({:.1}s)",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
