//! WebAssembly entry points for `www/index.html`. Every function returns a JSON string.

use rand::Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use rlin::approx::rs_approx;
use rlin::instances::{enumerate_umin, enumerate_vmax, gen_clique_color, refute_linear};
use rlin::protocols::{
    simulate, InterpolationProtocol, NodeKind, Outcome, PairCtx, ProtocolKind, RandomizedProtocol,
    RwOutcome, RwProtocol,
};
use rlin::seed::{self, tag};
use rlin::{BitVec, Clause};

fn err(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

/// Observed miss rate `Pr[C^r(a) = 0]` for `w = 1..=w_max` against `2^-w`. `clause` is a
/// comma-separated list of polynomials such as `x1+x2, x3+1`; `point` a bit string.
#[wasm_bindgen]
pub fn rs_miss_curve(clause: &str, point: &str, w_max: u32, trials: u32, seed: u32) -> String {
    let a: BitVec = match point.trim().parse() {
        Ok(a) => a,
        Err(e) => return err(e),
    };
    let items: Vec<&str> = clause.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let c = match Clause::parse(&items, a.len()) {
        Ok(c) => c,
        Err(e) => return err(e),
    };
    if !c.eval_unchecked(&a) {
        return err("the clause is false at this point, so every approximation is false there too");
    }
    let rows: Vec<Value> = (1..=w_max.clamp(1, 16))
        .map(|w| {
            let mut rng = seed::rng(seed as u64, tag::APPROX, &[w as u64]);
            let miss = (0..trials)
                .filter(|_| !rs_approx(&c, w as usize, &mut rng).clause.eval_unchecked(&a))
                .count();
            json!({
                "w": w,
                "miss": miss as f64 / trials.max(1) as f64,
                "expected": (-(w as f64)).exp2(),
            })
        })
        .collect();
    json!({ "clause": c.to_string(), "rows": rows }).to_string()
}

/// Error rate and communication of the random-parity protocol on `n` bits for each
/// `ε = 2^-k`, `k = 1..=k_max`, averaged over random pairs `u ≠ v`.
#[wasm_bindgen]
pub fn rw_error_curve(n: u32, k_max: u32, trials: u32, seed: u32) -> String {
    let n = n.clamp(1, 60) as usize;
    let mut rows = Vec::new();
    for k in 1..=k_max.clamp(1, 12) {
        let eps = (-(k as f64)).exp2();
        let rw = match RwProtocol::new(n, eps) {
            Ok(rw) => rw,
            Err(e) => return err(e),
        };
        let mut rng = seed::rng(seed as u64, tag::PARITY, &[k as u64]);
        let (mut errors, mut bits, mut wrong) = (0u32, 0u64, 0u32);
        for _ in 0..trials {
            let u = BitVec::from_u64(n, rng.random::<u64>() & mask(n));
            let mut flip = rng.random::<u64>() & mask(n);
            if flip == 0 {
                flip = 1;
            }
            let v = BitVec::from_u64(n, u.to_u64() ^ flip);
            let t = rw.run(&u, &v, &mut rng);
            bits += t.bits as u64;
            match t.outcome {
                RwOutcome::Error => errors += 1,
                RwOutcome::Found(i) => wrong += (u.get(i) == v.get(i)) as u32,
            }
        }
        rows.push(json!({
            "eps": eps,
            "error": errors as f64 / trials.max(1) as f64,
            "declared": rw.declared_error(),
            "mean_bits": bits as f64 / trials.max(1) as f64,
            "declared_bits": rw.declared_bits(),
            "wrong_coordinates": wrong,
        }));
    }
    json!({ "n": n, "rows": rows }).to_string()
}

fn mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1 << n) - 1
    }
}

/// Walk of the exact protocol for a clique-color refutation on pair `(u_index, v_index)`
/// of `U_min × V_max`: the proof lines visited, bits spent, and the coordinate found.
#[wasm_bindgen]
pub fn exact_walk(n0: u32, omega: u32, xi: u32, u_index: u32, v_index: u32) -> String {
    let run = || -> Result<Value, String> {
        let inst = gen_clique_color(n0 as usize, omega as usize, xi as usize).map_err(|e| e.to_string())?;
        if inst.vars() > 40 {
            return Err("instance too large for the browser; try n0 <= 5".into());
        }
        let proof = refute_linear(&inst.clauses(), inst.vars()).map_err(|e| e.to_string())?;
        let proto = InterpolationProtocol::new(&inst, &proof, ProtocolKind::Exact, 0).map_err(|e| e.to_string())?;
        let us = enumerate_umin(&inst).map_err(|e| e.to_string())?;
        let vs = enumerate_vmax(&inst).map_err(|e| e.to_string())?;
        let u = us.get(u_index as usize % us.len()).ok_or("no positive points")?;
        let v = vs.get(v_index as usize % vs.len()).ok_or("no negative points")?;
        let e = proto.sample(0);
        let ctx = PairCtx::new(&inst, u, v);
        let tr = simulate(e.as_ref(), &ctx);
        let steps: Vec<Value> = tr
            .path
            .iter()
            .map(|&x| match e.kind(x) {
                NodeKind::Leaf(i) => json!({ "leaf": i, "edge": inst.edges()[i] }),
                NodeKind::Inner => {
                    let line = &proto.proof.lines[x as usize];
                    json!({ "line": x, "rule": line.rule.name(), "clause": line.conclusion.to_string() })
                }
            })
            .collect();
        let (found, correct) = match tr.outcome {
            Outcome::CorrectLeaf(i) => (Some(i), true),
            Outcome::WrongLeaf(i) => (Some(i), false),
            Outcome::StrategyFailure { .. } => (None, false),
        };
        Ok(json!({
            "u": u.x.to_bit_string(),
            "v": v.x.to_bit_string(),
            "u_points": us.len(),
            "v_points": vs.len(),
            "proof_lines": proto.lines(),
            "steps": steps,
            "total_bits": tr.total_bits,
            "max_node_bits": tr.max_node_bits,
            "found": found,
            "correct": correct,
        }))
    };
    run().map_or_else(err, |v| v.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn miss_curve_tracks_two_to_minus_w() {
        let r = parse(&rs_miss_curve("x1+x2, x3", "100", 4, 4000, 1));
        for row in r["rows"].as_array().unwrap() {
            let (m, e) = (row["miss"].as_f64().unwrap(), row["expected"].as_f64().unwrap());
            assert!((m - e).abs() < 0.04, "{row}");
        }
        assert!(parse(&rs_miss_curve("x1", "0", 2, 10, 1)).get("error").is_some());
    }

    #[test]
    fn parity_curve_never_names_a_wrong_coordinate() {
        let r = parse(&rw_error_curve(10, 3, 2000, 2));
        for row in r["rows"].as_array().unwrap() {
            assert_eq!(row["wrong_coordinates"], 0);
            assert!(row["error"].as_f64().unwrap() < row["declared"].as_f64().unwrap() + 0.05);
        }
    }

    #[test]
    fn exact_walk_finds_an_edge() {
        let r = parse(&exact_walk(4, 3, 2, 1, 2));
        assert_eq!(r["correct"], true);
        assert!(r["steps"].as_array().unwrap().len() >= 2);
    }
}
