//! File formats: proofs as JSON lines, protocol descriptions and CLOs as JSON.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::approx::{ApproxSpec, ReducedProof, WidthReport};
use crate::clo::{Ambient, Clo, Gate, Mode, MonoCircuit};
use crate::f2::{BitVec, F2Error, LinPoly};
use crate::instances::{gen_clique_color, gen_php, InstanceError, SplitInstance};
use crate::proof::{Clause, Proof, ProofLine, Rule};
use crate::protocols::{Declared, ProtocolKind};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{0}")]
    Poly(#[from] F2Error),
    #[error("{0}")]
    Instance(#[from] InstanceError),
    #[error("{0}")]
    Clo(#[from] crate::clo::CloError),
}

/// Which generator produced the initial clauses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Php { n: usize },
    CliqueColor { n0: usize, omega: usize, xi: usize },
}

impl Family {
    pub fn clauses(&self) -> Result<(usize, Vec<Clause>), InstanceError> {
        match *self {
            Family::Php { n } => gen_php(n),
            Family::CliqueColor { n0, omega, xi } => {
                let inst = gen_clique_color(n0, omega, xi)?;
                Ok((inst.vars(), inst.clauses()))
            }
        }
    }

    pub fn split_instance(&self) -> Option<Result<SplitInstance, InstanceError>> {
        match *self {
            Family::Php { .. } => None,
            Family::CliqueColor { n0, omega, xi } => Some(gen_clique_color(n0, omega, xi)),
        }
    }
}

/// Variable blocks of a split instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Blocks {
    pub n: usize,
    pub s: usize,
    pub r: usize,
}

/// Width-reduction section of a reduced proof file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub w: usize,
    pub seed: u64,
    pub source_initials: usize,
    pub source_lines: usize,
    pub source_width: usize,
    pub line_constant: f64,
    pub ax: Vec<Vec<String>>,
    pub width_report: WidthReportFile,
    /// Chosen subsets per distinct source clause.
    pub subsets: Vec<SubsetsFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WidthReportFile {
    pub image_width: usize,
    pub initial_width: usize,
    pub total_width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetsFile {
    pub clause: Vec<String>,
    pub subsets: Vec<Vec<usize>>,
}

impl From<WidthReport> for WidthReportFile {
    fn from(w: WidthReport) -> Self {
        WidthReportFile {
            image_width: w.image_width,
            initial_width: w.initial_width,
            total_width: w.total_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub vars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Blocks>,
    pub seed: u64,
    pub initials: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reduction: Option<Reduction>,
}

pub const PROOF_FORMAT: &str = "rlin-proof/1";

#[derive(Debug, Clone, PartialEq)]
pub struct ProofFile {
    pub header: Header,
    pub proof: Proof,
}

impl ProofFile {
    pub fn new(proof: Proof, instance: Option<Family>, seed: u64) -> Self {
        let blocks = instance.and_then(|f| f.split_instance()).and_then(Result::ok).map(|i| Blocks {
            n: i.n,
            s: i.s,
            r: i.r,
        });
        ProofFile {
            header: Header {
                format: PROOF_FORMAT.into(),
                vars: proof.vars,
                instance,
                blocks,
                seed,
                initials: proof.initials.iter().map(Clause::to_strings).collect(),
                reduction: None,
            },
            proof,
        }
    }

    pub fn reduced(r: &ReducedProof, instance: Option<Family>, seed: u64) -> Self {
        let mut f = ProofFile::new(r.proof.clone(), instance, seed);
        f.header.reduction = Some(reduction_section(r));
        f
    }
}

fn reduction_section(r: &ReducedProof) -> Reduction {
    let ApproxSpec { w, seed, per_clause } = &r.spec;
    Reduction {
        w: *w,
        seed: *seed,
        source_initials: r.source_initials,
        source_lines: r.source_lines,
        source_width: r.source_width,
        line_constant: r.line_constant,
        ax: r.ax_clauses.iter().map(Clause::to_strings).collect(),
        width_report: r.width_report.into(),
        subsets: per_clause
            .iter()
            .map(|c| SubsetsFile {
                clause: c.clause.clone(),
                subsets: c.subsets.clone(),
            })
            .collect(),
    }
}

fn rule_json(rule: &Rule) -> (&'static str, Value) {
    let p = |f: &LinPoly| f.to_string();
    let params = match rule {
        Rule::Initial(k) => json!({ "index": k }),
        Rule::Axiom(h) => json!({ "h": p(h) }),
        Rule::Weaken { premise, added } => json!({ "premise": premise, "added": p(added) }),
        Rule::Contract { premise } => json!({ "premise": premise }),
        Rule::Binary { left, right, g, h } => {
            json!({ "left": left, "right": right, "g": p(g), "h": p(h) })
        }
    };
    (rule.name(), params)
}

pub fn write_proof(out: &mut impl Write, f: &ProofFile) -> Result<(), FormatError> {
    serde_json::to_writer(&mut *out, &f.header)?;
    writeln!(out)?;
    for line in &f.proof.lines {
        let (rule, params) = rule_json(&line.rule);
        let obj = json!({ "rule": rule, "params": params, "conclusion": line.conclusion.to_strings() });
        serde_json::to_writer(&mut *out, &obj)?;
        writeln!(out)?;
    }
    Ok(())
}

pub fn proof_to_string(f: &ProofFile) -> String {
    let mut buf = Vec::new();
    write_proof(&mut buf, f).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

#[derive(Deserialize)]
struct LineFile {
    rule: String,
    #[serde(default)]
    params: Value,
    conclusion: Vec<String>,
}

pub fn read_proof(input: impl BufRead) -> Result<ProofFile, FormatError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| {
        l.as_ref().map_or(true, |s| !s.trim().is_empty())
    });
    let (_, first) = lines.next().ok_or(FormatError::Syntax {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header: Header = serde_json::from_str(&first?)?;
    if header.format != PROOF_FORMAT {
        return Err(FormatError::Syntax {
            line: 1,
            reason: format!("unknown format {:?}", header.format),
        });
    }
    let vars = header.vars;
    let initials = header
        .initials
        .iter()
        .map(|c| Clause::parse(c, vars))
        .collect::<Result<Vec<_>, _>>()?;
    let mut proof_lines = Vec::new();
    for (no, text) in lines {
        let line = no + 1;
        let syn = |reason: String| FormatError::Syntax { line, reason };
        let lf: LineFile = serde_json::from_str(&text?)?;
        let idx = |key: &str| {
            lf.params
                .get(key)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| syn(format!("missing integer parameter {key}")))
        };
        let poly = |key: &str| -> Result<LinPoly, FormatError> {
            let s = lf
                .params
                .get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| syn(format!("missing polynomial parameter {key}")))?;
            Ok(LinPoly::parse(s, vars)?)
        };
        let rule = match lf.rule.as_str() {
            "initial" => Rule::Initial(idx("index")?),
            "axiom" => Rule::Axiom(poly("h")?),
            "weaken" => Rule::Weaken {
                premise: idx("premise")?,
                added: poly("added")?,
            },
            "contract" => Rule::Contract {
                premise: idx("premise")?,
            },
            "binary" => Rule::Binary {
                left: idx("left")?,
                right: idx("right")?,
                g: poly("g")?,
                h: poly("h")?,
            },
            other => return Err(syn(format!("unknown rule {other:?}"))),
        };
        proof_lines.push(ProofLine {
            rule,
            conclusion: Clause::parse(&lf.conclusion, vars)?,
        });
    }
    Ok(ProofFile {
        header,
        proof: Proof {
            vars,
            initials,
            lines: proof_lines,
        },
    })
}

pub const PROTOCOL_FORMAT: &str = "rlin-protocol/1";

/// A protocol described by the proof it interpolates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolFile {
    pub format: String,
    pub proof: String,
    pub engine: ProtocolKind,
    pub w: usize,
    pub seed: u64,
    pub instance: Family,
    pub declared: Declared,
}

pub const CLO_FORMAT: &str = "rlin-clo/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectFile {
    pub u: Vec<String>,
    pub v: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloFile {
    pub format: String,
    pub instance: Family,
    pub seed: u64,
    pub mode: Mode,
    pub n: usize,
    pub gates: Vec<Gate>,
    pub output: usize,
    pub rects: Vec<RectFile>,
}

impl CloFile {
    /// Keeps only the gates the output depends on, renumbered in topological order.
    pub fn from_clo(c: &Clo, amb: &Ambient, instance: Family, seed: u64) -> Self {
        let circ = &c.circuit;
        let keep = circ.reachable_from(circ.output);
        let mut renum = vec![usize::MAX; circ.gates().len()];
        let mut gates = Vec::with_capacity(keep.len());
        for (k, &g) in keep.iter().enumerate() {
            renum[g] = k;
            gates.push(match circ.gate(g) {
                Gate::And { a, b } => Gate::And { a: renum[a], b: renum[b] },
                Gate::Or { a, b } => Gate::Or { a: renum[a], b: renum[b] },
                leaf => leaf,
            });
        }
        let rects = c
            .rects
            .iter()
            .map(|r| {
                let (u, v) = amb.rect_points(r);
                RectFile {
                    u: u.iter().map(BitVec::to_bit_string).collect(),
                    v: v.iter().map(BitVec::to_bit_string).collect(),
                }
            })
            .collect();
        CloFile {
            format: CLO_FORMAT.into(),
            instance,
            seed,
            mode: c.mode,
            n: circ.n,
            gates,
            output: renum[circ.output],
            rects,
        }
    }

    pub fn to_clo(&self, amb: &Ambient) -> Result<Clo, FormatError> {
        if self.format != CLO_FORMAT {
            return Err(FormatError::Syntax {
                line: 1,
                reason: format!("unknown format {:?}", self.format),
            });
        }
        let circuit = MonoCircuit::from_gates(self.n, self.rects.len(), &self.gates, self.output)?;
        let parse = |s: &Vec<String>| -> Result<Vec<BitVec>, FormatError> {
            s.iter().map(|p| Ok(p.parse::<BitVec>()?)).collect()
        };
        let rects = self
            .rects
            .iter()
            .map(|r| Ok(amb.rect_from_points(&parse(&r.u)?, &parse(&r.v)?)?))
            .collect::<Result<Vec<_>, FormatError>>()?;
        Ok(Clo::new(circuit, rects, self.mode)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::refute_linear;
    use crate::proof::check_refutation;

    #[test]
    fn proof_round_trip() {
        let fam = Family::CliqueColor { n0: 4, omega: 3, xi: 2 };
        let (vars, clauses) = fam.clauses().unwrap();
        let proof = refute_linear(&clauses, vars).unwrap();
        let f = ProofFile::new(proof, Some(fam), 5);
        let text = proof_to_string(&f);
        let back = read_proof(text.as_bytes()).unwrap();
        assert_eq!(back, f);
        check_refutation(&back.proof).unwrap();
        assert_eq!(back.header.blocks, Some(Blocks { n: 6, s: 12, r: 8 }));
    }

    #[test]
    fn malformed_lines_are_reported() {
        let fam = Family::Php { n: 1 };
        let (vars, clauses) = fam.clauses().unwrap();
        let proof = refute_linear(&clauses, vars).unwrap();
        let text = proof_to_string(&ProofFile::new(proof, Some(fam), 0));
        let broken = text.replacen("\"binary\"", "\"magic\"", 1);
        assert!(matches!(read_proof(broken.as_bytes()), Err(FormatError::Syntax { .. })));
        assert!(read_proof("".as_bytes()).is_err());
    }

    #[test]
    fn clo_round_trip() {
        let inst = gen_clique_color(4, 3, 2).unwrap();
        let amb = Ambient::from_instance(&inst).unwrap();
        let mut rng = crate::seed::rng(1, crate::seed::tag::CLO, &[]);
        let clo = crate::clo::random_clo(&inst, &amb, &mut rng);
        let fam = Family::CliqueColor { n0: 4, omega: 3, xi: 2 };
        let file = CloFile::from_clo(&clo, &amb, fam, 1);
        let text = serde_json::to_string(&file).unwrap();
        let back: CloFile = serde_json::from_str(&text).unwrap();
        let clo2 = back.to_clo(&amb).unwrap();
        assert_eq!(clo2.rects, clo.rects);
        assert_eq!(clo2.size(), clo.size());
        crate::clo::verify_separation(&clo2, &amb).unwrap();
    }
}
