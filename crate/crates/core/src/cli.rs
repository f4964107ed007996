//! The `rlin` command-line front end.
//!
//! Every subcommand prints a report (JSON with `--json`, `key: value` lines otherwise)
//! that echoes the parsed configuration. Exit codes: 0 ok, 1 a measured value exceeds its
//! declared bound, 2 bad input.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::approx::width_reduce;
use crate::clo::{
    best_sample, clo_to_protocol, clo_to_protocol_3v, dichotomy_check, locality, locality_full,
    protocol_to_clo, random_restricted_clo, verify_separation, Ambient,
};
use crate::format::{read_proof, CloFile, Family, ProofFile, ProtocolFile, PROTOCOL_FORMAT};
use crate::instances::{enumerate_umin, enumerate_vmax, refute_linear, sample_u, sample_v, SplitInstance};
use crate::proof::{check_proof, check_refutation, proof_width, to_pc};
use crate::protocols::{
    estimate_error, repair_p4b, ErrorMode, InterpolationProtocol, ProtocolKind, RandomizedProtocol,
};
use crate::seed;

#[derive(Parser, Debug, Serialize)]
#[command(name = "rlin", version, about = "Resolution over F2-linear clauses: refutations, width reduction, protocols and CLOs")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads for parallel estimation (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Php,
    CliqueColor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineArg {
    Exact,
    Randomized,
    Axiom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Walk,
    Definitional,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write the initial clauses of an instance as a proof-file header.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n0: Option<usize>,
        #[arg(long)]
        omega: Option<usize>,
        #[arg(long)]
        xi: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refute the initial clauses of a proof file by saturation.
    Refute {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check every line of a proof file and that it ends in the empty clause.
    Check {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Randomized width reduction of a refutation.
    ReduceWidth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        w: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe the protocol interpolating a refutation of a clique-color instance.
    Interpolate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        engine: EngineArg,
        #[arg(long, default_value_t = 0)]
        w: usize,
        /// Use the variant whose strategy never leaves F.
        #[arg(long)]
        repair: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a protocol's error on pairs of positive and negative points.
    Simulate {
        #[arg(long)]
        protocol: PathBuf,
        /// `exhaustive` or `sample N`.
        #[arg(long, num_args = 1..=2, default_values_t = ["exhaustive".to_string()])]
        pairs: Vec<String>,
        /// Protocol samples (seeds) per pair.
        #[arg(long, default_value_t = 1)]
        samples: u64,
        #[arg(long, value_enum, default_value = "walk")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        /// Report format; only `json` is produced.
        #[arg(long)]
        report: Option<String>,
    },
    /// Build a CLO from the best of several protocol samples.
    CloFromProtocol {
        #[arg(long)]
        protocol: PathBuf,
        /// Largest number of bits allowed in one phase.
        #[arg(long)]
        t: Option<u32>,
        #[arg(long, default_value_t = 8)]
        samples: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a CLO separates its instance's extreme points.
    CloVerify {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Error of the communication-2 protocol derived from a CLO.
    CloToProtocol {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        three_valued: bool,
    },
    /// Dichotomy for random restricted CLOs on a clique-color instance.
    Dichotomy {
        #[arg(long, default_value_t = 10)]
        n0: usize,
        #[arg(long, default_value_t = 4)]
        xi: usize,
        #[arg(long, default_value_t = 5)]
        omega: usize,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 1.0 / 16.0)]
        mu: f64,
    },
    /// Size, width and degree statistics of a proof file.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Input(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

struct Report {
    fields: Map<String, Value>,
    checks: Vec<Value>,
    ok: bool,
}

impl Report {
    fn new(cli: &Cli) -> Self {
        let mut fields = Map::new();
        fields.insert("config".into(), serde_json::to_value(cli).expect("config serializes"));
        Report {
            fields,
            checks: Vec::new(),
            ok: true,
        }
    }

    fn set(&mut self, key: &str, v: impl Serialize) {
        self.fields
            .insert(key.into(), serde_json::to_value(v).expect("report field serializes"));
    }

    fn check(&mut self, name: &str, declared: impl Serialize, measured: impl Serialize, pass: bool) {
        self.ok &= pass;
        self.checks.push(json!({
            "name": name, "declared": declared, "measured": measured, "pass": pass
        }));
    }

    fn emit(mut self, json: bool, out: &mut dyn Write) -> i32 {
        self.fields.insert("assertions".into(), Value::Array(self.checks));
        let v = Value::Object(self.fields);
        let _ = if json {
            writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("json"))
        } else {
            let mut r = Ok(());
            for (k, val) in v.as_object().expect("object") {
                r = r.and_then(|_| writeln!(out, "{k}: {val}"));
            }
            r
        };
        if self.ok {
            0
        } else {
            1
        }
    }
}

/// Parses `args` (program name first), runs the command, writes the report to `out`, and
/// returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut report = Report::new(&cli);
    match dispatch(&cli, &mut report) {
        Ok(()) => report.emit(cli.json, out),
        Err(Failure::Input(msg)) => {
            eprintln!("rlin: {msg}");
            2
        }
    }
}

fn read_proof_file(path: &Path) -> Result<ProofFile, Failure> {
    let f = File::open(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok(read_proof(BufReader::new(f))?)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn split_instance(fam: Option<Family>) -> Result<(Family, SplitInstance), Failure> {
    let fam = fam.ok_or_else(|| Failure::Input("file does not record its instance".into()))?;
    let inst = fam
        .split_instance()
        .ok_or_else(|| Failure::Input("a clique-color instance is required".into()))??;
    Ok((fam, inst))
}

fn load_protocol(path: &Path) -> Result<(ProtocolFile, SplitInstance, Box<dyn RandomizedProtocol>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let pf: ProtocolFile = serde_json::from_str(&text)?;
    if pf.format != PROTOCOL_FORMAT && pf.format != format!("{PROTOCOL_FORMAT}+repaired") {
        return Err(Failure::Input(format!("unknown protocol format {:?}", pf.format)));
    }
    let proof_path = path.parent().unwrap_or(Path::new(".")).join(&pf.proof);
    let proof = read_proof_file(&proof_path)?;
    let (_, inst) = split_instance(Some(pf.instance))?;
    let p = InterpolationProtocol::new(&inst, &proof.proof, pf.engine, pf.w)?;
    let boxed: Box<dyn RandomizedProtocol> = if pf.format.ends_with("+repaired") {
        Box::new(repair_p4b(p))
    } else {
        Box::new(p)
    };
    Ok((pf, inst, boxed))
}

impl RandomizedProtocol for Box<dyn RandomizedProtocol> {
    fn sample(&self, seed: u64) -> Box<dyn crate::protocols::Engine + '_> {
        self.as_ref().sample(seed)
    }

    fn declared(&self) -> crate::protocols::Declared {
        self.as_ref().declared()
    }
}

fn dispatch(cli: &Cli, rep: &mut Report) -> Result<(), Failure> {
    let seed = cli.seed;
    match &cli.command {
        Command::Gen {
            family,
            n,
            n0,
            omega,
            xi,
            out,
        } => {
            let need = |v: Option<usize>, name: &str| {
                v.ok_or_else(|| Failure::Input(format!("--{name} is required for this family")))
            };
            let fam = match family {
                FamilyArg::Php => Family::Php { n: need(*n, "n")? },
                FamilyArg::CliqueColor => Family::CliqueColor {
                    n0: need(*n0, "n0")?,
                    omega: need(*omega, "omega")?,
                    xi: need(*xi, "xi")?,
                },
            };
            let (vars, clauses) = fam.clauses()?;
            let proof = crate::proof::Proof {
                vars,
                initials: clauses,
                lines: vec![],
            };
            let f = ProofFile::new(proof, Some(fam), seed);
            write_text(out, &crate::format::proof_to_string(&f))?;
            rep.set("vars", vars);
            rep.set("clauses", f.proof.initials.len());
            rep.set("blocks", f.header.blocks);
        }
        Command::Refute { input, out } => {
            let f = read_proof_file(input)?;
            let proof = refute_linear(&f.proof.initials, f.proof.vars)?;
            let pf = ProofFile::new(proof, f.header.instance, seed);
            write_text(out, &crate::format::proof_to_string(&pf))?;
            rep.set("lines", pf.proof.lines.len());
            rep.set("width", proof_width(&pf.proof));
        }
        Command::Check { input } => {
            let f = read_proof_file(input)?;
            let lines = check_proof(&f.proof).and_then(|_| check_refutation(&f.proof));
            rep.set("lines", f.proof.lines.len());
            rep.set("width", proof_width(&f.proof));
            let msg = lines.as_ref().err().map(|v| v.to_string());
            rep.check("valid refutation", true, msg.unwrap_or_else(|| "ok".into()), lines.is_ok());
        }
        Command::ReduceWidth { input, w, out } => {
            let f = read_proof_file(input)?;
            let r = width_reduce(&f.proof, *w, seed)?;
            let pf = ProofFile::reduced(&r, f.header.instance, seed);
            write_text(out, &crate::format::proof_to_string(&pf))?;
            rep.set("lines", r.proof.lines.len());
            rep.set("source_lines", r.source_lines);
            rep.set("source_width", r.source_width);
            rep.set("width_report", r.width_report);
            rep.set("line_constant", r.line_constant);
            let valid = check_proof(&r.proof).is_ok() && check_refutation(&r.proof).is_ok();
            rep.check("valid refutation", true, valid, valid);
            let bound = 2 * w + 3;
            rep.check(
                "image width",
                bound,
                r.width_report.image_width,
                r.width_report.image_width <= bound,
            );
        }
        Command::Interpolate {
            input,
            engine,
            w,
            repair,
            out,
        } => {
            let f = read_proof_file(input)?;
            let (fam, inst) = split_instance(f.header.instance)?;
            let kind = match engine {
                EngineArg::Exact => ProtocolKind::Exact,
                EngineArg::Randomized => ProtocolKind::Randomized,
                EngineArg::Axiom => ProtocolKind::Axiom,
            };
            let p = InterpolationProtocol::new(&inst, &f.proof, kind, *w)?;
            let declared = if *repair {
                repair_p4b(p).declared()
            } else {
                p.declared()
            };
            let rel = relative_to(input, out);
            let pf = ProtocolFile {
                format: if *repair {
                    format!("{PROTOCOL_FORMAT}+repaired")
                } else {
                    PROTOCOL_FORMAT.into()
                },
                proof: rel,
                engine: kind,
                w: *w,
                seed,
                instance: fam,
                declared,
            };
            write_text(out, &serde_json::to_string_pretty(&pf)?)?;
            rep.set("declared", declared);
        }
        Command::Simulate {
            protocol,
            pairs,
            samples,
            mode,
            confidence,
            report: _,
        } => {
            let (pf, inst, p) = load_protocol(protocol)?;
            let pts = match pairs.first().map(String::as_str) {
                Some("exhaustive") => {
                    let us = enumerate_umin(&inst)?;
                    let vs = enumerate_vmax(&inst)?;
                    us.iter()
                        .flat_map(|u| vs.iter().map(move |v| (u.clone(), v.clone())))
                        .collect::<Vec<_>>()
                }
                Some("sample") => {
                    let n: usize = pairs
                        .get(1)
                        .ok_or_else(|| Failure::Input("--pairs sample needs a count".into()))?
                        .parse()?;
                    (0..n as u64)
                        .map(|i| {
                            let mut rng = seed::rng(seed, seed::tag::PAIR, &[i]);
                            (sample_u(&inst, &mut rng), sample_v(&inst, &mut rng))
                        })
                        .collect()
                }
                other => return Err(Failure::Input(format!("unknown --pairs {other:?}"))),
            };
            let mode = match mode {
                ModeArg::Walk => ErrorMode::Walk,
                ModeArg::Definitional => ErrorMode::Definitional,
            };
            let er = estimate_error(&p, &inst, &pts, *samples, seed, mode, *confidence);
            let worst = er.worst_pair().map_or(0.0, |w| w.rate);
            rep.set("declared", pf.declared);
            rep.set("error_rate", er.rate);
            rep.set("worst_pair_rate", worst);
            rep.set("errors", er.errors);
            rep.set("trials", er.trials);
            rep.set("interval", [er.lower, er.upper]);
            rep.set("strategy_failures", er.strategy_failures);
            rep.set("max_node_bits", er.max_node_bits);
            rep.check("per-pair error", pf.declared.error, worst, worst <= pf.declared.error);
            if mode == ErrorMode::Walk {
                rep.check(
                    "bits per node",
                    pf.declared.node_bits,
                    er.max_node_bits,
                    er.max_node_bits <= pf.declared.node_bits,
                );
            }
        }
        Command::CloFromProtocol {
            protocol,
            t,
            samples,
            out,
        } => {
            let (pf, inst, p) = load_protocol(protocol)?;
            let amb = Ambient::from_instance(&inst)?;
            let repaired = repair_p4b(p);
            let (chosen, ext) = best_sample(&repaired.inner, &inst, &amb, *samples, seed)?;
            let (clo, r) = protocol_to_clo(&ext, &amb, *t)?;
            let file = CloFile::from_clo(&clo, &amb, pf.instance, seed);
            write_text(out, &serde_json::to_string(&file)?)?;
            rep.set("sample_seed", chosen);
            rep.set("construction", &r);
            let sep = verify_separation(&clo, &amb);
            rep.check("separates", true, sep.is_ok(), sep.is_ok());
            let (le, pe) = (r.locality.0 as u128 * r.protocol_error.1 as u128, r.protocol_error.0 as u128 * r.locality.1 as u128);
            rep.check("locality at most protocol error", r.protocol_error, r.locality, le <= pe);
        }
        Command::CloVerify { input } => {
            let (clo, amb, inst) = load_clo(input)?;
            let sep = verify_separation(&clo, &amb);
            let mu = locality(&clo, &amb)?;
            rep.set("size", clo.size());
            rep.set("rectangles", clo.rects.len());
            rep.set("locality", mu.to_string());
            rep.set("locality_full", locality_full(&clo, &amb, &inst).map(|r| r.to_string()));
            let msg = sep.as_ref().err().map(|c| c.to_string());
            rep.check("separates", true, msg.unwrap_or_else(|| "ok".into()), sep.is_ok());
        }
        Command::CloToProtocol {
            input,
            three_valued,
        } => {
            let (clo, amb, inst) = load_clo(input)?;
            let r = if *three_valued {
                clo_to_protocol_3v(&clo, &amb, &inst)?
            } else {
                clo_to_protocol(&clo, &amb, &inst)?
            };
            let rate = r.error.0 as f64 / r.error.1 as f64;
            rep.set("result", &r);
            rep.check("error", r.bound, rate, rate <= r.bound + 1e-12);
            rep.check("errors inside rectangles", true, r.errors_in_rectangles, r.errors_in_rectangles);
        }
        Command::Dichotomy {
            n0,
            xi,
            omega,
            trials,
            mu,
        } => {
            let inst = crate::instances::gen_clique_color(*n0, *omega, *xi)?;
            let amb = Ambient::from_instance(&inst)?;
            let mut holds = 0u64;
            let mut in_hypotheses = 0u64;
            let mut branch = [0u64; 2];
            for i in 0..*trials {
                let mut rng = seed::rng(seed, seed::tag::CLO, &[i]);
                let e = random_restricted_clo(&inst, &amb, *mu, &mut rng);
                let d = dichotomy_check(&e, &inst, &amb)?;
                in_hypotheses += d.hypotheses_ok as u64;
                holds += (d.holds || !d.hypotheses_ok) as u64;
                branch[0] += d.branch_accepts as u64;
                branch[1] += d.branch_rejects as u64;
            }
            rep.set("u_min", amb.us.len());
            rep.set("v_max", amb.vs.len());
            rep.set("trials_within_hypotheses", in_hypotheses);
            rep.set("accept_branch", branch[0]);
            rep.set("reject_branch", branch[1]);
            rep.check("dichotomy holds", trials, holds, holds == *trials);
        }
        Command::Stats { input } => {
            let f = read_proof_file(input)?;
            let p = &f.proof;
            let max_deg = p
                .initials
                .iter()
                .chain(p.lines.iter().map(|l| &l.conclusion))
                .map(|c| (to_pc(c).degree(), c.lw()))
                .fold((0, true), |(d, ok), (deg, lw)| (d.max(deg), ok && deg <= lw));
            rep.set("vars", p.vars);
            rep.set("initials", p.initials.len());
            rep.set("lines", p.lines.len());
            rep.set("width", proof_width(p));
            rep.set("max_pc_degree", max_deg.0);
            rep.set("reduction", &f.header.reduction);
            rep.check("pc degree at most width", "deg <= lw", max_deg.1, max_deg.1);
        }
    }
    Ok(())
}

fn load_clo(path: &Path) -> Result<(crate::clo::Clo, Ambient, SplitInstance), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file: CloFile = serde_json::from_str(&text)?;
    let (_, inst) = split_instance(Some(file.instance))?;
    let amb = Ambient::from_instance(&inst)?;
    let clo = file.to_clo(&amb)?;
    Ok((clo, amb, inst))
}

/// Path of `target` as seen from the directory of `from`, when both share a directory.
fn relative_to(target: &Path, from: &Path) -> String {
    let dir = from.parent().unwrap_or(Path::new(""));
    match target.strip_prefix(dir) {
        Ok(rel) if !dir.as_os_str().is_empty() => rel.display().to_string(),
        _ => std::path::absolute(target)
            .unwrap_or_else(|_| target.to_path_buf())
            .display()
            .to_string(),
    }
}
