//! Command-line front end: loads relations, distributions, kernels, and
//! population models from JSON, runs the decision procedures, and emits
//! machine-readable reports.
//!
//! Exit codes: 0 for a positive finding, 1 for a negative finding, 2 for
//! usage or input errors. `STOCHREL_THREADS` caps internal parallelism.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use stochrel::coupling::{st_related, st_related_f64, subset_oracle};
use stochrel::ctmc::{compare_stationary, ct_preserves, ct_subrelation, ct_subset_test};
use stochrel::io;
use stochrel::kernel::preserves_into;
use stochrel::population::{alpha_properties, population_check, reproduce_queueing};
use stochrel::rational::parse_rat;
use stochrel::relation::Side;
use stochrel::subrelation::{subrelation, IterationStrategy, SubrelationOptions};

#[derive(Parser)]
#[command(
    name = "stochrel",
    about = "Exact decisions for stochastic relations of finite Markov chains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Arithmetic mode. Exact mode rejects float literals in inputs;
    /// float mode is approximate and only supported where noted.
    #[arg(long, global = true, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Feasibility tolerance, legal only with --mode float.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Also print a human-readable summary to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Float,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Full,
    Worklist,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether μ is stochastically related to ν.
    Relate {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        /// Decide by subset enumeration instead of max-flow (exact mode).
        #[arg(long)]
        oracle: bool,
    },
    /// Conjugate a state set or a nonnegative function through a relation.
    Conjugate {
        #[arg(long)]
        relation: PathBuf,
        /// Which conjugate: right maps left states forward, left maps
        /// right states backward.
        #[arg(long, value_parser = parse_side)]
        side: Side,
        /// Comma-separated state labels to conjugate.
        #[arg(long, conflicts_with = "function")]
        states: Option<String>,
        /// JSON file with a nonnegative function to conjugate.
        #[arg(long)]
        function: Option<PathBuf>,
    },
    /// Check stochastic preservation of a relation by two kernels.
    Preserve {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long)]
        p1: PathBuf,
        #[arg(long)]
        p2: PathBuf,
        /// Target relation when the kernels change spaces (defaults to
        /// the source relation).
        #[arg(long)]
        rprime: Option<PathBuf>,
        /// Check each pair by subset enumeration instead of max-flow.
        #[arg(long)]
        oracle: bool,
    },
    /// Check preservation for two rate kernels via local uniformization.
    CtPreserve {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long)]
        q1: PathBuf,
        #[arg(long)]
        q2: PathBuf,
        /// Use the rate-level subset criterion instead of hat rows.
        #[arg(long)]
        oracle: bool,
    },
    /// Maximal preserved subrelation of two discrete-time kernels.
    Subrelation {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long)]
        p1: PathBuf,
        #[arg(long)]
        p2: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, value_enum, default_value_t = Strategy::Full)]
        strategy: Strategy,
    },
    /// Maximal preserved subrelation of two rate kernels.
    CtSubrelation {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long)]
        q1: PathBuf,
        #[arg(long)]
        q2: PathBuf,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long, value_enum, default_value_t = Strategy::Full)]
        strategy: Strategy,
    },
    /// Preservation check for two population models by move subsets.
    PopulationCheck {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long)]
        model1: PathBuf,
        #[arg(long)]
        model2: PathBuf,
    },
    /// Compare stationary distributions through a preserved subrelation.
    StationaryCompare {
        #[arg(long)]
        relation: PathBuf,
        #[arg(long, conflicts_with = "model1", requires = "q2")]
        q1: Option<PathBuf>,
        #[arg(long, requires = "q1")]
        q2: Option<PathBuf>,
        #[arg(long, requires = "model2")]
        model1: Option<PathBuf>,
        #[arg(long, requires = "model1")]
        model2: Option<PathBuf>,
    },
    /// Replay the two-queue load-balancing case study and compare every
    /// iterate with its closed form.
    ReproduceQueueing {
        #[arg(long)]
        lambda1: String,
        #[arg(long)]
        lambda2: String,
        #[arg(long)]
        cap: i64,
        #[arg(long)]
        iters: usize,
    },
    /// Verify the six slack-function identities pointwise on a grid.
    AlphaProps {
        #[arg(long, default_value_t = -5, allow_hyphen_values = true)]
        lo: i64,
        #[arg(long, default_value_t = 15, allow_hyphen_values = true)]
        hi: i64,
        #[arg(long, default_value_t = 5)]
        n_max: i64,
    },
}

fn parse_side(s: &str) -> Result<Side, String> {
    match s {
        "right" => Ok(Side::Right),
        "left" => Ok(Side::Left),
        other => Err(format!("side must be 'left' or 'right', got {other:?}")),
    }
}

/// A finished run: the report plus whether the finding was positive.
struct Outcome {
    report: Value,
    positive: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            let text = io::to_pretty_string(&outcome.report);
            if let Some(path) = &cli.output {
                if let Err(e) = std::fs::write(path, &text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            } else {
                print!("{text}");
            }
            if outcome.positive {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.tolerance.is_some() && cli.mode == Mode::Exact {
        bail!("--tolerance is only legal with --mode float");
    }
    let tolerance = cli.tolerance.unwrap_or(1e-9);
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        bail!("--tolerance must be a positive number");
    }

    match &cli.command {
        Command::Relate { relation, mu, nu, oracle } => {
            let r = io::relation_from_json(&load_json(relation)?)?;
            if cli.mode == Mode::Float {
                if *oracle {
                    bail!("--oracle is exact-only");
                }
                let (ms, mv) = io::dist_f64_from_json(&load_json(mu)?)?;
                let (ns, nv) = io::dist_f64_from_json(&load_json(nu)?)?;
                if !ms.same_as(r.left_space()) || !ns.same_as(r.right_space()) {
                    bail!("distribution spaces must match the relation");
                }
                let d = st_related_f64(&r, &mv, &nv, tolerance)?;
                let report = json!({
                    "command": "relate",
                    "mode": "float",
                    "approximate": true,
                    "tolerance": d.tolerance,
                    "related": d.related,
                    "max_flow": d.max_flow,
                    "cut": d.cut.iter()
                        .map(|&i| r.left_space().label(i).to_string())
                        .collect::<Vec<_>>(),
                });
                verbose_line(cli, &format!("related (within tolerance): {}", d.related));
                return Ok(Outcome { positive: d.related, report });
            }
            let mu = io::dist_from_json(&load_json(mu)?)?;
            let nu = io::dist_from_json(&load_json(nu)?)?;
            if *oracle {
                let related = subset_oracle(&r, &mu, &nu)?;
                verbose_line(cli, &format!("related (subset oracle): {related}"));
                return Ok(Outcome {
                    positive: related,
                    report: json!({
                        "command": "relate",
                        "mode": "exact",
                        "method": "subset_oracle",
                        "related": related,
                    }),
                });
            }
            let d = st_related(&r, &mu, &nu)?;
            let mut report = io::decision_to_json(&r, &d);
            annotate(&mut report, "command", json!("relate"));
            annotate(&mut report, "mode", json!("exact"));
            verbose_line(cli, &format!("related: {}", d.related()));
            Ok(Outcome { positive: d.related(), report })
        }

        Command::Conjugate { relation, side, states, function } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let side_name = match side {
                Side::Right => "right",
                Side::Left => "left",
            };
            match (states, function) {
                (Some(list), None) => {
                    let space = match side {
                        Side::Right => r.left_space(),
                        Side::Left => r.right_space(),
                    };
                    let mut indices = Vec::new();
                    if !list.trim().is_empty() {
                        for name in list.split(',') {
                            let label = stochrel::space::Label::parse(name);
                            let idx = space.index_of(&label).ok_or_else(|| {
                                anyhow!("state {name:?} is not in the space")
                            })?;
                            indices.push(idx);
                        }
                    }
                    let conj = r.conjugate_set(&indices, *side)?;
                    let out_space = match side {
                        Side::Right => r.right_space(),
                        Side::Left => r.left_space(),
                    };
                    Ok(Outcome {
                        positive: true,
                        report: json!({
                            "command": "conjugate",
                            "side": side_name,
                            "states": io::conjugate_set_to_json(out_space, &conj),
                        }),
                    })
                }
                (None, Some(path)) => {
                    let f = io::real_fn_from_json(&load_json(path)?)?;
                    let conj = r.conjugate_fn(&f, *side)?;
                    Ok(Outcome {
                        positive: true,
                        report: json!({
                            "command": "conjugate",
                            "side": side_name,
                            "function": io::real_fn_to_json(&conj),
                        }),
                    })
                }
                _ => bail!("pass exactly one of --states or --function"),
            }
        }

        Command::Preserve { relation, p1, p2, rprime, oracle } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let p1 = io::kernel_from_json(&load_json(p1)?)?;
            let p2 = io::kernel_from_json(&load_json(p2)?)?;
            let r_prime = match rprime {
                Some(path) => io::relation_from_json(&load_json(path)?)?,
                None => r.clone(),
            };
            if *oracle {
                let mut holds = true;
                let mut first_failure = Value::Null;
                for (i, j) in r.pairs() {
                    if !subset_oracle(&r_prime, &p1.row_dist(i), &p2.row_dist(j))? {
                        holds = false;
                        first_failure = json!([
                            r.left_space().label(i).to_string(),
                            r.right_space().label(j).to_string(),
                        ]);
                        break;
                    }
                }
                verbose_line(cli, &format!("preserves (subset oracle): {holds}"));
                return Ok(Outcome {
                    positive: holds,
                    report: json!({
                        "command": "preserve",
                        "method": "subset_oracle",
                        "preserves": holds,
                        "first_failure": first_failure,
                    }),
                });
            }
            let report = preserves_into(&r, &r_prime, &p1, &p2)?;
            verbose_line(cli, &format!("preserves: {}", report.holds()));
            let mut v = io::preservation_to_json(&r, &report);
            annotate(&mut v, "command", json!("preserve"));
            Ok(Outcome { positive: report.holds(), report: v })
        }

        Command::CtPreserve { relation, q1, q2, oracle } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let q1 = io::rate_kernel_from_json(&load_json(q1)?)?;
            let q2 = io::rate_kernel_from_json(&load_json(q2)?)?;
            if *oracle {
                let holds = ct_subset_test(&r, &q1, &q2)?;
                verbose_line(cli, &format!("preserves (rate subsets): {holds}"));
                return Ok(Outcome {
                    positive: holds,
                    report: json!({
                        "command": "ct-preserve",
                        "method": "rate_subsets",
                        "preserves": holds,
                    }),
                });
            }
            let report = ct_preserves(&r, &q1, &q2)?;
            verbose_line(cli, &format!("preserves: {}", report.holds()));
            let mut v = io::preservation_to_json(&r, &report);
            annotate(&mut v, "command", json!("ct-preserve"));
            Ok(Outcome { positive: report.holds(), report: v })
        }

        Command::Subrelation { relation, p1, p2, max_iters, strategy } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let p1 = io::kernel_from_json(&load_json(p1)?)?;
            let p2 = io::kernel_from_json(&load_json(p2)?)?;
            let trace = subrelation(&r, &p1, &p2, &opts(*strategy, *max_iters))?;
            let nonempty = trace.steps.last().is_some_and(|s| s.is_nontrivial());
            verbose_line(
                cli,
                &format!("rounds: {}, final pairs: {}", trace.rounds(),
                    trace.steps.last().map_or(0, |s| s.pair_count())),
            );
            let mut v = io::trace_to_json(&trace);
            annotate(&mut v, "command", json!("subrelation"));
            Ok(Outcome { positive: nonempty, report: v })
        }

        Command::CtSubrelation { relation, q1, q2, max_iters, strategy } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let q1 = io::rate_kernel_from_json(&load_json(q1)?)?;
            let q2 = io::rate_kernel_from_json(&load_json(q2)?)?;
            let trace = ct_subrelation(&r, &q1, &q2, &opts(*strategy, *max_iters))?;
            let nonempty = trace.steps.last().is_some_and(|s| s.is_nontrivial());
            verbose_line(
                cli,
                &format!("rounds: {}, final pairs: {}", trace.rounds(),
                    trace.steps.last().map_or(0, |s| s.pair_count())),
            );
            let mut v = io::trace_to_json(&trace);
            annotate(&mut v, "command", json!("ct-subrelation"));
            Ok(Outcome { positive: nonempty, report: v })
        }

        Command::PopulationCheck { relation, model1, model2 } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let m1 = io::model_from_json(&load_json(model1)?)?;
            let m2 = io::model_from_json(&load_json(model2)?)?;
            let report = population_check(&r, &m1, &m2)?;
            verbose_line(cli, &format!("preserves: {}", report.holds()));
            let mut v = io::population_report_to_json(&r, &report);
            annotate(&mut v, "command", json!("population-check"));
            Ok(Outcome { positive: report.holds(), report: v })
        }

        Command::StationaryCompare { relation, q1, q2, model1, model2 } => {
            exact_only(cli)?;
            let r = io::relation_from_json(&load_json(relation)?)?;
            let (k1, k2) = match (q1, q2, model1, model2) {
                (Some(a), Some(b), None, None) => (
                    io::rate_kernel_from_json(&load_json(a)?)?,
                    io::rate_kernel_from_json(&load_json(b)?)?,
                ),
                (None, None, Some(a), Some(b)) => (
                    io::model_from_json(&load_json(a)?)?.to_rate_kernel()?,
                    io::model_from_json(&load_json(b)?)?.to_rate_kernel()?,
                ),
                _ => bail!("pass either --q1/--q2 or --model1/--model2"),
            };
            let cmp = compare_stationary(&r, &k1, &k2)?;
            let positive = cmp.related() == Some(true);
            verbose_line(cli, &format!("related: {:?}", cmp.related()));
            let mut v = io::comparison_to_json(&r, &cmp);
            annotate(&mut v, "command", json!("stationary-compare"));
            Ok(Outcome { positive, report: v })
        }

        Command::ReproduceQueueing { lambda1, lambda2, cap, iters } => {
            exact_only(cli)?;
            let l1 = parse_rat(lambda1)?;
            let l2 = parse_rat(lambda2)?;
            let rep = reproduce_queueing(&l1, &l2, *cap, *iters)?;
            let formula_match = rep.per_iterate.iter().all(|c| c.matches());
            for c in &rep.per_iterate {
                verbose_line(
                    cli,
                    &format!(
                        "n={}: {} (safe bound {})",
                        c.n,
                        if c.matches() { "MATCH" } else { "MISMATCH" },
                        c.safe_bound
                    ),
                );
            }
            let mut v = io::queueing_report_to_json(&rep);
            annotate(&mut v, "command", json!("reproduce-queueing"));
            Ok(Outcome { positive: formula_match, report: v })
        }

        Command::AlphaProps { lo, hi, n_max } => {
            exact_only(cli)?;
            if lo > hi {
                bail!("--lo must not exceed --hi");
            }
            let rep = alpha_properties(*lo, *hi, *n_max);
            verbose_line(cli, &format!("violations: {}", rep.violations.len()));
            let mut v = io::alpha_report_to_json(&rep);
            annotate(&mut v, "command", json!("alpha-props"));
            Ok(Outcome { positive: rep.holds(), report: v })
        }
    }
}

fn opts(strategy: Strategy, max_iterations: Option<usize>) -> SubrelationOptions {
    SubrelationOptions {
        strategy: match strategy {
            Strategy::Full => IterationStrategy::FullRescan,
            Strategy::Worklist => IterationStrategy::Worklist,
        },
        max_iterations,
    }
}

fn exact_only(cli: &Cli) -> Result<()> {
    if cli.mode == Mode::Float {
        bail!("this command is exact-only; --mode float is supported by `relate` (and stationary solves fall back automatically on very large spaces)");
    }
    Ok(())
}

fn annotate(v: &mut Value, key: &str, value: Value) {
    if let Some(obj) = v.as_object_mut() {
        obj.insert(key.to_string(), value);
    }
}

fn verbose_line(cli: &Cli, line: &str) {
    if cli.verbose {
        eprintln!("{line}");
    }
}
