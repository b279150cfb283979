//! JSON interchange for spaces, relations, distributions, kernels, and
//! reports.
//!
//! Rationals travel as strings `"p/q"` (or bare integers), never as
//! floats, so exactness survives serialization. Labels are strings,
//! integers, or integer arrays. All report serializers emit
//! deterministically ordered output: object keys are sorted and pair
//! lists are lexicographic over state indices.

use serde_json::{json, Value};

use crate::coupling::{CouplingMatrix, StDecision, ViolatingSet};
use crate::ctmc::{ComparisonOutcome, RateKernel, StationaryComparison};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, PreservationReport};
use crate::population::{
    parse_rate, AlphaReport, PopulationModel, PopulationReport, PopulationWitness,
    QueueingReport,
};
use crate::rational::{format_rat, parse_rat, Rat};
use crate::relation::{RealFn, Relation, RelationKind};
use crate::space::{Label, StateSpace};
use crate::subrelation::SubrelationTrace;

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value> {
    v.get(name)
        .ok_or_else(|| Error::BadInput(format!("missing field {name:?}")))
}

/// Parses `"p/q"`, `"p"`, or an integer JSON number. Non-integer numbers
/// are rejected: exact inputs must not contain float literals.
pub fn rat_from_json(v: &Value) -> Result<Rat> {
    match v {
        Value::String(s) => parse_rat(s),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(Rat::from_integer(i.into()))
            } else {
                Err(Error::BadInput(format!(
                    "float literal {n} not allowed in exact mode; write rationals as \"p/q\""
                )))
            }
        }
        other => Err(Error::BadInput(format!("expected a rational, got {other}"))),
    }
}

pub fn rat_to_json(r: &Rat) -> Value {
    Value::String(format_rat(r))
}

fn label_from_json(v: &Value) -> Result<Label> {
    match v {
        Value::String(s) => Ok(Label::parse(s)),
        Value::Number(n) => n
            .as_i64()
            .map(|k| Label::Point(vec![k]))
            .ok_or_else(|| Error::BadInput(format!("label {n} is not an integer"))),
        Value::Array(items) => {
            let coords: Result<Vec<i64>> = items
                .iter()
                .map(|c| {
                    c.as_i64()
                        .ok_or_else(|| Error::BadInput(format!("coordinate {c} is not an integer")))
                })
                .collect();
            Ok(Label::Point(coords?))
        }
        other => Err(Error::BadInput(format!("bad label {other}"))),
    }
}

/// Parses a label array into a state space.
pub fn space_from_json(v: &Value) -> Result<StateSpace> {
    let items = v
        .as_array()
        .ok_or_else(|| Error::BadInput("state space must be an array of labels".into()))?;
    let labels: Result<Vec<Label>> = items.iter().map(label_from_json).collect();
    StateSpace::new(labels?)
}

/// Canonical label strings of a space.
pub fn space_to_json(s: &StateSpace) -> Value {
    Value::Array(s.labels().iter().map(|l| Value::String(l.to_string())).collect())
}

/// Parses a relation: `left` and `right` label arrays plus either a
/// `pairs` index list or a named `kind` with `params`.
pub fn relation_from_json(v: &Value) -> Result<Relation> {
    let left = space_from_json(field(v, "left")?)?;
    let right = space_from_json(field(v, "right")?)?;
    if let Some(pairs) = v.get("pairs") {
        let items = pairs
            .as_array()
            .ok_or_else(|| Error::BadInput("pairs must be an array of [i, j]".into()))?;
        let mut list = Vec::with_capacity(items.len());
        for p in items {
            let pair = p
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::BadInput(format!("bad pair {p}")))?;
            let i = pair[0].as_u64().ok_or_else(|| Error::BadInput("pair index".into()))?;
            let j = pair[1].as_u64().ok_or_else(|| Error::BadInput("pair index".into()))?;
            list.push((i as usize, j as usize));
        }
        return Relation::build(&RelationKind::FromPairs(list), left, right);
    }
    let kind = field(v, "kind")?
        .as_str()
        .ok_or_else(|| Error::BadInput("kind must be a string".into()))?;
    let params = v.get("params").cloned().unwrap_or_else(|| json!({}));
    let kind = match kind {
        "equality" => RelationKind::Equality,
        "full" => RelationKind::Full,
        "epsilon_distance" => {
            RelationKind::EpsilonDistance(rat_from_json(field(&params, "epsilon")?)?)
        }
        "coordinatewise_leq" => {
            let coords = match params.get("coords") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|c| {
                        c.as_u64()
                            .map(|k| k as usize)
                            .ok_or_else(|| Error::BadInput("coords must be integers".into()))
                    })
                    .collect::<Result<Vec<usize>>>()?,
                None => {
                    // default: every shared coordinate
                    let dims = left
                        .point(0)
                        .map(|p| p.len())
                        .unwrap_or(0)
                        .min(right.point(0).map(|p| p.len()).unwrap_or(0));
                    (1..=dims).collect()
                }
                Some(other) => {
                    return Err(Error::BadInput(format!("bad coords {other}")));
                }
            };
            RelationKind::CoordinatewiseLeq(coords)
        }
        "sum_leq" => RelationKind::SumLeq,
        "weak_majorization" => RelationKind::WeakMajorization,
        other => {
            return Err(Error::BadInput(format!(
                "unknown relation kind {other:?}; expected equality, full, epsilon_distance, \
                 coordinatewise_leq, sum_leq, weak_majorization, or explicit pairs"
            )))
        }
    };
    Relation::build(&kind, left, right)
}

/// Parses a distribution: `space` labels and a `mass` array.
pub fn dist_from_json(v: &Value) -> Result<Dist> {
    let space = space_from_json(field(v, "space")?)?;
    let mass = field(v, "mass")?
        .as_array()
        .ok_or_else(|| Error::BadInput("mass must be an array".into()))?
        .iter()
        .map(rat_from_json)
        .collect::<Result<Vec<Rat>>>()?;
    Dist::new(space, mass)
}

/// Float-mode distribution: numbers are taken as `f64`.
pub fn dist_f64_from_json(v: &Value) -> Result<(StateSpace, Vec<f64>)> {
    let space = space_from_json(field(v, "space")?)?;
    let mass = field(v, "mass")?
        .as_array()
        .ok_or_else(|| Error::BadInput("mass must be an array".into()))?
        .iter()
        .map(|m| match m {
            Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| Error::BadInput(format!("bad number {n}"))),
            Value::String(s) => parse_rat(s).map(|r| crate::rational::rat_to_f64(&r)),
            other => Err(Error::BadInput(format!("bad mass {other}"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    if mass.len() != space.len() {
        return Err(Error::BadInput("mass vector length must match the space".into()));
    }
    Ok((space, mass))
}

/// Parses a kernel: `from`, `to`, and row-major `rows`.
pub fn kernel_from_json(v: &Value) -> Result<Kernel> {
    let from = space_from_json(field(v, "from")?)?;
    let to = space_from_json(field(v, "to")?)?;
    let rows = field(v, "rows")?
        .as_array()
        .ok_or_else(|| Error::BadInput("rows must be an array".into()))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| Error::BadInput("each row must be an array".into()))?
                .iter()
                .map(rat_from_json)
                .collect::<Result<Vec<Rat>>>()
        })
        .collect::<Result<Vec<Vec<Rat>>>>()?;
    Kernel::new(from, to, rows)
}

/// Parses a rate kernel: either `q` plus `jump_rows`, or an off-diagonal
/// `rate_matrix` (diagonal zero or the negated row sum).
pub fn rate_kernel_from_json(v: &Value) -> Result<RateKernel> {
    let space = space_from_json(field(v, "space")?)?;
    if let Some(matrix) = v.get("rate_matrix") {
        let rows = matrix
            .as_array()
            .ok_or_else(|| Error::BadInput("rate_matrix must be an array".into()))?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| Error::BadInput("each rate row must be an array".into()))?
                    .iter()
                    .map(rat_from_json)
                    .collect::<Result<Vec<Rat>>>()
            })
            .collect::<Result<Vec<Vec<Rat>>>>()?;
        return RateKernel::from_rate_matrix(space, rows);
    }
    let q = field(v, "q")?
        .as_array()
        .ok_or_else(|| Error::BadInput("q must be an array".into()))?
        .iter()
        .map(rat_from_json)
        .collect::<Result<Vec<Rat>>>()?;
    let jump = kernel_from_json(&json!({
        "from": field(v, "space")?,
        "to": field(v, "space")?,
        "rows": field(v, "jump_rows")?,
    }))?;
    RateKernel::new(space, q, jump)
}

/// Parses a population model: colony count `m`, per-coordinate `box`
/// bounds, and a `rates` map keyed `"i,j"`.
pub fn model_from_json(v: &Value) -> Result<PopulationModel> {
    let m = field(v, "m")?
        .as_u64()
        .ok_or_else(|| Error::BadInput("m must be a positive integer".into()))?
        as usize;
    let bounds = field(v, "box")?
        .as_array()
        .ok_or_else(|| Error::BadInput("box must be an array of [lo, hi]".into()))?
        .iter()
        .map(|b| {
            let pair = b
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| Error::BadInput(format!("bad bound {b}")))?;
            let lo = pair[0].as_i64().ok_or_else(|| Error::BadInput("bound".into()))?;
            let hi = pair[1].as_i64().ok_or_else(|| Error::BadInput("bound".into()))?;
            Ok((lo, hi))
        })
        .collect::<Result<Vec<(i64, i64)>>>()?;
    let rates_obj = field(v, "rates")?
        .as_object()
        .ok_or_else(|| Error::BadInput("rates must be an object keyed \"i,j\"".into()))?;
    let mut rates = std::collections::BTreeMap::new();
    for (key, expr) in rates_obj {
        let (i, j) = key
            .split_once(',')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)))
            .ok_or_else(|| Error::BadInput(format!("rate key {key:?} must be \"i,j\"")))?;
        let src = expr
            .as_str()
            .ok_or_else(|| Error::BadInput(format!("rate {key:?} must be an expression string")))?;
        rates.insert((i, j), parse_rate(src)?);
    }
    PopulationModel::new(m, bounds, rates)
}

fn pair_labels(r: &Relation, i: usize, j: usize) -> Value {
    json!([
        r.left_space().label(i).to_string(),
        r.right_space().label(j).to_string(),
    ])
}

fn coupling_to_json(c: &CouplingMatrix) -> Value {
    let entries: Vec<Value> = c
        .entries()
        .iter()
        .map(|&(i, j, ref m)| {
            json!([
                c.left_space().label(i).to_string(),
                c.right_space().label(j).to_string(),
                format_rat(m),
            ])
        })
        .collect();
    json!({ "entries": entries })
}

fn violation_to_json(left: &StateSpace, right: &StateSpace, v: &ViolatingSet) -> Value {
    json!({
        "states": v.states.iter().map(|&i| left.label(i).to_string()).collect::<Vec<_>>(),
        "conjugate": v.conjugate.iter().map(|&j| right.label(j).to_string()).collect::<Vec<_>>(),
        "mu_mass": format_rat(&v.mu_mass),
        "nu_conjugate_mass": format_rat(&v.nu_conjugate_mass),
    })
}

/// Report for a relatedness decision, witness included.
pub fn decision_to_json(r: &Relation, d: &StDecision) -> Value {
    match d {
        StDecision::Related(c) => json!({
            "related": true,
            "witness": { "coupling": coupling_to_json(c) },
        }),
        StDecision::Unrelated(v) => json!({
            "related": false,
            "witness": {
                "violating_set": violation_to_json(r.left_space(), r.right_space(), v),
            },
        }),
    }
}

/// Report for a preservation check.
pub fn preservation_to_json(r: &Relation, report: &PreservationReport) -> Value {
    json!({
        "preserves": report.holds(),
        "checked_pairs": report.checked_pairs,
        "failures": report.failures.iter().map(|f| json!({
            "pair": pair_labels(r, f.left, f.right),
            "violation": violation_to_json(r.left_space(), r.right_space(), &f.violation),
        })).collect::<Vec<_>>(),
    })
}

/// Full trace report: per-round removals (which, with the initial
/// relation, determine every iterate) plus the final pair list.
pub fn trace_to_json(trace: &SubrelationTrace) -> Value {
    let r0 = &trace.steps[0];
    let steps: Vec<Value> = trace
        .steps
        .iter()
        .enumerate()
        .map(|(n, rel)| json!({ "n": n, "pairs": rel.pair_count() }))
        .collect();
    let removed: Vec<Value> = trace
        .removed
        .iter()
        .map(|round| {
            round
                .iter()
                .map(|rp| {
                    json!({
                        "pair": pair_labels(r0, rp.left, rp.right),
                        "violation": violation_to_json(
                            r0.left_space(),
                            r0.right_space(),
                            &rp.violation,
                        ),
                    })
                })
                .collect::<Vec<_>>()
                .into()
        })
        .collect();
    let last = trace.steps.last().expect("trace never empty");
    json!({
        "converged": trace.converged,
        "rounds": trace.rounds(),
        "steps": steps,
        "removed": removed,
        "final": {
            "nonempty": last.is_nontrivial(),
            "pairs": last.pairs().map(|(i, j)| pair_labels(r0, i, j)).collect::<Vec<_>>(),
        },
    })
}

fn population_witness_to_json(w: &PopulationWitness, left: &StateSpace, right: &StateSpace) -> Value {
    let moves = |subset: &[(usize, usize)]| {
        subset.iter().map(|&(i, j)| json!([i, j])).collect::<Vec<_>>()
    };
    match w {
        PopulationWitness::Upper { subset, lhs, rhs } => json!({
            "kind": "upper",
            "moves": moves(subset),
            "lhs": format_rat(lhs),
            "rhs": format_rat(rhs),
        }),
        PopulationWitness::Lower { subset, lhs, rhs } => json!({
            "kind": "lower",
            "moves": moves(subset),
            "lhs": format_rat(lhs),
            "rhs": format_rat(rhs),
        }),
        PopulationWitness::Rows(v) => json!({
            "kind": "rows",
            "violation": violation_to_json(left, right, v),
        }),
    }
}

/// Report for the population-process preservation check.
pub fn population_report_to_json(r: &Relation, report: &PopulationReport) -> Value {
    json!({
        "preserves": report.holds(),
        "method": match report.method {
            crate::population::PopulationMethod::MoveSubsets => "move_subsets",
            crate::population::PopulationMethod::UniformizedFallback => "uniformized_fallback",
        },
        "checked_pairs": report.checked_pairs,
        "failures": report.failures.iter().map(|f| json!({
            "pair": pair_labels(r, f.left, f.right),
            "witness": population_witness_to_json(&f.witness, r.left_space(), r.right_space()),
        })).collect::<Vec<_>>(),
    })
}

/// Report for a stationary comparison.
pub fn comparison_to_json(r: &Relation, cmp: &StationaryComparison) -> Value {
    let fixed = cmp.trace.steps.last().expect("trace never empty");
    let base = json!({
        "subrelation": {
            "rounds": cmp.trace.rounds(),
            "fixed_point_pairs": fixed.pair_count(),
            "nonempty": fixed.is_nontrivial(),
        },
    });
    let mut obj = base.as_object().cloned().expect("object literal");
    match &cmp.outcome {
        ComparisonOutcome::Inconclusive => {
            obj.insert("conclusive".into(), json!(false));
            obj.insert(
                "note".into(),
                json!("the preserved subrelation is empty; no claim about stationary relatedness"),
            );
        }
        ComparisonOutcome::Conclusive { pi1, pi2, decision, decision_rstar } => {
            obj.insert("conclusive".into(), json!(true));
            obj.insert("related".into(), json!(decision.related()));
            obj.insert("related_under_subrelation".into(), json!(decision_rstar.related()));
            obj.insert("pi1".into(), dist_to_json(pi1));
            obj.insert("pi2".into(), dist_to_json(pi2));
            obj.insert("decision".into(), decision_to_json(r, decision));
        }
    }
    Value::Object(obj)
}

pub fn dist_to_json(d: &Dist) -> Value {
    json!({
        "space": space_to_json(d.space()),
        "mass": d.masses().iter().map(|m| Value::String(format_rat(m))).collect::<Vec<_>>(),
    })
}

/// Per-iterate match table for the queueing reproduction.
pub fn queueing_report_to_json(rep: &QueueingReport) -> Value {
    json!({
        "lambda1": format_rat(&rep.lambda1),
        "lambda2": format_rat(&rep.lambda2),
        "cap": rep.cap,
        "iterations": rep.iterations,
        "all_match": rep.matches_all(),
        "iterates": rep.per_iterate.iter().map(|c| json!({
            "n": c.n,
            "safe_bound": c.safe_bound,
            "match": c.matches(),
            "mismatches": c.mismatches.iter()
                .map(|&(x, y)| json!([[x.0, x.1], [y.0, y.1]]))
                .collect::<Vec<_>>(),
            "outside_safe_region_mismatches": c.outside_mismatches,
        })).collect::<Vec<_>>(),
        "weak_majorization": {
            "bound": rep.weak_majorization.bound,
            "match": rep.weak_majorization.matches(),
            "mismatch_count": rep.weak_majorization.mismatches.len(),
        },
    })
}

/// Pointwise slack-function property report.
pub fn alpha_report_to_json(rep: &AlphaReport) -> Value {
    json!({
        "grid": [rep.grid.0, rep.grid.1],
        "n_max": rep.n_max,
        "points_checked": rep.points_checked,
        "holds": rep.holds(),
        "violations": rep.violations.iter().map(|v| json!({
            "item": v.item,
            "n": v.n,
            "x": [v.x.0, v.x.1],
        })).collect::<Vec<_>>(),
    })
}

/// Conjugate-set report.
pub fn conjugate_set_to_json(space: &StateSpace, states: &[usize]) -> Value {
    Value::Array(states.iter().map(|&i| Value::String(space.label(i).to_string())).collect())
}

/// Conjugate-function report.
pub fn real_fn_to_json(f: &RealFn) -> Value {
    json!({
        "space": space_to_json(f.space()),
        "values": f.values().iter().map(|v| Value::String(format_rat(v))).collect::<Vec<_>>(),
    })
}

/// Parses a nonnegative function: `space` labels and `values`.
pub fn real_fn_from_json(v: &Value) -> Result<RealFn> {
    let space = space_from_json(field(v, "space")?)?;
    let values = field(v, "values")?
        .as_array()
        .ok_or_else(|| Error::BadInput("values must be an array".into()))?
        .iter()
        .map(rat_from_json)
        .collect::<Result<Vec<Rat>>>()?;
    RealFn::new(space, values)
}

/// Stable pretty form with a trailing newline; byte-identical for
/// identical inputs.
pub fn to_pretty_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report values serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::st_related;
    use crate::rational::rat;

    #[test]
    fn rationals_reject_float_literals() {
        assert!(rat_from_json(&json!("2/5")).is_ok());
        assert!(rat_from_json(&json!(3)).is_ok());
        assert!(rat_from_json(&json!(0.4)).is_err());
    }

    #[test]
    fn relation_round_trip_via_pairs() {
        let v = json!({
            "left": ["a", "b"],
            "right": [0, 1, 2],
            "pairs": [[0, 0], [1, 2]],
        });
        let r = relation_from_json(&v).unwrap();
        assert!(r.contains(0, 0) && r.contains(1, 2) && !r.contains(0, 1));
    }

    #[test]
    fn named_kinds_parse() {
        let v = json!({
            "left": [0, 1, 2, 3],
            "right": [0, 1, 2, 3],
            "kind": "epsilon_distance",
            "params": { "epsilon": "1" },
        });
        let r = relation_from_json(&v).unwrap();
        assert!(r.contains(0, 1) && !r.contains(0, 2));
        let v = json!({
            "left": [[0,0],[0,1],[1,0],[1,1]],
            "right": [[0,0],[0,1],[1,0],[1,1]],
            "kind": "coordinatewise_leq",
        });
        let r = relation_from_json(&v).unwrap();
        assert!(r.contains(0, 3) && !r.contains(3, 0));
    }

    #[test]
    fn decision_reports_are_deterministic() {
        let v = json!({
            "left": [0, 1],
            "right": [0, 1],
            "kind": "equality",
        });
        let r = relation_from_json(&v).unwrap();
        let mu = dist_from_json(&json!({ "space": [0, 1], "mass": ["1/2", "1/2"] })).unwrap();
        let d = st_related(&r, &mu, &mu.clone()).unwrap();
        let a = to_pretty_string(&decision_to_json(&r, &d));
        let b = to_pretty_string(&decision_to_json(&r, &d));
        assert_eq!(a, b);
        assert!(a.contains("\"related\": true"));
    }

    #[test]
    fn model_parses_with_rate_map() {
        let v = json!({
            "m": 2,
            "box": [[0, 3], [0, 3]],
            "rates": {
                "0,1": "2/5",
                "1,0": "ind(x[1]>0)",
            },
        });
        let model = model_from_json(&v).unwrap();
        assert_eq!(model.rate_at(&[1, 1], 0, 1), rat(2, 5));
    }

    #[test]
    fn rate_kernel_accepts_matrix_form() {
        let v = json!({
            "space": [0, 1],
            "rate_matrix": [["0", "2/3"], ["1/5", "0"]],
        });
        let q = rate_kernel_from_json(&v).unwrap();
        assert_eq!(q.rate(0, 1), rat(2, 3));
        assert_eq!(q.rate(1, 0), rat(1, 5));
    }
}
