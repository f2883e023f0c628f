//! Bundled cases with known answers.

use serde_json::{json, Value};

use curvlab::graph_core::WeightedGraph;
use curvlab::graph_curvature::{
    bakry_emery_curvature, ge_curvature_search, idle_hodge, intertwining_curvature, two_point_entropic_exact,
    universal_bound, GeSearchConfig,
};
use curvlab::linalg::{c, CMat, CVec, RMat};
use curvlab::mapping_rep::{cycle, hypercube, intertwining_curvature_mapping, mapping_hodge, MappingVariant};
use curvlab::means::Builtin;
use curvlab::optimize::SearchConfig;
use curvlab::qms_core::{commuting_sum, dephasing, depolarizing, fodc, identity, pimsner_popa, projection_family, ESpec};
use curvlab::qms_curvature::{
    be_curvature_qms, ge_search_qms, intertwining_curvature_qms, mlsi_falsify, product_splitting, splitting_hodge_qms,
    QmsSampleConfig,
};
use curvlab::report::{CurvatureReport, Real, SCHEMA};

use crate::{usage, CliResult, Outcome};

/// How `computed` is compared with `expected`.
#[derive(Clone, Copy)]
enum Check {
    Equal(f64),
    AtLeast(f64),
    AtMost(f64),
}

impl Check {
    fn passes(self, computed: f64, expected: f64) -> bool {
        match self {
            Check::Equal(tol) => (computed - expected).abs() <= tol,
            Check::AtLeast(tol) => computed >= expected - tol,
            Check::AtMost(tol) => computed <= expected + tol,
        }
    }

    fn json(self) -> Value {
        match self {
            Check::Equal(t) => json!({"relation": "equal", "tol": t}),
            Check::AtLeast(t) => json!({"relation": "at_least", "tol": t}),
            Check::AtMost(t) => json!({"relation": "at_most", "tol": t}),
        }
    }
}

struct Case {
    name: &'static str,
    about: &'static str,
    run: fn(u64) -> CliResult<(f64, f64, Check, Value)>,
}

const CASES: &[Case] = &[
    Case { name: "complete-graph-n4", about: "BE constant of the uniform complete graph on 4 vertices", run: complete_graph_n4 },
    Case { name: "two-point-0.3", about: "entropic constant of the two-point space, m = (0.3, 0.7)", run: two_point },
    Case { name: "universal-bound-p3", about: "universal lower bound on the path with m = (2, 4, 2)", run: universal_p3 },
    Case { name: "hypercube-3", about: "involutive mapping bound on the 3-cube, κ = 1", run: hypercube_3 },
    Case { name: "cycle-6", about: "commuting mapping bound on the 6-cycle", run: cycle_6 },
    Case { name: "three-vertex", about: "BE constant of the three-vertex example at ε = 0.01", run: three_vertex },
    Case { name: "depolarizing-n2-intertwining", about: "splitting intertwining constant of the qubit depolarizing semigroup", run: depolarizing_n2 },
    Case { name: "depolarizing-ge", about: "sampled entropic constant of the qubit depolarizing semigroup", run: depolarizing_ge },
    Case { name: "qubit-gap", about: "best splitting intertwining constant over K ∈ [½, 1.3] on the qubit", run: qubit_gap },
    Case { name: "mlsi-qubit", about: "relative-entropy decay at rate 2 on the qubit (2.2 must fail)", run: mlsi_qubit },
    Case { name: "dephasing-blocks", about: "BE constant of block dephasing 1 ⊕ 2 against ½ + C/(1+C)", run: dephasing_blocks },
    Case { name: "commuting-projections", about: "product intertwining constant of two commuting projection families", run: commuting_projections },
    Case { name: "pimsner-popa-trace", about: "Pimsner–Popa index of the trace on M_3", run: pimsner_popa_trace },
];

fn report_json(r: CurvatureReport) -> Value {
    serde_json::to_value(r).expect("reports serialise")
}

fn search(seed: u64) -> SearchConfig {
    SearchConfig { samples: 256, steps: 100, seed, ..Default::default() }
}

fn complete_graph_n4(_: u64) -> CliResult<(f64, f64, Check, Value)> {
    let g = WeightedGraph::complete_product(vec![0.25; 4])?;
    let r = bakry_emery_curvature(&g);
    Ok((0.75, r.bound(), Check::Equal(1e-9), report_json(r)))
}

fn two_point(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let (l, w) = (0.3, 0.3 * 0.7);
    let g = WeightedGraph::from_weights(vec![l, 1.0 - l], RMat::from_row_slice(2, 2, &[0.0, w, w, 0.0]))?;
    let cfg = GeSearchConfig { samples: 10_000, seed, ..Default::default() };
    let r = ge_curvature_search(&g, &Builtin::Logarithmic.into(), &cfg);
    Ok((two_point_entropic_exact(l)?, r.bound(), Check::Equal(1e-3), report_json(r)))
}

fn universal_p3(_: u64) -> CliResult<(f64, f64, Check, Value)> {
    let b = RMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let g = WeightedGraph::from_weights(vec![2.0, 4.0, 2.0], b)?;
    let value = universal_bound(&g)?;
    let idle = intertwining_curvature(&g, &idle_hodge(&g)?)?;
    Ok((-5.5, value, Check::Equal(1e-12), json!({"universal_bound": value, "idle": report_json(idle)})))
}

fn hypercube_3(_: u64) -> CliResult<(f64, f64, Check, Value)> {
    let rep = hypercube(3, 1.0)?;
    let r = intertwining_curvature_mapping(&mapping_hodge(&rep, MappingVariant::Involutive(rep.theorem_constant()))?)?;
    Ok((2.0, r.bound(), Check::AtLeast(1e-8), report_json(r)))
}

fn cycle_6(_: u64) -> CliResult<(f64, f64, Check, Value)> {
    let r = intertwining_curvature_mapping(&mapping_hodge(&cycle(6, 1.0)?, MappingVariant::Commuting)?)?;
    Ok((0.0, r.bound(), Check::AtLeast(1e-9), report_json(r)))
}

fn three_vertex(_: u64) -> CliResult<(f64, f64, Check, Value)> {
    let eps = 0.01;
    let b = RMat::from_row_slice(3, 3, &[0.0, 10.0, 0.0, 10.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    let g = WeightedGraph::from_weights(vec![1.0 / eps, 1.0, 1.0 / 20.0], b)?;
    let r = bakry_emery_curvature(&g);
    Ok((1.0, r.bound(), Check::AtLeast(1e-6), report_json(r)))
}

fn depolarizing_n2(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let f = fodc(&depolarizing(2)?)?;
    let r = intertwining_curvature_qms(&splitting_hodge_qms(&f, 5.0 / 6.0)?, &search(seed))?;
    Ok((5.0 / 6.0, r.bound(), Check::Equal(1e-6), report_json(r)))
}

fn depolarizing_ge(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let cfg = QmsSampleConfig { samples: 4000, seed, ..Default::default() };
    let r = ge_search_qms(&depolarizing(2)?, &Builtin::Logarithmic.into(), &cfg)?;
    Ok((1.0, r.bound(), Check::AtLeast(1e-3), report_json(r)))
}

fn qubit_gap(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let f = fodc(&depolarizing(2)?)?;
    let mut rows = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=16 {
        let k = 0.5 + 0.05 * i as f64;
        let b = intertwining_curvature_qms(&splitting_hodge_qms(&f, k)?, &search(seed))?.bound();
        best = best.max(b);
        rows.push(json!({"K": k, "bound": Real(b)}));
    }
    Ok((5.0 / 6.0, best, Check::AtMost(1e-4), json!({"sweep": rows})))
}

fn mlsi_qubit(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let g = depolarizing(2)?;
    let cfg = QmsSampleConfig { samples: 1000, seed, ..Default::default() };
    let at2 = mlsi_falsify(&g, 2.0, &cfg)?;
    let at22 = mlsi_falsify(&g, 2.2, &cfg)?;
    // Largest tested rate that survives, provided the larger one is refuted.
    let computed = match (&at2, &at22) {
        (None, Some(_)) => 2.0,
        (None, None) => 2.2,
        (Some(_), _) => f64::NEG_INFINITY,
    };
    let detail = json!({
        "rate_2": serde_json::to_value(&at2).expect("serialisable"),
        "rate_2.2": serde_json::to_value(&at22).expect("serialisable"),
    });
    Ok((2.0, computed, Check::Equal(0.0), detail))
}

fn dephasing_blocks(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let e = ESpec::blocks(&[1, 2])?;
    let g = dephasing(&e, None)?;
    let cpp = pimsner_popa(&e, None, &search(seed))?.value;
    let r = be_curvature_qms(&g, &search(seed))?;
    let r = r.detail("pimsner_popa", json!(cpp));
    Ok((0.5 + cpp / (1.0 + cpp), r.bound(), Check::AtLeast(1e-4), report_json(r)))
}

fn commuting_projections(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let diag = |d: [f64; 4]| CMat::from_diagonal(&CVec::from_iterator(4, d.iter().map(|&x| c(x))));
    let fams = vec![projection_family(&diag([1.0, 1.0, 0.0, 0.0]), 1.0)?, projection_family(&diag([1.0, 0.0, 1.0, 0.0]), 1.0)?];
    let f = fodc(&commuting_sum(fams, None)?)?;
    let r = intertwining_curvature_qms(&product_splitting(&f, &[1.0, 1.0])?, &search(seed))?;
    Ok((1.0, r.bound(), Check::AtLeast(1e-4), report_json(r)))
}

fn pimsner_popa_trace(seed: u64) -> CliResult<(f64, f64, Check, Value)> {
    let p = pimsner_popa(&ESpec::StateTrace, Some(identity(3)), &search(seed))?;
    let detail = json!({"value": p.value, "exact": p.exact});
    Ok((1.0 / 3.0, p.value, Check::Equal(1e-6), detail))
}

/// Run `case` (or list all cases for `list`).
pub fn run_case(case: &str, seed: u64) -> CliResult<Outcome> {
    if case == "list" {
        let cases: Vec<Value> = CASES.iter().map(|c| json!({"case": c.name, "about": c.about})).collect();
        return Ok(Outcome { json: json!({"schema": SCHEMA, "cases": cases}), falsified: false });
    }
    let c = CASES
        .iter()
        .find(|c| c.name == case)
        .ok_or_else(|| usage(format!("unknown case `{case}` (try `reproduce list`)")))?;
    let (expected, computed, check, report) = (c.run)(seed)?;
    let pass = check.passes(computed, expected);
    Ok(Outcome {
        json: json!({
            "schema": SCHEMA,
            "case": c.name,
            "about": c.about,
            "expected": Real(expected),
            "computed": Real(computed),
            "check": check.json(),
            "pass": pass,
            "report": report,
        }),
        falsified: !pass,
    })
}
