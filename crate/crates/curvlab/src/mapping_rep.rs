//! Mapping representations `(G, c)` of a graph Laplacian,
//! `Lf(x) = Σ_δ c(x,δ)(f(x) − f(δx))`.
//!
//! Fields live on the support `{(x,δ) : c(x,δ) > 0}` with the weight
//! `w/2 = c(x,δ)m(x)/2`. Pairs with `c = 0` carry no mass and are dropped, so
//! every operator below is a plain matrix over the support.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, CurvError, Result};
use crate::graph_core::{laplacian, EdgeField, VertexFunction, WeightedGraph};
use crate::graph_curvature::{site_report, solve_site, to_cvec, PencilOptions, CERTIFICATION_TOL};
use crate::linalg::{max_abs, CMat, CVec, RMat};
use crate::par::task_rng;
use crate::report::CurvatureReport;

/// Mapping representation as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub maps: Vec<BTreeMap<String, String>>,
    pub c: Vec<(String, usize, f64)>,
    pub inverse: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingRep {
    graph: WeightedGraph,
    maps: Vec<Vec<usize>>,
    c: RMat,
    inverse: Vec<usize>,
    support: Vec<(usize, usize)>,
    support_index: HashMap<(usize, usize), usize>,
}

/// Flags of the three structural conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    /// `δ∘γ = γ∘δ` for all maps.
    pub commuting: bool,
    /// `c(δx, γ) = c(x, γ)` for all `x, δ, γ`.
    pub invariant_rates: bool,
    /// `δ∘δ = id` for all maps.
    pub involutive: bool,
}

const REP_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-10;
const BALANCE_SAMPLES: u64 = 20;

/// Validate `(G, c, δ ↦ δ⁻¹)` against the graph. `c` is `n × |G|`.
pub fn build_mapping_rep(
    g: &WeightedGraph,
    maps: Vec<Vec<usize>>,
    c: RMat,
    inverse: Vec<usize>,
) -> Result<MappingRep> {
    let n = g.n();
    let k = maps.len();
    if c.nrows() != n || c.ncols() != k || inverse.len() != k {
        return invalid(format!(
            "dimension mismatch: {k} maps, rates {}×{}, {} inverse entries for {n} vertices",
            c.nrows(),
            c.ncols(),
            inverse.len()
        ));
    }
    for (d, map) in maps.iter().enumerate() {
        if map.len() != n || map.iter().any(|&y| y >= n) {
            return invalid(format!("map {d} is not a function on the {n} vertices"));
        }
        if inverse[d] >= k {
            return invalid(format!(
                "inverse of map {d} is out of range ({})",
                inverse[d]
            ));
        }
    }
    if let Some(r) = c.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return invalid(format!("rates must be finite and nonnegative (got {r})"));
    }

    // (a) L = Σ_δ c(x,δ)∇_δ on the basis of indicator functions.
    let mut rep = RMat::zeros(n, n);
    for x in 0..n {
        for d in 0..k {
            rep[(x, x)] += c[(x, d)];
            rep[(x, maps[d][x])] -= c[(x, d)];
        }
    }
    let l = laplacian(g);
    let defect = max_abs(&(&rep - &l));
    if defect > REP_TOL * max_abs(&l).max(1.0) {
        return invalid(format!(
            "property (a) fails: Σ_δ c∇_δ differs from L by {defect:.3e}"
        ));
    }
    let mut induced = RMat::zeros(n, n);
    for x in 0..n {
        for d in 0..k {
            if maps[d][x] != x {
                induced[(x, maps[d][x])] += c[(x, d)] * g.m(x);
            }
        }
    }
    let defect = max_abs(&(&induced - g.weights()));
    if defect > REP_TOL * max_abs(g.weights()).max(1.0) {
        return invalid(format!(
            "weights b(x,y) = Σ_{{δx=y}} c(x,δ)m(x) violated by {defect:.3e}"
        ));
    }

    // (b) δ⁻¹(δx) = x on the support.
    for x in 0..n {
        for d in 0..k {
            if c[(x, d)] > 0.0 && maps[inverse[d]][maps[d][x]] != x {
                return invalid(format!(
                    "property (b) fails: map {} does not undo map {d} at vertex `{}`",
                    inverse[d],
                    g.labels()[x]
                ));
            }
        }
    }

    // (c) detailed balance, tested on random F.
    let w = RMat::from_fn(n, k, |x, d| c[(x, d)] * g.m(x));
    let scale = w.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    for s in 0..BALANCE_SAMPLES {
        let mut rng = task_rng(0x6d61_7070, s);
        let f = RMat::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for x in 0..n {
            for d in 0..k {
                lhs += f[(x, d)] * w[(x, d)];
                rhs += f[(maps[d][x], inverse[d])] * w[(x, d)];
            }
        }
        if (lhs - rhs).abs() > BALANCE_TOL * scale {
            return invalid(format!(
                "property (c) fails: detailed balance defect {:.3e}",
                (lhs - rhs).abs()
            ));
        }
    }

    let support: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| (0..k).map(move |d| (x, d)))
        .filter(|&(x, d)| c[(x, d)] > 0.0)
        .collect();
    let support_index = support.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    Ok(MappingRep {
        graph: g.clone(),
        maps,
        c,
        inverse,
        support,
        support_index,
    })
}

/// Parse the JSON form. Every map must be total.
pub fn build_mapping_rep_from_spec(g: &WeightedGraph, spec: &MappingSpec) -> Result<MappingRep> {
    let index: HashMap<&str, usize> = g
        .labels()
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let lookup = |v: &str| {
        index
            .get(v)
            .copied()
            .ok_or_else(|| CurvError::Invalid(format!("unknown vertex `{v}`")))
    };
    let mut maps = Vec::with_capacity(spec.maps.len());
    for (d, m) in spec.maps.iter().enumerate() {
        let mut map = vec![usize::MAX; g.n()];
        for (from, to) in m {
            map[lookup(from)?] = lookup(to)?;
        }
        if let Some(x) = map.iter().position(|&y| y == usize::MAX) {
            return invalid(format!(
                "map {d} is undefined at vertex `{}`",
                g.labels()[x]
            ));
        }
        maps.push(map);
    }
    let mut c = RMat::zeros(g.n(), maps.len());
    for (v, d, rate) in &spec.c {
        if *d >= maps.len() {
            return invalid(format!(
                "rate refers to map {d}, only {} maps given",
                maps.len()
            ));
        }
        c[(lookup(v)?, *d)] = *rate;
    }
    build_mapping_rep(g, maps, c, spec.inverse.clone())
}

impl MappingRep {
    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }
    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }
    /// `δ(x)`.
    pub fn act(&self, d: usize, x: usize) -> usize {
        self.maps[d][x]
    }
    pub fn c(&self, x: usize, d: usize) -> f64 {
        self.c[(x, d)]
    }
    pub fn inverse(&self, d: usize) -> usize {
        self.inverse[d]
    }
    pub fn w(&self, x: usize, d: usize) -> f64 {
        self.c[(x, d)] * self.graph.m(x)
    }
    /// Pairs `(x, δ)` with `c(x,δ) > 0`, ordered by vertex then map.
    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }
    pub fn support_id(&self, x: usize, d: usize) -> Option<usize> {
        self.support_index.get(&(x, d)).copied()
    }
    /// `2 min{c(x,δ) : c(x,δ) > 0}`.
    pub fn theorem_constant(&self) -> f64 {
        2.0 * self
            .support
            .iter()
            .map(|&(x, d)| self.c(x, d))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_spec(&self) -> MappingSpec {
        let l = self.graph.labels();
        MappingSpec {
            maps: self
                .maps
                .iter()
                .map(|m| {
                    m.iter()
                        .enumerate()
                        .map(|(x, &y)| (l[x].clone(), l[y].clone()))
                        .collect()
                })
                .collect(),
            c: self
                .support
                .iter()
                .map(|&(x, d)| (l[x].clone(), d, self.c(x, d)))
                .collect(),
            inverse: self.inverse.clone(),
        }
    }

    /// `∇f(x,δ) = f(x) − f(δx)` as a `|support| × n` matrix.
    pub fn nabla_matrix(&self) -> RMat {
        let mut out = RMat::zeros(self.support.len(), self.graph.n());
        for (i, &(x, d)) in self.support.iter().enumerate() {
            out[(i, x)] += 1.0;
            out[(i, self.act(d, x))] -= 1.0;
        }
        out
    }

    pub fn nabla(&self, f: &VertexFunction) -> CVec {
        self.nabla_matrix().map(Complex64::from) * f
    }

    /// Permutation part of `𝒥ξ(x,δ) = −conj ξ(δx, δ⁻¹)`: row `(x,δ)` picks `(δx, δ⁻¹)`.
    fn reversal_matrix(&self) -> RMat {
        let s = self.support.len();
        let mut out = RMat::zeros(s, s);
        for (i, &(x, d)) in self.support.iter().enumerate() {
            let j = self
                .support_id(self.act(d, x), self.inverse(d))
                .expect("detailed balance keeps the support closed");
            out[(i, j)] = 1.0;
        }
        out
    }

    pub fn jmap(&self, xi: &CVec) -> CVec {
        -(self.reversal_matrix().map(Complex64::from) * xi.map(|z| z.conj()))
    }

    /// `⟨ξ, η⟩_{w/2}`.
    pub fn inner(&self, xi: &CVec, eta: &CVec) -> Complex64 {
        self.support
            .iter()
            .enumerate()
            .map(|(i, &(x, d))| xi[i].conj() * eta[i] * (self.w(x, d) / 2.0))
            .sum()
    }

    /// `Γ⃗(ξ, η)(x) = ½ Σ_δ c(x,δ) conj ξ(x,δ) η(x,δ)`.
    pub fn vec_gamma(&self, xi: &CVec, eta: &CVec) -> VertexFunction {
        let mut out = CVec::zeros(self.graph.n());
        for (i, &(x, d)) in self.support.iter().enumerate() {
            out[x] += xi[i].conj() * eta[i] * (self.c(x, d) / 2.0);
        }
        out
    }

    /// `V 𝟙_(x,y) = Σ_{δx=y} 𝟙_(x,δ)`, a `|support| × |edges|` matrix.
    pub fn isometry_v(&self) -> RMat {
        let g = &self.graph;
        let mut out = RMat::zeros(self.support.len(), g.edges().len());
        for (i, &(x, d)) in self.support.iter().enumerate() {
            if let Some(e) = g.edge_id(x, self.act(d, x)) {
                out[(i, e)] = 1.0;
            }
        }
        out
    }

    /// Adjoint of [`Self::isometry_v`] for the weights `w/2` and `b/2`.
    pub fn isometry_v_adjoint(&self) -> RMat {
        let g = &self.graph;
        let mut vt = self.isometry_v().transpose();
        for (e, &(x, y)) in g.edges().iter().enumerate() {
            for (i, &(a, d)) in self.support.iter().enumerate() {
                vt[(e, i)] *= self.w(a, d) / g.b(x, y);
            }
        }
        vt
    }

    pub fn apply_v(&self, xi: &EdgeField) -> CVec {
        self.isometry_v().map(Complex64::from) * xi
    }

    /// Exact finite checks of the three conditions.
    pub fn check_conditions(&self) -> Conditions {
        let n = self.graph.n();
        let k = self.maps.len();
        let commuting = (0..k).all(|d| {
            (0..k)
                .all(|e| (0..n).all(|x| self.act(d, self.act(e, x)) == self.act(e, self.act(d, x))))
        });
        let invariant_rates = (0..k)
            .all(|d| (0..k).all(|e| (0..n).all(|x| self.c(self.act(d, x), e) == self.c(x, e))));
        let involutive = (0..k).all(|d| (0..n).all(|x| self.act(d, self.act(d, x)) == x));
        Conditions {
            commuting,
            invariant_rates,
            involutive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingVariant {
    /// `L⃗ξ(x,δ) = Σ_γ c(x,γ)(ξ(x,δ) − ξ(γx,δ))`.
    Commuting,
    /// `L⃗ξ + 2Kζ` with `ζ(x,δ) = ½(ξ(x,δ) + ξ(δx,δ))`.
    Involutive(f64),
    Custom,
}

/// An operator on `ℓ²(X×G, w/2)` with its certification defects.
#[derive(Debug, Clone)]
pub struct MappingHodge {
    rep: MappingRep,
    matrix: CMat,
    variant: MappingVariant,
    intertwining_defect: f64,
    jmap_defect: f64,
}

impl MappingHodge {
    /// Wrap a matrix over [`MappingRep::support`] and measure
    /// `‖L⃗∇ − ∇L‖_max` and `‖L⃗𝒥 − 𝒥L⃗‖_max`.
    pub fn new(rep: &MappingRep, matrix: CMat, variant: MappingVariant) -> Result<Self> {
        let s = rep.support.len();
        if matrix.nrows() != s || matrix.ncols() != s {
            return invalid(format!(
                "operator must be {s}×{s}, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let nabla = rep.nabla_matrix().map(Complex64::from);
        let l = laplacian(&rep.graph).map(Complex64::from);
        let intertwining_defect = max_abs(&(&matrix * &nabla - &nabla * l));
        let r = rep.reversal_matrix().map(Complex64::from);
        let jmap_defect = max_abs(&(matrix.map(|z| z.conj()) * &r - &r * &matrix));
        Ok(MappingHodge {
            rep: rep.clone(),
            matrix,
            variant,
            intertwining_defect,
            jmap_defect,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
    pub fn variant(&self) -> MappingVariant {
        self.variant
    }
    pub fn rep(&self) -> &MappingRep {
        &self.rep
    }
    pub fn defects(&self) -> (f64, f64) {
        (self.intertwining_defect, self.jmap_defect)
    }

    pub fn certified(&self) -> bool {
        let tol = CERTIFICATION_TOL * max_abs(&self.matrix).max(1.0);
        self.intertwining_defect <= tol && self.jmap_defect <= tol
    }

    fn require_certified(&self) -> Result<()> {
        if self.certified() {
            Ok(())
        } else {
            Err(CurvError::Certification(format!(
                "mapping operator not certified: ‖L⃗∇−∇L‖ = {:.3e}, ‖L⃗𝒥−𝒥L⃗‖ = {:.3e}",
                self.intertwining_defect, self.jmap_defect
            )))
        }
    }
}

/// The commuting or involutive construction, after checking its conditions.
pub fn mapping_hodge(rep: &MappingRep, variant: MappingVariant) -> Result<MappingHodge> {
    let cond = rep.check_conditions();
    let mut missing = Vec::new();
    if !cond.commuting {
        missing.push("(a) commuting maps");
    }
    if !cond.invariant_rates {
        missing.push("(b) invariant rates");
    }
    match variant {
        MappingVariant::Commuting => {}
        MappingVariant::Involutive(_) if !cond.involutive => missing.push("(c) involutive maps"),
        MappingVariant::Involutive(_) => {}
        MappingVariant::Custom => {
            return invalid("custom operators are wrapped with MappingHodge::new")
        }
    }
    if !missing.is_empty() {
        return Err(CurvError::Precondition(format!(
            "condition not met: {}",
            missing.join(", ")
        )));
    }
    let s = rep.support.len();
    let mut h = RMat::zeros(s, s);
    for (i, &(x, d)) in rep.support.iter().enumerate() {
        for e in 0..rep.n_maps() {
            let r = rep.c(x, e);
            if r > 0.0 {
                h[(i, i)] += r;
                let j = rep
                    .support_id(rep.act(e, x), d)
                    .expect("invariant rates keep the support closed");
                h[(i, j)] -= r;
            }
        }
        if let MappingVariant::Involutive(k) = variant {
            h[(i, i)] += k;
            h[(
                i,
                rep.support_id(rep.act(d, x), d)
                    .expect("invariant rates keep the support closed"),
            )] += k;
        }
    }
    let op = MappingHodge::new(rep, h.map(Complex64::from), variant)?;
    op.require_certified()?;
    Ok(op)
}

/// Diagonal of `ξ ↦ Γ⃗(ξ)(x)` over the support.
fn gamma_diag(rep: &MappingRep, x: usize) -> DVector<f64> {
    DVector::from_iterator(
        rep.support.len(),
        rep.support
            .iter()
            .map(|&(a, d)| if a == x { rep.c(a, d) / 2.0 } else { 0.0 }),
    )
}

/// Hermitian forms of the intertwining criterion at vertex `x`.
pub fn mapping_intertwining_forms(rep: &MappingRep, h: &CMat, x: usize) -> (CMat, CMat) {
    let g = &rep.graph;
    let mut nx = gamma_diag(rep, x) * g.deg(x);
    for y in g.neighbors(x) {
        nx -= gamma_diag(rep, y) * g.p(x, y);
    }
    let gx = CMat::from_diagonal(&gamma_diag(rep, x).map(Complex64::from));
    let nx = CMat::from_diagonal(&nx.map(Complex64::from));
    let left = (h.adjoint() * &gx + &gx * h - nx) * Complex64::from(0.5);
    (left, gx)
}

pub fn intertwining_curvature_mapping(h: &MappingHodge) -> Result<CurvatureReport> {
    intertwining_curvature_mapping_with(h, &PencilOptions::default())
}

/// Optimal pointwise intertwining constants on `ℓ²(X×G, w/2)`.
pub fn intertwining_curvature_mapping_with(
    h: &MappingHodge,
    opts: &PencilOptions,
) -> Result<CurvatureReport> {
    h.require_certified()?;
    let rep = &h.rep;
    let real = h.matrix.iter().all(|z| z.im == 0.0) && !opts.force_complex;
    let results: Vec<Result<(f64, Option<CVec>)>> = opts.exec.map(rep.graph.n(), |x| {
        let (left, right) = mapping_intertwining_forms(rep, &h.matrix, x);
        if real {
            let (v, w) = solve_site(left.map(|z| z.re), right.map(|z| z.re), opts.truncation)?;
            Ok((v, w.map(|w| to_cvec(&w))))
        } else {
            solve_site(left, right, opts.truncation)
        }
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let cond = rep.check_conditions();
    let guaranteed = match h.variant {
        MappingVariant::Commuting => json!(0.0),
        MappingVariant::Involutive(_) => json!(rep.theorem_constant()),
        MappingVariant::Custom => serde_json::Value::Null,
    };
    let (di, dj) = h.defects();
    Ok(site_report(
        "mapping.intertwining",
        &rep.graph,
        results,
        opts.truncation,
        "xi",
    )
    .tol("certification", CERTIFICATION_TOL)
    .detail("field", json!(if real { "real" } else { "complex" }))
    .detail("variant", serde_json::to_value(h.variant).unwrap())
    .detail("conditions", serde_json::to_value(cond).unwrap())
    .detail("guaranteed", guaranteed)
    .detail("defects", json!({"intertwining": di, "jmap": dj})))
}

/// Pull an operator back to edge fields: `V* L⃗ V`.
pub fn pull_back(rep: &MappingRep, h: &CMat) -> CMat {
    let v = rep.isometry_v().map(Complex64::from);
    let vs = rep.isometry_v_adjoint().map(Complex64::from);
    vs * h * v
}

/// Push an edge operator forward: `V L⃗ V* + κ(1 − VV*)`.
///
/// On `ran V` the pencil is unchanged. When `V` is not onto, the complement
/// contributes `κ − deg(x)/2` at worst, so `κ = K` alone does not carry a
/// bound `K` over; [`complement_constant`] gives a `κ` that does.
pub fn push_forward(rep: &MappingRep, h: &CMat, k: f64) -> CMat {
    let v = rep.isometry_v().map(Complex64::from);
    let vs = rep.isometry_v_adjoint().map(Complex64::from);
    let s = rep.support.len();
    let proj = &v * &vs;
    &v * h * &vs + (CMat::identity(s, s) - proj) * Complex64::from(k)
}

/// `K + ½ max_x deg(x)`: the complement coefficient for which
/// [`push_forward`] preserves an intertwining bound `K`.
pub fn complement_constant(rep: &MappingRep, k: f64) -> f64 {
    let g = rep.graph();
    k + 0.5 * (0..g.n()).map(|x| g.deg(x)).fold(0.0, f64::max)
}

/// The hypercube `{0,1}^d` with `m ≡ 1`, bit flips as maps and `c ≡ κ`.
pub fn hypercube(d: usize, kappa: f64) -> Result<MappingRep> {
    let n = 1usize << d;
    let labels = (0..n)
        .map(|x| format!("{x:0width$b}", width = d.max(1)))
        .collect();
    let mut b = RMat::zeros(n, n);
    for x in 0..n {
        for i in 0..d {
            b[(x, x ^ (1 << i))] = kappa;
        }
    }
    let g = WeightedGraph::from_dense(labels, vec![1.0; n], b)?;
    let maps = (0..d)
        .map(|i| (0..n).map(|x| x ^ (1 << i)).collect())
        .collect();
    build_mapping_rep(&g, maps, RMat::from_element(n, d, kappa), (0..d).collect())
}

/// The cycle `Z_k` with `m ≡ 1`, shifts `±1` and `c ≡ κ`. Needs `k ≥ 3`.
pub fn cycle(k: usize, kappa: f64) -> Result<MappingRep> {
    if k < 3 {
        return invalid("the cycle needs at least 3 vertices");
    }
    let mut b = RMat::zeros(k, k);
    for x in 0..k {
        b[(x, (x + 1) % k)] = kappa;
        b[((x + 1) % k, x)] = kappa;
    }
    let g = WeightedGraph::from_weights(vec![1.0; k], b)?;
    let maps = vec![
        (0..k).map(|x| (x + 1) % k).collect(),
        (0..k).map(|x| (x + k - 1) % k).collect(),
    ];
    build_mapping_rep(&g, maps, RMat::from_element(k, 2, kappa), vec![1, 0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_core::{gradient, inner_edge, tests::random_function};
    use crate::graph_curvature::{intertwining_curvature, Construction, HodgeOperator};
    use crate::linalg::c as cx;

    fn random_field(seed: u64, len: usize) -> CVec {
        let mut rng = task_rng(seed, 7);
        CVec::from_fn(len, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Hypercube with every flip listed twice at half rate, so that `V` is not onto.
    fn doubled_hypercube(d: usize, kappa: f64) -> MappingRep {
        let base = hypercube(d, kappa).unwrap();
        let n = base.graph().n();
        let maps: Vec<Vec<usize>> = (0..2 * d)
            .map(|i| (0..n).map(|x| x ^ (1 << (i % d))).collect())
            .collect();
        build_mapping_rep(
            base.graph(),
            maps,
            RMat::from_element(n, 2 * d, kappa / 2.0),
            (0..2 * d).collect(),
        )
        .unwrap()
    }

    #[test]
    fn examples_build_and_conditions() {
        let h = hypercube(3, 0.7).unwrap();
        assert_eq!(
            h.check_conditions(),
            Conditions {
                commuting: true,
                invariant_rates: true,
                involutive: true
            }
        );
        let z = cycle(5, 1.0).unwrap();
        assert_eq!(
            z.check_conditions(),
            Conditions {
                commuting: true,
                invariant_rates: true,
                involutive: false
            }
        );
    }

    #[test]
    fn wrong_inverse_names_property_b() {
        let z = cycle(5, 1.0).unwrap();
        let maps = z.maps.clone();
        let err = build_mapping_rep(z.graph(), maps, z.c.clone(), vec![0, 0]).unwrap_err();
        assert!(err.to_string().contains("property (b)"), "{err}");
    }

    #[test]
    fn rate_mismatch_names_property_a() {
        let z = cycle(5, 1.0).unwrap();
        let mut c = z.c.clone();
        c[(0, 0)] = 2.0;
        let err = build_mapping_rep(z.graph(), z.maps.clone(), c, vec![1, 0]).unwrap_err();
        assert!(err.to_string().contains("property (a)"), "{err}");
    }

    #[test]
    fn detailed_balance_failure_is_named() {
        // Forward shift split into two half-rate copies, both undone by the
        // backward shift, which only points back at the first copy.
        let z = cycle(3, 1.0).unwrap();
        let fwd: Vec<usize> = (0..3).map(|x| (x + 1) % 3).collect();
        let bwd: Vec<usize> = (0..3).map(|x| (x + 2) % 3).collect();
        let c = RMat::from_row_slice(3, 3, &[0.5, 0.5, 1.0, 0.5, 0.5, 1.0, 0.5, 0.5, 1.0]);
        let err = build_mapping_rep(z.graph(), vec![fwd.clone(), fwd, bwd], c, vec![2, 2, 0])
            .unwrap_err();
        assert!(err.to_string().contains("property (c)"), "{err}");
    }

    #[test]
    fn x_dependent_rate_breaks_invariance() {
        // Path 0–1–2 folded onto itself: reflections about each edge.
        let b = RMat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0]);
        let g = WeightedGraph::from_weights(vec![1.0; 3], b).unwrap();
        let maps = vec![vec![1, 0, 2], vec![0, 2, 1]];
        let c = RMat::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        let rep = build_mapping_rep(&g, maps, c, vec![0, 1]).unwrap();
        let cond = rep.check_conditions();
        assert!(!cond.invariant_rates);
        assert!(cond.involutive);
        assert!(matches!(
            mapping_hodge(&rep, MappingVariant::Commuting),
            Err(CurvError::Precondition(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let rep = hypercube(2, 1.5).unwrap();
        let spec = rep.to_spec();
        let text = serde_json::to_string(&spec).unwrap();
        let back: MappingSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(
            build_mapping_rep_from_spec(rep.graph(), &back).unwrap(),
            rep
        );
    }

    #[test]
    fn v_is_an_isometry_with_lemma_identities() {
        for rep in [
            hypercube(2, 1.0).unwrap(),
            cycle(5, 0.8).unwrap(),
            doubled_hypercube(2, 1.0),
        ] {
            let g = rep.graph();
            let e = g.edges().len();
            let v = rep.isometry_v();
            let vs = rep.isometry_v_adjoint();
            assert!(max_abs(&(&vs * &v - RMat::identity(e, e))) < 1e-12);
            let p = &v * &vs;
            assert!(max_abs(&(&p * &p - &p)) < 1e-12);
            for s in 0..20 {
                let xi = random_field(s, e);
                let eta = random_field(s + 100, e);
                let lhs = rep.inner(&rep.apply_v(&xi), &rep.apply_v(&eta));
                assert!((lhs - inner_edge(g, &xi, &eta)).norm() < 1e-12);

                let f = random_function(s, g.n());
                assert!((rep.apply_v(&gradient(g, &f)) - rep.nabla(&f)).camax() < 1e-12);

                let jxi = crate::graph_curvature::jmap(g, &xi);
                assert!((rep.apply_v(&jxi) - rep.jmap(&rep.apply_v(&xi))).camax() < 1e-12);

                // Γ⃗(ξ, V*ζ) on edges equals the mapping-side ½ Σ c conj(Vξ) ζ.
                let zeta = random_field(s + 200, rep.support().len());
                let pulled = vs.map(Complex64::from) * &zeta;
                let lhs = crate::graph_curvature::vec_gamma(g, &xi, &pulled);
                let rhs = rep.vec_gamma(&rep.apply_v(&xi), &zeta);
                assert!((lhs - rhs).camax() < 1e-12);
            }
            let ones = CVec::from_element(g.n(), cx(1.0));
            assert!(rep.nabla(&ones).camax() == 0.0);
        }
    }

    #[test]
    fn hypercube_involutive_bound() {
        for kappa in [1.0, 0.5] {
            let rep = hypercube(2, kappa).unwrap();
            let h =
                mapping_hodge(&rep, MappingVariant::Involutive(rep.theorem_constant())).unwrap();
            let report = intertwining_curvature_mapping(&h).unwrap();
            assert!(
                (report.bound() - 2.0 * kappa).abs() < 1e-8,
                "{}",
                report.bound()
            );
        }
        let rep = hypercube(3, 1.0).unwrap();
        let h = mapping_hodge(&rep, MappingVariant::Involutive(2.0)).unwrap();
        assert!(intertwining_curvature_mapping(&h).unwrap().bound() >= 2.0 - 1e-9);
    }

    #[test]
    fn cycle_commuting_bound_and_involutive_rejected() {
        let rep = cycle(5, 1.0).unwrap();
        let h = mapping_hodge(&rep, MappingVariant::Commuting).unwrap();
        assert!(intertwining_curvature_mapping(&h).unwrap().bound() >= -1e-9);
        let err = mapping_hodge(&rep, MappingVariant::Involutive(2.0)).unwrap_err();
        assert!(err.to_string().contains("(c)"), "{err}");
    }

    #[test]
    fn pull_back_matches_edge_curvature() {
        for rep in [
            hypercube(2, 1.0).unwrap(),
            cycle(5, 1.0).unwrap(),
            doubled_hypercube(2, 1.0),
        ] {
            let g = rep.graph();
            let variant = if rep.check_conditions().involutive {
                MappingVariant::Involutive(rep.theorem_constant())
            } else {
                MappingVariant::Commuting
            };
            let h = mapping_hodge(&rep, variant).unwrap();
            let mapped = intertwining_curvature_mapping(&h).unwrap().bound();
            let edge_op =
                HodgeOperator::new(g, pull_back(&rep, h.matrix()), Construction::Custom).unwrap();
            assert!(edge_op.certified());
            let edge = intertwining_curvature(g, &edge_op).unwrap().bound();
            assert!(edge >= mapped - 1e-8, "edge {edge} mapped {mapped}");
            if rep.support().len() == g.edges().len() {
                assert!((edge - mapped).abs() < 1e-8, "edge {edge} mapped {mapped}");
            }
        }
    }

    #[test]
    fn push_forward_matches_edge_curvature() {
        for rep in [
            hypercube(2, 1.0).unwrap(),
            doubled_hypercube(2, 1.0),
            cycle(5, 1.0).unwrap(),
        ] {
            let g = rep.graph();
            let variant = if rep.check_conditions().involutive {
                MappingVariant::Involutive(rep.theorem_constant())
            } else {
                MappingVariant::Commuting
            };
            let hm = mapping_hodge(&rep, variant).unwrap();
            let hb =
                HodgeOperator::new(g, pull_back(&rep, hm.matrix()), Construction::Custom).unwrap();
            let edge = intertwining_curvature(g, &hb).unwrap().bound();
            let literal = MappingHodge::new(
                &rep,
                push_forward(&rep, hb.matrix(), edge),
                MappingVariant::Custom,
            )
            .unwrap();
            assert!(literal.certified());
            let literal = intertwining_curvature_mapping(&literal).unwrap().bound();
            let shifted = complement_constant(&rep, edge);
            let pushed = MappingHodge::new(
                &rep,
                push_forward(&rep, hb.matrix(), shifted),
                MappingVariant::Custom,
            )
            .unwrap();
            assert!(pushed.certified());
            let mapped = intertwining_curvature_mapping(&pushed).unwrap().bound();
            assert!((edge - mapped).abs() < 1e-8, "edge {edge} mapped {mapped}");
            if rep.support().len() == g.edges().len() {
                assert!(
                    (edge - literal).abs() < 1e-8,
                    "edge {edge} literal {literal}"
                );
            } else {
                // A field on the complement concentrated at one vertex sees K − deg/2.
                assert!(
                    (literal - (edge - 1.0)).abs() < 1e-8,
                    "edge {edge} literal {literal}"
                );
            }
        }
    }
}
