//! Curvature of weighted graphs.
//!
//! * Bakry–Émery: the largest `K(x)` with `Γ₂(f)(x) ≥ K Γ(f)(x)` for all `f`.
//! * Intertwining: given a Hodge operator `L⃗` on edge fields with
//!   `L⃗∂ = ∂L` and `L⃗𝒥 = 𝒥L⃗`, the largest `K(x)` with
//!   `½(Γ⃗(L⃗ξ, ξ) + Γ⃗(ξ, L⃗ξ) − LΓ⃗(ξ))(x) ≥ K Γ⃗(ξ)(x)` for all `ξ`.
//! * Gradient estimates `GE_Λ(K, ∞)`: a sampled estimate of the optimal
//!   constant from the `t = 0` derivative, and a direct falsifier.
//!
//! Pointwise constants are computed as Löwner-order pencils
//! ([`loewner_pencil`]): directions outside the range of the right form are
//! kept and eliminated by a Schur complement, so the per-vertex value is the
//! exact optimal constant rather than an upper estimate.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CurvError, Result};
use crate::graph_core::{laplacian, laplacian_pinv, EdgeField, VertexFunction, WeightedGraph};
use crate::linalg::{max_abs, CMat, CVec, RMat};
use crate::means::MeanFunction;
use crate::optimize::{
    loewner_pencil, sampled_search, PencilOutcome, PencilProblem, SearchConfig, DEFAULT_TRUNCATION,
};
use crate::par::{task_rng, Executor};
use crate::report::{cvec_json, rvec_json, CurvatureReport, Mode, Real};

/// Residual allowed in the two Hodge identities, relative to `max(1, ‖L⃗‖)`.
pub const CERTIFICATION_TOL: f64 = 1e-10;
/// Relative slack of the GE falsifier: a violation needs `lhs > rhs(1+tol) + 1e-12`.
pub const FALSIFY_TOL: f64 = 1e-9;
pub const DEFAULT_T_GRID: [f64; 7] = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0];

/// `Γ⃗(ξ, η)(x) = (1/2m(x)) Σ_y b(x,y) conj(ξ(x,y)) η(x,y)`.
pub fn vec_gamma(g: &WeightedGraph, xi: &EdgeField, eta: &EdgeField) -> VertexFunction {
    let mut out = CVec::zeros(g.n());
    for (k, &(x, y)) in g.edges().iter().enumerate() {
        out[x] += xi[k].conj() * eta[k] * (g.b(x, y) / (2.0 * g.m(x)));
    }
    out
}

/// `𝒥ξ(x, y) = −conj(ξ(y, x))`.
pub fn jmap(g: &WeightedGraph, xi: &EdgeField) -> EdgeField {
    CVec::from_iterator(
        g.edges().len(),
        g.edges()
            .iter()
            .map(|&(x, y)| -xi[g.edge_id(y, x).expect("edges are symmetric")].conj()),
    )
}

/// Real matrix `S` with `𝒥ξ = conj(Sξ)`.
fn reversal_matrix(g: &WeightedGraph) -> RMat {
    let e = g.edges().len();
    let mut s = RMat::zeros(e, e);
    for (k, &(x, y)) in g.edges().iter().enumerate() {
        s[(k, g.edge_id(y, x).expect("edges are symmetric"))] = -1.0;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Idle,
    Splitting(f64),
    Custom,
}

/// A linear operator on edge fields together with its certification status.
#[derive(Debug, Clone)]
pub struct HodgeOperator {
    graph: WeightedGraph,
    matrix: CMat,
    construction: Construction,
    intertwining_defect: f64,
    jmap_defect: f64,
}

impl HodgeOperator {
    /// Wrap a dense operator over [`WeightedGraph::edges`] and measure the
    /// defects `‖L⃗∂ − ∂L‖_max` and `‖L⃗𝒥 − 𝒥L⃗‖_max`.
    pub fn new(g: &WeightedGraph, matrix: CMat, construction: Construction) -> Result<Self> {
        let e = g.edges().len();
        if matrix.nrows() != e || matrix.ncols() != e {
            return Err(CurvError::Invalid(format!(
                "Hodge matrix must be {e}×{e} (one row per directed edge), got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let d = g.gradient_matrix().map(Complex64::from);
        let l = laplacian(g).map(Complex64::from);
        let intertwining_defect = max_abs(&(&matrix * &d - &d * l));
        let s = reversal_matrix(g).map(Complex64::from);
        let jmap_defect = max_abs(&(matrix.map(|z| z.conj()) * &s - &s * &matrix));
        Ok(HodgeOperator {
            graph: g.clone(),
            matrix,
            construction,
            intertwining_defect,
            jmap_defect,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
    pub fn construction(&self) -> &Construction {
        &self.construction
    }
    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
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
                "Hodge operator not certified: ‖L⃗∂−∂L‖ = {:.3e}, ‖L⃗𝒥−𝒥L⃗‖ = {:.3e}",
                self.intertwining_defect, self.jmap_defect
            )))
        }
    }

    /// True when the matrix is real, in which case real edge fields suffice.
    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    pub fn apply(&self, xi: &EdgeField) -> EdgeField {
        &self.matrix * xi
    }
}

/// The Hodge Laplacian built from the 1-skeleton:
/// `L⃗ξ(x,y) = −Σ_z (P(y,z) ξ(y,z) + P(x,z) ξ(z,x))`.
pub fn idle_hodge(g: &WeightedGraph) -> Result<HodgeOperator> {
    let e = g.edges().len();
    let mut h = RMat::zeros(e, e);
    for (k, &(x, y)) in g.edges().iter().enumerate() {
        for z in g.neighbors(y) {
            h[(k, g.edge_id(y, z).unwrap())] -= g.p(y, z);
        }
        for z in g.neighbors(x) {
            h[(k, g.edge_id(z, x).unwrap())] -= g.p(x, z);
        }
    }
    let op = HodgeOperator::new(g, h.map(Complex64::from), Construction::Idle)?;
    op.require_certified()?;
    Ok(op)
}

/// `L⃗(∂f + η) = ∂Lf + 2Kη` for `η ⊥ ran ∂`; as a matrix
/// `∂∂* + 2K(1 − ∂L⁺∂*)`.
pub fn splitting_hodge(g: &WeightedGraph, k: f64) -> Result<HodgeOperator> {
    let d = g.gradient_matrix();
    let ds = g.gradient_adjoint_matrix();
    let e = g.edges().len();
    let proj = &d * laplacian_pinv(g) * &ds;
    let h = &d * &ds + (RMat::identity(e, e) - proj) * (2.0 * k);
    let op = HodgeOperator::new(g, h.map(Complex64::from), Construction::Splitting(k))?;
    op.require_certified()?;
    Ok(op)
}

/// Diagonal of the form `ξ ↦ Γ⃗(ξ)(x)`.
fn gamma_diag(g: &WeightedGraph, x: usize) -> DVector<f64> {
    DVector::from_iterator(
        g.edges().len(),
        g.edges().iter().map(|&(a, y)| {
            if a == x {
                g.b(a, y) / (2.0 * g.m(a))
            } else {
                0.0
            }
        }),
    )
}

/// Diagonal of the form `ξ ↦ (LΓ⃗(ξ))(x)`.
fn l_gamma_diag(g: &WeightedGraph, x: usize) -> DVector<f64> {
    let mut out = gamma_diag(g, x) * g.deg(x);
    for y in g.neighbors(x) {
        out -= gamma_diag(g, y) * g.p(x, y);
    }
    out
}

/// Options for the per-vertex pencils.
#[derive(Debug, Clone, Copy)]
pub struct PencilOptions {
    pub truncation: f64,
    /// `None` picks real fields when the operator is real.
    pub force_complex: bool,
    pub exec: Executor,
}

impl Default for PencilOptions {
    fn default() -> Self {
        PencilOptions {
            truncation: DEFAULT_TRUNCATION,
            force_complex: false,
            exec: Executor::default(),
        }
    }
}

pub(crate) fn solve_site<T: ComplexField<RealField = f64>>(
    left: DMatrix<T>,
    right: DMatrix<T>,
    truncation: f64,
) -> Result<(f64, Option<DVector<T>>)> {
    let p = PencilProblem {
        left,
        right,
        truncation,
    };
    Ok(match loewner_pencil(&p)? {
        PencilOutcome::Value { value, witness } => (value, Some(witness)),
        PencilOutcome::EmptyRange => (f64::INFINITY, None),
    })
}

pub(crate) fn to_cvec<T: ComplexField<RealField = f64>>(v: &DVector<T>) -> CVec {
    CVec::from_iterator(
        v.len(),
        v.iter()
            .map(|z| Complex64::new(z.clone().real(), z.clone().imaginary())),
    )
}

pub(crate) fn site_report(
    kind: &str,
    g: &WeightedGraph,
    results: Vec<(f64, Option<CVec>)>,
    truncation: f64,
    witness_label: &str,
) -> CurvatureReport {
    let sites = g
        .labels()
        .iter()
        .cloned()
        .zip(results.iter().map(|r| r.0))
        .collect();
    let mut report = CurvatureReport::new(kind, Mode::ExactPencil)
        .with_sites(sites)
        .tol("truncation", truncation);
    let best = (0..results.len())
        .filter(|&x| results[x].1.is_some())
        .min_by(|&a, &b| results[a].0.total_cmp(&results[b].0));
    if let Some(x) = best {
        report.witness = Some(json!({
            "site": g.labels()[x],
            witness_label: cvec_json(results[x].1.as_ref().unwrap()),
        }));
    }
    report
}

/// Optimal pointwise Bakry–Émery constants.
pub fn bakry_emery_curvature(g: &WeightedGraph) -> CurvatureReport {
    bakry_emery_curvature_with(g, &PencilOptions::default())
}

pub fn bakry_emery_curvature_with(g: &WeightedGraph, opts: &PencilOptions) -> CurvatureReport {
    let d = g.gradient_matrix();
    let l = laplacian(g);
    let results = opts.exec.map(g.n(), |x| {
        let gx = RMat::from_diagonal(&gamma_diag(g, x));
        let nx = RMat::from_diagonal(&l_gamma_diag(g, x));
        let right = d.transpose() * &gx * &d;
        let left = (l.transpose() * &right + &right * &l - d.transpose() * nx * &d) * 0.5;
        let (v, w) =
            solve_site(left, right, opts.truncation).expect("forms are symmetric by construction");
        (v, w.map(|w| to_cvec(&w)))
    });
    site_report("graph.bakry_emery", g, results, opts.truncation, "f")
}

/// Hermitian forms of the intertwining criterion at vertex `x`.
pub fn intertwining_forms(g: &WeightedGraph, h: &CMat, x: usize) -> (CMat, CMat) {
    let gx = CMat::from_diagonal(&gamma_diag(g, x).map(Complex64::from));
    let nx = CMat::from_diagonal(&l_gamma_diag(g, x).map(Complex64::from));
    let left = (h.adjoint() * &gx + &gx * h - nx) * Complex64::from(0.5);
    (left, gx)
}

/// Optimal pointwise intertwining constants for a certified operator.
pub fn intertwining_curvature(g: &WeightedGraph, h: &HodgeOperator) -> Result<CurvatureReport> {
    intertwining_curvature_with(g, h, &PencilOptions::default())
}

pub fn intertwining_curvature_with(
    g: &WeightedGraph,
    h: &HodgeOperator,
    opts: &PencilOptions,
) -> Result<CurvatureReport> {
    if h.graph() != g {
        return Err(CurvError::Invalid(
            "Hodge operator belongs to a different graph".into(),
        ));
    }
    h.require_certified()?;
    let real = h.is_real() && !opts.force_complex;
    let results: Vec<Result<(f64, Option<CVec>)>> = opts.exec.map(g.n(), |x| {
        let (left, right) = intertwining_forms(g, h.matrix(), x);
        if real {
            let (v, w) = solve_site(left.map(|z| z.re), right.map(|z| z.re), opts.truncation)?;
            Ok((v, w.map(|w| to_cvec(&w))))
        } else {
            let (v, w) = solve_site(left, right, opts.truncation)?;
            Ok((v, w))
        }
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let (di, dj) = h.defects();
    Ok(
        site_report("graph.intertwining", g, results, opts.truncation, "xi")
            .tol("certification", CERTIFICATION_TOL)
            .detail("field", json!(if real { "real" } else { "complex" }))
            .detail(
                "construction",
                serde_json::to_value(h.construction()).unwrap(),
            )
            .detail("defects", json!({"intertwining": di, "jmap": dj})),
    )
}

/// `−3/2 − 1/P_min`, valid when every vertex has `deg ≤ 1`.
pub fn universal_bound(g: &WeightedGraph) -> Result<f64> {
    for x in 0..g.n() {
        let d = g.deg(x);
        if d > 1.0 + 1e-12 {
            return Err(CurvError::Precondition(format!(
                "vertex `{}` has deg = {d} > 1",
                g.labels()[x]
            )));
        }
    }
    let p_min = g
        .edges()
        .iter()
        .map(|&(x, y)| g.p(x, y))
        .fold(f64::INFINITY, f64::min);
    if !p_min.is_finite() {
        return Err(CurvError::Precondition("graph has no edges".into()));
    }
    Ok(-1.5 - 1.0 / p_min)
}

/// Precomputed data for gradient-estimate evaluations on one graph.
#[derive(Debug, Clone)]
pub struct GeProblem {
    g: WeightedGraph,
    l: RMat,
    mean: MeanFunction,
}

impl GeProblem {
    pub fn new(g: &WeightedGraph, mean: &MeanFunction) -> Self {
        GeProblem {
            g: g.clone(),
            l: laplacian(g),
            mean: mean.clone(),
        }
    }

    fn weighted_norm(&self, f: &DVector<f64>, rho: &DVector<f64>) -> f64 {
        self.g
            .edges()
            .iter()
            .map(|&(x, y)| {
                0.5 * self.g.b(x, y) * self.mean.eval(rho[x], rho[y]) * (f[x] - f[y]).powi(2)
            })
            .sum()
    }

    /// The two sides of the gradient estimate at time `t`, without the
    /// factor `e^{-2Kt}`: `⟨∂P_tf, Λ(ρ⊗ρ)∂P_tf⟩` and `⟨∂f, Λ(P_tρ⊗P_tρ)∂f⟩`.
    pub fn sides(&self, f: &DVector<f64>, rho: &DVector<f64>, pt: &RMat) -> (f64, f64) {
        (
            self.weighted_norm(&(pt * f), rho),
            self.weighted_norm(f, &(pt * rho)),
        )
    }

    /// Largest `K` consistent with the derivative at `t = 0` of the gradient
    /// estimate at `(f, ρ)`.
    pub fn rate_estimate(&self, f: &DVector<f64>, rho: &DVector<f64>) -> Result<f64> {
        let g = &self.g;
        if rho.iter().any(|&r| !(r > 0.0)) {
            return Err(CurvError::Invalid(
                "density must be strictly positive".into(),
            ));
        }
        let lf = &self.l * f;
        let eta = -(&self.l * rho);
        let (mut cross, mut drift, mut norm) = (0.0, 0.0, 0.0);
        for &(x, y) in g.edges() {
            let w = 0.5 * g.b(x, y);
            let df = f[x] - f[y];
            let lam = self.mean.eval(rho[x], rho[y]);
            let (p1, p2) = self.mean.partials(rho[x], rho[y])?;
            cross += w * (lf[x] - lf[y]) * lam * df;
            drift += w * df * df * (p1 * eta[x] + p2 * eta[y]);
            norm += w * lam * df * df;
        }
        if norm <= 1e-14 {
            return Err(CurvError::Degenerate("‖∂f‖²_{Λ,ρ} vanishes".into()));
        }
        Ok((2.0 * cross + drift) / (2.0 * norm))
    }

    /// `inf_f` of [`Self::rate_estimate`] at fixed `ρ`, solved exactly as a
    /// pencil in `f`; returns the value and a minimising `f`.
    pub fn rate_infimum(&self, rho: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let g = &self.g;
        if rho.iter().any(|&r| !(r > 0.0)) {
            return Err(CurvError::Invalid(
                "density must be strictly positive".into(),
            ));
        }
        let eta = -(&self.l * rho);
        let d = g.gradient_matrix();
        let e = g.edges().len();
        let mut lam = DVector::zeros(e);
        let mut drift = DVector::zeros(e);
        for (k, &(x, y)) in g.edges().iter().enumerate() {
            let w = 0.5 * g.b(x, y);
            let (p1, p2) = self.mean.partials(rho[x], rho[y])?;
            lam[k] = w * self.mean.eval(rho[x], rho[y]);
            drift[k] = w * (p1 * eta[x] + p2 * eta[y]);
        }
        let a = d.transpose() * RMat::from_diagonal(&lam) * &d;
        let b = d.transpose() * RMat::from_diagonal(&drift) * &d;
        let left = (self.l.transpose() * &a + &a * &self.l + b) * 0.5;
        let left = (&left + left.transpose()) * 0.5;
        match crate::optimize::pencil_min_eig(&PencilProblem::new(left, a))? {
            PencilOutcome::Value { value, witness } => Ok((value, witness)),
            PencilOutcome::EmptyRange => Err(CurvError::Degenerate("graph has no edges".into())),
        }
    }
}

/// See [`GeProblem::rate_estimate`].
pub fn ge_rate_estimate(
    g: &WeightedGraph,
    mean: &MeanFunction,
    f: &[f64],
    rho: &[f64],
) -> Result<f64> {
    GeProblem::new(g, mean).rate_estimate(
        &DVector::from_column_slice(f),
        &DVector::from_column_slice(rho),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeSearchConfig {
    pub samples: usize,
    pub seed: u64,
    pub refine_steps: usize,
    pub exec: Executor,
}

impl Default for GeSearchConfig {
    fn default() -> Self {
        GeSearchConfig {
            samples: 1000,
            seed: 0,
            refine_steps: 200,
            exec: Executor::default(),
        }
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Sampled infimum of the GE rate estimate over `(f, ρ)`. Each evaluated
/// pair certifies that the optimal constant is at most its estimate, so the
/// reported bound is an upper estimate.
///
/// For fixed `ρ` the estimate is a Rayleigh quotient in `f`, so the inner
/// infimum is solved exactly; only `log ρ` is sampled and refined.
pub fn ge_curvature_search(
    g: &WeightedGraph,
    mean: &MeanFunction,
    cfg: &GeSearchConfig,
) -> CurvatureReport {
    let n = g.n();
    let prob = GeProblem::new(g, mean);
    // Λ is 1-homogeneous, so ρ and cρ give the same value: centre log ρ.
    let project = |mut x: Vec<f64>| {
        center(&mut x);
        x.iter_mut().for_each(|v| *v = v.clamp(-40.0, 40.0));
        x
    };
    let objective = |x: &[f64]| {
        let rho = DVector::from_iterator(n, x.iter().map(|v| v.exp()));
        prob.rate_infimum(&rho)
            .map(|r| r.0)
            .unwrap_or(f64::INFINITY)
    };
    let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
        use rand::Rng;
        let scale: f64 = rng.random_range(0.0..3.0);
        (0..n)
            .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect()
    };
    let sc = SearchConfig {
        samples: cfg.samples,
        steps: cfg.refine_steps,
        seed: cfg.seed,
        exec: cfg.exec,
    };
    let r = sampled_search(objective, sample, project, &sc);
    let rho = DVector::from_iterator(n, r.argmin.iter().map(|v| v.exp()));
    let f = prob
        .rate_infimum(&rho)
        .map(|p| p.1.as_slice().to_vec())
        .unwrap_or_default();
    let mut report = CurvatureReport::new(
        "graph.ge_search",
        Mode::Sampled {
            samples: cfg.samples,
            seed: cfg.seed,
        },
    );
    report.bound = Real(r.value);
    report.witness = Some(json!({"f": rvec_json(&f), "rho": rvec_json(rho.as_slice())}));
    report
        .detail("mean", json!(mean.name()))
        .detail("evaluations", json!(r.evaluations))
        .detail("refine_steps", json!(cfg.refine_steps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsifyConfig {
    pub samples: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub exec: Executor,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            samples: 1000,
            seed: 0,
            t_grid: DEFAULT_T_GRID.to_vec(),
            exec: Executor::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphCounterexample {
    pub f: Vec<f64>,
    pub rho: Vec<f64>,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

fn random_pair(n: usize, seed: u64, i: usize) -> (DVector<f64>, DVector<f64>) {
    use rand::Rng;
    let mut rng = task_rng(seed, i as u64);
    let scale: f64 = rng.random_range(0.0..3.0);
    let f = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let rho = DVector::from_fn(n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (scale * z).exp()
    });
    (f, rho)
}

/// Search for `(f, ρ, t)` violating `GE_Λ(K, ∞)`; returns the first one in
/// sample order.
pub fn ge_falsify(
    g: &WeightedGraph,
    mean: &MeanFunction,
    k: f64,
    cfg: &FalsifyConfig,
) -> Result<Option<GraphCounterexample>> {
    let prob = GeProblem::new(g, mean);
    let semigroups = cfg
        .t_grid
        .iter()
        .map(|&t| crate::graph_core::heat_semigroup(g, t))
        .collect::<Result<Vec<_>>>()?;
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < cfg.samples {
        let len = CHUNK.min(cfg.samples - start);
        let found = cfg.exec.map(len, |j| {
            let (f, rho) = random_pair(g.n(), cfg.seed, start + j);
            for (ti, &t) in cfg.t_grid.iter().enumerate() {
                let (lhs, r) = prob.sides(&f, &rho, &semigroups[ti]);
                let rhs = (-2.0 * k * t).exp() * r;
                if lhs > rhs * (1.0 + FALSIFY_TOL) + 1e-12 {
                    return Some(GraphCounterexample {
                        f: f.as_slice().to_vec(),
                        rho: rho.as_slice().to_vec(),
                        t,
                        lhs,
                        rhs,
                    });
                }
            }
            None
        });
        if let Some(c) = found.into_iter().flatten().next() {
            return Ok(Some(c));
        }
        start += len;
    }
    Ok(None)
}

/// Exact entropic curvature of the two-point space with
/// `m = (λ, 1−λ)`, `b = λ(1−λ)`:
/// `½ + inf_β Λ_log(λ(1+β), (1−λ)(1−β)) / (1−β²)`.
pub fn two_point_entropic_exact(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(CurvError::Invalid(format!(
            "λ must lie in (0, 1) (got {lambda})"
        )));
    }
    let log = MeanFunction::from(crate::means::Builtin::Logarithmic);
    // β = tanh(u) keeps the search away from the endpoints.
    let phi = |u: f64| {
        let beta = u.tanh();
        let sech2 = 1.0 / u.cosh().powi(2);
        let (a, b) = (lambda * (1.0 + beta), (1.0 - lambda) * (1.0 - beta));
        if a <= 0.0 || b <= 0.0 || sech2 <= 0.0 {
            return f64::INFINITY;
        }
        log.eval(a, b) / sech2
    };
    let (lo, hi, steps) = (-18.0, 18.0, 3600);
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + h * i as f64)
        .min_by(|a, b| phi(*a).total_cmp(&phi(*b)))
        .expect("grid is nonempty");
    let (mut a, mut b) = (best - h, best + h);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - gr * (b - a), a + gr * (b - a));
    while b - a > 1e-12 {
        if phi(c) < phi(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - gr * (b - a);
        d = a + gr * (b - a);
    }
    let v = phi(0.5 * (a + b)).min(phi(best));
    Ok(0.5 + v)
}
