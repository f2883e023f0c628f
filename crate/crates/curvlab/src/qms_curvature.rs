//! Curvature of quantum Markov semigroups.
//!
//! Operator inequalities `M ⪰ K·P` in `M_n` are reduced to scalar pencils by
//! testing against vector states: `M ⪰ K·P` iff `v*Mv ≥ K·v*Pv` for every
//! unit `v ∈ C^n`. For fixed `v` both sides are Hermitian forms in `A` (or
//! `ξ`), so the best `K(v)` is an exact pencil value; the infimum over `v` is
//! sampled. Every pencil is solved twice: over all `A` (or `ξ`) and over
//! self-adjoint `A` (or `𝒥`-real `ξ`).

use nalgebra::SVD;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{invalid, CurvError, Result};
use crate::graph_curvature::{to_cvec, DEFAULT_T_GRID, FALSIFY_TOL};
use crate::linalg::{
    c, eigh, hermitian_defect, kron, max_abs, psd_pinv, unvec_rm, vec_rm, CMat, CVec, RMat,
};
use crate::means::MeanFunction;
use crate::optimize::{
    as_complex, loewner_pencil, sphere_search, PencilOutcome, PencilProblem, SearchConfig,
    DEFAULT_TRUNCATION,
};
use crate::par::{task_rng, Executor};
use crate::qms_core::{
    apply_super, check_state, gell_mann, identity, normalize_state, random_hermitian, random_state,
    tau, Fodc, QmsGenerator,
};
use crate::report::{cmat_json, cvec_json, CurvatureReport, Mode};

/// Absolute tolerance (scaled by `max(1, ‖L⃗‖)`) of the Hodge certification.
pub const QMS_CERTIFICATION_TOL: f64 = 1e-10;
/// Times at which modular covariance is checked.
pub const MODULAR_TIMES: [f64; 2] = [0.3, 1.7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "k", rename_all = "snake_case")]
pub enum QmsConstruction {
    Splitting(f64),
    /// Direct sum of per-family operators, with their constructions.
    Product(Vec<QmsConstruction>),
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HodgeDefects {
    pub intertwining: f64,
    pub jmap: f64,
    pub modular: f64,
}

/// Candidate `L⃗` on `F = M_n^d` together with its certification residuals.
#[derive(Debug, Clone)]
pub struct QmsHodge {
    fodc: Fodc,
    matrix: CMat,
    construction: QmsConstruction,
    defects: HodgeDefects,
}

impl QmsHodge {
    pub fn new(fodc: &Fodc, matrix: CMat, construction: QmsConstruction) -> Result<Self> {
        let dim = fodc.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return invalid(format!(
                "operator must be {dim}×{dim}, got {}×{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let d = fodc.partial_matrix();
        let l = fodc.generator().superoperator();
        let intertwining = max_abs(&(&matrix * d - d * l));
        let s = fodc.jmap_matrix();
        let jmap = max_abs(&(s * matrix.map(|z| z.conj()) - &matrix * s));
        let modular = MODULAR_TIMES
            .iter()
            .map(|&t| {
                let u = fodc.modular_matrix(t);
                max_abs(&(&matrix * &u - &u * &matrix))
            })
            .fold(0.0, f64::max);
        Ok(QmsHodge {
            fodc: fodc.clone(),
            matrix,
            construction,
            defects: HodgeDefects {
                intertwining,
                jmap,
                modular,
            },
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
    pub fn fodc(&self) -> &Fodc {
        &self.fodc
    }
    pub fn construction(&self) -> &QmsConstruction {
        &self.construction
    }
    pub fn defects(&self) -> HodgeDefects {
        self.defects
    }

    pub fn certified(&self) -> bool {
        let tol = QMS_CERTIFICATION_TOL * max_abs(&self.matrix).max(1.0);
        let d = self.defects;
        d.intertwining <= tol && d.jmap <= tol && d.modular <= tol
    }

    fn require_certified(&self) -> Result<()> {
        if self.certified() {
            Ok(())
        } else {
            Err(CurvError::Certification(format!(
                "operator is not certified: {:?}",
                self.defects
            )))
        }
    }

    pub fn apply(&self, xi: &CVec) -> CVec {
        &self.matrix * xi
    }

    /// Heat flow `P⃗_t = e^{−tL⃗}`.
    pub fn semigroup(&self, t: f64) -> Result<CMat> {
        if !(t >= 0.0) {
            return invalid(format!("time must be nonnegative, got {t}"));
        }
        Ok((&self.matrix * c(-t)).exp())
    }
}

/// `D⁺` relative to the GNS inner product on `F`: `(D*ΩD)⁺D*Ω`.
fn partial_pinv(f: &Fodc) -> CMat {
    let d = f.partial_matrix();
    let omega = f.inner_matrix();
    let gram = d.adjoint() * &omega * d;
    let gram = (&gram + gram.adjoint()) * c(0.5);
    psd_pinv(&gram, 1e-12) * d.adjoint() * omega
}

/// `L⃗ = ∂L∂⁺ + 2K(1 − ∂∂⁺)`: the derivation part moves with `L`, its
/// GNS-orthogonal complement is damped at rate `2K`.
pub fn splitting_hodge_qms(f: &Fodc, k: f64) -> Result<QmsHodge> {
    if !k.is_finite() {
        return invalid("K must be finite");
    }
    let d = f.partial_matrix();
    let dp = partial_pinv(f);
    let proj = d * &dp;
    let dim = f.dim();
    let m =
        d * f.generator().superoperator() * &dp + (CMat::identity(dim, dim) - proj) * c(2.0 * k);
    let h = QmsHodge::new(f, m, QmsConstruction::Splitting(k))?;
    h.require_certified()?;
    Ok(h)
}

/// `⊕_k (L⃗_k + Σ_{l≠k} L_l)` for a generator built by
/// [`crate::qms_core::commuting_sum`]; `parts[k]` acts on the calculus of
/// family `k` alone.
pub fn product_hodge(f: &Fodc, parts: &[QmsHodge]) -> Result<QmsHodge> {
    let g = f.generator();
    let m = g.n_families();
    if parts.len() != m {
        return invalid(format!(
            "expected {m} per-family operators, got {}",
            parts.len()
        ));
    }
    let n2 = g.n() * g.n();
    let fam = g.family();
    let supers: Vec<CMat> = (0..m).map(|k| g.family_superoperator(k)).collect();
    let mut out = CMat::zeros(f.dim(), f.dim());
    let mut start = 0;
    for (k, part) in parts.iter().enumerate() {
        let members: Vec<usize> = (0..fam.len()).filter(|&j| fam[j] == k).collect();
        let dk = members.len();
        if members.iter().enumerate().any(|(i, &j)| j != start + i) {
            return invalid("jumps of one family must be contiguous");
        }
        if part.matrix().nrows() != dk * n2 || part.fodc().n() != g.n() {
            return invalid(format!(
                "operator {k} does not match family {k} ({dk} jumps)"
            ));
        }
        let pf = part.fodc().generator();
        if max_abs(&(pf.superoperator() - &supers[k])) > 1e-10 {
            return invalid(format!(
                "operator {k} belongs to a different generator than family {k}"
            ));
        }
        part.require_certified()?;
        let others = (0..m)
            .filter(|&l| l != k)
            .fold(CMat::zeros(n2, n2), |acc, l| acc + &supers[l]);
        let block = part.matrix() + kron(&CMat::identity(dk, dk), &others);
        out.view_mut((start * n2, start * n2), (dk * n2, dk * n2))
            .copy_from(&block);
        start += dk;
    }
    let cons = QmsConstruction::Product(parts.iter().map(|p| p.construction().clone()).collect());
    let h = QmsHodge::new(f, out, cons)?;
    h.require_certified()?;
    Ok(h)
}

/// [`product_hodge`] with a splitting operator at level `ks[k]` on family `k`.
pub fn product_splitting(f: &Fodc, ks: &[f64]) -> Result<QmsHodge> {
    let g = f.generator();
    if ks.len() != g.n_families() {
        return invalid(format!(
            "expected {} levels, got {}",
            g.n_families(),
            ks.len()
        ));
    }
    let parts = (0..ks.len())
        .map(|k| {
            let fk = crate::qms_core::fodc(&g.family_generator(k)?)?;
            splitting_hodge_qms(&fk, ks[k])
        })
        .collect::<Result<Vec<_>>>()?;
    product_hodge(f, &parts)
}

/// `I ⊗ I ⊗ Xᵀ`: the form `ξ ↦ Σ_j tr(X ξ_j*ξ_j)` on `d` stacked blocks.
fn right_mult_form(d: usize, n: usize, x: &CMat) -> CMat {
    kron(&CMat::identity(d * n, d * n), &x.transpose())
}

/// `W` with `v*L(X)v = tr(WX)`.
fn dual_vector_state(l: &CMat, v: &CVec) -> CMat {
    let n = v.len();
    let u = vec_rm(&(v.map(|z| z.conj()) * v.transpose()));
    // Entry (i, j) of the unvectorised product is v*L(E_ij)v = W_ji.
    unvec_rm(&(l.transpose() * u), n).transpose()
}

fn hermitize(m: CMat) -> CMat {
    (&m + m.adjoint()) * c(0.5)
}

/// Forms `(v*Γ₂(A)v, v*Γ(A)v)` on `vec(A)`.
pub fn be_forms(f: &Fodc, v: &CVec) -> (CMat, CMat) {
    let n = f.n();
    let d = f.partial_matrix();
    let l = f.generator().superoperator();
    let g = right_mult_form(f.d(), n, &(v * v.adjoint()));
    let right = hermitize(d.adjoint() * &g * d);
    let nw = right_mult_form(f.d(), n, &dual_vector_state(l, v));
    let left = hermitize((l.adjoint() * &right + &right * l - d.adjoint() * nw * d) * c(0.5));
    (left, right)
}

/// Forms `(v*[½((L⃗ξ|ξ) + (ξ|L⃗ξ) − L(ξ|ξ))]v, v*(ξ|ξ)v)` on `ξ ∈ F`.
pub fn intertwining_forms_qms(f: &Fodc, h: &CMat, v: &CVec) -> (CMat, CMat) {
    let n = f.n();
    let g = right_mult_form(f.d(), n, &(v * v.adjoint()));
    let nw = right_mult_form(
        f.d(),
        n,
        &dual_vector_state(f.generator().superoperator(), v),
    );
    let left = hermitize((h.adjoint() * &g + &g * h - nw) * c(0.5));
    (left, g)
}

/// Real basis (as complex columns) of the self-adjoint matrices, vectorised.
fn hermitian_basis(n: usize) -> CMat {
    let mut cols = vec![vec_rm(&identity(n))];
    cols.extend(gell_mann(n).iter().map(vec_rm));
    CMat::from_columns(&cols)
}

/// Real basis of the fixed space of `𝒥`.
fn jreal_basis(f: &Fodc) -> CMat {
    let dim = f.dim();
    let s = f.jmap_matrix();
    // ξ ↦ ½(ξ + 𝒥ξ) applied to e_k and i·e_k, realified.
    let mut gen = RMat::zeros(2 * dim, 2 * dim);
    for k in 0..dim {
        for (col, phase) in [(k, c(1.0)), (dim + k, Complex64::new(0.0, 1.0))] {
            let mut xi = CVec::zeros(dim);
            xi[k] = phase;
            let fixed = (&xi + s * xi.map(|z| z.conj())) * c(0.5);
            for r in 0..dim {
                gen[(r, col)] = fixed[r].re;
                gen[(dim + r, col)] = fixed[r].im;
            }
        }
    }
    let svd = SVD::new(gen, true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-8 * top)
        .collect();
    CMat::from_fn(dim, kept.len(), |r, k| {
        Complex64::new(u[(r, kept[k])], u[(dim + r, kept[k])])
    })
}

/// Value and witness of the Löwner pencil, optionally restricted to the real
/// span of the columns of `basis`.
fn pencil(left: &CMat, right: &CMat, basis: Option<&CMat>) -> (f64, Option<CVec>) {
    match basis {
        None => {
            let p = PencilProblem::new(left.clone(), right.clone());
            match loewner_pencil(&p).expect("forms are Hermitian by construction") {
                PencilOutcome::Value { value, witness } => (value, Some(witness)),
                PencilOutcome::EmptyRange => (f64::INFINITY, None),
            }
        }
        Some(b) => {
            let re = |m: &CMat| {
                let r = (b.adjoint() * m * b).map(|z| z.re);
                (&r + r.transpose()) * 0.5
            };
            let p = PencilProblem::new(re(left), re(right));
            match loewner_pencil(&p).expect("forms are symmetric by construction") {
                PencilOutcome::Value { value, witness } => (value, Some(b * to_cvec(&witness))),
                PencilOutcome::EmptyRange => (f64::INFINITY, None),
            }
        }
    }
}

fn unit_state(x: &[f64]) -> CVec {
    let v = as_complex(x);
    let nrm = v.norm();
    if nrm > 0.0 {
        v / c(nrm)
    } else {
        v
    }
}

struct Sweep {
    value: f64,
    v: CVec,
    witness: Option<CVec>,
    evaluations: usize,
}

/// Infimum over unit `v` of a per-state pencil.
fn sweep<F>(n: usize, cfg: &SearchConfig, forms: F, basis: Option<&CMat>) -> Sweep
where
    F: Fn(&CVec) -> (CMat, CMat) + Sync + Send,
{
    let obj = |x: &[f64]| {
        let (l, r) = forms(&unit_state(x));
        pencil(&l, &r, basis).0
    };
    let res = sphere_search(obj, 2 * n, cfg);
    let v = unit_state(&res.argmin);
    let (l, r) = forms(&v);
    let (value, witness) = pencil(&l, &r, basis);
    Sweep {
        value: value.min(res.value),
        v,
        witness,
        evaluations: res.evaluations,
    }
}

fn sweep_json(s: &Sweep, f: &Fodc, label: &str, as_matrix: bool) -> serde_json::Value {
    let w = s.witness.as_ref().map(|w| {
        if as_matrix {
            cmat_json(&unvec_rm(w, f.n()))
        } else {
            json!(f.components(w).iter().map(cmat_json).collect::<Vec<_>>())
        }
    });
    json!({"v": cvec_json(&s.v), label: w, "value": crate::report::Real(s.value)})
}

/// Sampled Bakry–Émery constant: the largest `K` with `Γ₂(A) ⪰ KΓ(A)` for all
/// `A`. `bound` is over all `A`; `details.self_adjoint` restricts to `A = A*`.
pub fn be_curvature_qms(g: &QmsGenerator, cfg: &SearchConfig) -> Result<CurvatureReport> {
    let f = crate::qms_core::fodc(g)?;
    let hb = hermitian_basis(g.n());
    let forms = |v: &CVec| be_forms(&f, v);
    let general = sweep(g.n(), cfg, forms, None);
    let sa = sweep(g.n(), cfg, forms, Some(&hb));
    let mut report = CurvatureReport::new(
        "qms.bakry_emery",
        Mode::Sampled {
            samples: cfg.samples,
            seed: cfg.seed,
        },
    )
    .tol("truncation", DEFAULT_TRUNCATION)
    .detail("self_adjoint", sweep_json(&sa, &f, "A", true))
    .detail("evaluations", json!(general.evaluations + sa.evaluations))
    .detail("refine_steps", json!(cfg.steps));
    report.bound = crate::report::Real(general.value);
    report.witness = Some(sweep_json(&general, &f, "A", true));
    Ok(report)
}

/// Sampled optimal intertwining constant of a certified `L⃗`. `bound` is over
/// all `ξ ∈ F`; `details.j_real` restricts to `𝒥ξ = ξ`.
pub fn intertwining_curvature_qms(h: &QmsHodge, cfg: &SearchConfig) -> Result<CurvatureReport> {
    h.require_certified()?;
    let f = h.fodc();
    let jb = jreal_basis(f);
    let forms = |v: &CVec| intertwining_forms_qms(f, h.matrix(), v);
    let general = sweep(f.n(), cfg, forms, None);
    let real = sweep(f.n(), cfg, forms, Some(&jb));
    let d = h.defects();
    let mut report = CurvatureReport::new(
        "qms.intertwining",
        Mode::Sampled {
            samples: cfg.samples,
            seed: cfg.seed,
        },
    )
    .tol("truncation", DEFAULT_TRUNCATION)
    .tol("certification", QMS_CERTIFICATION_TOL)
    .detail("j_real", sweep_json(&real, f, "xi", false))
    .detail(
        "construction",
        serde_json::to_value(h.construction()).expect("serialisable"),
    )
    .detail(
        "defects",
        json!({"intertwining": d.intertwining, "jmap": d.jmap, "modular": d.modular}),
    )
    .detail("evaluations", json!(general.evaluations + real.evaluations))
    .detail("refine_steps", json!(cfg.steps));
    report.bound = crate::report::Real(general.value);
    report.witness = Some(sweep_json(&general, f, "xi", false));
    Ok(report)
}

/// Largest `K` with `½((L⃗ξ|ξ) + (ξ|L⃗ξ) − L(ξ|ξ)) ⪰ K(ξ|ξ)` for this one `ξ`;
/// an upper bound for the optimal intertwining constant of `L⃗`.
pub fn witness_upper_bound(h: &QmsHodge, xi: &CVec) -> Result<f64> {
    let f = h.fodc();
    if xi.len() != f.dim() {
        return invalid(format!("ξ must have length {}", f.dim()));
    }
    let p = f.pairing(xi, xi);
    if max_abs(&p) <= 1e-14 * xi.norm_squared().max(1e-300) {
        return Err(CurvError::Degenerate("(ξ|ξ) = 0".into()));
    }
    let hx = h.apply(xi);
    let g = f.generator();
    let m = hermitize((f.pairing(&hx, xi) + f.pairing(xi, &hx) - g.apply(&p)) * c(0.5));
    let pr = PencilProblem::new(m, hermitize(p));
    match loewner_pencil(&pr)? {
        PencilOutcome::Value { value, .. } => Ok(value),
        PencilOutcome::EmptyRange => Err(CurvError::Degenerate("(ξ|ξ) = 0".into())),
    }
}

/// Precomputed data for checking `GE_Λ(K, ∞)`:
/// `‖∂P_tA‖²_{Λ,ρ} ≤ e^{−2Kt}‖∂A‖²_{Λ,P_t†ρ}`.
#[derive(Debug, Clone)]
pub struct QmsGeProblem {
    fodc: Fodc,
    mean: MeanFunction,
    t_grid: Vec<f64>,
    pt: Vec<CMat>,
    pt_dual: Vec<CMat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QmsGeViolation {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QmsCounterexample {
    #[serde(serialize_with = "ser_cmat")]
    pub a: CMat,
    #[serde(serialize_with = "ser_cmat")]
    pub rho: CMat,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

fn ser_cmat<S: serde::Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
    cmat_json(m).serialize(s)
}

impl QmsGeProblem {
    pub fn new(g: &QmsGenerator, mean: &MeanFunction, t_grid: &[f64]) -> Result<Self> {
        if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return invalid("times must be finite and nonnegative");
        }
        let fodc = crate::qms_core::fodc(g)?;
        let pt = t_grid
            .iter()
            .map(|&t| g.semigroup(t))
            .collect::<Result<Vec<_>>>()?;
        let pt_dual = t_grid
            .iter()
            .map(|&t| g.dual_semigroup(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(QmsGeProblem {
            fodc,
            mean: mean.clone(),
            t_grid: t_grid.to_vec(),
            pt,
            pt_dual,
        })
    }

    pub fn fodc(&self) -> &Fodc {
        &self.fodc
    }

    fn check_inputs(&self, a: &CMat, rho: &CMat) -> Result<()> {
        let n = self.fodc.n();
        if a.nrows() != n || a.ncols() != n || rho.nrows() != n || rho.ncols() != n {
            return invalid(format!("A and ρ must be {n}×{n}"));
        }
        let d = hermitian_defect(a);
        if d > 1e-10 * max_abs(a).max(1.0) {
            return Err(CurvError::NotHermitian(d));
        }
        Ok(())
    }

    /// `(‖∂P_tA‖²_{Λ,ρ}, ‖∂A‖²_{Λ,P_t†ρ})` at each grid time.
    pub fn sides(&self, a: &CMat, rho: &CMat) -> Result<Vec<(f64, f64)>> {
        self.check_inputs(a, rho)?;
        let f = &self.fodc;
        let w_rho = f.density_weights(&self.mean, rho)?;
        let da = f.partial(a);
        (0..self.t_grid.len())
            .map(|i| {
                let lhs = w_rho.norm(&f.partial(&apply_super(&self.pt[i], a)));
                let rho_t = hermitize(apply_super(&self.pt_dual[i], rho));
                let rhs = f.lambda_norm(&self.mean, &rho_t, &da)?;
                Ok((lhs, rhs))
            })
            .collect()
    }

    /// First grid time at which `GE_Λ(K, ∞)` fails for `(A, ρ)`.
    pub fn check(&self, k: f64, a: &CMat, rho: &CMat) -> Result<Option<QmsGeViolation>> {
        for (i, (lhs, r)) in self.sides(a, rho)?.into_iter().enumerate() {
            let t = self.t_grid[i];
            let rhs = (-2.0 * k * t).exp() * r;
            if lhs > rhs * (1.0 + FALSIFY_TOL) + 1e-12 {
                return Ok(Some(QmsGeViolation { t, lhs, rhs }));
            }
        }
        Ok(None)
    }

    /// Largest `K` compatible with the inequality to first order at `t = 0`:
    /// `[2Re⟨∂A, ∂LA⟩_{Λ,ρ} + D_η‖∂A‖²_{Λ,ρ}] / (2‖∂A‖²_{Λ,ρ})` with `η = −L†ρ`.
    pub fn derivative_estimate(&self, a: &CMat, rho: &CMat) -> Result<f64> {
        self.check_inputs(a, rho)?;
        let f = &self.fodc;
        let g = f.generator();
        let w = f.density_weights(&self.mean, rho)?;
        let da = f.partial(a);
        let norm = w.norm(&da);
        if !(norm > 1e-14) {
            return Err(CurvError::Degenerate(format!("‖∂A‖²_Λ,ρ = {norm:.3e}")));
        }
        let cross = w.inner(&da, &f.partial(&g.apply(a))).re;
        let eta = hermitize(-g.apply_dual(rho));
        Ok((2.0 * cross + w.norm_derivative(&da, &eta)) / (2.0 * norm))
    }
}

pub fn ge_check_qms(
    g: &QmsGenerator,
    mean: &MeanFunction,
    k: f64,
    a: &CMat,
    rho: &CMat,
    t_grid: &[f64],
) -> Result<Option<QmsGeViolation>> {
    QmsGeProblem::new(g, mean, t_grid)?.check(k, a, rho)
}

pub fn ge_derivative_estimate(
    g: &QmsGenerator,
    mean: &MeanFunction,
    a: &CMat,
    rho: &CMat,
) -> Result<f64> {
    QmsGeProblem::new(g, mean, &[])?.derivative_estimate(a, rho)
}

/// Sampling budget for the QMS searches.
#[derive(Debug, Clone, PartialEq)]
pub struct QmsSampleConfig {
    pub samples: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub exec: Executor,
}

impl Default for QmsSampleConfig {
    fn default() -> Self {
        QmsSampleConfig {
            samples: 1000,
            seed: 0,
            t_grid: DEFAULT_T_GRID.to_vec(),
            exec: Executor::default(),
        }
    }
}

/// Sample `(A, ρ)`: Gaussian self-adjoint `A`, and `ρ` drawn either
/// anywhere (spectral spread up to four decades) or near `σ`.
pub fn random_pair_qms(n: usize, sigma: &CMat, seed: u64, i: usize) -> (CMat, CMat) {
    let mut rng = task_rng(seed, i as u64);
    let a = random_hermitian(&mut rng, n);
    let rho = if i % 4 == 3 {
        near_state(&mut rng, sigma)
    } else {
        random_state(&mut rng, n)
    };
    (a, rho)
}

fn near_state(rng: &mut impl Rng, sigma: &CMat) -> CMat {
    let n = sigma.nrows();
    let h = random_hermitian(rng, n);
    let h = &h - identity(n) * tau(&(&h * sigma));
    let smin = eigh(sigma).0[0];
    let hmax = eigh(&h)
        .0
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-300);
    let eps = 10f64.powf(rng.random_range(-2.0..0.0)) * 0.9 * smin / hmax;
    normalize_state(&(sigma + h * c(eps)))
}

/// First sampled `(A, ρ, t)` violating `GE_Λ(K, ∞)`, in sample order.
pub fn ge_falsify_qms(
    g: &QmsGenerator,
    mean: &MeanFunction,
    k: f64,
    cfg: &QmsSampleConfig,
) -> Result<Option<QmsCounterexample>> {
    let prob = QmsGeProblem::new(g, mean, &cfg.t_grid)?;
    let found = cfg.exec.map(cfg.samples, |i| {
        let (a, rho) = random_pair_qms(g.n(), g.sigma(), cfg.seed, i);
        prob.check(k, &a, &rho).map(|v| {
            v.map(|v| QmsCounterexample {
                a,
                rho,
                t: v.t,
                lhs: v.lhs,
                rhs: v.rhs,
            })
        })
    });
    for r in found {
        if let Some(cx) = r? {
            return Ok(Some(cx));
        }
    }
    Ok(None)
}

/// Empirical infimum of [`QmsGeProblem::derivative_estimate`] over sampled
/// `(A, ρ)`; an upper estimate of the best `GE_Λ` constant.
pub fn ge_search_qms(
    g: &QmsGenerator,
    mean: &MeanFunction,
    cfg: &QmsSampleConfig,
) -> Result<CurvatureReport> {
    let prob = QmsGeProblem::new(g, mean, &[])?;
    let vals = cfg.exec.map(cfg.samples, |i| {
        let (a, rho) = random_pair_qms(g.n(), g.sigma(), cfg.seed, i);
        match prob.derivative_estimate(&a, &rho) {
            Ok(v) => (v, Some((a, rho))),
            Err(_) => (f64::INFINITY, None),
        }
    });
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .map(|(i, _)| i);
    let mut report = CurvatureReport::new(
        "qms.ge_search",
        Mode::Sampled {
            samples: cfg.samples,
            seed: cfg.seed,
        },
    )
    .detail("mean", json!(mean.name()));
    if let Some(i) = best {
        report.bound = crate::report::Real(vals[i].0);
        if let Some((a, rho)) = &vals[i].1 {
            report.witness = Some(json!({"A": cmat_json(a), "rho": cmat_json(rho)}));
        }
    }
    Ok(report)
}

/// `D(ρ‖σ) = τ(ρ(log ρ − log σ))`, eigenvalues of `ρ` clipped at `1e−14`.
pub fn relative_entropy(rho: &CMat, sigma: &CMat) -> f64 {
    let (lr, ur) = eigh(rho);
    let (ls, us) = eigh(sigma);
    let n = rho.nrows();
    let ent: f64 = lr
        .iter()
        .map(|&l| if l <= 1e-14 { 0.0 } else { l * l.ln() })
        .sum::<f64>();
    // τ(ρ log σ) in σ's eigenbasis.
    let rs = us.adjoint() * rho * &us;
    let cross: f64 = (0..n).map(|i| rs[(i, i)].re * ls[i].ln()).sum();
    let _ = ur;
    (ent - cross) / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlsiViolation {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Check `D(P_t†ρ₀‖σ) ≤ e^{−rate·t} D(ρ₀‖σ)` on the grid; the modified
/// log-Sobolev inequality with constant `rate` (that is, `2K`).
pub fn mlsi_decay_check(
    g: &QmsGenerator,
    rate: f64,
    rho0: &CMat,
    t_grid: &[f64],
) -> Result<Option<MlsiViolation>> {
    let semis = t_grid
        .iter()
        .map(|&t| g.dual_semigroup(t))
        .collect::<Result<Vec<_>>>()?;
    mlsi_check_with(g, rate, rho0, t_grid, &semis)
}

fn mlsi_check_with(
    g: &QmsGenerator,
    rate: f64,
    rho0: &CMat,
    t_grid: &[f64],
    semis: &[CMat],
) -> Result<Option<MlsiViolation>> {
    if rho0.nrows() != g.n() {
        return invalid(format!("state must be {0}×{0}", g.n()));
    }
    check_state(rho0, false)?;
    let d0 = relative_entropy(rho0, g.sigma());
    for (i, &t) in t_grid.iter().enumerate() {
        let rt = hermitize(apply_super(&semis[i], rho0));
        let lhs = relative_entropy(&rt, g.sigma());
        let rhs = (-rate * t).exp() * d0;
        if lhs > rhs * (1.0 + FALSIFY_TOL) + 1e-12 {
            return Ok(Some(MlsiViolation { t, lhs, rhs }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlsiCounterexample {
    #[serde(serialize_with = "ser_cmat")]
    pub rho: CMat,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Sample states (generic, near-pure and near `σ`) and return the first
/// violation of the decay at `rate`.
pub fn mlsi_falsify(
    g: &QmsGenerator,
    rate: f64,
    cfg: &QmsSampleConfig,
) -> Result<Option<MlsiCounterexample>> {
    let semis = cfg
        .t_grid
        .iter()
        .map(|&t| g.dual_semigroup(t))
        .collect::<Result<Vec<_>>>()?;
    let found = cfg.exec.map(cfg.samples, |i| {
        let mut rng = task_rng(cfg.seed, i as u64);
        let rho = if i % 2 == 1 {
            near_state(&mut rng, g.sigma())
        } else {
            random_state(&mut rng, g.n())
        };
        mlsi_check_with(g, rate, &rho, &cfg.t_grid, &semis).map(|v| {
            v.map(|v| MlsiCounterexample {
                rho,
                t: v.t,
                lhs: v.lhs,
                rhs: v.rhs,
            })
        })
    });
    for r in found {
        if let Some(cx) = r? {
            return Ok(Some(cx));
        }
    }
    Ok(None)
}

/// Grid of `per_axis²` unit vectors on the Bloch sphere of `C²`, for
/// exhaustive cross-checks of the sampled infima.
pub fn bloch_grid(per_axis: usize) -> Vec<CVec> {
    let mut out = Vec::with_capacity(per_axis * per_axis);
    for i in 0..per_axis {
        for k in 0..per_axis {
            let th = std::f64::consts::PI * (i as f64 + 0.5) / per_axis as f64;
            let ph = 2.0 * std::f64::consts::PI * k as f64 / per_axis as f64;
            out.push(CVec::from_vec(vec![
                c((th / 2.0).cos()),
                Complex64::from_polar((th / 2.0).sin(), ph),
            ]));
        }
    }
    out
}

/// Minimum of the per-state Bakry–Émery pencil over the given states.
pub fn be_on_states(g: &QmsGenerator, states: &[CVec]) -> Result<f64> {
    let f = crate::qms_core::fodc(g)?;
    Ok(states
        .iter()
        .map(|v| {
            let (l, r) = be_forms(&f, v);
            pencil(&l, &r, None).0
        })
        .fold(f64::INFINITY, f64::min))
}
