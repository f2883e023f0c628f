//! Quantum Markov semigroups on `M_n` that are GNS-symmetric with respect to
//! a faithful state `σ`, given in Alicki form
//! `L(A) = Σ_j e^{−ω_j/2}(V_j*[V_j, A] − [V_j*, A]V_j)`.
//!
//! Conventions:
//! * `τ` is the normalized trace, so states have `tr ρ = n`.
//! * Superoperators are `n² × n²` matrices acting on row-major vectorised
//!   matrices ([`vec_rm`]); `A ↦ XAY` is [`sandwich`]`(X, Y)`.
//! * Tangent vectors `ξ ∈ F = M_n^d` are stacked row-major blocks of length
//!   `d·n²`, block `j` belonging to jump `j`.
//! * The pairing is `(ξ|η) = Σ_j ξ_j*η_j`, which makes `Γ(A) = (∂A|∂A)` hold
//!   for `∂_j A = e^{−ω_j/4}[V_j, A]`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, CurvError, Result};
use crate::linalg::{
    c, eigh, hermitian_defect, kron, max_abs, psd_pinv, sandwich, unvec_rm, vec_rm, CMat, CVec, I,
};
use crate::means::{divided_difference, MeanFunction, Slot};
use crate::optimize::{as_complex, sphere_search, SearchConfig};
use crate::par::task_rng;
use crate::report::{cmat_json, parse_cmat};

/// Tolerance of the Alicki conditions, relative to `max(1, ‖V‖)`.
pub const ALICKI_TOL: f64 = 1e-10;
/// Largest allowed `‖[v, w]‖` between jumps of different commuting families.
pub const COMMUTATOR_TOL: f64 = 1e-11;
const STATE_TOL: f64 = 1e-12;

/// `τ(A) = tr(A)/n`.
pub fn tau(a: &CMat) -> Complex64 {
    a.trace() / c(a.nrows() as f64)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix unit `E_ij`.
pub fn unit(n: usize, i: usize, j: usize) -> CMat {
    let mut e = CMat::zeros(n, n);
    e[(i, j)] = c(1.0);
    e
}

/// Permutation taking `vec(X)` to `vec(Xᵀ)`.
pub fn transpose_perm(n: usize) -> CMat {
    let mut p = CMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            p[(j * n + i, i * n + j)] = c(1.0);
        }
    }
    p
}

/// `τ`-adjoint of a superoperator: `τ(T(A)B) = τ(A T†(B))`.
pub fn tau_adjoint(t: &CMat) -> CMat {
    let n = (t.nrows() as f64).sqrt().round() as usize;
    let p = transpose_perm(n);
    &p * t.transpose() * &p
}

pub fn apply_super(t: &CMat, a: &CMat) -> CMat {
    unvec_rm(&(t * vec_rm(a)), a.nrows())
}

/// Choi matrix `Σ_ij E_ij ⊗ T(E_ij)`.
pub fn choi(t: &CMat) -> CMat {
    let n = (t.nrows() as f64).sqrt().round() as usize;
    let mut out = CMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let img = t.column(i * n + j);
            for k in 0..n {
                for l in 0..n {
                    out[(i * n + k, j * n + l)] = img[k * n + l];
                }
            }
        }
    }
    out
}

/// Smallest eigenvalue of the Choi matrix; `≥ −1e−10` means completely positive.
pub fn choi_min_eigenvalue(t: &CMat) -> f64 {
    eigh(&choi(t)).0[0]
}

/// Check that `ρ` is a density for `τ`: Hermitian, `τ(ρ) = 1`, and positive
/// (definite when `definite`).
pub fn check_state(rho: &CMat, definite: bool) -> Result<()> {
    if !rho.is_square() {
        return invalid("state must be a square matrix");
    }
    let d = hermitian_defect(rho);
    if d > STATE_TOL * max_abs(rho).max(1.0) {
        return Err(CurvError::NotHermitian(d));
    }
    let t = tau(rho).re;
    if (t - 1.0).abs() > STATE_TOL * rho.nrows() as f64 {
        return invalid(format!("state must have τ(ρ) = 1, got {t}"));
    }
    let min = eigh(rho).0[0];
    if definite && min <= 0.0 {
        return invalid(format!(
            "state must be positive definite (smallest eigenvalue {min:.3e})"
        ));
    }
    if !definite && min < -STATE_TOL * rho.nrows() as f64 {
        return invalid(format!(
            "state must be positive semidefinite (smallest eigenvalue {min:.3e})"
        ));
    }
    Ok(())
}

/// Random complex matrix with standard Gaussian entries.
pub fn random_matrix(rng: &mut impl Rng, n: usize) -> CMat {
    CMat::from_fn(n, n, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMat {
    let g = random_matrix(rng, n);
    (&g + g.adjoint()) * c(0.5)
}

/// Random positive definite state `ρ = GG* + ε` normalised to `τ(ρ) = 1`.
/// The spread of the spectrum is itself random so that near-pure states occur.
pub fn random_state(rng: &mut impl Rng, n: usize) -> CMat {
    let g = random_matrix(rng, n);
    let eps = 10f64.powf(rng.random_range(-4.0..0.5));
    let rho = &g * g.adjoint() + identity(n) * c(eps);
    normalize_state(&rho)
}

pub fn normalize_state(rho: &CMat) -> CMat {
    let h = (rho + rho.adjoint()) * c(0.5);
    let t = tau(&h);
    h / t
}

/// One jump operator with its Bohr frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub v: CMat,
    pub omega: f64,
}

impl Jump {
    pub fn new(v: CMat, omega: f64) -> Self {
        Jump { v, omega }
    }
}

/// `L(A) = Σ_j e^{−ω_j/2}(V_j*V_jA + AV_j*V_j − 2V_j*AV_j)` as a superoperator.
pub fn alicki_superoperator(n: usize, jumps: &[Jump]) -> CMat {
    let id = identity(n);
    let mut l = CMat::zeros(n * n, n * n);
    for j in jumps {
        let vs = j.v.adjoint();
        let vv = &vs * &j.v;
        let w = c((-j.omega / 2.0).exp());
        l += (sandwich(&vv, &id) + sandwich(&id, &vv) - sandwich(&vs, &j.v) * c(2.0)) * w;
    }
    l
}

/// A validated GNS-symmetric generator.
#[derive(Debug, Clone)]
pub struct QmsGenerator {
    n: usize,
    sigma: CMat,
    jumps: Vec<Jump>,
    star: Vec<usize>,
    family: Vec<usize>,
    superop: CMat,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Replace a jump family violating orthogonality, tracelessness or
    /// star-closure by an equivalent Alicki family extracted from the
    /// generator.
    pub orthogonalize: bool,
}

/// Validate jumps against the Alicki conditions with respect to `σ`
/// (`None` means `σ = 1`).
pub fn build_qms(jumps: Vec<Jump>, sigma: Option<CMat>) -> Result<QmsGenerator> {
    build_qms_with(jumps, sigma, BuildOptions::default())
}

pub fn build_qms_with(
    jumps: Vec<Jump>,
    sigma: Option<CMat>,
    opts: BuildOptions,
) -> Result<QmsGenerator> {
    let family = vec![0; jumps.len()];
    build_families(jumps, family, sigma, opts)
}

fn infer_n(jumps: &[Jump], sigma: &Option<CMat>) -> Result<usize> {
    match (jumps.first(), sigma) {
        (_, Some(s)) => Ok(s.nrows()),
        (Some(j), None) => Ok(j.v.nrows()),
        (None, None) => invalid("cannot infer the dimension without jumps or σ"),
    }
}

fn build_families(
    jumps: Vec<Jump>,
    family: Vec<usize>,
    sigma: Option<CMat>,
    opts: BuildOptions,
) -> Result<QmsGenerator> {
    let n = infer_n(&jumps, &sigma)?;
    let sigma = sigma.unwrap_or_else(|| identity(n));
    if n == 0 {
        return invalid("dimension must be positive");
    }
    check_state(&sigma, true).map_err(|e| CurvError::Invalid(format!("σ: {e}")))?;
    for (k, j) in jumps.iter().enumerate() {
        if j.v.nrows() != n || j.v.ncols() != n {
            return invalid(format!(
                "jump {k} is {}×{}, expected {n}×{n}",
                j.v.nrows(),
                j.v.ncols()
            ));
        }
        if !j.omega.is_finite() {
            return invalid(format!("jump {k} has a non-finite frequency"));
        }
        if max_abs(&j.v) == 0.0 {
            return invalid(format!("jump {k} is zero"));
        }
    }
    // (d) modular relation; never repaired.
    let (s, u) = eigh(&sigma);
    let sig_inv = &u
        * CMat::from_diagonal(&CVec::from_iterator(n, s.iter().map(|&x| c(1.0 / x))))
        * u.adjoint();
    for (k, j) in jumps.iter().enumerate() {
        let d = max_abs(&(&sigma * &j.v * &sig_inv - &j.v * c((-j.omega).exp())));
        if d > ALICKI_TOL * max_abs(&j.v).max(1.0) {
            return invalid(format!(
                "Alicki condition (d) fails for jump {k}: ‖σVσ⁻¹ − e^(−ω)V‖ = {d:.3e}"
            ));
        }
    }
    let structural = check_structure(&jumps, &family);
    let (jumps, family, star) = match structural {
        Ok(star) => (jumps, family, star),
        Err(e) if opts.orthogonalize => {
            let l = alicki_superoperator(n, &jumps);
            let extracted = alicki_from_superoperator(&l, &sigma).map_err(|inner| {
                CurvError::Invalid(format!("{e}; re-extraction failed: {inner}"))
            })?;
            let fam = vec![0; extracted.len()];
            let star = check_structure(&extracted, &fam)?;
            (extracted, fam, star)
        }
        Err(e) => return Err(e),
    };
    let superop = alicki_superoperator(n, &jumps);
    let g = QmsGenerator {
        n,
        sigma,
        jumps,
        star,
        family,
        superop,
    };
    let defect = g.gns_defect(4);
    if defect > 1e-9 * max_abs(&g.superop).max(1.0) {
        return invalid(format!(
            "generator is not GNS-symmetric with respect to σ (defect {defect:.3e})"
        ));
    }
    Ok(g)
}

/// Alicki conditions (a)–(c) within each family; returns the star pairing.
fn check_structure(jumps: &[Jump], family: &[usize]) -> Result<Vec<usize>> {
    for (k, j) in jumps.iter().enumerate() {
        let t = tau(&j.v).norm();
        if t > ALICKI_TOL * max_abs(&j.v).max(1.0) {
            return invalid(format!(
                "Alicki condition (b) fails: jump {k} has τ(V) = {t:.3e}"
            ));
        }
    }
    for a in 0..jumps.len() {
        for b in (a + 1)..jumps.len() {
            if family[a] != family[b] {
                continue;
            }
            let ip = tau(&(jumps[a].v.adjoint() * &jumps[b].v)).norm();
            let scale = max_abs(&jumps[a].v).max(1.0) * max_abs(&jumps[b].v).max(1.0);
            if ip > ALICKI_TOL * scale {
                return invalid(format!(
                    "Alicki condition (a) fails: τ(V_{a}*V_{b}) = {ip:.3e}"
                ));
            }
        }
    }
    let mut star = Vec::with_capacity(jumps.len());
    for (k, j) in jumps.iter().enumerate() {
        let adj = j.v.adjoint();
        let tol = ALICKI_TOL * max_abs(&j.v).max(1.0);
        match (0..jumps.len())
            .find(|&m| family[m] == family[k] && max_abs(&(&jumps[m].v - &adj)) <= tol)
        {
            Some(m) => star.push(m),
            None => {
                return invalid(format!(
                    "Alicki condition (c) fails: V_{k}* is not among the jumps"
                ))
            }
        }
    }
    Ok(star)
}

impl QmsGenerator {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn sigma(&self) -> &CMat {
        &self.sigma
    }
    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }
    /// `j ↦ j*` with `V_{j*} = V_j*`.
    pub fn star(&self) -> &[usize] {
        &self.star
    }
    /// Family index of each jump (all zero unless built by [`commuting_sum`]).
    pub fn family(&self) -> &[usize] {
        &self.family
    }
    pub fn n_families(&self) -> usize {
        self.family.iter().copied().max().map_or(0, |m| m + 1)
    }
    pub fn is_tracial(&self) -> bool {
        max_abs(&(&self.sigma - identity(self.n))) < 1e-14
    }

    /// `n² × n²` matrix of `L`.
    pub fn superoperator(&self) -> &CMat {
        &self.superop
    }

    /// `τ`-adjoint `L†`; the generator of the evolution of densities.
    pub fn dual_superoperator(&self) -> CMat {
        tau_adjoint(&self.superop)
    }

    pub fn apply(&self, a: &CMat) -> CMat {
        apply_super(&self.superop, a)
    }

    pub fn apply_dual(&self, a: &CMat) -> CMat {
        apply_super(&self.dual_superoperator(), a)
    }

    /// Generator of a single family.
    pub fn family_superoperator(&self, k: usize) -> CMat {
        let jumps: Vec<Jump> = self
            .jumps
            .iter()
            .zip(&self.family)
            .filter(|(_, &f)| f == k)
            .map(|(j, _)| j.clone())
            .collect();
        alicki_superoperator(self.n, &jumps)
    }

    /// The generator restricted to one family, as a stand-alone generator.
    pub fn family_generator(&self, k: usize) -> Result<QmsGenerator> {
        let jumps: Vec<Jump> = self
            .jumps
            .iter()
            .zip(&self.family)
            .filter(|(_, &f)| f == k)
            .map(|(j, _)| j.clone())
            .collect();
        build_qms(jumps, Some(self.sigma.clone()))
    }

    /// `max |τ(L(A)Bσ) − τ(AL(B)σ)|` over seeded random `A, B`.
    pub fn gns_defect(&self, samples: u64) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..samples {
            let mut rng = task_rng(0x676e_73, s);
            let a = random_matrix(&mut rng, self.n);
            let b = random_matrix(&mut rng, self.n);
            let lhs = tau(&(self.apply(&a) * &b * &self.sigma));
            let rhs = tau(&(&a * self.apply(&b) * &self.sigma));
            worst = worst.max((lhs - rhs).norm() / (max_abs(&a) * max_abs(&b)).max(1.0));
        }
        worst
    }

    /// `P_t = e^{−tL}`.
    pub fn semigroup(&self, t: f64) -> Result<CMat> {
        if !(t >= 0.0) {
            return invalid(format!("time must be nonnegative, got {t}"));
        }
        Ok((&self.superop * c(-t)).exp())
    }

    /// `P_t† = e^{−tL†}`, acting on densities.
    pub fn dual_semigroup(&self, t: f64) -> Result<CMat> {
        Ok(tau_adjoint(&self.semigroup(t)?))
    }

    /// `Γ(A, B) = ½(L(A)*B + A*L(B) − L(A*B))`.
    pub fn gamma(&self, a: &CMat, b: &CMat) -> CMat {
        (self.apply(a).adjoint() * b + a.adjoint() * self.apply(b) - self.apply(&(a.adjoint() * b)))
            * c(0.5)
    }

    /// `Γ₂(A, B) = ½(Γ(LA, B) + Γ(A, LB) − LΓ(A, B))`.
    pub fn gamma2(&self, a: &CMat, b: &CMat) -> CMat {
        let la = self.apply(a);
        let lb = self.apply(b);
        (self.gamma(&la, b) + self.gamma(a, &lb) - self.apply(&self.gamma(a, b))) * c(0.5)
    }

    pub fn to_spec(&self) -> QmsSpec {
        QmsSpec {
            n: self.n,
            sigma: if self.is_tracial() {
                None
            } else {
                Some(cmat_json(&self.sigma))
            },
            jumps: self
                .jumps
                .iter()
                .zip(&self.family)
                .map(|(j, &f)| JumpSpec {
                    v: cmat_json(&j.v),
                    omega: j.omega,
                    family: Some(f),
                })
                .collect(),
            orthogonalize: false,
        }
    }
}

/// QMS input as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmsSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Value>,
    pub jumps: Vec<JumpSpec>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub orthogonalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub v: Value,
    #[serde(default)]
    pub omega: f64,
    /// Commuting-family index; all jumps form one family when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<usize>,
}

pub fn build_qms_from_spec(spec: &QmsSpec) -> Result<QmsGenerator> {
    let sigma = match &spec.sigma {
        Some(v) => Some(parse_cmat(v).map_err(|e| CurvError::Invalid(format!("σ: {e}")))?),
        None => None,
    };
    if let Some(s) = &sigma {
        if s.nrows() != spec.n {
            return invalid(format!(
                "σ is {}×{}, expected n = {}",
                s.nrows(),
                s.ncols(),
                spec.n
            ));
        }
    }
    let mut jumps = Vec::new();
    for (k, j) in spec.jumps.iter().enumerate() {
        let v = parse_cmat(&j.v).map_err(|e| CurvError::Invalid(format!("jump {k}: {e}")))?;
        if v.nrows() != spec.n || v.ncols() != spec.n {
            return invalid(format!("jump {k} must be {0}×{0}", spec.n));
        }
        jumps.push(Jump::new(v, j.omega));
    }
    let sigma = sigma.or_else(|| Some(identity(spec.n)));
    let opts = BuildOptions {
        orthogonalize: spec.orthogonalize,
    };
    if spec.jumps.iter().any(|j| j.family.is_some()) {
        let family: Vec<usize> = spec.jumps.iter().map(|j| j.family.unwrap_or(0)).collect();
        let mut groups: BTreeMap<usize, Vec<Jump>> = BTreeMap::new();
        for (j, f) in jumps.into_iter().zip(family) {
            groups.entry(f).or_default().push(j);
        }
        commuting_sum(groups.into_values().collect(), sigma)
    } else {
        build_qms_with(jumps, sigma, opts)
    }
}

/// Generalised Gell-Mann matrices: a `τ`-orthonormal basis of the traceless
/// Hermitian matrices (`n² − 1` elements).
pub fn gell_mann(n: usize) -> Vec<CMat> {
    let s = (n as f64 / 2.0).sqrt();
    let mut out = Vec::with_capacity(n * n - 1);
    for j in 0..n {
        for k in (j + 1)..n {
            out.push((unit(n, j, k) + unit(n, k, j)) * c(s));
            out.push((unit(n, j, k) * I - unit(n, k, j) * I) * c(-s));
        }
    }
    for l in 1..n {
        let norm = (n as f64 / (l * (l + 1)) as f64).sqrt();
        let mut d = CMat::zeros(n, n);
        for j in 0..l {
            d[(j, j)] = c(norm);
        }
        d[(l, l)] = c(-(l as f64) * norm);
        out.push(d);
    }
    out
}

/// The depolarizing generator `L(A) = A − τ(A)1` with Hermitian jumps
/// `B_j/(n√2)`, `B_j` running over [`gell_mann`].
pub fn depolarizing(n: usize) -> Result<QmsGenerator> {
    if n < 2 {
        return invalid("the depolarizing semigroup needs n ≥ 2");
    }
    let scale = c(1.0 / (n as f64 * 2f64.sqrt()));
    build_qms(
        gell_mann(n)
            .into_iter()
            .map(|b| Jump::new(b * scale, 0.0))
            .collect(),
        None,
    )
}

/// A conditional expectation on `M_n`.
#[derive(Debug, Clone, PartialEq)]
pub enum ESpec {
    /// `E(A) = τ(Aσ)1`.
    StateTrace,
    Identity,
    /// `E(A) = Σ_i P_i A P_i` for orthogonal projections summing to `1`.
    Pinching(Vec<CMat>),
}

impl ESpec {
    /// Pinching onto consecutive diagonal blocks of the given sizes.
    pub fn blocks(sizes: &[usize]) -> Result<ESpec> {
        let n: usize = sizes.iter().sum();
        if sizes.iter().any(|&s| s == 0) || n == 0 {
            return invalid("block sizes must be positive");
        }
        let mut start = 0;
        let mut out = Vec::new();
        for &s in sizes {
            let mut p = CMat::zeros(n, n);
            for i in start..start + s {
                p[(i, i)] = c(1.0);
            }
            out.push(p);
            start += s;
        }
        Ok(ESpec::Pinching(out))
    }

    /// `E(A) = pAp + (1−p)A(1−p)`.
    pub fn projection(p: &CMat) -> ESpec {
        let q = identity(p.nrows()) - p;
        ESpec::Pinching(vec![p.clone(), q])
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let ESpec::Pinching(ps) = self {
            let mut sum = CMat::zeros(n, n);
            for (i, p) in ps.iter().enumerate() {
                if p.nrows() != n || p.ncols() != n {
                    return invalid(format!("projection {i} has the wrong size"));
                }
                let tol = 1e-10;
                if max_abs(&(p * p - p)) > tol || hermitian_defect(p) > tol {
                    return invalid(format!("P_{i} is not an orthogonal projection"));
                }
                for (k, q) in ps.iter().enumerate().skip(i + 1) {
                    if max_abs(&(p * q)) > tol {
                        return invalid(format!("projections {i} and {k} are not orthogonal"));
                    }
                }
                sum += p;
            }
            if max_abs(&(sum - identity(n))) > 1e-10 {
                return invalid("projections do not sum to the identity");
            }
        }
        Ok(())
    }

    /// Superoperator of `E` for the state `σ`.
    pub fn superoperator(&self, sigma: &CMat) -> Result<CMat> {
        let n = sigma.nrows();
        self.validate(n)?;
        Ok(match self {
            ESpec::StateTrace => {
                let one = vec_rm(&identity(n));
                let st = vec_rm(&sigma.transpose());
                &one * st.transpose() * c(1.0 / n as f64)
            }
            ESpec::Identity => CMat::identity(n * n, n * n),
            ESpec::Pinching(ps) => ps
                .iter()
                .map(|p| sandwich(p, p))
                .fold(CMat::zeros(n * n, n * n), |a, b| a + b),
        })
    }

    pub fn apply(&self, sigma: &CMat, a: &CMat) -> Result<CMat> {
        Ok(apply_super(&self.superoperator(sigma)?, a))
    }
}

/// The dephasing generator `L = id − E`, rewritten in Alicki form.
pub fn dephasing(e: &ESpec, sigma: Option<CMat>) -> Result<QmsGenerator> {
    let n = match (&sigma, e) {
        (Some(s), _) => s.nrows(),
        (None, ESpec::Pinching(ps)) if !ps.is_empty() => ps[0].nrows(),
        _ => return invalid("the dimension is not determined; pass σ"),
    };
    let sigma = sigma.unwrap_or_else(|| identity(n));
    check_state(&sigma, true)?;
    let es = e.superoperator(&sigma)?;
    // E must preserve σ: τ(E(A)σ) = τ(Aσ) for every A.
    let st = vec_rm(&sigma.transpose());
    let defect = (es.transpose() * &st - &st).camax();
    if defect > 1e-10 {
        return Err(CurvError::Precondition(format!(
            "E does not preserve σ (defect {defect:.3e})"
        )));
    }
    let l = CMat::identity(n * n, n * n) - es;
    let jumps = alicki_from_superoperator(&l, &sigma)?;
    let g = build_qms(jumps, Some(sigma))?;
    let d = max_abs(&(g.superoperator() - &l));
    if d > 1e-9 {
        return invalid(format!(
            "Alicki form does not reproduce id − E (defect {d:.3e})"
        ));
    }
    Ok(g)
}

/// One commuting family `α[p, [p, ·]]` with the single jump `√α(p − τ(p))`.
pub fn projection_family(p: &CMat, alpha: f64) -> Result<Vec<Jump>> {
    let n = p.nrows();
    if max_abs(&(p * p - p)) > 1e-10 || hermitian_defect(p) > 1e-10 {
        return invalid("not an orthogonal projection");
    }
    if !(alpha > 0.0) {
        return invalid("rates must be positive");
    }
    let v = (p - identity(n) * tau(p)) * c(alpha.sqrt());
    if max_abs(&v) < 1e-14 {
        return Ok(vec![]);
    }
    Ok(vec![Jump::new(v, 0.0)])
}

/// `L = Σ_k L_k` for jump families whose members commute across families.
pub fn commuting_sum(families: Vec<Vec<Jump>>, sigma: Option<CMat>) -> Result<QmsGenerator> {
    for k in 0..families.len() {
        for l in (k + 1)..families.len() {
            for (i, a) in families[k].iter().enumerate() {
                for (j, b) in families[l].iter().enumerate() {
                    let comm = max_abs(&(&a.v * &b.v - &b.v * &a.v));
                    if comm > COMMUTATOR_TOL {
                        return invalid(format!(
                            "jump {i} of family {k} and jump {j} of family {l} do not commute (‖[v, w]‖ = {comm:.3e})"
                        ));
                    }
                }
            }
        }
    }
    let mut jumps = Vec::new();
    let mut family = Vec::new();
    for (k, f) in families.into_iter().enumerate() {
        family.extend(std::iter::repeat_n(k, f.len()));
        jumps.extend(f);
    }
    let g = build_families(jumps, family, sigma, BuildOptions::default())?;
    let m = g.n_families();
    let parts: Vec<CMat> = (0..m).map(|k| g.family_superoperator(k)).collect();
    for k in 0..m {
        for l in (k + 1)..m {
            let d = max_abs(&(&parts[k] * &parts[l] - &parts[l] * &parts[k]));
            if d > 1e-9 {
                return invalid(format!(
                    "family generators {k} and {l} do not commute (defect {d:.3e})"
                ));
            }
        }
    }
    Ok(g)
}

/// Recover an Alicki family from a generator that is GNS-symmetric with
/// respect to `σ`.
///
/// `−L` is expanded as `Σ c_ab f_a* · f_b` plus terms involving `1`, in an
/// orthonormal traceless basis `(f_a)` of eigenvectors of `Δ = σ · σ⁻¹`.
/// The coefficient matrix `c` is diagonalised within each eigenvalue of `Δ`.
/// Frequencies `ω ≠ 0` come in adjoint pairs: the `ω > 0` member is
/// extracted and its partner is its adjoint. The result is checked by
/// rebuilding `L`.
pub fn alicki_from_superoperator(l: &CMat, sigma: &CMat) -> Result<Vec<Jump>> {
    let n = sigma.nrows();
    if l.nrows() != n * n || l.ncols() != n * n {
        return invalid("superoperator and σ sizes disagree");
    }
    let (s, u) = eigh(sigma);
    let to_std = |m: CMat| &u * m * u.adjoint();
    // (basis element, ω) with Δ(f) = e^{−ω} f.
    let mut basis: Vec<(CMat, f64)> = Vec::new();
    let r2 = c(std::f64::consts::FRAC_1_SQRT_2);
    for p in 0..n {
        for q in (p + 1)..n {
            let w = (s[q] / s[p]).ln();
            if w.abs() < 1e-9 {
                basis.push((to_std((unit(n, p, q) + unit(n, q, p)) * r2), 0.0));
                basis.push((to_std((unit(n, p, q) - unit(n, q, p)) * I * r2), 0.0));
            } else {
                basis.push((to_std(unit(n, p, q)), w));
                basis.push((to_std(unit(n, q, p)), -w));
            }
        }
    }
    for k in 1..n {
        let norm = 1.0 / ((k * (k + 1)) as f64).sqrt();
        let mut d = CMat::zeros(n, n);
        for j in 0..k {
            d[(j, j)] = c(norm);
        }
        d[(k, k)] = c(-(k as f64) * norm);
        basis.push((to_std(d), 0.0));
    }
    let minus_l = -l;
    let scale = max_abs(l).max(1.0);
    let coeff = |a: &CMat, b: &CMat| -> Complex64 {
        let k = sandwich(&a.adjoint(), b);
        k.iter()
            .zip(minus_l.iter())
            .map(|(x, y)| x.conj() * y)
            .sum()
    };
    // Group basis elements by frequency.
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, (_, w)) in basis.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| (g - w).abs() < 1e-8) {
            Some((_, members)) => members.push(i),
            None => groups.push((*w, vec![i])),
        }
    }
    let mut jumps = Vec::new();
    for (w, members) in &groups {
        if *w < -1e-8 {
            continue;
        }
        let m = members.len();
        let cm = CMat::from_fn(m, m, |a, b| {
            coeff(&basis[members[a]].0, &basis[members[b]].0)
        });
        if hermitian_defect(&cm) > 1e-9 * scale {
            return invalid("coefficient matrix is not Hermitian; L is not a QMS generator");
        }
        let self_adjoint = w.abs() < 1e-8;
        let cm = if self_adjoint {
            if cm.iter().any(|z| z.im.abs() > 1e-9 * scale) {
                return invalid("zero-frequency coefficients are not real; L is not GNS-symmetric");
            }
            cm.map(|z| c(z.re))
        } else {
            cm
        };
        let (mu, vecs) = eigh(&cm);
        for (k, &mu_k) in mu.iter().enumerate() {
            if mu_k < -1e-9 * scale {
                return invalid(format!("L is not conditionally completely positive (coefficient eigenvalue {mu_k:.3e})"));
            }
            if mu_k <= 1e-12 * scale {
                continue;
            }
            let mut wmat = CMat::zeros(n, n);
            for (b, &idx) in members.iter().enumerate() {
                wmat += &basis[idx].0 * vecs[(b, k)].conj();
            }
            if self_adjoint {
                wmat = (&wmat + wmat.adjoint()) * c(0.5);
            }
            let v = wmat * c((mu_k / 2.0).sqrt() * (w / 4.0).exp());
            if self_adjoint {
                jumps.push(Jump::new(v, 0.0));
            } else {
                let partner = v.adjoint();
                jumps.push(Jump::new(v, *w));
                jumps.push(Jump::new(partner, -*w));
            }
        }
    }
    let rebuilt = alicki_superoperator(n, &jumps);
    let d = max_abs(&(&rebuilt - l));
    if d > 1e-9 * scale {
        return invalid(format!(
            "no Alicki form reproduces L for this σ (defect {d:.3e})"
        ));
    }
    Ok(jumps)
}

/// Result of [`pimsner_popa`].
#[derive(Debug, Clone, PartialEq)]
pub struct PimsnerPopa {
    pub value: f64,
    /// Minimising unit vector (sampled mode only).
    pub argmin: Option<CVec>,
    pub exact: bool,
}

/// `C(v)`: the largest `C` with `E(vv*) ⪰ C·vv*`.
pub fn pimsner_popa_at(e: &CMat, v: &CVec) -> f64 {
    let p = v * v.adjoint();
    let ep = apply_super(e, &p);
    let pinv = psd_pinv(&ep, 1e-12);
    // Component of v outside the range of E(vv*).
    let proj = &ep * &pinv;
    let outside = (v - &proj * v).norm();
    if outside > 1e-9 * v.norm() {
        return 0.0;
    }
    let q = (v.adjoint() * pinv * v)[(0, 0)].re;
    if q <= 0.0 {
        0.0
    } else {
        v.norm_squared() / q
    }
}

/// Pimsner–Popa index `C(E)`. Closed forms for `τ(·σ)1` (`s_min/n`, which is
/// `1/n` for the trace) and the identity; otherwise a sampled infimum of
/// [`pimsner_popa_at`] over unit vectors.
pub fn pimsner_popa(e: &ESpec, sigma: Option<CMat>, cfg: &SearchConfig) -> Result<PimsnerPopa> {
    let n = match (&sigma, e) {
        (Some(s), _) => s.nrows(),
        (None, ESpec::Pinching(ps)) if !ps.is_empty() => ps[0].nrows(),
        _ => return invalid("the dimension is not determined; pass σ"),
    };
    let sigma = sigma.unwrap_or_else(|| identity(n));
    match e {
        ESpec::StateTrace => {
            let smin = eigh(&sigma).0[0];
            return Ok(PimsnerPopa {
                value: smin / n as f64,
                argmin: None,
                exact: true,
            });
        }
        ESpec::Identity => {
            return Ok(PimsnerPopa {
                value: 1.0,
                argmin: None,
                exact: true,
            })
        }
        ESpec::Pinching(_) => {}
    }
    let es = e.superoperator(&sigma)?;
    let r = sphere_search(|x| pimsner_popa_at(&es, &as_complex(x)), 2 * n, cfg);
    let v = as_complex(&r.argmin);
    Ok(PimsnerPopa {
        value: r.value,
        argmin: Some(&v / c(v.norm())),
        exact: false,
    })
}

/// First-order differential calculus `F = M_n^d` of an Alicki family.
#[derive(Debug, Clone)]
pub struct Fodc {
    gen: QmsGenerator,
    partial: CMat,
    jmat: CMat,
    sigma_sqrt: CMat,
    sigma_eig: (Vec<f64>, CMat),
}

/// Residuals of the calculus identities on seeded samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FodcDefects {
    pub leibniz: f64,
    pub gamma: f64,
    pub jmap_isometry: f64,
    pub jmap_modular: f64,
    pub jmap_partial: f64,
    pub modular_partial: f64,
    pub divergence: f64,
}

/// Build and verify the calculus of `g`.
pub fn fodc(g: &QmsGenerator) -> Result<Fodc> {
    let f = Fodc::new(g);
    let d = f.defects(10);
    let worst = [
        d.leibniz,
        d.gamma,
        d.jmap_isometry,
        d.jmap_modular,
        d.jmap_partial,
        d.modular_partial,
        d.divergence,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if worst > 1e-9 {
        return invalid(format!("calculus identities fail: {d:?}"));
    }
    Ok(f)
}

impl Fodc {
    fn new(g: &QmsGenerator) -> Self {
        let n = g.n;
        let d = g.jumps.len();
        let id = identity(n);
        let mut partial = CMat::zeros(d * n * n, n * n);
        for (j, jump) in g.jumps.iter().enumerate() {
            let block =
                (sandwich(&jump.v, &id) - sandwich(&id, &jump.v)) * c((-jump.omega / 4.0).exp());
            partial
                .view_mut((j * n * n, 0), (n * n, n * n))
                .copy_from(&block);
        }
        let (s, u) = eigh(&g.sigma);
        let fpow = |p: f64| {
            &u * CMat::from_diagonal(&CVec::from_iterator(n, s.iter().map(|&x| c(x.powf(p)))))
                * u.adjoint()
        };
        let sigma_sqrt = fpow(0.5);
        let inner = sandwich(&sigma_sqrt, &fpow(-0.5)) * transpose_perm(n) * c(-1.0);
        let mut jmat = CMat::zeros(d * n * n, d * n * n);
        for j in 0..d {
            let js = g.star[j];
            jmat.view_mut((j * n * n, js * n * n), (n * n, n * n))
                .copy_from(&inner);
        }
        Fodc {
            gen: g.clone(),
            partial,
            jmat,
            sigma_sqrt,
            sigma_eig: (s, u),
        }
    }

    pub fn generator(&self) -> &QmsGenerator {
        &self.gen
    }
    pub fn n(&self) -> usize {
        self.gen.n
    }
    /// Number of jumps `d`.
    pub fn d(&self) -> usize {
        self.gen.jumps.len()
    }
    pub fn dim(&self) -> usize {
        self.d() * self.n() * self.n()
    }

    /// `∂` as a `d·n² × n²` matrix.
    pub fn partial_matrix(&self) -> &CMat {
        &self.partial
    }

    pub fn partial(&self, a: &CMat) -> CVec {
        &self.partial * vec_rm(a)
    }

    /// Linear part `S` of `𝒥ξ = S·conj(ξ)`.
    pub fn jmap_matrix(&self) -> &CMat {
        &self.jmat
    }

    /// `(𝒥ξ)_j = −σ^{1/2} ξ_{j*}* σ^{−1/2}`. The sign makes `𝒥∂A = ∂(σ^{1/2}A*σ^{−1/2})`
    /// hold for the commutator derivation, matching the graph convention.
    pub fn jmap(&self, xi: &CVec) -> CVec {
        &self.jmat * xi.map(|z| z.conj())
    }

    /// `(V_tξ)_j = e^{iω_j t} σ^{it} ξ_j σ^{−it}` as a matrix.
    pub fn modular_matrix(&self, t: f64) -> CMat {
        let n = self.n();
        let (s, u) = &self.sigma_eig;
        let pow = |sign: f64| {
            u * CMat::from_diagonal(&CVec::from_iterator(
                n,
                s.iter()
                    .map(|&x| Complex64::new(0.0, sign * t * x.ln()).exp()),
            )) * u.adjoint()
        };
        let block = sandwich(&pow(1.0), &pow(-1.0));
        let d = self.d();
        let mut out = CMat::zeros(d * n * n, d * n * n);
        for (j, jump) in self.gen.jumps.iter().enumerate() {
            let phase = Complex64::new(0.0, jump.omega * t).exp();
            out.view_mut((j * n * n, j * n * n), (n * n, n * n))
                .copy_from(&(&block * phase));
        }
        out
    }

    /// Components `ξ_j` as matrices.
    pub fn components(&self, xi: &CVec) -> Vec<CMat> {
        let n = self.n();
        (0..self.d())
            .map(|j| unvec_rm(&xi.rows(j * n * n, n * n).into_owned(), n))
            .collect()
    }

    pub fn from_components(&self, parts: &[CMat]) -> CVec {
        let n = self.n();
        let mut out = CVec::zeros(self.dim());
        for (j, p) in parts.iter().enumerate() {
            out.rows_mut(j * n * n, n * n).copy_from(&vec_rm(p));
        }
        out
    }

    /// `(ξ|η) = Σ_j ξ_j*η_j`.
    pub fn pairing(&self, xi: &CVec, eta: &CVec) -> CMat {
        let n = self.n();
        self.components(xi)
            .iter()
            .zip(self.components(eta))
            .fold(CMat::zeros(n, n), |acc, (a, b)| acc + a.adjoint() * b)
    }

    /// `⟨ξ, η⟩ = τ((ξ|η)σ)`.
    pub fn inner(&self, xi: &CVec, eta: &CVec) -> Complex64 {
        tau(&(self.pairing(xi, eta) * &self.gen.sigma))
    }

    /// Gram matrix of [`Self::inner`] on the stacked coordinates.
    pub fn inner_matrix(&self) -> CMat {
        let n = self.n();
        let block = kron(&identity(n), &self.gen.sigma.transpose()) * c(1.0 / n as f64);
        kron(&identity(self.d()), &block)
    }

    /// Residuals of the calculus identities on `samples` seeded draws.
    pub fn defects(&self, samples: u64) -> FodcDefects {
        let n = self.n();
        let g = &self.gen;
        let mut d = FodcDefects {
            leibniz: 0.0,
            gamma: 0.0,
            jmap_isometry: 0.0,
            jmap_modular: 0.0,
            jmap_partial: 0.0,
            modular_partial: 0.0,
            divergence: 0.0,
        };
        let sig_inv_sqrt = self
            .sigma_sqrt
            .clone()
            .try_inverse()
            .expect("σ is positive definite");
        let upd = |slot: &mut f64, v: f64| *slot = slot.max(v);
        for s in 0..samples {
            let mut rng = task_rng(0xf0dc, s);
            let a = random_matrix(&mut rng, n);
            let b = random_matrix(&mut rng, n);
            let scale = max_abs(&a).max(1.0) * max_abs(&b).max(1.0);
            // Leibniz: ∂(AB) = A∂(B) + ∂(A)B.
            let lhs = self.components(&self.partial(&(&a * &b)));
            let pa = self.components(&self.partial(&a));
            let pb = self.components(&self.partial(&b));
            for j in 0..self.d() {
                upd(
                    &mut d.leibniz,
                    max_abs(&(&lhs[j] - &a * &pb[j] - &pa[j] * &b)) / scale,
                );
            }
            let xa = self.partial(&a);
            let xb = self.partial(&b);
            upd(
                &mut d.gamma,
                max_abs(&(g.gamma(&a, &b) - self.pairing(&xa, &xb))) / scale,
            );
            // 𝒥 is isometric: τ((𝒥ξ|𝒥η)σ) = τ((η|ξ)σ).
            let xi = CVec::from_fn(self.dim(), |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let eta = CVec::from_fn(self.dim(), |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let iso = self.inner(&self.jmap(&xi), &self.jmap(&eta)) - self.inner(&eta, &xi);
            upd(&mut d.jmap_isometry, iso.norm());
            for t in [0.3, 1.7] {
                let vt = self.modular_matrix(t);
                let lhs = self.jmap(&(&vt * &xi));
                let rhs = &vt * self.jmap(&xi);
                upd(&mut d.jmap_modular, (lhs - rhs).camax());
                // ∂(σ^{it}Aσ^{−it}) = V_t∂(A).
                let (sv, u) = &self.sigma_eig;
                let pw = |sign: f64| {
                    u * CMat::from_diagonal(&CVec::from_iterator(
                        n,
                        sv.iter()
                            .map(|&x| Complex64::new(0.0, sign * t * x.ln()).exp()),
                    )) * u.adjoint()
                };
                let rotated = pw(1.0) * &a * pw(-1.0);
                upd(
                    &mut d.modular_partial,
                    (self.partial(&rotated) - &vt * &xa).camax() / scale,
                );
            }
            // 𝒥∂A = ∂(σ^{1/2}A*σ^{−1/2}).
            let moved = &self.sigma_sqrt * a.adjoint() * &sig_inv_sqrt;
            upd(
                &mut d.jmap_partial,
                (self.jmap(&xa) - self.partial(&moved)).camax() / scale,
            );
        }
        // Σ_j ∂_j^{†,σ}∂_j = L, i.e. ∂*Ω∂ = Ω₀L with the GNS Gram matrices.
        let omega = self.inner_matrix();
        let omega0 = kron(&identity(n), &g.sigma.transpose()) * c(1.0 / n as f64);
        let lhs = self.partial.adjoint() * &omega * &self.partial;
        let rhs = &omega0 * g.superoperator();
        d.divergence = max_abs(&(lhs - rhs)) / max_abs(g.superoperator()).max(1.0);
        d
    }

    /// Spectral data for Λ-weighted norms at `ρ`.
    pub fn density_weights(&self, mean: &MeanFunction, rho: &CMat) -> Result<DensityWeights> {
        DensityWeights::new(self, mean, rho)
    }

    /// `‖ξ‖²_{Λ,ρ} = Σ_j τ[ξ_j* Λ(e^{ω_j/2}L(ρ), e^{−ω_j/2}R(ρ)) ξ_j]`.
    pub fn lambda_norm(&self, mean: &MeanFunction, rho: &CMat, xi: &CVec) -> Result<f64> {
        Ok(self.density_weights(mean, rho)?.norm(xi))
    }

    pub fn lambda_inner(
        &self,
        mean: &MeanFunction,
        rho: &CMat,
        xi: &CVec,
        eta: &CVec,
    ) -> Result<Complex64> {
        Ok(self.density_weights(mean, rho)?.inner(xi, eta))
    }
}

/// Eigen-decomposition of `ρ` together with the multipliers
/// `Λ(e^{ω_j/2}λ_p, e^{−ω_j/2}λ_q)` of every jump.
#[derive(Debug, Clone)]
pub struct DensityWeights {
    n: usize,
    lambda: Vec<f64>,
    u: CMat,
    omegas: Vec<f64>,
    mult: Vec<Vec<f64>>,
    mean: MeanFunction,
}

impl DensityWeights {
    fn new(f: &Fodc, mean: &MeanFunction, rho: &CMat) -> Result<Self> {
        let n = f.n();
        if rho.nrows() != n || rho.ncols() != n {
            return invalid("ρ has the wrong size");
        }
        let d = hermitian_defect(rho);
        if d > 1e-10 * max_abs(rho).max(1.0) {
            return Err(CurvError::NotHermitian(d));
        }
        let (lambda, u) = eigh(rho);
        if lambda[0] <= 0.0 {
            return invalid(format!(
                "ρ must be positive definite (smallest eigenvalue {:.3e})",
                lambda[0]
            ));
        }
        let omegas: Vec<f64> = f.gen.jumps.iter().map(|j| j.omega).collect();
        let mult = omegas
            .iter()
            .map(|&w| {
                let (a, b) = ((w / 2.0).exp(), (-w / 2.0).exp());
                (0..n * n)
                    .map(|k| mean.eval(a * lambda[k / n], b * lambda[k % n]))
                    .collect()
            })
            .collect();
        Ok(DensityWeights {
            n,
            lambda,
            u,
            omegas,
            mult,
            mean: mean.clone(),
        })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// Components in the eigenbasis of `ρ`.
    fn rotate(&self, xi: &CVec) -> Vec<CMat> {
        let n = self.n;
        (0..self.omegas.len())
            .map(|j| {
                self.u.adjoint() * unvec_rm(&xi.rows(j * n * n, n * n).into_owned(), n) * &self.u
            })
            .collect()
    }

    pub fn inner(&self, xi: &CVec, eta: &CVec) -> Complex64 {
        let n = self.n;
        let (a, b) = (self.rotate(xi), self.rotate(eta));
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..a.len() {
            for k in 0..n * n {
                let (p, q) = (k / n, k % n);
                s += a[j][(p, q)].conj() * b[j][(p, q)] * self.mult[j][k];
            }
        }
        s / c(n as f64)
    }

    pub fn norm(&self, xi: &CVec) -> f64 {
        self.inner(xi, xi).re
    }

    /// Directional derivative of `‖ξ‖²_{Λ,ρ}` along a Hermitian `η`,
    /// by Daleckii–Krein divided differences in the eigenbasis of `ρ`.
    pub fn norm_derivative(&self, xi: &CVec, eta: &CMat) -> f64 {
        let n = self.n;
        let et = self.u.adjoint() * eta * &self.u;
        let parts = self.rotate(xi);
        let lam = &self.lambda;
        let mut total = 0.0;
        for (j, x) in parts.iter().enumerate() {
            let (a, b) = ((self.omegas[j] / 2.0).exp(), (-self.omegas[j] / 2.0).exp());
            let mut dx = CMat::zeros(n, n);
            for p in 0..n {
                for q in 0..n {
                    let mut z = Complex64::new(0.0, 0.0);
                    for r in 0..n {
                        let d1 = a * divided_difference(
                            &self.mean,
                            Slot::First,
                            a * lam[p],
                            a * lam[r],
                            b * lam[q],
                        );
                        let d2 = b * divided_difference(
                            &self.mean,
                            Slot::Second,
                            b * lam[r],
                            b * lam[q],
                            a * lam[p],
                        );
                        z += et[(p, r)] * x[(r, q)] * d1 + x[(p, r)] * et[(r, q)] * d2;
                    }
                    dx[(p, q)] = z;
                }
            }
            total += x
                .iter()
                .zip(dx.iter())
                .map(|(u, v)| (u.conj() * v).re)
                .sum::<f64>();
        }
        total / n as f64
    }
}

/// Serialise a jump list for reports.
pub fn jumps_json(jumps: &[Jump]) -> Value {
    Value::Array(
        jumps
            .iter()
            .map(|j| json!({"v": cmat_json(&j.v), "omega": j.omega}))
            .collect(),
    )
}

/// Matrix units as a vector in `C^{n²}`.
pub fn unit_vec(n: usize, i: usize, j: usize) -> CVec {
    vec_rm(&unit(n, i, j))
}

/// Hermitian matrix from real coordinates in the basis `1, gell_mann(n)`.
pub fn hermitian_from_coords(x: &[f64], n: usize) -> CMat {
    let mut out = identity(n) * c(x[0]);
    for (k, b) in gell_mann(n).into_iter().enumerate() {
        out += b * c(x[k + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::means::Builtin;

    fn close(a: &CMat, b: &CMat) -> f64 {
        max_abs(&(a - b))
    }

    fn pauli() -> [CMat; 3] {
        let x = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let y = CMat::from_row_slice(2, 2, &[c(0.0), -I, I, c(0.0)]);
        let z = CMat::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]);
        [x, y, z]
    }

    fn nontracial_sigma(n: usize) -> CMat {
        let mut rng = task_rng(11, 0);
        random_state(&mut rng, n)
    }

    #[test]
    fn depolarizing_generator_on_basis() {
        for n in 2..=4 {
            let g = depolarizing(n).unwrap();
            assert_eq!(g.jumps().len(), n * n - 1);
            for i in 0..n {
                for j in 0..n {
                    let a = unit(n, i, j);
                    let expect = &a - identity(n) * tau(&a);
                    assert!(close(&g.apply(&a), &expect) < 1e-12);
                }
            }
            assert!(close(&g.apply(&identity(n)), &CMat::zeros(n, n)) < 1e-12);
            assert!(close(&g.dual_superoperator(), g.superoperator()) < 1e-11);
        }
    }

    #[test]
    fn pauli_family_is_valid_and_rejections_are_named() {
        let s = c(1.0 / (2.0 * 2f64.sqrt()));
        let jumps: Vec<Jump> = pauli().iter().map(|p| Jump::new(p * s, 0.0)).collect();
        let g = build_qms(jumps, None).unwrap();
        assert!(close(g.superoperator(), depolarizing(2).unwrap().superoperator()) < 1e-12);

        let err = build_qms(vec![Jump::new(identity(2), 0.0)], None).unwrap_err();
        assert!(err.to_string().contains("(b)"), "{err}");

        let sigma = CMat::from_diagonal(&CVec::from_vec(vec![c(1.5), c(0.5)]));
        let err = build_qms(
            vec![Jump::new(unit(2, 0, 1), 0.0), Jump::new(unit(2, 1, 0), 0.0)],
            Some(sigma),
        )
        .unwrap_err();
        assert!(err.to_string().contains("(d)"), "{err}");

        let [x, y, _] = pauli();
        let err = build_qms(
            vec![Jump::new(x.clone(), 0.0), Jump::new(&x + &y, 0.0)],
            None,
        )
        .unwrap_err();
        assert!(
            err.to_string().contains("(a)") || err.to_string().contains("(c)"),
            "{err}"
        );
    }

    #[test]
    fn orthogonalize_flag_recovers_alicki_form() {
        let [x, y, _] = pauli();
        let mixed = vec![Jump::new(x.clone(), 0.0), Jump::new(&x + &y, 0.0)];
        let target = alicki_superoperator(2, &mixed);
        assert!(build_qms(mixed.clone(), None).is_err());
        let g = build_qms_with(
            mixed,
            None,
            BuildOptions {
                orthogonalize: true,
            },
        )
        .unwrap();
        assert!(close(g.superoperator(), &target) < 1e-10);
    }

    #[test]
    fn semigroup_examples_and_positivity() {
        let g = depolarizing(2).unwrap();
        let mut rng = task_rng(5, 0);
        let a = random_matrix(&mut rng, 2);
        for t in [0.0, 0.1, 1.0, 3.0] {
            let pt = g.semigroup(t).unwrap();
            let expect = &a * c((-t).exp()) + identity(2) * tau(&a) * c(1.0 - (-t).exp());
            assert!(close(&apply_super(&pt, &a), &expect) < 1e-12);
            assert!(close(&apply_super(&pt, &identity(2)), &identity(2)) < 1e-12);
        }
        assert!(g.semigroup(-1.0).is_err());
        assert!(close(&g.gamma(&identity(2), &identity(2)), &CMat::zeros(2, 2)) < 1e-13);
    }

    #[test]
    fn gns_symmetry_and_complete_positivity_nontracial() {
        let sigma = nontracial_sigma(3);
        for g in [
            dephasing(&ESpec::StateTrace, Some(sigma.clone())).unwrap(),
            depolarizing(3).unwrap(),
        ] {
            assert!(g.gns_defect(8) < 1e-9);
            for t in [0.1, 1.0] {
                let pt = g.semigroup(t).unwrap();
                assert!(choi_min_eigenvalue(&pt) > -1e-10);
                // GNS symmetry of P_t itself.
                let mut rng = task_rng(3, 1);
                let a = random_matrix(&mut rng, 3);
                let b = random_matrix(&mut rng, 3);
                let s = g.sigma();
                let lhs = tau(&(apply_super(&pt, &a) * &b * s));
                let rhs = tau(&(&a * apply_super(&pt, &b) * s));
                assert!((lhs - rhs).norm() < 1e-9);
            }
            let mut rng = task_rng(4, 0);
            let a = random_matrix(&mut rng, 3);
            assert!(eigh(&g.gamma(&a, &a)).0[0] > -1e-10);
        }
    }

    #[test]
    fn dephasing_examples() {
        let dep = dephasing(&ESpec::StateTrace, Some(identity(3))).unwrap();
        assert!(
            close(
                dep.superoperator(),
                depolarizing(3).unwrap().superoperator()
            ) < 1e-10
        );

        let zero = dephasing(&ESpec::Identity, Some(identity(2))).unwrap();
        assert!(zero.jumps().is_empty());
        assert!(max_abs(zero.superoperator()) < 1e-12);

        let mut rng = task_rng(8, 0);
        let h = random_hermitian(&mut rng, 3);
        let (_, u) = eigh(&h);
        let col = u.column(0).into_owned();
        let p = &col * col.adjoint();
        let g = dephasing(&ESpec::projection(&p), None).unwrap();
        let a = random_matrix(&mut rng, 3);
        let expect = &p * &a + &a * &p - &p * &a * &p * c(2.0);
        assert!(close(&g.apply(&a), &expect) < 1e-10);

        // Γ₂ = ½(Γ + E(Γ)) for dephasing.
        let e = ESpec::blocks(&[2, 1]).unwrap();
        let g = dephasing(&e, None).unwrap();
        let ga = g.gamma(&a, &a);
        let expect = (&ga + e.apply(g.sigma(), &ga).unwrap()) * c(0.5);
        assert!(close(&g.gamma2(&a, &a), &expect) < 1e-10);
    }

    #[test]
    fn dephasing_rejects_incompatible_sigma() {
        let sigma = CMat::from_row_slice(2, 2, &[c(1.2), c(0.3), c(0.3), c(0.8)]);
        let e = ESpec::blocks(&[1, 1]).unwrap();
        assert!(matches!(
            dephasing(&e, Some(sigma)),
            Err(CurvError::Precondition(_))
        ));
    }

    #[test]
    fn nontracial_dephasing_has_paired_frequencies() {
        let sigma = CMat::from_diagonal(&CVec::from_vec(vec![c(1.6), c(0.9), c(0.5)]));
        let g = dephasing(&ESpec::StateTrace, Some(sigma)).unwrap();
        assert!(g.jumps().iter().any(|j| j.omega.abs() > 0.1));
        for (j, &s) in g.star().iter().enumerate() {
            assert!((g.jumps()[j].omega + g.jumps()[s].omega).abs() < 1e-9);
        }
    }

    #[test]
    fn commuting_sums() {
        let p1 = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(1.0), c(0.0), c(0.0)]));
        let p2 = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(0.0), c(1.0), c(0.0)]));
        let fams = vec![
            projection_family(&p1, 1.0).unwrap(),
            projection_family(&p2, 2.0).unwrap(),
        ];
        let g = commuting_sum(fams, None).unwrap();
        assert_eq!(g.n_families(), 2);
        let mut rng = task_rng(1, 2);
        let a = random_matrix(&mut rng, 4);
        let l = |p: &CMat| p * &a + &a * p - p * &a * p * c(2.0);
        assert!(close(&g.apply(&a), &(l(&p1) + l(&p2) * c(2.0))) < 1e-11);

        let single = commuting_sum(vec![depolarizing(2).unwrap().jumps().to_vec()], None).unwrap();
        assert!(
            close(
                single.superoperator(),
                depolarizing(2).unwrap().superoperator()
            ) < 1e-14
        );

        let [x, y, _] = pauli();
        let err = commuting_sum(vec![vec![Jump::new(x, 0.0)], vec![Jump::new(y, 0.0)]], None)
            .unwrap_err();
        assert!(err.to_string().contains("do not commute"), "{err}");
    }

    #[test]
    fn pimsner_popa_examples() {
        for n in 2..=4 {
            let r = pimsner_popa(
                &ESpec::StateTrace,
                Some(identity(n)),
                &SearchConfig::default(),
            )
            .unwrap();
            assert!((r.value - 1.0 / n as f64).abs() < 1e-6);
            // The sampled route agrees with the closed form.
            let es = ESpec::StateTrace.superoperator(&identity(n)).unwrap();
            let mut rng = task_rng(2, n as u64);
            let v = CVec::from_fn(n, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            assert!((pimsner_popa_at(&es, &(&v / c(v.norm()))) - 1.0 / n as f64).abs() < 1e-10);
        }
        let id = pimsner_popa(
            &ESpec::Identity,
            Some(identity(3)),
            &SearchConfig::default(),
        )
        .unwrap();
        assert_eq!(id.value, 1.0);
        let es = ESpec::Identity.superoperator(&identity(3)).unwrap();
        let v = CVec::from_vec(vec![c(0.6), Complex64::new(0.0, 0.8), c(0.0)]);
        assert!((pimsner_popa_at(&es, &v) - 1.0).abs() < 1e-10);

        let blocks = pimsner_popa(
            &ESpec::blocks(&[2, 1]).unwrap(),
            None,
            &SearchConfig {
                samples: 128,
                steps: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((blocks.value - 0.5).abs() < 1e-6, "{}", blocks.value);
    }

    #[test]
    fn pimsner_popa_diagonal_qubit_matches_grid() {
        let e = ESpec::blocks(&[1, 1]).unwrap();
        let es = e.superoperator(&identity(2)).unwrap();
        let cfg = SearchConfig {
            samples: 256,
            steps: 100,
            ..Default::default()
        };
        let sampled = pimsner_popa(&e, None, &cfg).unwrap().value;
        // Grid over the Bloch sphere: 100 × 100 angles.
        let mut grid = f64::INFINITY;
        for i in 0..100 {
            for k in 0..100 {
                let th = std::f64::consts::PI * (i as f64 + 0.5) / 100.0;
                let ph = 2.0 * std::f64::consts::PI * k as f64 / 100.0;
                let v = CVec::from_vec(vec![
                    c((th / 2.0).cos()),
                    Complex64::from_polar((th / 2.0).sin(), ph),
                ]);
                grid = grid.min(pimsner_popa_at(&es, &v));
            }
        }
        assert!(sampled <= grid + 1e-9, "{sampled} vs {grid}");
        assert!((sampled - 0.5).abs() < 1e-6);
    }

    #[test]
    fn fodc_identities() {
        let sigma = nontracial_sigma(3);
        for g in [
            depolarizing(2).unwrap(),
            depolarizing(3).unwrap(),
            dephasing(&ESpec::StateTrace, Some(sigma)).unwrap(),
        ] {
            let f = fodc(&g).unwrap();
            let d = f.defects(20);
            assert!(d.leibniz < 1e-11 && d.gamma < 1e-11, "{d:?}");
            assert!(d.divergence < 1e-10, "{d:?}");
            assert!(f.partial(&identity(g.n())).camax() < 1e-14);
        }
    }

    #[test]
    fn lambda_norm_examples() {
        let g = depolarizing(3).unwrap();
        let f = fodc(&g).unwrap();
        let zero = CVec::zeros(f.dim());
        let mut rng = task_rng(21, 0);
        let rho = random_state(&mut rng, 3);
        let log = MeanFunction::from(Builtin::Logarithmic);
        assert_eq!(f.lambda_norm(&log, &rho, &zero).unwrap(), 0.0);

        // At ρ = 1 every mean with Λ(1,1) = 1 gives τ((ξ|ξ)).
        let a = random_matrix(&mut rng, 3);
        let xi = f.partial(&a);
        let plain = f.inner(&xi, &xi).re;
        for b in Builtin::ALL {
            let v = f.lambda_norm(&b.into(), &identity(3), &xi).unwrap();
            assert!((v - plain).abs() < 1e-12 * plain.max(1.0));
        }
        // Right-trivial and ω ≡ 0: τ((ξ|ξ)ρ).
        let right = f
            .lambda_norm(&Builtin::RightTrivial.into(), &rho, &xi)
            .unwrap();
        assert!((right - tau(&(f.pairing(&xi, &xi) * &rho)).re).abs() < 1e-12);

        // Harmonic ≤ logarithmic ≤ arithmetic.
        for s in 0..20 {
            let mut rng = task_rng(22, s);
            let rho = random_state(&mut rng, 3);
            let xi = CVec::from_fn(f.dim(), |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let h = f.lambda_norm(&Builtin::Harmonic.into(), &rho, &xi).unwrap();
            let l = f.lambda_norm(&log, &rho, &xi).unwrap();
            let ar = f
                .lambda_norm(&Builtin::Arithmetic.into(), &rho, &xi)
                .unwrap();
            assert!(h <= l * (1.0 + 1e-12) && l <= ar * (1.0 + 1e-12));
        }
        assert!(f.lambda_norm(&log, &(identity(3) * c(-1.0)), &xi).is_err());
    }

    #[test]
    fn lambda_orthogonality_for_diagonal_density() {
        let n = 3;
        let f = fodc(&depolarizing(n).unwrap()).unwrap();
        let rho = CMat::from_diagonal(&CVec::from_vec(vec![c(0.4), c(1.1), c(1.5)]));
        for b in Builtin::ALL {
            let w = f.density_weights(&b.into(), &rho).unwrap();
            for (i, j) in (0..n).flat_map(|i| (0..n).map(move |j| (i, j))) {
                for (k, l) in (0..n).flat_map(|k| (0..n).map(move |l| (k, l))) {
                    if k == l || (i, j) == (k, l) {
                        continue;
                    }
                    let v = w.inner(&f.partial(&unit(n, i, j)), &f.partial(&unit(n, k, l)));
                    assert!(v.norm() < 1e-12, "{b:?} ({i}{j}),({k}{l}) {v}");
                }
            }
        }
    }

    #[test]
    fn norm_derivative_matches_finite_differences() {
        let sigma = nontracial_sigma(2);
        let gens = [
            depolarizing(3).unwrap(),
            dephasing(&ESpec::StateTrace, Some(sigma)).unwrap(),
        ];
        let mut worst: f64 = 0.0;
        for s in 0..100u64 {
            let g = &gens[(s % 2) as usize];
            let f = fodc(g).unwrap();
            let n = g.n();
            let mut rng = task_rng(31, s);
            let b = Builtin::ALL[(s as usize / 2) % Builtin::ALL.len()];
            let mean: MeanFunction = b.into();
            let rho = random_state(&mut rng, n) + identity(n) * c(0.3);
            let eta = random_hermitian(&mut rng, n);
            let xi = CVec::from_fn(f.dim(), |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let w = f.density_weights(&mean, &rho).unwrap();
            let exact = w.norm_derivative(&xi, &eta);
            let at = |h: f64| f.lambda_norm(&mean, &(&rho + &eta * c(h)), &xi).unwrap();
            let fd = |h: f64| (at(h) - at(-h)) / (2.0 * h);
            let h = 1e-4;
            let rich = (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
            worst = worst.max((exact - rich).abs() / exact.abs().max(1e-3));
        }
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn spec_round_trip() {
        let g = dephasing(&ESpec::StateTrace, Some(nontracial_sigma(2))).unwrap();
        let text = serde_json::to_string(&g.to_spec()).unwrap();
        let back = build_qms_from_spec(&serde_json::from_str(&text).unwrap()).unwrap();
        assert!(close(back.superoperator(), g.superoperator()) < 1e-12);
    }
}
