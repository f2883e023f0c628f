//! Finite weighted graphs `(X, b, m)` and their first-order calculus:
//! Laplacian, discrete gradient and its adjoint, carré du champ, iterated
//! carré du champ and the heat semigroup.
//!
//! Vertex functions are complex vectors indexed by vertex position; edge
//! fields are complex vectors indexed by [`WeightedGraph::edges`], the list
//! of directed pairs `(x, y)` with `b(x, y) > 0` in lexicographic order.
//! Inner products: `⟨f, g⟩_m = Σ conj(f) g m` and
//! `⟨ξ, η⟩_{b/2} = ½ Σ b conj(ξ) η`.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CurvError, Result};
use crate::linalg::{c, eigh, CMat, CVec, RMat};

pub type VertexFunction = CVec;
pub type EdgeField = CVec;

/// Graph input as read from JSON. Edges are undirected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: Vec<String>,
    pub m: BTreeMap<String, f64>,
    pub edges: Vec<(String, String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    labels: Vec<String>,
    m: Vec<f64>,
    b: RMat,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
}

/// Validate a [`GraphSpec`].
pub fn build_graph(spec: &GraphSpec) -> Result<WeightedGraph> {
    let mut index = HashMap::new();
    for (i, v) in spec.vertices.iter().enumerate() {
        if index.insert(v.clone(), i).is_some() {
            return invalid(format!("duplicate vertex `{v}`"));
        }
    }
    for key in spec.m.keys() {
        if !index.contains_key(key) {
            return invalid(format!("measure given for unknown vertex `{key}`"));
        }
    }
    let mut m = Vec::with_capacity(spec.vertices.len());
    for v in &spec.vertices {
        match spec.m.get(v) {
            Some(&w) => m.push(w),
            None => return invalid(format!("missing measure for vertex `{v}`")),
        }
    }
    let n = spec.vertices.len();
    let mut b = RMat::zeros(n, n);
    let mut seen = HashMap::new();
    for (k, (x, y, w)) in spec.edges.iter().enumerate() {
        let (Some(&i), Some(&j)) = (index.get(x), index.get(y)) else {
            return invalid(format!("edge {k} references an unknown vertex ({x}, {y})"));
        };
        let key = (i.min(j), i.max(j));
        if seen.insert(key, k).is_some() {
            return invalid(format!("duplicate edge ({x}, {y})"));
        }
        b[(i, j)] = *w;
        b[(j, i)] = *w;
    }
    WeightedGraph::from_dense(spec.vertices.clone(), m, b)
}

impl WeightedGraph {
    /// Build from a dense symmetric weight matrix.
    pub fn from_dense(labels: Vec<String>, m: Vec<f64>, b: RMat) -> Result<Self> {
        let n = labels.len();
        if m.len() != n || b.nrows() != n || b.ncols() != n {
            return invalid("dimension mismatch between vertices, measure and weights");
        }
        let mut uniq = HashMap::new();
        for l in &labels {
            if uniq.insert(l, ()).is_some() {
                return invalid(format!("duplicate vertex `{l}`"));
            }
        }
        for (i, &w) in m.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return invalid(format!(
                    "measure of vertex `{}` must be positive (got {w})",
                    labels[i]
                ));
            }
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = b[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return invalid(format!("negative weight on ({}, {})", labels[i], labels[j]));
                }
                if i == j && w != 0.0 {
                    return invalid(format!("self-loop at `{}`", labels[i]));
                }
                if w != b[(j, i)] {
                    return invalid(format!(
                        "asymmetric weight on ({}, {})",
                        labels[i], labels[j]
                    ));
                }
                if w > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        let edge_index = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
        Ok(WeightedGraph {
            labels,
            m,
            b,
            edges,
            edge_index,
        })
    }

    /// Unlabelled convenience constructor; vertices are named `0, 1, …`.
    pub fn from_weights(m: Vec<f64>, b: RMat) -> Result<Self> {
        let labels = (0..m.len()).map(|i| i.to_string()).collect();
        Self::from_dense(labels, m, b)
    }

    /// Complete graph with `b = m ⊗ m`.
    pub fn complete_product(m: Vec<f64>) -> Result<Self> {
        let n = m.len();
        let b = RMat::from_fn(n, n, |i, j| if i == j { 0.0 } else { m[i] * m[j] });
        Self::from_weights(m, b)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn measure(&self) -> &[f64] {
        &self.m
    }
    pub fn m(&self, x: usize) -> f64 {
        self.m[x]
    }
    pub fn b(&self, x: usize, y: usize) -> f64 {
        self.b[(x, y)]
    }
    pub fn weights(&self) -> &RMat {
        &self.b
    }
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn edge_id(&self, x: usize, y: usize) -> Option<usize> {
        self.edge_index.get(&(x, y)).copied()
    }
    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&y| self.b[(x, y)] > 0.0)
    }
    /// Transition rate `P(x, y) = b(x, y)/m(x)`.
    pub fn p(&self, x: usize, y: usize) -> f64 {
        self.b[(x, y)] / self.m[x]
    }
    /// `deg(x) = Σ_y P(x, y)`.
    pub fn deg(&self, x: usize) -> f64 {
        (0..self.n()).map(|y| self.p(x, y)).sum()
    }
    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            vertices: self.labels.clone(),
            m: self
                .labels
                .iter()
                .cloned()
                .zip(self.m.iter().copied())
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|(x, y)| x < y)
                .map(|&(x, y)| {
                    (
                        self.labels[x].clone(),
                        self.labels[y].clone(),
                        self.b[(x, y)],
                    )
                })
                .collect(),
        }
    }

    /// Matrix of `∂` (edges × vertices).
    pub fn gradient_matrix(&self) -> RMat {
        let mut d = RMat::zeros(self.edges.len(), self.n());
        for (k, &(x, y)) in self.edges.iter().enumerate() {
            d[(k, x)] = 1.0;
            d[(k, y)] = -1.0;
        }
        d
    }

    /// Matrix of `∂*` with respect to the weighted inner products.
    pub fn gradient_adjoint_matrix(&self) -> RMat {
        let mut a = RMat::zeros(self.n(), self.edges.len());
        for (k, &(x, y)) in self.edges.iter().enumerate() {
            let w = self.b[(x, y)];
            a[(x, k)] += w / (2.0 * self.m[x]);
            a[(y, k)] -= w / (2.0 * self.m[y]);
        }
        a
    }

    /// Diagonal of the edge inner product, `b(x, y)/2`.
    pub fn edge_weights(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.edges.len(),
            self.edges.iter().map(|&(x, y)| 0.5 * self.b[(x, y)]),
        )
    }
}

pub fn inner_m(g: &WeightedGraph, f: &VertexFunction, h: &VertexFunction) -> Complex64 {
    (0..g.n()).map(|x| f[x].conj() * h[x] * g.m(x)).sum()
}

pub fn inner_edge(g: &WeightedGraph, xi: &EdgeField, eta: &EdgeField) -> Complex64 {
    g.edges()
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| xi[k].conj() * eta[k] * (0.5 * g.b(x, y)))
        .sum()
}

/// Dense matrix of `L`, `Lf(x) = (1/m(x)) Σ_y b(x,y)(f(x) − f(y))`.
pub fn laplacian(g: &WeightedGraph) -> RMat {
    let n = g.n();
    let mut l = RMat::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x != y {
                let p = g.p(x, y);
                l[(x, y)] = -p;
                l[(x, x)] += p;
            }
        }
    }
    l
}

pub fn apply(l: &RMat, f: &CVec) -> CVec {
    l.map(c) * f
}

pub fn gradient(g: &WeightedGraph, f: &VertexFunction) -> EdgeField {
    CVec::from_iterator(g.edges().len(), g.edges().iter().map(|&(x, y)| f[x] - f[y]))
}

pub fn gradient_adjoint(g: &WeightedGraph, xi: &EdgeField) -> VertexFunction {
    let mut out = CVec::zeros(g.n());
    for (k, &(x, y)) in g.edges().iter().enumerate() {
        let w = g.b(x, y);
        out[x] += xi[k] * (w / (2.0 * g.m(x)));
        out[y] -= xi[k] * (w / (2.0 * g.m(y)));
    }
    out
}

/// `Γ(f, h)(x) = (1/2m(x)) Σ_y b(x,y) conj(f(x) − f(y)) (h(x) − h(y))`.
pub fn carre_du_champ(g: &WeightedGraph, f: &VertexFunction, h: &VertexFunction) -> VertexFunction {
    let mut out = CVec::zeros(g.n());
    for &(x, y) in g.edges() {
        out[x] += (f[x] - f[y]).conj() * (h[x] - h[y]) * (g.b(x, y) / (2.0 * g.m(x)));
    }
    out
}

/// `Γ₂(f, h) = ½(Γ(Lf, h) + Γ(f, Lh) − LΓ(f, h))`.
pub fn gamma2(g: &WeightedGraph, f: &VertexFunction, h: &VertexFunction) -> VertexFunction {
    let l = laplacian(g);
    let lf = apply(&l, f);
    let lh = apply(&l, h);
    let gam = carre_du_champ(g, f, h);
    (carre_du_champ(g, &lf, h) + carre_du_champ(g, f, &lh) - apply(&l, &gam)) * c(0.5)
}

/// Spectral data of `L` in the `m`-weighted inner product: eigenvalues
/// (ascending) and eigenvectors of `D^{1/2} L D^{-1/2}`.
fn symmetric_spectrum(g: &WeightedGraph) -> (Vec<f64>, RMat) {
    let n = g.n();
    let l = laplacian(g);
    let s = RMat::from_fn(n, n, |x, y| g.m(x).sqrt() * l[(x, y)] / g.m(y).sqrt());
    eigh(&s)
}

fn spectral_function(g: &WeightedGraph, f: impl Fn(f64) -> f64) -> RMat {
    let n = g.n();
    let (vals, u) = symmetric_spectrum(g);
    let mid = &u
        * RMat::from_diagonal(&DVector::from_iterator(n, vals.iter().map(|&v| f(v))))
        * u.transpose();
    RMat::from_fn(n, n, |x, y| mid[(x, y)] * g.m(y).sqrt() / g.m(x).sqrt())
}

/// `P_t = e^{-tL}` via the symmetric eigen-decomposition.
pub fn heat_semigroup(g: &WeightedGraph, t: f64) -> Result<RMat> {
    if !(t >= 0.0) {
        return Err(CurvError::Invalid(format!(
            "time must be nonnegative (got {t})"
        )));
    }
    Ok(spectral_function(g, |v| (-t * v.max(0.0)).exp()))
}

/// Moore-Penrose inverse of `L` for the `m`-weighted inner product.
pub fn laplacian_pinv(g: &WeightedGraph) -> RMat {
    let (vals, _) = symmetric_spectrum(g);
    let top = vals.last().copied().unwrap_or(0.0).abs().max(1e-300);
    spectral_function(g, |v| if v.abs() > 1e-12 * top { 1.0 / v } else { 0.0 })
}

/// Complexify a dense real operator.
pub fn complexify(m: &RMat) -> CMat {
    m.map(c)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::par::task_rng;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn random_graph(seed: u64, n: usize, density: f64) -> WeightedGraph {
        let mut rng = task_rng(seed, 0);
        let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let mut b = RMat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || rng.random_bool(density) {
                    let w = rng.random_range(0.1..2.0);
                    b[(i, j)] = w;
                    b[(j, i)] = w;
                }
            }
        }
        WeightedGraph::from_weights(m, b).unwrap()
    }

    pub(crate) fn random_function(seed: u64, n: usize) -> CVec {
        let mut rng = task_rng(seed, 1);
        CVec::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    pub(crate) fn two_point(lambda: f64) -> WeightedGraph {
        let b = RMat::from_row_slice(
            2,
            2,
            &[0.0, lambda * (1.0 - lambda), lambda * (1.0 - lambda), 0.0],
        );
        WeightedGraph::from_weights(vec![lambda, 1.0 - lambda], b).unwrap()
    }

    fn spec(vertices: &[&str], m: &[(&str, f64)], edges: &[(&str, &str, f64)]) -> GraphSpec {
        GraphSpec {
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            m: m.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            edges: edges
                .iter()
                .map(|(a, b, w)| (a.to_string(), b.to_string(), *w))
                .collect(),
        }
    }

    #[test]
    fn build_graph_validation() {
        let ok = spec(&["0", "1"], &[("0", 0.5), ("1", 0.5)], &[("0", "1", 0.25)]);
        let g = build_graph(&ok).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 0)]);
        assert_eq!(build_graph(&g.to_spec()).unwrap(), g);
        let zero_m = spec(&["0", "1"], &[("0", 0.0), ("1", 0.5)], &[("0", "1", 0.25)]);
        assert!(build_graph(&zero_m).is_err());
        let loop_ = spec(&["0", "1"], &[("0", 0.5), ("1", 0.5)], &[("0", "0", 1.0)]);
        assert!(build_graph(&loop_).is_err());
        let neg = spec(&["0", "1"], &[("0", 0.5), ("1", 0.5)], &[("0", "1", -1.0)]);
        assert!(build_graph(&neg).is_err());
        let unknown = spec(&["0", "1"], &[("0", 0.5), ("1", 0.5)], &[("0", "7", 1.0)]);
        assert!(build_graph(&unknown).is_err());
        let dup = spec(
            &["0", "1"],
            &[("0", 0.5), ("1", 0.5)],
            &[("0", "1", 1.0), ("1", "0", 1.0)],
        );
        assert!(build_graph(&dup).is_err());
        let dupv = spec(&["0", "0"], &[("0", 0.5)], &[]);
        assert!(build_graph(&dupv).is_err());
    }

    #[test]
    fn two_point_laplacian() {
        for lambda in [0.1, 0.3, 0.5, 0.8] {
            let g = two_point(lambda);
            let f = CVec::from_vec(vec![c(1.7), c(-0.4)]);
            let lf = apply(&laplacian(&g), &f);
            assert!((lf[0] - c((1.0 - lambda) * (1.7 + 0.4))).norm() < 1e-14);
        }
    }

    #[test]
    fn complete_graph_laplacian_is_centering() {
        let m = vec![0.1, 0.2, 0.3, 0.4];
        let g = WeightedGraph::complete_product(m.clone()).unwrap();
        let f = random_function(3, 4);
        let mean: Complex64 = (0..4).map(|x| f[x] * m[x]).sum();
        let lf = apply(&laplacian(&g), &f);
        for x in 0..4 {
            assert!((lf[x] - (f[x] - mean)).norm() < 1e-14);
        }
    }

    #[test]
    fn gradient_examples() {
        let g = two_point(0.3);
        let f = CVec::from_vec(vec![c(1.0), c(0.0)]);
        let d = gradient(&g, &f);
        assert_eq!(d[g.edge_id(0, 1).unwrap()], c(1.0));
        assert_eq!(d[g.edge_id(1, 0).unwrap()], c(-1.0));
        let gr = random_graph(5, 6, 0.5);
        let one = CVec::from_element(6, c(2.5));
        assert!(gradient(&gr, &one).iter().all(|z| z.norm() == 0.0));
        assert!(gradient_adjoint(&gr, &CVec::zeros(gr.edges().len()))
            .iter()
            .all(|z| z.norm() == 0.0));
    }

    #[test]
    fn adjoint_against_dense_transpose_oracle() {
        // On K_3 build ∂ as a matrix and form its adjoint as M_m^{-1} ∂^T W.
        let g = WeightedGraph::complete_product(vec![0.2, 0.3, 0.5]).unwrap();
        let d = g.gradient_matrix();
        let w = RMat::from_diagonal(&g.edge_weights());
        let minv = RMat::from_diagonal(&DVector::from_iterator(
            3,
            g.measure().iter().map(|v| 1.0 / v),
        ));
        let oracle = minv * d.transpose() * w;
        assert!(max_abs(&(oracle - g.gradient_adjoint_matrix())) < 1e-15);
        let xi = random_function(9, g.edges().len());
        let f = random_function(10, 3);
        let lhs = inner_m(&g, &gradient_adjoint(&g, &xi), &f);
        let rhs = inner_edge(&g, &xi, &gradient(&g, &f));
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn carre_du_champ_complete_graph() {
        let m = vec![0.15, 0.25, 0.6];
        let g = WeightedGraph::complete_product(m.clone()).unwrap();
        for x in 0..3 {
            let mut f = CVec::zeros(3);
            f[x] = c(1.0);
            let gam = carre_du_champ(&g, &f, &f);
            assert!((gam[x].re - 0.5 * (1.0 - m[x])).abs() < 1e-14);
            let total = inner_m(&g, &CVec::from_element(3, c(1.0)), &gam);
            assert!((total.re - m[x] * (1.0 - m[x])).abs() < 1e-14);
            let lhs = gamma2(&g, &f, &f) * c(2.0);
            for y in 0..3 {
                assert!((lhs[y] - gam[y] - total).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn gamma2_matches_semigroup_derivative() {
        let n = 4;
        let g = WeightedGraph::from_weights(
            vec![0.5, 1.0, 1.5, 0.7],
            RMat::from_fn(n, n, |i, j| {
                if i == j {
                    0.0
                } else {
                    0.3 + 0.1 * (i + j) as f64
                }
            }),
        )
        .unwrap();
        let f = random_function(21, n);
        let s = 0.5;
        let phi = |t: f64| {
            let pt = complexify(&heat_semigroup(&g, t).unwrap());
            let inner = &complexify(&heat_semigroup(&g, s - t).unwrap()) * &f;
            pt * carre_du_champ(&g, &inner, &inner)
        };
        // Second-order one-sided difference at t = 0.
        let h = 1e-4;
        let deriv =
            (phi(2.0 * h) * c(-1.0) + phi(h) * c(4.0) - phi(0.0) * c(3.0)) * c(1.0 / (2.0 * h));
        let ps = &complexify(&heat_semigroup(&g, s).unwrap()) * &f;
        let oracle = gamma2(&g, &ps, &ps) * c(2.0);
        assert!((deriv - oracle).norm() < 1e-6);
    }

    #[test]
    fn heat_semigroup_examples() {
        let g = two_point(0.5);
        assert!(max_abs(&(heat_semigroup(&g, 0.0).unwrap() - RMat::identity(2, 2))) < 1e-14);
        for t in [0.1, 1.0, 3.0] {
            let p = heat_semigroup(&g, t).unwrap();
            let e = (-t).exp();
            assert!((p[(0, 0)] - 0.5 * (1.0 + e)).abs() < 1e-14);
            assert!((p[(0, 1)] - 0.5 * (1.0 - e)).abs() < 1e-14);
        }
        let k3 = WeightedGraph::complete_product(vec![1.0 / 3.0; 3]).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let p = heat_semigroup(&k3, t).unwrap();
            for x in 0..3 {
                assert!((p.row(x).sum() - 1.0).abs() < 1e-12);
            }
        }
        assert!(heat_semigroup(&g, -1.0).is_err());
    }

    #[test]
    fn laplacian_pinv_is_pseudo_inverse() {
        let g = random_graph(4, 5, 0.4);
        let l = laplacian(&g);
        let lp = laplacian_pinv(&g);
        assert!(max_abs(&(&l * &lp * &l - &l)) < 1e-10);
    }

    proptest! {
        #[test]
        fn structural_identities(seed in 0u64..10_000, n in 2usize..7) {
            let g = random_graph(seed, n, 0.5);
            let l = laplacian(&g);
            // L = ∂*∂
            let dd = g.gradient_adjoint_matrix() * g.gradient_matrix();
            prop_assert!(max_abs(&(dd - &l)) <= 1e-12);
            let f = random_function(seed, n);
            let h = random_function(seed + 1, n);
            // self-adjointness and the gradient pairing
            let lhs = inner_m(&g, &f, &apply(&l, &h));
            prop_assert!((lhs - inner_m(&g, &apply(&l, &f), &h)).norm() <= 1e-12);
            prop_assert!((lhs - inner_edge(&g, &gradient(&g, &f), &gradient(&g, &h))).norm() <= 1e-12);
            prop_assert!((gradient_adjoint(&g, &gradient(&g, &f)) - apply(&l, &f)).norm() <= 1e-12);
            // carré du champ
            let gam = carre_du_champ(&g, &f, &f);
            prop_assert!(gam.iter().all(|z| z.re >= -1e-15 && z.im.abs() <= 1e-15));
            let conj = carre_du_champ(&g, &f.map(|z| z.conj()), &f.map(|z| z.conj()));
            prop_assert!((&gam - conj).norm() <= 1e-12);
            let prod = f.zip_map(&h, |a, b| a.conj() * b);
            let formula = (apply(&l, &f).map(|z| z.conj()).component_mul(&h)
                + f.map(|z| z.conj()).component_mul(&apply(&l, &h))
                - apply(&l, &prod)) * c(0.5);
            prop_assert!((carre_du_champ(&g, &f, &h) - formula).norm() <= 1e-12);
            let one = CVec::from_element(n, c(1.0));
            prop_assert!(apply(&l, &one).norm() <= 1e-12);
        }

        #[test]
        fn heat_semigroup_properties(seed in 0u64..10_000, n in 2usize..6, s in 0.0f64..3.0, t in 0.0f64..3.0) {
            let g = random_graph(seed, n, 0.6);
            let ps = heat_semigroup(&g, s).unwrap();
            let pt = heat_semigroup(&g, t).unwrap();
            let pst = heat_semigroup(&g, s + t).unwrap();
            prop_assert!(max_abs(&(&ps * &pt - pst)) <= 1e-10);
            prop_assert!(pt.iter().all(|&v| v >= -1e-12));
            for x in 0..n {
                prop_assert!((pt.row(x).sum() - 1.0).abs() <= 1e-10);
                for y in 0..n {
                    prop_assert!((g.m(x) * pt[(x, y)] - g.m(y) * pt[(y, x)]).abs() <= 1e-10);
                }
            }
            let expm = (laplacian(&g) * (-t)).exp();
            prop_assert!(max_abs(&(expm - pt)) <= 1e-9);
        }
    }
}
