//! Numerical kernels shared by every curvature computation: generalized
//! eigenvalue pencils with a positive semidefinite right-hand side, and a
//! seeded random search with local refinement on the unit sphere.

use nalgebra::{ComplexField, DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CurvError, Result};
use crate::linalg::{eigh, hermitian_defect, max_abs};
use crate::par::{task_rng, Executor};

/// Relative eigenvalue cut below which the right form is treated as singular.
pub const DEFAULT_TRUNCATION: f64 = 1e-11;

/// A pair of Hermitian forms `(left, right)` with `right ⪰ 0`.
#[derive(Debug, Clone)]
pub struct PencilProblem<T: ComplexField<RealField = f64>> {
    pub left: DMatrix<T>,
    pub right: DMatrix<T>,
    pub truncation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PencilOutcome<T: ComplexField<RealField = f64>> {
    /// `value` may be `-inf` for [`loewner_pencil`] when no finite constant works.
    Value {
        value: f64,
        witness: DVector<T>,
    },
    EmptyRange,
}

impl<T: ComplexField<RealField = f64>> PencilOutcome<T> {
    pub fn value(&self) -> Option<f64> {
        match self {
            PencilOutcome::Value { value, .. } => Some(*value),
            PencilOutcome::EmptyRange => None,
        }
    }
}

impl<T: ComplexField<RealField = f64>> PencilProblem<T> {
    pub fn new(left: DMatrix<T>, right: DMatrix<T>) -> Self {
        Self {
            left,
            right,
            truncation: DEFAULT_TRUNCATION,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.left.nrows();
        if self.left.ncols() != n || self.right.nrows() != n || self.right.ncols() != n {
            return Err(CurvError::Invalid(
                "pencil matrices must be square of equal size".into(),
            ));
        }
        for m in [&self.left, &self.right] {
            let d = hermitian_defect(m);
            if d > 1e-12 * max_abs(m).max(1.0) {
                return Err(CurvError::NotHermitian(d));
            }
        }
        Ok(())
    }
}

struct Whitened<T: ComplexField<RealField = f64>> {
    /// Range basis scaled so that `wr* right wr = I`.
    wr: DMatrix<T>,
    /// Orthonormal basis of the discarded kernel.
    uk: DMatrix<T>,
}

fn whiten<T: ComplexField<RealField = f64>>(right: &DMatrix<T>, trunc: f64) -> Option<Whitened<T>> {
    let n = right.nrows();
    let (vals, u) = eigh(right);
    let top = vals.last().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return None;
    }
    let kept: Vec<usize> = (0..n).filter(|&k| vals[k] > trunc * top).collect();
    let dropped: Vec<usize> = (0..n).filter(|&k| vals[k] <= trunc * top).collect();
    let wr = DMatrix::from_fn(n, kept.len(), |r, k| {
        u[(r, kept[k])].clone() * T::from_real(1.0 / vals[kept[k]].sqrt())
    });
    let uk = DMatrix::from_fn(n, dropped.len(), |r, k| u[(r, dropped[k])].clone());
    Some(Whitened { wr, uk })
}

/// Minimum of `x* left x / x* right x` over `x` in the retained range of
/// `right`.
pub fn pencil_min_eig<T: ComplexField<RealField = f64>>(
    p: &PencilProblem<T>,
) -> Result<PencilOutcome<T>> {
    p.validate()?;
    let Some(w) = whiten(&p.right, p.truncation) else {
        return Ok(PencilOutcome::EmptyRange);
    };
    let a = w.wr.adjoint() * &p.left * &w.wr;
    let (vals, u) = eigh(&a);
    Ok(PencilOutcome::Value {
        value: vals[0],
        witness: &w.wr * u.column(0),
    })
}

/// Largest `K` with `left − K·right ⪰ 0` on the whole space.
///
/// Unlike [`pencil_min_eig`], directions in the kernel of `right` are not
/// discarded: they enter through a Schur complement. If `left` is indefinite
/// on that kernel, or couples to a kernel direction it does not control, the
/// answer is `-inf`.
pub fn loewner_pencil<T: ComplexField<RealField = f64>>(
    p: &PencilProblem<T>,
) -> Result<PencilOutcome<T>> {
    p.validate()?;
    let Some(w) = whiten(&p.right, p.truncation) else {
        return Ok(PencilOutcome::EmptyRange);
    };
    let a = w.wr.adjoint() * &p.left * &w.wr;
    if w.uk.ncols() == 0 {
        let (vals, u) = eigh(&a);
        return Ok(PencilOutcome::Value {
            value: vals[0],
            witness: &w.wr * u.column(0),
        });
    }
    let scale = max_abs(&p.left).max(1.0);
    let c_tol = 1e-10 * scale;
    let b = w.wr.adjoint() * &p.left * &w.uk;
    let cm = w.uk.adjoint() * &p.left * &w.uk;
    let (cv, cu) = eigh(&cm);
    if cv[0] < -c_tol {
        return Ok(PencilOutcome::Value {
            value: f64::NEG_INFINITY,
            witness: &w.uk * cu.column(0),
        });
    }
    let coup_tol = 1e-7 * scale.max(max_abs(&a));
    let mut schur = a.clone();
    for k in 0..cv.len() {
        let bc = &b * cu.column(k);
        if cv[k] > c_tol {
            schur -= (&bc * bc.adjoint()) * T::from_real(1.0 / cv[k]);
        } else if bc.norm() > coup_tol {
            return Ok(PencilOutcome::Value {
                value: f64::NEG_INFINITY,
                witness: &w.uk * cu.column(k),
            });
        }
    }
    let (vals, u) = eigh(&schur);
    let top = u.column(0).into_owned();
    // x = wr·u − uk·C⁺·B*·u
    let mut tail = DVector::<T>::zeros(cv.len());
    let btu = b.adjoint() * &top;
    for k in 0..cv.len() {
        if cv[k] > c_tol {
            let coef = cu.column(k).adjoint() * &btu;
            tail += cu.column(k) * (coef[(0, 0)].clone() * T::from_real(1.0 / cv[k]));
        }
    }
    let witness = &w.wr * &top - &w.uk * tail;
    Ok(PencilOutcome::Value {
        value: vals[0],
        witness,
    })
}

/// Budget for [`sphere_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub samples: usize,
    pub steps: usize,
    pub seed: u64,
    pub exec: Executor,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            samples: 512,
            steps: 200,
            seed: 0,
            exec: Executor::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub evaluations: usize,
}

pub fn normalized(mut x: Vec<f64>) -> Vec<f64> {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    } else if let Some(first) = x.first_mut() {
        *first = 1.0;
    }
    x
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Random point on the unit sphere of `R^dim`.
pub fn random_unit(rng: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    normalized((0..dim).map(|_| StandardNormal.sample(rng)).collect())
}

/// Projected descent with central-difference gradients and step halving.
/// `project` maps an arbitrary point back onto the feasible set. Returns the
/// best value seen, its point, and the number of objective evaluations.
pub fn projected_descent<F, P>(
    f: &F,
    project: &P,
    x0: Vec<f64>,
    f0: f64,
    steps: usize,
) -> (f64, Vec<f64>, usize)
where
    F: Fn(&[f64]) -> f64,
    P: Fn(Vec<f64>) -> Vec<f64>,
{
    const H: f64 = 1e-6;
    let dim = x0.len();
    let (mut x, mut fx) = (x0, f0);
    let (mut best, mut best_x) = (f0, x.clone());
    let mut evals = 0;
    let mut alpha = 0.25;
    let mut grad: Option<Vec<f64>> = None;
    for _ in 0..steps {
        if grad.is_none() {
            let mut g = vec![0.0; dim];
            for k in 0..dim {
                let mut xp = x.clone();
                xp[k] += H;
                let mut xm = x.clone();
                xm[k] -= H;
                let (fp, fm) = (sanitize(f(&project(xp))), sanitize(f(&project(xm))));
                evals += 2;
                g[k] = (fp - fm) / (2.0 * H);
            }
            // Drop the component normal to the feasible set.
            let moved = project(x.iter().zip(&g).map(|(a, b)| a - H * b).collect());
            let g: Vec<f64> = x.iter().zip(&moved).map(|(a, b)| (a - b) / H).collect();
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !gn.is_finite() || gn < 1e-14 {
                break;
            }
            grad = Some(g.into_iter().map(|v| v / gn).collect());
        }
        let g = grad.as_ref().expect("gradient computed above");
        let y = project(x.iter().zip(g).map(|(a, b)| a - alpha * b).collect());
        let fy = sanitize(f(&y));
        evals += 1;
        if fy < fx {
            x = y;
            fx = fy;
            grad = None;
            alpha = (alpha * 1.5).min(1.0);
            if fx < best {
                best = fx;
                best_x = x.clone();
            }
        } else {
            alpha *= 0.5;
            if alpha < 1e-12 {
                break;
            }
        }
    }
    (best, best_x, evals)
}

/// Random search followed by local refinement.
///
/// Sample `i` is drawn by `sample` from its own stream of the master seed.
/// Every sample that improves on all earlier samples is refined by
/// [`projected_descent`]. That set only grows as `samples` grows with the
/// same seed, so the returned estimate never gets worse with a larger budget.
pub fn sampled_search<F, S, P>(
    objective: F,
    sample: S,
    project: P,
    cfg: &SearchConfig,
) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
    S: Fn(&mut rand_chacha::ChaCha8Rng) -> Vec<f64> + Sync + Send,
    P: Fn(Vec<f64>) -> Vec<f64> + Sync + Send,
{
    let samples = cfg.samples.max(1);
    let seed = cfg.seed;
    let evaluated: Vec<(f64, Vec<f64>)> = cfg.exec.map(samples, |i| {
        let x = project(sample(&mut task_rng(seed, i as u64)));
        (sanitize(objective(&x)), x)
    });
    let mut records = vec![0];
    let mut running = evaluated[0].0;
    for (i, (v, _)) in evaluated.iter().enumerate().skip(1) {
        if *v < running {
            running = *v;
            records.push(i);
        }
    }
    let refined = cfg.exec.map(records.len(), |r| {
        let (v, x) = &evaluated[records[r]];
        if v.is_finite() {
            projected_descent(&objective, &project, x.clone(), *v, cfg.steps)
        } else {
            (*v, x.clone(), 0)
        }
    });
    let mut evaluations = samples;
    let mut best = (evaluated[0].0, evaluated[0].1.clone());
    for (v, x) in &evaluated {
        if *v < best.0 {
            best = (*v, x.clone());
        }
    }
    for (v, x, e) in refined {
        evaluations += e;
        if v < best.0 {
            best = (v, x);
        }
    }
    SearchResult {
        value: best.0,
        argmin: best.1,
        evaluations,
    }
}

/// Estimate `inf f` on the unit sphere of `R^dim`.
pub fn sphere_search<F>(objective: F, dim: usize, cfg: &SearchConfig) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    sampled_search(objective, |rng| random_unit(rng, dim), normalized, cfg)
}

/// Split a real vector of length `2n` into a complex vector of length `n`.
pub fn as_complex(x: &[f64]) -> DVector<num_complex::Complex64> {
    let n = x.len() / 2;
    DVector::from_fn(n, |k, _| {
        num_complex::Complex64::new(x[2 * k], x[2 * k + 1])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMat, RMat};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_sym(rng: &mut impl Rng, n: usize) -> RMat {
        let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn identity_pencil_is_one() {
        let p = PencilProblem::new(RMat::identity(4, 4), RMat::identity(4, 4));
        assert!((pencil_min_eig(&p).unwrap().value().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_right_is_empty() {
        let p = PencilProblem::new(RMat::identity(3, 3), RMat::zeros(3, 3));
        assert_eq!(pencil_min_eig(&p).unwrap(), PencilOutcome::EmptyRange);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut l = RMat::identity(2, 2);
        l[(0, 1)] = 1.0;
        assert!(pencil_min_eig(&PencilProblem::new(l, RMat::identity(2, 2))).is_err());
    }

    #[test]
    fn restricted_pencil_vs_monte_carlo_rayleigh() {
        let mut rng = task_rng(7, 0);
        let n = 6;
        let left = random_sym(&mut rng, n);
        // Rank-2 right form: the range is a plane, so 10^5 directions resolve
        // the minimum finely.
        let g = RMat::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let right = &g * g.transpose();
        let value = pencil_min_eig(&PencilProblem::new(left.clone(), right.clone()))
            .unwrap()
            .value()
            .unwrap();
        let mut min_q = f64::INFINITY;
        for _ in 0..100_000 {
            let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let y = nalgebra::DVector::from_vec(vec![th.cos(), th.sin()]);
            let x = &g * y;
            let q = (x.transpose() * &left * &x)[(0, 0)] / (x.transpose() * &right * &x)[(0, 0)];
            assert!(value <= q + 1e-10);
            min_q = min_q.min(q);
        }
        assert!(
            min_q - value < 1e-6,
            "Monte-Carlo minimum {min_q} far from {value}"
        );
        // Rayleigh quotient of the witness is the value itself.
        let PencilOutcome::Value { witness, .. } =
            pencil_min_eig(&PencilProblem::new(left.clone(), right.clone())).unwrap()
        else {
            unreachable!()
        };
        let q = (witness.transpose() * &left * &witness)[(0, 0)]
            / (witness.transpose() * &right * &witness)[(0, 0)];
        assert!((q - value).abs() < 1e-9);
    }

    #[test]
    fn loewner_full_rank_matches_restricted() {
        let mut rng = task_rng(3, 1);
        let left = random_sym(&mut rng, 5);
        let g = RMat::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let right = &g * g.transpose() + RMat::identity(5, 5);
        let p = PencilProblem::new(left, right);
        let a = pencil_min_eig(&p).unwrap().value().unwrap();
        let b = loewner_pencil(&p).unwrap().value().unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn loewner_is_the_largest_admissible_constant() {
        // left = [[2,1],[1,1]], right = diag(1,0): left − K right ⪰ 0 iff K ≤ 1.
        let left = RMat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let right = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = PencilProblem::new(left, right);
        assert!((loewner_pencil(&p).unwrap().value().unwrap() - 1.0).abs() < 1e-12);
        assert!((pencil_min_eig(&p).unwrap().value().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn loewner_detects_uncontrolled_kernel() {
        let left = RMat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let right = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let v = loewner_pencil(&PencilProblem::new(left, right))
            .unwrap()
            .value()
            .unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        let left = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let right = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let v = loewner_pencil(&PencilProblem::new(left, right))
            .unwrap()
            .value()
            .unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn complex_pencil_identity() {
        let l = CMat::identity(3, 3) * Complex64::new(2.0, 0.0);
        let p = PencilProblem::new(l, CMat::identity(3, 3));
        assert!((loewner_pencil(&p).unwrap().value().unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_search_constant() {
        let r = sphere_search(
            |_| 3.5,
            4,
            &SearchConfig {
                samples: 16,
                steps: 5,
                ..Default::default()
            },
        );
        assert_eq!(r.value, 3.5);
    }

    #[test]
    fn sphere_search_quadratic_min_eig() {
        let mut rng = task_rng(11, 0);
        let m = random_sym(&mut rng, 5);
        let (vals, _) = eigh(&m);
        let r = sphere_search(
            |x| {
                let v = nalgebra::DVector::from_column_slice(x);
                (v.transpose() * &m * &v)[(0, 0)]
            },
            5,
            &SearchConfig {
                samples: 64,
                steps: 200,
                seed: 1,
                ..Default::default()
            },
        );
        assert!(
            (r.value - vals[0]).abs() < 1e-6,
            "{} vs {}",
            r.value,
            vals[0]
        );
    }

    #[test]
    fn sphere_search_reproducible_and_budget_monotone() {
        let f = |x: &[f64]| (3.0 * x[0]).sin() + x[1] * x[2] - 0.3 * x[3];
        let cfg = SearchConfig {
            samples: 40,
            steps: 30,
            seed: 9,
            ..Default::default()
        };
        let a = sphere_search(f, 4, &cfg);
        let b = sphere_search(f, 4, &cfg);
        assert_eq!(a, b);
        let seq = sphere_search(
            f,
            4,
            &SearchConfig {
                exec: Executor::Sequential,
                ..cfg
            },
        );
        assert_eq!(a, seq);
        let mut last = f64::INFINITY;
        for samples in [1, 5, 20, 80] {
            let r = sphere_search(f, 4, &SearchConfig { samples, ..cfg });
            assert!(r.value <= last);
            last = r.value;
        }
    }

    proptest! {
        #[test]
        fn loewner_invariant_under_congruence(seed in 0u64..500) {
            let mut rng = task_rng(seed, 0);
            let n = 5;
            let left = random_sym(&mut rng, n);
            let g = RMat::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            // Add a PSD kernel contribution so the Schur complement is finite.
            let right = &g * g.transpose();
            let left = left + RMat::identity(n, n) * 4.0;
            let s = RMat::identity(n, n) + RMat::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
            let p1 = PencilProblem::new(left.clone(), right.clone());
            let p2 = PencilProblem::new(s.transpose() * &left * &s, s.transpose() * &right * &s);
            let a = loewner_pencil(&p1).unwrap().value().unwrap();
            let b = loewner_pencil(&p2).unwrap().value().unwrap();
            prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
            let full = &right + RMat::identity(n, n);
            let p1 = PencilProblem::new(left.clone(), full.clone());
            let p2 = PencilProblem::new(s.transpose() * &left * &s, s.transpose() * &full * &s);
            let a = pencil_min_eig(&p1).unwrap().value().unwrap();
            let b = pencil_min_eig(&p2).unwrap().value().unwrap();
            prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        }
    }
}
