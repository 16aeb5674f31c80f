//! Reconstruction algorithms that see a function only through its values
//! at `N` points fixed in advance, and the reference baselines.

mod external;

pub use external::{
    external_algorithm, ExternalAlgorithm, ExternalAlgorithmSpec, ExternalProcess, ExternalReconstruction,
};

use serde::{Deserialize, Serialize};

use crate::points::{balanced_midpoint_grid, iid_uniform, LinfIndex, PointSet};
use crate::protocol::ProtocolError;
use crate::quadrature::{EvalError, Evaluable, Zero};

/// A reconstructed function. `close` releases external resources and
/// reports failures that only surface at shutdown (for example a nonzero
/// exit status).
pub trait Reconstruction: Evaluable {
    fn close(self: Box<Self>) -> Result<(), ProtocolError> {
        Ok(())
    }
}

impl Evaluable for Box<dyn Reconstruction> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        (**self).eval_batch(xs, out)
    }
}

impl Reconstruction for Zero {}

/// Whether calls into an algorithm may overlap across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concurrency {
    Reentrant,
    /// The harness serializes trials of this algorithm.
    Serial,
}

/// How the harness checks the number of sampled points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Exactly `N` points in every trial.
    Exact,
    /// A per-trial count whose empirical mean must not exceed `N`.
    Expected,
}

/// One trial of a sampling algorithm: the points are fixed when the session
/// starts, before any function value is revealed.
pub trait Session: Send {
    fn points(&self) -> &PointSet;
    fn finish(self: Box<Self>, values: &[f64]) -> Result<Box<dyn Reconstruction>, ProtocolError>;
}

/// A (possibly randomized) nonadaptive reconstruction method.
///
/// `omega` seeds the algorithm's own randomness for one trial; deterministic
/// methods ignore it.
pub trait ReconstructionAlgorithm: Send + Sync {
    fn name(&self) -> String;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Reentrant
    }

    fn budget(&self) -> Budget {
        Budget::Exact
    }

    fn start(&self, n: usize, d: usize, omega: u64) -> Result<Box<dyn Session + '_>, ProtocolError>;
}

/// Deterministic algorithm given by a point plan and a reconstruction map.
/// Implementors get [`ReconstructionAlgorithm`] for free.
pub trait Nonadaptive: Send + Sync {
    fn name(&self) -> String;
    fn plan(&self, n: usize, d: usize) -> PointSet;
    fn reconstruct(&self, points: &PointSet, values: &[f64]) -> Box<dyn Reconstruction>;
}

struct PlannedSession<'a, A: ?Sized> {
    alg: &'a A,
    points: PointSet,
}

impl<A: Nonadaptive + ?Sized> Session for PlannedSession<'_, A> {
    fn points(&self) -> &PointSet {
        &self.points
    }

    fn finish(self: Box<Self>, values: &[f64]) -> Result<Box<dyn Reconstruction>, ProtocolError> {
        Ok(self.alg.reconstruct(&self.points, values))
    }
}

impl<A: Nonadaptive> ReconstructionAlgorithm for A {
    fn name(&self) -> String {
        Nonadaptive::name(self)
    }

    fn start(&self, n: usize, d: usize, _omega: u64) -> Result<Box<dyn Session + '_>, ProtocolError> {
        let points = self.plan(n, d);
        Ok(Box::new(PlannedSession { alg: self, points }))
    }
}

/// Samples a midpoint grid and always returns the zero function.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroAlgorithm;

pub fn zero_algorithm() -> ZeroAlgorithm {
    ZeroAlgorithm
}

impl Nonadaptive for ZeroAlgorithm {
    fn name(&self) -> String {
        "zero".into()
    }

    fn plan(&self, n: usize, d: usize) -> PointSet {
        balanced_midpoint_grid(n, d)
    }

    fn reconstruct(&self, points: &PointSet, _values: &[f64]) -> Box<dyn Reconstruction> {
        Box::new(Zero(points.dim()))
    }
}

/// Where the nearest-neighbour method places its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Cell midpoints of a tensor grid with balanced per-axis counts.
    Grid,
    /// I.i.d. uniform points from a fixed seed (the same for every trial).
    Iid { seed: u64 },
}

impl Layout {
    pub fn points(&self, n: usize, d: usize) -> PointSet {
        match *self {
            Layout::Grid => balanced_midpoint_grid(n, d),
            Layout::Iid { seed } => iid_uniform(n, d, seed),
        }
    }
}

/// Piecewise-constant reconstruction on `ℓ∞` Voronoi cells.
#[derive(Debug, Clone, Copy)]
pub struct NearestNeighbor {
    pub layout: Layout,
}

pub fn nearest_neighbor_algorithm(layout: Layout) -> NearestNeighbor {
    NearestNeighbor { layout }
}

impl Nonadaptive for NearestNeighbor {
    fn name(&self) -> String {
        match self.layout {
            Layout::Grid => "nearest_neighbor(grid)".into(),
            Layout::Iid { seed } => format!("nearest_neighbor(iid:{seed})"),
        }
    }

    fn plan(&self, n: usize, d: usize) -> PointSet {
        self.layout.points(n, d)
    }

    fn reconstruct(&self, points: &PointSet, values: &[f64]) -> Box<dyn Reconstruction> {
        Box::new(NearestNeighborFit {
            index: LinfIndex::new(points.clone()),
            values: values.to_vec(),
        })
    }
}

/// Value of the `ℓ∞`-nearest sample, lowest index on ties.
#[derive(Debug, Clone)]
pub struct NearestNeighborFit {
    index: LinfIndex,
    values: Vec<f64>,
}

impl Evaluable for NearestNeighborFit {
    fn dim(&self) -> usize {
        self.index.points().dim()
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (x, o) in xs.chunks_exact(self.dim()).zip(out.iter_mut()) {
            *o = self.values[self.index.nearest(x).0];
        }
        Ok(())
    }
}

impl Reconstruction for NearestNeighborFit {}

/// Tensor-product piecewise-linear interpolation on the uniform grid
/// `{0, 1/(m−1), …, 1}^d` with `m = ⌊N^{1/d}⌋`. When `N` is not a perfect
/// power the leftover budget is spent on repeated samples at the corners of
/// the cube, cycling through them in order; those repeats are ignored by the
/// interpolant.
#[derive(Debug, Clone, Copy, Default)]
pub struct Multilinear;

pub fn multilinear_interpolation_algorithm() -> Multilinear {
    Multilinear
}

/// Largest `m ≥ 1` with `m^d ≤ n`.
pub fn inscribed_side(n: usize, d: usize) -> usize {
    let mut m = (n as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    let pow = |m: usize| (0..d).try_fold(1usize, |acc, _| acc.checked_mul(m));
    while pow(m).map_or(true, |v| v > n) {
        m -= 1;
    }
    while pow(m + 1).is_some_and(|v| v <= n) {
        m += 1;
    }
    m
}

fn node(i: usize, m: usize) -> f64 {
    if m == 1 {
        0.5
    } else {
        i as f64 / (m - 1) as f64
    }
}

impl Nonadaptive for Multilinear {
    fn name(&self) -> String {
        "multilinear".into()
    }

    fn plan(&self, n: usize, d: usize) -> PointSet {
        let m = inscribed_side(n, d);
        let total = m.pow(d as u32);
        let mut ps = PointSet::new(d);
        let mut x = vec![0.0; d];
        for mut k in 0..total {
            for xa in x.iter_mut() {
                *xa = node(k % m, m);
                k /= m;
            }
            ps.push(&x);
        }
        for j in 0..n - total {
            let corner = j % (1usize << d.min(63));
            for (a, xa) in x.iter_mut().enumerate() {
                *xa = ((corner >> a) & 1) as f64;
            }
            ps.push(&x);
        }
        ps
    }

    fn reconstruct(&self, points: &PointSet, values: &[f64]) -> Box<dyn Reconstruction> {
        let d = points.dim();
        let m = inscribed_side(points.len(), d);
        Box::new(MultilinearFit {
            d,
            m,
            values: values[..m.pow(d as u32)].to_vec(),
        })
    }
}

/// Multilinear interpolant of grid values (first axis fastest).
#[derive(Debug, Clone)]
pub struct MultilinearFit {
    d: usize,
    m: usize,
    values: Vec<f64>,
}

impl MultilinearFit {
    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.m == 1 {
            return self.values[0];
        }
        let cells = (self.m - 1) as f64;
        let mut base = 0usize;
        let mut stride = 1usize;
        let mut frac = [0.0f64; 16];
        let mut strides = [0usize; 16];
        assert!(self.d <= 16, "multilinear interpolation supports d ≤ 16");
        for a in 0..self.d {
            let t = x[a].clamp(0.0, 1.0) * cells;
            let i = (t.floor() as usize).min(self.m - 2);
            frac[a] = t - i as f64;
            base += i * stride;
            strides[a] = stride;
            stride *= self.m;
        }
        let mut acc = 0.0;
        for corner in 0..1usize << self.d {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..self.d {
                if (corner >> a) & 1 == 1 {
                    w *= frac[a];
                    idx += strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        acc
    }
}

impl Evaluable for MultilinearFit {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        for (x, o) in xs.chunks_exact(self.d).zip(out.iter_mut()) {
            *o = self.eval(x);
        }
        Ok(())
    }
}

impl Reconstruction for MultilinearFit {}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::nearest_brute;
    use crate::rng;
    use rand::Rng;

    fn values_of(f: impl Fn(&[f64]) -> f64, pts: &PointSet) -> Vec<f64> {
        pts.iter().map(f).collect()
    }

    fn eval1(r: &dyn Evaluable, x: &[f64]) -> f64 {
        let mut out = [0.0];
        r.eval_batch(x, &mut out).unwrap();
        out[0]
    }

    #[test]
    fn zero_plan_and_reconstruction() {
        let alg = zero_algorithm();
        let pts = alg.plan(4, 2);
        assert_eq!(pts.len(), 4);
        assert!(pts.as_flat().iter().all(|v| (0.0..=1.0).contains(v)));
        let r = alg.reconstruct(&pts, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(eval1(r.as_ref(), &[0.3, 0.9]), 0.0);
    }

    #[test]
    fn nearest_neighbor_examples() {
        let alg = nearest_neighbor_algorithm(Layout::Grid);
        let one = PointSet::from_rows(2, &[vec![0.5, 0.5]]).unwrap();
        let r = alg.reconstruct(&one, &[3.5]);
        assert_eq!(eval1(r.as_ref(), &[0.0, 1.0]), 3.5);
        let ends = PointSet::from_rows(1, &[vec![0.0], vec![1.0]]).unwrap();
        let r = alg.reconstruct(&ends, &[0.0, 1.0]);
        assert_eq!(eval1(r.as_ref(), &[0.25]), 0.0);
        assert_eq!(eval1(r.as_ref(), &[0.5]), 0.0);
        assert_eq!(eval1(r.as_ref(), &[0.75]), 1.0);
    }

    #[test]
    fn nearest_neighbor_matches_brute_force() {
        let mut r = rng::derive(5, &[]);
        for layout in [Layout::Grid, Layout::Iid { seed: 9 }] {
            let alg = nearest_neighbor_algorithm(layout);
            let pts = alg.plan(60, 2);
            let values: Vec<f64> = (0..60).map(|i| i as f64).collect();
            let fit = alg.reconstruct(&pts, &values);
            for _ in 0..1000 {
                let q = [r.gen::<f64>(), r.gen::<f64>()];
                assert_eq!(eval1(fit.as_ref(), &q), values[nearest_brute(&pts, &q).0]);
            }
        }
    }

    #[test]
    fn inscribed_side_is_the_integer_root() {
        assert_eq!(inscribed_side(16, 2), 4);
        assert_eq!(inscribed_side(17, 2), 4);
        assert_eq!(inscribed_side(15, 2), 3);
        assert_eq!(inscribed_side(1, 3), 1);
        assert_eq!(inscribed_side(4096, 3), 16);
        assert_eq!(inscribed_side(4095, 3), 15);
        assert_eq!(inscribed_side(1 << 20, 1), 1 << 20);
    }

    #[test]
    fn multilinear_plan_spends_the_whole_budget() {
        let alg = multilinear_interpolation_algorithm();
        for n in [1, 2, 5, 9, 32, 100] {
            let pts = alg.plan(n, 2);
            assert_eq!(pts.len(), n);
            assert!(pts.as_flat().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(alg.plan(2, 1).as_flat(), &[0.0, 1.0]);
        assert_eq!(alg.plan(1, 1).as_flat(), &[0.5]);
    }

    #[test]
    fn multilinear_examples() {
        let alg = multilinear_interpolation_algorithm();
        let pts = alg.plan(2, 1);
        let fit = alg.reconstruct(&pts, &values_of(|x| x[0], &pts));
        for x in [0.0, 0.13, 0.5, 1.0] {
            assert!((eval1(fit.as_ref(), &[x]) - x).abs() < 1e-15);
        }
        let pts = alg.plan(27, 3);
        let fit = alg.reconstruct(&pts, &[2.5; 27]);
        assert!((eval1(fit.as_ref(), &[0.1, 0.7, 0.3]) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn multilinear_reproduces_multilinear_polynomials() {
        let alg = multilinear_interpolation_algorithm();
        let f = |x: &[f64]| 1.0 - 2.0 * x[0] + 0.5 * x[1] + 3.0 * x[0] * x[1] - x[0] * x[1] * x[2];
        let pts = alg.plan(30, 3);
        let fit = alg.reconstruct(&pts, &values_of(f, &pts));
        let mut r = rng::derive(8, &[]);
        for _ in 0..500 {
            let q = [r.gen::<f64>(), r.gen::<f64>(), r.gen::<f64>()];
            assert!((eval1(fit.as_ref(), &q) - f(&q)).abs() < 1e-12);
        }
    }

    #[test]
    fn bump_inside_one_cell_is_invisible() {
        let alg = multilinear_interpolation_algorithm();
        let pts = alg.plan(25, 2);
        let bump = |x: &[f64]| {
            let r = (x[0] - 0.375).abs().max((x[1] - 0.625).abs());
            (0.1 - r).max(0.0)
        };
        let values = values_of(bump, &pts);
        assert!(values.iter().all(|&v| v == 0.0));
        let fit = alg.reconstruct(&pts, &values);
        assert_eq!(eval1(fit.as_ref(), &[0.375, 0.625]), 0.0);
    }

    #[test]
    fn plans_are_nonadaptive() {
        let algs: Vec<Box<dyn ReconstructionAlgorithm>> = vec![
            Box::new(zero_algorithm()),
            Box::new(nearest_neighbor_algorithm(Layout::Iid { seed: 4 })),
            Box::new(multilinear_interpolation_algorithm()),
        ];
        for alg in algs {
            let a = alg.start(37, 2, 1).unwrap().points().clone();
            let b = alg.start(37, 2, 2).unwrap().points().clone();
            assert_eq!(a, b, "{}", alg.name());
        }
    }
}
