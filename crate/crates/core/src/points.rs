//! Point sets in `[0,1]^d`, deterministic layouts, and an `ℓ∞` nearest
//! neighbour index.

use rand::Rng;

use crate::rng;

/// A list of points of common dimension stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Self {
        assert!(dim > 0 && coords.len() % dim == 0, "flat coordinates");
        Self { dim, coords }
    }

    /// `None` if rows have differing lengths.
    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Option<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self {
            dim,
            coords: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}

/// `|a − b|_∞`.
#[inline]
pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Splits `n` into `d` factors whose product is `n`, as equal as possible
/// (largest prime factors are assigned first to the currently smallest
/// factor). Factors are returned in nondecreasing order.
pub fn balanced_factors(n: usize, d: usize) -> Vec<usize> {
    assert!(n >= 1 && d >= 1);
    let mut primes = Vec::new();
    let mut rest = n;
    let mut p = 2;
    while p * p <= rest {
        while rest % p == 0 {
            primes.push(p);
            rest /= p;
        }
        p += 1;
    }
    if rest > 1 {
        primes.push(rest);
    }
    primes.sort_unstable_by(|a, b| b.cmp(a));
    let mut f = vec![1usize; d];
    for q in primes {
        let i = (0..d).min_by_key(|&i| f[i]).expect("d ≥ 1");
        f[i] *= q;
    }
    f.sort_unstable();
    f
}

/// Tensor grid of cell midpoints with `counts[a]` cells along axis `a`.
/// The first axis varies fastest.
pub fn midpoint_grid(counts: &[usize]) -> PointSet {
    let d = counts.len();
    let mut ps = PointSet::new(d);
    let total: usize = counts.iter().product();
    let mut x = vec![0.0; d];
    for mut idx in 0..total {
        for (a, &c) in counts.iter().enumerate() {
            x[a] = ((idx % c) as f64 + 0.5) / c as f64;
            idx /= c;
        }
        ps.push(&x);
    }
    ps
}

/// `n` points forming a midpoint grid with balanced per-axis counts.
pub fn balanced_midpoint_grid(n: usize, d: usize) -> PointSet {
    midpoint_grid(&balanced_factors(n, d))
}

/// `n` i.i.d. uniform points drawn from the stream keyed by `seed`.
pub fn iid_uniform(n: usize, d: usize, seed: u64) -> PointSet {
    let mut r = rng::derive(seed, &[rng::label::ALGORITHM, n as u64, d as u64]);
    let coords = (0..n * d).map(|_| r.gen::<f64>()).collect();
    PointSet::from_flat(d, coords)
}

/// Bucket-grid index answering `ℓ∞` nearest-neighbour queries with ties
/// broken by the lowest point index. Buckets tile the bounding box of the
/// points, so clustered configurations stay cheap.
#[derive(Debug, Clone)]
pub struct LinfIndex {
    points: PointSet,
    /// Buckets along each axis (1 for a degenerate axis).
    sides: Vec<usize>,
    lo: Vec<f64>,
    /// Buckets per unit length along each axis.
    scale: Vec<f64>,
    /// Bucket start offsets into `order`.
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl LinfIndex {
    pub fn new(points: PointSet) -> Self {
        assert!(!points.is_empty(), "nearest-neighbour index needs points");
        let d = points.dim();
        let n = points.len();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for p in points.iter() {
            for a in 0..d {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let live = (0..d).filter(|&a| hi[a] > lo[a]).count().max(1);
        let side = ((n as f64).powf(1.0 / live as f64).ceil() as usize).max(1);
        let sides: Vec<usize> = (0..d).map(|a| if hi[a] > lo[a] { side } else { 1 }).collect();
        let scale: Vec<f64> = (0..d)
            .map(|a| {
                if hi[a] > lo[a] {
                    side as f64 / (hi[a] - lo[a])
                } else {
                    0.0
                }
            })
            .collect();
        let mut index = Self {
            points,
            sides,
            lo,
            scale,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let cells: usize = index.sides.iter().product();
        let bucket: Vec<usize> = index.points.iter().map(|p| index.cell_index(&index.home(p))).collect();
        let mut counts = vec![0usize; cells + 1];
        for &b in &bucket {
            counts[b + 1] += 1;
        }
        for i in 0..cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0usize; n];
        for (i, &b) in bucket.iter().enumerate() {
            order[fill[b]] = i;
            fill[b] += 1;
        }
        index.starts = counts;
        index.order = order;
        index
    }

    fn home(&self, q: &[f64]) -> Vec<isize> {
        q.iter()
            .enumerate()
            .map(|(a, &v)| {
                let c = ((v - self.lo[a]) * self.scale[a]).floor();
                (c.max(0.0) as usize).min(self.sides[a] - 1) as isize
            })
            .collect()
    }

    fn cell_index(&self, cell: &[isize]) -> usize {
        cell.iter()
            .zip(&self.sides)
            .rev()
            .fold(0usize, |acc, (&c, &s)| acc * s + c as usize)
    }

    /// Lower bound on the distance from `q` to any bucket outside the shells
    /// `0..=r` around `home`; infinite once every bucket has been visited.
    fn unvisited_distance(&self, q: &[f64], home: &[isize], r: isize) -> f64 {
        let mut bound = f64::INFINITY;
        for (a, &h) in home.iter().enumerate() {
            if self.scale[a] == 0.0 {
                continue;
            }
            let width = 1.0 / self.scale[a];
            if h + r < self.sides[a] as isize - 1 {
                bound = bound.min(self.lo[a] + (h + r + 1) as f64 * width - q[a]);
            }
            if h - r > 0 {
                bound = bound.min(q[a] - (self.lo[a] + (h - r) as f64 * width));
            }
        }
        // Bucket assignment floors a rounded product; allow for that rounding.
        bound - 1e-12
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    /// Index and distance of the nearest point to `q`.
    pub fn nearest(&self, q: &[f64]) -> (usize, f64) {
        let d = self.points.dim();
        let home = self.home(q);
        let max_ring = *self.sides.iter().max().expect("d ≥ 1") as isize;
        let mut best = (usize::MAX, f64::INFINITY);
        let mut lo_off = vec![0isize; d];
        let mut hi_off = vec![0isize; d];
        let mut off = vec![0isize; d];
        let mut cell = vec![0isize; d];
        for r in 0..max_ring {
            // Visit the buckets at Chebyshev offset exactly r.
            for a in 0..d {
                lo_off[a] = (-r).max(-home[a]);
                hi_off[a] = r.min(self.sides[a] as isize - 1 - home[a]);
            }
            off.copy_from_slice(&lo_off);
            'cells: loop {
                if off.iter().any(|o| o.abs() == r) {
                    for a in 0..d {
                        cell[a] = home[a] + off[a];
                    }
                    let c = self.cell_index(&cell);
                    for &i in &self.order[self.starts[c]..self.starts[c + 1]] {
                        let dist = linf(self.points.get(i), q);
                        if dist < best.1 || (dist == best.1 && i < best.0) {
                            best = (i, dist);
                        }
                    }
                }
                let mut a = 0;
                loop {
                    if a == d {
                        break 'cells;
                    }
                    if off[a] < hi_off[a] {
                        off[a] += 1;
                        break;
                    }
                    off[a] = lo_off[a];
                    a += 1;
                }
            }
            if best.1 < self.unvisited_distance(q, &home, r) {
                break;
            }
        }
        best
    }
}

/// Brute-force `(index, distance)` of the nearest point, lowest index on ties.
pub fn nearest_brute(points: &PointSet, q: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = linf(p, q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use proptest::prelude::{prop_oneof, Just};

    use super::*;
    use rand::Rng;

    #[test]
    fn factors_multiply_back() {
        for n in 1..200 {
            for d in 1..5 {
                let f = balanced_factors(n, d);
                assert_eq!(f.iter().product::<usize>(), n);
                assert_eq!(f.len(), d);
            }
        }
        assert_eq!(balanced_factors(32, 2), vec![4, 8]);
        assert_eq!(balanced_factors(1000, 3), vec![10, 10, 10]);
        assert_eq!(balanced_factors(4096, 2), vec![64, 64]);
    }

    #[test]
    fn midpoint_grid_one_dimensional() {
        let g = midpoint_grid(&[4]);
        assert_eq!(g.as_flat(), &[0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn index_matches_brute_force() {
        let mut r = rng::derive(3, &[]);
        for (n, d) in [(1, 1), (7, 1), (50, 2), (300, 3), (20, 4)] {
            let pts = iid_uniform(n, d, 11);
            let idx = LinfIndex::new(pts.clone());
            for _ in 0..1000 {
                let q: Vec<f64> = (0..d).map(|_| r.gen_range(-0.2..1.2)).collect();
                assert_eq!(idx.nearest(&q), nearest_brute(&pts, &q));
            }
        }
    }

    #[test]
    fn ties_prefer_lowest_index() {
        let pts = PointSet::from_rows(1, &[vec![0.25], vec![0.75], vec![0.25]]).unwrap();
        let idx = LinfIndex::new(pts);
        assert_eq!(idx.nearest(&[0.5]).0, 0);
        assert_eq!(idx.nearest(&[0.2]).0, 0);
    }

    #[test]
    fn coincident_points() {
        let pts = PointSet::from_flat(2, [0.5, 0.5].repeat(30));
        let idx = LinfIndex::new(pts);
        assert_eq!(idx.nearest(&[0.0, 1.0]), (0, 0.5));
    }

    proptest::proptest! {
        #[test]
        fn index_matches_brute_force_on_clusters(
            d in 1usize..4,
            n in 1usize..200,
            spread in prop_oneof![Just(0.0), 1e-3..0.05f64, 0.05..1.0f64],
            lattice in proptest::bool::ANY,
            seed in 0u64..1000,
            queries in proptest::collection::vec(proptest::collection::vec(-0.5..1.5f64, 3), 20),
        ) {
            // Lattice points produce many exact distance ties.
            let mut pts = iid_uniform(n, d, seed);
            let coords: Vec<f64> = pts
                .as_flat()
                .iter()
                .map(|v| if lattice { (v * 8.0).floor() / 8.0 * spread } else { v * spread })
                .collect();
            pts = PointSet::from_flat(d, coords);
            let idx = LinfIndex::new(pts.clone());
            for q in &queries {
                let q = &q[..d];
                proptest::prop_assert_eq!(idx.nearest(q), nearest_brute(&pts, q));
            }
        }
    }
}
