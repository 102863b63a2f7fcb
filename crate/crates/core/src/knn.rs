//! Mean distance to the k nearest neighbors, exact by brute force for small
//! inputs and through a uniform grid above [`BRUTE_FORCE_LIMIT`] points.

use std::collections::HashMap;

pub const BRUTE_FORCE_LIMIT: usize = 50_000;

/// For each point, the mean Euclidean distance to its `k` nearest other
/// points (fewer when the set is smaller). `None` when a point has no
/// neighbors at all.
pub fn mean_knn_distances(points: &[[f64; 3]], k: usize) -> Vec<Option<f64>> {
    if points.len() < BRUTE_FORCE_LIMIT {
        brute_force(points, k)
    } else {
        grid(points, k)
    }
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Keeps the `k` smallest squared distances seen, sorted ascending.
struct Nearest {
    k: usize,
    best: Vec<f64>,
}

impl Nearest {
    fn new(k: usize) -> Self {
        Self {
            k,
            best: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, d2: f64) {
        if self.best.len() == self.k && d2 >= self.best[self.k - 1] {
            return;
        }
        let pos = self.best.partition_point(|&b| b <= d2);
        self.best.insert(pos, d2);
        self.best.truncate(self.k);
    }

    fn worst(&self) -> f64 {
        if self.best.len() < self.k {
            f64::INFINITY
        } else {
            self.best[self.k - 1]
        }
    }

    fn mean(&self) -> Option<f64> {
        if self.best.is_empty() {
            None
        } else {
            Some(self.best.iter().map(|d| d.sqrt()).sum::<f64>() / self.best.len() as f64)
        }
    }
}

pub(crate) fn brute_force(points: &[[f64; 3]], k: usize) -> Vec<Option<f64>> {
    if k == 0 {
        return vec![None; points.len()];
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut nearest = Nearest::new(k);
            for (j, q) in points.iter().enumerate() {
                if i != j {
                    nearest.offer(dist2(p, q));
                }
            }
            nearest.mean()
        })
        .collect()
}

pub(crate) fn grid(points: &[[f64; 3]], k: usize) -> Vec<Option<f64>> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![None; n];
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    // About two points per occupied cell for a volume-filling distribution.
    let cells_per_axis = ((n as f64 / 2.0).cbrt()).max(1.0);
    let cell = if extent > 0.0 { extent / cells_per_axis } else { 1.0 };
    let key = |p: &[f64; 3]| -> [i64; 3] {
        [0, 1, 2].map(|a| ((p[a] - lo[a]) / cell).floor() as i64)
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let max_ring = [0, 1, 2]
        .map(|a| ((hi[a] - lo[a]) / cell).floor() as i64 + 1)
        .into_iter()
        .max()
        .unwrap();

    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let c = key(p);
            let mut nearest = Nearest::new(k);
            let mut ring = 0i64;
            loop {
                // Visit the shell of cells at Chebyshev distance `ring`.
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        for dz in -ring..=ring {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                                continue;
                            }
                            if let Some(bucket) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                                for &j in bucket {
                                    if j != i {
                                        nearest.offer(dist2(p, &points[j]));
                                    }
                                }
                            }
                        }
                    }
                }
                // Every unvisited point is at least `ring * cell` away.
                let bound = ring as f64 * cell;
                if nearest.worst() <= bound * bound || ring > max_ring {
                    break;
                }
                ring += 1;
            }
            nearest.mean()
        })
        .collect()
}
