//! Uniform-grid spatial index for exact k-nearest-neighbor and fixed-radius
//! queries on 3D points.

use std::collections::HashMap;

use crate::geom::Vec3;

type CellKey = (i64, i64, i64);

/// Bucketed point index. Cells are axis-aligned cubes anchored at the
/// minimum corner of the indexed points.
#[derive(Debug, Clone)]
pub struct GridIndex<'a> {
    points: &'a [Vec3],
    origin: Vec3,
    cell: f64,
    // cell -> range into `order`
    cells: HashMap<CellKey, (u32, u32)>,
    order: Vec<u32>,
    lo: CellKey,
    hi: CellKey,
}

impl<'a> GridIndex<'a> {
    /// Builds an index with the given cell edge length.
    pub fn with_cell_size(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let origin = points
            .iter()
            .fold(Vec3::splat(f64::INFINITY), |m, p| m.min(*p));
        let origin = if points.is_empty() { Vec3::ZERO } else { origin };
        let key = |p: Vec3| -> CellKey {
            let d = (p - origin) / cell;
            (d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64)
        };
        let mut keyed: Vec<(CellKey, u32)> =
            points.iter().enumerate().map(|(i, p)| (key(*p), i as u32)).collect();
        keyed.sort_unstable();
        let mut cells = HashMap::new();
        let mut order = Vec::with_capacity(points.len());
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX, i64::MAX), (i64::MIN, i64::MIN, i64::MIN));
        let mut start = 0usize;
        while start < keyed.len() {
            let k = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == k {
                order.push(keyed[end].1);
                end += 1;
            }
            cells.insert(k, (start as u32, end as u32));
            lo = (lo.0.min(k.0), lo.1.min(k.1), lo.2.min(k.2));
            hi = (hi.0.max(k.0), hi.1.max(k.1), hi.2.max(k.2));
            start = end;
        }
        Self {
            points,
            origin,
            cell,
            cells,
            order,
            lo,
            hi,
        }
    }

    /// Builds an index whose cell size approximates the average point
    /// spacing, assuming the points sample a surface.
    pub fn new(points: &'a [Vec3]) -> Self {
        Self::with_cell_size(points, estimate_spacing(points))
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn points(&self) -> &'a [Vec3] {
        self.points
    }

    fn key(&self, p: Vec3) -> CellKey {
        let d = (p - self.origin) / self.cell;
        (d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64)
    }

    fn bucket(&self, k: CellKey) -> &[u32] {
        match self.cells.get(&k) {
            Some(&(s, e)) => &self.order[s as usize..e as usize],
            None => &[],
        }
    }

    /// Calls `f` for every indexed point within `radius` (inclusive) of `q`.
    pub fn for_each_within(&self, q: Vec3, radius: f64, mut f: impl FnMut(usize)) {
        if self.points.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let lo = self.key(q - Vec3::splat(radius));
        let hi = self.key(q + Vec3::splat(radius));
        let lo = (lo.0.max(self.lo.0), lo.1.max(self.lo.1), lo.2.max(self.lo.2));
        let hi = (hi.0.min(self.hi.0), hi.1.min(self.hi.1), hi.2.min(self.hi.2));
        for i in lo.0..=hi.0 {
            for j in lo.1..=hi.1 {
                for k in lo.2..=hi.2 {
                    for &idx in self.bucket((i, j, k)) {
                        if self.points[idx as usize].distance_squared(q) <= r2 {
                            f(idx as usize);
                        }
                    }
                }
            }
        }
    }

    /// Indices of all points within `radius` of `q`, ascending.
    pub fn within(&self, q: Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `q` as `(index, squared distance)`, closest
    /// first. Ties in distance are broken by lower index.
    pub fn knn(&self, q: Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let center = self.key(q);
        let mut found: Vec<(f64, usize)> = Vec::new();
        let max_ring = [
            (center.0 - self.lo.0).abs(),
            (center.0 - self.hi.0).abs(),
            (center.1 - self.lo.1).abs(),
            (center.1 - self.hi.1).abs(),
            (center.2 - self.lo.2).abs(),
            (center.2 - self.hi.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        for ring in 0..=max_ring {
            self.visit_shell(center, ring, |idx| {
                found.push((self.points[idx].distance_squared(q), idx));
            });
            if found.len() >= k {
                found.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                found.truncate(k);
                // every unvisited point lies at least this far away
                let reach = self.shell_clearance(q, center, ring);
                if found[k - 1].0 < reach * reach {
                    break;
                }
            }
        }
        found.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn visit_shell(&self, c: CellKey, ring: i64, mut f: impl FnMut(usize)) {
        for i in (c.0 - ring).max(self.lo.0)..=(c.0 + ring).min(self.hi.0) {
            for j in (c.1 - ring).max(self.lo.1)..=(c.1 + ring).min(self.hi.1) {
                if (i - c.0).abs() == ring || (j - c.1).abs() == ring {
                    for k in (c.2 - ring).max(self.lo.2)..=(c.2 + ring).min(self.hi.2) {
                        for &idx in self.bucket((i, j, k)) {
                            f(idx as usize);
                        }
                    }
                } else {
                    // interior column: only the two caps lie on the shell
                    for k in [c.2 - ring, c.2 + ring] {
                        if k < self.lo.2 || k > self.hi.2 {
                            continue;
                        }
                        for &idx in self.bucket((i, j, k)) {
                            f(idx as usize);
                        }
                    }
                }
            }
        }
    }

    // Distance from q to the boundary of the cube of cells within `ring` of `c`.
    fn shell_clearance(&self, q: Vec3, c: CellKey, ring: i64) -> f64 {
        let d = (q - self.origin) / self.cell;
        let lo = Vec3::new(
            (c.0 - ring) as f64,
            (c.1 - ring) as f64,
            (c.2 - ring) as f64,
        );
        let hi = lo + Vec3::splat((2 * ring + 1) as f64);
        let gaps = [
            d.x - lo.x,
            hi.x - d.x,
            d.y - lo.y,
            hi.y - d.y,
            d.z - lo.z,
            hi.z - d.z,
        ];
        gaps.into_iter().fold(f64::INFINITY, f64::min).max(0.0) * self.cell
    }
}

/// Rough average spacing of points sampled from a surface: the square root
/// of (area of the two largest bounding-box faces' extents) per point.
pub fn estimate_spacing(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 1.0;
    }
    let (lo, hi) = points.iter().fold(
        (Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)),
        |(lo, hi), p| (lo.min(*p), hi.max(*p)),
    );
    let mut ext = (hi - lo).to_array();
    ext.sort_by(|a, b| b.total_cmp(a));
    let area = ext[0] * ext[1].max(ext[0] * 1e-3);
    let s = (area / points.len() as f64).sqrt();
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}
