//! Quickhull in three dimensions.
//!
//! Only the hull's vertex set and triangle list are produced. Points within
//! a scale-relative tolerance of a face plane count as inside, so coplanar
//! points on a face are not reported as vertices.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: Vec3,
    offset: f64,
    // neighbors[i] lies across the edge (v[i], v[(i + 1) % 3])
    neighbors: [usize; 3],
    outside: Vec<usize>,
    alive: bool,
    stamp: u32,
}

impl Face {
    fn new(points: &[Vec3], v: [usize; 3]) -> Self {
        let (a, b, c) = (points[v[0]], points[v[1]], points[v[2]]);
        let normal = (b - a).cross(c - a).normalize();
        Face {
            v,
            normal,
            offset: normal.dot(a),
            neighbors: [usize::MAX; 3],
            outside: Vec::new(),
            alive: true,
            stamp: 0,
        }
    }

    fn distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Triangulated convex hull of a point set.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    /// Outward-oriented triangles (counter-clockwise seen from outside).
    pub faces: Vec<[usize; 3]>,
    /// Indices of hull vertices, ascending.
    pub vertices: Vec<usize>,
    /// Points the builder skipped because of an inconsistent horizon.
    pub skipped: usize,
}

/// Computes the convex hull of `points`.
///
/// Fails with [`Error::DegenerateHull`] when the points do not span three
/// dimensions.
pub fn convex_hull(points: &[Vec3]) -> Result<ConvexHull> {
    if points.len() < 4 {
        return Err(Error::DegenerateHull(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    let scale = points
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()).max(p.z.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = 64.0 * f64::EPSILON * scale;
    Builder::new(points, eps)?.run()
}

struct Builder<'a> {
    points: &'a [Vec3],
    eps: f64,
    faces: Vec<Face>,
    stamp: u32,
    skipped: usize,
}

impl<'a> Builder<'a> {
    fn new(points: &'a [Vec3], eps: f64) -> Result<Self> {
        let simplex = initial_simplex(points, eps)?;
        let mut b = Builder {
            points,
            eps,
            faces: Vec::new(),
            stamp: 0,
            skipped: 0,
        };
        let [i0, i1, i2, i3] = simplex;
        // orient so that i3 lies below face (i0, i1, i2)
        let probe = Face::new(points, [i0, i1, i2]);
        let (i1, i2) = if probe.distance(points[i3]) > 0.0 {
            (i2, i1)
        } else {
            (i1, i2)
        };
        let tris = [[i0, i1, i2], [i0, i3, i1], [i1, i3, i2], [i2, i3, i0]];
        for t in tris {
            b.faces.push(Face::new(points, t));
        }
        b.link_all();
        let members: Vec<usize> = (0..points.len())
            .filter(|i| !simplex.contains(i))
            .collect();
        b.assign(&members, &[0, 1, 2, 3]);
        Ok(b)
    }

    fn link_all(&mut self) {
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for s in 0..3 {
                edges.insert((f.v[s], f.v[(s + 1) % 3]), (fi, s));
            }
        }
        for fi in 0..self.faces.len() {
            for s in 0..3 {
                let (a, b) = (self.faces[fi].v[s], self.faces[fi].v[(s + 1) % 3]);
                self.faces[fi].neighbors[s] = edges[&(b, a)].0;
            }
        }
    }

    fn assign(&mut self, candidates: &[usize], faces: &[usize]) {
        for &p in candidates {
            let q = self.points[p];
            let mut best = None;
            let mut best_d = self.eps;
            for &f in faces {
                let d = self.faces[f].distance(q);
                if d > best_d {
                    best_d = d;
                    best = Some(f);
                }
            }
            if let Some(f) = best {
                self.faces[f].outside.push(p);
            }
        }
    }

    fn run(mut self) -> Result<ConvexHull> {
        let mut pending: Vec<usize> = (0..self.faces.len()).collect();
        while let Some(fi) = pending.pop() {
            if !self.faces[fi].alive || self.faces[fi].outside.is_empty() {
                continue;
            }
            let eye = {
                let f = &self.faces[fi];
                let mut best = f.outside[0];
                let mut best_d = f.distance(self.points[best]);
                for &p in &f.outside[1..] {
                    let d = f.distance(self.points[p]);
                    if d > best_d {
                        best_d = d;
                        best = p;
                    }
                }
                best
            };
            match self.add_point(fi, eye) {
                Some(new_faces) => pending.extend(new_faces),
                None => {
                    self.skipped += 1;
                    let f = &mut self.faces[fi];
                    f.outside.retain(|&p| p != eye);
                    pending.push(fi);
                }
            }
        }
        let mut faces = Vec::new();
        let mut is_vertex = vec![false; self.points.len()];
        for f in self.faces.iter().filter(|f| f.alive) {
            faces.push(f.v);
            for &v in &f.v {
                is_vertex[v] = true;
            }
        }
        let vertices = (0..self.points.len()).filter(|&i| is_vertex[i]).collect();
        Ok(ConvexHull {
            faces,
            vertices,
            skipped: self.skipped,
        })
    }

    /// Adds `eye` (outside face `start`) to the hull. Returns the new faces,
    /// or `None` if the visible region has no simple horizon.
    fn add_point(&mut self, start: usize, eye: usize) -> Option<Vec<usize>> {
        let q = self.points[eye];
        self.stamp = self.stamp.wrapping_add(1);
        let stamp = self.stamp;

        let mut visible = vec![start];
        self.faces[start].stamp = stamp;
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new(); // (a, b, neighbor)
        let mut i = 0;
        while i < visible.len() {
            let f = visible[i];
            i += 1;
            for s in 0..3 {
                let n = self.faces[f].neighbors[s];
                if self.faces[n].stamp == stamp {
                    continue;
                }
                if self.faces[n].distance(q) > self.eps {
                    self.faces[n].stamp = stamp;
                    visible.push(n);
                }
            }
        }
        for &f in &visible {
            for s in 0..3 {
                let n = self.faces[f].neighbors[s];
                if self.faces[n].stamp != stamp {
                    let v = self.faces[f].v;
                    horizon.push((v[s], v[(s + 1) % 3], n));
                }
            }
        }

        // the horizon must be a single simple cycle
        let mut by_start: HashMap<usize, usize> = HashMap::with_capacity(horizon.len());
        for (k, &(a, _, _)) in horizon.iter().enumerate() {
            if by_start.insert(a, k).is_some() {
                return None;
            }
        }
        let mut walked = 0;
        let mut k = 0;
        loop {
            let (_, b, _) = horizon[k];
            walked += 1;
            match by_start.get(&b) {
                Some(&next) => k = next,
                None => return None,
            }
            if k == 0 || walked > horizon.len() {
                break;
            }
        }
        if walked != horizon.len() || k != 0 {
            return None;
        }

        let base = self.faces.len();
        for &(a, b, _) in &horizon {
            self.faces.push(Face::new(self.points, [a, b, eye]));
        }
        for (k, &(a, b, n)) in horizon.iter().enumerate() {
            let fi = base + k;
            let next = base + by_start[&b];
            self.faces[fi].neighbors[0] = n;
            self.faces[fi].neighbors[1] = next;
            self.faces[next].neighbors[2] = fi;
            let nf = &mut self.faces[n];
            let slot = (0..3)
                .find(|&s| nf.v[s] == b && nf.v[(s + 1) % 3] == a)
                .expect("horizon edge shared with neighbor");
            nf.neighbors[slot] = fi;
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            let face = &mut self.faces[f];
            face.alive = false;
            orphans.extend(face.outside.drain(..).filter(|&p| p != eye));
        }
        let new_faces: Vec<usize> = (base..self.faces.len()).collect();
        self.assign(&orphans, &new_faces);
        Some(new_faces)
    }
}

fn initial_simplex(points: &[Vec3], eps: f64) -> Result<[usize; 4]> {
    let mut extremes = [0usize; 6];
    for (i, p) in points.iter().enumerate() {
        for axis in 0..3 {
            if p.get(axis) < points[extremes[2 * axis]].get(axis) {
                extremes[2 * axis] = i;
            }
            if p.get(axis) > points[extremes[2 * axis + 1]].get(axis) {
                extremes[2 * axis + 1] = i;
            }
        }
    }
    let mut best = (0.0, 0, 0);
    for &a in &extremes {
        for &b in &extremes {
            let d = points[a].distance_squared(points[b]);
            if d > best.0 {
                best = (d, a, b);
            }
        }
    }
    let (_, i0, i1) = best;
    if best.0.sqrt() <= eps {
        return Err(Error::DegenerateHull("all points coincide".into()));
    }
    let dir = (points[i1] - points[i0]).normalize();
    let mut far = (0.0, usize::MAX);
    for (i, p) in points.iter().enumerate() {
        let d = (*p - points[i0]).cross(dir).norm();
        if d > far.0 {
            far = (d, i);
        }
    }
    if far.0 <= eps {
        return Err(Error::DegenerateHull("points are collinear".into()));
    }
    let i2 = far.1;
    let plane = Face::new(points, [i0, i1, i2]);
    let mut far = (0.0, usize::MAX);
    for (i, p) in points.iter().enumerate() {
        let d = plane.distance(*p).abs();
        if d > far.0 {
            far = (d, i);
        }
    }
    if far.0 <= eps {
        return Err(Error::DegenerateHull("points are coplanar".into()));
    }
    Ok([i0, i1, i2, far.1])
}
