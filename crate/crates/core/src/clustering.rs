//! Density-based clustering (DBSCAN) and cluster selection.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{CropBox, PointCloud};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::spatial::GridIndex;

/// Label of points that belong to no cluster.
pub const NOISE: i64 = -1;

/// Per-cluster statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub count: usize,
    pub centroid: Vec3,
    pub aabb: CropBox,
}

/// Cluster labels for every point of a cloud plus one summary per cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// `NOISE` or a cluster id in `0..summaries.len()`.
    pub labels: Vec<i64>,
    /// Indexed by cluster id.
    pub summaries: Vec<ClusterSummary>,
}

impl ClusterSet {
    pub fn cluster_count(&self) -> usize {
        self.summaries.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Id of the most populous cluster; ties go to the lower id.
    pub fn largest(&self) -> Option<usize> {
        self.summaries
            .iter()
            .max_by(|a, b| a.count.cmp(&b.count).then(b.id.cmp(&a.id)))
            .map(|s| s.id)
    }

    fn from_labels(points: &[Vec3], labels: Vec<i64>) -> Self {
        let clusters = labels.iter().max().map_or(0, |&m| (m + 1).max(0) as usize);
        let mut acc = vec![(0usize, Vec3::ZERO, Vec3::splat(f64::INFINITY), Vec3::splat(f64::NEG_INFINITY)); clusters];
        for (p, &l) in points.iter().zip(&labels) {
            if l >= 0 {
                let a = &mut acc[l as usize];
                a.0 += 1;
                a.1 += *p;
                a.2 = a.2.min(*p);
                a.3 = a.3.max(*p);
            }
        }
        let summaries = acc
            .into_iter()
            .enumerate()
            .map(|(id, (count, sum, lo, hi))| ClusterSummary {
                id,
                count,
                centroid: sum / count as f64,
                aabb: CropBox { min: lo, max: hi },
            })
            .collect();
        ClusterSet { labels, summaries }
    }
}

/// DBSCAN with inclusive `eps` neighborhoods that count the point itself.
///
/// Clusters are seeded from core points in index order and expanded
/// breadth-first, so cluster ids follow each cluster's lowest core index and
/// a border point joins the lowest-id cluster that reaches it.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<ClusterSet> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::invalid("min_pts must be at least 1"));
    }
    let points = &cloud.points;
    if points.is_empty() {
        return Ok(ClusterSet {
            labels: Vec::new(),
            summaries: Vec::new(),
        });
    }
    let index = GridIndex::with_cell_size(points, eps);
    let core: Vec<bool> = points
        .par_iter()
        .map(|p| {
            let mut n = 0;
            index.for_each_within(*p, eps, |_| n += 1);
            n >= min_pts
        })
        .collect();

    const UNSET: i64 = i64::MIN;
    let mut labels = vec![UNSET; points.len()];
    let mut next_id = 0i64;
    let mut queue = VecDeque::new();
    for seed in 0..points.len() {
        if !core[seed] || labels[seed] != UNSET {
            continue;
        }
        labels[seed] = next_id;
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            index.for_each_within(points[p], eps, |q| {
                if labels[q] == UNSET {
                    labels[q] = next_id;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            });
        }
        next_id += 1;
    }
    for l in labels.iter_mut().filter(|l| **l == UNSET) {
        *l = NOISE;
    }
    Ok(ClusterSet::from_labels(points, labels))
}

/// How the object clusters are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClusterSelection {
    Ids(Vec<usize>),
    Policy(SelectionPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionPolicy {
    /// The most populous cluster.
    Largest,
    /// Suspend and wait for an operator choice.
    Interactive,
}

impl Default for ClusterSelection {
    fn default() -> Self {
        ClusterSelection::Policy(SelectionPolicy::Largest)
    }
}

impl ClusterSelection {
    /// Concrete ids for a non-interactive selection.
    pub fn resolve(&self, set: &ClusterSet) -> Result<Vec<usize>> {
        match self {
            ClusterSelection::Ids(ids) => Ok(ids.clone()),
            ClusterSelection::Policy(SelectionPolicy::Largest) => Ok(set.largest().into_iter().collect()),
            ClusterSelection::Policy(SelectionPolicy::Interactive) => Err(Error::InvalidState(
                "interactive selection needs an operator choice".into(),
            )),
        }
    }
}

/// Points whose label is one of `ids`, in input order with attributes.
pub fn select_clusters(set: &ClusterSet, cloud: &PointCloud, ids: &[usize]) -> Result<PointCloud> {
    if set.labels.len() != cloud.len() {
        return Err(Error::invalid(format!(
            "cluster labels cover {} points, cloud has {}",
            set.labels.len(),
            cloud.len()
        )));
    }
    if let Some(bad) = ids.iter().find(|&&id| id >= set.cluster_count()) {
        return Err(Error::invalid(format!(
            "unknown cluster id {bad} (have {} clusters)",
            set.cluster_count()
        )));
    }
    let mut wanted = vec![false; set.cluster_count()];
    for &id in ids {
        wanted[id] = true;
    }
    let keep: Vec<usize> = set
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= 0 && wanted[l as usize])
        .map(|(i, _)| i)
        .collect();
    Ok(cloud.select(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Reference DBSCAN without spatial indexing: connected components of the
    // core graph, borders attached to the lowest-numbered adjacent component.
    fn brute_force(points: &[Vec3], eps: f64, min_pts: usize) -> Vec<i64> {
        let n = points.len();
        let near = |i: usize, j: usize| points[i].distance_squared(points[j]) <= eps * eps;
        let core: Vec<bool> = (0..n)
            .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
            .collect();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, x: usize) -> usize {
            let mut r = x;
            while parent[r] != r {
                r = parent[r];
            }
            parent[x] = r;
            r
        }
        for i in 0..n {
            for j in 0..i {
                if core[i] && core[j] && near(i, j) {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        // components ranked by their minimum core index
        let mut id_of_root = std::collections::HashMap::new();
        let mut labels = vec![NOISE; n];
        for i in 0..n {
            if core[i] {
                let r = find(&mut parent, i);
                let next = id_of_root.len() as i64;
                labels[i] = *id_of_root.entry(r).or_insert(next);
            }
        }
        for i in 0..n {
            if !core[i] {
                labels[i] = (0..n)
                    .filter(|&j| core[j] && near(i, j))
                    .map(|j| labels[j])
                    .min()
                    .unwrap_or(NOISE);
            }
        }
        labels
    }

    fn blob(rng: &mut ChaCha8Rng, center: Vec3, n: usize, spread: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                center
                    + Vec3::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )
            })
            .collect()
    }

    fn two_blobs() -> (PointCloud, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, Vec3::ZERO, 60, 0.05);
        let first = pts.len();
        pts.extend(blob(&mut rng, Vec3::new(1.0, 0.0, 0.0), 40, 0.05));
        (PointCloud::from_points(pts), first)
    }

    #[test]
    fn separated_blobs_form_two_clusters() {
        let (cloud, first) = two_blobs();
        let set = dbscan(&cloud, 0.1, 5).unwrap();
        assert_eq!(set.cluster_count(), 2);
        assert_eq!(set.noise_count(), 0);
        assert!(set.labels[..first].iter().all(|&l| l == 0));
        assert!(set.labels[first..].iter().all(|&l| l == 1));
        assert_eq!(set.summaries[0].count, 60);
        assert_eq!(set.largest(), Some(0));
    }

    #[test]
    fn isolated_point_is_noise() {
        let cloud = PointCloud::from_points(vec![Vec3::ZERO]);
        let set = dbscan(&cloud, 0.1, 3).unwrap();
        assert_eq!(set.labels, vec![NOISE]);
        assert!(set.summaries.is_empty());
        assert_eq!(set.largest(), None);
    }

    #[test]
    fn invalid_parameters() {
        let cloud = PointCloud::from_points(vec![Vec3::ZERO]);
        assert!(dbscan(&cloud, 0.0, 3).is_err());
        assert!(dbscan(&cloud, 0.1, 0).is_err());
    }

    #[test]
    fn selecting_clusters() {
        let (cloud, first) = two_blobs();
        let set = dbscan(&cloud, 0.1, 5).unwrap();
        let zero = select_clusters(&set, &cloud, &[0]).unwrap();
        assert_eq!(zero.points, cloud.points[..first].to_vec());
        let all = select_clusters(&set, &cloud, &[0, 1]).unwrap();
        assert_eq!(all, cloud);
        assert!(select_clusters(&set, &cloud, &[]).unwrap().is_empty());
        assert!(matches!(
            select_clusters(&set, &cloud, &[2]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn largest_tie_goes_to_lower_id() {
        let pts = vec![Vec3::ZERO, Vec3::X * 0.01, Vec3::X * 5.0, Vec3::X * 5.01];
        let set = dbscan(&PointCloud::from_points(pts), 0.05, 2).unwrap();
        assert_eq!(set.cluster_count(), 2);
        assert_eq!(set.largest(), Some(0));
    }

    #[test]
    fn selection_serde_forms() {
        let ids: ClusterSelection = serde_json::from_str("[0, 2]").unwrap();
        assert_eq!(ids, ClusterSelection::Ids(vec![0, 2]));
        let l: ClusterSelection = serde_json::from_str("\"largest\"").unwrap();
        assert_eq!(l, ClusterSelection::Policy(SelectionPolicy::Largest));
        let i: ClusterSelection = serde_json::from_str("\"interactive\"").unwrap();
        assert!(i.resolve(&dbscan(&PointCloud::from_points(vec![Vec3::ZERO]), 1.0, 1).unwrap()).is_err());
        assert!(serde_json::from_str::<ClusterSelection>("\"biggest\"").is_err());
    }

    #[test]
    fn growing_eps_never_splits_two_blobs() {
        let (cloud, _) = two_blobs();
        let mut last = usize::MAX;
        for eps in [0.06, 0.08, 0.1, 0.2, 0.5, 0.9, 1.2] {
            let c = dbscan(&cloud, eps, 5).unwrap().cluster_count();
            assert!(c <= last, "eps {eps}: {c} clusters after {last}");
            last = c;
        }
        assert_eq!(last, 1);
    }

    #[test]
    fn fifty_point_instance_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let pts = blob(&mut rng, Vec3::ZERO, 50, 0.5);
        let set = dbscan(&PointCloud::from_points(pts.clone()), 0.25, 4).unwrap();
        assert_eq!(set.labels, brute_force(&pts, 0.25, 4));
    }

    proptest! {
        #[test]
        fn matches_brute_force_reference(
            seed in any::<u64>(),
            n in 1usize..120,
            eps in 0.02..0.6f64,
            min_pts in 1usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = blob(&mut rng, Vec3::ZERO, n, 0.5);
            let set = dbscan(&PointCloud::from_points(pts.clone()), eps, min_pts).unwrap();
            prop_assert_eq!(&set.labels, &brute_force(&pts, eps, min_pts));
            let total: usize = set.summaries.iter().map(|s| s.count).sum();
            prop_assert_eq!(total, n - set.noise_count());
        }
    }
}
