//! Hidden point removal by spherical flipping and a convex hull.

use std::collections::HashMap;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::hull::convex_hull;

/// Default flip-sphere radius as a multiple of the farthest point's range.
///
/// Much larger scales flatten the flipped surface below double precision and
/// the hull stops separating visible from hidden points.
pub const DEFAULT_RADIUS_SCALE: f64 = 100.0;

/// Indices (ascending) of the points of `cloud` visible from `camera`.
///
/// Points are flipped about a sphere of radius `radius_scale` times the
/// farthest range; a point is visible when its flipped image is a vertex of
/// the hull of the flipped set plus the camera. Exact duplicates share the
/// visibility of their first occurrence.
pub fn hidden_point_removal(
    cloud: &PointCloud,
    camera: Vec3,
    radius_scale: f64,
) -> Result<Vec<usize>> {
    if cloud.is_empty() {
        return Err(Error::invalid("hidden point removal on an empty cloud"));
    }
    if !(radius_scale > 1.0 && radius_scale.is_finite()) {
        return Err(Error::invalid(format!(
            "radius_scale must be finite and > 1, got {radius_scale}"
        )));
    }
    if !camera.is_finite() {
        return Err(Error::invalid("camera position is not finite"));
    }

    let mut first_of: HashMap<[u64; 3], usize> = HashMap::new();
    let mut unique = Vec::new(); // indices of first occurrences
    let mut rep = Vec::with_capacity(cloud.len()); // point -> slot in `unique`
    for (i, p) in cloud.points.iter().enumerate() {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let slot = *first_of.entry(key).or_insert_with(|| {
            unique.push(i);
            unique.len() - 1
        });
        rep.push(slot);
    }

    let local: Vec<Vec3> = unique.iter().map(|&i| cloud.points[i] - camera).collect();
    let mut max_range = 0.0f64;
    for (slot, q) in local.iter().enumerate() {
        let r = q.norm();
        if r <= 1e-12 {
            return Err(Error::invalid(format!(
                "camera coincides with point {}",
                unique[slot]
            )));
        }
        max_range = max_range.max(r);
    }
    let radius = radius_scale * max_range;

    let mut flipped: Vec<Vec3> = local
        .iter()
        .map(|&q| {
            let r = q.norm();
            q + q * (2.0 * (radius - r) / r)
        })
        .collect();
    flipped.push(Vec3::ZERO);

    let hull = convex_hull(&flipped)?;
    if hull.skipped > 0 {
        log::debug!("hull builder skipped {} points", hull.skipped);
    }
    let mut visible_slot = vec![false; local.len()];
    for v in hull.vertices {
        if v < local.len() {
            visible_slot[v] = true;
        }
    }
    Ok((0..cloud.len()).filter(|&i| visible_slot[rep[i]]).collect())
}
