//! Camera frames, back-projection, multi-frame sampling and the
//! point-count majority vote.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{filter_passthrough, CropBox, PointCloud, Rgb};
use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};

/// Default relative tolerance for two point counts to agree.
pub const DEFAULT_VOTE_TOLERANCE: f64 = 0.05;

/// Pinhole intrinsics. Pixel `(u, v)` is column `u`, row `v`; its ray passes
/// through `((u - cx) / fx, (v - cy) / fy, 1)` in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::invalid(format!(
                "focal lengths must be finite and positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        Ok(())
    }

    /// Camera-frame ray direction (z = 1) through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Row-major depth image in meters; 0 marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0; 3]; width * height],
        }
    }
}

/// One RGB-D capture with its camera pose in the world.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub intrinsics: Intrinsics,
    pub camera_pose: RigidTransform,
}

impl Frame {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.depth.width != w || self.depth.height != h || self.depth.data.len() != w * h {
            return Err(Error::invalid(format!(
                "depth image is {}x{}, intrinsics say {w}x{h}",
                self.depth.width, self.depth.height
            )));
        }
        if self.color.width != w || self.color.height != h || self.color.data.len() != w * h {
            return Err(Error::invalid(format!(
                "color image is {}x{}, intrinsics say {w}x{h}",
                self.color.width, self.color.height
            )));
        }
        if let Some(d) = self.depth.data.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
            return Err(Error::invalid(format!("depth value {d} is not a valid range")));
        }
        Ok(())
    }
}

/// An ordered supply of frames, consumed by a single reader.
pub trait FrameSource: Send {
    /// The next frame, or `None` once the source is exhausted.
    fn next_frame(&mut self) -> Result<Option<Frame>>;
}

/// Frames held in memory, yielded in order.
#[derive(Debug, Clone, Default)]
pub struct FrameList {
    frames: std::collections::VecDeque<Frame>,
}

impl FrameList {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self {
            frames: frames.into(),
        }
    }
}

impl FrameSource for FrameList {
    fn next_frame(&mut self) -> Result<Option<Frame>> {
        Ok(self.frames.pop_front())
    }
}

/// Back-projects every valid depth pixel into the world frame, attaching
/// the pixel's color.
pub fn generate_point_cloud(frame: &Frame) -> Result<PointCloud> {
    frame.validate()?;
    let k = &frame.intrinsics;
    let mut points = Vec::new();
    let mut colors: Vec<Rgb> = Vec::new();
    for v in 0..k.height {
        for u in 0..k.width {
            let d = frame.depth.get(u, v);
            if d <= 0.0 {
                continue;
            }
            let local = k.ray(u as f64, v as f64) * d;
            points.push(frame.camera_pose.apply(local));
            let c = frame.color.data[v * k.width + u];
            colors.push([c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0]);
        }
    }
    Ok(PointCloud {
        points,
        colors: Some(colors),
        normals: None,
        frame: crate::cloud::CoordFrame::World,
    })
}

/// Pulls `s` frames from `source` and returns their cropped clouds in
/// capture order.
pub fn sample_clouds(
    source: &mut dyn FrameSource,
    s: usize,
    crop: &CropBox,
    ground_z: f64,
) -> Result<Vec<PointCloud>> {
    if s == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let mut frames = Vec::with_capacity(s);
    while frames.len() < s {
        match source.next_frame()? {
            Some(f) => frames.push(f),
            None => {
                return Err(Error::InsufficientFrames {
                    needed: s,
                    got: frames.len(),
                })
            }
        }
    }
    if let Some(f) = frames.iter().find(|f| f.intrinsics != frames[0].intrinsics) {
        return Err(Error::invalid(format!(
            "intrinsics change within the sequence: {:?} vs {:?}",
            frames[0].intrinsics, f.intrinsics
        )));
    }
    frames
        .par_iter()
        .map(|f| generate_point_cloud(f).map(|c| filter_passthrough(&c, crop, ground_z)))
        .collect()
}

/// Result of the point-count vote.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome {
    /// Concatenation of the selected clouds, in capture order.
    pub cloud: PointCloud,
    /// Indices of the selected clouds, ascending.
    pub selected: Vec<usize>,
}

/// Whether two point counts agree under the relative tolerance.
pub fn counts_agree(a: f64, b: f64, tolerance: f64) -> bool {
    (a - b).abs() <= tolerance * a.max(b)
}

/// Picks the clouds whose point counts form the largest agreeing group.
///
/// A group is valid when every member agrees with the group's median. For a
/// candidate median (one count, or the mean of two adjacent members) the
/// largest valid group takes equally many agreeing counts from each side,
/// nearest first. Largest group wins; ties go to the larger median.
pub fn select_majority(counts: &[usize], tolerance: f64) -> Result<Vec<usize>> {
    if counts.is_empty() {
        return Err(Error::invalid("majority vote over zero clouds"));
    }
    if !(0.0..1.0).contains(&tolerance) {
        return Err(Error::invalid(format!(
            "vote tolerance must lie in [0, 1), got {tolerance}"
        )));
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (counts[i], i));
    let v: Vec<f64> = order.iter().map(|&i| counts[i] as f64).collect();
    let n = v.len();

    // (size, median, left member p, right member q, per-side count)
    let mut best: Option<(usize, f64, usize, usize, usize)> = None;
    for p in 0..n {
        for q in p..n {
            let m = 0.5 * (v[p] + v[q]);
            if !counts_agree(v[p], m, tolerance) || !counts_agree(v[q], m, tolerance) {
                continue;
            }
            let left = (0..p).filter(|&i| counts_agree(v[i], m, tolerance)).count();
            let right = (q + 1..n).filter(|&i| counts_agree(v[i], m, tolerance)).count();
            let side = left.min(right);
            let size = 2 * side + if p == q { 1 } else { 2 };
            let better = match best {
                None => true,
                Some((bs, bm, ..)) => size > bs || (size == bs && m > bm),
            };
            if better {
                best = Some((size, m, p, q, side));
            }
        }
    }
    let (_, m, p, q, side) = best.expect("a single count always agrees with itself");
    let mut selected: Vec<usize> = Vec::with_capacity(2 * side + 2);
    selected.extend(
        (0..p)
            .rev()
            .filter(|&i| counts_agree(v[i], m, tolerance))
            .take(side)
            .map(|i| order[i]),
    );
    selected.push(order[p]);
    if q != p {
        selected.push(order[q]);
    }
    selected.extend(
        (q + 1..n)
            .filter(|&i| counts_agree(v[i], m, tolerance))
            .take(side)
            .map(|i| order[i]),
    );
    selected.sort_unstable();
    Ok(selected)
}

/// Majority vote over the clouds' point counts followed by concatenation.
pub fn majority_vote_merge(clouds: &[PointCloud], tolerance: f64) -> Result<VoteOutcome> {
    let counts: Vec<usize> = clouds.iter().map(PointCloud::len).collect();
    let selected = select_majority(&counts, tolerance)?;
    let mut cloud = clouds[selected[0]].clone();
    for &i in &selected[1..] {
        cloud.extend(&clouds[i]);
    }
    Ok(VoteOutcome { cloud, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

    fn flat_frame(depth: f64) -> Frame {
        let k = Intrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 2.0,
            cy: 1.0,
            width: 5,
            height: 3,
        };
        let mut d = DepthImage::new(5, 3);
        d.data.iter_mut().for_each(|x| *x = depth);
        Frame {
            color: ColorImage::new(5, 3),
            depth: d,
            intrinsics: k,
            camera_pose: RigidTransform::IDENTITY,
        }
    }

    fn single_pixel(u: usize, v: usize, depth: f64) -> Frame {
        let mut f = flat_frame(0.0);
        f.depth.data[v * 5 + u] = depth;
        f.color.data[v * 5 + u] = [255, 0, 51];
        f
    }

    #[test]
    fn principal_pixel_back_projects_to_axis() {
        let c = generate_point_cloud(&single_pixel(2, 1, 1.0)).unwrap();
        assert_eq!(c.points, vec![Vec3::new(0.0, 0.0, 1.0)]);
        assert_eq!(c.colors.unwrap()[0], [1.0, 0.0, 0.2]);
    }

    #[test]
    fn unit_tangent_pixel() {
        let mut f = single_pixel(2, 1, 0.0);
        f.intrinsics.fx = 2.0;
        f.intrinsics.cx = 0.0;
        f.depth.data[1 * 5 + 2] = 2.0;
        // u = cx + fx
        let c = generate_point_cloud(&f).unwrap();
        assert_eq!(c.points, vec![Vec3::new(2.0, 0.0, 2.0)]);
    }

    #[test]
    fn invalid_depth_gives_empty_cloud() {
        assert!(generate_point_cloud(&flat_frame(0.0)).unwrap().is_empty());
    }

    #[test]
    fn mismatched_images_are_rejected() {
        let mut f = flat_frame(1.0);
        f.color = ColorImage::new(4, 3);
        assert!(generate_point_cloud(&f).is_err());
    }

    #[test]
    fn camera_pose_is_applied() {
        let mut f = single_pixel(2, 1, 1.0);
        f.camera_pose = RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let c = generate_point_cloud(&f).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.0, 2.0, 4.0)]);
    }

    #[test]
    fn sampling_counts_and_exhaustion() {
        let mut src = FrameList::new(vec![flat_frame(1.0); 5]);
        let clouds = sample_clouds(&mut src, 5, &CropBox::unbounded(), -10.0).unwrap();
        assert_eq!(clouds.len(), 5);
        assert!(clouds.iter().all(|c| c.len() == 15));
        let mut src = FrameList::new(vec![flat_frame(1.0); 2]);
        assert!(matches!(
            sample_clouds(&mut src, 3, &CropBox::unbounded(), 0.0),
            Err(Error::InsufficientFrames { needed: 3, got: 2 })
        ));
        let mut src = FrameList::new(vec![flat_frame(1.0)]);
        assert_eq!(sample_clouds(&mut src, 1, &CropBox::unbounded(), 0.0).unwrap().len(), 1);
    }

    #[test]
    fn single_cloud_is_selected() {
        assert_eq!(select_majority(&[715], 0.05).unwrap(), vec![0]);
    }

    #[test]
    fn outlier_is_dropped() {
        let sel = select_majority(&[800, 795, 790, 798, 300], 0.05).unwrap();
        assert_eq!(sel, vec![0, 1, 2, 3]);
    }

    #[test]
    fn equal_counts_merge_all() {
        let clouds: Vec<PointCloud> = (0..4)
            .map(|i| PointCloud::from_points(vec![Vec3::splat(i as f64); 7]))
            .collect();
        let out = majority_vote_merge(&clouds, 0.05).unwrap();
        assert_eq!(out.selected, vec![0, 1, 2, 3]);
        assert_eq!(out.cloud.len(), 28);
    }

    #[test]
    fn tie_prefers_larger_counts() {
        assert_eq!(select_majority(&[100, 101, 500, 502], 0.05).unwrap(), vec![2, 3]);
    }

    // Largest subset whose members
    // all agree with the subset median.
    fn exhaustive_best_size(counts: &[usize], tol: f64) -> usize {
        let n = counts.len();
        let mut best = 0;
        for mask in 1u32..(1 << n) {
            let mut vals: Vec<f64> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| counts[i] as f64)
                .collect();
            vals.sort_by(|a, b| a.total_cmp(b));
            let m = median(&vals);
            if vals.iter().all(|&v| counts_agree(v, m, tol)) {
                best = best.max(vals.len());
            }
        }
        best
    }

    proptest! {
        #[test]
        fn vote_matches_exhaustive_oracle(
            counts in prop::collection::vec(50usize..1000, 1..11),
            tol in 0.0..0.3f64,
        ) {
            let sel = select_majority(&counts, tol).unwrap();
            prop_assert_eq!(sel.len(), exhaustive_best_size(&counts, tol));
            let mut vals: Vec<f64> = sel.iter().map(|&i| counts[i] as f64).collect();
            vals.sort_by(|a, b| a.total_cmp(b));
            let m = median(&vals);
            prop_assert!(vals.iter().all(|&v| counts_agree(v, m, tol)));
        }

        #[test]
        fn merged_count_is_sum_of_selected(sizes in prop::collection::vec(1usize..40, 1..8)) {
            let clouds: Vec<PointCloud> = sizes
                .iter()
                .map(|&n| PointCloud::from_points(vec![Vec3::ZERO; n]))
                .collect();
            let out = majority_vote_merge(&clouds, 0.05).unwrap();
            prop_assert!(!out.selected.is_empty());
            let sum: usize = out.selected.iter().map(|&i| sizes[i]).sum();
            prop_assert_eq!(out.cloud.len(), sum);
        }
    }
}
