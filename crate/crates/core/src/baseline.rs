//! Hand-designed `free space + tracking` ranking: a segment graph over
//! axis-aligned boxes, a predicted free-space feature, segment tracking with a
//! per-track push history, and an equal-weight fusion of the two features.

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec2};
use crate::perception::{Segment, SegmentId};
use crate::proposals::PushHandle;

/// Normalizer for the free-space feature (m).
pub const FREE_SPACE_D_MAX: f64 = 0.3;
pub const PCA_WEIGHT: f64 = 0.6;
pub const CENTROID_WEIGHT: f64 = 0.4;
pub const MATCH_THRESHOLD: f64 = 0.5;

/// Sum of the per-axis gaps between two boxes; 0 when they overlap on both
/// axes.
pub fn aabb_manhattan(a: &Aabb, b: &Aabb) -> f64 {
    let gap_x = (b.min.x - a.max.x).max(a.min.x - b.max.x).max(0.0);
    let gap_y = (b.min.y - a.max.y).max(a.min.y - b.max.y).max(0.0);
    gap_x + gap_y
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentNode {
    pub segment: SegmentId,
    pub aabb: Aabb,
}

/// Complete graph over segments with Manhattan AABB distances on the edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentGraph {
    pub nodes: Vec<SegmentNode>,
    /// Symmetric distance matrix, zero diagonal.
    pub distances: Vec<Vec<f64>>,
}

impl SegmentGraph {
    pub fn new(segments: &[Segment]) -> Self {
        let nodes: Vec<SegmentNode> = segments
            .iter()
            .map(|s| SegmentNode {
                segment: s.id,
                aabb: s.polygon.aabb(),
            })
            .collect();
        let n = nodes.len();
        let mut distances = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let d = aabb_manhattan(&nodes[i].aabb, &nodes[j].aabb);
                distances[i][j] = d;
                distances[j][i] = d;
            }
        }
        Self { nodes, distances }
    }

    pub fn index_of(&self, id: SegmentId) -> Option<usize> {
        self.nodes.iter().position(|n| n.segment == id)
    }
}

/// Minimum Manhattan distance between the handle's segment box translated by
/// `l_a · normal` and every other box; `None` when the segment has no
/// neighbours or is absent from the graph.
pub fn free_space_raw(graph: &SegmentGraph, handle: &PushHandle, l_a: f64) -> Option<f64> {
    let i = graph.index_of(handle.segment)?;
    let moved = graph.nodes[i].aabb.translated(handle.normal * l_a);
    graph
        .nodes
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, n)| aabb_manhattan(&moved, &n.aabb))
        .reduce(f64::min)
}

/// Free-space feature in `[0, 1]`: raw distance over `d_max`, clamped; 1 for a
/// segment without neighbours.
pub fn free_space_feature_with(
    graph: &SegmentGraph,
    handle: &PushHandle,
    l_a: f64,
    d_max: f64,
) -> f64 {
    match free_space_raw(graph, handle, l_a) {
        None => 1.0,
        Some(raw) => (raw / d_max).clamp(0.0, 1.0),
    }
}

pub fn free_space_feature(graph: &SegmentGraph, handle: &PushHandle, l_a: f64) -> f64 {
    free_space_feature_with(graph, handle, l_a, FREE_SPACE_D_MAX)
}

pub fn history_feature(r: u32) -> f64 {
    (-(r as f64)).exp()
}

pub fn fuse(f_s: f64, f_h: f64) -> f64 {
    0.5 * f_s + 0.5 * f_h
}

/// Principal-axis descriptor: both axes scaled by their extents, major first,
/// each sign-fixed into the positive-x half plane.
fn pca_descriptor(s: &Segment) -> [f64; 4] {
    let canon = |v: Vec2| {
        if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
            -v
        } else {
            v
        }
    };
    let pa = &s.principal_axes;
    let (a, ea, b, eb) = if pa.major_extent >= pa.minor_extent {
        (pa.major, pa.major_extent, pa.minor, pa.minor_extent)
    } else {
        (pa.minor, pa.minor_extent, pa.major, pa.major_extent)
    };
    let a = canon(a) * ea;
    let b = canon(b) * eb;
    [a.x, a.y, b.x, b.y]
}

/// Weighted segment distance with both terms divided by `scale` (the table
/// diagonal).
pub fn segment_distance(a: &Segment, b: &Segment, scale: f64) -> f64 {
    let (da, db) = (pca_descriptor(a), pca_descriptor(b));
    let d_pca = da
        .iter()
        .zip(&db)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let d_c = a.centroid.distance(b.centroid);
    PCA_WEIGHT * (d_pca / scale).min(1.0) + CENTROID_WEIGHT * (d_c / scale).min(1.0)
}

/// For every current segment, the index of its matched previous segment.
/// Greedy: repeatedly takes the closest unmatched pair below the threshold.
pub fn match_segments(prev: &[Segment], cur: &[Segment], scale: f64) -> Vec<Option<usize>> {
    let mut pairs = Vec::with_capacity(prev.len() * cur.len());
    for (j, c) in cur.iter().enumerate() {
        for (i, p) in prev.iter().enumerate() {
            let d = segment_distance(p, c, scale);
            if d <= MATCH_THRESHOLD {
                pairs.push((d, j, i));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![None; cur.len()];
    let mut used = vec![false; prev.len()];
    for (_, j, i) in pairs {
        if assignment[j].is_none() && !used[i] {
            assignment[j] = Some(i);
            used[i] = true;
        }
    }
    assignment
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub segment: Segment,
    /// Recorded pushes on this track.
    pub pushes: u32,
}

/// Segment tracks carried across interactions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackState {
    /// Aligned with the most recent segment list.
    pub tracks: Vec<Track>,
    next_id: u64,
}

impl TrackState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Re-associates tracks with a fresh segmentation; unmatched segments
    /// start new tracks with no pushes.
    pub fn update(&mut self, segments: &[Segment], scale: f64) {
        let prev: Vec<Segment> = self.tracks.iter().map(|t| t.segment.clone()).collect();
        let assignment = match_segments(&prev, segments, scale);
        let mut tracks = Vec::with_capacity(segments.len());
        for (seg, m) in segments.iter().zip(assignment) {
            let (id, pushes) = match m {
                Some(i) => (self.tracks[i].id, self.tracks[i].pushes),
                None => {
                    self.next_id += 1;
                    (self.next_id - 1, 0)
                }
            };
            tracks.push(Track {
                id,
                segment: seg.clone(),
                pushes,
            });
        }
        self.tracks = tracks;
    }

    pub fn track_for(&self, segment: SegmentId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.segment.id == segment)
    }

    pub fn record_push(&mut self, segment: SegmentId) {
        if let Some(t) = self.tracks.iter_mut().find(|t| t.segment.id == segment) {
            t.pushes += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub f_s: f64,
    pub f_h: f64,
    pub r: u32,
    pub track: Option<u64>,
    pub score: f64,
}

pub fn score(handle: &PushHandle, graph: &SegmentGraph, tracks: &TrackState, l_a: f64) -> BaselineScore {
    let f_s = free_space_feature(graph, handle, l_a);
    let track = tracks.track_for(handle.segment);
    let r = track.map_or(0, |t| t.pushes);
    let f_h = history_feature(r);
    BaselineScore {
        f_s,
        f_h,
        r,
        track: track.map(|t| t.id),
        score: fuse(f_s, f_h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> Aabb {
        Aabb::new(Vec2::new(x0, y0), Vec2::new(x1, y1))
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(aabb_manhattan(&b(0., 0., 1., 1.), &b(0.5, 0.5, 2., 2.)), 0.0);
        let d = aabb_manhattan(&b(0., 0., 0.1, 0.1), &b(0.2, 0.05, 0.3, 0.2));
        assert!((d - 0.1).abs() < 1e-12);
        let d = aabb_manhattan(&b(0., 0., 0.1, 0.1), &b(0.2, 0.3, 0.3, 0.4));
        assert!((d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn history_examples() {
        assert_eq!(history_feature(0), 1.0);
        assert!((history_feature(1) - 0.36788).abs() < 5e-6);
        assert!((history_feature(3) - 0.04979).abs() < 5e-6);
    }
}
