//! Push handles on segment boundaries and their image-space proposals.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Vec2};
use crate::perception::{Segment, SegmentId, ViewTransform};
use crate::rng::rng_from;
use crate::scene::{ObjectId, PushCommand, TableSpec};

/// Default number of handles sampled per segment.
pub const DEFAULT_PER_SEGMENT: usize = 16;

/// World-frame push origin on a segment boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushHandle {
    pub position: Vec2,
    /// Inward unit normal; the push direction.
    pub normal: Vec2,
    pub segment: SegmentId,
    /// Object the segment belongs to.
    pub object: ObjectId,
    pub length: f64,
}

impl PushHandle {
    pub fn endpoint(&self) -> Vec2 {
        self.position + self.normal * self.length
    }

    pub fn command(&self) -> PushCommand {
        PushCommand {
            start: self.position,
            direction: self.normal,
            length: self.length,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushProposal {
    /// Start position in working-image pixels.
    pub c: Vec2,
    /// Image-plane push angle in `[-π, π)`, y axis pointing down.
    pub alpha: f64,
    pub handle: PushHandle,
}

/// Samples `per_segment` handles along each segment boundary (stratified by
/// arc length) and drops handles that start or end off the table.
pub fn sample_handles(
    segments: &[Segment],
    table: &TableSpec,
    per_segment: usize,
    length: f64,
    seed: u64,
) -> Vec<PushHandle> {
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(segments.len() * per_segment);
    for seg in segments {
        let poly = &seg.polygon;
        let lengths: Vec<f64> = poly.edges().map(|(a, b)| a.distance(b)).collect();
        let perimeter: f64 = lengths.iter().sum();
        for j in 0..per_segment {
            let u: f64 = rng.gen();
            let mut s = (j as f64 + u) / per_segment as f64 * perimeter;
            let mut edge = lengths.len() - 1;
            for (i, &l) in lengths.iter().enumerate() {
                if s < l {
                    edge = i;
                    break;
                }
                s -= l;
            }
            let a = poly.vertices()[edge];
            let b = poly.vertices()[(edge + 1) % poly.len()];
            let t = (s / lengths[edge]).clamp(0.0, 1.0);
            let handle = PushHandle {
                position: a + (b - a) * t,
                normal: -poly.edge_normal(edge),
                segment: seg.id,
                object: seg.parent_object,
                length,
            };
            if table.contains(handle.position, 1e-9) && table.contains(handle.endpoint(), 1e-9) {
                out.push(handle);
            }
        }
    }
    out
}

/// Image-plane angle of a world direction under the y-down convention.
pub fn image_angle(world_dir: Vec2) -> f64 {
    normalize_angle((-world_dir.y).atan2(world_dir.x))
}

/// Lifts handles into the working image. Handles that project outside the
/// image are dropped; the second value counts them.
pub fn to_proposals(handles: &[PushHandle], view: &ViewTransform) -> (Vec<PushProposal>, usize) {
    let mut dropped = 0;
    let proposals = handles
        .iter()
        .filter_map(|h| {
            let p = view.world_to_image(h.position);
            if !p.inside {
                dropped += 1;
                return None;
            }
            Some(PushProposal {
                c: p.pixel,
                alpha: image_angle(h.normal),
                handle: *h,
            })
        })
        .collect();
    if dropped > 0 {
        log::debug!("{dropped} push handles project outside the working image");
    }
    (proposals, dropped)
}
