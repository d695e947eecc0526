//! Automatic push labels: a push is positive when it singulates the pushed
//! object, moves nothing else, passes close to the object's mass center and
//! the object was not already free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proposals::PushHandle;
use crate::scene::{object_clearance, PushOutcome, Scene, SINGULATION_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelCriteria {
    pub singulation_threshold: f64,
    /// Allowed push-line offset from the mass center as a fraction of the
    /// object's max half-extent.
    pub center_offset_max: f64,
    /// When false, a push that moves more than one object is negative.
    pub allow_multi_object_motion: bool,
}

impl Default for LabelCriteria {
    fn default() -> Self {
        Self {
            singulation_threshold: SINGULATION_THRESHOLD,
            center_offset_max: 0.35,
            allow_multi_object_motion: false,
        }
    }
}

impl LabelCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.singulation_threshold > 0.0 && self.center_offset_max > 0.0) {
            return Err(Error::InvalidScene(
                "label thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBreakdown {
    /// (a) pushed object clear of everything afterwards.
    pub singulated_after: bool,
    /// (b) at most one object moved.
    pub single_object_moved: bool,
    /// (c) push line passes near the mass center.
    pub near_center: bool,
    /// (d) pushed object was not already clear beforehand.
    pub not_singulated_before: bool,
    pub clearance_before: f64,
    pub clearance_after: f64,
    pub center_offset: f64,
    pub moved_count: usize,
}

impl LabelBreakdown {
    pub fn label(&self) -> bool {
        self.singulated_after
            && self.single_object_moved
            && self.near_center
            && self.not_singulated_before
    }
}

pub fn label_push(
    before: &Scene,
    after: &Scene,
    outcome: &PushOutcome,
    handle: &PushHandle,
    criteria: &LabelCriteria,
) -> Result<LabelBreakdown> {
    let i_before = before
        .index_of(handle.object)
        .ok_or(Error::MissingObject(handle.object))?;
    let i_after = after
        .index_of(handle.object)
        .ok_or(Error::MissingObject(handle.object))?;
    let obj = &before.objects[i_before];

    let clearance_before = object_clearance(before, i_before);
    let clearance_after = object_clearance(after, i_after);

    let mc = obj.world_mass_center();
    let center_offset = (mc - handle.position).cross(handle.normal).abs();

    let moved_count = outcome.moved_ids.len();
    Ok(LabelBreakdown {
        singulated_after: clearance_after >= criteria.singulation_threshold,
        single_object_moved: criteria.allow_multi_object_motion || moved_count <= 1,
        near_center: center_offset <= criteria.center_offset_max * obj.max_half_extent(),
        not_singulated_before: clearance_before < criteria.singulation_threshold,
        clearance_before,
        clearance_after,
        center_offset,
        moved_count,
    })
}
