//! Planar quasi-static tabletop simulator.
//!
//! Objects are rigid convex polygons resting on an axis-aligned table. A push
//! is a point pusher swept along a straight segment in fixed sub-steps; each
//! sub-step resolves pusher penetration by the minimum translation out of the
//! contacted object (plus a torque-arm rotation), then object-object overlap by
//! moving the downstream object, then clamps objects to the table. A sub-step
//! that cannot be made consistent within `MAX_ITERATIONS` truncates the push.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    normalize_angle, polygon_distance, sat_penetration, Aabb, ConvexPolygon, Pose, Vec2,
};
use crate::rng::rng_from;

/// Pusher sub-step length (m).
pub const SUB_STEP: f64 = 0.002;
/// Penetration-resolution iterations per sub-step.
pub const MAX_ITERATIONS: usize = 200;
/// Two objects closer than this are in contact (m).
pub const CONTACT_EPSILON: f64 = 0.001;
/// An object moved if some vertex travelled farther than this (m).
pub const MOTION_EPSILON: f64 = 0.005;
/// Intersection area tolerated between objects after a push (m²).
pub const AREA_EPSILON: f64 = 1e-8;
/// Default straight-line push length (m).
pub const DEFAULT_PUSH_LENGTH: f64 = 0.2;
/// Default singulation threshold (m).
pub const SINGULATION_THRESHOLD: f64 = 0.03;
/// Rotation per unit torque arm per unit pusher advance (1/m²). A push at the
/// corner of an 8 cm square turns it by roughly 15° over 0.2 m.
pub const ROTATION_GAIN: f64 = 80.0;
/// Placement attempts per object in [`generate_scene`].
pub const MAX_PLACEMENT_ATTEMPTS: usize = 500;

const PENETRATION_TOL: f64 = 1e-9;
const MAX_ROTATION_PER_ITER: f64 = 0.05;
const PLACEMENT_GAP: f64 = 0.0005;

pub const SCENE_SCHEMA: &str = "singulate.scene/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub width: f64,
    pub height: f64,
    /// World coordinates of the lower-left corner.
    pub origin: Vec2,
}

impl TableSpec {
    pub fn new(width: f64, height: f64, origin: Vec2) -> Result<Self> {
        let t = Self {
            width,
            height,
            origin,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) || !self.origin.is_finite() {
            return Err(Error::InvalidTable(format!(
                "width {} and height {} must be positive",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(
            self.origin,
            self.origin + Vec2::new(self.width, self.height),
        )
    }

    pub fn center(&self) -> Vec2 {
        self.origin + Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.bounds().contains(p, tol)
    }
}

impl Default for TableSpec {
    /// 1.0 m × 0.8 m with its lower-left corner at the world origin.
    fn default() -> Self {
        Self {
            width: 1.0,
            height: 0.8,
            origin: Vec2::ZERO,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: ObjectId,
    /// Body-frame polygon.
    pub polygon: ConvexPolygon,
    pub pose: Pose,
    /// Body-frame mass center.
    pub mass_center: Vec2,
}

impl SceneObject {
    pub fn new(id: ObjectId, polygon: ConvexPolygon, pose: Pose) -> Self {
        let mass_center = polygon.centroid();
        Self {
            id,
            polygon,
            pose,
            mass_center,
        }
    }

    pub fn world_polygon(&self) -> ConvexPolygon {
        self.polygon.transformed(&self.pose)
    }

    pub fn world_mass_center(&self) -> Vec2 {
        self.pose.apply(self.mass_center)
    }

    /// Largest distance from the mass center to a vertex.
    pub fn max_half_extent(&self) -> f64 {
        self.polygon.max_radius_from(self.mass_center)
    }

    fn translate(&mut self, t: Vec2) {
        self.pose.translation += t;
    }

    /// Rotates about the world mass center.
    fn rotate(&mut self, dtheta: f64) {
        let mc = self.world_mass_center();
        self.pose.rotation += dtheta;
        self.pose.translation = mc - self.mass_center.rotated(self.pose.rotation);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub table: TableSpec,
    pub objects: Vec<SceneObject>,
    pub rng_seed: u64,
}

impl Scene {
    pub fn new(table: TableSpec, objects: Vec<SceneObject>, rng_seed: u64) -> Result<Self> {
        let s = Self {
            table,
            objects,
            rng_seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.table.validate()?;
        if self.objects.is_empty() {
            return Err(Error::InvalidScene("scene has no objects".into()));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return Err(Error::InvalidScene(format!("duplicate object id {:?}", o.id)));
            }
            if !o.polygon.contains(o.mass_center, 1e-12) {
                return Err(Error::InvalidScene(format!(
                    "mass center of {:?} outside its polygon",
                    o.id
                )));
            }
            if o.world_polygon()
                .vertices()
                .iter()
                .any(|&v| !self.table.contains(v, 1e-9))
            {
                return Err(Error::InvalidScene(format!("object {:?} leaves the table", o.id)));
            }
        }
        Ok(())
    }

    pub fn object(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn index_of(&self, id: ObjectId) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn world_polygons(&self) -> Vec<ConvexPolygon> {
        self.objects.iter().map(|o| o.world_polygon()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&SceneFile {
            schema: SCENE_SCHEMA.to_string(),
            scene: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: SceneFile = serde_json::from_str(s)?;
        if f.schema != SCENE_SCHEMA {
            return Err(Error::Schema {
                expected: SCENE_SCHEMA.into(),
                found: f.schema,
            });
        }
        f.scene.validate()?;
        Ok(f.scene)
    }
}

#[derive(Serialize, Deserialize)]
struct SceneFile {
    schema: String,
    #[serde(flatten)]
    scene: Scene,
}

/// Named body-frame polygon used by the scene generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeTemplate {
    pub name: String,
    pub polygon: ConvexPolygon,
}

impl ShapeTemplate {
    pub fn new(name: impl Into<String>, polygon: ConvexPolygon) -> Self {
        Self {
            name: name.into(),
            polygon,
        }
    }
}

/// Box-, bottle- and bowl-sized shapes between 5 and 12 cm across.
pub fn default_shape_library() -> Vec<ShapeTemplate> {
    let rect = |w, h| ConvexPolygon::rectangle(w, h).expect("valid rectangle");
    let reg = |n, r, p| ConvexPolygon::regular(n, r, p).expect("valid regular polygon");
    vec![
        ShapeTemplate::new("square_80", rect(0.08, 0.08)),
        ShapeTemplate::new("square_60", rect(0.06, 0.06)),
        ShapeTemplate::new("box_120x60", rect(0.12, 0.06)),
        ShapeTemplate::new("box_100x50", rect(0.10, 0.05)),
        ShapeTemplate::new("triangle_90", reg(3, 0.052, 0.0)),
        ShapeTemplate::new("pentagon_45", reg(5, 0.045, 0.0)),
        ShapeTemplate::new("hexagon_45", reg(6, 0.045, 0.0)),
        ShapeTemplate::new("octagon_40", reg(8, 0.04, 0.0)),
    ]
}

/// Places `n_objects` shapes so that their contact graph is connected.
///
/// The first object goes near the table center; each further object is
/// attached to a random existing one by sliding it in from a random bearing
/// until it touches, leaving a gap below [`CONTACT_EPSILON`].
pub fn generate_scene(
    n_objects: usize,
    shape_library: &[ShapeTemplate],
    table: TableSpec,
    seed: u64,
) -> Result<Scene> {
    table.validate()?;
    if n_objects == 0 {
        return Err(Error::InvalidScene("n_objects must be at least 1".into()));
    }
    if shape_library.is_empty() {
        return Err(Error::InvalidScene("empty shape library".into()));
    }
    // templates are body-frame polygons centred on their centroid
    let templates: Vec<ConvexPolygon> = shape_library
        .iter()
        .map(|t| {
            let p = ConvexPolygon::new(t.polygon.vertices().to_vec())?;
            let c = p.centroid();
            Ok(p.translated(-c))
        })
        .collect::<Result<_>>()?;

    let mut rng = rng_from(seed);
    let bounds = table.bounds();
    let inside = |p: &ConvexPolygon| p.vertices().iter().all(|&v| bounds.contains(v, 0.0));
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects);

    let mut attempts = 0;
    while objects.is_empty() {
        attempts += 1;
        if attempts > MAX_PLACEMENT_ATTEMPTS {
            return Err(Error::PlacementFailed {
                placed: 0,
                requested: n_objects,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
        let poly = &templates[rng.gen_range(0..templates.len())];
        let jitter = Vec2::new(
            rng.gen_range(-0.1..0.1) * table.width,
            rng.gen_range(-0.1..0.1) * table.height,
        );
        let pose = Pose::new(table.center() + jitter, rng.gen_range(0.0..std::f64::consts::TAU));
        let obj = SceneObject::new(ObjectId(0), poly.clone(), pose);
        if inside(&obj.world_polygon()) {
            objects.push(obj);
        }
    }

    while objects.len() < n_objects {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let anchor = &objects[rng.gen_range(0..objects.len())];
            let poly = &templates[rng.gen_range(0..templates.len())];
            let rotation = rng.gen_range(0.0..std::f64::consts::TAU);
            let bearing = Vec2::from_angle(rng.gen_range(0.0..std::f64::consts::TAU));

            let anchor_poly = anchor.world_polygon();
            let anchor_mc = anchor.world_mass_center();
            let at = |t: f64| poly.transformed(&Pose::new(anchor_mc + bearing * t, rotation));
            // overlap is an interval [0, t*) along the bearing; bisect its end
            let mut lo = 0.0;
            let mut hi = anchor.max_half_extent() + poly.max_radius_from(Vec2::ZERO) + 0.01;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if sat_penetration(&anchor_poly, &at(mid)).is_some() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let candidate = at(hi + PLACEMENT_GAP);
            if !inside(&candidate) {
                continue;
            }
            let clear = objects
                .iter()
                .all(|o| polygon_distance(&o.world_polygon(), &candidate) > 0.0);
            if !clear {
                continue;
            }
            let id = ObjectId(objects.len() as u32);
            objects.push(SceneObject::new(
                id,
                poly.clone(),
                Pose::new(anchor_mc + bearing * (hi + PLACEMENT_GAP), rotation),
            ));
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::PlacementFailed {
                placed: objects.len(),
                requested: n_objects,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        }
    }

    Scene::new(table, objects, seed)
}

/// Objects `i` and `j` are adjacent when their boundary distance is below
/// [`CONTACT_EPSILON`].
pub fn contact_graph(scene: &Scene) -> Vec<Vec<usize>> {
    let polys = scene.world_polygons();
    let n = polys.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if polygon_distance(&polys[i], &polys[j]) < CONTACT_EPSILON {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

pub fn is_contact_connected(scene: &Scene) -> bool {
    let adj = contact_graph(scene);
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.iter().all(|&s| s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushCommand {
    pub start: Vec2,
    pub direction: Vec2,
    pub length: f64,
}

impl PushCommand {
    pub fn new(start: Vec2, direction: Vec2, length: f64) -> Result<Self> {
        let cmd = Self {
            start,
            direction,
            length,
        };
        cmd.validate()?;
        Ok(cmd)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start.is_finite() {
            return Err(Error::InvalidPush("non-finite start".into()));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPush(format!(
                "direction norm {} is not 1",
                self.direction.norm()
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidPush(format!("length {} must be positive", self.length)));
        }
        Ok(())
    }

    pub fn end(&self) -> Vec2 {
        self.start + self.direction * self.length
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    /// Mass-center translation (m).
    pub translation: Vec2,
    /// Rotation change (rad).
    pub rotation: f64,
    /// Largest vertex travel (m).
    pub max_vertex_travel: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PushOutcome {
    pub moved_ids: BTreeSet<ObjectId>,
    /// Every object whose pose changed at all.
    pub displacement_map: BTreeMap<ObjectId, Displacement>,
    pub contacted_first: Option<ObjectId>,
    /// Set when a jammed sub-step stopped the push early.
    pub truncated: bool,
    pub steps_completed: usize,
    pub steps_planned: usize,
}

/// Sweeps the point pusher along `cmd` and returns the settled scene.
pub fn apply_push(scene: &Scene, cmd: &PushCommand) -> Result<(Scene, PushOutcome)> {
    cmd.validate()?;
    let mut objects = scene.objects.clone();
    let bounds = scene.table.bounds();
    let n_steps = (cmd.length / SUB_STEP).ceil().max(1.0) as usize;
    let mut contacted_first = None;
    let mut truncated = false;
    let mut steps_completed = 0;

    for k in 1..=n_steps {
        let pusher = cmd.start + cmd.direction * (cmd.length * k as f64 / n_steps as f64);
        let snapshot = objects.clone();
        let mut first = contacted_first;
        if settle(&mut objects, pusher, cmd.direction, &bounds, &mut first) {
            contacted_first = first;
            steps_completed = k;
        } else {
            objects = snapshot;
            truncated = true;
            break;
        }
    }

    let mut outcome = PushOutcome {
        contacted_first,
        truncated,
        steps_completed,
        steps_planned: n_steps,
        ..Default::default()
    };
    for (before, after) in scene.objects.iter().zip(&objects) {
        if before.pose == after.pose {
            continue;
        }
        let wb = before.world_polygon();
        let wa = after.world_polygon();
        let travel = wb
            .vertices()
            .iter()
            .zip(wa.vertices())
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max);
        outcome.displacement_map.insert(
            before.id,
            Displacement {
                translation: after.world_mass_center() - before.world_mass_center(),
                rotation: normalize_angle(after.pose.rotation - before.pose.rotation),
                max_vertex_travel: travel,
            },
        );
        if travel > MOTION_EPSILON {
            outcome.moved_ids.insert(before.id);
        }
    }

    let after = Scene {
        table: scene.table,
        objects,
        rng_seed: scene.rng_seed,
    };
    Ok((after, outcome))
}

/// Resolves one sub-step. Returns `false` when the configuration jams.
fn settle(
    objects: &mut [SceneObject],
    pusher: Vec2,
    push_dir: Vec2,
    bounds: &Aabb,
    contacted_first: &mut Option<ObjectId>,
) -> bool {
    let n = objects.len();
    let mut polys: Vec<ConvexPolygon> = objects.iter().map(|o| o.world_polygon()).collect();
    // objects the pusher touched during this sub-step yield to no one
    let mut held = vec![false; n];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut active = vec![false; n];

        for i in 0..n {
            let Some((depth, normal)) = polys[i].point_penetration(pusher) else {
                continue;
            };
            if depth <= PENETRATION_TOL {
                continue;
            }
            // never shove the object back against the push: drop the
            // backward part, or carry it along the push if that exits sooner
            let (motion, depth) = if normal.dot(push_dir) > 0.0 {
                let forward = (push_dir, polys[i].ray_exit(pusher, -push_dir));
                let side = -normal + push_dir * normal.dot(push_dir);
                if side.norm() > 1e-12 {
                    let side = side.normalized();
                    let lateral = (side, polys[i].ray_exit(pusher, -side));
                    if lateral.1 < forward.1 {
                        lateral
                    } else {
                        forward
                    }
                } else {
                    forward
                }
            } else {
                (-normal, depth)
            };
            let arm = pusher - objects[i].world_mass_center();
            let dtheta = (ROTATION_GAIN * arm.cross(motion) * depth)
                .clamp(-MAX_ROTATION_PER_ITER, MAX_ROTATION_PER_ITER);
            objects[i].translate(motion * depth);
            objects[i].rotate(dtheta);
            polys[i] = objects[i].world_polygon();
            contacted_first.get_or_insert(objects[i].id);
            active[i] = true;
            held[i] = true;
            changed = true;
        }

        for i in 0..n {
            for j in i + 1..n {
                let Some((depth, dir)) = sat_penetration(&polys[i], &polys[j]) else {
                    continue;
                };
                if depth <= PENETRATION_TOL {
                    continue;
                }
                // `dir` moves j away from i
                let move_j = match (held[i], held[j], active[i], active[j]) {
                    (true, false, ..) => true,
                    (false, true, ..) => false,
                    (_, _, true, false) => true,
                    (_, _, false, true) => false,
                    _ => {
                        objects[j].world_mass_center().dot(push_dir)
                            >= objects[i].world_mass_center().dot(push_dir)
                    }
                };
                let (k, t) = if move_j { (j, dir * depth) } else { (i, -dir * depth) };
                objects[k].translate(t);
                polys[k] = objects[k].world_polygon();
                active[k] = true;
                changed = true;
            }
        }

        for i in 0..n {
            let bb = polys[i].aabb();
            let mut shift = Vec2::ZERO;
            if bb.min.x < bounds.min.x {
                shift.x = bounds.min.x - bb.min.x;
            } else if bb.max.x > bounds.max.x {
                shift.x = bounds.max.x - bb.max.x;
            }
            if bb.min.y < bounds.min.y {
                shift.y = bounds.min.y - bb.min.y;
            } else if bb.max.y > bounds.max.y {
                shift.y = bounds.max.y - bb.max.y;
            }
            if shift != Vec2::ZERO {
                // the edge stops the push rather than shoving back
                if held[i] && shift.dot(push_dir) < -PENETRATION_TOL {
                    return false;
                }
                objects[i].translate(shift);
                polys[i] = objects[i].world_polygon();
                if shift.norm() > PENETRATION_TOL {
                    changed = true;
                }
            }
        }

        if !changed {
            return true;
        }
    }
    false
}

/// Minimum boundary distance over all object pairs; `+∞` for fewer than two.
pub fn min_pairwise_distance(scene: &Scene) -> f64 {
    let polys = scene.world_polygons();
    let mut best = f64::INFINITY;
    for i in 0..polys.len() {
        for j in i + 1..polys.len() {
            best = best.min(polygon_distance(&polys[i], &polys[j]));
        }
    }
    best
}

/// Distance from object `index` to its nearest neighbour; `+∞` when alone.
pub fn object_clearance(scene: &Scene, index: usize) -> f64 {
    let target = scene.objects[index].world_polygon();
    scene
        .objects
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != index)
        .map(|(_, o)| polygon_distance(&target, &o.world_polygon()))
        .fold(f64::INFINITY, f64::min)
}

pub fn is_singulated(scene: &Scene, threshold: f64) -> bool {
    min_pairwise_distance(scene) >= threshold
}

/// Number of objects whose clearance is at least `threshold`.
pub fn singulated_count(scene: &Scene, threshold: f64) -> usize {
    (0..scene.objects.len())
        .filter(|&i| object_clearance(scene, i) >= threshold)
        .count()
}
