//! Procedural furniture generator: deterministic articulated objects with
//! exact ground-truth joints, the training substitute for external
//! datasets. The front face is +y; drawers and trays slide out along it,
//! doors hinge on vertical edges.

use super::{canonicalize, voxelize, ArticulatedObject, IngestError, ObjectPart, PartGeometry};
use crate::artgrid::{ArticulatedVoxelGrid, JointSpec, JointType, PartLabel};
use crate::real::Real;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Cabinet,
    Table,
    Dishwasher,
    Microwave,
}

impl Category {
    pub const COUNT: usize = 4;

    pub const ALL: [Category; Self::COUNT] = [
        Category::Cabinet,
        Category::Table,
        Category::Dishwasher,
        Category::Microwave,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Cabinet => "cabinet",
            Category::Table => "table",
            Category::Dishwasher => "dishwasher",
            Category::Microwave => "microwave",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        Self::ALL.iter().copied().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProceduralSpec {
    pub category: Category,
    pub n_drawers: usize,
    pub n_doors: usize,
    pub handle_per_part: bool,
    /// Relative size jitter in [0, 1); 0 disables all dimension noise.
    pub size_jitter: f64,
}

impl ProceduralSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(0.0..1.0).contains(&self.size_jitter) {
            return Err(IngestError::BadSpec(format!(
                "size_jitter {} outside [0, 1)",
                self.size_jitter
            )));
        }
        // Tables may be plain (no movables); everything else articulates.
        if self.category != Category::Table && self.n_drawers + self.n_doors == 0 {
            return Err(IngestError::BadSpec(
                "need at least one drawer or door".into(),
            ));
        }
        if self.n_drawers > 4 || self.n_doors > 3 {
            return Err(IngestError::BadSpec(
                "at most 4 drawers and 3 doors".into(),
            ));
        }
        Ok(())
    }
}

/// Randomized but valid spec, for dataset sweeps.
pub fn sample_spec(seed: u64) -> ProceduralSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15));
    let category = Category::ALL[rng.gen_range(0..Category::COUNT)];
    let (n_drawers, n_doors) = match category {
        Category::Table => (rng.gen_range(0..=3), 0),
        Category::Cabinet => {
            let dr = rng.gen_range(0..=3);
            let doors = if dr == 0 {
                rng.gen_range(1..=2)
            } else {
                rng.gen_range(0..=2)
            };
            (dr, doors)
        }
        Category::Dishwasher => (rng.gen_range(1..=3), 1),
        Category::Microwave => (rng.gen_range(0..=1), 1),
    };
    ProceduralSpec {
        category,
        n_drawers,
        n_doors,
        handle_per_part: rng.gen::<f64>() < 0.5,
        size_jitter: 0.1,
    }
}

struct Builder {
    parts: Vec<ObjectPart<f64>>,
}

impl Builder {
    fn add(&mut self, label: PartLabel, joint: JointSpec<f64>, boxes: Vec<([f64; 3], [f64; 3])>) -> i32 {
        let id = self.parts.len() as i32;
        self.parts.push(ObjectPart {
            id,
            label,
            geometry: PartGeometry {
                boxes,
                triangles: vec![],
            },
            joint,
        });
        id
    }
}

fn prismatic(origin: [f64; 3], hi: f64) -> JointSpec<f64> {
    JointSpec {
        joint_type: JointType::Prismatic,
        axis: [0.0, 1.0, 0.0],
        origin,
        range: (0.0, hi),
        pitch: 0.0,
    }
}

fn hinge(origin: [f64; 3], hi: f64, open_sign: f64) -> JointSpec<f64> {
    // Vertical hinge axis; the sign picks the opening direction so left-
    // and right-hinged leaves both swing outward (+y).
    JointSpec {
        joint_type: JointType::Revolute,
        axis: [0.0, 0.0, open_sign],
        origin,
        range: (0.0, hi),
        pitch: 0.0,
    }
}

fn continuous(origin: [f64; 3], axis: [f64; 3]) -> JointSpec<f64> {
    JointSpec {
        joint_type: JointType::Continuous,
        axis,
        origin,
        // Continuous joints spin freely; sampling substitutes (-pi, pi).
        range: (0.0, 0.0),
        pitch: 0.0,
    }
}

/// Five-panel open-front carcass.
fn carcass(w: f64, d: f64, h: f64, t: f64) -> Vec<([f64; 3], [f64; 3])> {
    vec![
        ([-(w - t) / 2.0, 0.0, 0.0], [t, d, h]),
        ([(w - t) / 2.0, 0.0, 0.0], [t, d, h]),
        ([0.0, 0.0, -(h - t) / 2.0], [w - 2.0 * t, d, t]),
        ([0.0, 0.0, (h - t) / 2.0], [w - 2.0 * t, d, t]),
        ([0.0, -(d - t) / 2.0, 0.0], [w - 2.0 * t, t, h - 2.0 * t]),
    ]
}

struct FrontSlots {
    /// (center x, center z, width, height) per slot.
    slots: Vec<(f64, f64, f64, f64)>,
}

fn stack_vertical(cx: f64, w: f64, z_lo: f64, z_hi: f64, n: usize) -> FrontSlots {
    let h = (z_hi - z_lo) / n as f64;
    FrontSlots {
        slots: (0..n)
            .map(|i| (cx, z_lo + (i as f64 + 0.5) * h, w, h))
            .collect(),
    }
}

fn row_horizontal(x_lo: f64, x_hi: f64, cz: f64, h: f64, n: usize) -> FrontSlots {
    let w = (x_hi - x_lo) / n as f64;
    FrontSlots {
        slots: (0..n)
            .map(|i| (x_lo + (i as f64 + 0.5) * w, cz, w, h))
            .collect(),
    }
}

struct Ctx<'a> {
    rng: &'a mut ChaCha12Rng,
    spec: &'a ProceduralSpec,
    d: f64,
    t: f64,
}

impl Ctx<'_> {
    fn jit(&mut self, base: f64) -> f64 {
        base * (1.0 + self.spec.size_jitter * (self.rng.gen::<f64>() - 0.5))
    }

    fn add_drawer(&mut self, b: &mut Builder, slot: (f64, f64, f64, f64), label: PartLabel) {
        let (cx, cz, sw, sh) = slot;
        let (d, t) = (self.d, self.t);
        let fw = sw * 0.88;
        let fh = sh * 0.82;
        let front_center = [cx, (d - t) / 2.0, cz];
        let hi = d * (0.45 + 0.15 * self.rng.gen::<f64>());
        let mut boxes = vec![(front_center, [fw, t, fh])];
        if label == PartLabel::Drawer {
            // Inner body behind the front panel, clear of the back panel by
            // a full wall thickness so voxels never straddle both parts.
            boxes.push(([cx, 0.0, cz], [fw * 0.8, d - 4.0 * t, fh * 0.65]));
        }
        let id = b.add(label, prismatic(front_center, hi), boxes);
        if self.spec.handle_per_part {
            let bar = [cx, d / 2.0 + 0.025, cz];
            b.parts.push(ObjectPart {
                id: b.parts.len() as i32,
                label: PartLabel::Handle,
                geometry: PartGeometry {
                    boxes: vec![(bar, [fw * 0.5, 0.05, 0.04])],
                    triangles: vec![],
                },
                // Handles ride their parent part: same joint, verbatim.
                joint: b.parts[id as usize].joint,
            });
        }
    }

    fn add_door(&mut self, b: &mut Builder, slot: (f64, f64, f64, f64), hinge_left: bool) {
        let (cx, cz, sw, sh) = slot;
        let (d, t) = (self.d, self.t);
        let pw = sw * 0.92;
        let ph = sh * 0.92;
        let hinge_x = if hinge_left { cx - sw / 2.0 } else { cx + sw / 2.0 };
        let hi = std::f64::consts::FRAC_PI_2
            * (1.0 + self.spec.size_jitter * (self.rng.gen::<f64>() - 0.5));
        let open_sign = if hinge_left { 1.0 } else { -1.0 };
        let joint = hinge([hinge_x, d / 2.0, cz], hi, open_sign);
        let id = b.add(
            PartLabel::Door,
            joint,
            vec![([cx, (d - t) / 2.0, cz], [pw, t, ph])],
        );
        if self.spec.handle_per_part {
            // Vertical bar near the non-hinge edge, staggered in height so
            // the handles of adjacent leaves stay apart in attribute space.
            let hx = if hinge_left { cx + pw * 0.38 } else { cx - pw * 0.38 };
            let hz = cz + if hinge_left { ph * 0.16 } else { -ph * 0.16 };
            b.parts.push(ObjectPart {
                id: b.parts.len() as i32,
                label: PartLabel::Handle,
                geometry: PartGeometry {
                    boxes: vec![([hx, d / 2.0 + 0.025, hz], [0.04, 0.05, ph * 0.4])],
                    triangles: vec![],
                },
                joint: b.parts[id as usize].joint,
            });
        }
    }
}

/// Deterministic procedural object. Same (seed, spec) yields bit-identical
/// output. Coordinates are raw; run `canonicalize` before voxelizing.
pub fn gen_procedural<T: Real>(
    seed: u64,
    spec: &ProceduralSpec,
) -> Result<ArticulatedObject<T>, IngestError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut b = Builder { parts: Vec::new() };
    match spec.category {
        Category::Cabinet => build_cabinet(&mut rng, spec, &mut b),
        Category::Table => build_table(&mut rng, spec, &mut b),
        Category::Dishwasher => build_dishwasher(&mut rng, spec, &mut b),
        Category::Microwave => build_microwave(&mut rng, spec, &mut b),
    }
    let obj = ArticulatedObject {
        name: format!("{}-{}", spec.category.name(), seed),
        parts: b.parts,
    };
    obj.validate()?;
    Ok(convert(obj))
}

fn convert<T: Real>(obj: ArticulatedObject<f64>) -> ArticulatedObject<T> {
    let v3 = |p: [f64; 3]| [T::of(p[0]), T::of(p[1]), T::of(p[2])];
    ArticulatedObject {
        name: obj.name,
        parts: obj
            .parts
            .into_iter()
            .map(|p| ObjectPart {
                id: p.id,
                label: p.label,
                geometry: PartGeometry {
                    boxes: p
                        .geometry
                        .boxes
                        .iter()
                        .map(|(c, s)| (v3(*c), v3(*s)))
                        .collect(),
                    triangles: p
                        .geometry
                        .triangles
                        .iter()
                        .map(|t| [v3(t[0]), v3(t[1]), v3(t[2])])
                        .collect(),
                },
                joint: JointSpec {
                    joint_type: p.joint.joint_type,
                    axis: v3(p.joint.axis),
                    origin: v3(p.joint.origin),
                    range: (T::of(p.joint.range.0), T::of(p.joint.range.1)),
                    pitch: T::of(p.joint.pitch),
                },
            })
            .collect(),
    }
}

fn build_cabinet(rng: &mut ChaCha12Rng, spec: &ProceduralSpec, b: &mut Builder) {
    let t = 0.05;
    let mut ctx = Ctx { rng, spec, d: 0.0, t };
    let w = ctx.jit(0.9);
    let d = ctx.jit(0.5);
    let h = ctx.jit(1.25);
    ctx.d = d;
    b.add(PartLabel::Base, JointSpec::fixed(), carcass(w, d, h, t));
    let iw = w - 2.0 * t;
    let (z_lo, z_hi) = (-(h / 2.0 - t), h / 2.0 - t);
    let split = if spec.n_doors > 0 && spec.n_drawers > 0 {
        z_lo + (z_hi - z_lo) * 0.45
    } else if spec.n_doors > 0 {
        z_hi
    } else {
        z_lo
    };
    for slot in stack_vertical(0.0, iw, split, z_hi, spec.n_drawers.max(1)).slots
        [..spec.n_drawers]
        .to_vec()
    {
        ctx.add_drawer(b, slot, PartLabel::Drawer);
    }
    let door_h = split - z_lo;
    for (i, slot) in row_horizontal(-iw / 2.0, iw / 2.0, (z_lo + split) / 2.0, door_h, spec.n_doors.max(1))
        .slots[..spec.n_doors]
        .to_vec()
        .into_iter()
        .enumerate()
    {
        ctx.add_door(b, slot, i % 2 == 0);
    }
    // Half the cabinets with a door compartment get a fixed shelf inside.
    let want_shelf = ctx.rng.gen::<f64>() < 0.5;
    if spec.n_doors > 0 && want_shelf {
        b.add(
            PartLabel::Shelf,
            JointSpec::fixed(),
            vec![(
                [0.0, 0.0, (z_lo + split) / 2.0],
                [iw - 2.0 * t, d - 4.0 * t, t * 0.8],
            )],
        );
    }
}

fn build_table(rng: &mut ChaCha12Rng, spec: &ProceduralSpec, b: &mut Builder) {
    let t = 0.04;
    let mut ctx = Ctx { rng, spec, d: 0.0, t };
    let w = ctx.jit(1.2);
    let d = ctx.jit(0.7);
    let h = ctx.jit(0.75);
    ctx.d = d;
    let top_t = 0.06;
    let leg = 0.07;
    let mut base = vec![([0.0, 0.0, (h - top_t) / 2.0], [w, d, top_t])];
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            base.push((
                [sx * (w - leg) / 2.0, sy * (d - leg) / 2.0, -top_t / 2.0],
                [leg, leg, h - top_t],
            ));
        }
    }
    if spec.n_doors > 0 {
        // Console enclosure under the top for the door compartment.
        let eh = h * 0.55;
        let ez = h / 2.0 - top_t - eh / 2.0;
        base.push(([-(w * 0.45 - t / 2.0), 0.0, ez], [t, d, eh]));
        base.push(([w * 0.45 - t / 2.0, 0.0, ez], [t, d, eh]));
        base.push(([0.0, -(d - t) / 2.0, ez], [w * 0.9, t, eh]));
        base.push(([0.0, 0.0, ez - eh / 2.0 + t / 2.0], [w * 0.9, d, t]));
    }
    b.add(PartLabel::Base, JointSpec::fixed(), base);
    let e_top = h / 2.0 - top_t;
    let ah = if spec.n_drawers > 0 { h * 0.16 } else { 0.0 };
    if spec.n_drawers > 0 {
        let az = e_top - ah / 2.0 - 0.01;
        for slot in row_horizontal(-w * 0.45, w * 0.45, az, ah, spec.n_drawers).slots {
            ctx.add_drawer(b, slot, PartLabel::Drawer);
        }
    }
    if spec.n_doors > 0 {
        let eh = h * 0.55;
        let top_d = e_top - ah - 0.03;
        let bot_d = e_top - eh + 0.02;
        for (i, slot) in row_horizontal(
            -w * 0.42,
            w * 0.42,
            (top_d + bot_d) / 2.0,
            top_d - bot_d,
            spec.n_doors,
        )
        .slots
        .into_iter()
        .enumerate()
        {
            ctx.add_door(b, slot, i % 2 == 0);
        }
    }
}

fn build_dishwasher(rng: &mut ChaCha12Rng, spec: &ProceduralSpec, b: &mut Builder) {
    let t = 0.05;
    let mut ctx = Ctx { rng, spec, d: 0.0, t };
    let w = ctx.jit(0.85);
    let d = ctx.jit(0.8);
    let h = ctx.jit(0.95);
    ctx.d = d;
    b.add(PartLabel::Base, JointSpec::fixed(), carcass(w, d, h, t));
    let iw = w - 2.0 * t;
    let ih = h - 2.0 * t;
    // Sliding racks inside the tub.
    for slot in stack_vertical(0.0, iw, -ih / 2.0 + 0.1, ih / 2.0 - 0.05, spec.n_drawers.max(1))
        .slots[..spec.n_drawers]
        .to_vec()
    {
        let (cx, cz, sw, _) = slot;
        let hi = d * (0.4 + 0.15 * ctx.rng.gen::<f64>());
        let origin = [cx, 0.0, cz];
        b.add(
            PartLabel::Tray,
            prismatic(origin, hi),
            vec![([cx, 0.0, cz], [sw * 0.82, d - 4.0 * t, 0.05])],
        );
    }
    // Full-front door leaves.
    for (i, slot) in row_horizontal(-iw / 2.0, iw / 2.0, 0.0, ih, spec.n_doors.max(1)).slots
        [..spec.n_doors]
        .to_vec()
        .into_iter()
        .enumerate()
    {
        ctx.add_door(b, slot, i % 2 == 0);
    }
    // Four casters under the tub.
    for (sx, sy) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)] {
        let center = [sx * (w / 2.0 - 0.1), sy * (d / 2.0 - 0.1), -h / 2.0 - 0.045];
        b.add(
            PartLabel::Wheel,
            continuous(center, [1.0, 0.0, 0.0]),
            vec![(center, [0.09, 0.09, 0.09])],
        );
    }
}

fn build_microwave(rng: &mut ChaCha12Rng, spec: &ProceduralSpec, b: &mut Builder) {
    let t = 0.04;
    let mut ctx = Ctx { rng, spec, d: 0.0, t };
    let w = ctx.jit(0.95);
    let d = ctx.jit(0.55);
    let h = ctx.jit(0.55);
    ctx.d = d;
    b.add(PartLabel::Base, JointSpec::fixed(), carcass(w, d, h, t));
    let iw = w - 2.0 * t;
    let ih = h - 2.0 * t;
    // Door(s) over the left 70% of the front; controls on the right.
    let door_w = iw * 0.7;
    for (i, slot) in row_horizontal(-iw / 2.0, -iw / 2.0 + door_w, 0.0, ih, spec.n_doors.max(1))
        .slots[..spec.n_doors]
        .to_vec()
        .into_iter()
        .enumerate()
    {
        ctx.add_door(b, slot, i % 2 == 0);
    }
    // Sliding tray inside when requested.
    for slot in stack_vertical(0.0, iw, -ih / 2.0 + 0.06, ih / 2.0, spec.n_drawers.max(1)).slots
        [..spec.n_drawers]
        .to_vec()
    {
        let (cx, cz, sw, _) = slot;
        let hi = d * (0.35 + 0.1 * ctx.rng.gen::<f64>());
        b.add(
            PartLabel::Tray,
            prismatic([cx, 0.0, cz], hi),
            vec![([cx, 0.0, cz], [sw * 0.6, d - 4.0 * t, 0.04])],
        );
    }
    // Two rotary knobs on the control strip.
    let strip_x = -iw / 2.0 + door_w + (iw - door_w) / 2.0;
    for dz in [0.14, -0.14] {
        let center = [strip_x, d / 2.0 + 0.03, h * dz];
        b.add(
            PartLabel::Knob,
            continuous(center, [0.0, 1.0, 0.0]),
            vec![(center, [0.11, 0.1, 0.11])],
        );
    }
}

/// Generate, canonicalize, and voxelize in one call.
pub fn gen_grid<T: Real>(
    seed: u64,
    spec: &ProceduralSpec,
    n: usize,
) -> Result<ArticulatedVoxelGrid<T>, IngestError> {
    let obj = gen_procedural::<T>(seed, spec)?;
    let canon = canonicalize(&obj)?;
    voxelize(&canon, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cabinet_spec() -> ProceduralSpec {
        ProceduralSpec {
            category: Category::Cabinet,
            n_drawers: 2,
            n_doors: 0,
            handle_per_part: false,
            size_jitter: 0.1,
        }
    }

    #[test]
    fn cabinet_drawers_are_prismatic_front_axis() {
        let obj: ArticulatedObject<f64> = gen_procedural(1, &cabinet_spec()).unwrap();
        assert!(obj.parts.len() >= 3);
        let drawers: Vec<_> = obj
            .parts
            .iter()
            .filter(|p| p.label == PartLabel::Drawer)
            .collect();
        assert_eq!(drawers.len(), 2);
        for d in drawers {
            assert_eq!(d.joint.joint_type, JointType::Prismatic);
            assert_eq!(d.joint.axis, [0.0, 1.0, 0.0]);
            assert_eq!(d.joint.range.0, 0.0);
            assert!(d.joint.range.1 > 0.0);
        }
    }

    #[test]
    fn deterministic_bit_identical() {
        let spec = sample_spec(7);
        let a: ArticulatedObject<f64> = gen_procedural(42, &spec).unwrap();
        let b: ArticulatedObject<f64> = gen_procedural(42, &spec).unwrap();
        assert_eq!(a, b);
        let c: ArticulatedObject<f64> = gen_procedural(43, &spec).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn thousand_objects_pass_invariants() {
        for seed in 0..1000u64 {
            let spec = sample_spec(seed);
            let obj: ArticulatedObject<f64> = gen_procedural(seed, &spec).unwrap();
            obj.validate()
                .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            // Doors hinge on vertical axes within the allowed range.
            for p in &obj.parts {
                if p.label == PartLabel::Door {
                    assert_eq!(p.joint.joint_type, JointType::Revolute);
                    assert_eq!(p.joint.axis[0], 0.0);
                    assert_eq!(p.joint.axis[1], 0.0);
                    assert_eq!(p.joint.axis[2].abs(), 1.0);
                    assert!(p.joint.range.0 == 0.0);
                    assert!(
                        p.joint.range.1
                            <= std::f64::consts::FRAC_PI_2 * (1.0 + spec.size_jitter)
                    );
                }
            }
        }
    }

    #[test]
    fn handles_inherit_parent_joint_verbatim() {
        let spec = ProceduralSpec {
            category: Category::Cabinet,
            n_drawers: 1,
            n_doors: 1,
            handle_per_part: true,
            size_jitter: 0.05,
        };
        let obj: ArticulatedObject<f64> = gen_procedural(5, &spec).unwrap();
        let handles: Vec<_> = obj
            .parts
            .iter()
            .filter(|p| p.label == PartLabel::Handle)
            .collect();
        assert_eq!(handles.len(), 2);
        // Each handle's joint equals the joint of the part created just
        // before it.
        for h in handles {
            let parent = &obj.parts[(h.id - 1) as usize];
            assert!(parent.label == PartLabel::Drawer || parent.label == PartLabel::Door);
            assert_eq!(h.joint, parent.joint);
        }
    }

    #[test]
    fn grids_voxelize_with_all_parts_present() {
        for seed in [3u64, 11, 19, 27] {
            let spec = sample_spec(seed);
            let grid = gen_grid::<f64>(seed, &spec, 32).unwrap();
            let obj: ArticulatedObject<f64> = gen_procedural(seed, &spec).unwrap();
            let part_ids: std::collections::BTreeSet<i32> =
                grid.records().iter().map(|r| r.part_id).collect();
            assert_eq!(
                part_ids.len(),
                obj.parts.len(),
                "seed {seed}: every part should own at least one voxel"
            );
            assert!(grid.has_part_ids());
        }
    }

    #[test]
    fn contact_voxels_are_rare() {
        // Voxels reachable by more than one part stay under 2% of the
        // active set at working resolution.
        let spec = ProceduralSpec {
            category: Category::Cabinet,
            n_drawers: 2,
            n_doors: 2,
            handle_per_part: true,
            size_jitter: 0.0,
        };
        let obj: ArticulatedObject<f64> = gen_procedural(9, &spec).unwrap();
        let canon = canonicalize(&obj).unwrap();
        let grid = voxelize(&canon, 32).unwrap();
        let n = grid.resolution();
        let hv = 1.0 / n as f64;
        let mut contacts = 0usize;
        for r in grid.records() {
            let (x, y, z) = r.index;
            let vmin = [
                -0.5 + x as f64 * hv,
                -0.5 + y as f64 * hv,
                -0.5 + z as f64 * hv,
            ];
            let vmax = [vmin[0] + hv, vmin[1] + hv, vmin[2] + hv];
            let mut hits = 0;
            for p in &canon.parts {
                let touched = p.geometry.boxes.iter().any(|(c, s)| {
                    let bmin = [c[0] - s[0] / 2.0, c[1] - s[1] / 2.0, c[2] - s[2] / 2.0];
                    let bmax = [c[0] + s[0] / 2.0, c[1] + s[1] / 2.0, c[2] + s[2] / 2.0];
                    (0..3).all(|k| vmin[k] <= bmax[k] && bmin[k] <= vmax[k])
                });
                if touched {
                    hits += 1;
                }
            }
            if hits > 1 {
                contacts += 1;
            }
        }
        let frac = contacts as f64 / grid.active_count() as f64;
        assert!(frac < 0.02, "contact fraction {frac}");
    }
}
