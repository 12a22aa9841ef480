//! Articulated-object descriptions: parsing, canonicalization, voxelization
//! into an ArticulatedVoxelGrid, and a procedural generator with exact
//! ground-truth articulation.

mod procedural;
mod voxelize;

pub use procedural::{gen_grid, gen_procedural, sample_spec, Category, ProceduralSpec};
pub use voxelize::voxelize;

use crate::artgrid::{ArtGridError, JointSpec, JointType, PartLabel};
use crate::geom::{Aabb, Vec3};
use crate::real::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown part label {0:?}")]
    UnknownLabel(String),
    #[error("part {part}: bad joint: {msg}")]
    BadJoint { part: i32, msg: String },
    #[error("part {part}: bad geometry: {msg}")]
    BadGeometry { part: i32, msg: String },
    #[error("part ids must be unique and contiguous from 0")]
    BadPartIds,
    #[error("expected exactly one fixed base part, found {0}")]
    BaseCount(usize),
    #[error("degenerate extent: rest-state bounding box has a zero edge")]
    DegenerateExtent,
    #[error("no voxel intersects the object")]
    EmptyResult,
    #[error("bad procedural spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Grid(#[from] ArtGridError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geometry of one part: axis-aligned boxes (center, size) and/or raw
/// triangles, all in the object's rest pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGeometry<T> {
    pub boxes: Vec<(Vec3<T>, Vec3<T>)>,
    pub triangles: Vec<[Vec3<T>; 3]>,
}

impl<T: Real> PartGeometry<T> {
    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty() && self.triangles.is_empty()
    }

    /// Sum of box volumes; triangles are measure-zero.
    pub fn volume(&self) -> f64 {
        self.boxes
            .iter()
            .map(|(_, s)| s.iter().map(|v| v.to_f64_lossy()).product::<f64>())
            .sum()
    }

    fn include_in(&self, aabb: &mut Aabb<T>) {
        let half = T::of(0.5);
        for (c, s) in &self.boxes {
            for k in 0..3 {
                let mut lo = *c;
                let mut hi = *c;
                lo[k] = c[k] - s[k] * half;
                hi[k] = c[k] + s[k] * half;
                aabb.include(lo);
                aabb.include(hi);
            }
        }
        for tri in &self.triangles {
            for v in tri {
                aabb.include(*v);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPart<T> {
    pub id: i32,
    pub label: PartLabel,
    pub geometry: PartGeometry<T>,
    pub joint: JointSpec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedObject<T> {
    pub name: String,
    pub parts: Vec<ObjectPart<T>>,
}

impl<T: Real> ArticulatedObject<T> {
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = vec![false; self.parts.len()];
        for p in &self.parts {
            let idx = p.id as usize;
            if p.id < 0 || idx >= self.parts.len() || seen[idx] {
                return Err(IngestError::BadPartIds);
            }
            seen[idx] = true;
            if p.geometry.is_empty() {
                return Err(IngestError::BadGeometry {
                    part: p.id,
                    msg: "no boxes or triangles".into(),
                });
            }
            let finite = p
                .geometry
                .boxes
                .iter()
                .all(|(c, s)| c.iter().chain(s.iter()).all(|v| v.is_finite()))
                && p.geometry
                    .triangles
                    .iter()
                    .all(|t| t.iter().flatten().all(|v| v.is_finite()));
            if !finite {
                return Err(IngestError::BadGeometry {
                    part: p.id,
                    msg: "non-finite coordinates".into(),
                });
            }
            if p.geometry.boxes.iter().any(|(_, s)| s.iter().any(|v| *v <= T::zero())) {
                return Err(IngestError::BadGeometry {
                    part: p.id,
                    msg: "box size must be positive".into(),
                });
            }
            p.joint.validate().map_err(|e| IngestError::BadJoint {
                part: p.id,
                msg: e.to_string(),
            })?;
        }
        let bases: Vec<_> = self
            .parts
            .iter()
            .filter(|p| p.label == PartLabel::Base)
            .collect();
        if bases.len() != 1 || bases[0].joint.joint_type != JointType::Fixed {
            return Err(IngestError::BaseCount(bases.len()));
        }
        Ok(())
    }

    /// Rest-state bounding box over all geometry.
    pub fn rest_aabb(&self) -> Aabb<T> {
        let mut aabb = Aabb::empty();
        for p in &self.parts {
            p.geometry.include_in(&mut aabb);
        }
        aabb
    }
}

/// Center the rest-state bounding box at the origin and scale uniformly so
/// its longest edge is 1. Joint origins, prismatic ranges, and screw
/// pitches scale by the same factor; rotational ranges are untouched.
pub fn canonicalize<T: Real>(obj: &ArticulatedObject<T>) -> Result<ArticulatedObject<T>, IngestError> {
    let aabb = obj.rest_aabb();
    if aabb.is_empty() {
        return Err(IngestError::DegenerateExtent);
    }
    let longest = aabb.longest_edge();
    if longest <= T::zero() {
        return Err(IngestError::DegenerateExtent);
    }
    let s = T::one() / longest;
    let ctr = aabb.center();
    let map = |p: Vec3<T>| -> Vec3<T> {
        [
            (p[0] - ctr[0]) * s,
            (p[1] - ctr[1]) * s,
            (p[2] - ctr[2]) * s,
        ]
    };
    let parts = obj
        .parts
        .iter()
        .map(|p| {
            let boxes = p
                .geometry
                .boxes
                .iter()
                .map(|(c, sz)| (map(*c), [sz[0] * s, sz[1] * s, sz[2] * s]))
                .collect();
            let triangles = p
                .geometry
                .triangles
                .iter()
                .map(|t| [map(t[0]), map(t[1]), map(t[2])])
                .collect();
            let mut joint = p.joint;
            joint.origin = map(joint.origin);
            match joint.joint_type {
                JointType::Prismatic => {
                    joint.range = (joint.range.0 * s, joint.range.1 * s);
                }
                JointType::Screw => {
                    joint.pitch = joint.pitch * s;
                }
                _ => {}
            }
            ObjectPart {
                id: p.id,
                label: p.label,
                geometry: PartGeometry { boxes, triangles },
                joint,
            }
        })
        .collect();
    Ok(ArticulatedObject {
        name: obj.name.clone(),
        parts,
    })
}

#[derive(Serialize, Deserialize)]
struct JsonJoint {
    #[serde(rename = "type")]
    joint_type: String,
    axis: [f64; 3],
    origin: [f64; 3],
    range: [f64; 2],
    #[serde(default)]
    pitch: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonPart {
    id: i32,
    label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    boxes: Vec<[f64; 6]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    triangles: Vec<[f64; 9]>,
    joint: JsonJoint,
}

#[derive(Serialize, Deserialize)]
struct JsonObject {
    name: String,
    parts: Vec<JsonPart>,
}

/// Parse the JSON object description. Input files are validated strictly;
/// in particular non-unit joint axes are rejected, never normalized.
pub fn parse_object<T: Real>(text: &str) -> Result<ArticulatedObject<T>, IngestError> {
    let raw: JsonObject = serde_json::from_str(text).map_err(|e| IngestError::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let mut parts = Vec::with_capacity(raw.parts.len());
    for rp in &raw.parts {
        let label = PartLabel::parse(&rp.label)
            .ok_or_else(|| IngestError::UnknownLabel(rp.label.clone()))?;
        let joint_type = JointType::parse(&rp.joint.joint_type).ok_or_else(|| {
            IngestError::BadJoint {
                part: rp.id,
                msg: format!("unknown joint type {:?}", rp.joint.joint_type),
            }
        })?;
        let j = &rp.joint;
        let joint = JointSpec {
            joint_type,
            axis: [T::of(j.axis[0]), T::of(j.axis[1]), T::of(j.axis[2])],
            origin: [T::of(j.origin[0]), T::of(j.origin[1]), T::of(j.origin[2])],
            range: (T::of(j.range[0]), T::of(j.range[1])),
            pitch: T::of(j.pitch),
        };
        let boxes = rp
            .boxes
            .iter()
            .map(|b| {
                (
                    [T::of(b[0]), T::of(b[1]), T::of(b[2])],
                    [T::of(b[3]), T::of(b[4]), T::of(b[5])],
                )
            })
            .collect();
        let triangles = rp
            .triangles
            .iter()
            .map(|t| {
                [
                    [T::of(t[0]), T::of(t[1]), T::of(t[2])],
                    [T::of(t[3]), T::of(t[4]), T::of(t[5])],
                    [T::of(t[6]), T::of(t[7]), T::of(t[8])],
                ]
            })
            .collect();
        parts.push(ObjectPart {
            id: rp.id,
            label,
            geometry: PartGeometry { boxes, triangles },
            joint,
        });
    }
    let obj = ArticulatedObject {
        name: raw.name,
        parts,
    };
    obj.validate()?;
    Ok(obj)
}

pub fn write_object<T: Real>(obj: &ArticulatedObject<T>) -> String {
    let raw = JsonObject {
        name: obj.name.clone(),
        parts: obj
            .parts
            .iter()
            .map(|p| JsonPart {
                id: p.id,
                label: p.label.name().to_string(),
                boxes: p
                    .geometry
                    .boxes
                    .iter()
                    .map(|(c, s)| {
                        [
                            c[0].to_f64_lossy(),
                            c[1].to_f64_lossy(),
                            c[2].to_f64_lossy(),
                            s[0].to_f64_lossy(),
                            s[1].to_f64_lossy(),
                            s[2].to_f64_lossy(),
                        ]
                    })
                    .collect(),
                triangles: p
                    .geometry
                    .triangles
                    .iter()
                    .map(|t| {
                        let f = |v: Vec3<T>| {
                            [
                                v[0].to_f64_lossy(),
                                v[1].to_f64_lossy(),
                                v[2].to_f64_lossy(),
                            ]
                        };
                        let (a, b, c) = (f(t[0]), f(t[1]), f(t[2]));
                        [a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2]]
                    })
                    .collect(),
                joint: JsonJoint {
                    joint_type: p.joint.joint_type.name().to_string(),
                    axis: [
                        p.joint.axis[0].to_f64_lossy(),
                        p.joint.axis[1].to_f64_lossy(),
                        p.joint.axis[2].to_f64_lossy(),
                    ],
                    origin: [
                        p.joint.origin[0].to_f64_lossy(),
                        p.joint.origin[1].to_f64_lossy(),
                        p.joint.origin[2].to_f64_lossy(),
                    ],
                    range: [p.joint.range.0.to_f64_lossy(), p.joint.range.1.to_f64_lossy()],
                    pitch: p.joint.pitch.to_f64_lossy(),
                },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("object serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "toy",
        "parts": [
            { "id": 0, "label": "base",
              "boxes": [[0, 0, 0, 1, 1, 1]],
              "joint": { "type": "fixed", "axis": [0,0,1], "origin": [0,0,0], "range": [0,0] } },
            { "id": 1, "label": "drawer",
              "boxes": [[0, 0.2, 0.3, 0.8, 0.5, 0.2]],
              "joint": { "type": "prismatic", "axis": [0,0,1], "origin": [0,0,0.3], "range": [0,0.3] } }
        ]
    }"#;

    #[test]
    fn minimal_doc_parses() {
        let obj: ArticulatedObject<f64> = parse_object(MINIMAL).unwrap();
        assert_eq!(obj.parts.len(), 2);
        assert_eq!(obj.parts[1].label, PartLabel::Drawer);
        assert_eq!(obj.parts[1].joint.joint_type, JointType::Prismatic);
    }

    #[test]
    fn non_unit_axis_rejected() {
        let doc = MINIMAL.replace("\"axis\": [0,0,1], \"origin\": [0,0,0.3]", "\"axis\": [0,0,2], \"origin\": [0,0,0.3]");
        match parse_object::<f64>(&doc) {
            Err(IngestError::BadJoint { part: 1, .. }) => {}
            other => panic!("expected BadJoint, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let doc = MINIMAL.replace("\"drawer\"", "\"lid\"");
        assert!(matches!(
            parse_object::<f64>(&doc),
            Err(IngestError::UnknownLabel(_))
        ));
    }

    #[test]
    fn malformed_json_reports_line() {
        let doc = "{\n \"name\": \"x\",\n \"parts\": [,]\n}";
        match parse_object::<f64>(doc) {
            Err(IngestError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn two_bases_rejected() {
        let doc = MINIMAL.replace("\"drawer\"", "\"base\"").replace(
            "\"type\": \"prismatic\"",
            "\"type\": \"fixed\"",
        );
        // Second base would also need range (0,0); patch it.
        let doc = doc.replace("\"range\": [0,0.3]", "\"range\": [0,0]");
        assert!(matches!(
            parse_object::<f64>(&doc),
            Err(IngestError::BaseCount(2))
        ));
    }

    #[test]
    fn canonicalize_scales_and_centers() {
        // Object spanning [0,2]^3: a base box of size 2 centered at (1,1,1).
        let obj = ArticulatedObject::<f64> {
            name: "span".into(),
            parts: vec![
                ObjectPart {
                    id: 0,
                    label: PartLabel::Base,
                    geometry: PartGeometry {
                        boxes: vec![([1.0; 3], [2.0; 3])],
                        triangles: vec![],
                    },
                    joint: JointSpec::fixed(),
                },
                ObjectPart {
                    id: 1,
                    label: PartLabel::Drawer,
                    geometry: PartGeometry {
                        boxes: vec![([1.0, 1.0, 1.5], [0.5, 0.5, 0.2])],
                        triangles: vec![],
                    },
                    joint: JointSpec {
                        joint_type: JointType::Prismatic,
                        axis: [0.0, 1.0, 0.0],
                        origin: [1.0, 1.0, 1.5],
                        range: (0.0, 0.6),
                        pitch: 0.0,
                    },
                },
            ],
        };
        let c = canonicalize(&obj).unwrap();
        let aabb = c.rest_aabb();
        assert!(crate::geom::dist3(aabb.center(), [0.0; 3]) < 1e-12);
        assert!((aabb.longest_edge() - 1.0).abs() < 1e-12);
        // Uniform scale by 1/2; prismatic range follows.
        assert!((c.parts[1].joint.range.1 - 0.3).abs() < 1e-12);
        assert_eq!(c.parts[1].joint.origin, [0.0, 0.0, 0.25]);
        // Idempotent.
        let cc = canonicalize(&c).unwrap();
        for (a, b) in c.parts.iter().zip(&cc.parts) {
            assert!(crate::geom::dist3(a.joint.origin, b.joint.origin) < 1e-9);
            for ((ca, sa), (cb, sb)) in a.geometry.boxes.iter().zip(&b.geometry.boxes) {
                assert!(crate::geom::dist3(*ca, *cb) < 1e-9);
                assert!(crate::geom::dist3(*sa, *sb) < 1e-9);
            }
        }
    }

    #[test]
    fn revolute_range_scale_free() {
        let mut obj: ArticulatedObject<f64> = parse_object(MINIMAL).unwrap();
        obj.parts[1].joint = JointSpec {
            joint_type: JointType::Revolute,
            axis: [0.0, 0.0, 1.0],
            origin: [0.4, 0.0, 0.0],
            range: (0.0, std::f64::consts::FRAC_PI_2),
            pitch: 0.0,
        };
        let c = canonicalize(&obj).unwrap();
        assert_eq!(c.parts[1].joint.range.1, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn degenerate_extent_rejected() {
        let obj = ArticulatedObject::<f64> {
            name: "flat".into(),
            parts: vec![ObjectPart {
                id: 0,
                label: PartLabel::Base,
                geometry: PartGeometry {
                    boxes: vec![],
                    triangles: vec![[[0.0; 3], [0.0; 3], [0.0; 3]]],
                },
                joint: JointSpec::fixed(),
            }],
        };
        assert!(matches!(
            canonicalize(&obj),
            Err(IngestError::DegenerateExtent)
        ));
    }
}
