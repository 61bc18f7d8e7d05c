//! Synthetic tabletop episodes and a matching provider transcript.
//!
//! Two scripted pick-and-place runs over one static scene, rendered as flat
//! gray images with annotation masks, enough to drive every sample family
//! without external models.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::episode::{load_episode, Episode, EpisodeError, Manifest, StepLabel};
use crate::geometry::project_point;
use crate::raster::{DepthMap, Mask, RasterError};
use crate::samplegen::provider::{Request, Response, Transcript};
use crate::samplegen::FINGERTIP_LABEL;
use crate::trajectory::{detect_keyframes, KeyframeParams};
use crate::types::{Box2D, Box3D, CameraCalib, Frame, GripperSample, GripperTrace, ObjectAnnotation, Point3D};

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 480;
pub const CAMERA: &str = "head";
pub const TRANSCRIPT_FILE: &str = "transcript.json";

const FINGER_GAP_M: f64 = 0.04;
const BACKGROUND_DEPTH: f32 = 2.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("image encoding failed: {0}")]
    Image(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn calib() -> CameraCalib {
    CameraCalib::new(500.0, 500.0, 320.0, 240.0)
}

#[derive(Clone, Debug)]
struct Object {
    key: &'static str,
    label: &'static str,
    /// Camera-frame center.
    center: [f64; 3],
    /// Length (x), height (y), width (z).
    size: [f64; 3],
    round: bool,
}

impl Object {
    fn box3d(&self) -> Box3D {
        let [cx, cy, cz] = self.center;
        let [l, h, w] = self.size;
        Box3D::from_array([cx, cy, cz, l, w, h, 0.0, 0.0, 0.0])
    }

    fn box2d(&self) -> Box2D {
        let c = calib();
        let (mut x1, mut y1, mut x2, mut y2) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for sx in [-0.5, 0.5] {
            for sy in [-0.5, 0.5] {
                for sz in [-0.5, 0.5] {
                    let p = Point3D::new(
                        self.center[0] + sx * self.size[0],
                        self.center[1] + sy * self.size[1],
                        self.center[2] + sz * self.size[2],
                    );
                    let q = project_point(&p, &c).expect("scene lies in front of the camera");
                    x1 = x1.min(q.x);
                    y1 = y1.min(q.y);
                    x2 = x2.max(q.x);
                    y2 = y2.max(q.y);
                }
            }
        }
        Box2D::new(
            x1.floor().max(0.0),
            y1.floor().max(0.0),
            x2.ceil().min(WIDTH as f64),
            y2.ceil().min(HEIGHT as f64),
        )
        .expect("projected box is non-degenerate")
    }

    /// Pixels covered by the object's silhouette.
    fn pixels(&self) -> Vec<(u32, u32)> {
        let b = self.box2d();
        let c = b.centroid();
        let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
        let mut out = Vec::new();
        for y in b.y1 as u32..(b.y2 as u32).min(HEIGHT) {
            for x in b.x1 as u32..(b.x2 as u32).min(WIDTH) {
                let dx = (x as f64 + 0.5 - c.x) / rx;
                let dy = (y as f64 + 0.5 - c.y) / ry;
                if !self.round || dx * dx + dy * dy <= 1.0 {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn mask(&self) -> Mask {
        let mut m = Mask::empty(WIDTH, HEIGHT);
        for (x, y) in self.pixels() {
            m.set(x, y, true);
        }
        m
    }
}

fn scene_objects() -> Vec<Object> {
    vec![
        Object { key: "apple", label: "apple", center: [-0.25, 0.10, 1.2], size: [0.08, 0.08, 0.08], round: true },
        Object { key: "plate", label: "plate", center: [0.20, 0.15, 1.3], size: [0.22, 0.02, 0.22], round: true },
        Object { key: "cup1", label: "cup", center: [-0.45, 0.05, 1.5], size: [0.08, 0.10, 0.08], round: false },
        Object { key: "cup2", label: "cup", center: [0.45, 0.05, 1.0], size: [0.08, 0.10, 0.08], round: false },
        Object { key: "bowl", label: "bowl", center: [0.0, 0.12, 1.7], size: [0.16, 0.08, 0.16], round: true },
    ]
}

/// One scripted move: go to `to` with aperture `aperture` over `frames`.
struct Leg {
    to: [f64; 3],
    aperture: f64,
    frames: usize,
}

fn leg(to: [f64; 3], aperture: f64, frames: usize) -> Leg {
    Leg { to, aperture, frames }
}

/// A pick of `object` ends at `grasp_leg`; the matching place releases it at
/// `release_leg`.
struct Carry {
    object: &'static str,
    grasp_leg: usize,
    release_leg: usize,
}

struct Script {
    id: &'static str,
    task: &'static str,
    start: [f64; 3],
    legs: Vec<Leg>,
    carries: Vec<Carry>,
    steps: Vec<StepLabel>,
    /// Record 3D fingertips (else only the center).
    tips: bool,
}

fn step(skill: &str, object: &str, target: Option<&str>) -> StepLabel {
    StepLabel {
        skill: skill.into(),
        object: Some(object.into()),
        target: target.map(Into::into),
    }
}

fn scripts() -> Vec<Script> {
    vec![
        Script {
            id: "pick_place_apple",
            task: "put the apple on the plate",
            start: [0.0, -0.20, 1.0],
            legs: vec![
                leg([-0.25, -0.05, 1.2], 1.0, 12),
                leg([-0.25, 0.09, 1.2], 1.0, 5),
                leg([-0.25, 0.09, 1.2], 0.0, 4),
                leg([-0.25, 0.09, 1.2], 0.0, 3),
                leg([-0.25, -0.10, 1.2], 0.0, 6),
                leg([0.20, -0.08, 1.3], 0.0, 12),
                leg([0.20, 0.09, 1.3], 0.0, 5),
                leg([0.20, 0.09, 1.3], 1.0, 4),
                leg([0.20, 0.09, 1.3], 1.0, 3),
                leg([0.20, -0.02, 1.3], 1.0, 6),
            ],
            carries: vec![Carry { object: "apple", grasp_leg: 2, release_leg: 7 }],
            steps: vec![step("pick", "apple", None), step("place", "apple", Some("plate"))],
            tips: true,
        },
        Script {
            id: "tidy_cup_and_apple",
            task: "put the cup on the plate and the apple in the bowl",
            start: [0.10, -0.20, 1.0],
            legs: vec![
                leg([0.45, -0.05, 1.0], 1.0, 10),
                leg([0.45, 0.04, 1.0], 1.0, 4),
                leg([0.45, 0.04, 1.0], 0.0, 4),
                leg([0.45, 0.04, 1.0], 0.0, 3),
                leg([0.45, -0.10, 1.0], 0.0, 6),
                leg([0.20, -0.05, 1.3], 0.0, 8),
                leg([0.20, 0.08, 1.3], 0.0, 4),
                leg([0.20, 0.08, 1.3], 1.0, 4),
                leg([0.20, 0.08, 1.3], 1.0, 3),
                leg([0.20, -0.05, 1.3], 1.0, 5),
                leg([-0.25, -0.05, 1.2], 1.0, 10),
                leg([-0.25, 0.09, 1.2], 1.0, 5),
                leg([-0.25, 0.09, 1.2], 0.0, 4),
                leg([-0.25, 0.09, 1.2], 0.0, 3),
                leg([-0.25, -0.10, 1.2], 0.0, 6),
                leg([0.0, -0.05, 1.7], 0.0, 8),
                leg([0.0, 0.06, 1.7], 0.0, 4),
                leg([0.0, 0.06, 1.7], 1.0, 4),
                leg([0.0, 0.06, 1.7], 1.0, 3),
                leg([0.0, -0.02, 1.7], 1.0, 5),
            ],
            carries: vec![
                Carry { object: "cup2", grasp_leg: 2, release_leg: 7 },
                Carry { object: "apple", grasp_leg: 12, release_leg: 17 },
            ],
            steps: vec![
                step("pick", "cup", None),
                step("place", "cup", Some("plate")),
                step("pick", "apple", None),
                step("place", "apple", Some("bowl")),
            ],
            tips: false,
        },
    ]
}

struct Pose {
    center: [f64; 3],
    aperture: f64,
}

impl Pose {
    fn tips(&self) -> (Point3D, Point3D) {
        let half = 0.5 * (0.01 + FINGER_GAP_M * self.aperture);
        let [x, y, z] = self.center;
        (Point3D::new(x - half, y, z), Point3D::new(x + half, y, z))
    }
}

/// Per-frame gripper poses and object centers.
struct Rollout {
    poses: Vec<Pose>,
    objects: Vec<Vec<Object>>,
}

fn roll_out(script: &Script) -> Rollout {
    let mut objects = scene_objects();
    let mut pos = script.start;
    let mut ap = 1.0;
    let mut poses = vec![Pose { center: pos, aperture: ap }];
    let mut states = vec![objects.clone()];
    let mut held: Option<(usize, [f64; 3])> = None;
    for (li, l) in script.legs.iter().enumerate() {
        let (from, from_ap) = (pos, ap);
        for k in 1..=l.frames {
            let t = k as f64 / l.frames as f64;
            pos = [
                from[0] + (l.to[0] - from[0]) * t,
                from[1] + (l.to[1] - from[1]) * t,
                from[2] + (l.to[2] - from[2]) * t,
            ];
            ap = from_ap + (l.aperture - from_ap) * t;
            if let Some((i, off)) = held {
                objects[i].center = [pos[0] + off[0], pos[1] + off[1], pos[2] + off[2]];
            }
            poses.push(Pose { center: pos, aperture: ap });
            states.push(objects.clone());
        }
        for c in &script.carries {
            if c.grasp_leg == li {
                let i = objects.iter().position(|o| o.key == c.object).expect("carried object exists");
                let oc = objects[i].center;
                held = Some((i, [oc[0] - pos[0], oc[1] - pos[1], oc[2] - pos[2]]));
            }
            if c.release_leg == li {
                held = None;
            }
        }
    }
    Rollout { poses, objects: states }
}

fn render(objects: &[Object]) -> image::GrayImage {
    let mut img = image::GrayImage::from_pixel(WIDTH, HEIGHT, image::Luma([90]));
    let mut sorted: Vec<&Object> = objects.iter().collect();
    sorted.sort_by(|a, b| b.center[2].total_cmp(&a.center[2]));
    for (i, o) in sorted.iter().enumerate() {
        let shade = 140 + 20 * i as u8;
        for (x, y) in o.pixels() {
            img.put_pixel(x, y, image::Luma([shade]));
        }
    }
    img
}

fn depth_of(objects: &[Object]) -> DepthMap {
    let boxes: Vec<(Box2D, f32)> = objects
        .iter()
        .map(|o| (o.box2d(), (o.center[2] - o.size[2] / 2.0) as f32))
        .collect();
    DepthMap::from_fn(WIDTH, HEIGHT, |x, y| {
        let p = crate::types::Point2D::new(x as f64 + 0.5, y as f64 + 0.5);
        boxes
            .iter()
            .filter(|(b, _)| b.contains(&p))
            .map(|(_, d)| *d)
            .fold(BACKGROUND_DEPTH, f32::min)
    })
}

fn write_episode(root: &Path, script: &Script, transcript: &mut Transcript) -> Result<Episode, SynthError> {
    let dir = root.join(script.id);
    fs::create_dir_all(dir.join("rgb")).map_err(io_err(&dir))?;
    fs::create_dir_all(dir.join("masks")).map_err(io_err(&dir))?;
    let ro = roll_out(script);
    let last = ro.poses.len() - 1;

    let mut frames = Vec::new();
    let mut samples = Vec::new();
    for (i, (pose, objs)) in ro.poses.iter().zip(&ro.objects).enumerate() {
        let image = format!("rgb/{i:04}.png");
        let path = dir.join(&image);
        render(objs)
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| SynthError::Image(e.to_string()))?;
        let depth = if i == 0 {
            let rel = "depth/0000.f32".to_string();
            depth_of(objs).save(&dir.join(&rel))?;
            Some(rel)
        } else {
            None
        };
        frames.push(Frame {
            index: i as i64,
            image,
            width: WIDTH,
            height: HEIGHT,
            depth,
            camera: None,
        });
        let (l, r) = pose.tips();
        let c = pose.center;
        samples.push(GripperSample {
            frame_index: i as i64,
            aperture: pose.aperture.clamp(0.0, 1.0),
            tip_left: script.tips.then_some(l),
            tip_right: script.tips.then_some(r),
            center: (!script.tips).then(|| Point3D::new(c[0], c[1], c[2])),
        });
    }

    let mut annotations = Vec::new();
    for f in [0, last] {
        for o in &ro.objects[f] {
            let id = format!("f{f}/{}", o.key);
            let mask = format!("masks/{f:04}_{}.png", o.key);
            o.mask().save_png(&dir.join(&mask))?;
            annotations.push(ObjectAnnotation {
                id,
                label: o.label.into(),
                frame_index: f as i64,
                box2d: Some(o.box2d()),
                box3d: Some(o.box3d()),
                mask: Some(mask),
            });
        }
    }

    let mut cameras = BTreeMap::new();
    cameras.insert(CAMERA.to_string(), calib());
    let manifest = Manifest {
        id: script.id.into(),
        task_text: script.task.into(),
        primary_camera: Some(CAMERA.into()),
        cameras,
        frames,
        gripper: GripperTrace { samples },
        annotations,
        steps: script.steps.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let mpath = dir.join(crate::episode::MANIFEST_FILE);
    fs::write(&mpath, json + "\n").map_err(io_err(&mpath))?;
    let episode = load_episode(&dir)?;

    record_transcript(&episode, &ro, script, transcript)?;
    Ok(episode)
}

/// Provider answers for every detection and segmentation the generators
/// ask about this episode.
fn record_transcript(episode: &Episode, ro: &Rollout, script: &Script, t: &mut Transcript) -> Result<(), SynthError> {
    for f in episode.annotated_frames() {
        let frame = episode.frame(f).expect("annotated frame exists");
        let image = episode.image_key(frame);
        let mut by_label: BTreeMap<&str, Vec<&ObjectAnnotation>> = BTreeMap::new();
        for a in episode.annotations_on(f) {
            by_label.entry(a.label.as_str()).or_default().push(a);
        }
        for (label, anns) in by_label {
            let mut boxes: Vec<Box2D> = anns.iter().filter_map(|a| a.box2d).collect();
            boxes.sort_by(|a, b| a.x1.total_cmp(&b.x1));
            t.insert(
                &Request::Detect {
                    image: image.clone(),
                    label: label.into(),
                },
                Response::Boxes { boxes },
            );
            for a in anns {
                let (Some(b), Some(m)) = (a.box2d, &a.mask) else { continue };
                t.insert(
                    &Request::Segment {
                        image: image.clone(),
                        bbox: b,
                        width: frame.width,
                        height: frame.height,
                    },
                    Response::MaskFile {
                        mask_path: format!("{}/{m}", episode.id),
                    },
                );
            }
        }
    }
    if !script.tips {
        let kf = detect_keyframes(&episode.gripper, &KeyframeParams::default())
            .expect("scripted trace has clean transitions");
        for c in &kf.closings {
            let frame = episode.frame(c.mid).expect("keyframe frame exists");
            let (l, r) = ro.poses[c.mid as usize].tips();
            let boxes = [l, r]
                .iter()
                .map(|p| {
                    let q = project_point(p, &calib()).expect("tips in front of the camera");
                    Box2D::new(q.x - 4.0, q.y - 4.0, q.x + 4.0, q.y + 4.0).expect("fixed-size box")
                })
                .collect();
            t.insert(
                &Request::Detect {
                    image: episode.image_key(frame),
                    label: FINGERTIP_LABEL.into(),
                },
                Response::Boxes { boxes },
            );
        }
    }
    Ok(())
}

/// Writes the fixture episodes under `root` plus `root/transcript.json`.
/// Returns the episodes as loaded back from disk.
pub fn write_fixture_set(root: &Path) -> Result<Vec<Episode>, SynthError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut transcript = Transcript {
        version: 1,
        ..Default::default()
    };
    let mut out = Vec::new();
    for s in scripts() {
        out.push(write_episode(root, &s, &mut transcript)?);
    }
    let tp = transcript_path(root);
    transcript.save(&tp).map_err(io_err(&tp))?;
    Ok(out)
}

pub fn transcript_path(root: &Path) -> PathBuf {
    root.join(TRANSCRIPT_FILE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{segment_episode, skills, SegmentParams};

    #[test]
    fn fixtures_load_and_segment() {
        let dir = tempfile::tempdir().unwrap();
        let eps = write_fixture_set(dir.path()).unwrap();
        assert_eq!(eps.len(), 2);
        for ep in &eps {
            let kf = detect_keyframes(&ep.gripper, &KeyframeParams::default()).unwrap();
            assert_eq!(kf.closings.len(), ep.steps.len() / 2);
            assert_eq!(kf.openings.len(), ep.steps.len() / 2);
            let sk: Vec<_> = ep.steps.iter().map(|s| skills::lookup(&s.skill).unwrap().clone()).collect();
            let segs = segment_episode(ep, &kf, &sk, &SegmentParams::default()).unwrap();
            assert_eq!(segs.len(), ep.steps.len());
            assert_eq!(segs.last().unwrap().end_frame, ep.last_frame().index);
        }
        assert!(transcript_path(dir.path()).is_file());
    }

    #[test]
    fn carried_object_ends_on_its_target() {
        let ro = roll_out(&scripts()[0]);
        let last = ro.objects.last().unwrap();
        let apple = last.iter().find(|o| o.key == "apple").unwrap();
        let plate = last.iter().find(|o| o.key == "plate").unwrap();
        for axis in [0, 2] {
            assert!((apple.center[axis] - plate.center[axis]).abs() < plate.size[axis] / 2.0);
        }
        let apple_bottom = apple.center[1] + apple.size[1] / 2.0;
        let plate_top = plate.center[1] - plate.size[1] / 2.0;
        assert!((apple_bottom - plate_top).abs() < 1e-9);
    }
}
