//! Deterministic synthetic dynamic scenes: flow, ground-truth egomotion,
//! inverse depth, object masks and object velocities.
//!
//! Scenes are a ground plane seen from a forward-moving camera plus a few
//! axis-aligned constant-depth boxes; moving objects are nearby boxes that
//! add a constant independent flow on top of the rigid field. Egomotion
//! sampling is biased toward forward translation and yaw, mirroring
//! driving statistics. Every random draw comes from a counter-based
//! stream keyed by `(seed, sample index, purpose)`, so samples can be
//! generated in any order or in parallel with identical results.

use crate::dataio::{self, DataIoError};
use crate::geometry::{
    integrate_trajectory, motion_field, CameraModel, EgoMotion, FlowField, InverseDepthMap,
    MaskGrid, Pose, Trajectory,
};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error("dataset manifest line {line}: {problem}")]
    Manifest { line: usize, problem: String },
    #[error(transparent)]
    DataIo(#[from] DataIoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Generation parameters. Defaults produce desk-scale 16x48 driving-like
/// scenes with noiseless flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Scene depth bounds in scene units; everything is clamped inside.
    pub depth_range: (f64, f64),
    /// Static constant-depth boxes added to the ground-plane depth.
    pub depth_boxes: (usize, usize),
    /// Translation magnitude cap, units/frame; sampling favors +z.
    pub max_translation: f64,
    /// Rotation magnitude cap, radians/frame; sampling favors yaw.
    pub max_rotation: f64,
    /// Independently moving objects per frame.
    pub object_count: (usize, usize),
    /// Object flow magnitude cap, same units as the flow field.
    pub max_object_flow: f64,
    /// Per-component Gaussian noise on the observed flow.
    pub noise_sigma: f64,
    /// Fraction of pixels replaced by uniform random flow.
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 48,
            height: 16,
            depth_range: (4.0, 50.0),
            depth_boxes: (0, 5),
            max_translation: 1.5,
            max_rotation: 0.05,
            object_count: (0, 3),
            max_object_flow: 1.0,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn camera(&self) -> CameraModel {
        CameraModel::centered(self.width, self.height)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width < 8 || self.height < 8 {
            return Err(SynthError::Config(format!(
                "grid must be at least 8x8, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.depth_range.0 > 0.0 && self.depth_range.1 > self.depth_range.0) {
            return Err(SynthError::Config(format!(
                "depth range {:?} is empty or nonpositive",
                self.depth_range
            )));
        }
        if self.depth_boxes.1 < self.depth_boxes.0 || self.object_count.1 < self.object_count.0 {
            return Err(SynthError::Config("count range is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::Config(format!(
                "outlier fraction {} outside [0, 1]",
                self.outlier_fraction
            )));
        }
        if self.max_translation < 0.0
            || self.max_rotation < 0.0
            || self.max_object_flow < 0.0
            || self.noise_sigma < 0.0
        {
            return Err(SynthError::Config("negative magnitude bound".into()));
        }
        Ok(())
    }
}

/// One synthetic frame pair with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    /// Observed flow: rigid field + object flow + noise.
    pub flow: FlowField,
    pub gt_ego: EgoMotion,
    pub rho: InverseDepthMap,
    pub obj_mask: MaskGrid,
    /// Independent object velocity; zero off the mask.
    pub obj_flow: FlowField,
}

// Stream purposes.
const STREAM_DEPTH: u64 = 1;
const STREAM_EGO: u64 = 2;
const STREAM_OBJECT: u64 = 3;
const STREAM_NOISE: u64 = 4;

/// Independent generator for `(seed, index, purpose)`; the triple is the
/// ChaCha key, so streams never overlap.
fn stream_rng(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&purpose.to_le_bytes());
    key[24..32].copy_from_slice(&0x65676f666c6f7731u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

struct BoxRegion {
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
}

fn sample_box(rng: &mut impl Rng, width: usize, height: usize) -> BoxRegion {
    // Each box covers at most a quarter of each axis, keeping total object
    // area safely under a quarter of the frame.
    let rows = rng.gen_range(1..=(height / 4).max(1));
    let cols = rng.gen_range(1..=(width / 4).max(1));
    BoxRegion {
        row0: rng.gen_range(0..=height - rows),
        col0: rng.gen_range(0..=width - cols),
        rows,
        cols,
    }
}

/// Ground-plane depth with static boxes; depths are clamped to the
/// configured range.
fn sample_depth(config: &SceneConfig, cam: &CameraModel, rng: &mut impl Rng) -> InverseDepthMap {
    let (z_min, z_max) = config.depth_range;
    let camera_height = 1.5;
    let mut depth = Vec::with_capacity(config.width * config.height);
    for row in 0..config.height {
        for col in 0..config.width {
            let p = cam.normalized(row, col);
            let z = if p.y > 1e-3 {
                (camera_height / p.y).clamp(z_min, z_max)
            } else {
                z_max
            };
            depth.push(z);
        }
    }
    let n_boxes = rng.gen_range(config.depth_boxes.0..=config.depth_boxes.1);
    for _ in 0..n_boxes {
        let region = sample_box(rng, config.width, config.height);
        let z = rng.gen_range(z_min..z_min + 0.5 * (z_max - z_min));
        for row in region.row0..region.row0 + region.rows {
            for col in region.col0..region.col0 + region.cols {
                depth[row * config.width + col] = z;
            }
        }
    }
    InverseDepthMap::from_vec(
        config.width,
        config.height,
        depth.into_iter().map(|z| 1.0 / z).collect(),
    )
}

/// Forward-biased translation, yaw-biased rotation. The forward component
/// stays away from zero: a driving observer is essentially never
/// stationary, and near-zero translations have no meaningful direction.
fn sample_egomotion(config: &SceneConfig, rng: &mut impl Rng) -> EgoMotion {
    let mt = config.max_translation;
    let mut t = Vector3::new(
        rng.gen_range(-0.17..0.17) * mt,
        rng.gen_range(-0.08..0.08) * mt,
        rng.gen_range(0.12..0.93) * mt,
    );
    if t.norm() > mt && mt > 0.0 {
        t *= mt / t.norm();
    }
    let mr = config.max_rotation;
    let mut w = Vector3::new(
        rng.gen_range(-0.2..0.2) * mr,
        rng.gen_range(-1.0..1.0) * mr,
        rng.gen_range(-0.2..0.2) * mr,
    );
    if w.norm() > mr && mr > 0.0 {
        w *= mr / w.norm();
    }
    EgoMotion::new(t, w)
}

struct ObjectLayer {
    mask: MaskGrid,
    flow: FlowField,
}

/// Moving objects: nearby constant-depth boxes carrying a constant
/// independent image velocity. Updates the depth map in place so the
/// rigid field sees the objects at their true depth.
fn sample_objects(
    config: &SceneConfig,
    rho: &mut InverseDepthMap,
    rng: &mut impl Rng,
) -> ObjectLayer {
    let mut mask = MaskGrid::filled(config.width, config.height, false);
    let mut flow = FlowField::zeros(config.width, config.height);
    let count = rng.gen_range(config.object_count.0..=config.object_count.1);
    let (z_min, z_max) = config.depth_range;
    for _ in 0..count {
        let region = sample_box(rng, config.width, config.height);
        // Keep moving objects near so the depth gate of the extraction
        // pipeline can see them.
        let z = rng.gen_range(z_min..z_min + 0.1 * (z_max - z_min));
        let angle = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
        let magnitude = rng.gen_range(0.0..=config.max_object_flow);
        let v = Vector2::new(angle.cos(), angle.sin()) * magnitude;
        for row in region.row0..region.row0 + region.rows {
            for col in region.col0..region.col0 + region.cols {
                mask.set(row, col, true);
                *flow.at_mut(row, col) = v;
                *rho.at_mut(row, col) = 1.0 / z;
            }
        }
    }
    ObjectLayer { mask, flow }
}

fn apply_noise(config: &SceneConfig, flow: &mut FlowField, rng: &mut impl Rng) {
    if config.noise_sigma > 0.0 {
        for row in 0..flow.height() {
            for col in 0..flow.width() {
                let n = Vector2::new(gaussian(rng), gaussian(rng)) * config.noise_sigma;
                *flow.at_mut(row, col) += n;
            }
        }
    }
    if config.outlier_fraction > 0.0 {
        let n = flow.len();
        let n_out = (config.outlier_fraction * n as f64).floor() as usize;
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..n_out {
            let j = rng.gen_range(i..n);
            indices.swap(i, j);
        }
        let width = flow.width();
        for &i in indices.iter().take(n_out) {
            *flow.at_mut(i / width, i % width) =
                Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
}

fn build_sample(config: &SceneConfig, cam: &CameraModel, index: u64, ego: EgoMotion) -> SceneSample {
    let mut rho = sample_depth(
        config,
        cam,
        &mut stream_rng(config.seed, index, STREAM_DEPTH),
    );
    let objects = sample_objects(
        config,
        &mut rho,
        &mut stream_rng(config.seed, index, STREAM_OBJECT),
    );
    let rigid = motion_field(&ego, &rho, cam).expect("depth matches camera by construction");
    let mut flow = rigid.add(&objects.flow);
    apply_noise(
        config,
        &mut flow,
        &mut stream_rng(config.seed, index, STREAM_NOISE),
    );
    SceneSample {
        flow,
        gt_ego: ego,
        rho,
        obj_mask: objects.mask,
        obj_flow: objects.flow,
    }
}

/// Generate `count` independent samples. Deterministic in
/// `(config, config.seed)`.
pub fn generate(config: &SceneConfig, count: usize) -> Result<Vec<SceneSample>, SynthError> {
    config.validate()?;
    if count == 0 {
        return Err(SynthError::Config("sample count must be at least 1".into()));
    }
    let cam = config.camera();
    Ok((0..count)
        .map(|i| {
            let ego = sample_egomotion(config, &mut stream_rng(config.seed, i as u64, STREAM_EGO));
            build_sample(config, &cam, i as u64, ego)
        })
        .collect())
}

/// Generate a temporally coherent sequence of `length` poses
/// (`length - 1` flow frames). Egomotion varies smoothly through a
/// first-order low-pass over per-frame draws; the returned trajectory is
/// the integral of the ground-truth motions from the identity.
pub fn generate_sequence(
    config: &SceneConfig,
    length: usize,
) -> Result<(Vec<SceneSample>, Trajectory), SynthError> {
    config.validate()?;
    if length < 2 {
        return Err(SynthError::Config(
            "sequence needs at least 2 frames".into(),
        ));
    }
    let cam = config.camera();
    let blend = 0.3;
    let mut motions: Vec<EgoMotion> = Vec::with_capacity(length - 1);
    for i in 0..length - 1 {
        let raw = sample_egomotion(config, &mut stream_rng(config.seed, i as u64, STREAM_EGO));
        let m = match motions.last() {
            Some(prev) => EgoMotion::new(
                prev.translation * (1.0 - blend) + raw.translation * blend,
                prev.rotation * (1.0 - blend) + raw.rotation * blend,
            ),
            None => raw,
        };
        motions.push(m);
    }
    let samples = motions
        .iter()
        .enumerate()
        .map(|(i, m)| build_sample(config, &cam, i as u64, *m))
        .collect();
    let trajectory = integrate_trajectory(&motions, &Pose::identity());
    Ok((samples, trajectory))
}

/// Dataset directory layout: `manifest.txt` with one record per sample
/// (`id flow depth mask objflow tx ty tz wx wy wz`, paths relative to the
/// directory) plus the referenced binary rasters. Sequences additionally
/// carry a `poses.txt`.
pub const MANIFEST_NAME: &str = "manifest.txt";
pub const POSES_NAME: &str = "poses.txt";

pub fn save_dataset(dir: &Path, samples: &[SceneSample]) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let id = format!("{i:06}");
        let names = [
            format!("{id}.flo"),
            format!("{id}.dep"),
            format!("{id}.msk"),
            format!("{id}.obj"),
        ];
        dataio::write_flow(std::fs::File::create(dir.join(&names[0]))?, &s.flow)?;
        dataio::write_depth(std::fs::File::create(dir.join(&names[1]))?, &s.rho)?;
        dataio::write_mask(std::fs::File::create(dir.join(&names[2]))?, &s.obj_mask)?;
        dataio::write_flow(std::fs::File::create(dir.join(&names[3]))?, &s.obj_flow)?;
        let t = s.gt_ego.translation;
        let w = s.gt_ego.rotation;
        writeln!(
            manifest,
            "{id} {} {} {} {} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            names[0], names[1], names[2], names[3], t.x, t.y, t.z, w.x, w.y, w.z
        )?;
    }
    std::fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<SceneSample>, SynthError> {
    let manifest = std::fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let mut samples = Vec::new();
    for (idx, line) in manifest.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 11 {
            return Err(SynthError::Manifest {
                line: lineno,
                problem: format!("expected 11 fields, got {}", tokens.len()),
            });
        }
        let mut nums = [0.0f64; 6];
        for (i, tok) in tokens[5..11].iter().enumerate() {
            nums[i] = tok.parse().map_err(|_| SynthError::Manifest {
                line: lineno,
                problem: format!("field {:?} is not a number", tok),
            })?;
        }
        let flow = dataio::read_flow(std::fs::File::open(dir.join(tokens[1]))?)?;
        let rho = dataio::read_depth(std::fs::File::open(dir.join(tokens[2]))?)?;
        let obj_mask = dataio::read_mask(std::fs::File::open(dir.join(tokens[3]))?)?;
        let obj_flow = dataio::read_flow(std::fs::File::open(dir.join(tokens[4]))?)?;
        samples.push(SceneSample {
            flow,
            gt_ego: EgoMotion::new(
                Vector3::new(nums[0], nums[1], nums[2]),
                Vector3::new(nums[3], nums[4], nums[5]),
            ),
            rho,
            obj_mask,
            obj_flow,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::egosolver::{robust_egomotion, RobustSolveOptions};
    use crate::geometry::relative_egomotion;
    use crate::objmotion;

    fn noiseless_config(seed: u64) -> SceneConfig {
        SceneConfig {
            seed,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let config = noiseless_config(11);
        let a = generate(&config, 5).unwrap();
        let b = generate(&config, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_objectless_flow_is_exactly_rigid() {
        let config = SceneConfig {
            object_count: (0, 0),
            seed: 3,
            ..SceneConfig::default()
        };
        let cam = config.camera();
        for s in generate(&config, 4).unwrap() {
            let rigid = motion_field(&s.gt_ego, &s.rho, &cam).unwrap();
            assert_eq!(s.flow, rigid);
            assert_eq!(s.obj_mask.count(), 0);
        }
    }

    #[test]
    fn object_flow_shows_up_as_residual() {
        let config = SceneConfig {
            object_count: (1, 1),
            seed: 8,
            ..SceneConfig::default()
        };
        let cam = config.camera();
        for s in generate(&config, 4).unwrap() {
            let trans = crate::geometry::translational_field(s.gt_ego.translation, &cam);
            let rot = crate::geometry::rotational_field(s.gt_ego.rotation, &cam);
            let r = objmotion::residual(&s.flow, &trans, &rot, &s.rho).unwrap();
            for (row, col, v) in r.iter() {
                let expect = s.obj_flow.at(row, col);
                assert!(
                    (v - expect).norm() < 1e-12,
                    "residual off object flow at ({row},{col})"
                );
                if !s.obj_mask.at(row, col) {
                    assert!(v.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn depth_stays_in_configured_bounds_and_objects_stay_small() {
        let config = noiseless_config(21);
        for s in generate(&config, 6).unwrap() {
            let (z_min, z_max) = config.depth_range;
            for rho in s.rho.as_slice() {
                assert!(*rho >= 1.0 / z_max - 1e-12 && *rho <= 1.0 / z_min + 1e-12);
            }
            assert!(s.obj_mask.count() as f64 <= 0.25 * (s.flow.len() as f64));
        }
    }

    #[test]
    fn solver_recovers_generated_motion() {
        // Noiseless static samples must round-trip through the robust
        // solver within tight bounds.
        let config = SceneConfig {
            object_count: (0, 0),
            seed: 400,
            ..SceneConfig::default()
        };
        let cam = config.camera();
        for s in generate(&config, 3).unwrap() {
            if s.gt_ego.translation.norm() < 0.2 {
                continue;
            }
            let report = robust_egomotion(&s.flow, &cam, &RobustSolveOptions::default()).unwrap();
            let angle = report
                .ego
                .translation
                .dot(&s.gt_ego.translation.normalize())
                .clamp(-1.0, 1.0)
                .acos()
                .to_degrees();
            assert!(angle < 0.5, "direction error {angle} deg");
            assert!((report.ego.rotation - s.gt_ego.rotation).norm() < 1e-3);
        }
    }

    #[test]
    fn sequence_shapes_and_round_trip() {
        let config = noiseless_config(31);
        let (samples, traj) = generate_sequence(&config, 2).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(traj.len(), 2);

        let (samples, traj) = generate_sequence(&config, 8).unwrap();
        assert_eq!(samples.len(), 7);
        assert_eq!(traj.len(), 8);
        for (i, s) in samples.iter().enumerate() {
            let rel = relative_egomotion(&traj[i], &traj[i + 1]).unwrap();
            assert!((rel.translation - s.gt_ego.translation).norm() < 1e-10);
            assert!((rel.rotation - s.gt_ego.rotation).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_motion_sequence_is_constant() {
        let config = SceneConfig {
            max_translation: 0.0,
            max_rotation: 0.0,
            seed: 5,
            ..SceneConfig::default()
        };
        let (_, traj) = generate_sequence(&config, 5).unwrap();
        for pose in &traj {
            assert_eq!(*pose, Pose::identity());
        }
    }

    #[test]
    fn dataset_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let config = SceneConfig {
            object_count: (1, 2),
            noise_sigma: 0.01,
            seed: 77,
            ..SceneConfig::default()
        };
        let samples = generate(&config, 3).unwrap();
        save_dataset(dir.path(), &samples).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.obj_mask, b.obj_mask);
            assert!((a.gt_ego.translation - b.gt_ego.translation).norm() < 1e-8);
            for (row, col, v) in a.flow.iter() {
                assert_eq!(b.flow.at(row, col).x, v.x as f32 as f64);
                assert_eq!(b.flow.at(row, col).y, v.y as f32 as f64);
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut config = SceneConfig::default();
        config.width = 4;
        assert!(generate(&config, 1).is_err());

        let mut config = SceneConfig::default();
        config.depth_range = (10.0, 10.0);
        assert!(generate(&config, 1).is_err());

        let mut config = SceneConfig::default();
        config.outlier_fraction = 1.5;
        assert!(generate(&config, 1).is_err());

        assert!(generate(&SceneConfig::default(), 0).is_err());
        assert!(generate_sequence(&SceneConfig::default(), 1).is_err());
    }
}
