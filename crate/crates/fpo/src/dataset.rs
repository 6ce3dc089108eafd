//! Posed image datasets rendered from analytic scenes.
//!
//! A dataset directory holds `dataset.json` (scene descriptor, rig and
//! reference step), `poses.json` and `images/t{t:04}_v{v:04}.png`.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use fpo_core::scene::{inward_rig, is_test_view, oracle_render, RigConfig, SceneSpec};
use fpo_core::{Camera, Image, Rigid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imageio;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseCamera {
    pub world_from_camera: [f64; 16],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseFrame {
    pub t: usize,
    pub cameras: Vec<PoseCamera>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
    pub frames: Vec<PoseFrame>,
}

/// One camera, as passed to `fpo render`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub world_from_camera: [f64; 16],
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraPose {
    pub fn from_camera(cam: &Camera) -> Self {
        CameraPose { world_from_camera: cam.world_from_camera.to_row_major(), focal: cam.focal, width: cam.width, height: cam.height }
    }

    pub fn camera(&self) -> Result<Camera> {
        camera_from(&self.world_from_camera, self.focal, self.width, self.height)
    }
}

pub fn camera_from(m: &[f64; 16], focal: f64, width: u32, height: u32) -> Result<Camera> {
    if m.iter().any(|v| !v.is_finite()) {
        bail!("camera matrix has non-finite entries");
    }
    Ok(Camera::new(Rigid::from_row_major(m), focal, width, height)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub scene: SceneSpec,
    pub rig: RigConfig,
    /// Step of the reference renderer.
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl FromStr for Split {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => bail!("unknown split '{s}' (expected train, test or all)"),
        }
    }
}

/// A rendered posed view.
#[derive(Clone, Debug)]
pub struct View {
    pub t: usize,
    pub index: usize,
    pub camera: Camera,
    pub image: Image,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub info: DatasetInfo,
    pub poses: PosesFile,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_pose(path: &Path) -> Result<CameraPose> {
    read_json(path)
}

pub fn read_scene(path: &Path) -> Result<SceneSpec> {
    let scene: SceneSpec = read_json(path)?;
    scene.validate()?;
    Ok(scene)
}

impl Dataset {
    /// Renders every rig view at every frame with the reference renderer.
    pub fn generate(dir: &Path, scene: &SceneSpec, rig: &RigConfig, step: f64) -> Result<Dataset> {
        scene.validate()?;
        if step.is_nan() || step <= 0.0 {
            bail!("reference step must be positive");
        }
        let cameras = inward_rig(rig, scene.bounds.center)?;
        fs::create_dir_all(dir.join("images")).with_context(|| format!("creating {}", dir.display()))?;
        let jobs: Vec<(usize, usize)> = (0..scene.frames).flat_map(|t| (0..cameras.len()).map(move |v| (t, v))).collect();
        jobs.par_iter().try_for_each(|&(t, v)| {
            let img = oracle_render(scene, &cameras[v], t, step);
            imageio::save_image(&image_path(dir, t, v), &img)
        })?;
        let poses = PosesFile {
            focal: rig.focal,
            width: rig.width,
            height: rig.height,
            frames: (0..scene.frames)
                .map(|t| PoseFrame {
                    t,
                    cameras: cameras.iter().map(|c| PoseCamera { world_from_camera: c.world_from_camera.to_row_major() }).collect(),
                })
                .collect(),
        };
        let info = DatasetInfo { scene: scene.clone(), rig: *rig, step };
        write_json(&dir.join("dataset.json"), &info)?;
        write_json(&dir.join("poses.json"), &poses)?;
        Ok(Dataset { dir: dir.to_path_buf(), info, poses })
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let info: DatasetInfo = read_json(&dir.join("dataset.json"))?;
        info.scene.validate()?;
        let poses: PosesFile = read_json(&dir.join("poses.json"))?;
        if poses.frames.len() != info.scene.frames {
            bail!("poses.json has {} frames, scene has {}", poses.frames.len(), info.scene.frames);
        }
        for (i, f) in poses.frames.iter().enumerate() {
            if f.t != i {
                bail!("poses.json frame {i} is labelled t={}", f.t);
            }
        }
        Ok(Dataset { dir: dir.to_path_buf(), info, poses })
    }

    pub fn frames(&self) -> usize {
        self.poses.frames.len()
    }

    pub fn camera(&self, t: usize, v: usize) -> Result<Camera> {
        let c = &self.poses.frames[t].cameras[v];
        camera_from(&c.world_from_camera, self.poses.focal, self.poses.width, self.poses.height)
    }

    pub fn view_indices(&self, t: usize, split: Split) -> Vec<usize> {
        let holdout = self.info.rig.holdout;
        (0..self.poses.frames[t].cameras.len())
            .filter(|&v| match split {
                Split::All => true,
                Split::Test => is_test_view(v, holdout),
                Split::Train => !is_test_view(v, holdout),
            })
            .collect()
    }

    pub fn load_view(&self, t: usize, v: usize) -> Result<View> {
        let image = imageio::load_image(&image_path(&self.dir, t, v))?;
        let camera = self.camera(t, v)?;
        if image.width != camera.width || image.height != camera.height {
            bail!("image t={t} v={v} is {}x{}, poses say {}x{}", image.width, image.height, camera.width, camera.height);
        }
        Ok(View { t, index: v, camera, image })
    }

    /// All views of a split, frame-major.
    pub fn load_split(&self, split: Split) -> Result<Vec<View>> {
        let jobs: Vec<(usize, usize)> = (0..self.frames()).flat_map(|t| self.view_indices(t, split).into_iter().map(move |v| (t, v))).collect();
        jobs.par_iter().map(|&(t, v)| self.load_view(t, v)).collect()
    }
}

pub fn image_path(dir: &Path, t: usize, v: usize) -> PathBuf {
    dir.join("images").join(format!("t{t:04}_v{v:04}.png"))
}
