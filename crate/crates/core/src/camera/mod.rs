//! Synthetic cameras over the terrain texture and projection of the
//! robot's own trajectory into the images it captured.

mod dataset;

pub use dataset::{
    build_dataset, label_error_vs_truth, project_traversal, read_dataset, write_dataset, DatasetConfig, Label,
    LabeledImage, OdometryTrack, TrackPoint, LABEL_WINDOW_M,
};

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::RgbImage;
use crate::terrain::TerrainTexture;

/// Color of pixels whose ray never reaches the ground.
pub const SKY_COLOR: [u8; 3] = [135, 180, 235];

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("camera configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Raster(#[from] crate::raster::RasterError),
    #[error(transparent)]
    Policy(#[from] crate::policy::PolicyError),
    #[error("dataset format: {0}")]
    Format(String),
}

/// Planar robot pose: ground position and yaw.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub p: [f64; 2],
    pub psi: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { p: [x, y], psi }
    }

    fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.p[0], self.p[1], 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.psi),
        )
    }
}

/// Pinhole camera rigidly mounted on the robot base.
///
/// Optical frame: x right, y down, z along the view direction. Pixel
/// `(col, row)` covers `[col, col + 1) × [row, row + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pinhole {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera pose in the base frame (base: x forward, y left, z up,
    /// origin on the ground below the body center).
    pub mount: Isometry3<f64>,
}

impl Pinhole {
    /// Forward-looking camera `height_m` above ground, pitched down by
    /// `pitch_rad`, with horizontal field of view `hfov_rad`.
    pub fn mounted(width: usize, height: usize, hfov_rad: f64, height_m: f64, pitch_rad: f64) -> Self {
        let f = width as f64 / 2.0 / (hfov_rad / 2.0).tan();
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            mount: mount_pose(height_m, pitch_rad),
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Config("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::Config("image must be non-empty".into()));
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64 && self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err(CameraError::Config("principal point outside the image".into()));
        }
        Ok(())
    }

    fn world_from_camera(&self, robot: &Pose2) -> Isometry3<f64> {
        robot.isometry() * self.mount
    }
}

/// Camera-in-base transform for a forward camera pitched down by `pitch`.
pub fn mount_pose(height_m: f64, pitch: f64) -> Isometry3<f64> {
    // optical axes expressed in the base frame at zero pitch
    let level = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(
        nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
    ));
    let tilt = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch);
    Isometry3::from_parts(Translation3::new(0.0, 0.0, height_m), tilt * level)
}

/// Overhead orthographic view of a fixed world window.
///
/// Pixel `(col, row)` covers world x in `origin.x + [col, col+1)/px_per_m`
/// and y in `origin.y + [row, row+1)/px_per_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoOverhead {
    pub px_per_m: f64,
    pub origin: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl OrthoOverhead {
    /// Window covering `[0, w_m] × [0, h_m]`.
    pub fn covering(w_m: f64, h_m: f64, px_per_m: f64) -> Self {
        Self {
            px_per_m,
            origin: [0.0, 0.0],
            width: (w_m * px_per_m).round() as usize,
            height: (h_m * px_per_m).round() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CameraModel {
    Pinhole(Pinhole),
    OrthoOverhead(OrthoOverhead),
}

impl Default for CameraModel {
    /// 128×96 pinhole, 90° horizontal field of view, 0.35 m high, pitched
    /// down 20°.
    fn default() -> Self {
        CameraModel::Pinhole(Pinhole::mounted(128, 96, 90f64.to_radians(), 0.35, 20f64.to_radians()))
    }
}

impl CameraModel {
    pub fn size(&self) -> (usize, usize) {
        match self {
            CameraModel::Pinhole(c) => (c.width, c.height),
            CameraModel::OrthoOverhead(c) => (c.width, c.height),
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        match self {
            CameraModel::Pinhole(c) => c.validate(),
            CameraModel::OrthoOverhead(c) => {
                if c.px_per_m > 0.0 && c.width > 0 && c.height > 0 {
                    Ok(())
                } else {
                    Err(CameraError::Config("overhead window must be non-empty".into()))
                }
            }
        }
    }

    /// Continuous pixel coordinates of a ground point, or `None` when it is
    /// behind the camera or outside the frame.
    pub fn project(&self, world: [f64; 2], robot: &Pose2) -> Option<[f64; 2]> {
        let (w, h) = self.size();
        let uv = match self {
            CameraModel::Pinhole(c) => {
                let q = c.world_from_camera(robot).inverse_transform_point(&Point3::new(world[0], world[1], 0.0));
                if q.z <= 1e-9 {
                    return None;
                }
                [c.fx * q.x / q.z + c.cx, c.fy * q.y / q.z + c.cy]
            }
            CameraModel::OrthoOverhead(c) => {
                [(world[0] - c.origin[0]) * c.px_per_m, (world[1] - c.origin[1]) * c.px_per_m]
            }
        };
        (uv[0] >= 0.0 && uv[0] < w as f64 && uv[1] >= 0.0 && uv[1] < h as f64).then_some(uv)
    }

    /// Ground point seen at continuous pixel `uv`; `None` above the horizon.
    pub fn unproject(&self, uv: [f64; 2], robot: &Pose2) -> Option<[f64; 2]> {
        match self {
            CameraModel::Pinhole(c) => {
                let pose = c.world_from_camera(robot);
                let d = pose.rotation * Vector3::new((uv[0] - c.cx) / c.fx, (uv[1] - c.cy) / c.fy, 1.0);
                let o = pose.translation.vector;
                if d.z >= -1e-12 || o.z <= 0.0 {
                    return None;
                }
                let t = -o.z / d.z;
                Some([o.x + t * d.x, o.y + t * d.y])
            }
            CameraModel::OrthoOverhead(c) => Some([c.origin[0] + uv[0] / c.px_per_m, c.origin[1] + uv[1] / c.px_per_m]),
        }
    }

    /// Ground point under the center of every pixel, row-major.
    pub fn ground_points(&self, robot: &Pose2) -> Vec<Option<[f64; 2]>> {
        let (w, h) = self.size();
        let mut out = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                out.push(self.unproject([col as f64 + 0.5, row as f64 + 0.5], robot));
            }
        }
        out
    }
}

/// Render what the camera sees from `robot`: every pixel ray is cast to
/// the ground plane and the texture sampled there.
pub fn render(texture: &TerrainTexture, camera: &CameraModel, robot: &Pose2) -> RgbImage {
    let (w, h) = camera.size();
    let mut img = RgbImage::new(w, h);
    for (i, g) in camera.ground_points(robot).into_iter().enumerate() {
        let rgb = match g {
            Some([x, y]) => texture.sample(x, y),
            None => SKY_COLOR,
        };
        img.put(i % w, i / w, rgb);
    }
    img
}
