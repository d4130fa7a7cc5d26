//! One-time, seeded augmentation of a training set.
//!
//! Each image gets its own random stream derived from `(seed, index)` and is
//! transformed once: rotation, translation and scaling (composed into one
//! affine map about the image centre and resampled bilinearly with zero
//! fill), a padded random crop, then brightness and contrast jitter. The
//! result is clamped to `[0, 1]`.

use std::sync::Once;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, ImageSet};
use crate::rng::{substream, uniform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    pub brightness: f64,
    pub contrast: f64,
    /// Accepted for parity with RGB pipelines; ignored on grayscale input.
    pub saturation: f64,
    /// Accepted for parity with RGB pipelines; ignored on grayscale input.
    pub hue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentParams {
    /// Rotation drawn uniformly from `±rotation_deg` degrees.
    pub rotation_deg: f64,
    /// Per-axis shift drawn from `±translate_frac` of the image size.
    pub translate_frac: f64,
    pub scale_range: (f64, f64),
    /// Zero padding added before cropping back to the original size.
    pub crop_pad: usize,
    pub jitter: Jitter,
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            translate_frac: 0.10,
            scale_range: (0.90, 1.10),
            crop_pad: 4,
            jitter: Jitter {
                brightness: 0.1,
                contrast: 0.1,
                saturation: 0.1,
                hue: 0.1,
            },
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Parameters under which augmentation leaves every image untouched.
    pub fn identity(seed: u64) -> Self {
        Self {
            rotation_deg: 0.0,
            translate_frac: 0.0,
            scale_range: (1.0, 1.0),
            crop_pad: 0,
            jitter: Jitter {
                brightness: 0.0,
                contrast: 0.0,
                saturation: 0.0,
                hue: 0.0,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bounds = [
            ("rotation_deg", self.rotation_deg),
            ("translate_frac", self.translate_frac),
            ("jitter.brightness", self.jitter.brightness),
            ("jitter.contrast", self.jitter.contrast),
            ("jitter.saturation", self.jitter.saturation),
            ("jitter.hue", self.jitter.hue),
        ];
        for (name, v) in bounds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DataError::Config(format!(
                    "{name} must be a non-negative finite bound, got {v}"
                )));
            }
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(DataError::Config(format!(
                "scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if self.jitter.brightness > 1.0 || self.jitter.contrast > 1.0 {
            return Err(DataError::Config("brightness/contrast jitter must not exceed 1".into()));
        }
        Ok(())
    }
}

/// The random quantities drawn for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Draws {
    pub angle_rad: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub crop_x: usize,
    pub crop_y: usize,
    pub crop_pad: usize,
    pub brightness: f64,
    pub contrast: f64,
}

impl Draws {
    fn sample(params: &AugmentParams, height: usize, width: usize, rng: &mut crate::rng::PortableRng) -> Self {
        let r = params.rotation_deg;
        let t = params.translate_frac;
        let (s0, s1) = params.scale_range;
        let pad = params.crop_pad;
        let angle_rad = uniform(rng, -r, r).to_radians();
        let shift_x = uniform(rng, -t, t) * width as f64;
        let shift_y = uniform(rng, -t, t) * height as f64;
        let scale = uniform(rng, s0, s1);
        let crop_x = rng.random_range(0..=2 * pad);
        let crop_y = rng.random_range(0..=2 * pad);
        let b = params.jitter.brightness;
        let c = params.jitter.contrast;
        let brightness = uniform(rng, 1.0 - b, 1.0 + b);
        let contrast = uniform(rng, 1.0 - c, 1.0 + c);
        Self {
            angle_rad,
            shift_x,
            shift_y,
            scale,
            crop_x,
            crop_y,
            crop_pad: pad,
            brightness,
            contrast,
        }
    }
}

static GRAYSCALE_NOTE: Once = Once::new();

/// Augments every image of `set` in place and returns it.
pub fn augment_dataset(mut set: ImageSet, params: &AugmentParams) -> Result<ImageSet, DataError> {
    params.validate()?;
    if params.jitter.saturation > 0.0 || params.jitter.hue > 0.0 {
        GRAYSCALE_NOTE.call_once(|| {
            log::info!("saturation/hue jitter has no effect on single-channel images; skipped");
        });
    }
    let (h, w) = (set.height(), set.width());
    let mut scratch = vec![0.0; h * w];
    let pixels = set.pixels_mut();
    for i in 0..pixels.rows() {
        let mut rng = substream(params.seed, i as u64);
        let draws = Draws::sample(params, h, w, &mut rng);
        let row = pixels.row_mut(i);
        transform_image(row, &mut scratch, h, w, &draws);
        row.copy_from_slice(&scratch);
    }
    Ok(set)
}

/// Applies `draws` to `src`, writing the result into `dst`.
pub(crate) fn transform_image(src: &[f64], dst: &mut [f64], h: usize, w: usize, d: &Draws) {
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let (sin, cos) = d.angle_rad.sin_cos();
    let pad = d.crop_pad as isize;
    let at = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            src[y as usize * w + x as usize]
        }
    };
    for y in 0..h {
        for x in 0..w {
            // The crop reads the affine output at an integer offset inside
            // the zero-padded frame.
            let ax = x as isize + d.crop_x as isize - pad;
            let ay = y as isize + d.crop_y as isize - pad;
            dst[y * w + x] = if ax < 0 || ay < 0 || ax >= w as isize || ay >= h as isize {
                0.0
            } else {
                // Invert p' = s·(R(p − c) + t) + c.
                let qx = (ax as f64 - cx) / d.scale - d.shift_x;
                let qy = (ay as f64 - cy) / d.scale - d.shift_y;
                let sx = cos * qx + sin * qy + cx;
                let sy = -sin * qx + cos * qy + cy;
                bilinear(&at, sx, sy)
            };
        }
    }
    apply_jitter(dst, d.brightness, d.contrast);
}

fn bilinear(at: &impl Fn(isize, isize) -> f64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as isize, y0 as isize);
    at(ix, iy) * (1.0 - fx) * (1.0 - fy)
        + at(ix + 1, iy) * fx * (1.0 - fy)
        + at(ix, iy + 1) * (1.0 - fx) * fy
        + at(ix + 1, iy + 1) * fx * fy
}

/// Multiplicative brightness, then contrast about the image mean; each step
/// clamps to `[0, 1]`.
pub(crate) fn apply_jitter(img: &mut [f64], brightness: f64, contrast: f64) {
    for v in img.iter_mut() {
        *v = (*v * brightness).clamp(0.0, 1.0);
    }
    let mean = img.iter().sum::<f64>() / img.len() as f64;
    for v in img.iter_mut() {
        *v = (contrast * *v + (1.0 - contrast) * mean).clamp(0.0, 1.0);
    }
}
