//! Geometric branch: deterministic point-feature encoding and the
//! quantize-then-pool rasterization of sparse keypoints onto dense grids.
//!
//! Keypoints at `(x, y)` land in cell `(floor(x * sl), floor(y * sl))`; cells
//! holding several points are reduced channel-wise (max by default), cells
//! holding none stay exactly zero, so the output aligns with a semantic
//! feature map of the same scale.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feature-map scale relative to the input frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Eighth,
    Sixteenth,
}

impl Scale {
    pub fn divisor(self) -> usize {
        match self {
            Scale::Eighth => 8,
            Scale::Sixteenth => 16,
        }
    }

    pub fn factor(self) -> f64 {
        1.0 / self.divisor() as f64
    }
}

/// Cell reduction applied when several keypoints share a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolMode {
    #[default]
    Max,
    Mean,
    Sum,
}

/// Sparse keypoints with optional fixed-length descriptors.
#[derive(Debug, Clone, Default)]
pub struct KeypointSet {
    pub points: Vec<(f64, f64)>,
    pub descriptors: Vec<Vec<f64>>,
    pub frame_w: usize,
    pub frame_h: usize,
}

impl KeypointSet {
    pub fn descriptor_dim(&self) -> usize {
        self.descriptors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.descriptors.is_empty() && self.descriptors.len() != self.points.len() {
            return Err(Error::dims(
                "keypoint descriptors",
                self.points.len(),
                self.descriptors.len(),
            ));
        }
        let d = self.descriptor_dim();
        if let Some(i) = self.descriptors.iter().position(|v| v.len() != d) {
            return Err(Error::Parse(format!(
                "descriptor {i} has length {} but expected {d}",
                self.descriptors[i].len()
            )));
        }
        Ok(())
    }
}

/// Per-point latent features with their pixel coordinates.
#[derive(Debug, Clone)]
pub struct PointFeatureSet {
    pub features: Vec<Vec<f64>>,
    pub coords: Vec<(f64, f64)>,
}

/// Dense grid embedding of point features, stored channel-major
/// (`data[(c * grid_h + y) * grid_w + x]`).
#[derive(Debug, Clone)]
pub struct GeometricFeatureMap {
    pub channels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub scale: Scale,
    pub data: Vec<f64>,
}

impl GeometricFeatureMap {
    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.grid_h + y) * self.grid_w + x]
    }
}

/// Deterministic stand-in for a learned point encoder: a seeded fixed affine
/// projection of `[x/W, y/H, descriptor...]` squashed by tanh. Identical
/// inputs and seed give identical features on every run.
pub fn encode_points(kp: &KeypointSet, channels: usize, seed: u64) -> Result<PointFeatureSet> {
    if kp.points.is_empty() {
        return Err(Error::InsufficientData {
            what: "keypoints",
            needed: 1,
            got: 0,
        });
    }
    kp.validate()?;
    let d = kp.descriptor_dim();
    let in_dim = 2 + d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = (3.0 / in_dim as f64).sqrt();
    let weight: Vec<f64> = (0..channels * in_dim)
        .map(|_| rng.gen_range(-1.0..1.0) * gain)
        .collect();
    let bias: Vec<f64> = (0..channels).map(|_| rng.gen_range(-0.1..0.1)).collect();

    let (w, h) = (kp.frame_w as f64, kp.frame_h as f64);
    let mut features = Vec::with_capacity(kp.points.len());
    let mut input = vec![0.0; in_dim];
    for (i, &(x, y)) in kp.points.iter().enumerate() {
        input[0] = x / w;
        input[1] = y / h;
        if d > 0 {
            input[2..].copy_from_slice(&kp.descriptors[i]);
        }
        let mut f = Vec::with_capacity(channels);
        for c in 0..channels {
            let row = &weight[c * in_dim..(c + 1) * in_dim];
            let mut acc = bias[c];
            for (wv, iv) in row.iter().zip(&input) {
                acc += wv * iv;
            }
            f.push(acc.tanh());
        }
        features.push(f);
    }
    Ok(PointFeatureSet {
        features,
        coords: kp.points.clone(),
    })
}

/// Quantizes point features onto a zero-initialized grid with channel-wise
/// max pooling over the points sharing a cell.
pub fn rasterize(
    pf: &PointFeatureSet,
    scale: Scale,
    frame_w: usize,
    frame_h: usize,
) -> Result<GeometricFeatureMap> {
    rasterize_with_mode(pf, scale, frame_w, frame_h, PoolMode::Max)
}

/// [`rasterize`] with a selectable pooling mode. Only max pooling is
/// bit-exactly order-invariant; mean and sum are provided for comparison.
pub fn rasterize_with_mode(
    pf: &PointFeatureSet,
    scale: Scale,
    frame_w: usize,
    frame_h: usize,
    mode: PoolMode,
) -> Result<GeometricFeatureMap> {
    let channels = pf.features.first().map_or(0, Vec::len);
    if pf.features.len() != pf.coords.len() {
        return Err(Error::dims(
            "point features vs coords",
            pf.coords.len(),
            pf.features.len(),
        ));
    }
    let grid_w = frame_w / scale.divisor();
    let grid_h = frame_h / scale.divisor();
    let sl = scale.factor();
    let mut data = vec![0.0; channels * grid_h * grid_w];
    let mut occupied = vec![false; grid_h * grid_w];
    let mut counts = vec![0usize; grid_h * grid_w];

    for (i, &(x, y)) in pf.coords.iter().enumerate() {
        let cx = (x * sl).floor();
        let cy = (y * sl).floor();
        if cx < 0.0 || cy < 0.0 || cx >= grid_w as f64 || cy >= grid_h as f64 {
            return Err(Error::PointOutOfFrame { index: i });
        }
        let (cx, cy) = (cx as usize, cy as usize);
        let cell = cy * grid_w + cx;
        let first = !occupied[cell];
        occupied[cell] = true;
        counts[cell] += 1;
        for (c, &v) in pf.features[i].iter().enumerate() {
            let slot = &mut data[(c * grid_h + cy) * grid_w + cx];
            match mode {
                PoolMode::Max => {
                    if first || v > *slot {
                        *slot = v;
                    }
                }
                PoolMode::Mean | PoolMode::Sum => *slot += v,
            }
        }
    }
    if mode == PoolMode::Mean {
        for cell in 0..grid_h * grid_w {
            if counts[cell] > 1 {
                let inv = 1.0 / counts[cell] as f64;
                let (cy, cx) = (cell / grid_w, cell % grid_w);
                for c in 0..channels {
                    data[(c * grid_h + cy) * grid_w + cx] *= inv;
                }
            }
        }
    }
    Ok(GeometricFeatureMap {
        channels,
        grid_h,
        grid_w,
        scale,
        data,
    })
}
