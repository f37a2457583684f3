//! Projective transforms: 4-pt corner-offset parameterization, normalized
//! DLT, RANSAC fitting, and the middle-plane decomposition that splits one
//! homography into two half-warps (`H = H_ref/H_tgt` with `H * H_ref = H_tgt`).

use crate::error::{Error, Result};
use crate::imaging::FlowField;
use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// 3x3 projective transform, kept normalized so `h33 = 1` whenever possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Homography {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        Homography { m }.normalized()
    }

    /// Scales so that `h33 = 1` (no-op when `h33` is numerically zero).
    pub fn normalized(mut self) -> Self {
        let h33 = self.m[(2, 2)];
        if h33.abs() > 1e-12 {
            self.m /= h33;
        }
        self
    }

    pub fn inverse(&self) -> Result<Homography> {
        match self.m.try_inverse() {
            Some(inv) => Ok(Homography { m: inv }.normalized()),
            None => Err(Error::Singular("homography is not invertible".into())),
        }
    }

    /// Composition `self * other` (apply `other` first), renormalized.
    pub fn compose(&self, other: &Homography) -> Homography {
        Homography { m: self.m * other.m }.normalized()
    }

    /// Maps a single point with perspective divide.
    pub fn map_point(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let v = self.m * Vector3::new(x, y, 1.0);
        if v.z.abs() < 1e-12 {
            return Err(Error::Degenerate(format!(
                "point ({x}, {y}) maps to infinity"
            )));
        }
        Ok((v.x / v.z, v.y / v.z))
    }

    /// Row-major 9-element view, as serialized in run reports.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

/// 8-parameter homography encoding: per-corner displacements in the order
/// top-left, top-right, bottom-left, bottom-right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourPtOffsets {
    pub offsets: [[f64; 2]; 4],
    pub frame_w: usize,
    pub frame_h: usize,
}

impl FourPtOffsets {
    /// Frame corners in the canonical order (pixel-center convention).
    pub fn corners(frame_w: usize, frame_h: usize) -> [[f64; 2]; 4] {
        let w = (frame_w - 1) as f64;
        let h = (frame_h - 1) as f64;
        [[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]]
    }

    pub fn zero(frame_w: usize, frame_h: usize) -> Self {
        FourPtOffsets {
            offsets: [[0.0; 2]; 4],
            frame_w,
            frame_h,
        }
    }

    /// Returns a copy with every displacement halved.
    pub fn halved(&self) -> Self {
        let mut o = *self;
        for d in &mut o.offsets {
            d[0] *= 0.5;
            d[1] *= 0.5;
        }
        o
    }
}

/// Matched point pairs `(reference, target)` in pixel coordinates.
#[derive(Debug, Clone, Default)]
pub struct Correspondences {
    pub pairs: Vec<((f64, f64), (f64, f64))>,
}

impl Correspondences {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Swaps the roles of the two point sets.
    pub fn flipped(&self) -> Correspondences {
        Correspondences {
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }
}

/// Hartley normalization: translate to the centroid and scale so the RMS
/// distance from the origin is sqrt(2).
fn normalizing_transform(points: impl Iterator<Item = (f64, f64)> + Clone) -> Matrix3<f64> {
    let mut n = 0usize;
    let (mut cx, mut cy) = (0.0, 0.0);
    for (x, y) in points.clone() {
        cx += x;
        cy += y;
        n += 1;
    }
    let n = n as f64;
    cx /= n;
    cy /= n;
    let mut rms = 0.0;
    for (x, y) in points {
        rms += (x - cx).powi(2) + (y - cy).powi(2);
    }
    rms = (rms / n).sqrt();
    let s = if rms > 1e-12 { (2.0f64).sqrt() / rms } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Least-squares homography from `n >= 4` correspondences via the normalized
/// direct linear transform. Maps the first point of each pair to the second.
pub fn solve_dlt(c: &Correspondences) -> Result<Homography> {
    let n = c.len();
    if n < 4 {
        return Err(Error::InsufficientData {
            what: "correspondences",
            needed: 4,
            got: n,
        });
    }
    let t_src = normalizing_transform(c.pairs.iter().map(|p| p.0));
    let t_dst = normalizing_transform(c.pairs.iter().map(|p| p.1));

    let mut a = DMatrix::<f64>::zeros(2 * n, 9);
    for (i, &((sx, sy), (dx, dy))) in c.pairs.iter().enumerate() {
        let s = t_src * Vector3::new(sx, sy, 1.0);
        let d = t_dst * Vector3::new(dx, dy, 1.0);
        let (x, y) = (s.x, s.y);
        let (u, v) = (d.x, d.y);
        let r0 = 2 * i;
        let r1 = 2 * i + 1;
        // Standard DLT rows for [h11..h33].
        a[(r0, 0)] = -x;
        a[(r0, 1)] = -y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = u * x;
        a[(r0, 7)] = u * y;
        a[(r0, 8)] = u;
        a[(r1, 3)] = -x;
        a[(r1, 4)] = -y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = v * x;
        a[(r1, 7)] = v * y;
        a[(r1, 8)] = v;
    }

    // Null vector of A as the eigenvector of A^T A with smallest eigenvalue
    // (the thin SVD of a 2n x 9 system does not expose the null space).
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let min_idx = order[0];
    // A one-dimensional null space is required; collinear configurations
    // leave several near-zero eigenvalues and an ambiguous solution.
    let scale = eig.eigenvalues[order[8]].abs().max(1e-300);
    if eig.eigenvalues[order[1]].abs() < 1e-12 * scale {
        return Err(Error::Degenerate(
            "correspondences are collinear or otherwise rank-deficient".into(),
        ));
    }
    let h = eig.eigenvectors.column(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| Error::Singular("normalization not invertible".into()))?;
    let full = Homography::from_matrix(t_dst_inv * hn * t_src);
    if full.m.determinant().abs() < 1e-10 {
        return Err(Error::Degenerate(
            "correspondence configuration yields a singular homography".into(),
        ));
    }
    Ok(full)
}

/// RANSAC homography fit: `iterations` minimal 4-point hypotheses scored by
/// forward reprojection error, then a least-squares refit on the best inlier
/// set. Deterministic for a fixed seed; ties keep the earliest hypothesis.
pub fn ransac_fit(
    c: &Correspondences,
    threshold: f64,
    iterations: usize,
    seed: u64,
) -> Result<(Homography, Vec<usize>)> {
    let n = c.len();
    if n < 4 {
        return Err(Error::InsufficientData {
            what: "correspondences",
            needed: 4,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thr2 = threshold * threshold;

    let score = |h: &Homography| -> Vec<usize> {
        let mut inliers = Vec::new();
        for (i, &((sx, sy), (dx, dy))) in c.pairs.iter().enumerate() {
            if let Ok((px, py)) = h.map_point(sx, sy) {
                let e2 = (px - dx).powi(2) + (py - dy).powi(2);
                if e2 <= thr2 {
                    inliers.push(i);
                }
            }
        }
        inliers
    };

    let mut best: Option<Vec<usize>> = None;
    for _ in 0..iterations {
        // Draw 4 distinct indices.
        let mut idx = [0usize; 4];
        let mut k = 0;
        while k < 4 {
            let cand = rng.gen_range(0..n);
            if !idx[..k].contains(&cand) {
                idx[k] = cand;
                k += 1;
            }
        }
        let minimal = Correspondences {
            pairs: idx.iter().map(|&i| c.pairs[i]).collect(),
        };
        let Ok(h) = solve_dlt(&minimal) else { continue };
        let inliers = score(&h);
        if best.as_ref().map_or(true, |b| inliers.len() > b.len()) {
            best = Some(inliers);
        }
    }

    let inliers = best.ok_or(Error::NoModel)?;
    if inliers.len() < 4 {
        return Err(Error::NoModel);
    }
    let consensus = Correspondences {
        pairs: inliers.iter().map(|&i| c.pairs[i]).collect(),
    };
    let refit = solve_dlt(&consensus)?;
    Ok((refit, inliers))
}

/// Homography that moves the frame corners by the given offsets.
pub fn offsets_to_homography(o: &FourPtOffsets) -> Result<Homography> {
    let corners = FourPtOffsets::corners(o.frame_w, o.frame_h);
    let pairs = corners
        .iter()
        .zip(&o.offsets)
        .map(|(c, d)| ((c[0], c[1]), (c[0] + d[0], c[1] + d[1])))
        .collect();
    solve_dlt(&Correspondences { pairs }).map_err(|_| {
        Error::Degenerate("displaced corner quad is degenerate".into())
    })
}

/// Corner displacements induced by `h` on a `frame_w x frame_h` frame.
pub fn homography_to_offsets(h: &Homography, frame_w: usize, frame_h: usize) -> Result<FourPtOffsets> {
    let corners = FourPtOffsets::corners(frame_w, frame_h);
    let mut offsets = [[0.0; 2]; 4];
    for (i, c) in corners.iter().enumerate() {
        let (x, y) = h.map_point(c[0], c[1])?;
        offsets[i] = [x - c[0], y - c[1]];
    }
    Ok(FourPtOffsets {
        offsets,
        frame_w,
        frame_h,
    })
}

/// Splits the homography encoded by `o` onto a virtual middle plane by
/// halving every corner displacement: `H_tgt` is the homography of the halved
/// offsets and `H_ref = H^-1 * H_tgt`, so `H * H_ref = H_tgt` holds exactly.
pub fn decompose_middle_plane(o: &FourPtOffsets) -> Result<(Homography, Homography)> {
    let full = offsets_to_homography(o)?;
    let h_tgt = offsets_to_homography(&o.halved())?;
    let h_ref = full.inverse()?.compose(&h_tgt).normalized();
    Ok((h_ref, h_tgt))
}

/// Maps a batch of points, failing on any point sent to infinity.
pub fn apply_homography(h: &Homography, points: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    points.iter().map(|&(x, y)| h.map_point(x, y)).collect()
}

/// Dense backward flow realizing `h`: `flow(p) = H^-1(p) - p`, so warping
/// with this flow applies `h` to image content.
pub fn homography_to_flow(h: &Homography, height: usize, width: usize) -> Result<FlowField> {
    crate::init_thread_pool();
    let inv = h.inverse()?;
    let mut flow = FlowField::zeros(height, width);
    flow.dx
        .par_chunks_mut(width)
        .zip(flow.dy.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (dxr, dyr))| {
            for x in 0..width {
                let v = inv.m * Vector3::new(x as f64, y as f64, 1.0);
                if v.z.abs() < 1e-12 {
                    // Point at infinity: leave a zero displacement; the warp
                    // mask will be handled by the out-of-bounds convention.
                    dxr[x] = 0.0;
                    dyr[x] = 0.0;
                } else {
                    dxr[x] = v.x / v.z - x as f64;
                    dyr[x] = v.y / v.z - y as f64;
                }
            }
        });
    Ok(flow)
}
