//! The stitching objective: masked L1 alignment under homography and TPS
//! warps, intra-/inter-grid mesh shape penalties, expert regularization, and
//! analytic gradients with respect to the TPS control offsets of both views.
//!
//! The objective is a differentiable function of the backward control
//! offsets because the TPS coefficients are linear in them; the chain runs
//! offsets -> TPS flow (vanilla or FFD path) -> bilinear sample -> masked L1.
//! Warp validity masks are treated as stop-gradient.

use crate::amoe::{reg_loss, FusionWeights};
use crate::error::{Error, Result};
use crate::homography::Homography;
use crate::imaging::{bilinear_sample, bilinear_sample_grad, warp_onto, FlowField, Image, Mask};
use crate::metrics::pairwise_sum;
use crate::tps::{
    ffd_tps_eval, ffd_upsample_backward, compress_mesh, tps_eval_flow, Meshgrid, TpsSystem,
};
use rayon::prelude::*;

/// Which reading of the intra-grid formula to apply: the formula as printed
/// (penalize edges longer than `alpha W / V`) or the prose intent (penalize
/// edges shorter than that minimum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntraMode {
    #[default]
    AsWritten,
    Prose,
}

/// Loss hyperparameters; defaults carry the published values.
#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub lambda_h: f64,
    pub lambda_t: f64,
    pub w_s: f64,
    pub w_r: f64,
    pub lambda_e: f64,
    pub alpha: f64,
    pub u_cells: usize,
    pub v_cells: usize,
    pub intra_mode: IntraMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_h: 1.0,
            lambda_t: 3.0,
            w_s: 10.0,
            w_r: 0.01,
            lambda_e: 0.1,
            alpha: 0.5,
            u_cells: 12,
            v_cells: 12,
            intra_mode: IntraMode::AsWritten,
        }
    }
}

/// Warped mesh vertex positions, `(U+1) x (V+1)` row-major, with the frame
/// dimensions the thresholds refer to.
#[derive(Debug, Clone)]
pub struct MeshVertices {
    pub rows: usize,
    pub cols: usize,
    pub frame_w: f64,
    pub frame_h: f64,
    pub positions: Vec<(f64, f64)>,
}

impl MeshVertices {
    #[inline]
    fn at(&self, i: usize, j: usize) -> (f64, f64) {
        self.positions[i * self.cols + j]
    }
}

/// Per-term objective values; `total` is the weighted composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub align_h: f64,
    pub align_t: f64,
    pub shape_intra: f64,
    pub shape_inter: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(
        align_h: f64,
        align_t: f64,
        shape_intra: f64,
        shape_inter: f64,
        reg: f64,
        cfg: &LossConfig,
    ) -> Self {
        LossBreakdown {
            align_h,
            align_t,
            shape_intra,
            shape_inter,
            reg,
            total: cfg.lambda_h * align_h
                + cfg.lambda_t * align_t
                + cfg.w_s * (shape_intra + shape_inter)
                + cfg.w_r * reg,
        }
    }
}

/// Masked L1 between two backward-warped views: warps both images with their
/// flows, multiplies the pointwise difference by the overlap of the warped
/// validity masks, and averages over every pixel and channel of the frame.
/// Optionally produces the per-pixel gradient with respect to both flows.
fn masked_l1(
    i_ref: &Image,
    i_tgt: &Image,
    flow_ref: &FlowField,
    flow_tgt: &FlowField,
    want_grad: bool,
) -> (f64, Option<[Vec<f64>; 4]>) {
    crate::init_thread_pool();
    let (h, w) = (flow_ref.height, flow_ref.width);
    let ch = i_ref.channels;
    let inv_norm = 1.0 / (h * w * ch) as f64;
    let n = h * w;
    let mut grads = if want_grad {
        Some([
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        ])
    } else {
        None
    };

    let row_sums: Vec<f64> = {
        let slices: Vec<Option<(&mut [f64], &mut [f64], &mut [f64], &mut [f64])>> =
            match grads.as_mut() {
                Some([gxr, gyr, gxt, gyt]) => {
                    let it = gxr
                        .chunks_mut(w)
                        .zip(gyr.chunks_mut(w))
                        .zip(gxt.chunks_mut(w))
                        .zip(gyt.chunks_mut(w))
                        .map(|(((a, b), c), d)| Some((a, b, c, d)));
                    it.collect()
                }
                None => (0..h).map(|_| None).collect(),
            };
        slices
            .into_par_iter()
            .enumerate()
            .map(|(y, row_grad)| {
                let mut acc = 0.0;
                let mut row_grad = row_grad;
                for x in 0..w {
                    let i = y * w + x;
                    let px = x as f64 + flow_ref.dx[i];
                    let py = y as f64 + flow_ref.dy[i];
                    let qx = x as f64 + flow_tgt.dx[i];
                    let qy = y as f64 + flow_tgt.dy[i];
                    let (a, a_in) = bilinear_sample(i_ref, px, py);
                    let (b, b_in) = bilinear_sample(i_tgt, qx, qy);
                    if !(a_in && b_in) {
                        continue;
                    }
                    let mut signs = [0.0; 3];
                    for c in 0..ch {
                        let d = a[c] - b[c];
                        acc += d.abs();
                        signs[c] = if d > 0.0 {
                            1.0
                        } else if d < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                    if let Some((gxr, gyr, gxt, gyt)) = row_grad.as_mut() {
                        let (ga_x, ga_y) = bilinear_sample_grad(i_ref, px, py);
                        let (gb_x, gb_y) = bilinear_sample_grad(i_tgt, qx, qy);
                        let (mut sx_r, mut sy_r, mut sx_t, mut sy_t) = (0.0, 0.0, 0.0, 0.0);
                        for c in 0..ch {
                            sx_r += signs[c] * ga_x[c];
                            sy_r += signs[c] * ga_y[c];
                            sx_t -= signs[c] * gb_x[c];
                            sy_t -= signs[c] * gb_y[c];
                        }
                        gxr[x] = sx_r * inv_norm;
                        gyr[x] = sy_r * inv_norm;
                        gxt[x] = sx_t * inv_norm;
                        gyt[x] = sy_t * inv_norm;
                    }
                }
                acc
            })
            .collect()
    };
    (pairwise_sum(&row_sums) * inv_norm, grads)
}

/// Alignment terms `(align_H, align_T)` for the two warp stages.
pub fn alignment_loss(
    i_ref: &Image,
    i_tgt: &Image,
    flow_h_ref: &FlowField,
    flow_h_tgt: &FlowField,
    flow_t_ref: &FlowField,
    flow_t_tgt: &FlowField,
) -> Result<(f64, f64)> {
    for f in [flow_h_tgt, flow_t_ref, flow_t_tgt] {
        if f.height != flow_h_ref.height || f.width != flow_h_ref.width {
            return Err(Error::dims(
                "alignment flows",
                (flow_h_ref.height, flow_h_ref.width),
                (f.height, f.width),
            ));
        }
    }
    let (align_h, _) = masked_l1(i_ref, i_tgt, flow_h_ref, flow_h_tgt, false);
    let (align_t, _) = masked_l1(i_ref, i_tgt, flow_t_ref, flow_t_tgt, false);
    Ok((align_h, align_t))
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Intra-grid shape term: mean ReLU penalty of horizontal edge extents
/// against `alpha W / V` and vertical extents against `alpha H / U`.
pub fn intra_grid_loss(mesh: &MeshVertices, cfg: &LossConfig) -> f64 {
    let (rows, cols) = (mesh.rows, mesh.cols);
    let (u, v) = (rows - 1, cols - 1);
    let thr_h = cfg.alpha * mesh.frame_w / v as f64;
    let thr_v = cfg.alpha * mesh.frame_h / u as f64;
    let mut sum_h = 0.0;
    for i in 0..rows {
        for j in 0..v {
            let ex = (mesh.at(i, j + 1).0 - mesh.at(i, j).0).abs();
            sum_h += match cfg.intra_mode {
                IntraMode::AsWritten => relu(ex - thr_h),
                IntraMode::Prose => relu(thr_h - ex),
            };
        }
    }
    let mut sum_v = 0.0;
    for i in 0..u {
        for j in 0..cols {
            let ey = (mesh.at(i + 1, j).1 - mesh.at(i, j).1).abs();
            sum_v += match cfg.intra_mode {
                IntraMode::AsWritten => relu(ey - thr_v),
                IntraMode::Prose => relu(thr_v - ey),
            };
        }
    }
    sum_h / (rows * v) as f64 + sum_v / (u * cols) as f64
}

/// Gradient of [`intra_grid_loss`] with respect to the vertex positions.
pub fn intra_grid_grad(mesh: &MeshVertices, cfg: &LossConfig) -> Vec<(f64, f64)> {
    let (rows, cols) = (mesh.rows, mesh.cols);
    let (u, v) = (rows - 1, cols - 1);
    let thr_h = cfg.alpha * mesh.frame_w / v as f64;
    let thr_v = cfg.alpha * mesh.frame_h / u as f64;
    let mut grad = vec![(0.0, 0.0); rows * cols];
    let norm_h = 1.0 / (rows * v) as f64;
    for i in 0..rows {
        for j in 0..v {
            let ex = mesh.at(i, j + 1).0 - mesh.at(i, j).0;
            let g = match cfg.intra_mode {
                IntraMode::AsWritten if ex.abs() > thr_h => ex.signum() * norm_h,
                IntraMode::Prose if ex.abs() < thr_h => -ex.signum() * norm_h,
                _ => 0.0,
            };
            grad[i * cols + j + 1].0 += g;
            grad[i * cols + j].0 -= g;
        }
    }
    let norm_v = 1.0 / (u * cols) as f64;
    for i in 0..u {
        for j in 0..cols {
            let ey = mesh.at(i + 1, j).1 - mesh.at(i, j).1;
            let g = match cfg.intra_mode {
                IntraMode::AsWritten if ey.abs() > thr_v => ey.signum() * norm_v,
                IntraMode::Prose if ey.abs() < thr_v => -ey.signum() * norm_v,
                _ => 0.0,
            };
            grad[(i + 1) * cols + j].1 += g;
            grad[i * cols + j].1 -= g;
        }
    }
    grad
}

/// Angular deviation `1 - cos(e1, e2)`; zero-length edges contribute zero.
pub(crate) fn edge_angle_error(e1: (f64, f64), e2: (f64, f64)) -> f64 {
    let n1 = (e1.0 * e1.0 + e1.1 * e1.1).sqrt();
    let n2 = (e2.0 * e2.0 + e2.1 * e2.1).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return 0.0;
    }
    1.0 - (e1.0 * e2.0 + e1.1 * e2.1) / (n1 * n2)
}

/// Inter-grid shape term: quad-aggregated angular deviation of successive
/// horizontal and vertical edges, averaged per orientation. Returns the loss
/// and the number of zero-length edges that were skipped.
pub fn inter_grid_loss_detailed(mesh: &MeshVertices) -> (f64, usize) {
    let (rows, cols) = (mesh.rows, mesh.cols);
    let mut skipped = 0usize;
    let mut check = |e: (f64, f64)| {
        if e.0 == 0.0 && e.1 == 0.0 {
            skipped += 1;
        }
    };

    // Horizontal: epsilon at (i, j) couples edges (i, j) and (i, j+1); each
    // interior row belongs to two vertical-neighbor quads.
    let mut sum_w = 0.0;
    if cols >= 3 && rows >= 2 {
        for i in 0..rows {
            let row_weight = if i == 0 || i == rows - 1 { 1.0 } else { 2.0 };
            for j in 0..cols - 2 {
                let e1 = (
                    mesh.at(i, j + 1).0 - mesh.at(i, j).0,
                    mesh.at(i, j + 1).1 - mesh.at(i, j).1,
                );
                let e2 = (
                    mesh.at(i, j + 2).0 - mesh.at(i, j + 1).0,
                    mesh.at(i, j + 2).1 - mesh.at(i, j + 1).1,
                );
                check(e1);
                check(e2);
                sum_w += row_weight * edge_angle_error(e1, e2);
            }
        }
        sum_w /= ((rows - 1) * (cols - 2)) as f64;
    }

    let mut sum_h = 0.0;
    if rows >= 3 && cols >= 2 {
        for j in 0..cols {
            let col_weight = if j == 0 || j == cols - 1 { 1.0 } else { 2.0 };
            for i in 0..rows - 2 {
                let e1 = (
                    mesh.at(i + 1, j).0 - mesh.at(i, j).0,
                    mesh.at(i + 1, j).1 - mesh.at(i, j).1,
                );
                let e2 = (
                    mesh.at(i + 2, j).0 - mesh.at(i + 1, j).0,
                    mesh.at(i + 2, j).1 - mesh.at(i + 1, j).1,
                );
                check(e1);
                check(e2);
                sum_h += col_weight * edge_angle_error(e1, e2);
            }
        }
        sum_h /= ((rows - 2) * (cols - 1)) as f64;
    }
    (sum_w + sum_h, skipped)
}

/// Inter-grid shape term (loss value only).
pub fn inter_grid_loss(mesh: &MeshVertices) -> f64 {
    inter_grid_loss_detailed(mesh).0
}

fn angle_error_grad(e1: (f64, f64), e2: (f64, f64)) -> ((f64, f64), (f64, f64)) {
    let n1 = (e1.0 * e1.0 + e1.1 * e1.1).sqrt();
    let n2 = (e2.0 * e2.0 + e2.1 * e2.1).sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return ((0.0, 0.0), (0.0, 0.0));
    }
    let dot = e1.0 * e2.0 + e1.1 * e2.1;
    let inv = 1.0 / (n1 * n2);
    let g1 = (
        -e2.0 * inv + dot * e1.0 / (n1 * n1) * inv,
        -e2.1 * inv + dot * e1.1 / (n1 * n1) * inv,
    );
    let g2 = (
        -e1.0 * inv + dot * e2.0 / (n2 * n2) * inv,
        -e1.1 * inv + dot * e2.1 / (n2 * n2) * inv,
    );
    (g1, g2)
}

/// Gradient of [`inter_grid_loss`] with respect to the vertex positions.
pub fn inter_grid_grad(mesh: &MeshVertices) -> Vec<(f64, f64)> {
    let (rows, cols) = (mesh.rows, mesh.cols);
    let mut grad = vec![(0.0, 0.0); rows * cols];
    let mut add = |idx: usize, g: (f64, f64), s: f64| {
        grad[idx].0 += s * g.0;
        grad[idx].1 += s * g.1;
    };

    if cols >= 3 && rows >= 2 {
        let norm = 1.0 / ((rows - 1) * (cols - 2)) as f64;
        for i in 0..rows {
            let s = norm * if i == 0 || i == rows - 1 { 1.0 } else { 2.0 };
            for j in 0..cols - 2 {
                let a = mesh.at(i, j);
                let b = mesh.at(i, j + 1);
                let c = mesh.at(i, j + 2);
                let e1 = (b.0 - a.0, b.1 - a.1);
                let e2 = (c.0 - b.0, c.1 - b.1);
                let (g1, g2) = angle_error_grad(e1, e2);
                add(i * cols + j, (-g1.0, -g1.1), s);
                add(i * cols + j + 1, (g1.0 - g2.0, g1.1 - g2.1), s);
                add(i * cols + j + 2, g2, s);
            }
        }
    }
    if rows >= 3 && cols >= 2 {
        let norm = 1.0 / ((rows - 2) * (cols - 1)) as f64;
        for j in 0..cols {
            let s = norm * if j == 0 || j == cols - 1 { 1.0 } else { 2.0 };
            for i in 0..rows - 2 {
                let a = mesh.at(i, j);
                let b = mesh.at(i + 1, j);
                let c = mesh.at(i + 2, j);
                let e1 = (b.0 - a.0, b.1 - a.1);
                let e2 = (c.0 - b.0, c.1 - b.1);
                let (g1, g2) = angle_error_grad(e1, e2);
                add(i * cols + j, (-g1.0, -g1.1), s);
                add((i + 1) * cols + j, (g1.0 - g2.0, g1.1 - g2.1), s);
                add((i + 2) * cols + j, g2, s);
            }
        }
    }
    grad
}

/// Flow evaluation backend for the local warp stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WarpBackend {
    Vanilla,
    #[default]
    Ffd,
}

impl std::str::FromStr for WarpBackend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(WarpBackend::Vanilla),
            "ffd" => Ok(WarpBackend::Ffd),
            other => Err(Error::Parse(format!("unknown warp backend '{other}'"))),
        }
    }
}

/// Precomputed state for repeated objective evaluations on one canvas: the
/// factored TPS system shared by both views, the fixed homography-stage
/// flows and their alignment term, and cached basis rows for the gradient.
pub struct ObjectiveContext {
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub cfg: LossConfig,
    pub backend: WarpBackend,
    pub system: TpsSystem,
    pub fusion_weights: FusionWeights,
    i_ref: Image,
    i_tgt: Image,
    align_h: f64,
    reg: f64,
    grad_mesh: Meshgrid,
    grad_basis: Vec<f64>,
}

impl ObjectiveContext {
    /// `h_ref` / `h_tgt` map each view's content onto the canvas (canvas
    /// pixel `p` samples the view at `H^-1(p)`).
    pub fn new(
        i_ref: Image,
        i_tgt: Image,
        h_ref: &Homography,
        h_tgt: &Homography,
        canvas_w: usize,
        canvas_h: usize,
        fusion_weights: FusionWeights,
        cfg: LossConfig,
        backend: WarpBackend,
    ) -> Result<Self> {
        if i_ref.channels != i_tgt.channels {
            return Err(Error::dims(
                "stitch image channels",
                i_ref.channels,
                i_tgt.channels,
            ));
        }
        let system = TpsSystem::new(cfg.u_cells, cfg.v_cells, canvas_w, canvas_h)?;
        let flow_h_ref = crate::homography::homography_to_flow(h_ref, canvas_h, canvas_w)?;
        let flow_h_tgt = crate::homography::homography_to_flow(h_tgt, canvas_h, canvas_w)?;
        let (align_h, _) = masked_l1(&i_ref, &i_tgt, &flow_h_ref, &flow_h_tgt, false);
        let reg = reg_loss(&fusion_weights, cfg.lambda_e);

        // Gradient accumulation runs over the backend's evaluation mesh.
        let grad_mesh = match backend {
            WarpBackend::Ffd => compress_mesh(canvas_w, canvas_h, cfg.u_cells, cfg.v_cells),
            WarpBackend::Vanilla => Meshgrid::full(canvas_h, canvas_w),
        };
        let k3 = system.num_points() + 3;
        let mut grad_basis = vec![0.0; grad_mesh.coordinates.len() * k3];
        for (row, &(x, y)) in grad_mesh.coordinates.iter().enumerate() {
            system.basis_row(x, y, &mut grad_basis[row * k3..(row + 1) * k3]);
        }
        Ok(ObjectiveContext {
            canvas_w,
            canvas_h,
            cfg,
            backend,
            system,
            fusion_weights,
            i_ref,
            i_tgt,
            align_h,
            reg,
            grad_mesh,
            grad_basis,
        })
    }

    /// Identity-stage control offsets realizing a homography backward map:
    /// `H^-1(c) - c` at every lattice point.
    pub fn homography_offsets(&self, h: &Homography) -> Result<Vec<(f64, f64)>> {
        let inv = h.inverse()?;
        self.system
            .sources
            .iter()
            .map(|&(x, y)| inv.map_point(x, y).map(|(px, py)| (px - x, py - y)))
            .collect()
    }

    /// Dense canvas flow for one view's control offsets via the backend.
    pub fn eval_flow(&self, offsets: &[(f64, f64)]) -> Result<FlowField> {
        let sol = self.system.fit(offsets)?;
        match self.backend {
            WarpBackend::Vanilla => {
                tps_eval_flow(&sol, &Meshgrid::full(self.canvas_h, self.canvas_w))
            }
            WarpBackend::Ffd => ffd_tps_eval(&sol, self.canvas_w, self.canvas_h),
        }
    }

    fn mesh_vertices(&self, offsets: &[(f64, f64)]) -> MeshVertices {
        MeshVertices {
            rows: self.cfg.u_cells + 1,
            cols: self.cfg.v_cells + 1,
            frame_w: self.canvas_w as f64,
            frame_h: self.canvas_h as f64,
            positions: self
                .system
                .sources
                .iter()
                .zip(offsets)
                .map(|(&(sx, sy), &(ox, oy))| (sx + ox, sy + oy))
                .collect(),
        }
    }

    /// Loss breakdown at the given per-view control offsets.
    pub fn evaluate(
        &self,
        offs_ref: &[(f64, f64)],
        offs_tgt: &[(f64, f64)],
    ) -> Result<LossBreakdown> {
        let flow_ref = self.eval_flow(offs_ref)?;
        let flow_tgt = self.eval_flow(offs_tgt)?;
        let (align_t, _) = masked_l1(&self.i_ref, &self.i_tgt, &flow_ref, &flow_tgt, false);
        let mesh_ref = self.mesh_vertices(offs_ref);
        let mesh_tgt = self.mesh_vertices(offs_tgt);
        let intra = intra_grid_loss(&mesh_ref, &self.cfg) + intra_grid_loss(&mesh_tgt, &self.cfg);
        let inter = inter_grid_loss(&mesh_ref) + inter_grid_loss(&mesh_tgt);
        Ok(LossBreakdown::compose(
            self.align_h,
            align_t,
            intra,
            inter,
            self.reg,
            &self.cfg,
        ))
    }

    /// Pulls per-pixel flow gradients back to control-offset space through
    /// the backend's evaluation path.
    fn flow_grad_to_offsets(&self, gx: &[f64], gy: &[f64]) -> Result<Vec<(f64, f64)>> {
        let k3 = self.system.num_points() + 3;
        let (sx, sy) = match self.backend {
            WarpBackend::Ffd => {
                let (mx, my) = ffd_upsample_backward(
                    gx,
                    gy,
                    self.grad_mesh.rows,
                    self.grad_mesh.cols,
                    self.canvas_w,
                    self.canvas_h,
                );
                accumulate_basis(&self.grad_basis, k3, &mx, &my)
            }
            WarpBackend::Vanilla => accumulate_basis(&self.grad_basis, k3, gx, gy),
        };
        self.system.offset_gradient(&sx, &sy)
    }

    /// Loss breakdown plus the gradient of `total` with respect to both
    /// views' control offsets.
    pub fn evaluate_with_grad(
        &self,
        offs_ref: &[(f64, f64)],
        offs_tgt: &[(f64, f64)],
    ) -> Result<(LossBreakdown, Vec<(f64, f64)>, Vec<(f64, f64)>)> {
        let flow_ref = self.eval_flow(offs_ref)?;
        let flow_tgt = self.eval_flow(offs_tgt)?;
        let (align_t, grads) = masked_l1(&self.i_ref, &self.i_tgt, &flow_ref, &flow_tgt, true);
        let [gxr, gyr, gxt, gyt] = grads.expect("gradients requested");

        let mut grad_ref = self.flow_grad_to_offsets(&gxr, &gyr)?;
        let mut grad_tgt = self.flow_grad_to_offsets(&gxt, &gyt)?;
        for g in grad_ref.iter_mut().chain(grad_tgt.iter_mut()) {
            g.0 *= self.cfg.lambda_t;
            g.1 *= self.cfg.lambda_t;
        }

        let mesh_ref = self.mesh_vertices(offs_ref);
        let mesh_tgt = self.mesh_vertices(offs_tgt);
        let intra = intra_grid_loss(&mesh_ref, &self.cfg) + intra_grid_loss(&mesh_tgt, &self.cfg);
        let inter = inter_grid_loss(&mesh_ref) + inter_grid_loss(&mesh_tgt);
        for (view, mesh) in [(&mut grad_ref, &mesh_ref), (&mut grad_tgt, &mesh_tgt)] {
            let gi = intra_grid_grad(mesh, &self.cfg);
            let ge = inter_grid_grad(mesh);
            for (g, (a, b)) in view.iter_mut().zip(gi.iter().zip(&ge)) {
                g.0 += self.cfg.w_s * (a.0 + b.0);
                g.1 += self.cfg.w_s * (a.1 + b.1);
            }
        }

        let breakdown = LossBreakdown::compose(
            self.align_h,
            align_t,
            intra,
            inter,
            self.reg,
            &self.cfg,
        );
        Ok((breakdown, grad_ref, grad_tgt))
    }

    /// Warped views and the TPS-stage overlap mask at the given offsets.
    pub fn render(
        &self,
        offs_ref: &[(f64, f64)],
        offs_tgt: &[(f64, f64)],
    ) -> Result<(Image, Mask, Image, Mask)> {
        let flow_ref = self.eval_flow(offs_ref)?;
        let flow_tgt = self.eval_flow(offs_tgt)?;
        let (w_ref, m_ref) = warp_onto(&self.i_ref, &flow_ref);
        let (w_tgt, m_tgt) = warp_onto(&self.i_tgt, &flow_tgt);
        Ok((w_ref, m_ref, w_tgt, m_tgt))
    }
}

fn accumulate_basis(basis: &[f64], k3: usize, gx: &[f64], gy: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sx = vec![0.0; k3];
    let mut sy = vec![0.0; k3];
    for (row, (&gxv, &gyv)) in gx.iter().zip(gy).enumerate() {
        if gxv == 0.0 && gyv == 0.0 {
            continue;
        }
        let b = &basis[row * k3..(row + 1) * k3];
        for i in 0..k3 {
            sx[i] += gxv * b[i];
            sy[i] += gyv * b[i];
        }
    }
    (sx, sy)
}

/// One-shot objective evaluation on a canvas equal to the image frame.
#[allow(clippy::too_many_arguments)]
pub fn total_objective(
    i_ref: &Image,
    i_tgt: &Image,
    offs_ref: &[(f64, f64)],
    offs_tgt: &[(f64, f64)],
    h_ref: &Homography,
    h_tgt: &Homography,
    fusion_weights: FusionWeights,
    cfg: &LossConfig,
    backend: WarpBackend,
) -> Result<LossBreakdown> {
    let ctx = ObjectiveContext::new(
        i_ref.clone(),
        i_tgt.clone(),
        h_ref,
        h_tgt,
        i_ref.width,
        i_ref.height,
        fusion_weights,
        *cfg,
        backend,
    )?;
    ctx.evaluate(offs_ref, offs_tgt)
}

/// One-shot gradient of [`total_objective`] with respect to both views'
/// control offsets.
#[allow(clippy::too_many_arguments)]
pub fn objective_grad(
    i_ref: &Image,
    i_tgt: &Image,
    offs_ref: &[(f64, f64)],
    offs_tgt: &[(f64, f64)],
    h_ref: &Homography,
    h_tgt: &Homography,
    fusion_weights: FusionWeights,
    cfg: &LossConfig,
    backend: WarpBackend,
) -> Result<(LossBreakdown, Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    let ctx = ObjectiveContext::new(
        i_ref.clone(),
        i_tgt.clone(),
        h_ref,
        h_tgt,
        i_ref.width,
        i_ref.height,
        fusion_weights,
        *cfg,
        backend,
    )?;
    ctx.evaluate_with_grad(offs_ref, offs_tgt)
}
