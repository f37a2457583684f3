//! Thin-plate-spline warps and the FFD accelerator.
//!
//! A fitted TPS maps a uniform control lattice to `lattice + offsets` exactly
//! (kernel `U(r) = r^2 log r^2`, `U(0) = 0`, no smoothing term). The vanilla
//! evaluation path materializes the dense kernel matrix, which is the memory
//! bottleneck at high resolution; the FFD path evaluates the spline only on a
//! small meshgrid of twice the control-point resolution and restores the full
//! field with cubic B-spline blending of a 4x4 lattice neighborhood.

use crate::error::{Error, Result};
use crate::imaging::FlowField;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::time::Instant;

/// Uniform `(U+1) x (V+1)` control lattice with per-point pixel offsets.
///
/// `u_cells` counts mesh cells along the vertical axis (rows are `U+1`),
/// `v_cells` along the horizontal axis, matching the shape-loss thresholds
/// `H/U` and `W/V`.
#[derive(Debug, Clone)]
pub struct ControlGrid {
    pub u_cells: usize,
    pub v_cells: usize,
    pub frame_w: usize,
    pub frame_h: usize,
    pub source: Vec<(f64, f64)>,
    pub offsets: Vec<(f64, f64)>,
}

impl ControlGrid {
    /// Lattice spanning `[0, W-1] x [0, H-1]` with zero offsets.
    pub fn uniform(u_cells: usize, v_cells: usize, frame_w: usize, frame_h: usize) -> Self {
        assert!(u_cells >= 1 && v_cells >= 1);
        let mut source = Vec::with_capacity((u_cells + 1) * (v_cells + 1));
        for i in 0..=u_cells {
            let y = i as f64 * (frame_h - 1) as f64 / u_cells as f64;
            for j in 0..=v_cells {
                let x = j as f64 * (frame_w - 1) as f64 / v_cells as f64;
                source.push((x, y));
            }
        }
        let n = source.len();
        ControlGrid {
            u_cells,
            v_cells,
            frame_w,
            frame_h,
            source,
            offsets: vec![(0.0, 0.0); n],
        }
    }

    pub fn num_points(&self) -> usize {
        (self.u_cells + 1) * (self.v_cells + 1)
    }
}

/// Fitted TPS: radial kernel weights plus an affine part, both expressed in
/// pixel coordinates. `affine` rows are the constant, x, and y coefficients
/// of the full map (identity shows up as rows `[0,0], [1,0], [0,1]`).
#[derive(Debug, Clone)]
pub struct TpsSolution {
    pub kernel_weights: Vec<(f64, f64)>,
    pub affine: [[f64; 2]; 3],
    pub source: Vec<(f64, f64)>,
    pub u_cells: usize,
    pub v_cells: usize,
}

/// Evaluation points in output-pixel units, row-major.
#[derive(Debug, Clone)]
pub struct Meshgrid {
    pub rows: usize,
    pub cols: usize,
    pub coordinates: Vec<(f64, f64)>,
}

impl Meshgrid {
    /// One coordinate per output pixel of an `H x W` frame.
    pub fn full(frame_h: usize, frame_w: usize) -> Self {
        let mut coordinates = Vec::with_capacity(frame_h * frame_w);
        for y in 0..frame_h {
            for x in 0..frame_w {
                coordinates.push((x as f64, y as f64));
            }
        }
        Meshgrid {
            rows: frame_h,
            cols: frame_w,
            coordinates,
        }
    }
}

/// The four cubic B-spline basis values at a local cell parameter.
#[derive(Debug, Clone, Copy)]
pub struct BsplineWeights {
    pub t: f64,
    pub n: [f64; 4],
}

#[inline]
fn bspline_values(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0,
        (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0,
        t3 / 6.0,
    ]
}

/// Cubic B-spline basis `[N0..N3]` for a local parameter `t` in `[0, 1)`.
pub fn bspline_basis(t: f64) -> Result<BsplineWeights> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::OutOfRange(format!(
            "B-spline parameter {t} outside [0, 1)"
        )));
    }
    Ok(BsplineWeights {
        t,
        n: bspline_values(t),
    })
}

#[inline]
fn tps_kernel(r2: f64) -> f64 {
    if r2 > 0.0 {
        r2 * r2.ln()
    } else {
        0.0
    }
}

/// Factored TPS interpolation system for a fixed control lattice.
///
/// The linear system is assembled and solved in coordinates scaled by the
/// frame size, which keeps it well conditioned; fitted coefficients are
/// converted back to pixel coordinates (exact up to the affine part because
/// the kernel side conditions absorb the log-scale cross term).
pub struct TpsSystem {
    pub sources: Vec<(f64, f64)>,
    pub u_cells: usize,
    pub v_cells: usize,
    pub frame_w: usize,
    pub frame_h: usize,
    scale: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl TpsSystem {
    pub fn new(u_cells: usize, v_cells: usize, frame_w: usize, frame_h: usize) -> Result<Self> {
        Self::from_grid_geometry(ControlGrid::uniform(u_cells, v_cells, frame_w, frame_h))
    }

    pub fn from_grid_geometry(grid: ControlGrid) -> Result<Self> {
        let k = grid.source.len();
        let scale = ((grid.frame_w - 1).max(grid.frame_h - 1).max(1)) as f64;
        let mut m = DMatrix::<f64>::zeros(k + 3, k + 3);
        for i in 0..k {
            let (xi, yi) = grid.source[i];
            for j in 0..i {
                let (xj, yj) = grid.source[j];
                let r2 = ((xi - xj) / scale).powi(2) + ((yi - yj) / scale).powi(2);
                if r2 == 0.0 {
                    return Err(Error::Singular(format!(
                        "coincident control points {i} and {j}"
                    )));
                }
                let v = tps_kernel(r2);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, k)] = 1.0;
            m[(i, k + 1)] = xi / scale;
            m[(i, k + 2)] = yi / scale;
            m[(k, i)] = 1.0;
            m[(k + 1, i)] = xi / scale;
            m[(k + 2, i)] = yi / scale;
        }
        let lu = m.lu();
        Ok(TpsSystem {
            sources: grid.source,
            u_cells: grid.u_cells,
            v_cells: grid.v_cells,
            frame_w: grid.frame_w,
            frame_h: grid.frame_h,
            scale,
            lu,
        })
    }

    pub fn num_points(&self) -> usize {
        self.sources.len()
    }

    /// Solves the interpolation problem for one offset field.
    pub fn fit(&self, offsets: &[(f64, f64)]) -> Result<TpsSolution> {
        let k = self.sources.len();
        if offsets.len() != k {
            return Err(Error::dims("tps_fit offsets", k, offsets.len()));
        }
        let s = self.scale;
        let mut rhs_x = DVector::<f64>::zeros(k + 3);
        let mut rhs_y = DVector::<f64>::zeros(k + 3);
        for i in 0..k {
            rhs_x[i] = offsets[i].0 / s;
            rhs_y[i] = offsets[i].1 / s;
        }
        let sol_x = self
            .lu
            .solve(&rhs_x)
            .ok_or_else(|| Error::Singular("TPS system is singular".into()))?;
        let sol_y = self
            .lu
            .solve(&rhs_y)
            .ok_or_else(|| Error::Singular("TPS system is singular".into()))?;

        // Convert normalized coefficients to the pixel-coordinate form:
        // w = w~ / s, and the constant picks up -(log s^2 / s) * sum w~ |c~|^2
        // per axis (the side conditions kill the other cross terms).
        let log_s2 = (s * s).ln();
        let mut kernel_weights = Vec::with_capacity(k);
        let (mut cross_x, mut cross_y) = (0.0, 0.0);
        for i in 0..k {
            let (cx, cy) = self.sources[i];
            let c2 = (cx / s).powi(2) + (cy / s).powi(2);
            cross_x += sol_x[i] * c2;
            cross_y += sol_y[i] * c2;
            kernel_weights.push((sol_x[i] / s, sol_y[i] / s));
        }
        let d0 = [
            s * sol_x[k] - s * log_s2 * cross_x,
            s * sol_y[k] - s * log_s2 * cross_y,
        ];
        let affine = [
            d0,
            [sol_x[k + 1] + 1.0, sol_y[k + 1]],
            [sol_x[k + 2], sol_y[k + 2] + 1.0],
        ];
        Ok(TpsSolution {
            kernel_weights,
            affine,
            source: self.sources.clone(),
            u_cells: self.u_cells,
            v_cells: self.v_cells,
        })
    }

    /// Pulls a flow gradient back to control-offset space: given the kernel
    /// and affine basis accumulators `sum_p g(p) * phi(p)` (normalized basis,
    /// length `K+3` per axis), returns `d loss / d offsets`.
    pub fn offset_gradient(&self, accum_x: &[f64], accum_y: &[f64]) -> Result<Vec<(f64, f64)>> {
        let k = self.sources.len();
        let gx = self
            .lu
            .solve(&DVector::from_column_slice(accum_x))
            .ok_or_else(|| Error::Singular("TPS system is singular".into()))?;
        let gy = self
            .lu
            .solve(&DVector::from_column_slice(accum_y))
            .ok_or_else(|| Error::Singular("TPS system is singular".into()))?;
        Ok((0..k).map(|i| (gx[i], gy[i])).collect())
    }

    /// Normalized kernel/affine basis row at an evaluation point, written
    /// into `out` (length `K+3`). The flow is `phi . solution` per axis with
    /// the normalized coefficients, so this row feeds [`Self::offset_gradient`].
    pub fn basis_row(&self, x: f64, y: f64, out: &mut [f64]) {
        let k = self.sources.len();
        debug_assert_eq!(out.len(), k + 3);
        let s = self.scale;
        let (xs, ys) = (x / s, y / s);
        for i in 0..k {
            let (cx, cy) = self.sources[i];
            let r2 = (xs - cx / s).powi(2) + (ys - cy / s).powi(2);
            out[i] = tps_kernel(r2);
        }
        out[k] = 1.0;
        out[k + 1] = xs;
        out[k + 2] = ys;
    }
}

/// Exact interpolating TPS through `source -> source + offsets`.
pub fn tps_fit(grid: &ControlGrid) -> Result<TpsSolution> {
    TpsSystem::from_grid_geometry(grid.clone())?.fit(&grid.offsets)
}

/// Evaluation statistics: the largest buffer a path explicitly allocates
/// beyond its output, used by the benchmark as a deterministic memory proxy.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalStats {
    pub max_intermediate_bytes: usize,
}

/// Vanilla TPS evaluation over a meshgrid: materializes the dense
/// `points x (K+3)` kernel matrix and applies the fitted coefficients.
pub fn tps_eval_flow(sol: &TpsSolution, mesh: &Meshgrid) -> Result<FlowField> {
    tps_eval_flow_with_stats(sol, mesh).map(|(f, _)| f)
}

/// [`tps_eval_flow`] plus intermediate-buffer accounting.
pub fn tps_eval_flow_with_stats(
    sol: &TpsSolution,
    mesh: &Meshgrid,
) -> Result<(FlowField, EvalStats)> {
    crate::init_thread_pool();
    let k = sol.source.len();
    let n = mesh.coordinates.len();
    let cols = k + 3;
    let bytes = n
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Numerical("kernel matrix size overflows".into()))?;

    let mut kernel: Vec<f64> = Vec::new();
    kernel
        .try_reserve_exact(n * cols)
        .map_err(|_| Error::Numerical(format!("cannot allocate {bytes} byte kernel matrix")))?;
    kernel.resize(n * cols, 0.0f64);

    kernel
        .par_chunks_mut(cols)
        .zip(mesh.coordinates.par_iter())
        .for_each(|(row, &(x, y))| {
            for (i, &(cx, cy)) in sol.source.iter().enumerate() {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                row[i] = tps_kernel(r2);
            }
            row[k] = 1.0;
            row[k + 1] = x;
            row[k + 2] = y;
        });

    // Displacement coefficients in pixel form: kernel weights plus the
    // affine map minus identity.
    let mut coef_x = Vec::with_capacity(cols);
    let mut coef_y = Vec::with_capacity(cols);
    for &(wx, wy) in &sol.kernel_weights {
        coef_x.push(wx);
        coef_y.push(wy);
    }
    coef_x.extend_from_slice(&[sol.affine[0][0], sol.affine[1][0] - 1.0, sol.affine[2][0]]);
    coef_y.extend_from_slice(&[sol.affine[0][1], sol.affine[1][1], sol.affine[2][1] - 1.0]);

    let mut flow = FlowField::zeros(mesh.rows, mesh.cols);
    flow.dx
        .par_iter_mut()
        .zip(flow.dy.par_iter_mut())
        .enumerate()
        .for_each(|(p, (dx, dy))| {
            let row = &kernel[p * cols..(p + 1) * cols];
            let mut ax = 0.0;
            let mut ay = 0.0;
            for i in 0..cols {
                ax += row[i] * coef_x[i];
                ay += row[i] * coef_y[i];
            }
            *dx = ax;
            *dy = ay;
        });

    Ok((
        flow,
        EvalStats {
            max_intermediate_bytes: bytes,
        },
    ))
}

/// Low-resolution meshgrid `M'` of twice the control-point resolution,
/// spanning the frame corner to corner.
pub fn compress_mesh(frame_w: usize, frame_h: usize, u_cells: usize, v_cells: usize) -> Meshgrid {
    let rows = 2 * (u_cells + 1);
    let cols = 2 * (v_cells + 1);
    let mut coordinates = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let y = i as f64 * (frame_h - 1) as f64 / (rows - 1) as f64;
        for j in 0..cols {
            let x = j as f64 * (frame_w - 1) as f64 / (cols - 1) as f64;
            coordinates.push((x, y));
        }
    }
    Meshgrid {
        rows,
        cols,
        coordinates,
    }
}

/// Per-axis cell lookup for the FFD restore step: knot cell index and basis
/// values for every output coordinate along one axis.
fn axis_cells(out_len: usize, knots: usize, span: f64) -> Vec<(usize, [f64; 4])> {
    let spacing = span / (knots - 1) as f64;
    (0..out_len)
        .map(|o| {
            let u = o as f64 / spacing;
            let mut cell = u.floor();
            if cell > (knots - 2) as f64 {
                cell = (knots - 2) as f64;
            }
            let t = u - cell;
            (cell as usize, bspline_values(t))
        })
        .collect()
}

/// Pads a sparse lattice plane by one ring of linearly extrapolated values,
/// which keeps both constant and linear fields exact under the B-spline
/// blend (plain edge replication would bend linear fields near the border).
fn pad_lattice(plane: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let pr = rows + 2;
    let pc = cols + 2;
    let mut out = vec![0.0; pr * pc];
    for r in 0..rows {
        for c in 0..cols {
            out[(r + 1) * pc + (c + 1)] = plane[r * cols + c];
        }
    }
    for r in 1..=rows {
        out[r * pc] = 2.0 * out[r * pc + 1] - out[r * pc + 2];
        out[r * pc + pc - 1] = 2.0 * out[r * pc + pc - 2] - out[r * pc + pc - 3];
    }
    for c in 0..pc {
        out[c] = 2.0 * out[pc + c] - out[2 * pc + c];
        out[(pr - 1) * pc + c] = 2.0 * out[(pr - 2) * pc + c] - out[(pr - 3) * pc + c];
    }
    out
}

/// Restores a dense flow from a sparse lattice flow via separable cubic
/// B-spline blending of the 4x4 neighborhood around each pixel.
pub fn ffd_upsample(sparse: &FlowField, frame_w: usize, frame_h: usize) -> Result<FlowField> {
    crate::init_thread_pool();
    let (rows, cols) = (sparse.height, sparse.width);
    if rows < 4 || cols < 4 {
        return Err(Error::InsufficientData {
            what: "sparse lattice knots per axis",
            needed: 4,
            got: rows.min(cols),
        });
    }
    let pc = cols + 2;
    let pad_dx = pad_lattice(&sparse.dx, rows, cols);
    let pad_dy = pad_lattice(&sparse.dy, rows, cols);
    let col_cells = axis_cells(frame_w, cols, (frame_w - 1) as f64);
    let row_cells = axis_cells(frame_h, rows, (frame_h - 1) as f64);

    let mut flow = FlowField::zeros(frame_h, frame_w);
    flow.dx
        .par_chunks_mut(frame_w)
        .zip(flow.dy.par_chunks_mut(frame_w))
        .enumerate()
        .for_each(|(y, (dxr, dyr))| {
            let (rc, ny) = row_cells[y];
            for x in 0..frame_w {
                let (cc, nx) = col_cells[x];
                let mut ax = 0.0;
                let mut ay = 0.0;
                for (b, wy) in ny.iter().enumerate() {
                    // Padded row index: lattice row rc + b - 1 sits at rc + b.
                    let base = (rc + b) * pc + cc;
                    for (a, wx) in nx.iter().enumerate() {
                        let w = wx * wy;
                        ax += w * pad_dx[base + a];
                        ay += w * pad_dy[base + a];
                    }
                }
                dxr[x] = ax;
                dyr[x] = ay;
            }
        });
    Ok(flow)
}

/// Compress-then-restore TPS evaluation: evaluate on `M'` and upsample.
pub fn ffd_tps_eval(sol: &TpsSolution, frame_w: usize, frame_h: usize) -> Result<FlowField> {
    ffd_tps_eval_with_stats(sol, frame_w, frame_h).map(|(f, _)| f)
}

/// [`ffd_tps_eval`] plus intermediate-buffer accounting (the dominant
/// intermediate is the sparse kernel matrix, `O(dim M')`).
pub fn ffd_tps_eval_with_stats(
    sol: &TpsSolution,
    frame_w: usize,
    frame_h: usize,
) -> Result<(FlowField, EvalStats)> {
    let mesh = compress_mesh(frame_w, frame_h, sol.u_cells, sol.v_cells);
    let (sparse, stats) = tps_eval_flow_with_stats(sol, &mesh)?;
    let sparse_bytes = 2 * sparse.dx.len() * 8;
    let padded_bytes = 2 * (mesh.rows + 2) * (mesh.cols + 2) * 8;
    let dense = ffd_upsample(&sparse, frame_w, frame_h)?;
    Ok((
        dense,
        EvalStats {
            max_intermediate_bytes: stats
                .max_intermediate_bytes
                .max(sparse_bytes)
                .max(padded_bytes),
        },
    ))
}

/// Adjoint of [`ffd_upsample`]: scatters a dense flow gradient back onto the
/// sparse lattice, folding the extrapolated padding ring into its sources.
pub fn ffd_upsample_backward(
    grad_dense_x: &[f64],
    grad_dense_y: &[f64],
    rows: usize,
    cols: usize,
    frame_w: usize,
    frame_h: usize,
) -> (Vec<f64>, Vec<f64>) {
    let pr = rows + 2;
    let pc = cols + 2;
    let mut pad_x = vec![0.0; pr * pc];
    let mut pad_y = vec![0.0; pr * pc];
    let col_cells = axis_cells(frame_w, cols, (frame_w - 1) as f64);
    let row_cells = axis_cells(frame_h, rows, (frame_h - 1) as f64);
    for y in 0..frame_h {
        let (rc, ny) = row_cells[y];
        for x in 0..frame_w {
            let gx = grad_dense_x[y * frame_w + x];
            let gy = grad_dense_y[y * frame_w + x];
            if gx == 0.0 && gy == 0.0 {
                continue;
            }
            let (cc, nx) = col_cells[x];
            for (b, wy) in ny.iter().enumerate() {
                let base = (rc + b) * pc + cc;
                for (a, wx) in nx.iter().enumerate() {
                    let w = wx * wy;
                    pad_x[base + a] += w * gx;
                    pad_y[base + a] += w * gy;
                }
            }
        }
    }
    // Fold the padding ring: pad row 0 reads 2*row0 - row1, etc.
    let fold = |pad: &mut Vec<f64>| {
        for c in 0..pc {
            let top = pad[c];
            pad[pc + c] += 2.0 * top;
            pad[2 * pc + c] -= top;
            pad[c] = 0.0;
            let bot = pad[(pr - 1) * pc + c];
            pad[(pr - 2) * pc + c] += 2.0 * bot;
            pad[(pr - 3) * pc + c] -= bot;
            pad[(pr - 1) * pc + c] = 0.0;
        }
        for r in 1..=rows {
            let left = pad[r * pc];
            pad[r * pc + 1] += 2.0 * left;
            pad[r * pc + 2] -= left;
            pad[r * pc] = 0.0;
            let right = pad[r * pc + pc - 1];
            pad[r * pc + pc - 2] += 2.0 * right;
            pad[r * pc + pc - 3] -= right;
            pad[r * pc + pc - 1] = 0.0;
        }
    };
    fold(&mut pad_x);
    fold(&mut pad_y);
    let mut gx = vec![0.0; rows * cols];
    let mut gy = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            gx[r * cols + c] = pad_x[(r + 1) * pc + (c + 1)];
            gy[r * cols + c] = pad_y[(r + 1) * pc + (c + 1)];
        }
    }
    (gx, gy)
}

/// Smooth, seeded random control offsets: a few low-frequency sinusoids per
/// component plus a constant drift, rescaled so no offset exceeds
/// `amplitude`. Mirrors the smooth residual fields the warp model produces.
pub fn smooth_random_offsets(
    u_cells: usize,
    v_cells: usize,
    amplitude: f64,
    rng: &mut impl rand::Rng,
) -> Vec<(f64, f64)> {
    let tau = std::f64::consts::TAU;
    let n = (u_cells + 1) * (v_cells + 1);
    let mut components = Vec::new();
    for _ in 0..2 {
        // (freq_j, freq_i, phase, weight) for dx then dy.
        components.push([
            rng.gen_range(0.15..0.6),
            rng.gen_range(0.15..0.6),
            rng.gen_range(0.0..tau),
            rng.gen_range(0.4..1.0),
            rng.gen_range(0.15..0.6),
            rng.gen_range(0.15..0.6),
            rng.gen_range(0.0..tau),
            rng.gen_range(0.4..1.0),
        ]);
    }
    let drift = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
    let mut offsets = Vec::with_capacity(n);
    let mut max_abs = 0.0f64;
    for i in 0..=u_cells {
        for j in 0..=v_cells {
            let (fi, fj) = (i as f64 / u_cells as f64, j as f64 / v_cells as f64);
            let mut dx = drift.0;
            let mut dy = drift.1;
            for comp in &components {
                dx += comp[3] * (tau * (comp[0] * fj + comp[1] * fi) + comp[2]).sin();
                dy += comp[7] * (tau * (comp[4] * fj + comp[5] * fi) + comp[6]).sin();
            }
            max_abs = max_abs.max(dx.abs()).max(dy.abs());
            offsets.push((dx, dy));
        }
    }
    let scale = if max_abs > 0.0 { amplitude / max_abs } else { 0.0 };
    for o in &mut offsets {
        o.0 *= scale;
        o.1 *= scale;
    }
    offsets
}

/// One benchmark measurement.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub height: usize,
    pub width: usize,
    pub method: String,
    pub median_ms: Option<f64>,
    pub max_intermediate_bytes: Option<usize>,
    pub mean_flow_dev_px: Option<f64>,
    pub error: Option<String>,
}

/// Benchmark report; serializes as CSV with the fixed header.
#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("resolution,method,median_ms,max_intermediate_bytes,mean_flow_dev_px\n");
        for r in &self.rows {
            let fmt_f = |v: &Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
            let fmt_u = |v: &Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
            out.push_str(&format!(
                "{}x{},{},{},{},{}\n",
                r.height,
                r.width,
                r.method,
                fmt_f(&r.median_ms),
                fmt_u(&r.max_intermediate_bytes),
                fmt_f(&r.mean_flow_dev_px),
            ));
        }
        out
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn find(&self, height: usize, width: usize, method: &str) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.height == height && r.width == width && r.method == method)
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

/// Times vanilla vs FFD evaluation per resolution (median of `repeats`),
/// single-threaded and multi-threaded, and records each path's largest
/// intermediate buffer plus the FFD-vs-vanilla mean flow deviation.
pub fn bench_tps(
    resolutions: &[(usize, usize)],
    u_cells: usize,
    v_cells: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchReport> {
    use rand::SeedableRng;
    crate::init_thread_pool();
    let repeats = repeats.max(1);
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot build bench pool: {e}")))?;
    let mut report = BenchReport::default();

    for &(height, width) in resolutions {
        if height == 0 || width == 0 {
            return Err(Error::OutOfRange(format!(
                "benchmark resolution {height}x{width} must be positive"
            )));
        }
        let system = TpsSystem::new(u_cells, v_cells, width, height)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let diag = ((width * width + height * height) as f64).sqrt();
        let offsets = smooth_random_offsets(u_cells, v_cells, 0.05 * diag, &mut rng);
        let sol = system.fit(&offsets)?;
        let mesh = Meshgrid::full(height, width);

        for (label, threaded) in [("-st", false), ("", true)] {
            let mut vanilla_flow: Option<FlowField> = None;
            for method in ["vanilla", "ffd"] {
                let mut times = Vec::with_capacity(repeats);
                let mut outcome: Result<(FlowField, EvalStats)> =
                    Err(Error::Numerical("not run".into()));
                for _ in 0..repeats {
                    let start = Instant::now();
                    outcome = match (method, threaded) {
                        ("vanilla", true) => tps_eval_flow_with_stats(&sol, &mesh),
                        ("vanilla", false) => {
                            single.install(|| tps_eval_flow_with_stats(&sol, &mesh))
                        }
                        ("ffd", true) => ffd_tps_eval_with_stats(&sol, width, height),
                        (_, false) => {
                            single.install(|| ffd_tps_eval_with_stats(&sol, width, height))
                        }
                        _ => unreachable!(),
                    };
                    times.push(start.elapsed().as_secs_f64() * 1e3);
                    if outcome.is_err() {
                        break;
                    }
                }
                match outcome {
                    Ok((flow, stats)) => {
                        let dev = match method {
                            "vanilla" => Some(0.0),
                            _ => vanilla_flow
                                .as_ref()
                                .map(|v| mean_flow_deviation(v, &flow)),
                        };
                        report.rows.push(BenchRow {
                            height,
                            width,
                            method: format!("{method}{label}"),
                            median_ms: Some(median(&mut times)),
                            max_intermediate_bytes: Some(stats.max_intermediate_bytes),
                            mean_flow_dev_px: dev,
                            error: None,
                        });
                        if method == "vanilla" {
                            vanilla_flow = Some(flow);
                        }
                    }
                    Err(e) => report.rows.push(BenchRow {
                        height,
                        width,
                        method: format!("{method}{label}"),
                        median_ms: None,
                        max_intermediate_bytes: None,
                        mean_flow_dev_px: None,
                        error: Some(e.to_string()),
                    }),
                }
            }
        }
    }
    Ok(report)
}

/// Mean Euclidean per-pixel deviation between two flows of equal dims.
pub fn mean_flow_deviation(a: &FlowField, b: &FlowField) -> f64 {
    let n = a.dx.len();
    let mut acc = 0.0;
    for i in 0..n {
        let dx = a.dx[i] - b.dx[i];
        let dy = a.dy[i] - b.dy[i];
        acc += (dx * dx + dy * dy).sqrt();
    }
    acc / n as f64
}

/// Max Euclidean per-pixel deviation between two flows of equal dims.
pub fn max_flow_deviation(a: &FlowField, b: &FlowField) -> f64 {
    let n = a.dx.len();
    let mut m = 0.0f64;
    for i in 0..n {
        let dx = a.dx[i] - b.dx[i];
        let dy = a.dy[i] - b.dy[i];
        m = m.max((dx * dx + dy * dy).sqrt());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cox-de Boor recursion for the cardinal cubic B-spline on integer
    /// knots; independent oracle for the matrix-form basis.
    fn cox_de_boor(i: f64, p: usize, x: f64) -> f64 {
        if p == 0 {
            return if x >= i && x < i + 1.0 { 1.0 } else { 0.0 };
        }
        let left = (x - i) / p as f64 * cox_de_boor(i, p - 1, x);
        let right = (i + p as f64 + 1.0 - x) / p as f64 * cox_de_boor(i + 1.0, p - 1, x);
        left + right
    }

    fn oracle_basis(t: f64) -> [f64; 4] {
        // N_alpha(t) equals the cardinal cubic B-spline at t + 3 - alpha.
        [
            cox_de_boor(0.0, 3, t + 3.0),
            cox_de_boor(0.0, 3, t + 2.0),
            cox_de_boor(0.0, 3, t + 1.0),
            cox_de_boor(0.0, 3, t),
        ]
    }

    #[test]
    fn bspline_at_zero() {
        let w = bspline_basis(0.0).unwrap();
        assert!((w.n[0] - 1.0 / 6.0).abs() < 1e-15);
        assert!((w.n[1] - 4.0 / 6.0).abs() < 1e-15);
        assert!((w.n[2] - 1.0 / 6.0).abs() < 1e-15);
        assert!(w.n[3].abs() < 1e-15);
    }

    #[test]
    fn bspline_partition_of_unity_and_oracle() {
        for k in 0..1000 {
            let t = k as f64 / 1000.0;
            let w = bspline_basis(t).unwrap();
            let sum: f64 = w.n.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "partition of unity at t={t}");
            assert!(w.n.iter().all(|&v| v >= 0.0));
            let oracle = oracle_basis(t);
            for (a, b) in w.n.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "Cox-de Boor mismatch at t={t}");
            }
        }
    }

    #[test]
    fn bspline_rejects_out_of_range() {
        assert!(bspline_basis(1.0).is_err());
        assert!(bspline_basis(-0.1).is_err());
    }

    #[test]
    fn fit_zero_offsets_is_identity() {
        let grid = ControlGrid::uniform(4, 4, 64, 48);
        let sol = tps_fit(&grid).unwrap();
        for &(wx, wy) in &sol.kernel_weights {
            assert!(wx.abs() < 1e-12 && wy.abs() < 1e-12);
        }
        let expect = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for (row, exp) in sol.affine.iter().zip(&expect) {
            assert!((row[0] - exp[0]).abs() < 1e-10);
            assert!((row[1] - exp[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_translation_is_affine_only() {
        let mut grid = ControlGrid::uniform(3, 5, 80, 60);
        for o in &mut grid.offsets {
            *o = (2.0, 3.0);
        }
        let sol = tps_fit(&grid).unwrap();
        for &(wx, wy) in &sol.kernel_weights {
            assert!(wx.abs() < 1e-10 && wy.abs() < 1e-10);
        }
        assert!((sol.affine[0][0] - 2.0).abs() < 1e-9);
        assert!((sol.affine[0][1] - 3.0).abs() < 1e-9);
        assert!((sol.affine[1][0] - 1.0).abs() < 1e-9);
        assert!((sol.affine[2][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_interpolates_control_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut grid = ControlGrid::uniform(12, 12, 128, 96);
        for o in &mut grid.offsets {
            *o = (rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0));
        }
        let sol = tps_fit(&grid).unwrap();
        let mesh = Meshgrid {
            rows: 1,
            cols: grid.source.len(),
            coordinates: grid.source.clone(),
        };
        let flow = tps_eval_flow(&sol, &mesh).unwrap();
        for (i, &(ox, oy)) in grid.offsets.iter().enumerate() {
            assert!((flow.dx[i] - ox).abs() < 1e-6, "x interp at {i}");
            assert!((flow.dy[i] - oy).abs() < 1e-6, "y interp at {i}");
        }
    }

    #[test]
    fn fit_rejects_coincident_points() {
        let mut grid = ControlGrid::uniform(2, 2, 32, 32);
        grid.source[1] = grid.source[0];
        assert!(TpsSystem::from_grid_geometry(grid).is_err());
    }

    #[test]
    fn fit_side_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut grid = ControlGrid::uniform(12, 12, 800, 566);
        for o in &mut grid.offsets {
            *o = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        }
        let sol = tps_fit(&grid).unwrap();
        let (mut sw_x, mut sw_y) = (0.0, 0.0);
        let (mut swx_x, mut swx_y) = (0.0, 0.0);
        let (mut swy_x, mut swy_y) = (0.0, 0.0);
        for (&(wx, wy), &(cx, cy)) in sol.kernel_weights.iter().zip(&sol.source) {
            sw_x += wx;
            sw_y += wy;
            swx_x += wx * cx;
            swx_y += wy * cx;
            swy_x += wx * cy;
            swy_y += wy * cy;
        }
        for v in [sw_x, sw_y, swx_x, swx_y, swy_x, swy_y] {
            assert!(v.abs() < 1e-8, "side condition violated: {v}");
        }
    }

    #[test]
    fn eval_matches_independent_pixel_space_solve() {
        // Independent reference: assemble and solve the TPS system in raw
        // pixel coordinates with full-pivot LU, then evaluate per pixel.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (w, h) = (64, 64);
        let mut grid = ControlGrid::uniform(12, 12, w, h);
        for o in &mut grid.offsets {
            *o = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        }
        let k = grid.source.len();
        let mut m = DMatrix::<f64>::zeros(k + 3, k + 3);
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    let r2 = (grid.source[i].0 - grid.source[j].0).powi(2)
                        + (grid.source[i].1 - grid.source[j].1).powi(2);
                    m[(i, j)] = tps_kernel(r2);
                }
            }
            m[(i, k)] = 1.0;
            m[(i, k + 1)] = grid.source[i].0;
            m[(i, k + 2)] = grid.source[i].1;
            m[(k, i)] = 1.0;
            m[(k + 1, i)] = grid.source[i].0;
            m[(k + 2, i)] = grid.source[i].1;
        }
        let lu = m.full_piv_lu();
        let mut rhs_x = DVector::zeros(k + 3);
        let mut rhs_y = DVector::zeros(k + 3);
        for i in 0..k {
            rhs_x[i] = grid.offsets[i].0;
            rhs_y[i] = grid.offsets[i].1;
        }
        let cx = lu.solve(&rhs_x).unwrap();
        let cy = lu.solve(&rhs_y).unwrap();

        let sol = tps_fit(&grid).unwrap();
        let flow = tps_eval_flow(&sol, &Meshgrid::full(h, w)).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (mut ex, mut ey) = (0.0, 0.0);
                for i in 0..k {
                    let r2 = (x as f64 - grid.source[i].0).powi(2)
                        + (y as f64 - grid.source[i].1).powi(2);
                    let u = tps_kernel(r2);
                    ex += cx[i] * u;
                    ey += cy[i] * u;
                }
                ex += cx[k] + cx[k + 1] * x as f64 + cx[k + 2] * y as f64;
                ey += cy[k] + cy[k + 1] * x as f64 + cy[k + 2] * y as f64;
                let i = y * w + x;
                assert!((flow.dx[i] - ex).abs() < 1e-9, "dx mismatch at ({x},{y})");
                assert!((flow.dy[i] - ey).abs() < 1e-9, "dy mismatch at ({x},{y})");
            }
        }
    }

    #[test]
    fn eval_identity_and_translation() {
        let grid = ControlGrid::uniform(2, 2, 16, 16);
        let sol = tps_fit(&grid).unwrap();
        let flow = tps_eval_flow(&sol, &Meshgrid::full(16, 16)).unwrap();
        assert!(flow.dx.iter().all(|&v| v.abs() < 1e-9));
        assert!(flow.dy.iter().all(|&v| v.abs() < 1e-9));

        let mut grid = ControlGrid::uniform(2, 2, 16, 16);
        for o in &mut grid.offsets {
            *o = (1.5, -0.5);
        }
        let sol = tps_fit(&grid).unwrap();
        let flow = tps_eval_flow(&sol, &Meshgrid::full(16, 16)).unwrap();
        assert!(flow.dx.iter().all(|&v| (v - 1.5).abs() < 1e-9));
        assert!(flow.dy.iter().all(|&v| (v + 0.5).abs() < 1e-9));
    }

    #[test]
    fn compress_mesh_dimensions_and_corners() {
        let mesh = compress_mesh(800, 566, 12, 12);
        assert_eq!(mesh.rows, 26);
        assert_eq!(mesh.cols, 26);
        assert_eq!(mesh.coordinates[0], (0.0, 0.0));
        let last = mesh.coordinates[mesh.rows * mesh.cols - 1];
        assert!((last.0 - 799.0).abs() < 1e-12);
        assert!((last.1 - 565.0).abs() < 1e-12);

        let tiny = compress_mesh(10, 10, 1, 1);
        assert_eq!(tiny.rows, 4);
        assert_eq!(tiny.cols, 4);
    }

    #[test]
    fn compress_mesh_uniform_spacing() {
        let mesh = compress_mesh(801, 567, 12, 12);
        let dx: Vec<f64> = (1..mesh.cols)
            .map(|j| mesh.coordinates[j].0 - mesh.coordinates[j - 1].0)
            .collect();
        let dev = dx.iter().fold(0.0f64, |m, &v| m.max((v - dx[0]).abs()));
        assert!(dev < 1e-9);
    }

    #[test]
    fn ffd_reproduces_constant_and_linear() {
        let (rows, cols) = (6, 7);
        let (w, h) = (101, 67);
        let mut sparse = FlowField::zeros(rows, cols);
        for v in sparse.dx.iter_mut() {
            *v = 2.25;
        }
        for v in sparse.dy.iter_mut() {
            *v = -1.5;
        }
        let dense = ffd_upsample(&sparse, w, h).unwrap();
        assert!(dense.dx.iter().all(|&v| (v - 2.25).abs() < 1e-9));
        assert!(dense.dy.iter().all(|&v| (v + 1.5).abs() < 1e-9));

        // Linear in the knot coordinate, hence linear in output x.
        let sx = (w - 1) as f64 / (cols - 1) as f64;
        let mut sparse = FlowField::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                sparse.dx[r * cols + c] = 0.5 * (c as f64 * sx) + 3.0;
                sparse.dy[r * cols + c] = -0.25 * (c as f64 * sx);
            }
        }
        let dense = ffd_upsample(&sparse, w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                assert!(
                    (dense.dx[i] - (0.5 * x as f64 + 3.0)).abs() < 1e-9,
                    "linear dx at ({x},{y})"
                );
                assert!((dense.dy[i] + 0.25 * x as f64).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ffd_matches_naive_eq8_reference() {
        // Scalar re-implementation of the 4x4 blend over an explicitly
        // padded lattice, evaluated point by point.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (rows, cols) = (8, 9);
        let (w, h) = (73, 61);
        let mut sparse = FlowField::zeros(rows, cols);
        let offs = smooth_random_offsets(rows - 1, cols - 1, 4.0, &mut rng);
        for (i, o) in offs.iter().enumerate() {
            sparse.dx[i] = o.0;
            sparse.dy[i] = o.1;
        }
        let dense = ffd_upsample(&sparse, w, h).unwrap();

        // Reference padding: one extrapolated ring, rows first then columns.
        let pr = rows + 2;
        let pc = cols + 2;
        let mut ref_pad = vec![0.0; pr * pc];
        for r in 0..rows {
            for c in 0..cols {
                ref_pad[(r + 1) * pc + c + 1] = sparse.dx[r * cols + c];
            }
        }
        for r in 1..=rows {
            ref_pad[r * pc] = 2.0 * ref_pad[r * pc + 1] - ref_pad[r * pc + 2];
            ref_pad[r * pc + pc - 1] = 2.0 * ref_pad[r * pc + pc - 2] - ref_pad[r * pc + pc - 3];
        }
        for c in 0..pc {
            ref_pad[c] = 2.0 * ref_pad[pc + c] - ref_pad[2 * pc + c];
            ref_pad[(pr - 1) * pc + c] =
                2.0 * ref_pad[(pr - 2) * pc + c] - ref_pad[(pr - 3) * pc + c];
        }

        let sx = (w - 1) as f64 / (cols - 1) as f64;
        let sy = (h - 1) as f64 / (rows - 1) as f64;
        for y in 0..h {
            for x in 0..w {
                let u = x as f64 / sx;
                let v = y as f64 / sy;
                let uc = u.floor().min((cols - 2) as f64).max(0.0);
                let vc = v.floor().min((rows - 2) as f64).max(0.0);
                let nu = bspline_values(u - uc);
                let nv = bspline_values(v - vc);
                let mut acc = 0.0;
                for b in 0..4 {
                    for a in 0..4 {
                        // Lattice index (vc + b - 1, uc + a - 1) in padded space.
                        acc += nu[a]
                            * nv[b]
                            * ref_pad[(vc as usize + b) * pc + uc as usize + a];
                    }
                }
                let got = dense.dx[y * w + x];
                assert!(
                    (got - acc).abs() < 1e-12,
                    "4x4 blend reference mismatch at ({x},{y}): {got} vs {acc}"
                );
            }
        }
    }

    #[test]
    fn ffd_lattice_too_small_is_error() {
        let sparse = FlowField::zeros(3, 5);
        assert!(ffd_upsample(&sparse, 32, 32).is_err());
    }

    #[test]
    fn ffd_tps_parity_identity_and_translation() {
        let grid = ControlGrid::uniform(12, 12, 120, 90);
        let sol = tps_fit(&grid).unwrap();
        let dense = ffd_tps_eval(&sol, 120, 90).unwrap();
        assert!(dense.dx.iter().all(|&v| v.abs() < 1e-9));
        assert!(dense.dy.iter().all(|&v| v.abs() < 1e-9));

        let mut grid = ControlGrid::uniform(12, 12, 120, 90);
        for o in &mut grid.offsets {
            *o = (4.0, 1.0);
        }
        let sol = tps_fit(&grid).unwrap();
        let vanilla = tps_eval_flow(&sol, &Meshgrid::full(90, 120)).unwrap();
        let dense = ffd_tps_eval(&sol, 120, 90).unwrap();
        for i in 0..vanilla.dx.len() {
            assert!((vanilla.dx[i] - dense.dx[i]).abs() < 1e-9);
            assert!((vanilla.dy[i] - dense.dy[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn ffd_vs_vanilla_smooth_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let (w, h) = (200, 141);
        let diag = ((w * w + h * h) as f64).sqrt();
        let system = TpsSystem::new(12, 12, w, h).unwrap();
        let offsets = smooth_random_offsets(12, 12, 0.05 * diag, &mut rng);
        let sol = system.fit(&offsets).unwrap();
        let vanilla = tps_eval_flow(&sol, &Meshgrid::full(h, w)).unwrap();
        let ffd = ffd_tps_eval(&sol, w, h).unwrap();
        let mean = mean_flow_deviation(&vanilla, &ffd);
        let max = max_flow_deviation(&vanilla, &ffd);
        assert!(mean <= 0.5, "mean FFD deviation {mean}");
        assert!(max <= 2.0, "max FFD deviation {max}");
    }

    #[test]
    fn eval_deterministic_across_thread_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let system = TpsSystem::new(6, 6, 97, 83).unwrap();
        let offsets = smooth_random_offsets(6, 6, 5.0, &mut rng);
        let sol = system.fit(&offsets).unwrap();
        let mesh = Meshgrid::full(83, 97);
        let multi = tps_eval_flow(&sol, &mesh).unwrap();
        let single_pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let single = single_pool.install(|| tps_eval_flow(&sol, &mesh).unwrap());
        assert_eq!(multi.dx, single.dx);
        assert_eq!(multi.dy, single.dy);
        let multi_f = ffd_tps_eval(&sol, 97, 83).unwrap();
        let single_f = single_pool.install(|| ffd_tps_eval(&sol, 97, 83).unwrap());
        assert_eq!(multi_f.dx, single_f.dx);
        assert_eq!(multi_f.dy, single_f.dy);
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        // <B s, g> must equal <s, B^T g> for random s and g.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (rows, cols) = (6, 6);
        let (w, h) = (41, 37);
        let mut sparse = FlowField::zeros(rows, cols);
        for v in sparse.dx.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in sparse.dy.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let dense = ffd_upsample(&sparse, w, h).unwrap();
        let gx: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let forward: f64 = dense
            .dx
            .iter()
            .zip(&gx)
            .chain(dense.dy.iter().zip(&gy))
            .map(|(a, b)| a * b)
            .sum();
        let (bx, by) = ffd_upsample_backward(&gx, &gy, rows, cols, w, h);
        let adjoint: f64 = sparse
            .dx
            .iter()
            .zip(&bx)
            .chain(sparse.dy.iter().zip(&by))
            .map(|(a, b)| a * b)
            .sum();
        assert!(
            (forward - adjoint).abs() < 1e-8 * forward.abs().max(1.0),
            "adjoint mismatch: {forward} vs {adjoint}"
        );
    }

    #[test]
    fn bench_produces_schema_rows() {
        let report = bench_tps(&[(60, 80)], 4, 4, 2, 7).unwrap();
        assert_eq!(report.rows.len(), 4);
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "resolution,method,median_ms,max_intermediate_bytes,mean_flow_dev_px"
        );
        assert_eq!(csv.lines().count(), 5);
        for row in csv.lines().skip(1) {
            assert_eq!(row.split(',').count(), 5);
            assert!(row.starts_with("60x80,"));
        }
    }
}
