//! End-to-end pair stitching: ingest correspondences, fit the global
//! homography, decompose onto the virtual middle plane, optimize residual
//! TPS control offsets for both views against the combined objective, warp
//! through the configured backend, fuse, and measure the overlap.

use crate::amoe::FusionWeights;
use crate::error::{Error, Result};
use crate::homography::{
    decompose_middle_plane, homography_to_flow, homography_to_offsets, ransac_fit, Correspondences,
    FourPtOffsets, Homography,
};
use crate::imaging::{average_fuse, overlap_mask, warp_onto, FlowField, Image};
use crate::metrics::{metric_report, MetricReport};
use crate::npt::KeypointSet;
use crate::objective::{IntraMode, LossBreakdown, LossConfig, ObjectiveContext, WarpBackend};
use crate::tps::{ffd_tps_eval, smooth_random_offsets, tps_fit, ControlGrid};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::time::Instant;

/// Pipeline settings. The optimizer defaults to the prose reading of the
/// intra-grid term: the as-written formula penalizes every edge of an
/// undeformed mesh, which at `w_s = 10` would dominate alignment and force
/// the mesh to collapse.
#[derive(Debug, Clone)]
pub struct StitchConfig {
    pub loss: LossConfig,
    pub ransac_threshold: f64,
    pub ransac_iterations: usize,
    pub step_size: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub backend: WarpBackend,
    pub seed: u64,
    pub fusion_weights: FusionWeights,
    pub max_canvas_dim: usize,
    /// Gaussian blur sigmas for coarse-to-fine warm starts before the
    /// full-resolution descent; empty runs single-level.
    pub pyramid: Vec<f64>,
}

impl Default for StitchConfig {
    fn default() -> Self {
        StitchConfig {
            loss: LossConfig {
                intra_mode: IntraMode::Prose,
                ..LossConfig::default()
            },
            ransac_threshold: 3.0,
            ransac_iterations: 1000,
            step_size: 1.0,
            max_iterations: 500,
            tolerance: 1e-6,
            backend: WarpBackend::Ffd,
            seed: 7,
            fusion_weights: FusionWeights::uniform(),
            max_canvas_dim: 8192,
            pyramid: vec![8.0, 4.0, 2.0, 1.0],
        }
    }
}

/// Everything a stitch run produces besides the panorama itself.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub h_full: [f64; 9],
    pub h_ref: [f64; 9],
    pub h_tgt: [f64; 9],
    pub inliers: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub translation: (f64, f64),
    pub trace: Vec<LossBreakdown>,
    pub iterations: usize,
    pub converged: bool,
    pub homography_stage_metrics: MetricReport,
    pub final_metrics: MetricReport,
    pub stage_times_ms: Vec<(String, f64)>,
    pub config_echo: String,
    pub convention_notes: String,
    /// Optimized control offsets per view (not serialized; exposed so the
    /// final warp can be re-evaluated through either backend).
    pub final_offsets_ref: Vec<(f64, f64)>,
    pub final_offsets_tgt: Vec<(f64, f64)>,
}

impl RunReport {
    /// Structured-text serialization: sections of `key=value` lines plus a
    /// CSV trace block.
    pub fn to_text(&self) -> String {
        let fmt9 = |m: &[f64; 9]| {
            m.iter()
                .map(|v| format!("{v:.17e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        s.push_str("# warpforge stitch report\n");
        s.push_str(&format!("h_full={}\n", fmt9(&self.h_full)));
        s.push_str(&format!("h_ref={}\n", fmt9(&self.h_ref)));
        s.push_str(&format!("h_tgt={}\n", fmt9(&self.h_tgt)));
        s.push_str(&format!("inliers={}\n", self.inliers));
        s.push_str(&format!("canvas={}x{}\n", self.canvas_w, self.canvas_h));
        s.push_str(&format!(
            "translation={:.6},{:.6}\n",
            self.translation.0, self.translation.1
        ));
        s.push_str(&format!("iterations={}\n", self.iterations));
        s.push_str(&format!("converged={}\n", self.converged));
        s.push_str(&format!("convention_notes={}\n", self.convention_notes));
        s.push_str("[trace]\n");
        s.push_str("iter,total,align_h,align_t,shape_intra,shape_inter,reg\n");
        for (i, b) in self.trace.iter().enumerate() {
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                i, b.total, b.align_h, b.align_t, b.shape_intra, b.shape_inter, b.reg
            ));
        }
        s.push_str("[homography_stage_metrics]\n");
        s.push_str(&self.homography_stage_metrics.to_key_values());
        s.push_str("[final_metrics]\n");
        s.push_str(&self.final_metrics.to_key_values());
        s.push_str("[timings]\n");
        for (stage, ms) in &self.stage_times_ms {
            s.push_str(&format!("{stage}_ms={ms:.3}\n"));
        }
        s.push_str("[config]\n");
        s.push_str(&self.config_echo);
        s
    }

    /// [`RunReport::to_text`] minus the wall-clock timing section; identical
    /// runs with the same seed and config produce identical bytes.
    pub fn to_text_deterministic(&self) -> String {
        let text = self.to_text();
        match (text.find("[timings]"), text.find("[config]")) {
            (Some(a), Some(b)) => format!("{}{}", &text[..a], &text[b..]),
            _ => text,
        }
    }
}

fn config_echo(cfg: &StitchConfig) -> String {
    format!(
        "lambda_h={}\nlambda_t={}\nw_s={}\nw_r={}\nlambda_e={}\nalpha={}\nu_cells={}\nv_cells={}\nintra_mode={:?}\nransac_threshold={}\nransac_iterations={}\nstep_size={}\nmax_iterations={}\ntolerance={}\nbackend={:?}\nseed={}\npyramid={:?}\n",
        cfg.loss.lambda_h,
        cfg.loss.lambda_t,
        cfg.loss.w_s,
        cfg.loss.w_r,
        cfg.loss.lambda_e,
        cfg.loss.alpha,
        cfg.loss.u_cells,
        cfg.loss.v_cells,
        cfg.loss.intra_mode,
        cfg.ransac_threshold,
        cfg.ransac_iterations,
        cfg.step_size,
        cfg.max_iterations,
        cfg.tolerance,
        cfg.backend,
        cfg.seed,
        cfg.pyramid,
    )
}

/// Parses the correspondence record file: one `key=value` per line with JSON
/// array values. Required keys `ref_points` and `tgt_points`; optional
/// `ref_desc`, `tgt_desc`, and `matches` (index pairs). Without `matches`,
/// equally long point arrays pair up index-aligned.
pub fn ingest_matches(
    path: impl AsRef<Path>,
) -> Result<(KeypointSet, KeypointSet, Correspondences)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_matches(&text)
}

/// [`ingest_matches`] on an in-memory string.
pub fn parse_matches(text: &str) -> Result<(KeypointSet, KeypointSet, Correspondences)> {
    let mut ref_points: Option<Vec<(f64, f64)>> = None;
    let mut tgt_points: Option<Vec<(f64, f64)>> = None;
    let mut ref_desc: Vec<Vec<f64>> = Vec::new();
    let mut tgt_desc: Vec<Vec<f64>> = Vec::new();
    let mut matches: Option<Vec<(usize, usize)>> = None;

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse(format!(
                "line {}: expected key=value, got '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim();
        let json: serde_json::Value = serde_json::from_str(value.trim())
            .map_err(|e| Error::Parse(format!("field '{key}': {e}")))?;
        match key {
            "ref_points" | "tgt_points" => {
                let pts = parse_points(key, &json)?;
                if key == "ref_points" {
                    ref_points = Some(pts);
                } else {
                    tgt_points = Some(pts);
                }
            }
            "ref_desc" | "tgt_desc" => {
                let desc = parse_descriptors(key, &json)?;
                if key == "ref_desc" {
                    ref_desc = desc;
                } else {
                    tgt_desc = desc;
                }
            }
            "matches" => {
                let arr = json
                    .as_array()
                    .ok_or_else(|| Error::Parse("field 'matches': expected array".into()))?;
                let mut out = Vec::with_capacity(arr.len());
                for pair in arr {
                    let p = pair.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                        Error::Parse("field 'matches': expected [i, j] pairs".into())
                    })?;
                    let i = p[0]
                        .as_u64()
                        .ok_or_else(|| Error::Parse("field 'matches': non-integer index".into()))?;
                    let j = p[1]
                        .as_u64()
                        .ok_or_else(|| Error::Parse("field 'matches': non-integer index".into()))?;
                    out.push((i as usize, j as usize));
                }
                matches = Some(out);
            }
            other => {
                return Err(Error::Parse(format!("unknown field '{other}'")));
            }
        }
    }

    let ref_points = ref_points.ok_or_else(|| Error::Parse("missing field 'ref_points'".into()))?;
    let tgt_points = tgt_points.ok_or_else(|| Error::Parse("missing field 'tgt_points'".into()))?;
    if !ref_desc.is_empty() && ref_desc.len() != ref_points.len() {
        return Err(Error::Parse(format!(
            "field 'ref_desc': {} descriptors for {} points",
            ref_desc.len(),
            ref_points.len()
        )));
    }
    if !tgt_desc.is_empty() && tgt_desc.len() != tgt_points.len() {
        return Err(Error::Parse(format!(
            "field 'tgt_desc': {} descriptors for {} points",
            tgt_desc.len(),
            tgt_points.len()
        )));
    }

    let pairs: Vec<((f64, f64), (f64, f64))> = match &matches {
        Some(idx) => {
            let mut out = Vec::with_capacity(idx.len());
            for &(i, j) in idx {
                if i >= ref_points.len() || j >= tgt_points.len() {
                    return Err(Error::Parse(format!(
                        "field 'matches': index pair ({i}, {j}) out of range"
                    )));
                }
                out.push((ref_points[i], tgt_points[j]));
            }
            out
        }
        None => {
            if ref_points.len() != tgt_points.len() {
                return Err(Error::Parse(format!(
                    "no 'matches' field and point counts differ ({} vs {})",
                    ref_points.len(),
                    tgt_points.len()
                )));
            }
            ref_points
                .iter()
                .zip(&tgt_points)
                .map(|(&a, &b)| (a, b))
                .collect()
        }
    };
    if pairs.len() < 4 {
        return Err(Error::InsufficientData {
            what: "correspondences",
            needed: 4,
            got: pairs.len(),
        });
    }

    let frame = |pts: &[(f64, f64)]| -> (usize, usize) {
        let w = pts.iter().fold(0.0f64, |m, p| m.max(p.0)).ceil() as usize + 1;
        let h = pts.iter().fold(0.0f64, |m, p| m.max(p.1)).ceil() as usize + 1;
        (w, h)
    };
    let (rw, rh) = frame(&ref_points);
    let (tw, th) = frame(&tgt_points);
    let ref_kp = KeypointSet {
        points: ref_points,
        descriptors: ref_desc,
        frame_w: rw,
        frame_h: rh,
    };
    let tgt_kp = KeypointSet {
        points: tgt_points,
        descriptors: tgt_desc,
        frame_w: tw,
        frame_h: th,
    };
    ref_kp.validate()?;
    tgt_kp.validate()?;
    Ok((ref_kp, tgt_kp, Correspondences { pairs }))
}

fn parse_points(key: &str, json: &serde_json::Value) -> Result<Vec<(f64, f64)>> {
    let arr = json
        .as_array()
        .ok_or_else(|| Error::Parse(format!("field '{key}': expected array of [x, y]")))?;
    let mut out = Vec::with_capacity(arr.len());
    for p in arr {
        let p = p
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| Error::Parse(format!("field '{key}': expected [x, y] entries")))?;
        let x = p[0]
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("field '{key}': non-numeric coordinate")))?;
        let y = p[1]
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("field '{key}': non-numeric coordinate")))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Parse(format!(
                "field '{key}': non-finite coordinate"
            )));
        }
        out.push((x, y));
    }
    Ok(out)
}

fn parse_descriptors(key: &str, json: &serde_json::Value) -> Result<Vec<Vec<f64>>> {
    let arr = json
        .as_array()
        .ok_or_else(|| Error::Parse(format!("field '{key}': expected array of arrays")))?;
    let mut out = Vec::with_capacity(arr.len());
    let mut dim: Option<usize> = None;
    for d in arr {
        let d = d
            .as_array()
            .ok_or_else(|| Error::Parse(format!("field '{key}': expected array of arrays")))?;
        let v: Option<Vec<f64>> = d.iter().map(|x| x.as_f64()).collect();
        let v = v.ok_or_else(|| Error::Parse(format!("field '{key}': non-numeric entry")))?;
        if let Some(dim) = dim {
            if v.len() != dim {
                return Err(Error::Parse(format!(
                    "field '{key}': descriptor length {} != {dim}",
                    v.len()
                )));
            }
        } else {
            dim = Some(v.len());
        }
        out.push(v);
    }
    Ok(out)
}

/// A generated test pair with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub i_ref: Image,
    pub i_tgt: Image,
    /// Backward flow that produced `i_tgt` from the base (WFF1-ready).
    pub flow: FlowField,
    /// The homography component, as a target-to-reference mapping.
    pub h_gen: Homography,
    pub ref_kp: KeypointSet,
    pub tgt_kp: KeypointSet,
    pub matches: Correspondences,
}

/// Warps `base` by a seeded random 4-pt homography composed with a seeded
/// random 13x13 TPS residual. The backward generator map is
/// `G(p) = H(p) + f_T(p)` with `H` mapping target to reference coordinates,
/// so the emitted matches `(G(p), p)` are exact by construction.
pub fn generate_synthetic_pair(
    base: &Image,
    seed: u64,
    homography_magnitude: f64,
    tps_magnitude: f64,
) -> Result<SyntheticPair> {
    let (h, w) = (base.height, base.width);
    if h < 128 || w < 128 {
        return Err(Error::InsufficientData {
            what: "base image pixels per side",
            needed: 128,
            got: h.min(w),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let h_gen = if homography_magnitude > 0.0 {
        let mut corner_offsets = FourPtOffsets::zero(w, h);
        for d in &mut corner_offsets.offsets {
            d[0] = rng.gen_range(-homography_magnitude..homography_magnitude);
            d[1] = rng.gen_range(-homography_magnitude..homography_magnitude);
        }
        crate::homography::offsets_to_homography(&corner_offsets).map_err(|_| {
            Error::Degenerate("homography magnitude produced a degenerate quad".into())
        })?
    } else {
        Homography::identity()
    };

    let mut grid = ControlGrid::uniform(12, 12, w, h);
    if tps_magnitude > 0.0 {
        grid.offsets = smooth_random_offsets(12, 12, tps_magnitude, &mut rng);
    }
    let tps = tps_fit(&grid)?;
    let tps_flow = ffd_tps_eval(&tps, w, h)?;

    // Dense generator flow: G(p) - p = (H(p) - p) + f_T(p).
    let mut flow = FlowField::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (hx, hy) = h_gen.map_point(x as f64, y as f64)?;
            flow.dx[i] = hx - x as f64 + tps_flow.dx[i];
            flow.dy[i] = hy - y as f64 + tps_flow.dy[i];
        }
    }
    let (i_tgt, _) = warp_onto(base, &flow);

    // Exact matches: integer target grid positions whose generator samples
    // land inside the base frame.
    let mut ref_points = Vec::new();
    let mut tgt_points = Vec::new();
    let steps = 13;
    for gi in 0..steps {
        for gj in 0..steps {
            let margin = 4.0;
            let x = (margin + (w as f64 - 1.0 - 2.0 * margin) * gj as f64 / (steps - 1) as f64)
                .round();
            let y = (margin + (h as f64 - 1.0 - 2.0 * margin) * gi as f64 / (steps - 1) as f64)
                .round();
            let i = y as usize * w + x as usize;
            let (rx, ry) = (x + flow.dx[i], y + flow.dy[i]);
            if rx >= 0.0 && rx <= (w - 1) as f64 && ry >= 0.0 && ry <= (h - 1) as f64 {
                tgt_points.push((x, y));
                ref_points.push((rx, ry));
            }
        }
    }
    if ref_points.len() < 4 {
        return Err(Error::Degenerate(
            "generator magnitudes leave fewer than 4 in-frame matches".into(),
        ));
    }
    let pairs = ref_points
        .iter()
        .zip(&tgt_points)
        .map(|(&a, &b)| (a, b))
        .collect();

    Ok(SyntheticPair {
        i_ref: base.clone(),
        i_tgt,
        flow,
        h_gen,
        ref_kp: KeypointSet {
            points: ref_points,
            descriptors: Vec::new(),
            frame_w: w,
            frame_h: h,
        },
        tgt_kp: KeypointSet {
            points: tgt_points,
            descriptors: Vec::new(),
            frame_w: w,
            frame_h: h,
        },
        matches: Correspondences { pairs },
    })
}

fn translation_matrix(tx: f64, ty: f64) -> Homography {
    Homography::from_matrix(Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))
}

struct DescentOutcome {
    trace: Vec<LossBreakdown>,
    iterations: usize,
    converged: bool,
}

/// Backtracking gradient descent on one objective context: halve the step
/// until the total decreases, grow it after accepted steps, stop on the
/// relative-decrease tolerance, the iteration cap, or a vanishing step.
fn descend(
    ctx: &ObjectiveContext,
    offs_ref: &mut Vec<(f64, f64)>,
    offs_tgt: &mut Vec<(f64, f64)>,
    max_iterations: usize,
    tolerance: f64,
    step_size: f64,
) -> Result<DescentOutcome> {
    let (mut current, mut g_ref, mut g_tgt) = ctx.evaluate_with_grad(offs_ref, offs_tgt)?;
    let initial_total = current.total;
    let mut trace = vec![current];
    let mut iterations = 0usize;
    let mut converged = false;

    let grad_max = |gr: &[(f64, f64)], gt: &[(f64, f64)]| {
        gr.iter()
            .chain(gt)
            .fold(0.0f64, |m, g| m.max(g.0.abs()).max(g.1.abs()))
    };
    let mut gmax = grad_max(&g_ref, &g_tgt);
    if gmax < 1e-15 {
        converged = true;
    }
    // Scale so the first trial moves the most sensitive control point by
    // `step_size` pixels.
    let mut step = if converged { 0.0 } else { step_size / gmax };

    while !converged && iterations < max_iterations {
        let trial_ref: Vec<(f64, f64)> = offs_ref
            .iter()
            .zip(&g_ref)
            .map(|(o, g)| (o.0 - step * g.0, o.1 - step * g.1))
            .collect();
        let trial_tgt: Vec<(f64, f64)> = offs_tgt
            .iter()
            .zip(&g_tgt)
            .map(|(o, g)| (o.0 - step * g.0, o.1 - step * g.1))
            .collect();
        let trial = ctx.evaluate(&trial_ref, &trial_tgt)?;
        if trial.total < current.total {
            // Safety net per the contract; unreachable while accepted steps
            // are strictly decreasing.
            if trial.total > 10.0 * initial_total.abs().max(1e-6) && trial.total > initial_total {
                return Err(Error::Numerical(format!(
                    "optimizer diverged: total {} exceeds 10x initial {} after {} iterations",
                    trial.total, initial_total, iterations
                )));
            }
            *offs_ref = trial_ref;
            *offs_tgt = trial_tgt;
            let rel_drop = (current.total - trial.total) / current.total.abs().max(1e-300);
            iterations += 1;
            if rel_drop < tolerance {
                trace.push(trial);
                converged = true;
                break;
            }
            let out = ctx.evaluate_with_grad(offs_ref, offs_tgt)?;
            current = out.0;
            g_ref = out.1;
            g_tgt = out.2;
            trace.push(current);
            gmax = grad_max(&g_ref, &g_tgt);
            if gmax < 1e-15 {
                converged = true;
                break;
            }
            step *= 1.5;
        } else {
            step *= 0.5;
            // Floor: stop once the largest proposed move is below 1e-9 px.
            if step * gmax < 1e-9 {
                converged = true;
                break;
            }
        }
    }
    Ok(DescentOutcome {
        trace,
        iterations,
        converged,
    })
}

/// Stitches a pair: RANSAC homography (target-to-reference), middle-plane
/// decomposition, TPS offset optimization with backtracking gradient
/// descent, backend warping, average fusion, and overlap metrics.
pub fn stitch(
    cfg: &StitchConfig,
    i_ref: &Image,
    i_tgt: &Image,
    matches: &Correspondences,
) -> Result<(Image, RunReport)> {
    crate::init_thread_pool();
    let mut stage_times = Vec::new();

    // Stage 1: global homography, fitted as the target-to-reference mapping
    // so the halved-offset decomposition sends both views to one plane.
    let t0 = Instant::now();
    let (h_full, inliers) = ransac_fit(
        &matches.flipped(),
        cfg.ransac_threshold,
        cfg.ransac_iterations,
        cfg.seed,
    )?;
    stage_times.push(("ransac".to_string(), ms(t0)));

    // Stage 2: middle-plane decomposition of the target-frame 4pt offsets.
    let t0 = Instant::now();
    let offsets = homography_to_offsets(&h_full, i_tgt.width, i_tgt.height)?;
    let (h_ref, h_tgt) = decompose_middle_plane(&offsets)?;

    let mut min_x = f64::INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for (hom, img) in [(&h_ref, i_ref), (&h_tgt, i_tgt)] {
        for c in FourPtOffsets::corners(img.width, img.height) {
            let (x, y) = hom.map_point(c[0], c[1])?;
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
    }
    // Snap near-integer bounds: the DLT leaves O(1e-15) noise on exact
    // inputs, and a canvas one pixel too wide would break bit-exactness of
    // the identity case.
    let snap = |v: f64| {
        if (v - v.round()).abs() < 1e-7 {
            v.round()
        } else {
            v
        }
    };
    let (min_x, min_y) = (snap(min_x), snap(min_y));
    let (max_x, max_y) = (snap(max_x), snap(max_y));
    let canvas_w = (max_x - min_x).ceil() as usize + 1;
    let canvas_h = (max_y - min_y).ceil() as usize + 1;
    if canvas_w > cfg.max_canvas_dim || canvas_h > cfg.max_canvas_dim {
        return Err(Error::Numerical(format!(
            "canvas {canvas_w}x{canvas_h} exceeds the {} px limit",
            cfg.max_canvas_dim
        )));
    }
    let shift = translation_matrix(-min_x, -min_y);
    let h_ref_canvas = shift.compose(&h_ref);
    let h_tgt_canvas = shift.compose(&h_tgt);
    stage_times.push(("decompose".to_string(), ms(t0)));

    // Homography-stage rendering and metrics.
    let t0 = Instant::now();
    let flow_h_ref = homography_to_flow(&h_ref_canvas, canvas_h, canvas_w)?;
    let flow_h_tgt = homography_to_flow(&h_tgt_canvas, canvas_h, canvas_w)?;
    let (hw_ref, hm_ref) = warp_onto(i_ref, &flow_h_ref);
    let (hw_tgt, hm_tgt) = warp_onto(i_tgt, &flow_h_tgt);
    let h_olp = overlap_mask(&hm_ref, &hm_tgt)?.binarize(0.999);
    let homography_stage_metrics = metric_report(&hw_ref, &hw_tgt, &h_olp)?;
    stage_times.push(("homography_stage".to_string(), ms(t0)));

    // Stage 3: optimize residual control offsets of both views, warming up
    // on blurred copies of the pair before the full-resolution descent.
    let t0 = Instant::now();
    let ctx = ObjectiveContext::new(
        i_ref.clone(),
        i_tgt.clone(),
        &h_ref_canvas,
        &h_tgt_canvas,
        canvas_w,
        canvas_h,
        cfg.fusion_weights,
        cfg.loss,
        cfg.backend,
    )?;
    let mut offs_ref = ctx.homography_offsets(&h_ref_canvas)?;
    let mut offs_tgt = ctx.homography_offsets(&h_tgt_canvas)?;
    // Sub-nanopixel initial offsets are solver noise; zeroing them keeps the
    // exact-identity case exactly zero through the TPS fit.
    for o in offs_ref.iter_mut().chain(offs_tgt.iter_mut()) {
        if o.0.abs() < 1e-9 {
            o.0 = 0.0;
        }
        if o.1.abs() < 1e-9 {
            o.1 = 0.0;
        }
    }

    const PYRAMID_LEVEL_CAP: usize = 200;
    for &sigma in &cfg.pyramid {
        if sigma <= 0.0 {
            continue;
        }
        let blurred = ObjectiveContext::new(
            crate::imaging::gaussian_blur(i_ref, sigma),
            crate::imaging::gaussian_blur(i_tgt, sigma),
            &h_ref_canvas,
            &h_tgt_canvas,
            canvas_w,
            canvas_h,
            cfg.fusion_weights,
            cfg.loss,
            cfg.backend,
        )?;
        descend(
            &blurred,
            &mut offs_ref,
            &mut offs_tgt,
            PYRAMID_LEVEL_CAP,
            cfg.tolerance,
            cfg.step_size,
        )?;
    }
    let outcome = descend(
        &ctx,
        &mut offs_ref,
        &mut offs_tgt,
        cfg.max_iterations,
        cfg.tolerance,
        cfg.step_size,
    )?;
    let trace = outcome.trace;
    let iterations = outcome.iterations;
    let converged = outcome.converged;
    stage_times.push(("optimize".to_string(), ms(t0)));

    // Stages 4-5: final warps through the backend, fusion, metrics.
    let t0 = Instant::now();
    let (w_ref, m_ref, w_tgt, m_tgt) = ctx.render(&offs_ref, &offs_tgt)?;
    let fused = average_fuse(&w_ref, &m_ref, &w_tgt, &m_tgt)?;
    let olp = overlap_mask(&m_ref, &m_tgt)?.binarize(0.999);
    let final_metrics = metric_report(&w_ref, &w_tgt, &olp)?;
    stage_times.push(("render".to_string(), ms(t0)));

    let report = RunReport {
        h_full: h_full.to_row_major(),
        h_ref: h_ref_canvas.to_row_major(),
        h_tgt: h_tgt_canvas.to_row_major(),
        inliers: inliers.len(),
        canvas_w,
        canvas_h,
        translation: (-min_x, -min_y),
        trace,
        iterations,
        converged,
        homography_stage_metrics,
        final_metrics,
        stage_times_ms: stage_times,
        config_echo: config_echo(cfg),
        convention_notes: "H maps target to reference; corner order TL,TR,BL,BR; middle plane from halved target-frame 4pt offsets with H_ref = H^-1 H_tgt; per-view shape losses summed; masks stop-gradient".to_string(),
        final_offsets_ref: offs_ref,
        final_offsets_tgt: offs_tgt,
    };
    Ok((fused, report))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
