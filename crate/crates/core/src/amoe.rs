//! Adaptive mixture-of-experts fusion: a linear gated router producing
//! softmax weights over three residual experts (semantic, geometric,
//! heterogeneous), the variance-plus-entropy expert regularizer, the
//! latent-space modality perturbation, and analytic gradients for the lot.

use crate::error::{Error, Result};
use crate::npt::GeometricFeatureMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

/// Dense feature tensor, channel-major (`data[(c * grid_h + y) * grid_w + x]`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, grid_h: usize, grid_w: usize) -> Self {
        FeatureMap {
            channels,
            grid_h,
            grid_w,
            data: vec![0.0; channels * grid_h * grid_w],
        }
    }

    pub fn seeded_random(channels: usize, grid_h: usize, grid_w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap {
            channels,
            grid_h,
            grid_w,
            data: (0..channels * grid_h * grid_w)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        }
    }

    pub fn same_dims(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels
            && self.grid_h == other.grid_h
            && self.grid_w == other.grid_w
    }

    pub fn pixels(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Per-pixel channel vector at flat pixel index `q` (strided view).
    #[inline]
    fn channel_at(&self, c: usize, q: usize) -> f64 {
        self.data[c * self.pixels() + q]
    }

    /// Global average per channel.
    pub fn global_average(&self) -> Vec<f64> {
        let px = self.pixels() as f64;
        (0..self.channels)
            .map(|c| {
                self.data[c * self.pixels()..(c + 1) * self.pixels()]
                    .iter()
                    .sum::<f64>()
                    / px
            })
            .collect()
    }

    /// Root-mean-square of all entries.
    pub fn rms(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        (self.data.iter().map(|v| v * v).sum::<f64>() / self.data.len() as f64).sqrt()
    }
}

impl FeatureMap {
    /// Writes the binary map format: magic `WFM1`, LE u32 channels, grid_h,
    /// grid_w, then channel-major LE f64 data.
    pub fn write_wfm1(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"WFM1")?;
        for dim in [self.channels, self.grid_h, self.grid_w] {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a map written by [`FeatureMap::write_wfm1`].
    pub fn read_wfm1(mut r: impl Read) -> Result<FeatureMap> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"WFM1" {
            return Err(Error::Parse(format!("bad feature-map magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut word)?;
            *d = u32::from_le_bytes(word) as usize;
        }
        let [channels, grid_h, grid_w] = dims;
        let mut buf = vec![0u8; channels * grid_h * grid_w * 8];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(FeatureMap {
            channels,
            grid_h,
            grid_w,
            data,
        })
    }
}

impl From<GeometricFeatureMap> for FeatureMap {
    fn from(g: GeometricFeatureMap) -> Self {
        FeatureMap {
            channels: g.channels,
            grid_h: g.grid_h,
            grid_w: g.grid_w,
            data: g.data,
        }
    }
}

/// Linear router: 3 logits from the pooled `[F_s, F_g, F_s (+) F_g]` summary
/// (global average per channel, concatenated to a `4c` vector).
#[derive(Debug, Clone, PartialEq)]
pub struct RouterParams {
    pub channels: usize,
    pub weight: Vec<f64>, // 3 x 4c, row-major
    pub bias: [f64; 3],
}

impl RouterParams {
    pub fn zeros(channels: usize) -> Self {
        RouterParams {
            channels,
            weight: vec![0.0; 3 * 4 * channels],
            bias: [0.0; 3],
        }
    }

    pub fn seeded_random(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RouterParams {
            channels,
            weight: (0..3 * 4 * channels)
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect(),
            bias: [
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            ],
        }
    }
}

/// Softmax expert weights; always on the 2-simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub w_s: f64,
    pub w_g: f64,
    pub w_h: f64,
}

impl FusionWeights {
    pub fn uniform() -> Self {
        FusionWeights {
            w_s: 1.0 / 3.0,
            w_g: 1.0 / 3.0,
            w_h: 1.0 / 3.0,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.w_s, self.w_g, self.w_h]
    }

    pub fn from_array(w: [f64; 3]) -> Self {
        FusionWeights {
            w_s: w[0],
            w_g: w[1],
            w_h: w[2],
        }
    }
}

/// Three residual experts as pointwise channel-mixing layers:
/// `E_s(F) = F + tanh(W_s F + b_s)` (likewise `E_g`), and the heterogeneous
/// expert maps the `2c` concatenation to `c` channels with the mean of the
/// two halves as its residual path.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub channels: usize,
    pub w_s: Vec<f64>, // c x c
    pub b_s: Vec<f64>, // c
    pub w_g: Vec<f64>, // c x c
    pub b_g: Vec<f64>, // c
    pub w_h: Vec<f64>, // c x 2c
    pub b_h: Vec<f64>, // c
}

impl ExpertParams {
    /// Zero transforms: every expert reduces to its residual path.
    pub fn identity(channels: usize) -> Self {
        ExpertParams {
            channels,
            w_s: vec![0.0; channels * channels],
            b_s: vec![0.0; channels],
            w_g: vec![0.0; channels * channels],
            b_g: vec![0.0; channels],
            w_h: vec![0.0; channels * 2 * channels],
            b_h: vec![0.0; channels],
        }
    }

    pub fn seeded_random(channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect()
        };
        ExpertParams {
            channels,
            w_s: gen(channels * channels),
            b_s: gen(channels),
            w_g: gen(channels * channels),
            b_g: gen(channels),
            w_h: gen(channels * 2 * channels),
            b_h: gen(channels),
        }
    }
}

/// Latent-space perturbation settings. A branch is either dropped, noised,
/// or kept, sampled exclusively so the marginal drop and noise rates equal
/// `p_drop` and `p_noise` exactly. `sigma = None` uses 0.1 x the map RMS.
#[derive(Debug, Clone, Copy)]
pub struct PerturbConfig {
    pub p_drop: f64,
    pub p_noise: f64,
    pub sigma: Option<f64>,
    pub seed: u64,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_drop", self.p_drop), ("p_noise", self.p_noise)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::OutOfRange(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.p_drop + self.p_noise > 1.0 + 1e-12 {
            return Err(Error::OutOfRange(format!(
                "p_drop + p_noise = {} exceeds 1",
                self.p_drop + self.p_noise
            )));
        }
        if let Some(s) = self.sigma {
            if s < 0.0 {
                return Err(Error::OutOfRange(format!("sigma = {s} negative")));
            }
        }
        Ok(())
    }
}

/// What the perturbation did to one expert branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbEvent {
    Kept,
    Dropped,
    Noised,
}

fn softmax3(logits: [f64; 3]) -> [f64; 3] {
    let m = logits[0].max(logits[1]).max(logits[2]);
    let e = [
        (logits[0] - m).exp(),
        (logits[1] - m).exp(),
        (logits[2] - m).exp(),
    ];
    let s = e[0] + e[1] + e[2];
    [e[0] / s, e[1] / s, e[2] / s]
}

fn pooled_summary(f_s: &FeatureMap, f_g: &FeatureMap) -> Vec<f64> {
    let gs = f_s.global_average();
    let gg = f_g.global_average();
    // [gap(F_s), gap(F_g), gap(F_s (+) F_g)]: the concatenation pools to the
    // two averages stacked.
    let mut pooled = Vec::with_capacity(4 * gs.len());
    pooled.extend_from_slice(&gs);
    pooled.extend_from_slice(&gg);
    pooled.extend_from_slice(&gs);
    pooled.extend_from_slice(&gg);
    pooled
}

fn router_logits(router: &RouterParams, pooled: &[f64]) -> [f64; 3] {
    let n = 4 * router.channels;
    let mut logits = router.bias;
    for r in 0..3 {
        let row = &router.weight[r * n..(r + 1) * n];
        for (w, p) in row.iter().zip(pooled) {
            logits[r] += w * p;
        }
    }
    logits
}

/// Softmax routing over the pooled feature summary.
pub fn route(router: &RouterParams, f_s: &FeatureMap, f_g: &FeatureMap) -> Result<FusionWeights> {
    if !f_s.same_dims(f_g) {
        return Err(Error::dims(
            "route feature maps",
            (f_s.channels, f_s.grid_h, f_s.grid_w),
            (f_g.channels, f_g.grid_h, f_g.grid_w),
        ));
    }
    if f_s.channels != router.channels {
        return Err(Error::dims("router channels", router.channels, f_s.channels));
    }
    let w = softmax3(router_logits(router, &pooled_summary(f_s, f_g)));
    Ok(FusionWeights::from_array(w))
}

/// Applies one pointwise expert `residual + tanh(W x + b)`.
fn expert_forward(
    input_maps: &[&FeatureMap],
    weight: &[f64],
    bias: &[f64],
    residual_mean: bool,
) -> FeatureMap {
    let c_out = bias.len();
    let c_in: usize = input_maps.iter().map(|m| m.channels).sum();
    let px = input_maps[0].pixels();
    let mut out = FeatureMap::zeros(c_out, input_maps[0].grid_h, input_maps[0].grid_w);
    let mut x = vec![0.0; c_in];
    for q in 0..px {
        let mut o = 0;
        for m in input_maps {
            for c in 0..m.channels {
                x[o] = m.channel_at(c, q);
                o += 1;
            }
        }
        for co in 0..c_out {
            let row = &weight[co * c_in..(co + 1) * c_in];
            let mut acc = bias[co];
            for (w, v) in row.iter().zip(&x) {
                acc += w * v;
            }
            let res = if residual_mean {
                0.5 * (x[co] + x[c_out + co])
            } else {
                x[co]
            };
            out.data[co * px + q] = res + acc.tanh();
        }
    }
    out
}

/// The three expert outputs `(H_s, H_g, H_h)`.
pub fn expert_outputs(
    experts: &ExpertParams,
    f_s: &FeatureMap,
    f_g: &FeatureMap,
) -> Result<[FeatureMap; 3]> {
    if !f_s.same_dims(f_g) {
        return Err(Error::dims(
            "expert feature maps",
            (f_s.channels, f_s.grid_h, f_s.grid_w),
            (f_g.channels, f_g.grid_h, f_g.grid_w),
        ));
    }
    if f_s.channels != experts.channels {
        return Err(Error::dims("expert channels", experts.channels, f_s.channels));
    }
    let h_s = expert_forward(&[f_s], &experts.w_s, &experts.b_s, false);
    let h_g = expert_forward(&[f_g], &experts.w_g, &experts.b_g, false);
    let h_h = expert_forward(&[f_s, f_g], &experts.w_h, &experts.b_h, true);
    Ok([h_s, h_g, h_h])
}

/// Weighted aggregation `w_s E_s(F_s) + w_g E_g(F_g) + w_h E_h(F_s (+) F_g)`.
pub fn fuse(
    experts: &ExpertParams,
    w: &FusionWeights,
    f_s: &FeatureMap,
    f_g: &FeatureMap,
) -> Result<FeatureMap> {
    let [h_s, h_g, h_h] = expert_outputs(experts, f_s, f_g)?;
    let mut out = FeatureMap::zeros(f_s.channels, f_s.grid_h, f_s.grid_w);
    for i in 0..out.data.len() {
        out.data[i] = w.w_s * h_s.data[i] + w.w_g * h_g.data[i] + w.w_h * h_h.data[i];
    }
    Ok(out)
}

/// Expert regularizer: variance about the uniform weight plus
/// `lambda_e` times the negative entropy (`0 log 0 = 0`).
pub fn reg_loss(w: &FusionWeights, lambda_e: f64) -> f64 {
    let mean = 1.0 / 3.0;
    let mut var = 0.0;
    let mut ent = 0.0;
    for v in w.as_array() {
        var += (v - mean) * (v - mean);
        if v > 0.0 {
            ent += v * v.ln();
        }
    }
    var + lambda_e * ent
}

/// Gradient of [`reg_loss`] with respect to the weights themselves.
pub fn reg_loss_grad(w: &FusionWeights, lambda_e: f64) -> [f64; 3] {
    let mean = 1.0 / 3.0;
    let mut g = [0.0; 3];
    for (i, v) in w.as_array().into_iter().enumerate() {
        g[i] = 2.0 * (v - mean);
        if v > 0.0 {
            g[i] += lambda_e * (v.ln() + 1.0);
        }
    }
    g
}

/// Applies the modality perturbation to the three expert branches. Exactly
/// one of keep/drop/noise fires per branch, decided by a single uniform draw
/// partitioned as `[0, p_drop) -> drop`, `[p_drop, p_drop+p_noise) -> noise`,
/// so both marginal rates equal their configured probabilities.
pub fn perturb(
    branches: &mut [FeatureMap; 3],
    cfg: &PerturbConfig,
) -> Result<[PerturbEvent; 3]> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut events = [PerturbEvent::Kept; 3];
    for (b, map) in branches.iter_mut().enumerate() {
        let u: f64 = rng.gen_range(0.0..1.0);
        if u < cfg.p_drop {
            map.data.fill(0.0);
            events[b] = PerturbEvent::Dropped;
        } else if u < cfg.p_drop + cfg.p_noise {
            let sigma = cfg.sigma.unwrap_or_else(|| 0.1 * map.rms());
            for v in map.data.iter_mut() {
                // Box-Muller from two uniform draws.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                *v += sigma * z;
            }
            events[b] = PerturbEvent::Noised;
        }
    }
    Ok(events)
}

/// Gradients of `L = <upstream, fuse(route(...), ...)> + reg_weight *
/// reg_loss(route(...), lambda_e)` with respect to every parameter and both
/// inputs.
#[derive(Debug, Clone)]
pub struct FusionGradients {
    pub router_weight: Vec<f64>,
    pub router_bias: [f64; 3],
    pub w_s: Vec<f64>,
    pub b_s: Vec<f64>,
    pub w_g: Vec<f64>,
    pub b_g: Vec<f64>,
    pub w_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub f_s: FeatureMap,
    pub f_g: FeatureMap,
}

/// Forward value of the scalar checked by [`fusion_grads`].
pub fn fusion_objective(
    experts: &ExpertParams,
    router: &RouterParams,
    f_s: &FeatureMap,
    f_g: &FeatureMap,
    upstream: &FeatureMap,
    reg_weight: f64,
    lambda_e: f64,
) -> Result<f64> {
    let w = route(router, f_s, f_g)?;
    let fused = fuse(experts, &w, f_s, f_g)?;
    let dot: f64 = fused
        .data
        .iter()
        .zip(&upstream.data)
        .map(|(a, b)| a * b)
        .sum();
    Ok(dot + reg_weight * reg_loss(&w, lambda_e))
}

/// Analytic gradients of [`fusion_objective`] via the chain rule through the
/// softmax router, the pooled summary, and all three residual experts.
pub fn fusion_grads(
    experts: &ExpertParams,
    router: &RouterParams,
    f_s: &FeatureMap,
    f_g: &FeatureMap,
    upstream: &FeatureMap,
    reg_weight: f64,
    lambda_e: f64,
) -> Result<FusionGradients> {
    if !f_s.same_dims(f_g) || !f_s.same_dims(upstream) {
        return Err(Error::dims(
            "fusion_grads maps",
            (f_s.channels, f_s.grid_h, f_s.grid_w),
            (upstream.channels, upstream.grid_h, upstream.grid_w),
        ));
    }
    let c = experts.channels;
    let px = f_s.pixels();
    let pooled = pooled_summary(f_s, f_g);
    let logits = router_logits(router, &pooled);
    let w = softmax3(logits);
    let weights = FusionWeights::from_array(w);
    let hs = expert_outputs(experts, f_s, f_g)?;

    // d L / d w_r: the fused inner product plus the regularizer.
    let mut t = [0.0; 3];
    for r in 0..3 {
        t[r] = hs[r]
            .data
            .iter()
            .zip(&upstream.data)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    }
    let reg_g = reg_loss_grad(&weights, lambda_e);
    for r in 0..3 {
        t[r] += reg_weight * reg_g[r];
    }

    // Softmax backward: dz_i = w_i (t_i - sum_j w_j t_j).
    let dot_wt = w[0] * t[0] + w[1] * t[1] + w[2] * t[2];
    let dz = [
        w[0] * (t[0] - dot_wt),
        w[1] * (t[1] - dot_wt),
        w[2] * (t[2] - dot_wt),
    ];

    let n = 4 * c;
    let mut router_weight = vec![0.0; 3 * n];
    for r in 0..3 {
        for i in 0..n {
            router_weight[r * n + i] = dz[r] * pooled[i];
        }
    }
    let mut d_pooled = vec![0.0; n];
    for r in 0..3 {
        for i in 0..n {
            d_pooled[i] += router.weight[r * n + i] * dz[r];
        }
    }

    let mut grads = FusionGradients {
        router_weight,
        router_bias: dz,
        w_s: vec![0.0; c * c],
        b_s: vec![0.0; c],
        w_g: vec![0.0; c * c],
        b_g: vec![0.0; c],
        w_h: vec![0.0; c * 2 * c],
        b_h: vec![0.0; c],
        f_s: FeatureMap::zeros(c, f_s.grid_h, f_s.grid_w),
        f_g: FeatureMap::zeros(c, f_g.grid_h, f_g.grid_w),
    };

    // Pooling backward: each pixel of F_s sees d_pooled segments 0 and 2.
    let inv_px = 1.0 / px as f64;
    for ch in 0..c {
        let gs = (d_pooled[ch] + d_pooled[2 * c + ch]) * inv_px;
        let gg = (d_pooled[c + ch] + d_pooled[3 * c + ch]) * inv_px;
        for q in 0..px {
            grads.f_s.data[ch * px + q] += gs;
            grads.f_g.data[ch * px + q] += gg;
        }
    }

    // Expert backward, per pixel.
    let mut x = vec![0.0; 2 * c];
    for q in 0..px {
        for ch in 0..c {
            x[ch] = f_s.channel_at(ch, q);
            x[c + ch] = f_g.channel_at(ch, q);
        }
        for co in 0..c {
            let gout = upstream.data[co * px + q];

            // Semantic expert: h = f_s + tanh(W_s f_s + b_s).
            let dh = w[0] * gout;
            let row = &experts.w_s[co * c..(co + 1) * c];
            let mut u = experts.b_s[co];
            for ci in 0..c {
                u += row[ci] * x[ci];
            }
            let sech2 = 1.0 - u.tanh() * u.tanh();
            let da = dh * sech2;
            grads.b_s[co] += da;
            for ci in 0..c {
                grads.w_s[co * c + ci] += da * x[ci];
                grads.f_s.data[ci * px + q] += da * row[ci];
            }
            grads.f_s.data[co * px + q] += dh;

            // Geometric expert: h = f_g + tanh(W_g f_g + b_g).
            let dh = w[1] * gout;
            let row = &experts.w_g[co * c..(co + 1) * c];
            let mut u = experts.b_g[co];
            for ci in 0..c {
                u += row[ci] * x[c + ci];
            }
            let sech2 = 1.0 - u.tanh() * u.tanh();
            let da = dh * sech2;
            grads.b_g[co] += da;
            for ci in 0..c {
                grads.w_g[co * c + ci] += da * x[c + ci];
                grads.f_g.data[ci * px + q] += da * row[ci];
            }
            grads.f_g.data[co * px + q] += dh;

            // Heterogeneous expert: h = (x_s + x_g)/2 + tanh(W_h x + b_h).
            let dh = w[2] * gout;
            let row = &experts.w_h[co * 2 * c..(co + 1) * 2 * c];
            let mut u = experts.b_h[co];
            for ci in 0..2 * c {
                u += row[ci] * x[ci];
            }
            let sech2 = 1.0 - u.tanh() * u.tanh();
            let da = dh * sech2;
            grads.b_h[co] += da;
            for ci in 0..2 * c {
                grads.w_h[co * 2 * c + ci] += da * x[ci];
                let target = if ci < c {
                    &mut grads.f_s.data[ci * px + q]
                } else {
                    &mut grads.f_g.data[(ci - c) * px + q]
                };
                *target += da * row[ci];
            }
            grads.f_s.data[co * px + q] += 0.5 * dh;
            grads.f_g.data[co * px + q] += 0.5 * dh;
        }
    }
    Ok(grads)
}

const AMOE_MAGIC: &[u8; 4] = b"AMOE";
const AMOE_VERSION: u32 = 1;

/// Serializes router and expert parameters as the versioned `AMOE` blob:
/// magic, u32 version, u32 channel count, then the f64 parameter array
/// (router weight, router bias, W_s, b_s, W_g, b_g, W_h, b_h).
pub fn save_params(
    router: &RouterParams,
    experts: &ExpertParams,
    mut w: impl Write,
) -> Result<()> {
    if router.channels != experts.channels {
        return Err(Error::dims(
            "router vs expert channels",
            experts.channels,
            router.channels,
        ));
    }
    w.write_all(AMOE_MAGIC)?;
    w.write_all(&AMOE_VERSION.to_le_bytes())?;
    w.write_all(&(router.channels as u32).to_le_bytes())?;
    let mut dump = |vals: &[f64]| -> Result<()> {
        for v in vals {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    dump(&router.weight)?;
    dump(&router.bias)?;
    dump(&experts.w_s)?;
    dump(&experts.b_s)?;
    dump(&experts.w_g)?;
    dump(&experts.b_g)?;
    dump(&experts.w_h)?;
    dump(&experts.b_h)?;
    Ok(())
}

/// Reads a blob written by [`save_params`].
pub fn load_params(mut r: impl Read) -> Result<(RouterParams, ExpertParams)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != AMOE_MAGIC {
        return Err(Error::Parse(format!("bad AMOE magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != AMOE_VERSION {
        return Err(Error::Parse(format!("unsupported AMOE version {version}")));
    }
    r.read_exact(&mut word)?;
    let c = u32::from_le_bytes(word) as usize;
    let mut pull = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    };
    let weight = pull(3 * 4 * c)?;
    let bias_v = pull(3)?;
    let router = RouterParams {
        channels: c,
        weight,
        bias: [bias_v[0], bias_v[1], bias_v[2]],
    };
    let experts = ExpertParams {
        channels: c,
        w_s: pull(c * c)?,
        b_s: pull(c)?,
        w_g: pull(c * c)?,
        b_g: pull(c)?,
        w_h: pull(c * 2 * c)?,
        b_h: pull(c)?,
    };
    Ok((router, experts))
}
