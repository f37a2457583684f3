//! Masked image-quality metrics computed on the warped overlap: mPSNR via
//! the masked RMSE, and mSSIM with a uniform 7x7 window restricted to
//! windows that lie entirely inside the (eroded) overlap mask.

use crate::error::{Error, Result};
use crate::imaging::{Image, Mask};
use rayon::prelude::*;

const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const SSIM_RADIUS: usize = 3; // 7x7 window

/// Quality numbers for one warped pair. `mpsnr` is `f64::INFINITY` when the
/// masked RMSE is exactly zero.
#[derive(Debug, Clone, Copy)]
pub struct MetricReport {
    pub mpsnr: f64,
    pub mssim: f64,
    pub mrmse: f64,
    pub overlap_pixels: usize,
}

impl MetricReport {
    /// `key=value` lines, one per field.
    pub fn to_key_values(&self) -> String {
        format!(
            "mpsnr={}\nmssim={:.9}\nmrmse={:.9e}\noverlap_pixels={}\n",
            fmt_db(self.mpsnr),
            self.mssim,
            self.mrmse,
            self.overlap_pixels
        )
    }

    /// CSV row matching the header `mpsnr,mssim,mrmse,overlap_pixels`.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:.9},{:.9e},{}",
            fmt_db(self.mpsnr),
            self.mssim,
            self.mrmse,
            self.overlap_pixels
        )
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Deterministic pairwise tree sum; the reduction order depends only on the
/// slice length, never on thread scheduling.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        let mut acc = 0.0;
        for x in v {
            acc += x;
        }
        acc
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

fn check_dims(a: &Image, b: &Image, m: &Mask) -> Result<()> {
    if !a.same_dims(b) || a.height != m.height || a.width != m.width {
        return Err(Error::dims(
            "metric inputs",
            (a.height, a.width, a.channels),
            (b.height, b.width, b.channels),
        ));
    }
    Ok(())
}

/// Masked PSNR: `mrmse = sqrt(sum M . mean_c (d^2) / sum M)` over the binary
/// overlap, `mpsnr = 20 log10(1 / mrmse)`; returns `(mpsnr, mrmse)`.
pub fn mpsnr(o_ref: &Image, o_tgt: &Image, m_olp: &Mask) -> Result<(f64, f64)> {
    check_dims(o_ref, o_tgt, m_olp)?;
    crate::init_thread_pool();
    let (h, w, ch) = (o_ref.height, o_ref.width, o_ref.channels);
    let rows: Vec<(f64, usize)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut acc = 0.0;
            let mut count = 0usize;
            for x in 0..w {
                if m_olp.at(x, y) > 0.5 {
                    let mut d2 = 0.0;
                    for c in 0..ch {
                        let d = o_ref.pixel(x, y, c) - o_tgt.pixel(x, y, c);
                        d2 += d * d;
                    }
                    acc += d2 / ch as f64;
                    count += 1;
                }
            }
            (acc, count)
        })
        .collect();
    let total: usize = rows.iter().map(|r| r.1).sum();
    if total == 0 {
        return Err(Error::EmptyOverlap);
    }
    let sums: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mrmse = (pairwise_sum(&sums) / total as f64).sqrt();
    let mpsnr = if mrmse > 0.0 {
        20.0 * (1.0 / mrmse).log10()
    } else {
        f64::INFINITY
    };
    Ok((mpsnr, mrmse))
}

fn luma(img: &Image) -> Vec<f64> {
    let n = img.height * img.width;
    let mut out = vec![0.0; n];
    let inv = 1.0 / img.channels as f64;
    for i in 0..n {
        let mut acc = 0.0;
        for c in 0..img.channels {
            acc += img.data[i * img.channels + c];
        }
        out[i] = acc * inv;
    }
    out
}

/// Pixels whose full 7x7 window lies inside both the frame and the binary
/// mask (erosion by the window radius).
fn valid_window_mask(m: &Mask) -> Vec<bool> {
    let (h, w) = (m.height, m.width);
    let r = SSIM_RADIUS;
    let mut valid = vec![false; h * w];
    if h < 2 * r + 1 || w < 2 * r + 1 {
        return valid;
    }
    for y in r..h - r {
        'px: for x in r..w - r {
            for wy in y - r..=y + r {
                for wx in x - r..=x + r {
                    if m.at(wx, wy) <= 0.5 {
                        continue 'px;
                    }
                }
            }
            valid[y * w + x] = true;
        }
    }
    valid
}

/// Masked SSIM: uniform 7x7 window on the channel-mean intensity, averaged
/// over pixels whose entire window lies inside the overlap.
pub fn mssim(o_ref: &Image, o_tgt: &Image, m_olp: &Mask) -> Result<f64> {
    check_dims(o_ref, o_tgt, m_olp)?;
    crate::init_thread_pool();
    let (h, w) = (o_ref.height, o_ref.width);
    let la = luma(o_ref);
    let lb = luma(o_tgt);
    let valid = valid_window_mask(m_olp);
    let r = SSIM_RADIUS;
    let area = ((2 * r + 1) * (2 * r + 1)) as f64;

    let rows: Vec<(f64, usize)> = (r..h.saturating_sub(r))
        .into_par_iter()
        .map(|y| {
            let mut acc = 0.0;
            let mut count = 0usize;
            for x in r..w - r {
                if !valid[y * w + x] {
                    continue;
                }
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for wy in y - r..=y + r {
                    for wx in x - r..=x + r {
                        let a = la[wy * w + wx];
                        let b = lb[wy * w + wx];
                        sa += a;
                        sb += b;
                        saa += a * a;
                        sbb += b * b;
                        sab += a * b;
                    }
                }
                let mu_a = sa / area;
                let mu_b = sb / area;
                let var_a = saa / area - mu_a * mu_a;
                let var_b = sbb / area - mu_b * mu_b;
                let cov = sab / area - mu_a * mu_b;
                let ssim = ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
                acc += ssim;
                count += 1;
            }
            (acc, count)
        })
        .collect();
    let total: usize = rows.iter().map(|r| r.1).sum();
    if total == 0 {
        return Err(Error::OverlapTooThin);
    }
    let sums: Vec<f64> = rows.iter().map(|r| r.0).collect();
    Ok(pairwise_sum(&sums) / total as f64)
}

/// Computes both metrics and the overlap pixel count.
pub fn metric_report(o_ref: &Image, o_tgt: &Image, m_olp: &Mask) -> Result<MetricReport> {
    let (psnr, mrmse) = mpsnr(o_ref, o_tgt, m_olp)?;
    let ssim = mssim(o_ref, o_tgt, m_olp)?;
    let overlap_pixels = m_olp.data.iter().filter(|&&v| v > 0.5).count();
    Ok(MetricReport {
        mpsnr: psnr,
        mssim: ssim,
        mrmse,
        overlap_pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::filled(h, w, 1, 0.0);
        for v in img.data.iter_mut() {
            *v = rng.gen_range(0.2..0.8);
        }
        img
    }

    #[test]
    fn identical_images_are_perfect() {
        let img = textured(20, 20, 1);
        let mask = Mask::ones(20, 20);
        let (psnr, rmse) = mpsnr(&img, &img, &mask).unwrap();
        assert!(psnr.is_infinite());
        assert_eq!(rmse, 0.0);
        assert_eq!(mssim(&img, &img, &mask).unwrap(), 1.0);
    }

    #[test]
    fn constant_difference_gives_20db() {
        let a = Image::filled(16, 16, 1, 0.5);
        let b = Image::filled(16, 16, 1, 0.6);
        let mask = Mask::ones(16, 16);
        let (psnr, rmse) = mpsnr(&a, &b, &mask).unwrap();
        assert!((rmse - 0.1).abs() < 1e-12);
        assert!((psnr - 20.0).abs() < 1e-6);
    }

    #[test]
    fn mpsnr_matches_naive_loop_on_strip_overlap() {
        let a = textured(24, 30, 2);
        let b = textured(24, 30, 3);
        let mut mask = Mask::zeros(24, 30);
        for y in 0..24 {
            for x in 10..20 {
                mask.set(x, y, 1.0);
            }
        }
        let (_, rmse) = mpsnr(&a, &b, &mask).unwrap();
        let mut acc = 0.0;
        let mut n = 0;
        for y in 0..24 {
            for x in 10..20 {
                let d = a.pixel(x, y, 0) - b.pixel(x, y, 0);
                acc += d * d;
                n += 1;
            }
        }
        let expect = (acc / n as f64).sqrt();
        assert!((rmse - expect).abs() < 1e-10);
    }

    #[test]
    fn empty_overlap_is_error() {
        let a = textured(8, 8, 4);
        let mask = Mask::zeros(8, 8);
        assert!(matches!(mpsnr(&a, &a, &mask), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn thin_overlap_is_error_for_ssim() {
        let a = textured(20, 20, 5);
        let mut mask = Mask::zeros(20, 20);
        for y in 0..20 {
            for x in 0..5 {
                mask.set(x, y, 1.0); // 5 px wide: thinner than the window
            }
        }
        assert!(matches!(mssim(&a, &a, &mask), Err(Error::OverlapTooThin)));
    }

    #[test]
    fn negative_image_has_low_ssim() {
        let mut a = Image::filled(32, 32, 1, 0.0);
        for y in 0..32 {
            for x in 0..32 {
                *a.pixel_mut(x, y, 0) =
                    0.5 + 0.3 * ((x as f64 / 3.0).sin() * (y as f64 / 4.0).cos());
            }
        }
        let mut b = a.clone();
        for v in b.data.iter_mut() {
            *v = 1.0 - *v;
        }
        let mask = Mask::ones(32, 32);
        let s = mssim(&a, &b, &mask).unwrap();
        assert!(s < 0.5, "anticorrelated content should score low, got {s}");
    }

    #[test]
    fn full_overlap_matches_unmasked_reference() {
        // Independent unmasked SSIM: plain double loop over all pixels whose
        // window fits in the frame.
        let a = textured(25, 31, 6);
        let b = textured(25, 31, 7);
        let mask = Mask::ones(25, 31);
        let got = mssim(&a, &b, &mask).unwrap();

        let r = 3;
        let (h, w) = (25usize, 31usize);
        let mut acc = 0.0;
        let mut count = 0;
        for y in r..h - r {
            for x in r..w - r {
                let mut vals_a = Vec::new();
                let mut vals_b = Vec::new();
                for wy in y - r..=y + r {
                    for wx in x - r..=x + r {
                        vals_a.push(a.pixel(wx, wy, 0));
                        vals_b.push(b.pixel(wx, wy, 0));
                    }
                }
                let n = vals_a.len() as f64;
                let mu_a: f64 = vals_a.iter().sum::<f64>() / n;
                let mu_b: f64 = vals_b.iter().sum::<f64>() / n;
                let var_a: f64 = vals_a.iter().map(|v| (v - mu_a) * (v - mu_a)).sum::<f64>() / n;
                let var_b: f64 = vals_b.iter().map(|v| (v - mu_b) * (v - mu_b)).sum::<f64>() / n;
                let cov: f64 = vals_a
                    .iter()
                    .zip(&vals_b)
                    .map(|(x1, x2)| (x1 - mu_a) * (x2 - mu_b))
                    .sum::<f64>()
                    / n;
                acc += ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2));
                count += 1;
            }
        }
        let expect = acc / count as f64;
        assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
    }

    #[test]
    fn metrics_are_symmetric() {
        let a = textured(20, 22, 8);
        let b = textured(20, 22, 9);
        let mask = Mask::ones(20, 22);
        let (p1, _) = mpsnr(&a, &b, &mask).unwrap();
        let (p2, _) = mpsnr(&b, &a, &mask).unwrap();
        assert_eq!(p1, p2);
        let s1 = mssim(&a, &b, &mask).unwrap();
        let s2 = mssim(&b, &a, &mask).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn shrinking_to_better_region_does_not_decrease_mpsnr() {
        // Left half agrees exactly, right half differs; restricting the mask
        // to the left half must not lower mPSNR.
        let a = textured(16, 32, 10);
        let mut b = a.clone();
        for y in 0..16 {
            for x in 16..32 {
                *b.pixel_mut(x, y, 0) = (a.pixel(x, y, 0) + 0.2).min(1.0);
            }
        }
        let full = Mask::ones(16, 32);
        let mut left = Mask::zeros(16, 32);
        for y in 0..16 {
            for x in 0..16 {
                left.set(x, y, 1.0);
            }
        }
        let (p_full, _) = mpsnr(&a, &b, &full).unwrap();
        let (p_left, _) = mpsnr(&a, &b, &left).unwrap();
        assert!(p_left >= p_full);
        assert!(p_left.is_infinite());
    }

    #[test]
    fn report_formats() {
        let a = Image::filled(10, 10, 1, 0.5);
        let b = Image::filled(10, 10, 1, 0.6);
        let mask = Mask::ones(10, 10);
        let rep = metric_report(&a, &b, &mask).unwrap();
        assert_eq!(rep.overlap_pixels, 100);
        let kv = rep.to_key_values();
        assert!(kv.contains("mpsnr=20.000000"));
        assert!(kv.contains("overlap_pixels=100"));
        let csv = rep.to_csv_row();
        assert_eq!(csv.split(',').count(), 4);
    }
}
