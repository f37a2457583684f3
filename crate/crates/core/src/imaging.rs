//! Dense raster types (images, masks, flow fields), bilinear sampling,
//! backward warping, mask arithmetic, and average fusion.
//!
//! Conventions, used everywhere downstream:
//! - intensities live in `[0, 1]` (8-bit sources are divided by 255 at load),
//! - flows are backward: output pixel `p` samples the input at `p + flow(p)`,
//! - samples outside `[0, W-1] x [0, H-1]` yield zero intensity and zero mask.

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;

/// Row-major, channel-interleaved raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    /// Creates a constant-intensity image. `channels` must be 1 or 3.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Image {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Wraps existing data; length must equal `height * width * channels`.
    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::dims(
                "image data length",
                height * width * channels,
                data.len(),
            ));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize, c: usize) -> &mut f64 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Loads PNG / PPM / PGM by extension; 8-bit samples are mapped to `[0,1]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let dynimg = image::open(path.as_ref()).map_err(|e| Error::Codec(e.to_string()))?;
        Ok(match dynimg {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                let data = g.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
                Image::from_data(h, w, 1, data)?
            }
            other => {
                let rgb = other.into_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                let data = rgb.into_raw().iter().map(|&v| v as f64 / 255.0).collect();
                Image::from_data(h, w, 3, data)?
            }
        })
    }

    /// Saves as PNG / PPM / PGM by extension, quantizing to 8 bits.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let res = match self.channels {
            1 => image::GrayImage::from_raw(w, h, bytes)
                .expect("buffer sized by construction")
                .save(path.as_ref()),
            3 => image::RgbImage::from_raw(w, h, bytes)
                .expect("buffer sized by construction")
                .save(path.as_ref()),
            _ => unreachable!("channels is 1 or 3"),
        };
        res.map_err(|e| Error::Codec(e.to_string()))
    }
}

/// Validity raster with values in `[0, 1]`; 1 marks valid content.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Mask {
    pub fn ones(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![1.0; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Binarizes at the given threshold (metrics use 0.999).
    pub fn binarize(&self, threshold: f64) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Per-pixel backward displacement: output pixel `p` samples `p + (dx, dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField {
            height,
            width,
            dx: vec![0.0; height * width],
            dy: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        FlowField {
            height,
            width,
            dx: vec![dx; height * width],
            dy: vec![dy; height * width],
        }
    }

    /// Writes the binary flow format: magic `WFF1`, LE u32 height and width,
    /// then `H*W` LE f32 dx values followed by `H*W` LE f32 dy values.
    pub fn write_wff1(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"WFF1")?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        for v in &self.dx {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        for v in &self.dy {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the `WFF1` binary flow format written by [`FlowField::write_wff1`].
    pub fn read_wff1(mut r: impl Read) -> Result<FlowField> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"WFF1" {
            return Err(Error::Parse(format!("bad flow magic {magic:?}")));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let height = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        let n = height * width;
        let read_plane = |r: &mut dyn Read| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect())
        };
        let dx = read_plane(&mut r)?;
        let dy = read_plane(&mut r)?;
        Ok(FlowField {
            height,
            width,
            dx,
            dy,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_wff1(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FlowField> {
        let f = std::fs::File::open(path)?;
        FlowField::read_wff1(std::io::BufReader::new(f))
    }
}

/// Bilinear interpolation of up to three channels at `(x, y)`.
///
/// Coordinates outside `[0, W-1] x [0, H-1]` return zeros with
/// `in_bounds = false`; integer coordinates reproduce the pixel exactly.
#[inline]
pub fn bilinear_sample(img: &Image, x: f64, y: f64) -> ([f64; 3], bool) {
    let w = img.width;
    let h = img.height;
    if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
        return ([0.0; 3], false);
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
    let mut out = [0.0; 3];
    for c in 0..img.channels {
        let v00 = img.pixel(x0, y0, c);
        let v10 = img.pixel(x1, y0, c);
        let v01 = img.pixel(x0, y1, c);
        let v11 = img.pixel(x1, y1, c);
        let top = v00 + fx * (v10 - v00);
        let bot = v01 + fx * (v11 - v01);
        out[c] = top + fy * (bot - top);
    }
    (out, true)
}

/// Spatial derivative of the bilinear interpolant at `(x, y)`, per channel.
///
/// This is the exact derivative of [`bilinear_sample`] within a cell; on
/// integer coordinates the left/top cell limit is taken. Out-of-bounds
/// positions have zero derivative (the sample is constant zero there).
#[inline]
pub fn bilinear_sample_grad(img: &Image, x: f64, y: f64) -> ([f64; 3], [f64; 3]) {
    let w = img.width;
    let h = img.height;
    let mut gx = [0.0; 3];
    let mut gy = [0.0; 3];
    if !(x >= 0.0 && x <= (w - 1) as f64 && y >= 0.0 && y <= (h - 1) as f64) {
        return (gx, gy);
    }
    // Left/top limit: for interior integer coordinates use the cell to the
    // left/top, i.e. floor(x) - 1 when x is an exact integer > 0.
    let cell = |v: f64, n: usize| -> (usize, f64) {
        let mut i = v.floor();
        if i >= (n - 1) as f64 {
            i = (n - 1) as f64 - 1.0;
        } else if v == i && i > 0.0 {
            i -= 1.0;
        }
        let i = i.max(0.0) as usize;
        (i, v - i as f64)
    };
    if w < 2 || h < 2 {
        return (gx, gy);
    }
    let (x0, fx) = cell(x, w);
    let (y0, fy) = cell(y, h);
    for c in 0..img.channels {
        let v00 = img.pixel(x0, y0, c);
        let v10 = img.pixel(x0 + 1, y0, c);
        let v01 = img.pixel(x0, y0 + 1, c);
        let v11 = img.pixel(x0 + 1, y0 + 1, c);
        gx[c] = (v10 - v00) * (1.0 - fy) + (v11 - v01) * fy;
        gy[c] = (v01 - v00) * (1.0 - fx) + (v11 - v10) * fx;
    }
    (gx, gy)
}

/// Backward-warps an image: output pixel `p` samples `img` at `p + flow(p)`.
///
/// The returned mask is the same warp applied to an all-ones raster, so it is
/// zero exactly where the sample fell out of bounds.
pub fn warp_with_flow(img: &Image, flow: &FlowField) -> Result<(Image, Mask)> {
    if img.height != flow.height || img.width != flow.width {
        return Err(Error::dims(
            "warp_with_flow",
            (img.height, img.width),
            (flow.height, flow.width),
        ));
    }
    crate::init_thread_pool();
    let (h, w, ch) = (img.height, img.width, img.channels);
    let mut out = Image::filled(h, w, ch, 0.0);
    let mut mask = Mask::zeros(h, w);

    out.data
        .par_chunks_mut(w * ch)
        .zip(mask.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (orow, mrow))| {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f64 + flow.dx[i];
                let sy = y as f64 + flow.dy[i];
                let (vals, inside) = bilinear_sample(img, sx, sy);
                if inside {
                    mrow[x] = 1.0;
                    orow[x * ch..x * ch + ch].copy_from_slice(&vals[..ch]);
                }
            }
        });
    Ok((out, mask))
}

/// Separable Gaussian blur with clamped borders; `sigma <= 0` is a copy.
/// The stitcher's coarse-to-fine schedule optimizes on blurred pyramids.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    crate::init_thread_pool();
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    let (h, w, ch) = (img.height, img.width, img.channels);
    let mut tmp = Image::filled(h, w, ch, 0.0);
    tmp.data
        .par_chunks_mut(w * ch)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        let xi = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                        acc += kv * img.pixel(xi, y, c);
                    }
                    row[x * ch + c] = acc;
                }
            }
        });
    let mut out = Image::filled(h, w, ch, 0.0);
    out.data
        .par_chunks_mut(w * ch)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                for c in 0..ch {
                    let mut acc = 0.0;
                    for (k, kv) in kernel.iter().enumerate() {
                        let yi = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
                        acc += kv * tmp.pixel(x, yi, c);
                    }
                    row[x * ch + c] = acc;
                }
            }
        });
    out
}

/// Backward warp onto a canvas of the flow's dimensions: canvas pixel `p`
/// samples `img` at `p + flow(p)` in the image's own coordinate frame. The
/// image and flow dimensions may differ (stitching onto a larger canvas).
pub fn warp_onto(img: &Image, flow: &FlowField) -> (Image, Mask) {
    crate::init_thread_pool();
    let (h, w) = (flow.height, flow.width);
    let ch = img.channels;
    let mut out = Image::filled(h, w, ch, 0.0);
    let mut mask = Mask::zeros(h, w);
    out.data
        .par_chunks_mut(w * ch)
        .zip(mask.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (orow, mrow))| {
            for x in 0..w {
                let i = y * w + x;
                let (vals, inside) =
                    bilinear_sample(img, x as f64 + flow.dx[i], y as f64 + flow.dy[i]);
                if inside {
                    mrow[x] = 1.0;
                    orow[x * ch..x * ch + ch].copy_from_slice(&vals[..ch]);
                }
            }
        });
    (out, mask)
}

/// Elementwise product of two masks (the overlap region).
pub fn overlap_mask(m1: &Mask, m2: &Mask) -> Result<Mask> {
    if m1.height != m2.height || m1.width != m2.width {
        return Err(Error::dims(
            "overlap_mask",
            (m1.height, m1.width),
            (m2.height, m2.width),
        ));
    }
    Ok(Mask {
        height: m1.height,
        width: m1.width,
        data: m1
            .data
            .iter()
            .zip(&m2.data)
            .map(|(&a, &b)| a * b)
            .collect(),
    })
}

/// Average fusion: mean of both images where both masks are positive, the
/// single valid image where only one is, zero elsewhere.
pub fn average_fuse(a: &Image, mask_a: &Mask, b: &Image, mask_b: &Mask) -> Result<Image> {
    if !a.same_dims(b) {
        return Err(Error::dims(
            "average_fuse images",
            (a.height, a.width, a.channels),
            (b.height, b.width, b.channels),
        ));
    }
    if mask_a.height != a.height
        || mask_a.width != a.width
        || mask_b.height != b.height
        || mask_b.width != b.width
    {
        return Err(Error::dims(
            "average_fuse masks",
            (a.height, a.width),
            (mask_a.height, mask_a.width),
        ));
    }
    let ch = a.channels;
    let mut out = Image::filled(a.height, a.width, ch, 0.0);
    for i in 0..a.height * a.width {
        let ma = mask_a.data[i] > 0.0;
        let mb = mask_b.data[i] > 0.0;
        for c in 0..ch {
            let va = a.data[i * ch + c];
            let vb = b.data[i * ch + c];
            out.data[i * ch + c] = match (ma, mb) {
                (true, true) => 0.5 * (va + vb),
                (true, false) => va,
                (false, true) => vb,
                (false, false) => 0.0,
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> Image {
        let mut img = Image::filled(h, w, 1, 0.0);
        for y in 0..h {
            for x in 0..w {
                *img.pixel_mut(x, y, 0) = (x + y * w) as f64 / (h * w) as f64;
            }
        }
        img
    }

    #[test]
    fn sample_constant_image_midpoint() {
        let img = Image::filled(2, 2, 1, 0.5);
        let (v, inside) = bilinear_sample(&img, 0.5, 0.5);
        assert!(inside);
        assert_eq!(v[0], 0.5);
    }

    #[test]
    fn sample_linear_interpolation() {
        let mut img = Image::filled(1, 2, 1, 0.0);
        *img.pixel_mut(1, 0, 0) = 1.0;
        let (v, inside) = bilinear_sample(&img, 0.25, 0.0);
        assert!(inside);
        assert!((v[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sample_out_of_bounds_is_flagged_zero() {
        let img = Image::filled(2, 2, 1, 0.7);
        let (v, inside) = bilinear_sample(&img, -1.0, 0.0);
        assert!(!inside);
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn sample_exact_on_integer_grid() {
        let img = gradient_image(4, 5);
        for y in 0..4 {
            for x in 0..5 {
                let (v, inside) = bilinear_sample(&img, x as f64, y as f64);
                assert!(inside);
                assert_eq!(v[0], img.pixel(x, y, 0));
            }
        }
    }

    #[test]
    fn warp_zero_flow_is_identity() {
        let img = gradient_image(5, 7);
        let flow = FlowField::zeros(5, 7);
        let (out, mask) = warp_with_flow(&img, &flow).unwrap();
        assert_eq!(out.data, img.data);
        assert!(mask.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn warp_unit_translation_marks_border_invalid() {
        let img = gradient_image(4, 4);
        let flow = FlowField::constant(4, 4, 1.0, 0.0);
        let (out, mask) = warp_with_flow(&img, &flow).unwrap();
        for y in 0..4 {
            // Column 3 samples x = 4, outside the frame.
            assert_eq!(mask.at(3, y), 0.0);
            assert_eq!(out.pixel(3, y, 0), 0.0);
            for x in 0..3 {
                assert_eq!(mask.at(x, y), 1.0);
                assert_eq!(out.pixel(x, y, 0), img.pixel(x + 1, y, 0));
            }
        }
    }

    #[test]
    fn warp_dimension_mismatch_is_error() {
        let img = gradient_image(4, 4);
        let flow = FlowField::zeros(3, 4);
        assert!(warp_with_flow(&img, &flow).is_err());
    }

    #[test]
    fn overlap_of_half_planes_is_strip() {
        let mut m1 = Mask::zeros(4, 8);
        let mut m2 = Mask::zeros(4, 8);
        for y in 0..4 {
            for x in 0..5 {
                m1.set(x, y, 1.0); // x in [0, 4]
            }
            for x in 3..8 {
                m2.set(x, y, 1.0); // x in [3, 7]
            }
        }
        let olp = overlap_mask(&m1, &m2).unwrap();
        // Brute-force count of the strip x in [3, 4].
        let mut expected = 0;
        for y in 0..4 {
            for x in 0..8 {
                if m1.at(x, y) > 0.0 && m2.at(x, y) > 0.0 {
                    expected += 1;
                }
            }
        }
        assert_eq!(olp.count_nonzero(), expected);
        assert_eq!(expected, 2 * 4);
    }

    #[test]
    fn overlap_ones_and_zeros() {
        let ones = Mask::ones(3, 3);
        let zeros = Mask::zeros(3, 3);
        assert_eq!(overlap_mask(&ones, &ones).unwrap().data, ones.data);
        assert_eq!(overlap_mask(&ones, &zeros).unwrap().data, zeros.data);
    }

    #[test]
    fn fuse_rules_match_per_pixel_reference() {
        let h = 6;
        let w = 6;
        let mut a = Image::filled(h, w, 1, 1.0);
        let b = Image::filled(h, w, 1, 0.0);
        let mut mask_a = Mask::zeros(h, w);
        let mut mask_b = Mask::zeros(h, w);
        // Checkerboard-ish masks with a shared band in the middle.
        for y in 0..h {
            for x in 0..w {
                *a.pixel_mut(x, y, 0) = ((x + y) % 2) as f64;
                if x < 4 {
                    mask_a.set(x, y, 1.0);
                }
                if x >= 2 {
                    mask_b.set(x, y, 1.0);
                }
            }
        }
        let fused = average_fuse(&a, &mask_a, &b, &mask_b).unwrap();
        for y in 0..h {
            for x in 0..w {
                let expected = match (mask_a.at(x, y) > 0.0, mask_b.at(x, y) > 0.0) {
                    (true, true) => 0.5 * (a.pixel(x, y, 0) + b.pixel(x, y, 0)),
                    (true, false) => a.pixel(x, y, 0),
                    (false, true) => b.pixel(x, y, 0),
                    (false, false) => 0.0,
                };
                assert_eq!(fused.pixel(x, y, 0), expected);
            }
        }
    }

    #[test]
    fn fuse_is_symmetric() {
        let a = gradient_image(5, 5);
        let b = Image::filled(5, 5, 1, 0.25);
        let ma = Mask::ones(5, 5);
        let mut mb = Mask::ones(5, 5);
        mb.set(0, 0, 0.0);
        let ab = average_fuse(&a, &ma, &b, &mb).unwrap();
        let ba = average_fuse(&b, &mb, &a, &ma).unwrap();
        assert_eq!(ab.data, ba.data);
    }

    #[test]
    fn fuse_identical_full_overlap_is_identity() {
        let a = gradient_image(4, 4);
        let m = Mask::ones(4, 4);
        let fused = average_fuse(&a, &m, &a, &m).unwrap();
        assert_eq!(fused.data, a.data);
    }

    #[test]
    fn wff1_round_trip() {
        let mut flow = FlowField::zeros(3, 4);
        for i in 0..12 {
            flow.dx[i] = i as f64 * 0.5;
            flow.dy[i] = -(i as f64) * 0.25;
        }
        let mut buf = Vec::new();
        flow.write_wff1(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"WFF1");
        assert_eq!(buf.len(), 4 + 8 + 2 * 12 * 4);
        let back = FlowField::read_wff1(buf.as_slice()).unwrap();
        assert_eq!(back, flow);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = gradient_image(8, 9);
        img.save(&path).unwrap();
        let back = Image::load(&path).unwrap();
        assert_eq!(back.height, 8);
        assert_eq!(back.width, 9);
        assert_eq!(back.channels, 1);
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pnm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("img.pgm");
        let gray = gradient_image(6, 7);
        gray.save(&pgm).unwrap();
        let back = Image::load(&pgm).unwrap();
        assert_eq!((back.height, back.width, back.channels), (6, 7, 1));

        let ppm = dir.path().join("img.ppm");
        let mut rgb = Image::filled(5, 4, 3, 0.0);
        for (i, v) in rgb.data.iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        rgb.save(&ppm).unwrap();
        let back = Image::load(&ppm).unwrap();
        assert_eq!((back.height, back.width, back.channels), (5, 4, 3));
        for (a, b) in rgb.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
