//! Python bindings: raster types, homography fitting and decomposition,
//! TPS/FFD evaluation, warping, fusion, metrics, and the stitch pipeline.

// The ? operator inside #[pymethods] converts PyErr to PyErr.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use warpforge::amoe::FusionWeights;
use warpforge::error::Error;
use warpforge::homography as hom;
use warpforge::imaging;
use warpforge::metrics;
use warpforge::npt;
use warpforge::stitcher;
use warpforge::tps;

fn map_err(e: Error) -> PyErr {
    match e {
        Error::Degenerate(_)
        | Error::Singular(_)
        | Error::NoModel
        | Error::Numerical(_)
        | Error::EmptyOverlap
        | Error::OverlapTooThin => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Dense image with intensities in [0, 1], row-major and channel-interleaved.
#[pyclass(name = "Image")]
#[derive(Clone)]
struct PyImage {
    inner: imaging::Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyImage {
            inner: imaging::Image::from_data(height, width, channels, data).map_err(map_err)?,
        })
    }

    #[staticmethod]
    fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        PyImage {
            inner: imaging::Image::filled(height, width, channels, value),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyImage {
            inner: imaging::Image::load(path).map_err(map_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(map_err)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data.clone()
    }

    fn pixel(&self, x: usize, y: usize, c: usize) -> f64 {
        self.inner.pixel(x, y, c)
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}x{})",
            self.inner.height, self.inner.width, self.inner.channels
        )
    }
}

/// Backward per-pixel displacement field.
#[pyclass(name = "FlowField")]
#[derive(Clone)]
struct PyFlow {
    inner: imaging::FlowField,
}

#[pymethods]
impl PyFlow {
    #[new]
    fn new(height: usize, width: usize, dx: Vec<f64>, dy: Vec<f64>) -> PyResult<Self> {
        if dx.len() != height * width || dy.len() != height * width {
            return Err(PyValueError::new_err("dx/dy length must be height*width"));
        }
        Ok(PyFlow {
            inner: imaging::FlowField {
                height,
                width,
                dx,
                dy,
            },
        })
    }

    #[staticmethod]
    fn zeros(height: usize, width: usize) -> Self {
        PyFlow {
            inner: imaging::FlowField::zeros(height, width),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyFlow {
            inner: imaging::FlowField::load(path).map_err(map_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(map_err)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    fn dx(&self) -> Vec<f64> {
        self.inner.dx.clone()
    }

    fn dy(&self) -> Vec<f64> {
        self.inner.dy.clone()
    }
}

/// 3x3 projective transform.
#[pyclass(name = "Homography")]
#[derive(Clone)]
struct PyHomography {
    inner: hom::Homography,
}

#[pymethods]
impl PyHomography {
    #[new]
    fn new(row_major: [f64; 9]) -> Self {
        PyHomography {
            inner: hom::Homography::from_matrix(nalgebra::Matrix3::from_row_slice(&row_major)),
        }
    }

    #[staticmethod]
    fn identity() -> Self {
        PyHomography {
            inner: hom::Homography::identity(),
        }
    }

    fn to_list(&self) -> [f64; 9] {
        self.inner.to_row_major()
    }

    fn map_point(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        self.inner.map_point(x, y).map_err(map_err)
    }

    fn inverse(&self) -> PyResult<Self> {
        Ok(PyHomography {
            inner: self.inner.inverse().map_err(map_err)?,
        })
    }

    fn compose(&self, other: &PyHomography) -> Self {
        PyHomography {
            inner: self.inner.compose(&other.inner),
        }
    }

    fn to_flow(&self, height: usize, width: usize) -> PyResult<PyFlow> {
        Ok(PyFlow {
            inner: hom::homography_to_flow(&self.inner, height, width).map_err(map_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Homography({:?})", self.inner.to_row_major())
    }
}

/// Fitted thin-plate spline for a uniform control lattice.
#[pyclass(name = "TpsSolution")]
#[derive(Clone)]
struct PyTps {
    inner: tps::TpsSolution,
    frame_w: usize,
    frame_h: usize,
}

#[pymethods]
impl PyTps {
    /// Exact interpolating fit of `offsets` (length (u+1)*(v+1), row-major)
    /// on the uniform lattice of a `frame_w x frame_h` frame.
    #[new]
    fn new(
        u_cells: usize,
        v_cells: usize,
        frame_w: usize,
        frame_h: usize,
        offsets: Vec<(f64, f64)>,
    ) -> PyResult<Self> {
        let mut grid = tps::ControlGrid::uniform(u_cells, v_cells, frame_w, frame_h);
        if offsets.len() != grid.num_points() {
            return Err(PyValueError::new_err(format!(
                "expected {} offsets, got {}",
                grid.num_points(),
                offsets.len()
            )));
        }
        grid.offsets = offsets;
        Ok(PyTps {
            inner: tps::tps_fit(&grid).map_err(map_err)?,
            frame_w,
            frame_h,
        })
    }

    fn kernel_weights(&self) -> Vec<(f64, f64)> {
        self.inner.kernel_weights.clone()
    }

    fn affine(&self) -> [[f64; 2]; 3] {
        self.inner.affine
    }

    /// Full-resolution flow via the dense (vanilla) evaluation path.
    fn eval_flow(&self) -> PyResult<PyFlow> {
        let mesh = tps::Meshgrid::full(self.frame_h, self.frame_w);
        Ok(PyFlow {
            inner: tps::tps_eval_flow(&self.inner, &mesh).map_err(map_err)?,
        })
    }

    /// Full-resolution flow via the compress-then-restore FFD path.
    fn ffd_eval_flow(&self) -> PyResult<PyFlow> {
        Ok(PyFlow {
            inner: tps::ffd_tps_eval(&self.inner, self.frame_w, self.frame_h)
                .map_err(map_err)?,
        })
    }
}

/// Cubic B-spline basis [N0, N1, N2, N3] at local parameter t in [0, 1).
#[pyfunction]
fn bspline_basis(t: f64) -> PyResult<[f64; 4]> {
    Ok(tps::bspline_basis(t).map_err(map_err)?.n)
}

/// Least-squares homography mapping the first point of each pair to the
/// second (normalized DLT).
#[pyfunction]
fn solve_dlt(pairs: Vec<((f64, f64), (f64, f64))>) -> PyResult<PyHomography> {
    Ok(PyHomography {
        inner: hom::solve_dlt(&hom::Correspondences { pairs }).map_err(map_err)?,
    })
}

/// RANSAC homography fit; returns the model and the inlier indices.
#[pyfunction]
fn ransac_fit(
    pairs: Vec<((f64, f64), (f64, f64))>,
    threshold: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(PyHomography, Vec<usize>)> {
    let (h, inliers) =
        hom::ransac_fit(&hom::Correspondences { pairs }, threshold, iterations, seed)
            .map_err(map_err)?;
    Ok((PyHomography { inner: h }, inliers))
}

/// Middle-plane split of the 4-pt offsets (corner order TL, TR, BL, BR):
/// returns `(H_ref, H_tgt)` with `H * H_ref = H_tgt`.
#[pyfunction]
fn decompose_middle_plane(
    offsets: [[f64; 2]; 4],
    frame_w: usize,
    frame_h: usize,
) -> PyResult<(PyHomography, PyHomography)> {
    let o = hom::FourPtOffsets {
        offsets,
        frame_w,
        frame_h,
    };
    let (h_ref, h_tgt) = hom::decompose_middle_plane(&o).map_err(map_err)?;
    Ok((
        PyHomography { inner: h_ref },
        PyHomography { inner: h_tgt },
    ))
}

/// Backward warp; returns the warped image and its validity mask (1-channel).
#[pyfunction]
fn warp_with_flow(img: &PyImage, flow: &PyFlow) -> PyResult<(PyImage, PyImage)> {
    let (out, mask) = imaging::warp_with_flow(&img.inner, &flow.inner).map_err(map_err)?;
    let mask_img = imaging::Image::from_data(mask.height, mask.width, 1, mask.data)
        .map_err(map_err)?;
    Ok((PyImage { inner: out }, PyImage { inner: mask_img }))
}

/// Average fusion of two masked images.
#[pyfunction]
fn average_fuse(
    a: &PyImage,
    mask_a: &PyImage,
    b: &PyImage,
    mask_b: &PyImage,
) -> PyResult<PyImage> {
    let to_mask = |m: &PyImage| imaging::Mask {
        height: m.inner.height,
        width: m.inner.width,
        data: m.inner.data.clone(),
    };
    Ok(PyImage {
        inner: imaging::average_fuse(&a.inner, &to_mask(mask_a), &b.inner, &to_mask(mask_b))
            .map_err(map_err)?,
    })
}

/// (mPSNR, mSSIM, mRMSE, overlap_pixels) on the binary overlap mask.
#[pyfunction]
fn masked_metrics(
    o_ref: &PyImage,
    o_tgt: &PyImage,
    mask: &PyImage,
) -> PyResult<(f64, f64, f64, usize)> {
    let m = imaging::Mask {
        height: mask.inner.height,
        width: mask.inner.width,
        data: mask.inner.data.clone(),
    }
    .binarize(0.999);
    let rep = metrics::metric_report(&o_ref.inner, &o_tgt.inner, &m).map_err(map_err)?;
    Ok((rep.mpsnr, rep.mssim, rep.mrmse, rep.overlap_pixels))
}

/// Expert regularization value for weights on the simplex.
#[pyfunction]
fn reg_loss(w_s: f64, w_g: f64, w_h: f64, lambda_e: f64) -> f64 {
    warpforge::amoe::reg_loss(&FusionWeights { w_s, w_g, w_h }, lambda_e)
}

/// Encode keypoints and rasterize them onto the 1/8 or 1/16 grid; returns
/// (channels, grid_h, grid_w, data) with channel-major data.
#[pyfunction]
#[pyo3(signature = (points, frame_w, frame_h, scale_divisor, channels=8, seed=0))]
fn rasterize_points(
    points: Vec<(f64, f64)>,
    frame_w: usize,
    frame_h: usize,
    scale_divisor: usize,
    channels: usize,
    seed: u64,
) -> PyResult<(usize, usize, usize, Vec<f64>)> {
    let scale = match scale_divisor {
        8 => npt::Scale::Eighth,
        16 => npt::Scale::Sixteenth,
        other => {
            return Err(PyValueError::new_err(format!(
                "scale divisor must be 8 or 16, got {other}"
            )))
        }
    };
    let kp = npt::KeypointSet {
        points,
        descriptors: Vec::new(),
        frame_w,
        frame_h,
    };
    let pf = npt::encode_points(&kp, channels, seed).map_err(map_err)?;
    let map = npt::rasterize(&pf, scale, frame_w, frame_h).map_err(map_err)?;
    Ok((map.channels, map.grid_h, map.grid_w, map.data))
}

/// Generate a synthetic pair; returns (i_ref, i_tgt, flow, matches).
#[pyfunction]
fn generate_synthetic_pair(
    base: &PyImage,
    seed: u64,
    homography_magnitude: f64,
    tps_magnitude: f64,
) -> PyResult<(PyImage, PyImage, PyFlow, Vec<((f64, f64), (f64, f64))>)> {
    let pair = stitcher::generate_synthetic_pair(
        &base.inner,
        seed,
        homography_magnitude,
        tps_magnitude,
    )
    .map_err(map_err)?;
    Ok((
        PyImage { inner: pair.i_ref },
        PyImage { inner: pair.i_tgt },
        PyFlow { inner: pair.flow },
        pair.matches.pairs,
    ))
}

/// Stitch a pair from matched points with the default configuration;
/// returns (panorama, report_text).
#[pyfunction]
#[pyo3(signature = (i_ref, i_tgt, pairs, max_iterations=500, seed=7))]
fn stitch_pair(
    i_ref: &PyImage,
    i_tgt: &PyImage,
    pairs: Vec<((f64, f64), (f64, f64))>,
    max_iterations: usize,
    seed: u64,
) -> PyResult<(PyImage, String)> {
    let cfg = stitcher::StitchConfig {
        max_iterations,
        seed,
        ..stitcher::StitchConfig::default()
    };
    let (fused, report) = stitcher::stitch(
        &cfg,
        &i_ref.inner,
        &i_tgt.inner,
        &hom::Correspondences { pairs },
    )
    .map_err(map_err)?;
    Ok((PyImage { inner: fused }, report.to_text()))
}

/// TPS benchmark CSV for `[(h, w), ...]` resolutions.
#[pyfunction]
#[pyo3(signature = (resolutions, u_cells=12, v_cells=12, repeats=3, seed=7))]
fn bench_csv(
    resolutions: Vec<(usize, usize)>,
    u_cells: usize,
    v_cells: usize,
    repeats: usize,
    seed: u64,
) -> PyResult<String> {
    Ok(tps::bench_tps(&resolutions, u_cells, v_cells, repeats, seed)
        .map_err(map_err)?
        .to_csv())
}

#[pymodule]
fn warpforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyFlow>()?;
    m.add_class::<PyHomography>()?;
    m.add_class::<PyTps>()?;
    m.add_function(wrap_pyfunction!(bspline_basis, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dlt, m)?)?;
    m.add_function(wrap_pyfunction!(ransac_fit, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_middle_plane, m)?)?;
    m.add_function(wrap_pyfunction!(warp_with_flow, m)?)?;
    m.add_function(wrap_pyfunction!(average_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(masked_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(reg_loss, m)?)?;
    m.add_function(wrap_pyfunction!(rasterize_points, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic_pair, m)?)?;
    m.add_function(wrap_pyfunction!(stitch_pair, m)?)?;
    m.add_function(wrap_pyfunction!(bench_csv, m)?)?;
    Ok(())
}
