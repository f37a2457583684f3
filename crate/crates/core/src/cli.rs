//! Command-line front end. Exit codes: 0 success, 1 input/usage error,
//! 2 numerical failure.

use crate::amoe::{fuse, load_params, reg_loss, route, FeatureMap};
use crate::error::Error;
use crate::homography::Homography;
use crate::imaging::{overlap_mask, warp_with_flow, FlowField, Image};
use crate::metrics::metric_report;
use crate::objective::{IntraMode, WarpBackend};
use crate::stitcher::{generate_synthetic_pair, ingest_matches, stitch, StitchConfig};
use crate::tps::bench_tps;
use clap::{Args, Parser, Subcommand};
use std::collections::HashMap;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "warpforge",
    about = "Pair stitching via middle-plane homography decomposition and FFD-accelerated TPS warps",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch an image pair from a correspondence file.
    Stitch(StitchArgs),
    /// Benchmark vanilla vs FFD TPS evaluation.
    Bench(BenchArgs),
    /// Masked quality metrics for two warped images and their masks.
    Metrics(MetricsArgs),
    /// Route and fuse two feature maps with a saved parameter blob.
    FuseDemo(FuseDemoArgs),
    /// Generate a synthetic pair with ground truth from a base image.
    Synth(SynthArgs),
    /// Warp an image by a flow file or a homography.
    Warp(WarpArgs),
}

#[derive(Args)]
struct StitchArgs {
    /// Reference image (PNG/PPM/PGM).
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Target image.
    #[arg(long = "tgt")]
    target: PathBuf,
    /// Correspondence record file.
    #[arg(long)]
    matches: PathBuf,
    /// Output panorama path.
    #[arg(long, default_value = "stitched.png")]
    out: PathBuf,
    /// Run-report path.
    #[arg(long, default_value = "report.txt")]
    report: PathBuf,
    /// key=value defaults loaded before flag overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

/// StitchConfig fields as optional flags; unset values fall back to the
/// config file and then to the defaults.
#[derive(Args, Default)]
struct ConfigOverrides {
    #[arg(long)]
    lambda_h: Option<f64>,
    #[arg(long)]
    lambda_t: Option<f64>,
    #[arg(long)]
    w_s: Option<f64>,
    #[arg(long)]
    w_r: Option<f64>,
    #[arg(long)]
    lambda_e: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    u_cells: Option<usize>,
    #[arg(long)]
    v_cells: Option<usize>,
    /// as-written | prose
    #[arg(long)]
    intra_mode: Option<String>,
    #[arg(long)]
    ransac_threshold: Option<f64>,
    #[arg(long)]
    ransac_iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// vanilla | ffd
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_canvas_dim: Option<usize>,
    /// Comma-separated blur sigmas for the coarse-to-fine warm start.
    #[arg(long)]
    pyramid: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated HxW resolutions, e.g. 566x800,1329x2000.
    #[arg(long, default_value = "566x800,1329x2000")]
    resolutions: String,
    #[arg(long, default_value_t = 12)]
    u_cells: usize,
    #[arg(long, default_value_t = 12)]
    v_cells: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long = "tgt")]
    target: PathBuf,
    /// Validity mask of the warped reference (grayscale image).
    #[arg(long)]
    mask_ref: PathBuf,
    /// Validity mask of the warped target.
    #[arg(long)]
    mask_tgt: PathBuf,
    /// Also append a CSV row `mpsnr,mssim,mrmse,overlap_pixels` to stdout.
    #[arg(long, default_value_t = false)]
    csv: bool,
}

#[derive(Args)]
struct FuseDemoArgs {
    /// Semantic feature map (WFM1 file).
    #[arg(long)]
    map_s: PathBuf,
    /// Geometric feature map (WFM1 file).
    #[arg(long)]
    map_g: PathBuf,
    /// AMOE parameter blob.
    #[arg(long)]
    params: PathBuf,
    /// Fused map output (WFM1).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    lambda_e: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Base image (must be at least 128x128).
    #[arg(long)]
    base: PathBuf,
    /// Output directory for ref.png, tgt.png, flow.wff1, matches.txt.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Corner displacement bound of the homography component, in pixels.
    #[arg(long, default_value_t = 6.0)]
    homography_magnitude: f64,
    /// Control-offset bound of the TPS component, in pixels.
    #[arg(long, default_value_t = 4.0)]
    tps_magnitude: f64,
}

#[derive(Args)]
struct WarpArgs {
    #[arg(long)]
    image: PathBuf,
    /// WFF1 flow file (alternative to --homography).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// Nine comma-separated row-major homography entries.
    #[arg(long)]
    homography: Option<String>,
    #[arg(long, default_value = "warped.png")]
    out: PathBuf,
    /// Optional validity-mask output (grayscale PNG).
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

/// Runs the CLI on the given argument vector and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { 0 } else { 1 };
        }
    };
    let result = match cli.command {
        Command::Stitch(a) => cmd_stitch(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::FuseDemo(a) => cmd_fuse_demo(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Warp(a) => cmd_warp(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Degenerate(_)
        | Error::Singular(_)
        | Error::NoModel
        | Error::Numerical(_)
        | Error::EmptyOverlap
        | Error::OverlapTooThin => 2,
        _ => 1,
    }
}

fn parse_kv_file(path: &PathBuf) -> crate::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse(format!(
                "config line {}: expected key=value",
                lineno + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_pyramid(spec: &str) -> crate::Result<Vec<f64>> {
    if spec.trim().is_empty() || spec.trim() == "none" {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad pyramid sigma '{t}'")))
        })
        .collect()
}

fn parse_intra_mode(s: &str) -> crate::Result<IntraMode> {
    match s {
        "as-written" => Ok(IntraMode::AsWritten),
        "prose" => Ok(IntraMode::Prose),
        other => Err(Error::Parse(format!(
            "unknown intra mode '{other}' (as-written | prose)"
        ))),
    }
}

/// Merge order: built-in defaults, then config file, then explicit flags.
fn build_stitch_config(
    file: Option<&PathBuf>,
    flags: &ConfigOverrides,
) -> crate::Result<StitchConfig> {
    let mut cfg = StitchConfig::default();
    if let Some(path) = file {
        let kv = parse_kv_file(path)?;
        macro_rules! set {
            ($key:literal, $slot:expr, $ty:ty) => {
                if let Some(raw) = kv.get($key) {
                    $slot = raw.parse::<$ty>().map_err(|_| {
                        Error::Parse(format!("config key {}: bad value '{raw}'", $key))
                    })?;
                }
            };
        }
        set!("lambda_h", cfg.loss.lambda_h, f64);
        set!("lambda_t", cfg.loss.lambda_t, f64);
        set!("w_s", cfg.loss.w_s, f64);
        set!("w_r", cfg.loss.w_r, f64);
        set!("lambda_e", cfg.loss.lambda_e, f64);
        set!("alpha", cfg.loss.alpha, f64);
        set!("u_cells", cfg.loss.u_cells, usize);
        set!("v_cells", cfg.loss.v_cells, usize);
        set!("ransac_threshold", cfg.ransac_threshold, f64);
        set!("ransac_iterations", cfg.ransac_iterations, usize);
        set!("step_size", cfg.step_size, f64);
        set!("max_iterations", cfg.max_iterations, usize);
        set!("tolerance", cfg.tolerance, f64);
        set!("seed", cfg.seed, u64);
        set!("max_canvas_dim", cfg.max_canvas_dim, usize);
        if let Some(raw) = kv.get("intra_mode") {
            cfg.loss.intra_mode = parse_intra_mode(raw)?;
        }
        if let Some(raw) = kv.get("backend") {
            cfg.backend = raw.parse::<WarpBackend>()?;
        }
        if let Some(raw) = kv.get("pyramid") {
            cfg.pyramid = parse_pyramid(raw)?;
        }
        for key in kv.keys() {
            const KNOWN: [&str; 18] = [
                "lambda_h",
                "lambda_t",
                "w_s",
                "w_r",
                "lambda_e",
                "alpha",
                "u_cells",
                "v_cells",
                "intra_mode",
                "ransac_threshold",
                "ransac_iterations",
                "step_size",
                "max_iterations",
                "tolerance",
                "backend",
                "seed",
                "max_canvas_dim",
                "pyramid",
            ];
            if !KNOWN.contains(&key.as_str()) {
                return Err(Error::Parse(format!("unknown config key '{key}'")));
            }
        }
    }
    macro_rules! flag {
        ($field:expr, $slot:expr) => {
            if let Some(v) = $field {
                $slot = v;
            }
        };
    }
    flag!(flags.lambda_h, cfg.loss.lambda_h);
    flag!(flags.lambda_t, cfg.loss.lambda_t);
    flag!(flags.w_s, cfg.loss.w_s);
    flag!(flags.w_r, cfg.loss.w_r);
    flag!(flags.lambda_e, cfg.loss.lambda_e);
    flag!(flags.alpha, cfg.loss.alpha);
    flag!(flags.u_cells, cfg.loss.u_cells);
    flag!(flags.v_cells, cfg.loss.v_cells);
    flag!(flags.ransac_threshold, cfg.ransac_threshold);
    flag!(flags.ransac_iterations, cfg.ransac_iterations);
    flag!(flags.step_size, cfg.step_size);
    flag!(flags.max_iterations, cfg.max_iterations);
    flag!(flags.tolerance, cfg.tolerance);
    flag!(flags.seed, cfg.seed);
    flag!(flags.max_canvas_dim, cfg.max_canvas_dim);
    if let Some(raw) = &flags.intra_mode {
        cfg.loss.intra_mode = parse_intra_mode(raw)?;
    }
    if let Some(raw) = &flags.backend {
        cfg.backend = raw.parse::<WarpBackend>()?;
    }
    if let Some(raw) = &flags.pyramid {
        cfg.pyramid = parse_pyramid(raw)?;
    }
    Ok(cfg)
}

fn cmd_stitch(a: StitchArgs) -> crate::Result<()> {
    let cfg = build_stitch_config(a.config.as_ref(), &a.overrides)?;
    let i_ref = Image::load(&a.reference)?;
    let i_tgt = Image::load(&a.target)?;
    let (_, _, matches) = ingest_matches(&a.matches)?;
    let (fused, report) = stitch(&cfg, &i_ref, &i_tgt, &matches)?;
    fused.save(&a.out)?;
    std::fs::write(&a.report, report.to_text())?;
    println!(
        "stitched {}x{} canvas, {} iterations, final mpsnr {}",
        report.canvas_w,
        report.canvas_h,
        report.iterations,
        if report.final_metrics.mpsnr.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:.3}", report.final_metrics.mpsnr)
        }
    );
    println!("panorama: {}", a.out.display());
    println!("report: {}", a.report.display());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> crate::Result<()> {
    let mut resolutions = Vec::new();
    for token in a.resolutions.split(',') {
        let Some((h, w)) = token.trim().split_once('x') else {
            return Err(Error::Parse(format!(
                "bad resolution '{token}', expected HxW"
            )));
        };
        let h: usize = h
            .parse()
            .map_err(|_| Error::Parse(format!("bad height in '{token}'")))?;
        let w: usize = w
            .parse()
            .map_err(|_| Error::Parse(format!("bad width in '{token}'")))?;
        resolutions.push((h, w));
    }
    let report = bench_tps(&resolutions, a.u_cells, a.v_cells, a.repeats, a.seed)?;
    match &a.out {
        Some(path) => {
            let f = std::fs::File::create(path)?;
            report.write_csv(std::io::BufWriter::new(f))?;
            println!("benchmark written to {}", path.display());
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn cmd_metrics(a: MetricsArgs) -> crate::Result<()> {
    let o_ref = Image::load(&a.reference)?;
    let o_tgt = Image::load(&a.target)?;
    let to_mask = |img: Image| crate::imaging::Mask {
        height: img.height,
        width: img.width,
        data: if img.channels == 1 {
            img.data
        } else {
            img.data.chunks(3).map(|c| c[0]).collect()
        },
    };
    let m_ref = to_mask(Image::load(&a.mask_ref)?);
    let m_tgt = to_mask(Image::load(&a.mask_tgt)?);
    let olp = overlap_mask(&m_ref, &m_tgt)?.binarize(0.999);
    let report = metric_report(&o_ref, &o_tgt, &olp)?;
    print!("{}", report.to_key_values());
    if a.csv {
        println!("mpsnr,mssim,mrmse,overlap_pixels");
        println!("{}", report.to_csv_row());
    }
    Ok(())
}

fn cmd_fuse_demo(a: FuseDemoArgs) -> crate::Result<()> {
    let f_s = FeatureMap::read_wfm1(std::fs::File::open(&a.map_s)?)?;
    let f_g = FeatureMap::read_wfm1(std::fs::File::open(&a.map_g)?)?;
    let (router, experts) = load_params(std::fs::File::open(&a.params)?)?;
    let weights = route(&router, &f_s, &f_g)?;
    let fused = fuse(&experts, &weights, &f_s, &f_g)?;
    println!(
        "weights: w_s={:.6} w_g={:.6} w_h={:.6}",
        weights.w_s, weights.w_g, weights.w_h
    );
    println!("reg_loss={:.6}", reg_loss(&weights, a.lambda_e));
    if let Some(path) = &a.out {
        fused.write_wfm1(std::fs::File::create(path)?)?;
        println!("fused map: {}", path.display());
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> crate::Result<()> {
    let base = Image::load(&a.base)?;
    let pair = generate_synthetic_pair(&base, a.seed, a.homography_magnitude, a.tps_magnitude)?;
    std::fs::create_dir_all(&a.out_dir)?;
    pair.i_ref.save(a.out_dir.join("ref.png"))?;
    pair.i_tgt.save(a.out_dir.join("tgt.png"))?;
    pair.flow.save(a.out_dir.join("flow.wff1"))?;
    let fmt_pts = |pts: &[(f64, f64)]| {
        let entries: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("[{x:.6},{y:.6}]"))
            .collect();
        format!("[{}]", entries.join(","))
    };
    let matches_text = format!(
        "# synthetic pair: seed={} homography_magnitude={} tps_magnitude={}\nref_points={}\ntgt_points={}\n",
        a.seed,
        a.homography_magnitude,
        a.tps_magnitude,
        fmt_pts(&pair.ref_kp.points),
        fmt_pts(&pair.tgt_kp.points),
    );
    std::fs::write(a.out_dir.join("matches.txt"), matches_text)?;
    println!(
        "synthetic pair with {} matches in {}",
        pair.matches.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_warp(a: WarpArgs) -> crate::Result<()> {
    let img = Image::load(&a.image)?;
    let flow = match (&a.flow, &a.homography) {
        (Some(path), None) => FlowField::load(path)?,
        (None, Some(spec)) => {
            let vals: Vec<f64> = spec
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse("bad --homography entries".into()))?;
            if vals.len() != 9 {
                return Err(Error::Parse(format!(
                    "--homography needs 9 entries, got {}",
                    vals.len()
                )));
            }
            let h = Homography::from_matrix(nalgebra::Matrix3::from_row_slice(&vals));
            crate::homography::homography_to_flow(&h, img.height, img.width)?
        }
        _ => {
            return Err(Error::Parse(
                "provide exactly one of --flow or --homography".into(),
            ))
        }
    };
    let (warped, mask) = warp_with_flow(&img, &flow)?;
    warped.save(&a.out)?;
    if let Some(path) = &a.mask_out {
        let mask_img = Image::from_data(mask.height, mask.width, 1, mask.data)?;
        mask_img.save(path)?;
    }
    println!("warped image: {}", a.out.display());
    Ok(())
}
