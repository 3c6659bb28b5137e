//! Command-line front end: scene generation, lattice metrics, spectra, and
//! layer separation, with JSON on stdout throughout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use latsep::{
    are_equivalent, dist_lattice, dist_scale, dist_shape, find_peaks, fourtuple, generate_scene,
    lisa_run, polar_spectrum, render_overlay, to_descriptors, Complex, GrayImage, LatticeBasis,
    LatticeDescriptors, LisaConfig, MetricConfig, SceneSpec, TranslatedLattice,
};

const SCHEMA: &str = "latsep/1";

#[derive(Parser)]
#[command(
    name = "latsep",
    version,
    about = "Lattice representation, metrics, and layer separation for 2D point-lattice images"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic multi-lattice scene described by a JSON file.
    Generate {
        /// Scene description (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output image (PGM).
        #[arg(long)]
        out: PathBuf,
    },
    /// Distance between two lattices given as raw bases "re,im;re,im".
    Metric {
        /// First basis, two complex vectors: "re,im;re,im".
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        /// Second basis, same syntax.
        #[arg(long, allow_hyphen_values = true)]
        b: String,
        /// Length-versus-angle weight of the scale metric.
        #[arg(long, default_value_t = 0.05)]
        w: f64,
        /// Seam-angle grid resolution.
        #[arg(long = "N", default_value_t = 60, value_parser = clap::value_parser!(u64).range(2..))]
        n: u64,
    },
    /// Polar Fourier magnitude image and spectral peak list of an image.
    Spectrum {
        /// Input image (PGM).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output magnitude image (PGM, log-scaled, rows = angles).
        #[arg(long)]
        out: PathBuf,
        /// Also write the peak list to this JSON file.
        #[arg(long)]
        peaks: Option<PathBuf>,
        /// Maximum number of spectral components.
        #[arg(long = "J", default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..))]
        j: u64,
        /// Number of projection angles.
        #[arg(long, default_value_t = 360, value_parser = clap::value_parser!(u64).range(2..))]
        angles: u64,
    },
    /// Identify and sequentially separate superposed lattice layers.
    Separate {
        /// Input image (PGM).
        #[arg(long = "in")]
        input: PathBuf,
        /// Spectral components kept per round.
        #[arg(long = "J", default_value_t = 6, value_parser = clap::value_parser!(u64).range(2..))]
        j: u64,
        /// Correction iterations per layer (1 disables correction).
        #[arg(long = "K", default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        /// Over-fitting penalty weight.
        #[arg(long, default_value_t = 10.0)]
        gamma: f64,
        /// Particle PSF standard deviation in pixels.
        #[arg(long, default_value_t = 1.35)]
        sigma: f64,
        /// Also write the result JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a color overlay of the recovered layers (PPM).
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Scene JSON with ground-truth layers; adds greedy d_L matching.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Decide whether two bases span equivalent lattices.
    Equiv {
        /// First basis: "re,im;re,im".
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        /// Second basis, same syntax.
        #[arg(long, allow_hyphen_values = true)]
        b: String,
    },
}

enum Fail {
    Usage(String),
    Runtime(String),
}

impl Fail {
    fn usage(msg: impl Into<String>) -> Fail {
        Fail::Usage(msg.into())
    }

    fn runtime(msg: impl std::fmt::Display) -> Fail {
        Fail::Runtime(msg.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Fail::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// LATSEP_THREADS caps internal parallelism; 0 or unset means automatic.
fn init_threads() {
    if let Ok(v) = std::env::var("LATSEP_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn parse_complex(text: &str) -> Result<Complex, Fail> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(Fail::usage(format!(
            "expected a complex number \"re,im\", got \"{text}\""
        )));
    }
    let re = parts[0]
        .trim()
        .parse::<f64>()
        .map_err(|e| Fail::usage(format!("bad real part \"{}\": {e}", parts[0].trim())))?;
    let im = parts[1]
        .trim()
        .parse::<f64>()
        .map_err(|e| Fail::usage(format!("bad imaginary part \"{}\": {e}", parts[1].trim())))?;
    Ok(Complex::new(re, im))
}

fn parse_basis(text: &str) -> Result<(Complex, Complex), Fail> {
    let parts: Vec<&str> = text.split(';').collect();
    if parts.len() != 2 {
        return Err(Fail::usage(format!(
            "expected a basis \"re,im;re,im\", got \"{text}\""
        )));
    }
    Ok((parse_complex(parts[0])?, parse_complex(parts[1])?))
}

fn descriptors_from(text: &str) -> Result<LatticeDescriptors, Fail> {
    let (b1, b2) = parse_basis(text)?;
    let basis = LatticeBasis::new(b1, b2).map_err(Fail::runtime)?;
    to_descriptors(&basis).map_err(Fail::runtime)
}

fn load_image(path: &Path) -> Result<GrayImage, Fail> {
    GrayImage::load_pgm(path).map_err(|e| Fail::runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Fail> {
    std::fs::write(path, text).map_err(|e| Fail::runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::Generate { spec, out } => cmd_generate(&spec, &out),
        Cmd::Metric { a, b, w, n } => cmd_metric(&a, &b, w, n as usize),
        Cmd::Spectrum { input, out, peaks, j, angles } => {
            cmd_spectrum(&input, &out, peaks.as_deref(), j as usize, angles as usize)
        }
        Cmd::Separate { input, j, k, gamma, sigma, out, overlay, truth } => cmd_separate(
            &input,
            j as usize,
            k as usize,
            gamma,
            sigma,
            out.as_deref(),
            overlay.as_deref(),
            truth.as_deref(),
        ),
        Cmd::Equiv { a, b } => cmd_equiv(&a, &b),
    }
}

fn load_scene(path: &Path) -> Result<SceneSpec, Fail> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Fail::runtime(format!("{}: {e}", path.display())))?;
    SceneSpec::from_json(&text).map_err(|e| Fail::runtime(format!("{}: {e}", path.display())))
}

fn scene_lattices(scene: &SceneSpec) -> Result<Vec<TranslatedLattice>, Fail> {
    scene
        .layers
        .iter()
        .map(|l| l.to_lattice().map_err(Fail::runtime))
        .collect()
}

fn cmd_generate(spec_path: &Path, out: &Path) -> Result<(), Fail> {
    let scene = load_scene(spec_path)?;
    let img = generate_scene(&scene).map_err(Fail::runtime)?;
    img.save_pgm(out)
        .map_err(|e| Fail::runtime(format!("{}: {e}", out.display())))?;
    let layers: Vec<serde_json::Value> = scene_lattices(&scene)?
        .iter()
        .map(|t| {
            json!({
                "beta": [t.descriptors.beta().re, t.descriptors.beta().im],
                "rho": [t.descriptors.rho().re, t.descriptors.rho().im],
                "mu": [t.mu.re, t.mu.im],
            })
        })
        .collect();
    println!(
        "{}",
        json!({
            "schema": SCHEMA,
            "width": img.width(),
            "height": img.height(),
            "mean": img.mean(),
            "layers": layers,
        })
    );
    Ok(())
}

fn cmd_metric(a: &str, b: &str, w: f64, n: usize) -> Result<(), Fail> {
    let (a1, a2) = parse_basis(a)?;
    let (b1, b2) = parse_basis(b)?;
    let basis_a = LatticeBasis::new(a1, a2).map_err(Fail::runtime)?;
    let basis_b = LatticeBasis::new(b1, b2).map_err(Fail::runtime)?;
    let da = to_descriptors(&basis_a).map_err(Fail::runtime)?;
    let db = to_descriptors(&basis_b).map_err(Fail::runtime)?;
    let cfg = MetricConfig { w, n_grid: n, refine: true };
    let result = dist_lattice(&da, &db, &cfg).map_err(Fail::runtime)?;
    let dk = dist_scale(da.beta(), db.beta(), w).map_err(Fail::runtime)?;
    let dp = dist_shape(da.rho(), db.rho()).map_err(Fail::runtime)?;
    let ta = fourtuple(&basis_a).map_err(Fail::runtime)?;
    let tb = fourtuple(&basis_b).map_err(Fail::runtime)?;
    println!(
        "{}",
        json!({
            "schema": SCHEMA,
            "d_L": result.value,
            "path": result.path.to_string(),
            "phi": result.phi,
            "phi_prime": result.phi_prime,
            "d_K": dk,
            "d_P": dp,
            "fourtuple_a": [ta.0, ta.1, ta.2, ta.3],
            "fourtuple_b": [tb.0, tb.1, tb.2, tb.3],
        })
    );
    Ok(())
}

fn cmd_spectrum(
    input: &Path,
    out: &Path,
    peaks_out: Option<&Path>,
    j: usize,
    n_angles: usize,
) -> Result<(), Fail> {
    let img = load_image(input)?;
    let spec = polar_spectrum(&img, n_angles).map_err(Fail::runtime)?;

    let (n, m) = (spec.angles.len(), spec.radii.len());
    let mut view = GrayImage::new(m, n).map_err(Fail::runtime)?;
    let mut top = 0.0f64;
    for row in &spec.magnitudes {
        for &v in row {
            top = top.max(v);
        }
    }
    if top > 0.0 {
        let scale = 1.0 / (1.0 + top).ln();
        for (i, row) in spec.magnitudes.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                view.set(k, i, (1.0 + v).ln() * scale);
            }
        }
    }
    view.save_pgm(out)
        .map_err(|e| Fail::runtime(format!("{}: {e}", out.display())))?;

    let (peaks, empty) = match find_peaks(&spec, j) {
        Ok(p) => (p, false),
        Err(latsep::Error::EmptySpectrum) => (Vec::new(), true),
        Err(e) => return Err(Fail::runtime(e)),
    };
    let peak_list: Vec<serde_json::Value> = peaks
        .iter()
        .map(|p| json!({ "radius": p.radius, "angle": p.angle, "magnitude": p.magnitude }))
        .collect();
    if let Some(path) = peaks_out {
        write_text(path, &serde_json::Value::Array(peak_list.clone()).to_string())?;
    }
    println!(
        "{}",
        json!({ "schema": SCHEMA, "empty_spectrum": empty, "peaks": peak_list })
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_separate(
    input: &Path,
    j: usize,
    k: usize,
    gamma: f64,
    sigma: f64,
    out: Option<&Path>,
    overlay: Option<&Path>,
    truth: Option<&Path>,
) -> Result<(), Fail> {
    let img = load_image(input)?;
    let cfg = LisaConfig {
        j_components: j,
        k_corrections: k,
        gamma,
        sigma,
        ..LisaConfig::default()
    };
    let result = lisa_run(&img, &cfg).map_err(Fail::runtime)?;
    let mut doc = result.to_json();
    doc["schema"] = json!(SCHEMA);

    if let Some(truth_path) = truth {
        let scene = load_scene(truth_path)?;
        let truths = scene_lattices(&scene)?;
        let mcfg = MetricConfig::default();
        let mut matches = Vec::new();
        let mut free_layers: Vec<usize> = (0..result.layers.len()).collect();
        let mut free_truths: Vec<usize> = (0..truths.len()).collect();
        while !free_layers.is_empty() && !free_truths.is_empty() {
            let mut best: Option<(f64, usize, usize)> = None;
            for &li in &free_layers {
                for &ti in &free_truths {
                    let d = dist_lattice(
                        &result.layers[li].descriptors,
                        &truths[ti].descriptors,
                        &mcfg,
                    )
                    .map_err(Fail::runtime)?
                    .value;
                    if best.is_none() || d < best.unwrap().0 {
                        best = Some((d, li, ti));
                    }
                }
            }
            let (d, li, ti) = best.unwrap();
            matches.push(json!({ "layer": li, "truth": ti, "d_L": d }));
            free_layers.retain(|&x| x != li);
            free_truths.retain(|&x| x != ti);
        }
        doc["truth_match"] = serde_json::Value::Array(matches);
    }

    if let Some(overlay_path) = overlay {
        let lattices: Vec<TranslatedLattice> = result
            .layers
            .iter()
            .map(|l| TranslatedLattice { descriptors: l.descriptors, mu: l.mu })
            .collect();
        let rgb = render_overlay(&img, &lattices, sigma).map_err(Fail::runtime)?;
        rgb.save_ppm(overlay_path)
            .map_err(|e| Fail::runtime(format!("{}: {e}", overlay_path.display())))?;
    }

    let text = doc.to_string();
    if let Some(path) = out {
        write_text(path, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_equiv(a: &str, b: &str) -> Result<(), Fail> {
    let da = descriptors_from(a)?;
    let db = descriptors_from(b)?;
    println!(
        "{}",
        json!({
            "schema": SCHEMA,
            "equivalent": are_equivalent(&da, &db),
            "canonical_a": {
                "beta": [da.beta().re, da.beta().im],
                "rho": [da.rho().re, da.rho().im],
            },
            "canonical_b": {
                "beta": [db.beta().re, db.beta().im],
                "rho": [db.rho().re, db.rho().im],
            },
        })
    );
    Ok(())
}
