//! Batch command-line front end behind the `lumiparam` binary.
//!
//! Exit codes: 0 on success, 1 when any file fails (other files are still
//! processed and written), 2 for usage errors. Metric values never affect
//! the exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use crate::codec::{decompose, CodecConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, sphere_previews, EvalOptions, SphereRender};
use crate::image::EquirectImage;
use crate::io::{encode_png, extension, read_image, write_image, write_preview_png};
use crate::params::{report_to_json, Meta, ParamFile};
use crate::sphere::{GridGeometry, WeightingMode};

const PREVIEW_EXPOSURE: f64 = 1.0;
const PREVIEW_GAMMA: f64 = 2.2;
const DEFAULT_WIDTH: usize = 512;
const DEFAULT_HEIGHT: usize = 256;

#[derive(Debug, Parser)]
#[command(name = "lumiparam", version, about = "Compact parametric lighting for HDR panoramas")]
pub struct Cli {
    /// Worker threads for batch processing (defaults to all cores).
    #[arg(long, global = true, env = "LUMIPARAM_JOBS")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose panoramas (.hdr/.pfm files or directories) into parameter files.
    Decompose {
        inputs: Vec<PathBuf>,
        /// Output file for a single input, otherwise an output directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
        /// Also write a PNG of the reconstruction next to each parameter file.
        #[arg(long)]
        preview: bool,
    },
    /// Render a parameter file back to an .hdr or .pfm map.
    Reconstruct {
        params: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Defaults to the source width recorded in the file.
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Keep negative ringing of the SH ambient instead of clamping at zero.
        #[arg(long)]
        no_clamp: bool,
        #[arg(long)]
        preview: bool,
    },
    /// Replace the light distribution of a parameter file by its sparsified version.
    Sparsify {
        params: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare a prediction (parameter file or map) with a ground-truth map.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        /// Write the JSON report here; the text table always goes to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Sphere renders to write as PNG, e.g. `diffuse,mirror`.
        #[arg(long, value_delimiter = ',')]
        render: Vec<RenderKind>,
        /// Directory for render PNGs (defaults to the report's directory).
        #[arg(long)]
        render_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        render_size: usize,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Summarise a parameter file or panorama.
    Info { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RenderKind {
    Diffuse,
    Mirror,
}

/// Codec settings; explicit flags override the config file, which
/// overrides the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct CodecArgs {
    /// TOML or JSON file with codec settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<WeightingMode>,
    /// SH order of the ambient term.
    #[arg(long)]
    pub order: Option<usize>,
    /// Number of anchor directions.
    #[arg(long)]
    pub anchors: Option<usize>,
    #[arg(long)]
    pub angular_size: Option<f64>,
    /// Fraction of pixels treated as light sources.
    #[arg(long)]
    pub percentile: Option<f64>,
    /// Neighbours per anchor used by sparsification.
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub sparsify: bool,
}

impl CodecArgs {
    pub fn resolve(&self, base: CodecConfig) -> Result<CodecConfig> {
        let mut c = match &self.config {
            Some(path) => load_config(path)?,
            None => base,
        };
        if let Some(m) = self.mode {
            c.mode = m;
        }
        if let Some(v) = self.order {
            c.order = v;
        }
        if let Some(v) = self.anchors {
            c.anchors = v;
        }
        if let Some(v) = self.angular_size {
            c.angular_size = v;
        }
        if let Some(v) = self.percentile {
            c.percentile = v;
        }
        if let Some(v) = self.knn {
            c.knn = v;
        }
        c.sparsify |= self.sparsify;
        c.validate()?;
        Ok(c)
    }
}

/// Reads codec settings from `.toml` or `.json`.
pub fn load_config(path: &Path) -> Result<CodecConfig> {
    let text = std::fs::read_to_string(path)?;
    match extension(path).as_deref() {
        Some("json") => Ok(serde_json::from_str(&text)?),
        Some("toml") => toml::from_str(&text).map_err(|e| Error::validation(path.display().to_string(), e.to_string())),
        _ => Err(Error::invalid(format!("{}: config must be .toml or .json", path.display()))),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs.filter(|&n| n > 0) {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    pool.install(|| match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    })
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Decompose {
            inputs,
            output,
            codec,
            preview,
        } => cmd_decompose(&inputs, output.as_deref(), &codec.resolve(CodecConfig::default())?, preview),
        Command::Reconstruct {
            params,
            output,
            width,
            height,
            no_clamp,
            preview,
        } => cmd_reconstruct(&params, &output, width, height, !no_clamp, preview).map(|_| 0),
        Command::Sparsify { params, output } => cmd_sparsify(&params, &output).map(|_| 0),
        Command::Eval {
            pred,
            gt,
            output,
            render,
            render_dir,
            render_size,
            codec,
        } => {
            let opts = EvalOptions {
                render_size,
                ..Default::default()
            };
            let req = EvalRequest {
                pred: &pred,
                gt: &gt,
                output: output.as_deref(),
                renders: &render,
                render_dir: render_dir.as_deref(),
                opts,
            };
            cmd_eval(&req, &codec).map(|text| {
                print!("{text}");
                0
            })
        }
        Command::Info { path } => {
            print!("{}", cmd_info(&path)?);
            Ok(0)
        }
    }
}

fn is_panorama(path: &Path) -> bool {
    matches!(extension(path).as_deref(), Some("hdr") | Some("pfm"))
}

/// Expands directories to their `.hdr`/`.pfm` files, sorted by name.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && is_panorama(p))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(input.clone());
        }
    }
    Ok(out)
}

/// `pano.hdr` becomes `pano.mixlight.json`.
pub fn param_file_name(input: &Path) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    PathBuf::from(format!("{stem}.mixlight.json"))
}

fn output_paths(inputs: &[PathBuf], raw: &[PathBuf], output: Option<&Path>) -> Result<Vec<PathBuf>> {
    let single_file = inputs.len() == 1 && raw.len() == 1 && !raw[0].is_dir();
    match output {
        Some(o) if single_file && !o.is_dir() => Ok(vec![o.to_path_buf()]),
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(inputs.iter().map(|i| dir.join(param_file_name(i))).collect())
        }
        None => Ok(inputs.iter().map(|i| i.with_file_name(param_file_name(i))).collect()),
    }
}

fn decompose_one(input: &Path, output: &Path, config: &CodecConfig, preview: bool) -> Result<()> {
    let img = read_image(input)?;
    let d = decompose(&img, config)?;
    let mut meta = Meta::from_config(config);
    meta.source = input.file_name().map(|s| s.to_string_lossy().into_owned());
    meta.width = Some(img.width());
    meta.height = Some(img.height());
    if let Some(report) = &d.credibility {
        meta.record_sparsify(report);
    }
    ParamFile::from_params(&d.params, meta).write(output)?;
    if preview {
        let recon = d.params.reconstruct(img.geom(), true)?;
        std::fs::write(output.with_extension("png"), write_preview_png(&recon, PREVIEW_EXPOSURE, PREVIEW_GAMMA)?)?;
    }
    info!("{} -> {}", input.display(), output.display());
    Ok(())
}

/// Decomposes every input; returns 1 if any file failed.
pub fn cmd_decompose(inputs: &[PathBuf], output: Option<&Path>, config: &CodecConfig, preview: bool) -> Result<i32> {
    let files = collect_inputs(inputs)?;
    if files.is_empty() {
        warn!("no input panoramas given, nothing to do");
        return Ok(0);
    }
    let outputs = output_paths(&files, inputs, output)?;
    let results: Vec<Result<()>> = files
        .par_iter()
        .zip(&outputs)
        .map(|(i, o)| decompose_one(i, o, config, preview))
        .collect();
    let mut failed = 0;
    for (input, result) in files.iter().zip(results) {
        if let Err(e) = result {
            eprintln!("error: {}: {e}", input.display());
            failed += 1;
        }
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

pub fn cmd_reconstruct(
    params: &Path,
    output: &Path,
    width: Option<usize>,
    height: Option<usize>,
    clamp_ambient: bool,
    preview: bool,
) -> Result<EquirectImage> {
    let file = ParamFile::read(params)?;
    let w = width.or(file.meta.width).unwrap_or(DEFAULT_WIDTH);
    let h = height.or(file.meta.height).unwrap_or(DEFAULT_HEIGHT);
    let img = file.to_params()?.reconstruct(GridGeometry::new(w, h)?, clamp_ambient)?;
    write_image(output, &img)?;
    if preview {
        std::fs::write(output.with_extension("png"), write_preview_png(&img, PREVIEW_EXPOSURE, PREVIEW_GAMMA)?)?;
    }
    Ok(img)
}

/// Sparsifies the light distribution and records `κ` and `τ` in the metadata.
pub fn cmd_sparsify(params: &Path, output: &Path) -> Result<ParamFile> {
    let mut file = ParamFile::read(params)?;
    let mut p = file.to_params()?;
    if p.sg.is_degenerate() {
        warn!("{}: no light-source energy, distribution left unchanged", params.display());
    } else {
        let report = p.sparsify()?;
        if report.input_not_normalized() {
            warn!("{}: distribution sums to {}, not 1", params.display(), report.input_sum);
        }
        file.sg.p = p.sg.p;
        file.meta.record_sparsify(&report);
    }
    file.write(output)?;
    Ok(file)
}

/// Inputs of [`cmd_eval`].
pub struct EvalRequest<'a> {
    pub pred: &'a Path,
    pub gt: &'a Path,
    pub output: Option<&'a Path>,
    pub renders: &'a [RenderKind],
    pub render_dir: Option<&'a Path>,
    pub opts: EvalOptions,
}

fn config_from_file(file: &ParamFile) -> CodecConfig {
    CodecConfig {
        order: file.sh.order,
        anchors: file.anchors.n,
        angular_size: file.sg.s,
        knn: file.anchors.k_nn,
        mode: file.meta.mode,
        percentile: file.meta.percentile.unwrap_or(CodecConfig::default().percentile),
        ..Default::default()
    }
}

fn write_render(path: &Path, r: &SphereRender) -> Result<()> {
    std::fs::write(path, encode_png(r.size, r.size, &r.pixels, PREVIEW_EXPOSURE, PREVIEW_GAMMA)?)?;
    Ok(())
}

/// Runs the comparison and returns the text table. A parameter-file
/// prediction is rendered at the ground truth's size and its settings
/// become the defaults for decomposing the ground truth.
pub fn cmd_eval(req: &EvalRequest<'_>, codec: &CodecArgs) -> Result<String> {
    let gt = read_image(req.gt)?;
    let (pred, params, config) = if extension(req.pred).as_deref() == Some("json") {
        let file = ParamFile::read(req.pred)?;
        let config = codec.resolve(config_from_file(&file))?;
        let params = file.to_params()?;
        let img = params.reconstruct(gt.geom(), true)?;
        (img, Some(params), config)
    } else {
        let img = read_image(req.pred)?;
        if img.geom() != gt.geom() {
            return Err(Error::validation(
                req.pred.display().to_string(),
                format!(
                    "prediction is {}x{}, ground truth is {}x{}",
                    img.width(),
                    img.height(),
                    gt.width(),
                    gt.height()
                ),
            ));
        }
        (img, None, codec.resolve(CodecConfig::default())?)
    };
    let report = evaluate(&pred, params.as_ref(), &gt, &config, &req.opts)?;
    if let Some(out) = req.output {
        std::fs::write(out, report_to_json(&report)?)?;
    }
    if !req.renders.is_empty() {
        let dir = match (req.render_dir, req.output) {
            (Some(d), _) => d.to_path_buf(),
            (None, Some(o)) => o.parent().map(Path::to_path_buf).unwrap_or_default(),
            (None, None) => PathBuf::new(),
        };
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(&dir)?;
        }
        for (side, img) in [("pred", &pred), ("gt", &gt)] {
            let (diffuse, mirror) = sphere_previews(img, &req.opts);
            for kind in req.renders {
                let (name, r) = match kind {
                    RenderKind::Diffuse => ("diffuse", &diffuse),
                    RenderKind::Mirror => ("mirror", &mirror),
                };
                write_render(&dir.join(format!("{side}_{name}.png")), r)?;
            }
        }
    }
    Ok(report.to_text())
}

/// Human-readable summary of a parameter file or panorama.
pub fn cmd_info(path: &Path) -> Result<String> {
    use std::fmt::Write;
    let mut s = String::new();
    if extension(path).as_deref() == Some("json") {
        let f = ParamFile::read(path)?;
        let sh_values: usize = f.sh.coeffs.iter().map(Vec::len).sum();
        writeln!(s, "parameter file  {}", path.display()).unwrap();
        writeln!(s, "sh order        {} ({sh_values} values)", f.sh.order).unwrap();
        writeln!(s, "anchors         {} (k_nn {}, {})", f.anchors.n, f.anchors.k_nn, f.anchors.generator).unwrap();
        writeln!(s, "angular size    {}", f.sg.s).unwrap();
        writeln!(s, "intensity       {}", f.sg.e).unwrap();
        writeln!(s, "colour          {:?}", f.sg.r).unwrap();
        let support = f.sg.p.iter().filter(|&&v| v > 0.0).count();
        writeln!(s, "support         {support} of {}", f.sg.n).unwrap();
        writeln!(s, "mode            {}", f.meta.mode).unwrap();
        writeln!(s, "sparsified      {}", f.meta.sparsified).unwrap();
        if let (Some(k), Some(t)) = (f.meta.kappa, f.meta.tau) {
            writeln!(s, "kappa, tau      {k}, {t}").unwrap();
        }
        writeln!(s, "values          {}", f.value_count()).unwrap();
    } else {
        let img = read_image(path)?;
        let integral = img.integrate();
        let max = img.pixels().iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        writeln!(s, "panorama        {}", path.display()).unwrap();
        writeln!(s, "size            {}x{}", img.width(), img.height()).unwrap();
        writeln!(s, "integral        {integral:?}").unwrap();
        writeln!(s, "max             {max}").unwrap();
        writeln!(s, "rms             {}", img.rms()).unwrap();
    }
    Ok(s)
}
