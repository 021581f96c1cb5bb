//! `uem` command-line tool.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use uem_autodiff::Tensor;
use uem_core::data::{
    add_gaussian_noise, load_response_csv, load_scube, save_scube, synth_scene, ResponseCurve, RgbImage, SpectralCube,
};
use uem_core::decoders::DecoderKind;
use uem_core::metrics::{nn_baseline, MetricReport};
use uem_core::optics::{
    binarize_mask, derive_psf, init_encoder, operator_from_store, EncoderConfig, EncoderVariant, OpticalSetup,
    DOE_HEIGHTS, MASK_IDEAL, MASK_LOGITS, PSF_FREE, RESPONSE,
};
use uem_core::params::{load_checkpoint, save_checkpoint};
use uem_core::train::{
    select_response, train_full_uem, train_joint, KvConfig, LossKind, Model, ModelMeta, TrainConfig,
};
use uem_core::viz::{export_stack, save_matrix_csv, save_rgb_png};

#[derive(Debug, Parser)]
#[command(name = "uem", version, about = "Differentiable spectral imaging: encode, train, evaluate")]
pub struct Cli {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic spectral cube.
    Synth(SynthArgs),
    /// Derive per-band PSFs from a radial DOE height profile.
    DerivePsf(DerivePsfArgs),
    /// Simulate the RGB measurement of a cube.
    Encode(EncodeArgs),
    /// Jointly train an encoder and a decoder.
    Train(TrainArgs),
    /// Score a checkpoint on cubes.
    Eval(EvalArgs),
    /// Rank fixed response curves by trained WEM-P quality.
    SelectResponse(SelectArgs),
    /// Score the nearest-neighbour RGB baseline on cubes.
    Baseline(BaselineArgs),
    /// Dump masks, PSFs and responses of a checkpoint.
    ExportViz(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub h: usize,
    #[arg(long)]
    pub w: usize,
    #[arg(long)]
    pub bands: usize,
    #[arg(long, default_value_t = 1.5)]
    pub smoothness: f64,
}

#[derive(Debug, Args)]
pub struct DerivePsfArgs {
    /// Config with `optics.*` keys.
    #[arg(long)]
    pub optics: Option<PathBuf>,
    /// Radial height profile in micrometres, one value per line.
    #[arg(long)]
    pub heights: PathBuf,
    #[arg(long = "psf-window")]
    pub psf_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// `wem`, `aem`, `pem`, `uem`, or a cast name such as `aem-i`.
    #[arg(long)]
    pub variant: String,
    #[arg(long)]
    pub cube: PathBuf,
    /// Response CSV; a camera-like curve when omitted.
    #[arg(long)]
    pub response: Option<PathBuf>,
    #[arg(long = "noise-sigma", default_value_t = 0.0)]
    pub noise_sigma: f64,
    /// Take encoder tensors from a checkpoint instead of initializing them.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub encoder: Option<String>,
    #[arg(long)]
    pub decoder: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long = "cube", required = true)]
    pub cubes: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Candidate response CSVs.
    #[arg(long = "response", required = true)]
    pub responses: Vec<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long = "cube", required = true)]
    pub cubes: Vec<PathBuf>,
    #[arg(long)]
    pub response: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => match e.downcast_ref::<UsageError>() {
            Some(u) => {
                eprintln!("error: {u}");
                1
            }
            None => {
                eprintln!("error: {e:#}");
                2
            }
        },
    }
}

/// Invalid flag values found after parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn parse_flag<T: std::str::FromStr>(name: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| usage(format!("--{name}: {e}")))
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| usage("--out is required"))
}

fn load_kv(cli: &Cli) -> Result<KvConfig> {
    match &cli.config {
        Some(p) => Ok(KvConfig::load(p)?),
        None => Ok(KvConfig::default()),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::DerivePsf(a) => cmd_derive_psf(cli, a),
        Command::Encode(a) => cmd_encode(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::SelectResponse(a) => cmd_select(cli, a),
        Command::Baseline(a) => cmd_baseline(cli, a),
        Command::ExportViz(a) => cmd_export(cli, a),
    }
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let out = require_out(cli)?;
    if a.h == 0 || a.w == 0 || a.bands == 0 {
        return Err(usage("--h, --w and --bands must be positive"));
    }
    if !(a.smoothness >= 0.0) {
        return Err(usage("--smoothness must be ≥ 0"));
    }
    let cube = synth_scene(cli.seed.unwrap_or(0), a.h, a.w, a.bands, a.smoothness)?;
    save_scube(&cube, out)?;
    Ok(())
}

/// One float per non-empty line; a non-numeric first line is a header.
fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {}
            Err(e) => bail!("{} line {}: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn cmd_derive_psf(cli: &Cli, a: &DerivePsfArgs) -> Result<()> {
    let out = require_out(cli)?;
    let mut cfg = TrainConfig::default();
    if let Some(p) = a.optics.as_ref().or(cli.config.as_ref()) {
        cfg.apply(&KvConfig::load(p)?)?;
    }
    let mut setup: OpticalSetup = cfg.optics;
    if let Some(k) = a.psf_window {
        if k % 2 == 0 {
            return Err(usage("--psf-window must be odd"));
        }
        setup.psf_window = k;
    }
    let heights = read_column(&a.heights)?;
    setup.radial_samples = heights.len();
    let profile = Tensor::new([heights.len()], heights)?;
    let d = derive_psf(&profile, &setup)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    export_stack(&d.psf, out, "psf")?;
    Ok(())
}

fn load_cube(p: &Path) -> Result<SpectralCube> {
    load_scube(p).with_context(|| format!("loading {}", p.display()))
}

fn response_or_default(path: Option<&PathBuf>, wl: &[f64]) -> Result<ResponseCurve> {
    let r = match path {
        Some(p) => load_response_csv(p, false)?,
        None => ResponseCurve::camera_like(wl)?,
    };
    if r.bands() != wl.len() {
        bail!("response has {} bands, cube has {}", r.bands(), wl.len());
    }
    Ok(r)
}

/// `y,x,r,g,b` rows.
pub fn rgb_csv(img: &Tensor) -> String {
    let (h, w) = (img.shape()[0], img.shape()[1]);
    let mut s = String::from("y,x,r,g,b\n");
    for y in 0..h {
        for x in 0..w {
            s.push_str(&format!(
                "{y},{x},{},{},{}\n",
                img.at3(y, x, 0),
                img.at3(y, x, 1),
                img.at3(y, x, 2)
            ));
        }
    }
    s
}

fn cmd_encode(cli: &Cli, a: &EncodeArgs) -> Result<()> {
    let out = require_out(cli)?;
    if !(a.noise_sigma >= 0.0) {
        return Err(usage("--noise-sigma must be ≥ 0"));
    }
    let variant = match a.variant.to_ascii_lowercase().as_str() {
        "wem" => EncoderVariant::WemP,
        "aem" => EncoderVariant::AemP,
        "pem" => EncoderVariant::PemP,
        "uem" => EncoderVariant::UemI,
        other => parse_flag::<EncoderVariant>("variant", other)?,
    };
    let cube = load_cube(&a.cube)?;
    let wl = cube.wavelengths_nm().to_vec();
    let response = response_or_default(a.response.as_ref(), &wl)?;
    let op = match &a.checkpoint {
        Some(p) => {
            let (store, meta) = load_checkpoint(p)?;
            let model = model_from_meta(&meta, store)?;
            operator_from_store(&model.encoder, &model.params)?
        }
        None => {
            let mut setup = OpticalSetup::default();
            if let Some(c) = &cli.config {
                let mut t = TrainConfig::default();
                t.apply(&KvConfig::load(c)?)?;
                setup = t.optics;
            }
            setup.wavelengths_nm = wl;
            let cfg = EncoderConfig {
                variant,
                height: cube.height(),
                width: cube.width(),
                setup,
                response: response.clone(),
            };
            let store = init_encoder(cli.seed.unwrap_or(0), &cfg)?;
            operator_from_store(&cfg, &store)?
        }
    };
    let rgb = op.forward(&cube.to_tensor())?;
    let rgb = if a.noise_sigma > 0.0 {
        let img = RgbImage::from_tensor(&rgb)?;
        add_gaussian_noise(&img, a.noise_sigma, cli.seed.unwrap_or(0))?.to_tensor()
    } else {
        rgb
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_rgb_png(&rgb, out.join("rgb.png"))?;
    fs::write(out.join("rgb.csv"), rgb_csv(&rgb))?;
    Ok(())
}

/// Training and validation cubes from `data.*` keys: explicit `.scube`
/// lists, or synthetic scenes.
fn load_data(kv: &KvConfig, seed: u64) -> Result<(Vec<SpectralCube>, Vec<SpectralCube>)> {
    let list = |key: &str| -> Option<Vec<PathBuf>> {
        kv.get(key).map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect()
        })
    };
    if let (Some(t), Some(v)) = (list("data.train"), list("data.val")) {
        let load = |ps: Vec<PathBuf>| ps.iter().map(|p| load_cube(p)).collect::<Result<Vec<_>>>();
        return Ok((load(t)?, load(v)?));
    }
    let get = |key: &str, default: usize| -> Result<usize> { Ok(kv.parsed(key)?.unwrap_or(default)) };
    let (nt, nv) = (get("data.synth_train", 40)?, get("data.synth_val", 10)?);
    let (h, w, l) = (get("data.height", 32)?, get("data.width", 32)?, get("data.bands", 8)?);
    let smooth: f64 = kv.parsed("data.smoothness")?.unwrap_or(1.5);
    let base = seed.wrapping_mul(1_000_003);
    let make = |range: std::ops::Range<u64>| -> Result<Vec<SpectralCube>> {
        range.map(|i| Ok(synth_scene(base + i, h, w, l, smooth)?)).collect()
    };
    Ok((make(0..nt as u64)?, make(nt as u64..(nt + nv) as u64)?))
}

fn train_config(cli: &Cli, kv: &KvConfig, a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::from_kv(kv)?;
    if let Some(v) = &a.encoder {
        cfg.encoder = parse_flag("encoder", v)?;
    }
    if let Some(v) = &a.decoder {
        cfg.decoder.kind = parse_flag::<DecoderKind>("decoder", v)?;
    }
    if let Some(v) = &a.loss {
        cfg.loss = parse_flag::<LossKind>("loss", v)?;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn checkpoint_meta(model: &Model, cfg: &TrainConfig) -> serde_json::Value {
    serde_json::json!({ "model": model.meta(), "train": cfg })
}

fn model_from_meta(meta: &serde_json::Value, store: uem_core::params::ParamStore) -> Result<Model> {
    let m: ModelMeta = serde_json::from_value(meta.get("model").cloned().unwrap_or_default())
        .map_err(|e| anyhow!("checkpoint metadata: {e}"))?;
    Ok(Model::from_parts(m, store)?)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let out = require_out(cli)?;
    let kv = load_kv(cli)?;
    let cfg = train_config(cli, &kv, a)?;
    let (train, val) = load_data(&kv, cfg.seed)?;
    let report = if cfg.encoder == EncoderVariant::UemI {
        train_full_uem(&cfg, &train, &val)?
    } else {
        train_joint(&cfg, &train, &val)?
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let model = report.model.as_ref().expect("training returns its model");
    save_checkpoint(&model.params, &checkpoint_meta(model, &cfg), out.join("checkpoint.uemc"))?;
    fs::write(out.join("report.json"), report.to_json())?;
    fs::write(out.join("loss.csv"), report.loss_csv())?;
    Ok(())
}

/// `cube,psnr,psnr_si,sam,ergas` rows plus a `mean` row.
pub fn metrics_table(names: &[String], reports: &[MetricReport]) -> String {
    let mut s = format!("cube,{}\n", MetricReport::CSV_HEADER);
    for (n, r) in names.iter().zip(reports) {
        s.push_str(&format!("{n},{}\n", r.csv_row()));
    }
    if let Some(m) = MetricReport::mean(reports) {
        s.push_str(&format!("mean,{}\n", m.csv_row()));
    }
    s
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let out = require_out(cli)?;
    let (store, meta) = load_checkpoint(&a.checkpoint)?;
    let model = model_from_meta(&meta, store)?;
    let mut names = Vec::new();
    let mut reports = Vec::new();
    for p in &a.cubes {
        let gt = load_cube(p)?.to_tensor();
        let (_, pred) = model.run(&gt, None)?;
        reports.push(MetricReport::evaluate(&pred, &gt)?);
        names.push(p.display().to_string());
    }
    fs::write(out, metrics_table(&names, &reports))?;
    Ok(())
}

fn cmd_select(cli: &Cli, a: &SelectArgs) -> Result<()> {
    let out = require_out(cli)?;
    let kv = load_kv(cli)?;
    let targs = TrainArgs {
        encoder: None,
        decoder: None,
        loss: None,
        epochs: a.epochs,
        lr: None,
    };
    let cfg = train_config(cli, &kv, &targs)?;
    let (train, val) = load_data(&kv, cfg.seed)?;
    let candidates = a
        .responses
        .iter()
        .map(|p| load_response_csv(p, false).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let sel = select_response(&candidates, &cfg, &train, &val)?;
    let mut s = format!("rank,response,{}\n", MetricReport::CSV_HEADER);
    for (rank, c) in sel.ranking.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{}\n",
            rank + 1,
            a.responses[c.index].display(),
            c.metrics.csv_row()
        ));
    }
    fs::write(out, s)?;
    Ok(())
}

fn cmd_baseline(cli: &Cli, a: &BaselineArgs) -> Result<()> {
    let out = require_out(cli)?;
    let mut names = Vec::new();
    let mut reports = Vec::new();
    for p in &a.cubes {
        let cube = load_cube(p)?;
        let response = response_or_default(a.response.as_ref(), cube.wavelengths_nm())?;
        let gt = cube.to_tensor();
        let rgb = uem_core::optics::encode_wem(&gt, &response)?;
        reports.push(MetricReport::evaluate(&nn_baseline(&rgb, &response)?, &gt)?);
        names.push(p.display().to_string());
    }
    fs::write(out, metrics_table(&names, &reports))?;
    Ok(())
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let out = require_out(cli)?;
    let (store, meta) = load_checkpoint(&a.checkpoint)?;
    let model = model_from_meta(&meta, store)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let p = &model.params;
    if let Some(l) = p.get(MASK_LOGITS) {
        export_stack(&binarize_mask(l), out, "mask")?;
        export_stack(l, out, "mask_logits")?;
    }
    if let Some(m) = p.get(MASK_IDEAL) {
        export_stack(m, out, "mask")?;
    }
    if let Some(h) = p.get(DOE_HEIGHTS) {
        save_matrix_csv(h.data(), 1, out.join("heights.csv"))?;
        export_stack(&derive_psf(h, &model.encoder.setup)?.psf, out, "psf")?;
    }
    if let Some(k) = p.get(PSF_FREE) {
        export_stack(k, out, "psf")?;
    }
    let r = ResponseCurve::from_tensor(model.encoder.setup.wavelengths_nm.clone(), p.require(RESPONSE)?, false)?;
    uem_core::data::save_response_csv(&r, out.join("response.csv"))?;
    let l = r.bands();
    export_stack(&r.to_tensor().reshape([3, l])?, out, "response")?;
    Ok(())
}
