//! Subcommand implementations and the option plumbing they share.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use reprobe_core::inversion::{BlurSchedule, EpsilonSchedule, EpsilonSearch, InversionConfig};
use reprobe_core::pattern::target_image;
use reprobe_core::{gates, Model, Precision, Tensor};

use crate::output::{OutDir, Provenance};
use crate::settings::Resolver;
use crate::{BaseFlags, Command, InversionFlags, ModelFlags, SearchFlags, UsageError};

mod analytic;
mod capacity;
mod epsilon_search;
mod invert;
mod noise_compare;
mod sweep;
mod train;

pub fn dispatch(cmd: &Command, line: &str) -> Result<()> {
    match cmd {
        Command::Invert(a) => invert::run(a, line),
        Command::Sweep(a) => sweep::run(a, line),
        Command::Analytic(a) => analytic::run(a, line),
        Command::Capacity(a) => capacity::run(a, line),
        Command::Train(a) => train::run(a, line),
        Command::NoiseCompare(a) => noise_compare::run(a, line),
        Command::EpsilonSearch(a) => epsilon_search::run(a, line),
    }
}

/// Parses a textual flag value, reporting failures as usage errors.
pub(crate) fn parse_flag<T>(name: &str, v: &Option<String>) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    v.as_deref()
        .map(|s| s.parse::<T>().map_err(|e| UsageError(format!("--{name} {s}: {e}")).into()))
        .transpose()
}

fn path_flag(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

pub(crate) struct Base {
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
}

pub(crate) fn resolve_base(r: &Resolver, b: &BaseFlags) -> Result<Base> {
    let seed = r.get("seed", b.seed, 0u64)?;
    let out = PathBuf::from(r.get("out", path_flag(&b.out), ".".to_string())?);
    let jobs = r.get("jobs", b.jobs, 1usize)?;
    if jobs == 0 {
        return Err(UsageError("--jobs must be >= 1".into()).into());
    }
    Ok(Base { seed, out, jobs })
}

pub(crate) struct InvDefaults {
    pub iters: usize,
    pub eps: EpsilonSchedule,
    pub precision: Precision,
}

pub(crate) struct InvSettings {
    pub target: Option<PathBuf>,
    pub layer: Option<usize>,
    pub config: InversionConfig,
}

/// Resolves the inversion flags. The layer stays optional because its
/// default depends on the model.
pub(crate) fn resolve_inversion(r: &Resolver, f: &InversionFlags, d: InvDefaults) -> Result<InvSettings> {
    let target = r.get_opt::<String>("target", path_flag(&f.target))?.map(PathBuf::from);
    let layer = r.get_opt("layer", f.layer)?;
    let iters = r.get("iters", f.iters, d.iters)?;
    let eps = r.get("eps", parse_flag("eps", &f.eps)?, d.eps)?;
    let blur = r.get("blur", parse_flag("blur", &f.blur)?, BlurSchedule::Off)?;
    let clamp = r.switch("clamp", f.clamp)?;
    let precision = r.get("precision", parse_flag("precision", &f.precision)?, d.precision)?;
    let mut config = InversionConfig::new(layer.unwrap_or(1), iters, eps);
    config.blur = blur;
    config.clamp_input = clamp;
    config.precision = precision;
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(InvSettings { target, layer, config })
}

pub(crate) fn resolve_search(r: &Resolver, f: &SearchFlags, seed: u64) -> Result<EpsilonSearch> {
    let d = gates::epsilon_search(seed);
    Ok(EpsilonSearch {
        candidates: r.get("candidates", f.candidates, d.candidates)?,
        lo: r.get("lo", f.lo, d.lo)?,
        hi: r.get("hi", f.hi, d.hi)?,
        iterations: r.get("search_iters", f.search_iters, d.iterations)?,
        seed,
    })
}

pub(crate) fn resolve_model_paths(r: &Resolver, f: &ModelFlags) -> Result<(Option<PathBuf>, Option<PathBuf>)> {
    let model = r.get_opt::<String>("model", path_flag(&f.model))?.map(PathBuf::from);
    let params = r.get_opt::<String>("params", path_flag(&f.params))?.map(PathBuf::from);
    if params.is_some() && model.is_none() {
        return Err(UsageError("--params needs --model".into()).into());
    }
    Ok((model, params))
}

pub(crate) fn require_model(model: Option<PathBuf>) -> Result<PathBuf> {
    model.ok_or_else(|| UsageError("--model <manifest> is required".into()).into())
}

pub(crate) fn load_model(manifest: &Path, params: Option<&Path>) -> Result<Model> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| UsageError(format!("cannot read model {}: {e}", manifest.display())))?;
    let mut model = Model::from_manifest(&text).with_context(|| format!("in {}", manifest.display()))?;
    if let Some(p) = params {
        let blob = std::fs::read(p).map_err(|e| UsageError(format!("cannot read parameters {}: {e}", p.display())))?;
        model
            .load_param_blob(&blob)
            .with_context(|| format!("loading parameters {}", p.display()))?;
    }
    Ok(model)
}

/// The target for a model input shape: the given image, resampled when its
/// size differs, or the built-in pattern.
pub(crate) fn load_target(path: Option<&Path>, shape: &[usize]) -> Result<Tensor> {
    let Some(path) = path else {
        return builtin_target(shape);
    };
    let img = crate::pnm::read_image(path)?;
    if img.shape() == shape {
        return Ok(img);
    }
    let &[c, h, w] = shape else {
        if img.len() == shape.iter().product::<usize>() {
            return Ok(img.reshape(shape)?);
        }
        return Err(UsageError(format!(
            "target {} is {:?}; model input {:?} is not an image",
            path.display(),
            img.shape(),
            shape
        ))
        .into());
    };
    let img = match (img.shape()[0], c) {
        (a, b) if a == b => img,
        (1, 3) => {
            let plane = img.data().to_vec();
            Tensor::from_vec(&[3, img.shape()[1], img.shape()[2]], plane.repeat(3))?
        }
        (3, 1) => {
            let (ih, iw) = (img.shape()[1], img.shape()[2]);
            let d = img.data();
            let gray = (0..ih * iw).map(|p| (d[p] + d[ih * iw + p] + d[2 * ih * iw + p]) / 3.0).collect();
            Tensor::from_vec(&[1, ih, iw], gray)?
        }
        (a, b) => {
            return Err(UsageError(format!("target has {a} channels, model input needs {b}")).into());
        }
    };
    let resampled = img.bilinear_downsample(h, w)?;
    eprintln!(
        "warning: target {} resampled from {:?} to {:?}",
        path.display(),
        img.shape(),
        resampled.shape()
    );
    Ok(resampled)
}

pub(crate) fn builtin_target(shape: &[usize]) -> Result<Tensor> {
    if shape.len() == 3 {
        return Ok(target_image(shape, gates::TARGET_SEED));
    }
    let n = shape.iter().product();
    Ok(target_image(&[1, 1, n], gates::TARGET_SEED).reshape(shape)?)
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

/// Validates the config file and opens the output directory.
pub(crate) fn open_out(r: &Resolver, line: &str, base: &Base) -> Result<OutDir> {
    r.finish()?;
    OutDir::create(
        &base.out,
        Provenance {
            command_line: line.to_string(),
            seed: base.seed,
            config: r.summary(),
        },
    )
}

/// Writes `name.ppm`/`name.pgm` when the tensor is an image.
pub(crate) fn write_image(out: &mut OutDir, stem: &str, t: &Tensor) -> Result<()> {
    if !crate::pnm::exportable(t) {
        eprintln!("note: {stem} has shape {:?}, no image written", t.shape());
        return Ok(());
    }
    let ext = if t.shape()[0] == 3 { "ppm" } else { "pgm" };
    let bytes = crate::pnm::encode_plain(t)?;
    out.write_bytes(&format!("{stem}.{ext}"), &bytes)
}

pub(crate) fn report(out: &OutDir) {
    for p in out.written() {
        println!("wrote {}", p.display());
    }
}
