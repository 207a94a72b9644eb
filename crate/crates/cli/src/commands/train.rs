use std::fmt;
use std::str::FromStr;

use anyhow::Result;
use reprobe_core::trainer::{
    first_layer_filters, make_noise_dataset, make_structured_dataset, train, Dataset, TrainConfig, Training, NOISE_MU,
    NOISE_SIGMA,
};
use reprobe_core::{Model, Precision};

use super::*;
use crate::output::{num, OutDir};
use crate::TrainArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Noise,
    Structured,
}

impl FromStr for DataKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "noise" => Ok(DataKind::Noise),
            "structured" => Ok(DataKind::Structured),
            _ => Err(format!("unknown data `{s}` (noise, structured)")),
        }
    }
}

impl fmt::Display for DataKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataKind::Noise => "noise",
            DataKind::Structured => "structured",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Mlp,
    Convnet,
}

impl FromStr for Arch {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mlp" => Ok(Arch::Mlp),
            "convnet" => Ok(Arch::Convnet),
            _ => Err(format!("unknown arch `{s}` (mlp, convnet)")),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Mlp => "mlp",
            Arch::Convnet => "convnet",
        })
    }
}

pub(crate) fn dataset(kind: DataKind, count: usize, classes: usize, seed: u64) -> Result<Dataset> {
    Ok(match kind {
        DataKind::Noise => make_noise_dataset(count, classes, NOISE_MU, NOISE_SIGMA, &gates::TRAIN_SHAPE, seed)?,
        DataKind::Structured => make_structured_dataset(count, classes, &gates::TRAIN_SHAPE, true, seed)?,
    })
}

pub(crate) fn default_classes(kind: DataKind) -> usize {
    match kind {
        DataKind::Noise => gates::NOISE_CLASSES,
        DataKind::Structured => gates::STRUCTURED_CLASSES,
    }
}

pub(crate) fn history_rows(t: &Training) -> Vec<Vec<String>> {
    t.history
        .iter()
        .map(|h| vec![h.epoch.to_string(), num(h.loss), num(h.accuracy)])
        .collect()
}

pub(crate) fn write_filters(out: &mut OutDir, name: &str, model: &Model) -> Result<()> {
    if let Some(f) = first_layer_filters(model) {
        let f = match f.shape() {
            [_, _, _, _] => f,
            [n, rest @ ..] => {
                let mut s = vec![*n];
                s.extend(if rest.len() == 3 { rest.to_vec() } else { vec![1, 1, rest.iter().product()] });
                f.reshape(&s)?
            }
            _ => return Ok(()),
        };
        write_image(out, name, &crate::pnm::filter_sheet(&f)?)?;
    }
    Ok(())
}

pub fn run(a: &TrainArgs, line: &str) -> Result<()> {
    let r = Resolver::load(a.base.config.as_deref())?;
    let data = r.get("data", parse_flag("data", &a.data)?, DataKind::Noise)?;
    let arch = r.get("arch", parse_flag("arch", &a.arch)?, Arch::Mlp)?;
    let count = r.get("count", a.count, gates::NOISE_COUNT)?;
    let classes = r.get("classes", a.classes, default_classes(data))?;
    let default_epochs = match arch {
        Arch::Mlp => gates::MLP_EPOCHS,
        Arch::Convnet => gates::CONV_EPOCHS,
    };
    let epochs = r.get("epochs", a.epochs, default_epochs)?;
    let lr = r.get("lr", a.lr, gates::LEARNING_RATE)?;
    let batch = r.get("batch", a.batch, gates::BATCH)?;
    let precision = r.get("precision", parse_flag("precision", &a.precision)?, Precision::F64)?;
    let base = resolve_base(&r, &a.base)?;
    r.finish()?;

    let set = dataset(data, count, classes, base.seed).map_err(|e| UsageError(format!("{e:#}")))?;
    let model = match arch {
        Arch::Mlp => gates::classifier_mlp(classes, base.seed)?,
        Arch::Convnet => gates::convnet(classes, base.seed)?,
    }
    .with_precision(precision);
    let cfg = TrainConfig {
        epochs,
        lr,
        batch,
        seed: base.seed,
    };
    let trained = train(&model, &set, &cfg)?;

    let mut out = open_out(&r, line, &base)?;
    out.write_bytes("model.manifest", trained.model.to_manifest().as_bytes())?;
    out.write_bytes("model.params", &trained.model.to_param_blob())?;
    out.write_csv("history.csv", &["epoch", "loss", "accuracy"], &history_rows(&trained))?;
    write_filters(&mut out, "filters", &trained.model)?;
    if let Some(last) = trained.history.last() {
        println!("epoch {}: loss {} accuracy {}", last.epoch, last.loss, last.accuracy);
    }
    report(&out);
    Ok(())
}
