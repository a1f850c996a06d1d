//! The `sfpnet` command line.
//!
//! Every flag can also be given as `name=value` in a `--config` file, using
//! the flag's long name. Flags on the command line win over the file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::data::patches::{extract_patches, PatchOptions};
use crate::data::png_io::{write_mask_png, write_normals_png};
use crate::data::raster::{write_raster, Raster};
use crate::data::sample::{list_samples, load_sample, write_normals_raster, SampleRecord, NORMALS_FILE};
use crate::data::split::{read_split_file, Partition, SplitSpec, SPLIT_FILE};
use crate::error::{Error, Result};
use crate::eval::{evaluate, write_report, Predictor};
use crate::fresnel::{Material, ReflectionMode};
use crate::net::checkpoint::{load_checkpoint, save_checkpoint};
use crate::net::train::{train_with_progress, TrainOptions};
use crate::net::unet::UNetConfig;
use crate::polar::{fit_stack, FitMethod, FitOptions};
use crate::synth::{make_dataset, DatasetOptions, RenderConfig};

/// Exit status for success.
pub const EXIT_OK: i32 = 0;
/// Exit status for malformed invocations and configuration.
pub const EXIT_USAGE: i32 = 1;
/// Exit status for failures while reading, computing or writing data.
pub const EXIT_DATA: i32 = 2;

struct Flag {
    name: &'static str,
    value: &'static str,
    help: &'static str,
    default: Option<&'static str>,
}

const fn flag(name: &'static str, value: &'static str, help: &'static str, default: Option<&'static str>) -> Flag {
    Flag {
        name,
        value,
        help,
        default,
    }
}

const FLAGS: &[Flag] = &[
    flag("seed", "U64", "random seed", Some("0")),
    flag("eta", "F", "refractive index", Some("1.5")),
    flag("mode", "MODE", "reflection model: diffuse or specular", Some("diffuse")),
    flag("method", "METHOD", "normal estimator: physics or net", Some("physics")),
    flag(
        "policy",
        "POLICY",
        "disambiguation: oracle, convexity or fixed:<i>",
        Some("convexity"),
    ),
    flag("out", "DIR", "output directory", None),
    flag("data", "DIR", "dataset root or single sample directory", None),
    flag(
        "checkpoint",
        "FILE",
        "network checkpoint (.psfp with .cfg sidecar)",
        None,
    ),
    flag("predictions", "DIR", "tree of precomputed normals.psfp files", None),
    flag("split", "SPLIT", "which objects to use: test, train or all", None),
    flag("scenes", "N", "number of scenes to render", Some("6")),
    flag("size", "PX", "rendered image side", Some("128")),
    flag("noise", "SIGMA", "Gaussian noise standard deviation", Some("0")),
    flag(
        "sphere-fraction",
        "F",
        "probability that an object is a sphere",
        Some("0.5"),
    ),
    flag(
        "test-fraction",
        "F",
        "fraction of objects in the test split",
        Some("0.25"),
    ),
    flag(
        "fit",
        "METHOD",
        "sinusoid fit: least-squares or closed-form",
        Some("least-squares"),
    ),
    flag("epochs", "N", "training epochs", Some("100")),
    flag("batch-size", "N", "patches per step", Some("32")),
    flag("lr", "F", "Adam learning rate", Some("0.0001")),
    flag(
        "val-fraction",
        "F",
        "fraction of training patches held out",
        Some("0.2"),
    ),
    flag("depth", "N", "encoder stages", Some("3")),
    flag("width", "N", "channels of the first stage", Some("8")),
    flag("blocks", "N", "residual blocks per stage", Some("1")),
    flag("l2", "F", "weight regularization factor", Some("0.0001")),
    flag("patch", "PX", "patch side", Some("64")),
    flag("stride", "PX", "patch stride", Some("64")),
    flag(
        "min-foreground",
        "F",
        "smallest foreground fraction of a kept patch",
        Some("0.05"),
    ),
];

struct Verb {
    name: &'static str,
    about: &'static str,
    flags: &'static [&'static str],
}

const COMMON: &[&str] = &["seed", "eta", "mode", "method", "policy", "out"];

const VERBS: &[Verb] = &[
    Verb {
        name: "render",
        about: "Render a synthetic dataset tree with a split file",
        flags: &["scenes", "size", "noise", "sphere-fraction", "test-fraction"],
    },
    Verb {
        name: "fit",
        about: "Fit sinusoids per pixel and write phase, degree of polarization and mean intensity",
        flags: &["data", "split", "fit"],
    },
    Verb {
        name: "reconstruct",
        about: "Estimate normals for every selected sample and write them as a prediction tree",
        flags: &["data", "split", "checkpoint"],
    },
    Verb {
        name: "train",
        about: "Train the network on the training objects of a dataset",
        flags: &[
            "data",
            "epochs",
            "batch-size",
            "lr",
            "val-fraction",
            "depth",
            "width",
            "blocks",
            "l2",
            "patch",
            "stride",
            "min-foreground",
        ],
    },
    Verb {
        name: "infer",
        about: "Run a trained network over every selected sample and write a prediction tree",
        flags: &["data", "split", "checkpoint"],
    },
    Verb {
        name: "eval",
        about: "Score predictions against ground truth and print a per-object MAE table",
        flags: &["data", "split", "checkpoint", "predictions"],
    },
    Verb {
        name: "export-png",
        about: "Write 8-bit PNG views of ground-truth or predicted normals",
        flags: &["data", "split", "predictions"],
    },
];

fn find_flag(name: &str) -> &'static Flag {
    FLAGS.iter().find(|f| f.name == name).expect("flag table")
}

fn verb_command(verb: &Verb) -> Command {
    let mut cmd = Command::new(verb.name).about(verb.about).arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .help("key=value file; keys are flag names")
            .action(ArgAction::Set),
    );
    for name in COMMON.iter().chain(verb.flags) {
        let f = find_flag(name);
        let mut arg = Arg::new(f.name).long(f.name).value_name(f.value).action(ArgAction::Set);
        arg = match f.default {
            Some(d) => arg.help(format!("{} [default: {d}]", f.help)),
            None => arg.help(f.help),
        };
        cmd = cmd.arg(arg);
    }
    cmd
}

/// The full command tree.
pub fn command() -> Command {
    let mut cmd = Command::new("sfpnet")
        .about("Shape from polarization: render, reconstruct, train and evaluate")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for v in VERBS {
        cmd = cmd.subcommand(verb_command(v));
    }
    cmd
}

/// Parses a `key=value` config file. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", origin.display(), n + 1)))?;
        let key = key.trim();
        if key == "config" || !FLAGS.iter().any(|f| f.name == key) {
            return Err(Error::Config(format!(
                "{}:{}: unknown key {key:?}",
                origin.display(),
                n + 1
            )));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!(
                "{}:{}: duplicate key {key:?}",
                origin.display(),
                n + 1
            )));
        }
    }
    Ok(out)
}

/// Flag values after merging the command line over the config file.
struct Settings<'a> {
    matches: &'a ArgMatches,
    config: BTreeMap<String, String>,
}

impl Settings<'_> {
    fn raw(&self, name: &str) -> Option<String> {
        if self.matches.value_source(name) == Some(ValueSource::CommandLine) {
            return self.matches.get_one::<String>(name).cloned();
        }
        self.config
            .get(name)
            .cloned()
            .or_else(|| find_flag(name).default.map(str::to_string))
    }

    fn opt<T: FromStr>(&self, name: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(name)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("--{name} {v:?}: {e}")))
            })
            .transpose()
    }

    fn get<T: FromStr>(&self, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(name)?
            .ok_or_else(|| Error::Config(format!("--{name} is required")))
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        self.get::<String>(name).map(PathBuf::from)
    }

    fn material(&self) -> Result<Material> {
        let eta: f64 = self.get("eta")?;
        let mode: ReflectionMode = self.get("mode")?;
        Material::new(eta, mode).map_err(|e| Error::Config(e.to_string()))
    }

    fn split(&self, default: SplitChoice) -> Result<SplitChoice> {
        Ok(self.opt("split")?.unwrap_or(default))
    }
}

/// Which objects of a dataset a verb works on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Test,
    Train,
    All,
}

impl FromStr for SplitChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(SplitChoice::Test),
            "train" => Ok(SplitChoice::Train),
            "all" => Ok(SplitChoice::All),
            other => Err(Error::Config(format!(
                "unknown split {other:?}; expected test, train or all"
            ))),
        }
    }
}

/// Loads the samples of `root` that belong to `split`. A single sample
/// directory is accepted as a one-sample dataset. Without a split file every
/// sample is used.
pub fn select_samples(root: &Path, split: SplitChoice) -> Result<Vec<SampleRecord>> {
    if !root.exists() {
        return Err(Error::MissingFile(root.to_path_buf()));
    }
    if root.join(crate::data::sample::STACK_FILE).is_file() {
        return Ok(vec![load_sample(root)?]);
    }
    let dirs = list_samples(root)?;
    if dirs.is_empty() {
        return Err(Error::Data(format!("no samples under {}", root.display())));
    }
    let split_path = root.join(SPLIT_FILE);
    let spec = if split != SplitChoice::All && split_path.is_file() {
        Some(SplitSpec::from_assignments(&read_split_file(&split_path)?, 0.0, 0)?)
    } else {
        if split != SplitChoice::All {
            eprintln!("note: {} not found; using every sample", split_path.display());
        }
        None
    };
    let mut out = Vec::new();
    for d in dirs {
        let sample = load_sample(&d)?;
        let keep = match (&spec, split) {
            (Some(spec), SplitChoice::Test) => spec.partition_of(&sample.object_id)? == Partition::Test,
            (Some(spec), SplitChoice::Train) => spec.partition_of(&sample.object_id)? == Partition::Train,
            _ => true,
        };
        if keep {
            out.push(sample);
        }
    }
    if out.is_empty() {
        return Err(Error::Data(format!(
            "no samples of the requested split under {}",
            root.display()
        )));
    }
    Ok(out)
}

fn predictor(s: &Settings, allow_directory: bool) -> Result<Predictor> {
    if allow_directory {
        if let Some(dir) = s.opt::<String>("predictions")? {
            let dir = PathBuf::from(dir);
            if !dir.is_dir() {
                return Err(Error::MissingFile(dir));
            }
            return Ok(Predictor::Directory(dir));
        }
    }
    match s.get::<String>("method")?.as_str() {
        "physics" => Ok(Predictor::Physics {
            material: s.material()?,
            policy: s.get("policy")?,
        }),
        "net" => {
            let path = s
                .opt::<String>("checkpoint")?
                .ok_or_else(|| Error::Config("--method net needs --checkpoint".into()))?;
            Ok(Predictor::Net(Box::new(load_checkpoint(Path::new(&path))?)))
        }
        other => Err(Error::Config(format!(
            "unknown method {other:?}; expected physics or net"
        ))),
    }
}

fn cmd_render(s: &Settings) -> Result<()> {
    let out = s.path("out")?;
    let size: usize = s.get("size")?;
    let n: usize = s.get("scenes")?;
    if n == 0 || size == 0 {
        return Err(Error::Config("--scenes and --size must be positive".into()));
    }
    let config = RenderConfig::new(size, size).with_noise(s.get("noise")?);
    let options = DatasetOptions {
        material: s.material()?,
        sphere_fraction: s.get("sphere-fraction")?,
        test_fraction: s.get("test-fraction")?,
        ..Default::default()
    };
    let scenes = make_dataset(n, &config, &out, s.get("seed")?, &options)?;
    println!("rendered {} scenes into {}", scenes.len(), out.display());
    Ok(())
}

fn cmd_fit(s: &Settings) -> Result<()> {
    let out = s.path("out")?;
    let method = match s.get::<String>("fit")?.as_str() {
        "least-squares" => FitMethod::LeastSquares,
        "closed-form" => FitMethod::ClosedFormQuad,
        other => return Err(Error::Config(format!("unknown fit {other:?}"))),
    };
    let samples = select_samples(&s.path("data")?, s.split(SplitChoice::All)?)?;
    let mut results = Vec::with_capacity(samples.len());
    for sample in &samples {
        let map = fit_stack(&sample.stack, &sample.mask, &FitOptions::with_method(method))?;
        let values: Vec<f64> = (0..map.phi.len())
            .flat_map(|i| [map.phi[i], map.rho[i], map.intensity[i]])
            .collect();
        let raster = Raster::from_f64_as_f32(map.height, map.width, 3, &values)?;
        results.push((sample, raster, map.valid_count()));
    }
    for (sample, raster, valid) in results {
        let dir = sample.dir_in(&out);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_raster(&raster, &dir.join("polarization.psfp"))?;
        println!(
            "{}\tvalid_pixels={valid}\tmask_pixels={}",
            sample.key(),
            sample.mask.count()
        );
    }
    Ok(())
}

fn write_predictions(s: &Settings, predictor: &Predictor) -> Result<()> {
    let out = s.path("out")?;
    let samples = select_samples(&s.path("data")?, s.split(SplitChoice::All)?)?;
    let preds = samples
        .iter()
        .map(|x| predictor.predict(x))
        .collect::<Result<Vec<_>>>()?;
    for (sample, pred) in samples.iter().zip(&preds) {
        let dir = sample.dir_in(&out);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_normals_raster(pred, &dir.join(NORMALS_FILE))?;
        write_normals_png(pred, Some(&sample.mask), &dir.join("normals.png"))?;
    }
    println!(
        "{}: wrote {} predictions into {}",
        predictor.describe(),
        preds.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(s: &Settings) -> Result<()> {
    let out = s.path("out")?;
    let root = s.path("data")?;
    let samples = select_samples(&root, SplitChoice::Train)?;
    let seed: u64 = s.get("seed")?;
    let config = UNetConfig {
        depth: s.get("depth")?,
        base_width: s.get("width")?,
        blocks_per_stage: s.get("blocks")?,
        l2_factor: s.get("l2")?,
        seed,
        ..Default::default()
    };
    config.validate()?;
    let patch = PatchOptions {
        side: s.get("patch")?,
        stride: s.get("stride")?,
        min_foreground: s.get("min-foreground")?,
    };
    let mut patches = Vec::new();
    for sample in samples {
        patches.extend(extract_patches(&Arc::new(sample), &patch)?);
    }
    let options = TrainOptions {
        epochs: s.get("epochs")?,
        batch_size: s.get("batch-size")?,
        val_fraction: s.get("val-fraction")?,
        learning_rate: s.get("lr")?,
        seed,
    };
    eprintln!("training on {} patches ({config})", patches.len());
    let outcome = train_with_progress(config, patches, &options, |e| {
        let val = e.val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.5}"));
        eprintln!("epoch {:>4}  train {:.5}  val {val}", e.epoch, e.train_loss);
    })?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    save_checkpoint(&outcome.net, &out.join("model.psfp"))?;
    let hist = out.join("history.csv");
    std::fs::write(&hist, outcome.history.to_csv()).map_err(|e| Error::io(&hist, e))?;
    println!(
        "saved {} (best epoch {}) and {}",
        out.join("model.psfp").display(),
        outcome.history.best_epoch,
        hist.display()
    );
    Ok(())
}

fn cmd_eval(s: &Settings) -> Result<()> {
    let predictor = predictor(s, true)?;
    let split = s.split(SplitChoice::Test)?;
    let samples = select_samples(&s.path("data")?, split)?;
    let report = evaluate(&samples, &predictor)?;
    let title = format!("{} split={}", predictor.describe(), split_name(split));
    if let Some(out) = s.opt::<String>("out")? {
        write_report(&report, &title, Path::new(&out))?;
    }
    print!("{}", report.to_table(&title));
    Ok(())
}

fn split_name(s: SplitChoice) -> &'static str {
    match s {
        SplitChoice::Test => "test",
        SplitChoice::Train => "train",
        SplitChoice::All => "all",
    }
}

fn cmd_export_png(s: &Settings) -> Result<()> {
    let out = s.path("out")?;
    let samples = select_samples(&s.path("data")?, s.split(SplitChoice::All)?)?;
    let pred_dir = s.opt::<String>("predictions")?.map(PathBuf::from);
    let mut written = 0;
    for sample in &samples {
        let normals = match &pred_dir {
            Some(d) => crate::data::sample::read_normals_raster(&sample.dir_in(d).join(NORMALS_FILE))?,
            None => sample.normals.clone(),
        };
        let dir = sample.dir_in(&out);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_normals_png(&normals, Some(&sample.mask), &dir.join("normals.png"))?;
        write_mask_png(&sample.mask, &dir.join("mask.png"))?;
        written += 1;
    }
    println!("wrote {written} PNG pairs into {}", out.display());
    Ok(())
}

fn dispatch(verb: &str, s: &Settings) -> Result<()> {
    match verb {
        "render" => cmd_render(s),
        "fit" => cmd_fit(s),
        "reconstruct" => write_predictions(s, &predictor(s, false)?),
        "train" => cmd_train(s),
        "infer" => {
            let path = s
                .opt::<String>("checkpoint")?
                .ok_or_else(|| Error::Config("infer needs --checkpoint".into()))?;
            write_predictions(s, &Predictor::Net(Box::new(load_checkpoint(Path::new(&path))?)))
        }
        "eval" => cmd_eval(s),
        "export-png" => cmd_export_png(s),
        _ => unreachable!("clap rejects unknown verbs"),
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (verb, sub) = matches.subcommand().expect("subcommand required");
    let synopsis = || {
        let v = VERBS.iter().find(|v| v.name == verb).expect("known verb");
        eprintln!("{}", verb_command(v).bin_name(format!("sfpnet {verb}")).render_usage());
    };
    let config = match sub.get_one::<String>("config") {
        Some(path) => {
            let path = Path::new(path);
            match std::fs::read_to_string(path) {
                Ok(text) => match parse_config(&text, path) {
                    Ok(c) => c,
                    Err(e) => {
                        eprintln!("error: {e}");
                        synopsis();
                        return EXIT_USAGE;
                    }
                },
                Err(e) => {
                    eprintln!("error: cannot read config {}: {e}", path.display());
                    return EXIT_USAGE;
                }
            }
        }
        None => BTreeMap::new(),
    };
    let settings = Settings { matches: sub, config };
    match dispatch(verb, &settings) {
        Ok(()) => EXIT_OK,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            synopsis();
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
