use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use psv_core::dataset::{generate_dataset, load_dataset, load_samples, read_label_png, read_rgb_png, write_label_png, write_rgb_png, Split};
use psv_core::extraction::{extract, render_overlay, ExtractParams};
use psv_core::geometry::{Calibration, PsvFrame};
use psv_core::kv::KvDoc;
use psv_core::metrics::{ConfusionMatrix, SegmentationReport};
use psv_core::network::{images_to_tensor, predict, Combine, ModelParams, Network, NetworkConfig, STAGES};
use psv_core::training::{evaluate, gradient_suite, train, TrainConfig, TrainError, TrainOutputs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MANIFEST: &str = "manifest.txt";

#[derive(Parser, Debug)]
#[command(name = "psv", version, about = "Surround-view parking slot and lane marking perception")]
struct Cli {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compose a surround view from four raw fisheye images.
    Stitch {
        #[arg(long)]
        calib: PathBuf,
        /// Raw images in front, rear, left, right order.
        #[arg(num_args = 4, required = true)]
        images: Vec<PathBuf>,
    },
    /// Write a synthetic dataset with its split file.
    Generate {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
    /// Train a network on the train split of a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Initial weights instead of a seeded build.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        net: NetFlags,
        #[command(flatten)]
        train: TrainFlags,
        /// Also keep a model file per epoch.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Print the segmentation report for a model or a prediction directory.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required_unless_present = "predictions")]
        model: Option<PathBuf>,
        /// Label PNGs named like the dataset labels, scored instead of a model.
        #[arg(long, conflicts_with = "model")]
        predictions: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Predict a label mask for one surround-view image.
    Segment {
        #[arg(long)]
        model: PathBuf,
        image: PathBuf,
    },
    /// Slots and lanes from a label mask, in vehicle-frame meters.
    Extract {
        mask: PathBuf,
        /// Image to draw the overlay on; the overlay is skipped without it.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Finite-difference checks of every layer and the loss.
    Gradcheck,
}

#[derive(Args, Debug, Default)]
struct NetFlags {
    #[arg(long, value_parser = ["3", "5", "7", "9", "11"])]
    vh_kernel: Option<String>,
    #[arg(long, value_enum)]
    combine: Option<CombineArg>,
    #[arg(long)]
    no_vh: bool,
    /// Five comma-separated encoder widths.
    #[arg(long)]
    channels: Option<String>,
}

#[derive(Args, Debug, Default)]
struct TrainFlags {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// One value for all pre-outputs or five comma-separated values.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    w_max: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CombineArg {
    Sum,
    Concat,
    Convplus,
}

impl From<CombineArg> for Combine {
    fn from(c: CombineArg) -> Self {
        match c {
            CombineArg::Sum => Combine::Sum,
            CombineArg::Concat => Combine::Concat,
            CombineArg::Convplus => Combine::ConvPlus,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Marks failures that exit with status 2.
#[derive(Debug)]
struct Numerical(String);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

/// Effective settings of a run, config file first and flags on top.
struct RunConfig {
    doc: KvDoc,
    seed: u64,
    out: Option<PathBuf>,
}

impl RunConfig {
    fn load(cli: &Cli) -> Result<Self> {
        let doc = match &cli.config {
            Some(p) => KvDoc::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => KvDoc::default(),
        };
        let seed = match cli.seed {
            Some(s) => s,
            None => doc.parse_value("seed")?.unwrap_or(0),
        };
        let out = cli.out.clone().or_else(|| doc.get("out").map(PathBuf::from));
        let mut rc = Self { doc, seed, out };
        rc.doc.set("seed", seed);
        Ok(rc)
    }

    fn out(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn network(&mut self, flags: &NetFlags) -> Result<NetworkConfig> {
        if let Some(k) = &flags.vh_kernel {
            self.doc.set("vh_kernel", k);
        }
        if let Some(c) = flags.combine {
            self.doc.set("combine", Combine::from(c));
        }
        if flags.no_vh {
            self.doc.set("vh_enabled", false);
        }
        if let Some(c) = &flags.channels {
            self.doc.set("channels", c);
        }
        let cfg = NetworkConfig::from_kv(&self.doc)?;
        for (k, v) in cfg.to_kv().iter() {
            self.doc.set(k, v);
        }
        Ok(cfg)
    }

    fn training(&mut self, flags: &TrainFlags) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let pick = |flag: Option<String>, key: &str, doc: &mut KvDoc| {
            if let Some(v) = flag {
                doc.set(key, v);
            }
        };
        pick(flags.epochs.map(|v| v.to_string()), "epochs", &mut self.doc);
        pick(flags.lr.map(|v| v.to_string()), "learning_rate", &mut self.doc);
        pick(flags.batch.map(|v| v.to_string()), "batch_size", &mut self.doc);
        pick(flags.lambda.clone(), "lambda", &mut self.doc);
        pick(flags.w_max.map(|v| v.to_string()), "w_max", &mut self.doc);
        let lambda = match self.doc.get("lambda") {
            None => d.lambda,
            Some(_) => {
                let v: Vec<f64> = self.doc.numbers("lambda")?;
                match v.len() {
                    1 => [v[0]; STAGES],
                    STAGES => v.try_into().expect("length checked"),
                    n => bail!("lambda needs 1 or {STAGES} values, got {n}"),
                }
            }
        };
        let cfg = TrainConfig {
            batch_size: self.doc.parse_value("batch_size")?.unwrap_or(d.batch_size),
            learning_rate: self.doc.parse_value("learning_rate")?.unwrap_or(d.learning_rate),
            epochs: self.doc.parse_value("epochs")?.unwrap_or(d.epochs),
            lambda,
            w_max: self.doc.parse_value("w_max")?.unwrap_or(d.w_max),
        };
        cfg.validate()?;
        self.doc.set("batch_size", cfg.batch_size);
        self.doc.set("learning_rate", cfg.learning_rate);
        self.doc.set("epochs", cfg.epochs);
        self.doc.set("lambda", cfg.lambda.map(|l| l.to_string()).join(","));
        self.doc.set("w_max", cfg.w_max);
        Ok(cfg)
    }

    /// Writes the effective settings into `dir` or next to the file `out`.
    fn write_manifest(&mut self, command: &str, out: &Path) -> Result<()> {
        self.doc.set("command", command);
        let path = if out.is_dir() {
            out.join(MANIFEST)
        } else {
            let mut p = out.as_os_str().to_owned();
            p.push(".manifest");
            PathBuf::from(p)
        };
        fs::write(&path, self.doc.to_text()).with_context(|| format!("writing {}", path.display()))
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut rc = RunConfig::load(&cli)?;
    match cli.command {
        Command::Stitch { calib, images } => {
            require(&calib, "calibration file")?;
            let cal = Calibration::parse(&fs::read_to_string(&calib)?).with_context(|| format!("calibration {}", calib.display()))?;
            let raws = images.iter().map(|p| read_rgb_png(p).with_context(|| format!("image {}", p.display()))).collect::<Result<Vec<_>>>()?;
            let psv = cal.compose_psv([&raws[0], &raws[1], &raws[2], &raws[3]])?;
            let out = rc.out("psv.png");
            write_rgb_png(&out, &psv)?;
            rc.doc.set("calib", calib.display());
            rc.write_manifest("stitch", &out)?;
            println!("wrote {} ({}x{})", out.display(), psv.width(), psv.height());
        }
        Command::Generate { n, size } => {
            let out = rc.out("dataset");
            let index = generate_dataset(&out, n, size, rc.seed)?;
            rc.doc.set("n", n);
            rc.doc.set("size", size);
            rc.write_manifest("generate", &out)?;
            println!("wrote {n} scenes to {}: train {} val {} test {}", out.display(), index.train.len(), index.val.len(), index.test.len());
        }
        Command::Train { dataset, model, net, train: tflags, checkpoints } => {
            require(&dataset, "dataset")?;
            let tc = rc.training(&tflags)?;
            let (cfg, mut params) = match &model {
                Some(p) => {
                    require(p, "model")?;
                    let (cfg, params) = ModelParams::load(p)?;
                    for (k, v) in cfg.to_kv().iter() {
                        rc.doc.set(k, v);
                    }
                    rc.doc.set("init_model", p.display());
                    (cfg, params)
                }
                None => {
                    let cfg = rc.network(&net)?;
                    let params = ModelParams::build(&cfg, rc.seed)?;
                    (cfg, params)
                }
            };
            let index = load_dataset(&dataset)?;
            let train_set = load_samples(&dataset, index.names(Split::Train))?;
            let val_set = load_samples(&dataset, index.names(Split::Val))?;
            let out = rc.out("run");
            fs::create_dir_all(&out)?;
            let outputs = TrainOutputs {
                checkpoint_dir: checkpoints.then(|| out.join("checkpoints")),
                log_path: Some(out.join("train_log.tsv")),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
            train(&mut params, &cfg, &train_set, &val_set, &tc, &mut rng, &outputs, |e| {
                let val = e.val_miou.map_or("-".to_string(), |m| format!("{:.2}%", 100.0 * m));
                println!("epoch {:>4}  loss {:.5e}  final {:.5e}  val mIoU {val}", e.epoch, e.loss.total, e.loss.final_term);
            })?;
            params.save(&out.join("model.psvnet"), &cfg)?;
            rc.doc.set("dataset", dataset.display());
            rc.write_manifest("train", &out)?;
            println!("wrote {}", out.join("model.psvnet").display());
        }
        Command::Eval { dataset, model, predictions, split } => {
            require(&dataset, "dataset")?;
            let index = load_dataset(&dataset)?;
            let names = index.names(split.into());
            let samples = load_samples(&dataset, names)?;
            let (tag, cm) = match (&model, &predictions) {
                (Some(m), _) => {
                    require(m, "model")?;
                    let (cfg, params) = ModelParams::load(m)?;
                    (cfg.variant(), evaluate(&Network::new(&cfg)?, &params, &samples, 4)?)
                }
                (None, Some(dir)) => {
                    let mut cm = ConfusionMatrix::new();
                    for (name, s) in names.iter().zip(&samples) {
                        let p = dir.join(format!("{name}.png"));
                        cm.accumulate(&read_label_png(&p).with_context(|| format!("prediction {}", p.display()))?, &s.label)?;
                    }
                    ("predictions".to_string(), cm)
                }
                (None, None) => bail!("either --model or --predictions is required"),
            };
            let report = cm.report()?;
            println!("{}", SegmentationReport::table_header());
            println!("{}", report.table_row(&tag));
            println!("mean pixel accuracy {:.2}", 100.0 * report.mean_pixel_acc);
        }
        Command::Segment { model, image } => {
            require(&model, "model")?;
            let (cfg, params) = ModelParams::load(&model)?;
            let img = read_rgb_png(&image)?;
            let x = images_to_tensor::<f32>(&[&img])?;
            let outputs = Network::new(&cfg)?.forward(&params, &x)?;
            if outputs.final_output.data().iter().any(|v| !v.is_finite()) {
                return Err(Numerical("network output is not finite".into()).into());
            }
            let mask = &predict(&outputs)[0];
            let out = rc.out("mask.png");
            write_label_png(&out, mask)?;
            rc.doc.set("model", model.display());
            rc.write_manifest("segment", &out)?;
            println!("wrote {}", out.display());
        }
        Command::Extract { mask, overlay } => {
            let label = read_label_png(&mask)?;
            if label.width() != label.height() {
                bail!("mask is {}x{}, expected a square surround view", label.width(), label.height());
            }
            let mut params = ExtractParams::for_frame(PsvFrame::with_size(label.width()));
            params.apply_kv(&rc.doc)?;
            for (k, v) in params.to_kv().iter() {
                rc.doc.set(k, v);
            }
            let ex = extract(&label, &params);
            let out = rc.out("extraction.txt");
            fs::write(&out, ex.to_records())?;
            if let Some(base) = overlay {
                let img = read_rgb_png(&base)?;
                let mut p = out.as_os_str().to_owned();
                p.push(".png");
                write_rgb_png(Path::new(&p), &render_overlay(&img, &ex))?;
            }
            rc.write_manifest("extract", &out)?;
            println!("{} slots, {} lanes -> {}", ex.slots.len(), ex.lanes.len(), out.display());
        }
        Command::Gradcheck => {
            let entries = gradient_suite(rc.seed)?;
            let mut failed = 0;
            for e in &entries {
                let r = &e.report;
                let verdict = if e.passed() { "ok" } else { "FAIL" };
                println!("{:<22} {:>5} checked  max rel {:.3e}  tol {:.0e}  {verdict}", e.name, r.checked, r.max_rel_error, r.tolerance);
                failed += (!e.passed()) as usize;
            }
            if failed > 0 {
                return Err(Numerical(format!("{failed} gradient checks exceeded tolerance")).into());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| e.is::<Numerical>() || matches!(e.downcast_ref::<TrainError>(), Some(TrainError::NonFinite { .. })));
    if numerical {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are validation errors; help and version are not errors.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_for(args: &[&str]) -> RunConfig {
        RunConfig::load(&Cli::try_parse_from(args).unwrap()).unwrap()
    }

    #[test]
    fn flags_override_and_lambda_broadcasts() {
        let mut rc = config_for(&["psv", "--seed", "9", "gradcheck"]);
        let flags = TrainFlags { epochs: Some(3), lambda: Some("0.5".into()), ..Default::default() };
        let tc = rc.training(&flags).unwrap();
        assert_eq!((tc.epochs, tc.lambda, tc.batch_size), (3, [0.5; STAGES], 10));
        assert_eq!(rc.doc.get("seed"), Some("9"));
        assert!(rc.training(&TrainFlags { lambda: Some("1,2".into()), ..Default::default() }).is_err());
    }

    #[test]
    fn network_flags_reach_the_config() {
        let mut rc = config_for(&["psv", "gradcheck"]);
        let flags = NetFlags { vh_kernel: Some("5".into()), combine: Some(CombineArg::Convplus), no_vh: true, channels: None };
        let cfg = rc.network(&flags).unwrap();
        assert_eq!((cfg.vh_kernel, cfg.combine, cfg.vh_enabled), (5, Combine::ConvPlus, false));
    }

    #[test]
    fn exit_codes_by_failure_kind() {
        assert_eq!(exit_code(&anyhow::anyhow!("bad path")), 1);
        assert_eq!(exit_code(&anyhow::Error::new(Numerical("nan".into())).context("segment")), 2);
        let nf = TrainError::NonFinite { what: "loss".into(), step: 3 };
        assert_eq!(exit_code(&anyhow::Error::new(nf)), 2);
    }
}
