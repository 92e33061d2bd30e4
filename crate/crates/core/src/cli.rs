//! The `g2hf` command line.
//!
//! Exit codes: 0 success, 1 check failure, usage or other error, 2 malformed or
//! unsupported image, 3 weight-file error, 4 input precondition violated.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, ImageError};
use crate::gradcheck::{self, CheckConfig};
use crate::image::Image;
use crate::net::{G2hfNet, NetConfig};
use crate::objective::{f_measure, RmsConfig, BETA2};
use crate::params::Module;
use crate::selftest::{self, SuiteConfig};
use crate::tape::Fault;
use crate::tensor::Tensor;
use crate::train::{train_single, StepLog};
use crate::weights::ModelWeights;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IMAGE: i32 = 2;
pub const EXIT_WEIGHTS: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "g2hf", version, about = "Salient object detection with hierarchical feature fusion")]
pub struct Cli {
    /// Seed for weight initialization and sampled checks.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Toy network: C = 4, 192x192 input, channel-grid factors [1, 2].
    #[arg(long, global = true)]
    pub toy: bool,

    /// Worker threads, 0 = one per core. G2HF_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Predict a saliency map for one RGB image.
    Forward(ForwardArgs),
    /// Run the invariant suite.
    Selftest(SelftestArgs),
    /// Finite-difference gradient checks of every op, module and the toy network.
    Gradcheck(GradcheckArgs),
    /// Overfit one image and write the trained weights.
    TrainToy(TrainArgs),
    /// Score predicted maps against ground-truth masks.
    Eval(EvalArgs),
    /// Write freshly initialized weights.
    Init(InitArgs),
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    /// Binary PPM (P6) input.
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// PGM for the primary map s1.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write s1.pgm .. s5.pgm into this directory.
    #[arg(long)]
    pub all_heads: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Run only checks whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    /// Scale the adjoint of OP by 1.5 in every gradient check.
    #[arg(long, value_name = "OP", hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_name = "OP", hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Binary PGM (P5), same size as the image.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = RmsConfig::default().lr)]
    pub lr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// A failed command: diagnostic line and exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub msg: String,
}

impl Failure {
    fn new(code: i32, msg: impl Into<String>) -> Self {
        Self { code, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Image(_) => EXIT_IMAGE,
            Error::Weights(_) => EXIT_WEIGHTS,
            Error::Precondition { .. }
            | Error::Divisibility { .. }
            | Error::PsaDivisibility { .. }
            | Error::ShapeMismatch { .. } => EXIT_PRECONDITION,
            _ => EXIT_FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        Self::new(EXIT_IMAGE, e.to_string())
    }
}

impl From<crate::error::WeightError> for Failure {
    fn from(e: crate::error::WeightError) -> Self {
        Self::new(EXIT_WEIGHTS, format!("{e} (code {})", e.code()))
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_FAILURE, format!("{}: {e}", path.display()))
}

type CmdResult = Result<(), Failure>;

/// Parses `args` and runs the command, writing results to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    init_threads(cli.threads);
    let config = if cli.toy { NetConfig::toy() } else { NetConfig::default() };
    let result = match &cli.command {
        Command::Forward(a) => forward(a, config, out),
        Command::Selftest(a) => selftest_cmd(a, cli.seed, out),
        Command::Gradcheck(a) => gradcheck_cmd(a, cli.seed, out),
        Command::TrainToy(a) => train_toy(a, config, cli.seed, out, err),
        Command::Eval(a) => eval(a, out, err),
        Command::Init(a) => init(a, config, cli.seed),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.msg);
            f.code
        }
    }
}

fn init_threads(flag: usize) {
    let n = std::env::var("G2HF_THREADS").ok().and_then(|v| v.trim().parse().ok()).unwrap_or(flag);
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

fn parse_fault(op: &Option<String>) -> Option<Fault> {
    op.as_ref().map(|op| Fault { op: Box::leak(op.clone().into_boxed_str()), scale: 1.5 })
}

fn read_rgb(path: &Path) -> Result<Tensor, Failure> {
    let img = Image::read(path)?;
    if img.channels != 3 {
        return Err(Failure::new(EXIT_IMAGE, format!("{}: expected an RGB PPM (P6)", path.display())));
    }
    Ok(img.to_tensor())
}

fn read_gray(path: &Path) -> Result<Tensor, Failure> {
    let img = Image::read(path)?;
    if img.channels != 1 {
        return Err(Failure::new(EXIT_IMAGE, format!("{}: expected a grayscale PGM (P5)", path.display())));
    }
    Ok(img.to_tensor())
}

fn write_map(path: &Path, map: &Tensor) -> CmdResult {
    Image::from_tensor(map)?.write(path)?;
    Ok(())
}

fn forward(a: &ForwardArgs, config: NetConfig, out: &mut dyn Write) -> CmdResult {
    let image = read_rgb(&a.image)?;
    let (_, h, w) = image.dims3()?;
    config.check_input(h, w)?;
    let weights = ModelWeights::load(&a.weights)?;
    let net = G2hfNet::from_weights(config, &weights)?;
    let maps = net.forward(&image)?;
    write_map(&a.out, maps.primary())?;
    if let Some(dir) = &a.all_heads {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        for (i, m) in maps.maps.iter().enumerate() {
            write_map(&dir.join(format!("s{}.pgm", i + 1)), m)?;
        }
    }
    let _ = writeln!(out, "wrote {} ({w}x{h})", a.out.display());
    Ok(())
}

fn selftest_cmd(a: &SelftestArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let cfg = SuiteConfig { seed, fault: parse_fault(&a.inject_fault) };
    let results = selftest::run(a.filter.as_deref(), &cfg, |r| {
        let _ = writeln!(out, "{}", r.line());
    });
    let failed = results.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(out, "{} checks, {} passed, {failed} failed", results.len(), results.len() - failed);
    if results.is_empty() {
        return Err(Failure::new(EXIT_FAILURE, "no check matches the filter"));
    }
    if failed > 0 {
        return Err(Failure::new(EXIT_FAILURE, format!("{failed} checks failed")));
    }
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs, seed: u64, out: &mut dyn Write) -> CmdResult {
    let cfg = CheckConfig { seed, fault: parse_fault(&a.inject_fault), ..CheckConfig::default() };
    let mut reports = gradcheck::primitive_suite(&cfg)?;
    reports.extend(gradcheck::module_suite(&cfg)?);
    reports.push(gradcheck::network_check(&cfg)?);
    for r in &reports {
        let _ = writeln!(out, "{r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_FAILURE, format!("gradient check failed: {}", failed.join(", "))))
    }
}

fn train_toy(a: &TrainArgs, config: NetConfig, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let image = read_rgb(&a.image)?;
    let mask = read_gray(&a.mask)?;
    let (_, h, w) = image.dims3()?;
    config.check_input(h, w)?;
    if mask.shape() != [1, h, w] {
        return Err(Failure::new(
            EXIT_PRECONDITION,
            format!("mask is {}x{}, image is {w}x{h}", mask.shape()[2], mask.shape()[1]),
        ));
    }
    let mut net = G2hfNet::seeded(config, seed)?;
    let _ = writeln!(out, "{}", StepLog::CSV_HEADER);
    let rms = RmsConfig { lr: a.lr, ..RmsConfig::default() };
    let report = train_single(&mut net, &image, &mask, a.steps, rms, |s| {
        let _ = writeln!(out, "{}", s.csv());
    })?;
    net.to_weights().save(&a.out)?;
    let heads: Vec<String> = report.final_loss.heads.iter().map(|h| format!("{:.4}", h.total)).collect();
    let _ = writeln!(
        err,
        "final total {:.6} F {:.4} MAE {:.4} heads {}",
        report.final_loss.total,
        report.eval.f_beta,
        report.eval.mae,
        heads.join(",")
    );
    Ok(())
}

fn eval(a: &EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let list = |dir: &Path| -> Result<Vec<String>, Failure> {
        let mut names = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| io_failure(dir, e))? {
            let entry = entry.map_err(|e| io_failure(dir, e))?;
            if entry.path().is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        Ok(names)
    };
    let preds = list(&a.pred)?;
    let gts = list(&a.gt)?;
    let mut csv = String::from("name,mae,fbeta\n");
    let (mut n, mut mae_sum, mut f_sum) = (0usize, 0.0, 0.0);
    for name in preds.iter().filter(|p| !gts.contains(p)) {
        let _ = writeln!(err, "skipping {name}: no ground truth");
    }
    for name in gts.iter().filter(|g| !preds.contains(g)) {
        let _ = writeln!(err, "skipping {name}: no prediction");
    }
    for name in preds.iter().filter(|p| gts.contains(p)) {
        let s = read_gray(&a.pred.join(name))?;
        let g = read_gray(&a.gt.join(name))?;
        if s.shape() != g.shape() {
            let _ = writeln!(err, "skipping {name}: size {:?} vs {:?}", s.shape(), g.shape());
            continue;
        }
        let r = f_measure(&s, &g, BETA2)?;
        csv.push_str(&format!("{name},{:.6},{:.6}\n", r.mae, r.f_beta));
        n += 1;
        mae_sum += r.mae;
        f_sum += r.f_beta;
    }
    if n == 0 {
        return Err(Failure::new(EXIT_IMAGE, "no prediction has a matching ground-truth file"));
    }
    let (mae, f) = (mae_sum / n as f64, f_sum / n as f64);
    csv.push_str(&format!("mean,{mae:.6},{f:.6}\n"));
    fs::write(&a.report, csv).map_err(|e| io_failure(&a.report, e))?;
    let _ = writeln!(out, "{n} images: MAE {mae:.6} F {f:.6}");
    Ok(())
}

fn init(a: &InitArgs, config: NetConfig, seed: u64) -> CmdResult {
    crate::net::init_weights(&config, seed)?.save(&a.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("g2hf").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn filtered_selftest() {
        let (code, out, _) = run_capture(&["selftest", "--filter", "unshuffle"]);
        assert_eq!(code, 0, "{out}");
        let lines: Vec<&str> = out.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
        assert!(lines.len() >= 5);
        assert!(lines.iter().all(|l| l.contains("unshuffle")));
    }

    #[test]
    fn unknown_filter_fails() {
        let (code, _, err) = run_capture(&["selftest", "--filter", "no-such-check"]);
        assert_eq!(code, 1);
        assert!(err.contains("no check"));
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::Image(ImageError::Malformed("x".into()))).code, 2);
        assert_eq!(Failure::from(Error::Weights(crate::error::WeightError::Truncated("x".into()))).code, 3);
        assert_eq!(Failure::from(NetConfig::toy().check_input(100, 100).unwrap_err()).code, 4);
        assert_eq!(Failure::from(Error::EmptyBatch).code, 1);
    }
}
