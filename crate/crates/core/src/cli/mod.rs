//! `robref` command-line harness.
//!
//! Precedence for every setting: command-line flag, then the `--config` TOML file, then the
//! built-in default. All commands write CSV (to `--output` or stdout) with a leading `#`
//! line recording the invocation.

mod commands;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::dists::io::write_table;
use crate::error::{Error, Result};
use crate::scores::{ScoreConstants, ScoreFamily, ScoreKind, ScoreParams};

pub use commands::{cmd_check, cmd_murphy, cmd_ref, cmd_regress, cmd_reinsurance, Output};

#[derive(Debug, Parser)]
#[command(name = "robref", version, about = "Robust elicitable functionals under KL ambiguity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Robust functional of a loss sample for a list of radii.
    Ref(Flags),
    /// Sweep of the robust functional over homogeneity degrees and radii.
    Murphy(Flags),
    /// Robust (VaR, ES) of simulated reinsurance losses across replicates.
    Reinsurance(Flags),
    /// Robust linear regression on a CSV file or a synthetic model.
    Regress(Flags),
    /// Compare the solvers against brute-force oracles.
    Check(Flags),
}

impl Command {
    pub fn flags(&self) -> &Flags {
        match self {
            Command::Ref(f)
            | Command::Murphy(f)
            | Command::Reinsurance(f)
            | Command::Regress(f)
            | Command::Check(f) => f,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Score family: mean, var, expectile or vares.
    #[arg(long)]
    pub score: Option<String>,
    /// Homogeneity degree; `murphy` also takes a list `0,1,2` or a range `lo:hi:step`.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<String>,
    /// Level of the VaR / ES scores. `reinsurance` takes a comma list.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Level of the expectile score.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Comma-separated radii of the divergence ball.
    #[arg(long)]
    pub eps: Option<String>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Sample size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with default values for any of these settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generating distribution, e.g. `texp:2`, `beta:2,2`, `lognormal:4.58,0.19`.
    #[arg(long)]
    pub dist: Option<String>,
    /// Multiply the losses by this factor before solving; results are reported unscaled.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Synthetic regression model: A, B or C.
    #[arg(long)]
    pub model: Option<String>,
    /// `reinsurance`: write the losses of the first replicate here.
    #[arg(long)]
    pub losses_output: Option<PathBuf>,
    /// `regress`: write the generated data set here.
    #[arg(long)]
    pub dump_data: Option<PathBuf>,
}

/// Values read from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub score: Option<String>,
    pub b: Option<toml::Value>,
    pub alpha: Option<toml::Value>,
    pub tau: Option<f64>,
    pub eps: Option<toml::Value>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub dist: Option<String>,
    pub scale: Option<f64>,
    pub model: Option<String>,
    pub losses_output: Option<PathBuf>,
    pub dump_data: Option<PathBuf>,
    #[serde(default)]
    pub constants: Option<ScoreConstants>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::BadSpec(format!("config: {e}")))
    }
}

// Numbers and arrays in the config file are accepted where flags take text.
fn value_text(v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Array(items) => {
            items.iter().map(value_text).collect::<Result<Vec<_>>>().map(|v| v.join(","))
        }
        other => Err(Error::BadSpec(format!("unsupported config value {other}"))),
    }
}

/// Flags merged with the config file.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub score: Option<String>,
    pub b: Option<String>,
    pub alpha: Option<String>,
    pub tau: Option<f64>,
    pub eps: Option<String>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub n: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub dist: Option<String>,
    pub scale: Option<f64>,
    pub model: Option<String>,
    pub losses_output: Option<PathBuf>,
    pub dump_data: Option<PathBuf>,
    pub constants: Option<ScoreConstants>,
}

impl Settings {
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let cfg = match &flags.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let text = |v: &Option<toml::Value>| v.as_ref().map(value_text).transpose();
        Ok(Settings {
            score: flags.score.clone().or(cfg.score),
            b: flags.b.clone().or(text(&cfg.b)?),
            alpha: flags.alpha.clone().or(text(&cfg.alpha)?),
            tau: flags.tau.or(cfg.tau),
            eps: flags.eps.clone().or(text(&cfg.eps)?),
            input: flags.input.clone().or(cfg.input),
            output: flags.output.clone().or(cfg.output),
            n: flags.n.or(cfg.n),
            replicates: flags.replicates.or(cfg.replicates),
            seed: flags.seed.or(cfg.seed),
            dist: flags.dist.clone().or(cfg.dist),
            scale: flags.scale.or(cfg.scale),
            model: flags.model.clone().or(cfg.model),
            losses_output: flags.losses_output.clone().or(cfg.losses_output),
            dump_data: flags.dump_data.clone().or(cfg.dump_data),
            constants: cfg.constants,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn eps_list(&self, default: &str) -> Result<Vec<f64>> {
        let list = parse_list(self.eps.as_deref().unwrap_or(default))?;
        if let Some(bad) = list.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return Err(Error::BadEpsilon(*bad));
        }
        Ok(list)
    }

    pub fn alpha_list(&self, default: &str) -> Result<Vec<f64>> {
        parse_list(self.alpha.as_deref().unwrap_or(default))
    }

    pub fn b_grid(&self, default: &str) -> Result<Vec<f64>> {
        parse_grid(self.b.as_deref().unwrap_or(default))
    }

    /// Score family for a single homogeneity degree.
    pub fn family(&self, default_score: &str, b: f64) -> Result<ScoreFamily> {
        let kind: ScoreKind = self.score.as_deref().unwrap_or(default_score).parse()?;
        let alpha = match &self.alpha {
            Some(text) => {
                let list = parse_list(text)?;
                if list.len() != 1 {
                    return Err(Error::BadSpec("expected a single --alpha".into()));
                }
                Some(list[0])
            }
            None => None,
        };
        let mut params = ScoreParams::new(kind, b);
        params.alpha = alpha;
        params.tau = self.tau;
        if let Some(c) = self.constants {
            params = params.with_constants(c);
        }
        params.build()
    }
}

pub const DEFAULT_SEED: u64 = 42;

/// Comma-separated reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let list: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::BadSpec(format!("cannot parse number list '{text}'")))?;
    if list.is_empty() || list.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadSpec(format!("invalid number list '{text}'")));
    }
    Ok(list)
}

/// A list as in [`parse_list`] or an inclusive range `lo:hi:step`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 1 {
        return parse_list(text);
    }
    let bad = || Error::BadSpec(format!("cannot parse range '{text}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> =
        parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let (lo, hi, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    // Rounded to 12 digits so grids print cleanly.
    Ok((0..count).map(|i| ((lo + step * i as f64) * 1e12).round() / 1e12).collect())
}

fn provenance(args: &[String], seed: Option<u64>) -> String {
    let rest = args.get(1..).unwrap_or_default();
    let mut line = format!("robref {}: {}", env!("CARGO_PKG_VERSION"), rest.join(" "));
    if let Some(s) = seed {
        line.push_str(&format!(" | seed={s}"));
    }
    line
}

fn write_output(path: Option<&Path>, provenance: &str, out: &Output) -> Result<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            write_table(BufWriter::new(file), provenance, &out.header, &out.rows)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_table(&mut lock, provenance, &out.header, &out.rows)?;
            lock.flush().map_err(|e| Error::Io(e.to_string()))
        }
    }
}

/// Run a parsed command line; `args` is the raw invocation used for provenance.
pub fn run(cli: &Cli, args: &[String]) -> Result<()> {
    let settings = Settings::resolve(cli.command.flags())?;
    let (out, seeded) = match &cli.command {
        Command::Ref(_) => (cmd_ref(&settings)?, false),
        Command::Murphy(_) => (cmd_murphy(&settings)?, settings.input.is_none()),
        Command::Reinsurance(_) => (cmd_reinsurance(&settings)?, true),
        Command::Regress(_) => (cmd_regress(&settings)?, settings.input.is_none()),
        Command::Check(_) => (cmd_check(&settings)?, false),
    };
    let line = provenance(args, seeded.then(|| settings.seed()));
    if let (Some(path), Some(extra)) = (&settings.losses_output, &out.losses) {
        write_output(Some(path), &line, extra)?;
    }
    if let (Some(path), Some(extra)) = (&settings.dump_data, &out.data) {
        write_output(Some(path), &line, extra)?;
    }
    write_output(settings.output.as_deref(), &line, &out)?;
    if out.failed_checks > 0 {
        return Err(Error::CheckFailed(out.failed_checks));
    }
    Ok(())
}

/// Process exit code for an error: 1 for numerical failures, 2 for invalid input.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        1
    } else {
        2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("-1,0.5").unwrap(), vec![-1.0, 0.5]);
        assert_eq!(parse_grid("0:1:0.1").unwrap().len(), 11);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_list("0,x").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "score = \"var\"\nalpha = 0.9\neps = [0, 0.5]\nseed = 7\nn = 30\n")
            .unwrap();
        let flags = Flags { config: Some(path), seed: Some(9), ..Flags::default() };
        let s = Settings::resolve(&flags).unwrap();
        assert_eq!(s.seed(), 9);
        assert_eq!(s.n, Some(30));
        assert_eq!(s.eps_list("0").unwrap(), vec![0.0, 0.5]);
        assert_eq!(s.family("mean", 1.0).unwrap().alpha(), Some(0.9));
        let defaults = Settings::resolve(&Flags::default()).unwrap();
        assert_eq!(defaults.seed(), DEFAULT_SEED);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "sede = 7\n").unwrap();
        let flags = Flags { config: Some(path), ..Flags::default() };
        assert!(matches!(Settings::resolve(&flags), Err(Error::BadSpec(_))));
    }
}
