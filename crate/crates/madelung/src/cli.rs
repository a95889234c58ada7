//! `madelung <command>`: a thin shell over [`crate::run`].
//!
//! Exit codes: 0 success, 2 usage errors (bad flags, unknown scenario),
//! 1 everything else. Errors are printed to stderr as
//! `{"error": {"kind": ..., "message": ...}}`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use madelung_core::scenarios::{EigenCache, ScenarioConfig, ScenarioName};

use crate::config::{load_config, parse_name, Overrides};
use crate::error::{AppError, AppResult};
use crate::render::{FigureKind, Shading};
use crate::run::{
    classify_to_dir, eigen_to_dir, evolve_to_dir, fields_to_dir, render_run, scenario_to_dir, streamlines_to_dir,
    tune_to_dir, vortex_to_dir, Artifact, RenderSpec, WriteOptions,
};
use crate::store::cache_from_env;

#[derive(Debug, Parser)]
#[command(name = "madelung", version, about = "Madelung fluid lab: eigenstates, energy ledgers, streamlines, figures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenbasis of the scenario's potential.
    Eigen {
        #[command(flatten)]
        s: ScenarioArgs,
        /// Number of levels (defaults to what the scenario uses).
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Ψ(x, t) at every frame.
    Evolve(ScenarioArgs),
    /// Energy ledger and masks at every frame.
    Fields(ScenarioArgs),
    /// Quantile streamlines and node events.
    Streamlines(ScenarioArgs),
    /// Superoscillation sets and their subset relations.
    Classify(ScenarioArgs),
    /// The 2D vortex state.
    Vortex(ScenarioArgs),
    /// Barrier height for a 50/50 split.
    Tune(ScenarioArgs),
    /// Full scenario: manifest, data and figures.
    Scenario(ScenarioArgs),
    /// Redraw a figure from a scenario run directory.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Preset name.
    #[arg(long, visible_alias = "scenario")]
    name: Option<String>,
    /// TOML config (a preset name plus changed keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: runs/<name>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Relative truncation threshold for projected packets.
    #[arg(long)]
    eta: Option<f64>,
    /// Tuning tolerance |T − ½| (tuned scenarios) or streamline tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Render only this shading's figures.
    #[arg(long, value_enum)]
    shading: Option<Shading>,
    /// Largest number of rows per axis in grid CSVs.
    #[arg(long, default_value_t = 501)]
    max_rows: usize,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Scenario run directory (holding manifest.json).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    kind: FigureKind,
    #[arg(long, value_enum, default_value = "qka")]
    shading: Shading,
    /// State label [default: the first state].
    #[arg(long)]
    state: Option<String>,
    /// Frame index for single-instant figures [default: nearest T/4].
    #[arg(long)]
    frame: Option<usize>,
    /// Horizontal axis range, `min,max`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    x_range: Option<(f64, f64)>,
    /// Vertical axis range, `min,max`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    y_range: Option<(f64, f64)>,
    /// SVG file to write [default: <input>/figures/<kind>_<shading>.svg].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected min,max")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(a < b) {
        return Err("min must be below max".into());
    }
    Ok((a, b))
}

fn name(n: &str) -> AppResult<ScenarioName> {
    parse_name(n).map_err(|e| match e {
        AppError::Config(m) => AppError::Usage(m),
        e => e,
    })
}

impl ScenarioArgs {
    fn config(&self, default: Option<ScenarioName>) -> AppResult<ScenarioConfig> {
        let mut cfg = match (&self.name, &self.config) {
            (_, Some(path)) => {
                let cfg = load_config(path)?;
                if let Some(n) = &self.name {
                    if name(n)? != cfg.name {
                        return Err(AppError::Usage(format!("--name {n} disagrees with the config's {}", cfg.name)));
                    }
                }
                cfg
            }
            (Some(n), None) => ScenarioConfig::preset(name(n)?),
            (None, None) => match default {
                Some(n) => ScenarioConfig::preset(n),
                None => return Err(AppError::Usage("give --name or --config".into())),
            },
        };
        Overrides {
            grid_n: self.grid_n,
            frames: self.frames,
            eta: self.eta,
            tol: self.tol,
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(cfg.name.as_str()))
    }

    fn options(&self) -> WriteOptions {
        WriteOptions {
            max_rows: self.max_rows,
            shading: self.shading,
        }
    }
}

fn list(out: &mut dyn Write, root: &Path, files: &[Artifact]) -> std::io::Result<()> {
    for a in files {
        writeln!(out, "{}  {} bytes  sha256:{}", root.join(&a.path).display(), a.bytes, a.sha256)?;
    }
    Ok(())
}

type Job = fn(&ScenarioConfig, &mut EigenCache, &Path, &WriteOptions) -> AppResult<Vec<Artifact>>;

fn per_state(out: &mut dyn Write, s: &ScenarioArgs, job: Job) -> AppResult<()> {
    let cfg = s.config(None)?;
    let dir = s.out(&cfg);
    let files = job(&cfg, &mut cache_from_env(), &dir, &s.options())?;
    list(out, &dir, &files).map_err(|e| AppError::io("<stdout>", e))
}

fn execute(cli: Cli, out: &mut dyn Write) -> AppResult<()> {
    let stdout_err = |e: std::io::Error| AppError::io("<stdout>", e);
    match cli.command {
        Command::Render(r) => {
            let output = r.out.clone().unwrap_or_else(|| {
                r.input
                    .join("figures")
                    .join(format!("{}_{}.svg", r.kind.as_str(), r.shading.as_str()))
            });
            let spec = RenderSpec {
                kind: r.kind,
                shading: r.shading,
                state: r.state,
                frame: r.frame,
                x_range: r.x_range,
                y_range: r.y_range,
                output: output.clone(),
            };
            let stats = render_run(&r.input, &spec)?;
            writeln!(
                out,
                "{}  {} shading  shaded {:.0} px (soft {:.0}, hard {:.0})",
                output.display(),
                r.shading.as_str(),
                stats.soft + stats.hard,
                stats.soft,
                stats.hard
            )
            .map_err(stdout_err)?;
        }
        Command::Vortex(s) => {
            let cfg = s.config(Some(ScenarioName::Vortex2d))?;
            let dir = s.out(&cfg);
            let (v, files) = vortex_to_dir(&cfg, &dir, &s.options())?;
            list(out, &dir, &files).map_err(stdout_err)?;
            writeln!(
                out,
                "circulation {:.6} at the node, {:.2e} off it; K_a exponent {:.4}",
                v.circulation_node, v.circulation_off, v.profile.fit_exponent
            )
            .map_err(stdout_err)?;
        }
        Command::Tune(s) => {
            let cfg = s.config(Some(ScenarioName::Mzi1d))?;
            let dir = s.out(&cfg);
            let (t, files) = tune_to_dir(&cfg, &mut cache_from_env(), &dir)?;
            list(out, &dir, &files).map_err(stdout_err)?;
            writeln!(
                out,
                "U0* = {}  T = {:.6}  probes = {}",
                t.u0_star, t.transmission, t.iterations
            )
            .map_err(stdout_err)?;
        }
        Command::Eigen { s, levels } => {
            let cfg = s.config(None)?;
            let dir = s.out(&cfg);
            let (energies, files) = eigen_to_dir(&cfg, &mut cache_from_env(), levels, &dir)?;
            list(out, &dir, &files).map_err(stdout_err)?;
            let shown: Vec<String> = energies.iter().take(8).map(|e| format!("{e:.6}")).collect();
            let more = if energies.len() > 8 { ", …" } else { "" };
            writeln!(out, "{} levels: {}{more}", energies.len(), shown.join(", ")).map_err(stdout_err)?;
        }
        Command::Scenario(s) => per_state(out, &s, |cfg, c, dir, o| Ok(scenario_to_dir(cfg, c, dir, o)?.1))?,
        Command::Evolve(s) => per_state(out, &s, evolve_to_dir)?,
        Command::Fields(s) => per_state(out, &s, fields_to_dir)?,
        Command::Streamlines(s) => per_state(out, &s, |cfg, c, dir, _| streamlines_to_dir(cfg, c, dir))?,
        Command::Classify(s) => per_state(out, &s, classify_to_dir)?,
    }
    Ok(())
}

/// Runs the command line `argv` (program name first) and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let _ = writeln!(err, "{}", AppError::Usage(first).to_json());
            return 2;
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{}", e.to_json());
            if e.kind() == "usage" {
                2
            } else {
                1
            }
        }
    }
}
