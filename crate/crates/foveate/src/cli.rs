//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{FrameKind, OracleKind, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "foveate", version, about = "Foveated log-polar vision toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub oracle: Option<OracleKind>,
    /// Bridge command line; falls back to FOVEATE_BRIDGE_CMD.
    #[arg(long, global = true)]
    pub bridge_cmd: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub frame: Option<FrameKind>,
    /// Fixation grid side.
    #[arg(long = "grid-n", global = true)]
    pub grid_n: Option<usize>,
    #[arg(long, global = true)]
    pub min_ratio: Option<f64>,
}

impl GlobalArgs {
    /// Config file (or defaults) with every given flag applied on top.
    pub fn apply(&self, mut cfg: RunConfig) -> RunConfig {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = Some(v);
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if let Some(v) = self.oracle {
            cfg.oracle = v;
        }
        if let Some(v) = &self.bridge_cmd {
            cfg.bridge_cmd = Some(v.clone());
        }
        if let Some(v) = self.frame {
            cfg.frame = Some(v);
        }
        if let Some(v) = self.grid_n {
            cfg.grid_n = v;
        }
        if let Some(v) = self.min_ratio {
            cfg.min_ratio = v;
        }
        cfg
    }
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Apply one geometric transform to an image.
    Transform(TransformArgs),
    /// Per-image worst-case attack over a manifest.
    Attack(AttackArgs),
    /// Likelihood map over the fixation grid for one image.
    Localize(LocalizeArgs),
    /// Localization metrics over an annotated manifest, or compare two runs.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic scene suite and its manifest.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformMode {
    Logpolar,
    Inverse,
    Mask,
    Rotate,
    Zoom,
    Roll,
    Focus,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: TransformMode,
    /// Degrees, for rotate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub angle: f64,
    /// Zoom factor.
    #[arg(long, default_value_t = 1.0)]
    pub factor: f64,
    /// Roll in pixels.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub dx: isize,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub dy: isize,
    /// Normalized `x,y`.
    #[arg(long, value_parser = parse_pair, allow_negative_numbers = true)]
    pub fixation: Option<(f64, f64)>,
    /// Normalized `x_min,y_min,x_max,y_max`, for focus.
    #[arg(long = "box", value_parser = parse_box, allow_negative_numbers = true)]
    pub bbox: Option<[f64; 4]>,
    /// Output raster size `HxW`, for inverse.
    #[arg(long, value_parser = parse_size)]
    pub size: Option<(usize, usize)>,
    /// Output path (default: OUT/<stem>_<mode>.png).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackKindArg {
    Rotation,
    Zoom,
    Translation,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value = "rotation")]
    pub kind: AttackKindArg,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    pub image: PathBuf,
    /// Comma-separated label names, or `all`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
    /// Also write the grid as an upsampled grayscale PNG.
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Heat map path (default: OUT/<stem>_heatmap.json).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(required_unless_present = "compare")]
    pub manifest: Option<PathBuf>,
    /// Two recentered-mean heat maps; writes their difference and log-odds maps.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub compare: Option<Vec<PathBuf>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: Option<usize>,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    parse_floats::<2>(s).map(|[a, b]| (a, b))
}

fn parse_box(s: &str) -> Result<[f64; 4], String> {
    parse_floats::<4>(s)
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(h)?, num(w)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!(parse_pair("-0.5, 0.25"), Ok((-0.5, 0.25)));
        assert!(parse_pair("1").is_err());
        assert_eq!(parse_box("-1,-1,1,1"), Ok([-1.0, -1.0, 1.0, 1.0]));
        assert_eq!(parse_size("224x112"), Ok((224, 112)));
        assert!(parse_size("224").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::parse_from(["foveate", "--seed", "7", "--grid-n", "3", "synth", "--count", "2"]);
        let cfg = cli.global.apply(RunConfig { seed: 1, grid_n: 11, min_ratio: 0.3, ..RunConfig::default() });
        assert_eq!((cfg.seed, cfg.grid_n, cfg.min_ratio), (7, 3, 0.3));
    }
}
