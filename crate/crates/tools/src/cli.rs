//! The `sparsity` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or format errors.
//! Data goes to `--out` or standard output; diagnostics go to standard error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparsity_core::{
    component_report, detect_abrupt, detect_essential, imp_schedule, mask, weight_histogram,
    zero_census, DType, DetectionMode, FilterSpec, NmPattern, Normalization, PruneSpec,
    DEFAULT_EPS, DEFAULT_MIN_JUMP,
};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::exec::{with_threads, Rayon};
use crate::filter::TensorFilter;
use crate::maskfile::{read_mask, write_mask};
use crate::ops::{apply_mask, inspect, prune_container};
use crate::output::{self, Format};
use crate::rules::{default_rules, read_rules};
use crate::series::{census_series, fractions, parse_fractions_csv, CheckpointSeries};
use crate::synth::{parse_tensor_spec, synth, Distribution, SynthSpec};

#[derive(Parser, Debug)]
#[command(
    name = "sparsity",
    version,
    about = "Magnitude-pruning and sparsity analysis for tensor checkpoints"
)]
pub struct Cli {
    /// Worker threads; output is identical for every value.
    #[arg(long, global = true, value_parser = parse_threads)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List tensors with shapes, dtypes and byte sizes.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One-shot magnitude pruning to an exact sparsity.
    Prune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_fraction)]
        sparsity: f64,
        #[arg(long, value_enum, default_value = "global")]
        scope: ScopeArg,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
        /// Print a JSON summary instead of the achieved sparsity.
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// N:M structured pruning.
    NmPrune {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_nm)]
        nm: NmPattern,
        /// Grouping axis; defaults to the last.
        #[arg(long)]
        axis: Option<usize>,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Zero out masked weights, writing a new container.
    Apply {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Apply even if the mask was built from a different container.
        #[arg(long)]
        force: bool,
    },
    /// Cosine similarity between mask files.
    Similarity {
        #[arg(required = true, num_args = 2..)]
        masks: Vec<PathBuf>,
        /// Include per-tensor similarity (pairs only).
        #[arg(long)]
        per_tensor: bool,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Whether the first mask's kept set lies inside the second's.
    Nested { high: PathBuf, low: PathBuf },
    /// Essential sparsity of a sparsity/metric curve.
    Essential {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPS, value_parser = parse_eps)]
        eps: f64,
        #[arg(long, value_enum, default_value = "first")]
        mode: ModeArg,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Count weights with magnitude at most the tolerance.
    Census {
        #[arg(
            long = "in",
            required_unless_present = "series",
            conflicts_with = "series"
        )]
        input: Option<PathBuf>,
        /// Series manifest: {"entries": [{"iteration", "path"}, ...]}.
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, value_parser = parse_tol)]
        tol: f64,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Abrupt-sparsification point in an "iteration,zero_fraction" CSV.
    Abrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_JUMP, value_parser = parse_fraction)]
        min_jump: f64,
    },
    /// Weight histograms (--in) or per-component sparsity (--mask).
    Report {
        #[arg(long = "in", required_unless_present = "mask", conflicts_with = "mask")]
        input: Option<PathBuf>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = 50, value_parser = parse_bins)]
        bins: usize,
        #[arg(long, value_enum, default_value = "none")]
        normalize: NormArg,
        /// Component rule file; defaults to transformer components.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic container.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// normal, uniform or spike:<p>.
        #[arg(long, default_value = "normal", value_parser = parse_dist)]
        dist: Distribution,
        /// Tensor as name=AxB; repeatable.
        #[arg(long = "tensor", required = true, value_parser = parse_tensor)]
        tensors: Vec<(String, Vec<usize>)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "F32", value_parser = parse_dtype)]
        dtype: DType,
    },
    /// Cumulative sparsity after each iterative pruning round.
    Schedule {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        rounds: u32,
        #[arg(long, default_value_t = 0.2, value_parser = parse_fraction)]
        fraction: f64,
    },
}

#[derive(Args, Debug, Default)]
struct FilterArgs {
    /// Tensor name glob to include; repeatable. Replaces the default filter.
    #[arg(long)]
    include: Vec<String>,
    /// Tensor name glob to exclude; repeatable. Replaces the default filter.
    #[arg(long)]
    exclude: Vec<String>,
    /// Minimum tensor rank.
    #[arg(long)]
    min_rank: Option<usize>,
}

impl FilterArgs {
    /// Custom patterns replace `default`; the rank floor then drops to 0
    /// unless given.
    fn build(&self, default: FilterSpec) -> Result<TensorFilter> {
        let spec = if self.include.is_empty() && self.exclude.is_empty() {
            FilterSpec {
                min_rank: self.min_rank.unwrap_or(default.min_rank),
                ..default
            }
        } else {
            FilterSpec {
                include: if self.include.is_empty() {
                    vec!["*".into()]
                } else {
                    self.include.clone()
                },
                exclude: self.exclude.clone(),
                min_rank: self.min_rank.unwrap_or(0),
            }
        };
        TensorFilter::new(spec)
    }
}

fn all_tensors() -> FilterSpec {
    FilterSpec {
        include: vec!["*".into()],
        exclude: vec![],
        min_rank: 0,
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScopeArg {
    Global,
    PerTensor,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    First,
    Sustained,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum NormArg {
    None,
    Standardize,
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_eps(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{v} must be finite and non-negative"))
    }
}

fn parse_tol(s: &str) -> std::result::Result<f64, String> {
    parse_eps(s)
}

fn parse_bins(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(b) if b >= 1 => Ok(b),
        _ => Err(format!("'{s}' is not a positive integer")),
    }
}

fn parse_threads(s: &str) -> std::result::Result<usize, String> {
    parse_bins(s)
}

fn parse_nm(s: &str) -> std::result::Result<NmPattern, String> {
    let (n, m) = s
        .split_once(':')
        .ok_or_else(|| format!("'{s}' is not N:M"))?;
    let n: usize = n.parse().map_err(|_| format!("'{s}' is not N:M"))?;
    let m: usize = m.parse().map_err(|_| format!("'{s}' is not N:M"))?;
    NmPattern::new(n, m).map_err(|e| e.to_string())
}

fn parse_dist(s: &str) -> std::result::Result<Distribution, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_tensor(s: &str) -> std::result::Result<(String, Vec<usize>), String> {
    parse_tensor_spec(s).map_err(|e| e.to_string())
}

fn parse_dtype(s: &str) -> std::result::Result<DType, String> {
    s.parse()
        .map_err(|_| format!("unknown dtype '{s}' (expected F16, BF16, F32 or F64)"))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let threads = cli.threads.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let mut buf = Vec::new();
    let result = with_threads(threads, || execute(cli.command, &mut buf));
    let _ = stdout.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut Vec<u8>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(Error::file(path)),
        None => {
            stdout.extend_from_slice(text.as_bytes());
            Ok(())
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(Error::file(path))?,
    ))
}

fn execute(command: Command, stdout: &mut Vec<u8>) -> Result<()> {
    match command {
        Command::Inspect { input, filter, out } => {
            let filter = filter.build(all_tensors())?;
            let inv = inspect(&Container::open(&input)?, &filter)?;
            emit(&output::render_json(&inv)?, out.as_deref(), stdout)
        }
        Command::Prune {
            input,
            sparsity,
            scope,
            filter,
            out,
            format,
        } => {
            let filter = filter.build(FilterSpec::default_prunable())?;
            let spec = match scope {
                ScopeArg::Global => PruneSpec::global(sparsity),
                ScopeArg::PerTensor => PruneSpec::per_tensor(sparsity),
            };
            let container = Container::open(&input)?;
            let (set, threshold) = prune_container(&container, &spec, &filter, &Rayon)?;
            write_mask(&out, &set)?;
            let text = match format {
                Some(_) => output::render_prune_summary(&set, threshold.as_ref())?,
                None => format!("sparsity {:?}\n", set.sparsity()?),
            };
            emit(&text, None, stdout)
        }
        Command::NmPrune {
            input,
            nm,
            axis,
            filter,
            out,
            format,
        } => {
            let filter = filter.build(FilterSpec::default_prunable())?;
            let spec = PruneSpec {
                nm_axis: axis,
                ..PruneSpec::nm(nm)
            };
            let container = Container::open(&input)?;
            let (set, _) = prune_container(&container, &spec, &filter, &Rayon)?;
            write_mask(&out, &set)?;
            let text = match format {
                Some(_) => output::render_prune_summary(&set, None)?,
                None => format!("sparsity {:?}\n", set.sparsity()?),
            };
            emit(&text, None, stdout)
        }
        Command::Apply {
            input,
            mask,
            out,
            force,
        } => {
            let container = Container::open(&input)?;
            let set = read_mask(&mask)?;
            let mut w = create(&out)?;
            apply_mask(&container, &set, force, &mut w)?;
            w.flush().map_err(Error::file(&out))
        }
        Command::Similarity {
            masks,
            per_tensor,
            format,
            out,
        } => {
            let sets = masks.iter().map(read_mask).collect::<Result<Vec<_>>>()?;
            let matrix = mask::similarity_matrix(&sets)?;
            if sets.len() == 2 && format.is_none() && !per_tensor {
                return emit(&format!("{:?}\n", matrix[0][1]), out.as_deref(), stdout);
            }
            let per = if per_tensor && sets.len() == 2 {
                Some(sets[0].per_tensor_cosine(&sets[1])?)
            } else {
                None
            };
            let names: Vec<String> = masks.iter().map(|p| p.display().to_string()).collect();
            let text = output::render_similarity(
                &names,
                &matrix,
                per.as_ref(),
                format.map(Format::from).unwrap_or_default(),
            )?;
            emit(&text, out.as_deref(), stdout)
        }
        Command::Nested { high, low } => {
            let nested = mask::is_nested(&read_mask(&high)?, &read_mask(&low)?)?;
            emit(&format!("{nested}\n"), None, stdout)
        }
        Command::Essential {
            curve,
            eps,
            mode,
            format,
        } => {
            let curve = crate::curve_io::read_curve(&curve)?;
            let (mode, name) = match mode {
                ModeArg::First => (DetectionMode::FirstCrossing, "first"),
                ModeArg::Sustained => (DetectionMode::Sustained, "sustained"),
            };
            let r = detect_essential(&curve, eps, mode)?;
            let text = match format {
                Some(_) => output::render_essential(&r, name)?,
                None => match r.essential_sparsity {
                    Some(s) => format!("{s:?}\n"),
                    None => "none\n".into(),
                },
            };
            emit(&text, None, stdout)
        }
        Command::Census {
            input,
            series,
            tol,
            filter,
            format,
            out,
        } => {
            let filter = filter.build(FilterSpec::default_prunable())?;
            let format = format.map(Format::from);
            let text = match (input, series) {
                (Some(input), _) => {
                    let c = Container::open(&input)?;
                    let census = zero_census(&c, &c.infos(&filter), tol, &Rayon)?;
                    output::render_census(&census, format.unwrap_or(Format::Json))?
                }
                (None, Some(series)) => {
                    let series = CheckpointSeries::read(&series)?;
                    let censuses = census_series(&series, &filter, tol)?;
                    output::render_fractions(&fractions(&censuses), format.unwrap_or(Format::Csv))?
                }
                (None, None) => unreachable!("clap requires --in or --series"),
            };
            emit(&text, out.as_deref(), stdout)
        }
        Command::Abrupt { input, min_jump } => {
            let text = std::fs::read_to_string(&input).map_err(Error::file(&input))?;
            let series = parse_fractions_csv(&text)?;
            let text = match detect_abrupt(&series, min_jump)? {
                Some(it) => format!("{it}\n"),
                None => "none\n".into(),
            };
            emit(&text, None, stdout)
        }
        Command::Report {
            input,
            mask,
            bins,
            normalize,
            rules,
            filter,
            format,
            out,
        } => {
            let format = format.map(Format::from).unwrap_or_default();
            let text = match (input, mask) {
                (Some(input), _) => {
                    let filter = filter.build(FilterSpec::default_prunable())?;
                    let norm = match normalize {
                        NormArg::None => Normalization::None,
                        NormArg::Standardize => Normalization::Standardize,
                    };
                    let c = Container::open(&input)?;
                    let report = weight_histogram(&c, &c.infos(&filter), bins, norm, &Rayon)?;
                    output::render_histogram(&report, format)?
                }
                (None, Some(mask)) => {
                    let rules = match rules {
                        Some(path) => read_rules(&path)?,
                        None => default_rules(),
                    };
                    let set = read_mask(&mask)?;
                    output::render_components(&component_report(&set, &rules)?, format)?
                }
                (None, None) => unreachable!("clap requires --in or --mask"),
            };
            emit(&text, out.as_deref(), stdout)
        }
        Command::Synth {
            out,
            dist,
            tensors,
            seed,
            dtype,
        } => {
            let spec = SynthSpec {
                distribution: dist,
                tensors,
                dtype,
                seed,
            };
            spec.validate()?;
            let mut w = create(&out)?;
            synth(&spec, &mut w)?;
            w.flush().map_err(Error::file(&out))
        }
        Command::Schedule { rounds, fraction } => {
            let schedule = imp_schedule(rounds as usize, fraction)?;
            let text: String = schedule
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{} {s:?}\n", i + 1))
                .collect();
            emit(&text, None, stdout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn custom_filter_rules() {
        let args = FilterArgs {
            exclude: vec!["*bias*".into()],
            ..Default::default()
        };
        let f = args.build(FilterSpec::default_prunable()).unwrap();
        assert_eq!(f.spec().include, vec!["*".to_string()]);
        assert_eq!(f.spec().min_rank, 0);
        let f = FilterArgs::default()
            .build(FilterSpec::default_prunable())
            .unwrap();
        assert_eq!(f.spec(), &FilterSpec::default_prunable());
    }

    #[test]
    fn parsers() {
        assert!(parse_fraction("1.5").is_err());
        assert!(parse_fraction("nan").is_err());
        assert_eq!(parse_nm("2:4").unwrap(), NmPattern::new(2, 4).unwrap());
        assert!(parse_nm("0:4").is_err());
        assert!(parse_nm("5:4").is_err());
        assert!(parse_nm("24").is_err());
        assert!(parse_bins("0").is_err());
    }
}
