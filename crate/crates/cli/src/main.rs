use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypergrowth::detection::takeoff_test;
use hypergrowth::fitting::fit_hyperbolic_with;
use hypergrowth::report::{
    render_figure, to_json, FigureSpec, Marker, Overlay, VerdictReport, YScale,
};
use hypergrowth::{RegionClass, TakeoffClaim, Thresholds, Weighting, Year};
use hypergrowth_cli::{
    analyze_regions, parse_window, read_dataset, region, segment_region, validate_thresholds,
    write_analysis, CliError, InputFormat, ProfileOverrides, RegionProfile,
};

#[derive(Parser)]
#[command(
    name = "hypergrowth",
    version,
    about = "Test takeoff claims against historical GDP series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a GDP table into the long `region,year,gdp` layout.
    Ingest(IngestArgs),
    /// Run fits, takeoff tests, breakpoint search and figures for regions.
    Analyze(AnalyzeArgs),
    /// Test one takeoff claim and print the verdict as JSON.
    Takeoff(TakeoffArgs),
    /// Search a region for up to two breakpoints and print them as JSON.
    Segment(SegmentArgs),
    /// Render one region's figure.
    Fig(FigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Long,
    Maddison,
}

impl From<Format> for InputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Long => InputFormat::Long,
            Format::Maddison => InputFormat::Maddison,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Class {
    Developed,
    LessDeveloped,
}

impl From<Class> for RegionClass {
    fn from(c: Class) -> Self {
        match c {
            Class::Developed => RegionClass::Developed,
            Class::LessDeveloped => RegionClass::LessDeveloped,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Log10,
    Linear,
    Reciprocal,
}

#[derive(Args)]
struct InputArgs {
    /// Input CSV file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "long")]
    format: Format,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Significance level of the break test.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Growth rate (per year) below which a regime counts as stagnant.
    #[arg(long, default_value_t = 0.001)]
    r_stag: f64,
    /// Minimum post-takeoff growth rate (per year).
    #[arg(long, default_value_t = 0.005)]
    r_growth: f64,
    /// Largest distance in years between the located break and the claim.
    #[arg(long, default_value_t = 30.0)]
    tau: f64,
    /// Half-width in years of the search window around the claim.
    #[arg(long, default_value_t = 150.0)]
    half_window: f64,
}

impl ThresholdArgs {
    fn thresholds(&self) -> Result<Thresholds, CliError> {
        let t = Thresholds {
            alpha: self.alpha,
            r_stag: self.r_stag,
            r_growth: self.r_growth,
            tau: self.tau,
            half_window: self.half_window,
        };
        validate_thresholds(&t)?;
        Ok(t)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output path of the long CSV.
    #[arg(long)]
    out: PathBuf,
    /// Multiply every GDP value, e.g. 0.001 to turn millions into billions.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Rename a region, as OLD=NEW. Repeatable.
    #[arg(long, value_parser = parse_rename)]
    rename: Vec<(String, String)>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Regions to analyse (comma separated or repeated).
    #[arg(long, value_delimiter = ',', conflicts_with = "all_regions")]
    regions: Vec<String>,
    /// Analyse every region in the input (the default without --regions).
    #[arg(long)]
    all_regions: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Weight reciprocal-space residuals by y^4 (GDP-space least squares).
    #[arg(long)]
    weighted: bool,
    /// Override the region class of every selected region.
    #[arg(long, value_enum)]
    class: Option<Class>,
    /// Override the fit window, as FROM:TO.
    #[arg(long, value_parser = parse_window)]
    window: Option<(Year, Year)>,
    /// Override the claimed takeoff years. Repeatable.
    #[arg(long)]
    claim: Vec<Year>,
}

#[derive(Args)]
struct TakeoffArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    region: String,
    /// Claimed takeoff year.
    #[arg(long)]
    year: Year,
    /// Region class; defaults to the region's profile.
    #[arg(long, value_enum)]
    class: Option<Class>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    region: String,
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(0..=2))]
    max_breaks: u8,
    /// Restrict the search to FROM:TO.
    #[arg(long, value_parser = parse_window)]
    window: Option<(Year, Year)>,
}

#[derive(Args)]
struct FigArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    region: String,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "log10")]
    scale: Scale,
    /// Fit window of the hyperbolic overlay; defaults to the region's profile.
    #[arg(long, value_parser = parse_window)]
    window: Option<(Year, Year)>,
    /// Omit the hyperbolic overlay.
    #[arg(long)]
    no_fit: bool,
    /// Vertical marker year. Repeatable; defaults to the claimed takeoffs.
    #[arg(long)]
    marker: Vec<Year>,
    #[arg(long, default_value_t = 900)]
    width: u32,
    #[arg(long, default_value_t = 600)]
    height: u32,
}

fn parse_rename(text: &str) -> Result<(String, String), String> {
    match text.split_once('=') {
        Some((old, new)) if !old.is_empty() && !new.is_empty() => {
            Ok((old.to_string(), new.to_string()))
        }
        _ => Err(format!("expected OLD=NEW, got {text:?}")),
    }
}

fn ingest(args: IngestArgs) -> Result<(), CliError> {
    if !(args.scale.is_finite() && args.scale > 0.0) {
        return Err(CliError::Usage(format!(
            "--scale must be positive, got {}",
            args.scale
        )));
    }
    let ds = read_dataset(&args.input.input, args.input.format.into())?;
    let ds = ds.scaled(args.scale).renamed(&args.rename)?;
    fs::write(&args.out, ds.to_long_csv())
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "{} regions, {} observations -> {}",
        ds.len(),
        ds.observation_count(),
        args.out.display()
    );
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let thresholds = args.thresholds.thresholds()?;
    let ds = read_dataset(&args.input.input, args.input.format.into())?;
    let regions: Vec<String> = if args.regions.is_empty() {
        ds.regions().map(str::to_string).collect()
    } else {
        args.regions
    };
    let overrides = ProfileOverrides {
        class: args.class.map(Into::into),
        fit_window: args.window,
        claims: args.claim,
    };
    let weighting = if args.weighted {
        Weighting::GdpSpace
    } else {
        Weighting::Unweighted
    };
    let analyses = analyze_regions(&ds, &regions, &overrides, thresholds, weighting)?;
    for note in analyses.iter().flat_map(|a| &a.notes) {
        eprintln!("note: {note}");
    }
    write_analysis(&args.out, &analyses)?;
    for v in analyses.iter().flat_map(|a| &a.verdicts) {
        println!("{}@{}: {}", v.region, v.claimed_year, v.verdict.as_str());
    }
    Ok(())
}

fn takeoff(args: TakeoffArgs) -> Result<(), CliError> {
    let thresholds = args.thresholds.thresholds()?;
    let ds = read_dataset(&args.input.input, args.input.format.into())?;
    let series = region(&ds, &args.region)?;
    let class = args
        .class
        .map(Into::into)
        .unwrap_or_else(|| RegionProfile::for_region(&args.region).class);
    let v = takeoff_test(series, TakeoffClaim::at(class, args.year), thresholds);
    print!("{}", to_json(&VerdictReport::from(&v))?);
    Ok(())
}

fn segment(args: SegmentArgs) -> Result<(), CliError> {
    let ds = read_dataset(&args.input.input, args.input.format.into())?;
    let mut series = region(&ds, &args.region)?.clone();
    if let Some((from, to)) = args.window {
        series = series.window(from, to)?;
    }
    let report = segment_region(&series, args.max_breaks as usize)?;
    print!("{}", to_json(&report)?);
    Ok(())
}

fn fig(args: FigArgs) -> Result<(), CliError> {
    let ds = read_dataset(&args.input.input, args.input.format.into())?;
    let series = region(&ds, &args.region)?;
    let profile = RegionProfile::for_region(&args.region);
    let scale = match args.scale {
        Scale::Log10 => YScale::Log10,
        Scale::Linear => YScale::Linear,
        Scale::Reciprocal => YScale::Reciprocal,
    };
    let mut spec = FigureSpec::new(&args.region)
        .with_series(series.clone())
        .with_scale(scale)
        .with_canvas(args.width, args.height);
    if !args.no_fit {
        let (from, to) = args.window.unwrap_or(profile.fit_window);
        let fit = fit_hyperbolic_with(&series.window(from, to)?, Weighting::Unweighted)?;
        spec = spec.with_overlay(Overlay::Hyperbolic(fit));
    }
    let markers = if args.marker.is_empty() {
        profile.claims
    } else {
        args.marker
    };
    for year in markers {
        spec = spec.with_marker(Marker::new(year, format!("{year}")));
    }
    let svg = render_figure(&spec)?;
    fs::write(&args.out, svg)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", args.out.display())))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Analyze(a) => analyze(a),
        Command::Takeoff(a) => takeoff(a),
        Command::Segment(a) => segment(a),
        Command::Fig(a) => fig(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
