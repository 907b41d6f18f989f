use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shor_optics::elements::{build_dft_circuit, build_mef_circuit};
use shor_optics::figures::{figure_panels, render_panel, Figure};
use shor_optics::imageio::{atomic_write, write_image, ImageFormat};
use shor_optics::interference::ScreenGeometry;
use shor_optics::lgfield::{LgBeamParams, DEFAULT_WAIST, DEFAULT_WAVELENGTH};
use shor_optics::modespace::{BasisMap, OamIndex, ShorProblem};
use shor_optics::shor::{run_pipeline, PipelineConfig, PipelineMode};
use shor_optics::{Error, Result};

/// Compiled Shor factoring on classically entangled Laguerre-Gaussian beams.
#[derive(Parser)]
#[command(name = "shor-optics", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the order-finding pipeline and recover factors of N.
    Factor(FactorArgs),
    /// Render the interference panels of the single-mode, modular
    /// exponentiation and DFT figures.
    Figures(FigureArgs),
    /// Print a light path as JSON.
    DumpCircuit(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Abstract,
    Circuit,
    Physical,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pgm,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichFigure {
    Fig5,
    Fig6,
    Fig7,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichCircuit {
    Mef,
    Dft,
}

#[derive(Args)]
struct ProblemArgs {
    /// Number to factor.
    #[arg(long = "N", default_value_t = 15)]
    modulus: u64,
    /// Base a, coprime with N.
    #[arg(long = "a", default_value_t = 11)]
    base: u64,
    /// Control-register width in bits.
    #[arg(long = "n", default_value_t = 2)]
    bits: u32,
}

#[derive(Args)]
struct OpticsArgs {
    /// Hole-to-hole gap (m).
    #[arg(long, default_value_t = 1e-5)]
    hole_gap: f64,
    /// Hole plane to screen distance (m).
    #[arg(long, default_value_t = 1e-1)]
    screen_distance: f64,
    /// Side of the square screen (m).
    #[arg(long, default_value_t = 0.1)]
    extent: f64,
    /// Pixels per screen side.
    #[arg(long, default_value_t = 512)]
    resolution: usize,
    /// Wavelength (m).
    #[arg(long, default_value_t = DEFAULT_WAVELENGTH)]
    wavelength: f64,
    /// Beam waist w0 (m).
    #[arg(long, default_value_t = DEFAULT_WAIST)]
    waist: f64,
    /// Output directory.
    #[arg(long, env = "SHOR_OPTICS_OUT", default_value = "shor-optics-out")]
    out: PathBuf,
    /// Image file format.
    #[arg(long, value_enum, default_value_t = FormatArg::Pgm)]
    format: FormatArg,
}

impl OpticsArgs {
    fn geometry(&self) -> Result<ScreenGeometry> {
        let g = ScreenGeometry {
            hole_gap: self.hole_gap,
            screen_distance: self.screen_distance,
            extent: [self.extent, self.extent],
            resolution: [self.resolution, self.resolution],
            wavelength: self.wavelength,
            paraxial: false,
        };
        g.validate()?;
        Ok(g)
    }

    fn beam(&self) -> Result<LgBeamParams> {
        LgBeamParams::new(0, OamIndex(1), self.waist, self.wavelength, 0.0)
    }

    fn format(&self) -> ImageFormat {
        match self.format {
            FormatArg::Pgm => ImageFormat::Pgm,
            FormatArg::Csv => ImageFormat::Csv,
        }
    }
}

#[derive(Args)]
struct FactorArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Abstract)]
    mode: ModeArg,
    #[command(flatten)]
    optics: OpticsArgs,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long, value_enum, default_value_t = WhichFigure::All)]
    which: WhichFigure,
    #[command(flatten)]
    optics: OpticsArgs,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(value_enum)]
    which: WhichCircuit,
    #[command(flatten)]
    problem: ProblemArgs,
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Success,
    AlgorithmFailed,
}

fn factor(args: &FactorArgs) -> Result<Outcome> {
    let p = &args.problem;
    let problem = ShorProblem::new(p.modulus, p.base, p.bits)?;
    let mode = match args.mode {
        ModeArg::Abstract => PipelineMode::Abstract,
        ModeArg::Circuit => PipelineMode::Circuit,
        ModeArg::Physical => PipelineMode::Physical,
    };
    let config = PipelineConfig { mode, beam: args.optics.beam()?, geometry: args.optics.geometry()? };
    let mut run = run_pipeline(&problem, &config)?;

    let out = &args.optics.out;
    let prefix = format!("factor-N{}-a{}-n{}-{mode}", p.modulus, p.base, p.bits);
    for stage in run.stages.iter_mut() {
        let Some(image) = stage.image.take() else { continue };
        let stem = format!("{prefix}-{}", stage.name);
        let sidecar = serde_json::json!({
            "stage": stage.name,
            "signature": stage.signature,
            "beam": config.beam,
            "geometry": config.geometry,
        });
        let paths = write_image(out, &stem, &image, args.optics.format(), &sidecar)?;
        stage.image_path = paths[0].file_name().map(|f| f.to_string_lossy().into_owned());
    }
    let report = out.join(format!("{prefix}.json"));
    atomic_write(&report, run.report_json()?.as_bytes())?;

    let r = &run.readout;
    let js: Vec<String> = r.j_values.iter().map(|j| j.to_string()).collect();
    println!("N = {}, a = {}, n = {}, mode = {mode}", p.modulus, p.base, p.bits);
    println!("observed j = {{{}}}", js.join(", "));
    match r.r {
        Some(order) => println!("order r = {order}"),
        None => println!("order r = none"),
    }
    println!("report: {}", report.display());
    match (r.factors, &r.failure_reason) {
        (Some((a, b)), _) => {
            println!("factors: {} = {a} × {b}", p.modulus);
            Ok(Outcome::Success)
        }
        (None, reason) => {
            eprintln!("algorithm failed: {}", reason.as_deref().unwrap_or("no factors"));
            Ok(Outcome::AlgorithmFailed)
        }
    }
}

fn figures(args: &FigureArgs) -> Result<Outcome> {
    let figs: Vec<Figure> = match args.which {
        WhichFigure::Fig5 => vec![Figure::Fig5],
        WhichFigure::Fig6 => vec![Figure::Fig6],
        WhichFigure::Fig7 => vec![Figure::Fig7],
        WhichFigure::All => Figure::ALL.to_vec(),
    };
    let geom = args.optics.geometry()?;
    let beam = args.optics.beam()?;
    for fig in figs {
        for panel in figure_panels(fig) {
            let (image, sidecar) = render_panel(&panel, &beam, &geom)?;
            let paths = write_image(&args.optics.out, &panel.id, &image, args.optics.format(), &sidecar)?;
            let s = &sidecar.signature;
            println!(
                "{}: contrast {:+.3}, axis {:?}  {}",
                paths[0].display(),
                s.center_contrast,
                s.symmetry_axis,
                panel.caption
            );
        }
    }
    Ok(Outcome::Success)
}

fn dump(args: &DumpArgs) -> Result<Outcome> {
    let circuit = match args.which {
        WhichCircuit::Mef => {
            let p = &args.problem;
            build_mef_circuit(&ShorProblem::new(p.modulus, p.base, p.bits)?)?
        }
        WhichCircuit::Dft => build_dft_circuit(&BasisMap::compiled())?,
    };
    println!("{}", circuit.to_json()?);
    Ok(Outcome::Success)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Factor(a) => factor(a),
        Command::Figures(a) => figures(a),
        Command::DumpCircuit(a) => dump(a),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::AlgorithmFailed) => ExitCode::from(2),
        Err(e @ (Error::Io(_) | Error::Json(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("usage error: {e}");
            ExitCode::from(1)
        }
    }
}
