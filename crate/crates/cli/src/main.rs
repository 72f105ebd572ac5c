use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kanrelu::complexity::{
    class_embedding_check, count_params_kan, count_params_mlp, paper_formula_kan_to_relu, paper_formula_relu_to_kan,
    regions_per_parameter, Family,
};
use kanrelu::model::{self, Model, ModelFile, ModelKind, SaveOptions};
use kanrelu::regions::{grid_fingerprint_2d, GridBox};
use kanrelu::spline::{monomial_relu_to_spline_kan, spline_kan_to_monomial_relu, MonomialReluNetwork, PolySegmentSpline, SplineKan, SplineKanLayer};
use kanrelu::verify::{assert_equiv_with, equiv_exact_1d, EquivReport, SampleConfig, DEFAULT_SEED};
use kanrelu::{kan_to_mlp, mlp_to_kan, ConversionMode, Error, Kan, Mlp, Network, Parallelism};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "kanrelu", version, about = "Convert, verify and analyze piecewise linear KANs and ReLU networks")]
struct Cli {
    /// Emit reports as JSON.
    #[arg(long, global = true)]
    json: bool,

    /// Seed for the verification sampler.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Kan,
    Mlp,
    MonomialRelu,
    BsplineKan,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a model file to another kind.
    Convert {
        #[arg(long, value_enum)]
        to: Target,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        /// Monomial degree when lowering a spline KAN (defaults to the spline degree).
        #[arg(long)]
        degree: Option<usize>,
        /// Write mlp weights as sparse triplets.
        #[arg(long)]
        sparse: bool,
        input: PathBuf,
        output: PathBuf,
    },
    /// Evaluate a model at one point.
    Eval {
        model: PathBuf,
        /// Comma-separated input coordinates.
        #[arg(long, allow_hyphen_values = true)]
        input: String,
    },
    /// Check two models for equivalence.
    Verify {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Sampling interval applied to every coordinate.
        #[arg(long = "box", num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true, default_values_t = [-5.0, 5.0])]
        bbox: Vec<f64>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Compare exact region complexes instead of sampling (1-D piecewise linear models).
        #[arg(long)]
        exact_1d: bool,
    },
    /// Count parameters.
    Params {
        model: PathBuf,
        /// Also print the closed-form count for the opposite conversion.
        #[arg(long)]
        paper_formula: bool,
    },
    /// Linear-region upper bound and regions per parameter.
    Bounds { model: PathBuf },
    /// Exact region complex of a 1-D model.
    Regions {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid fingerprint of the linear regions of a 2-D model.
    Fingerprint {
        model: PathBuf,
        #[arg(long = "box", num_args = 4, value_names = ["X0", "X1", "Y0", "Y1"], allow_hyphen_values = true)]
        bbox: Vec<f64>,
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the class-embedding laws for a KAN.
    EmbedCheck { model: PathBuf },
}

/// Failure with its exit code: 1 for validation and verification, 2 for usage.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::UnsupportedDimension { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<ModelFile, Failure> {
    model::load(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn nums(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",")
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Convert {
            to,
            mode,
            degree,
            sparse,
            input,
            output,
        } => convert(cli, *to, *mode, *degree, *sparse, input, output),
        Command::Eval { model, input } => eval(cli, model, input),
        Command::Verify {
            a,
            b,
            samples,
            bbox,
            tol,
            exact_1d,
        } => verify(cli, a, b, *samples, bbox, *tol, *exact_1d),
        Command::Params { model, paper_formula } => params(cli, model, *paper_formula),
        Command::Bounds { model } => bounds(cli, model),
        Command::Regions { model, out } => regions(cli, model, out),
        Command::Fingerprint { model, bbox, res, out } => fingerprint(cli, model, bbox, *res, out),
        Command::EmbedCheck { model } => embed_check(cli, model),
    }
}

fn kan_as_spline_kan(k: &Kan) -> SplineKan {
    let layers = k
        .layers()
        .iter()
        .map(|l| {
            let acts = l.activations().iter().map(PolySegmentSpline::from_piecewise_linear).collect();
            SplineKanLayer::new(l.n_in(), l.n_out(), acts).expect("same grid")
        })
        .collect();
    SplineKan::new(layers).expect("same widths")
}

#[derive(Serialize)]
struct ConvertReport {
    from: ModelKind,
    to: ModelKind,
    mode: Option<ConversionMode>,
    output: String,
}

fn convert(
    cli: &Cli,
    to: Target,
    mode: Mode,
    degree: Option<usize>,
    sparse: bool,
    input: &Path,
    output: &Path,
) -> Outcome {
    let src = load(input)?;
    let mode = match mode {
        Mode::Exact => ConversionMode::Exact,
        Mode::Paper => ConversionMode::Paper,
    };
    let mut used_mode = None;
    let converted: Model = match (&src.model, to) {
        (Model::Kan(k), Target::Mlp) => {
            used_mode = Some(mode);
            kan_to_mlp(k, mode).into()
        }
        (Model::Mlp(m), Target::Kan) => mlp_to_kan(m).into(),
        (Model::Kan(k), Target::BsplineKan) => kan_as_spline_kan(k).into(),
        (Model::Kan(k), Target::MonomialRelu) => spline_kan_to_monomial_relu(&kan_as_spline_kan(k), degree.unwrap_or(1))?.into(),
        (Model::Mlp(m), Target::MonomialRelu) => MonomialReluNetwork::from_relu_mlp(m).into(),
        (Model::SplineKan(k), Target::MonomialRelu) => {
            spline_kan_to_monomial_relu(k, degree.unwrap_or(k.degree().max(1)))?.into()
        }
        (Model::MonomialRelu(n), Target::BsplineKan) => monomial_relu_to_spline_kan(n).into(),
        (m, _) => {
            return Err(Failure::usage(format!(
                "cannot convert a {} model to {}",
                m.kind(),
                to.to_possible_value().expect("named").get_name()
            )))
        }
    };
    let mut metadata = src.metadata.clone();
    metadata.insert("converted_from".into(), src.model.kind().to_string());
    if let Some(m) = used_mode {
        metadata.insert("conversion_mode".into(), m.to_string());
    }
    let file = ModelFile {
        metadata,
        model: converted,
    };
    model::save(&file, output, SaveOptions { sparse })?;
    let report = ConvertReport {
        from: src.model.kind(),
        to: file.model.kind(),
        mode: used_mode,
        output: output.display().to_string(),
    };
    if cli.json {
        print_json(&report);
    } else {
        println!("wrote {} model to {}", report.to, report.output);
    }
    Ok(true)
}

fn eval(cli: &Cli, path: &Path, input: &str) -> Outcome {
    let m = load(path)?.model;
    let x = input
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(format!("bad --input value: {e}")))?;
    let y = m.eval(&x)?;
    if cli.json {
        print_json(&serde_json::json!({ "output": y }));
    } else {
        println!("{}", nums(&y));
    }
    Ok(true)
}

fn print_equiv(cli: &Cli, r: &EquivReport) {
    if cli.json {
        print_json(r);
    } else {
        println!(
            "{} max_rel_error={} max_abs_error={} worst_point=[{}] samples={}",
            if r.passed { "PASS" } else { "FAIL" },
            num(r.max_rel_error),
            num(r.max_abs_error),
            nums(&r.worst_point),
            r.samples
        );
    }
}

fn verify(cli: &Cli, a: &Path, b: &Path, samples: usize, bbox: &[f64], tol: f64, exact_1d: bool) -> Outcome {
    let (ma, mb) = (load(a)?.model, load(b)?.model);
    let report = if exact_1d {
        match (&ma, &mb) {
            (Model::Kan(x), Model::Kan(y)) => equiv_exact_1d(x, y, tol)?,
            (Model::Kan(x), Model::Mlp(y)) => equiv_exact_1d(x, y, tol)?,
            (Model::Mlp(x), Model::Kan(y)) => equiv_exact_1d(x, y, tol)?,
            (Model::Mlp(x), Model::Mlp(y)) => equiv_exact_1d(x, y, tol)?,
            _ => return Err(Failure::usage("--exact-1d needs piecewise linear (kan or mlp) models")),
        }
    } else {
        let config = SampleConfig {
            seed: cli.seed,
            parallelism: Parallelism::default(),
        };
        let bbox = vec![(bbox[0], bbox[1]); ma.input_dim()];
        assert_equiv_with(&ma, &mb, &bbox, samples, tol, config)?
    };
    print_equiv(cli, &report);
    Ok(report.passed)
}

#[derive(Serialize)]
struct ParamsOutput {
    #[serde(flatten)]
    report: kanrelu::complexity::ParamReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    paper_formula: Option<u64>,
}

fn params(cli: &Cli, path: &Path, paper_formula: bool) -> Outcome {
    let m = load(path)?.model;
    let (report, formula) = match &m {
        Model::Kan(k) => (count_params_kan(k), paper_formula.then(|| paper_formula_kan_to_relu(k).value)),
        Model::Mlp(n) => (
            count_params_mlp(n),
            if paper_formula { Some(paper_formula_relu_to_kan(n)?) } else { None },
        ),
        other => return Err(Failure::usage(format!("params needs a kan or mlp model, got {}", other.kind()))),
    };
    let out = ParamsOutput {
        report,
        paper_formula: formula,
    };
    if cli.json {
        print_json(&out);
    } else {
        let r = &out.report;
        println!("total_entries: {}", r.total_entries);
        println!("nonzero_entries: {}", r.nonzero_entries);
        println!("free_entries: {}", r.free_entries);
        if let Some(f) = out.paper_formula {
            println!("paper_formula: {f}");
        }
    }
    Ok(true)
}

fn mlp_dims(m: &Mlp) -> Vec<usize> {
    std::iter::once(m.input_dim()).chain(m.hidden_widths()).collect()
}

#[derive(Serialize)]
struct BoundsOutput {
    #[serde(flatten)]
    ratio: kanrelu::complexity::RegionRatio,
    regions_per_parameter: f64,
}

fn bounds(cli: &Cli, path: &Path) -> Outcome {
    let m = load(path)?.model;
    let ratio = match &m {
        Model::Kan(k) => regions_per_parameter(Family::Kan, &k.widths(), k.max_segments())?,
        Model::Mlp(n) => regions_per_parameter(Family::Relu, &mlp_dims(n), 0)?,
        other => return Err(Failure::usage(format!("bounds needs a kan or mlp model, got {}", other.kind()))),
    };
    let out = BoundsOutput {
        regions_per_parameter: ratio.ratio(),
        ratio,
    };
    if cli.json {
        print_json(&out);
    } else {
        println!("family: {}", serde_json::to_value(out.ratio.family).unwrap().as_str().unwrap());
        println!("region_upper_bound: {}", out.ratio.bound);
        println!("parameters: {}", out.ratio.params);
        println!("regions_per_parameter: {}", num(out.regions_per_parameter));
    }
    Ok(true)
}

fn regions(cli: &Cli, path: &Path, out: &Path) -> Outcome {
    let m = load(path)?.model;
    if m.input_dim() != 1 {
        return Err(Error::UnsupportedDimension {
            got: m.input_dim(),
            required: 1,
        }
        .into());
    }
    let c = m.exact_regions_1d().map_err(|e| Failure::usage(e.to_string()))?;
    let mut text = serde_json::to_string_pretty(&c).expect("complex serializes");
    text.push('\n');
    std::fs::write(out, text).map_err(Error::from)?;
    if cli.json {
        print_json(&serde_json::json!({ "num_regions": c.num_regions(), "output": out.display().to_string() }));
    } else {
        println!("{} regions written to {}", c.num_regions(), out.display());
    }
    Ok(true)
}

fn fingerprint(cli: &Cli, path: &Path, bbox: &[f64], res: usize, out: &Path) -> Outcome {
    let m = load(path)?.model;
    let bbox = GridBox {
        x0: bbox[0],
        x1: bbox[1],
        y0: bbox[2],
        y1: bbox[3],
    };
    let grid = grid_fingerprint_2d(&m, bbox, res, Parallelism::default())?;
    let file = File::create(out).map_err(Error::from)?;
    grid.write_csv(BufWriter::new(file))?;
    if cli.json {
        print_json(&serde_json::json!({
            "estimated_regions": grid.estimated_regions,
            "resolution": grid.resolution,
            "output": out.display().to_string(),
        }));
    } else {
        println!("~{} regions at resolution {}; grid written to {}", grid.estimated_regions, res, out.display());
    }
    Ok(true)
}

fn embed_check(cli: &Cli, path: &Path) -> Outcome {
    let Model::Kan(k) = load(path)?.model else {
        return Err(Failure::usage("embed-check needs a kan model"));
    };
    let r = class_embedding_check(&k);
    if cli.json {
        print_json(&r);
    } else {
        println!("source: depth {} width {} segment bound {:?}", r.source.depth, r.source.width, r.source.segment_bound);
        println!(
            "paper-mode mlp: depth {} width {} (bound {})",
            r.converted.depth, r.converted.width, r.paper_width_bound
        );
        println!(
            "exact-mode mlp: depth {} width {} (bound {})",
            r.converted_exact.depth, r.converted_exact.width, r.exact_width_bound
        );
        println!(
            "lifted kan: depth {} width {} segment bound {:?}",
            r.reconverted.depth, r.reconverted.width, r.reconverted.segment_bound
        );
        println!("{}", if r.all_satisfied() { "PASS" } else { "FAIL" });
    }
    Ok(r.all_satisfied())
}
