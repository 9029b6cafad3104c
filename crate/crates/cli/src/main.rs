use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use foilwind::config::{preset, RunConfig, PRESETS};
use foilwind::geometry::{build_geometry, mesh_structured, Region};
use foilwind::postprocess::{self, r_squared, ComparisonReport, LossSeries};
use foilwind::spaces::build_dof_layout;
use foilwind::study::{self, RunSummary};
use foilwind::vtk::VtkWriter;
use foilwind::{Error, FormulationVariant};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "foilwind", version, about = "AC losses of HTS pancake coils with the foil conductor model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the mesh and DoF layout of a config and export the mesh
    Mesh(SourceArgs),
    /// Run a transient simulation
    Run(SourceArgs),
    /// Compare the losses of two run directories (the second is the reference)
    Compare {
        run: PathBuf,
        reference: PathBuf,
        /// Report file [default: <run>/compare.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config for several values of one parameter
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        /// n_turns, n_alpha, voltage_order or rho0
        #[arg(long)]
        param: String,
        /// Comma separated values
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        /// Simulations run at the same time
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Debug, Args)]
struct SourceArgs {
    /// Config file
    #[arg(conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset instead of a config file
    #[arg(long)]
    preset: Option<String>,
    /// Output directory [default: output.dir of the config]
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Argument(_) | Error::Geometry(_) | Error::Mesh(_) | Error::Layout(_) | Error::Material(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOILWIND_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mesh(src) => mesh(&src),
        Command::Run(src) => run(&src),
        Command::Compare { run, reference, out } => compare(&run, &reference, out.as_deref()),
        Command::Sweep { source, param, values, jobs } => sweep(&source, &param, &values, jobs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load(src: &SourceArgs) -> Result<(RunConfig, PathBuf), Failure> {
    let cfg = match (&src.config, &src.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => return Err(Failure::Config(format!("give a config file or --preset ({})", PRESETS.join(", ")))),
    };
    let out = src.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn mesh(src: &SourceArgs) -> Result<(), Failure> {
    let (cfg, out) = load(src)?;
    let geom = build_geometry(&cfg.coil_geometry())?;
    let m = mesh_structured(&geom, cfg.mesh.n_alpha, cfg.mesh.n_beta, cfg.mesh.grading)?;
    m.check_invariants()?;
    let layout = build_dof_layout(&m, cfg.formulation.variant, cfg.formulation.voltage_order)?;

    let region: Vec<f64> = m
        .regions
        .iter()
        .map(|r| match r {
            Region::Air => 0.0,
            Region::Coil => 1.0,
            Region::Turn(i) => (*i + 1) as f64,
        })
        .collect();
    std::fs::create_dir_all(&out)?;
    let points: Vec<[f64; 3]> = m.nodes.iter().map(|p| [p[0], p[1], 0.0]).collect();
    let file = std::fs::File::create(out.join("mesh.vtk"))?;
    let mut w = VtkWriter::new(std::io::BufWriter::new(file));
    w.header(&format!("{} mesh", cfg.formulation.variant))?;
    w.quads(&points, &m.quads)?;
    w.cell_scalars(m.quads.len(), &[("region", &region)])?;
    w.finish()?;

    let summary = json!({
        "variant": cfg.formulation.variant.name(),
        "nodes": m.nodes.len(),
        "edges": m.edges.len(),
        "quads": m.quads.len(),
        "coil_quads": m.n_alpha() * m.n_beta(),
        "n_dofs": layout.n_dofs(),
        "n_edge_dofs": layout.n_edge_dofs,
        "n_nodal_dofs": layout.n_nodal_dofs,
        "n_cut_dofs": layout.n_cut_dofs,
        "n_voltage_dofs": layout.n_voltage_dofs,
    });
    println!("{}", pretty(&summary));
    Ok(())
}

fn run(src: &SourceArgs) -> Result<(), Failure> {
    let (cfg, out) = load(src)?;
    let summary = run_one(&cfg, &out)?;
    println!("{}", pretty(&serde_json::to_value(&summary).expect("summary serializes")));
    println!("outputs in {}", out.display());
    Ok(())
}

fn run_one(cfg: &RunConfig, out: &Path) -> Result<RunSummary, Failure> {
    log::info!("running {} with {} turns into {}", cfg.formulation.variant, cfg.geometry.n_turns, out.display());
    let result = study::run(cfg)?;
    study::write_outputs(&result, out)?;
    let text = pretty(&serde_json::to_value(&result.summary).expect("summary serializes"));
    postprocess::write_text(&out.join("summary.json"), &format!("{text}\n"))?;
    Ok(result.summary)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

/// Loss series of a finished run directory.
fn read_run(dir: &Path) -> Result<LossSeries<f64>, Failure> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let s: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let num = |key: &str| -> Result<f64, Failure> {
        s[key].as_f64().ok_or_else(|| Failure::Config(format!("{}: missing `{key}`", path.display())))
    };
    let (times, p) = postprocess::read_trace_csv(&dir.join("trace.csv"))?;
    Ok(LossSeries {
        times,
        p,
        frequency: num("frequency")?,
        amplitude: num("amplitude")?,
        variant: s["variant"].as_str().and_then(|v| v.parse::<FormulationVariant>().ok()),
        n_dofs: num("n_dofs")? as usize,
        n_turns: num("n_turns")? as usize,
    })
}

fn compare(run: &Path, reference: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let a = read_run(run)?;
    let b = read_run(reference)?;
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
    if !close(a.frequency, b.frequency) || !close(a.amplitude, b.amplitude) {
        return Err(Failure::Config(format!(
            "incompatible excitations: {} Hz / {} A against {} Hz / {} A",
            a.frequency, a.amplitude, b.frequency, b.amplitude
        )));
    }
    let report: ComparisonReport<f64> = r_squared(&a, &b)?;
    let value = json!({
        "run": run.display().to_string(),
        "reference": reference.display().to_string(),
        "r_squared": report.r_squared,
        "one_minus_r2": report.one_minus_r2,
        "rel_err_p": report.rel_err_p,
        "mean_p": report.mean_p,
        "mean_p_ref": report.mean_p_ref,
        "n_dofs": a.n_dofs,
        "n_dofs_ref": b.n_dofs,
        "interpolation": report.interpolation,
    });
    let text = pretty(&value);
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| run.join("compare.json"));
    postprocess::write_text(&path, &format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn sweep(src: &SourceArgs, param: &str, values: &[f64], jobs: usize) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(Failure::Config("sweep needs at least one value".into()));
    }
    let (base, out) = load(src)?;
    let mut configs = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        cfg.set_parameter(param, v)?;
        cfg.validate()?;
        configs.push((v, cfg, out.join(format!("{param}_{v}"))));
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary, Failure>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, configs.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some((_, cfg, dir)) = configs.get(k) else { break };
                let r = run_one(cfg, dir);
                results.lock().expect("no panics while holding the lock")[k] = Some(r);
            });
        }
    });
    let mut summaries = Vec::with_capacity(configs.len());
    for r in results.into_inner().expect("workers joined") {
        summaries.push(r.expect("every entry ran")?);
    }

    // the largest value is the finest setting of n_alpha and voltage_order
    let finest = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty");
    let reference = read_run(&configs[finest].2)?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv")).map_err(|e| Failure::Run(e.to_string()))?;
    w.write_record([param, "P", "one_minus_r2", "rel_err_p", "n_dofs", "linsys_count"]).map_err(|e| Failure::Run(e.to_string()))?;
    for ((v, _, dir), s) in configs.iter().zip(&summaries) {
        let series = read_run(dir)?;
        let (one_minus_r2, rel) = match r_squared(&series, &reference) {
            Ok(rep) => (rep.one_minus_r2, rep.rel_err_p),
            Err(e) => {
                log::warn!("{param} = {v}: no comparison with the finest run: {e}");
                (f64::NAN, f64::NAN)
            }
        };
        let row = [
            v.to_string(),
            format!("{:e}", s.mean_losses),
            format!("{one_minus_r2:e}"),
            format!("{rel:e}"),
            s.n_dofs.to_string(),
            s.linsys_count.to_string(),
        ];
        println!("{}", row.join(","));
        w.write_record(&row).map_err(|e| Failure::Run(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
