use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use splitree::config::{parse_config, ExperimentConfig, Suite};
use splitree::experiments::{self, Report};
use splitree::numfmt::fmt_num;
use splitree::spectrum;

#[derive(Parser)]
#[command(name = "splitree", version, about = "Splitting trees with neutral mutations: numerics, simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Malthusian parameter, regime and limit-law constants
    Constants(Common),
    /// Tabulated scale functions W and W_theta
    Scalefn(Common),
    /// Exact expected spectrum and window counts at every horizon
    Expect(Common),
    /// Simulate replicates and dump per-replicate statistics
    Simulate(Common),
    /// Run verification suites; exit status 1 if any check fails
    Verify {
        #[command(flatten)]
        common: Common,
        /// Suites to run (comma separated); overrides the configuration
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (key = value lines)
    #[arg(long)]
    config: PathBuf,
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads; overrides the configuration (0 = all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| anyhow!("cannot read {}: {e}", common.config.display()))?;
    let mut cfg = parse_config(&text).map_err(|e| anyhow!("{}: {e}", common.config.display()))?;
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

/// `foo.csv` → `foo-h2.csv` for the horizon with index 2.
fn horizon_path(out: &Path, i: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}-h{i}.{}", ext.to_string_lossy()),
        None => format!("{stem}-h{i}"),
    };
    out.with_file_name(name)
}

/// JSON number with 15 significant digits.
fn num(x: f64) -> Value {
    if x.is_finite() {
        fmt_num(x).parse::<serde_json::Number>().map(Value::Number).unwrap_or(Value::Null)
    } else {
        Value::Null
    }
}

fn constants(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let grid = experiments::build_grid(&cfg)?;
    let c = experiments::config_constants(&cfg, &grid)?;
    let mut entries = vec![("regime", c.regime.name().to_string())];
    entries.extend(c.entries().into_iter().map(|(k, v)| (k, fmt_num(v))));
    let text = match common.format {
        Format::Json => {
            let mut m = Map::new();
            m.insert("model".into(), json!(experiments::describe_model(&cfg.model)));
            m.insert("regime".into(), json!(c.regime.name()));
            for (k, v) in c.entries() {
                m.insert(k.into(), num(v));
            }
            serde_json::to_string_pretty(&Value::Object(m))? + "\n"
        }
        Format::Csv => {
            let mut s = String::from("name,value\n");
            for (k, v) in entries {
                s += &format!("{k},{v}\n");
            }
            s
        }
    };
    emit(common.out.as_deref(), &text)
}

fn scalefn(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let grid = experiments::build_grid(&cfg)?;
    let text = match common.format {
        Format::Csv => grid.to_csv(),
        Format::Json => {
            let t: Vec<Value> = (0..grid.len()).map(|k| num(grid.node(k))).collect();
            let w: Vec<Value> = grid.log_w_nodes().iter().map(|l| num(l.exp())).collect();
            let wt: Vec<Value> = grid.log_w_theta_nodes().iter().map(|l| num(l.exp())).collect();
            let v = json!({
                "model": experiments::describe_model(&cfg.model),
                "step": num(grid.step()),
                "t": t,
                "W": w,
                "W_theta": wt,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
    };
    emit(common.out.as_deref(), &text)
}

fn expect(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let grid = experiments::build_grid(&cfg)?;
    let theta = cfg.model.mutation_rate();
    let alpha = cfg.model.malthusian_alpha()?;
    let b = cfg.model.birth_rate();
    let consts = experiments::config_constants(&cfg, &grid).ok();
    let mut horizons = Vec::new();
    for &t in &cfg.horizons {
        let th = experiments::resolve_thresholds(&cfg.thresholds, consts.as_ref(), t)?;
        let spec = spectrum::spectrum_csv(&grid, theta, t, cfg.k_max)?;
        let counts = spectrum::counts_csv(&grid, theta, t, &th.windows, b, alpha)?;
        horizons.push((t, spec, counts));
    }
    let text = match common.format {
        Format::Csv => {
            let mut s = String::from("t,table,k_or_x,s1,s2,expected_mutant,expected_ancestral,bound_sharp,bound_loose\n");
            for (t, spec, counts) in &horizons {
                let t = fmt_num(*t);
                for row in spec.lines().skip(1) {
                    let f: Vec<&str> = row.split(',').collect();
                    s += &format!("{t},spectrum,{},,,{},{},,\n", f[0], f[1], f[2]);
                }
                for row in counts.lines().skip(1) {
                    let f: Vec<&str> = row.split(',').collect();
                    s += &format!("{t},counts,{},{},{},{},,{},{}\n", f[0], f[1], f[2], f[3], f[4], f[5]);
                }
            }
            s
        }
        Format::Json => {
            let parse = |csv: &str| -> Vec<Value> {
                let mut lines = csv.lines();
                let head: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
                lines
                    .map(|row| {
                        let m: Map<String, Value> = head
                            .iter()
                            .zip(row.split(','))
                            .map(|(h, v)| (h.to_string(), v.parse::<f64>().map(num).unwrap_or(Value::Null)))
                            .collect();
                        Value::Object(m)
                    })
                    .collect()
            };
            let hs: Vec<Value> = horizons
                .iter()
                .map(|(t, spec, counts)| json!({"t": num(*t), "spectrum": parse(spec), "counts": parse(counts)}))
                .collect();
            serde_json::to_string_pretty(&json!({"model": experiments::describe_model(&cfg.model), "horizons": hs}))? + "\n"
        }
    };
    emit(common.out.as_deref(), &text)
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    cfg.validate()?;
    match common.format {
        Format::Json => {
            let summary = experiments::run_replicates(&cfg)?;
            emit(common.out.as_deref(), &(serde_json::to_string_pretty(&summary)? + "\n"))
        }
        Format::Csv => {
            let grid = experiments::build_grid(&cfg)?;
            let consts = experiments::config_constants(&cfg, &grid).ok();
            let many = cfg.horizons.len() > 1;
            for i in 0..cfg.horizons.len() {
                let (th, recs) = experiments::simulate_horizon(&cfg, &grid, consts.as_ref(), i)?;
                let text = experiments::replicates_csv(&recs, &th);
                match (&common.out, many) {
                    (Some(p), true) => emit(Some(&horizon_path(p, i)), &text)?,
                    (out, _) => emit(out.as_deref(), &text)?,
                }
            }
            Ok(())
        }
    }
}

fn verify(common: &Common, suites: &[String]) -> Result<bool> {
    let mut cfg = load(common)?;
    if !suites.is_empty() {
        cfg.suites = suites
            .iter()
            .map(|s| Suite::parse(s.trim()))
            .collect::<splitree::Result<Vec<_>>>()
            ?;
    }
    cfg.validate()?;
    let reports: Vec<Report> = experiments::verify(&cfg)?;
    let text = match common.format {
        Format::Json => experiments::reports_json(&reports) + "\n",
        Format::Csv => experiments::reports_csv(&reports),
    };
    emit(common.out.as_deref(), &text)?;
    for r in &reports {
        let failed = r.checks.iter().filter(|c| !c.pass).count();
        eprintln!(
            "{} {} t={}: {}/{} checks passed",
            if failed == 0 { "PASS" } else { "FAIL" },
            r.suite,
            fmt_num(r.t),
            r.checks.len() - failed,
            r.checks.len()
        );
    }
    Ok(reports.iter().all(Report::passed))
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Constants(c) => constants(c).map(|_| true),
        Command::Scalefn(c) => scalefn(c).map(|_| true),
        Command::Expect(c) => expect(c).map(|_| true),
        Command::Simulate(c) => simulate(c).map(|_| true),
        Command::Verify { common, suite } => verify(common, suite),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
