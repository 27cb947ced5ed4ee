//! Command-line front end: simulate, fit, postprocess, report.
//!
//! Every long flag can also be given in a `key=value` file passed with
//! `--config`; flags on the command line take precedence.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::netdata::{load_network, NetworkFormat};
use crate::postprocess::{
    format_float, posterior_mode_and_ci, summarize, ChainDiagnostics, ChainDraws, Histogram, PosteriorSummary,
};
use crate::sampler::{read_trace_file, run_chain, write_trace_file, ChainConfig, ChainRecord, RunManifest};
use crate::simulate::{builtin_scenario, generate_replicate, PlantedTruth};

#[derive(Debug, Parser)]
#[command(name = "lspcm", version, about = "Latent shrinkage position cluster model", args_override_self = true)]
pub struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Flat key=value file; keys are long flag names.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate benchmark networks with planted truth.
    Simulate(SimulateArgs),
    /// Run MCMC chains on a network.
    Fit(FitArgs),
    /// Summarize the chains of one fit.
    Postprocess(PostprocessArgs),
    /// Tabulate summaries by weight concentration.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=2))]
    pub scenario: u64,
    #[arg(long, default_value_t = 1)]
    pub replicates: u64,
    /// Overrides the scenario's default seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the duplicated third mean of the first scenario as printed.
    #[arg(long)]
    pub literal: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(value_name = "NETWORK")]
    pub network_path: Option<PathBuf>,
    /// Network file (dense CSV or edge list); the positional form wins.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Require a symmetric adjacency matrix.
    #[arg(long)]
    pub undirected: bool,
    /// Node count for integer edge lists with isolated trailing nodes.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Parallel chains; defaults to the chain count.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 500_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 50_000)]
    pub burnin: u64,
    #[arg(long, default_value_t = 1_000)]
    pub thin: u64,
    /// Keep the number of dimensions fixed at p0.
    #[arg(long)]
    pub no_adapt: bool,
    /// Keep the position step factor fixed at --step.
    #[arg(long)]
    pub fixed_step: bool,
    #[arg(long)]
    pub alpha_step: Option<f64>,
    #[command(flatten)]
    pub hp: HyperArgs,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long)]
    pub p0: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub a1: Option<f64>,
    #[arg(long)]
    pub a2: Option<f64>,
    #[arg(long)]
    pub b1: Option<f64>,
    #[arg(long)]
    pub b2: Option<f64>,
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long)]
    pub mu_alpha: Option<f64>,
    #[arg(long)]
    pub var_alpha: Option<f64>,
    #[arg(long)]
    pub kappa0: Option<f64>,
    #[arg(long)]
    pub kappa1: Option<f64>,
    #[arg(long)]
    pub eps1: Option<f64>,
    #[arg(long)]
    pub eps2: Option<f64>,
    #[arg(long)]
    pub eps3: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
}

impl HyperArgs {
    pub fn apply(&self, hp: &mut HyperParams) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { hp.$f = v; })* };
        }
        set!(nu, components, p0, xi, a1, a2, b1, b2, t2, mu_alpha, var_alpha, kappa0, kappa1, eps1, eps2, eps3, step);
    }
}

#[derive(Debug, Args)]
pub struct PostprocessArgs {
    /// Directory holding manifest.json and the chain traces.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true, value_name = "SUMMARY")]
    pub summaries: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Process-level failure, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other),
        }
    }
}

/// Parses a `key=value` file. Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> std::result::Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Inserts config-file entries as flags right after the subcommand, so
/// that anything given later on the command line overrides them.
pub fn expand_config(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            path = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {}: {e}", path.to_string_lossy()))?;
    let mut inserted = Vec::new();
    for (k, v) in parse_config(&text)? {
        match v.as_str() {
            "true" => inserted.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                inserted.push(OsString::from(format!("--{k}")));
                inserted.push(OsString::from(v));
            }
        }
    }
    let commands = ["simulate", "fit", "postprocess", "report"];
    let at = rest
        .iter()
        .position(|a| commands.contains(&a.to_string_lossy().as_ref()))
        .map_or(rest.len(), |i| i + 1);
    rest.splice(at..at, inserted);
    Ok(rest)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let mut spec = builtin_scenario(args.scenario as usize, args.literal)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    std::fs::create_dir_all(&args.out)?;
    let mut written = Vec::new();
    for r in 0..args.replicates {
        let (y, truth) = generate_replicate(&spec, r)?;
        let net = args.out.join(format!("network_{r}.csv"));
        let mut w = BufWriter::new(File::create(&net)?);
        y.write_dense_csv(&mut w)?;
        w.flush()?;
        let tp = args.out.join(format!("truth_{r}.json"));
        truth.write(&tp)?;
        info!("replicate {r}: density {:.3}", truth.density);
        written.push(net);
        written.push(tp);
    }
    Ok(written)
}

pub fn cmd_fit(args: &FitArgs) -> std::result::Result<RunManifest, CliError> {
    let path = args
        .network_path
        .as_ref()
        .or(args.network.as_ref())
        .ok_or_else(|| CliError::Usage("fit needs a network file".into()))?;
    if args.chains == 0 {
        return Err(CliError::Usage("--chains must be at least 1".into()));
    }
    let jobs = args.jobs.unwrap_or(args.chains);
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut hp = HyperParams::default();
    args.hp.apply(&mut hp);
    let mut cfg = ChainConfig::new(args.iters, args.burnin, args.thin, args.seed, hp);
    cfg.adapt_dimensions = !args.no_adapt;
    cfg.tune_step = !args.fixed_step;
    if let Some(a) = args.alpha_step {
        cfg.alpha_step = a;
    }
    cfg.validate()?;

    let y = load_network(
        File::open(path).map_err(Error::from)?,
        NetworkFormat::from_path(path),
        !args.undirected,
        args.nodes,
    )?;
    std::fs::create_dir_all(&args.out).map_err(Error::from)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Runtime(Error::InvalidConfig(e.to_string())))?;
    let records: Vec<Result<ChainRecord>> = pool.install(|| {
        (0..args.chains)
            .into_par_iter()
            .map(|c| {
                let mut chain_cfg = cfg.clone();
                chain_cfg.stream = c as u64;
                let trace = run_chain(&y, &chain_cfg)?;
                let name = format!("chain_{c}.jsonl");
                write_trace_file(&args.out.join(&name), &trace.samples)?;
                info!(
                    "chain {c}: {} samples, position acceptance {:.3}",
                    trace.samples.len(),
                    trace.z_acceptance.rate()
                );
                Ok(ChainRecord::from_trace(c, chain_cfg.stream, name, &trace))
            })
            .collect()
    });
    let manifest = RunManifest {
        network: path.to_string_lossy().into_owned(),
        config: cfg,
        chains: records.into_iter().collect::<Result<_>>()?,
    };
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(manifest)
}

/// Reads the manifest and traces of a fit directory.
pub fn load_run(dir: &Path) -> Result<(RunManifest, Vec<ChainDraws>)> {
    let manifest = RunManifest::read(&dir.join("manifest.json"))?;
    let mut chains = Vec::with_capacity(manifest.chains.len());
    for rec in &manifest.chains {
        let samples = read_trace_file(&dir.join(&rec.trace_file))?;
        chains.push(ChainDraws {
            diagnostics: ChainDiagnostics {
                chain: rec.chain,
                samples: samples.len(),
                z_acceptance: rec.z_acceptance,
                alpha_acceptance: rec.alpha_acceptance,
                position_step: rec.position_step,
                alpha_step: rec.alpha_step,
                reference_loglik: rec.reference_loglik,
                adaptations: rec.adaptations.len(),
            },
            samples,
            reference: rec.reference_matrix(),
            reference_loglik: rec.reference_loglik,
        });
    }
    Ok((manifest, chains))
}

pub fn cmd_postprocess(args: &PostprocessArgs) -> Result<PosteriorSummary> {
    let (manifest, chains) = load_run(&args.run)?;
    let truth = args.truth.as_deref().map(PlantedTruth::read).transpose()?;
    let (summary, psm) = summarize(&chains, manifest.config.hp.nu, truth.as_ref())?;
    let out = args.out.clone().unwrap_or_else(|| args.run.clone());
    std::fs::create_dir_all(&out)?;
    summary.write_json(&out.join("summary.json"))?;
    psm.write_csv(&out.join("psm.csv"))?;
    summary.write_positions_csv(&out.join("positions.csv"))?;
    summary.p_histogram.write_csv(&out.join("p_hist.csv"), "p")?;
    summary.g_histogram.write_csv(&out.join("g_hist.csv"), "g")?;
    Ok(summary)
}

/// One row of the sensitivity table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub nu: f64,
    pub replicates: usize,
    pub p: (usize, (usize, usize)),
    pub g: (usize, (usize, usize)),
    pub ari: Option<(f64, (f64, f64))>,
    pub pc: Option<(f64, (f64, f64))>,
}

fn mean_and_interval(values: &[f64]) -> Option<(f64, (f64, f64))> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
        sorted[idx]
    };
    Some((values.iter().sum::<f64>() / values.len() as f64, (q(0.025), q(0.975))))
}

/// Groups summaries by ν. Dimension and component counts come from the
/// pooled posterior histograms; ARI and PC are averaged over replicates.
pub fn report_rows(summaries: &[PosteriorSummary]) -> Result<Vec<ReportRow>> {
    let mut groups: BTreeMap<u64, Vec<&PosteriorSummary>> = BTreeMap::new();
    for s in summaries {
        groups.entry(s.nu.to_bits()).or_default().push(s);
    }
    let mut rows = Vec::new();
    for group in groups.values() {
        let pooled = |f: fn(&PosteriorSummary) -> &Histogram| -> Vec<usize> {
            group.iter().flat_map(|s| f(s).expand()).collect()
        };
        let ari: Vec<f64> = group.iter().filter_map(|s| s.ari).collect();
        let pc: Vec<f64> = group.iter().filter_map(|s| s.pc).collect();
        rows.push(ReportRow {
            nu: group[0].nu,
            replicates: group.len(),
            p: posterior_mode_and_ci(&pooled(|s| &s.p_histogram))?,
            g: posterior_mode_and_ci(&pooled(|s| &s.g_histogram))?,
            ari: mean_and_interval(&ari),
            pc: mean_and_interval(&pc),
        });
    }
    rows.sort_by(|a, b| b.nu.total_cmp(&a.nu));
    Ok(rows)
}

pub const REPORT_HEADER: [&str; 5] = ["nu", "p_m", "G_m", "ARI", "PC"];

/// Cell strings shared by the text and CSV renderings.
pub fn report_cells(row: &ReportRow) -> [String; 5] {
    let count = |(m, (lo, hi)): (usize, (usize, usize))| format!("{m} ({lo}, {hi})");
    let score = |v: Option<(f64, (f64, f64))>| match v {
        Some((m, (lo, hi))) => format!("{m:.2} ({lo:.2}, {hi:.2})"),
        None => "NA".to_string(),
    };
    [format!("{}", row.nu), count(row.p), count(row.g), score(row.ari), score(row.pc)]
}

pub fn render_text(rows: &[ReportRow]) -> String {
    let cells: Vec<[String; 5]> = rows.iter().map(report_cells).collect();
    let widths: Vec<usize> = (0..5)
        .map(|c| cells.iter().map(|r| r[c].len()).chain([REPORT_HEADER[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |r: &[String]| {
        r.iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(&REPORT_HEADER.map(String::from));
    out.push('\n');
    for r in &cells {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record(report_cells(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let summaries: Vec<PosteriorSummary> = args
        .summaries
        .iter()
        .map(|p| PosteriorSummary::read_json(p))
        .collect::<Result<_>>()?;
    let rows = report_rows(&summaries)?;
    if let Some(path) = &args.csv {
        write_report_csv(&rows, path)?;
    }
    Ok(render_text(&rows))
}

fn dispatch(cli: &Cli) -> std::result::Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => {
            for p in cmd_simulate(a)? {
                println!("{}", p.display());
            }
        }
        Command::Fit(a) => {
            let m = cmd_fit(a)?;
            for c in &m.chains {
                println!(
                    "chain {}: {} samples, position acceptance {}",
                    c.chain,
                    c.samples,
                    format_float(c.z_acceptance)
                );
            }
        }
        Command::Postprocess(a) => {
            let s = cmd_postprocess(a)?;
            println!("p_m {} {:?}, G_m {} {:?}", s.p_mode, s.p_interval, s.g_mode, s.g_interval);
        }
        Command::Report(a) => print!("{}", cmd_report(a)?),
    }
    Ok(())
}

/// Runs the CLI on the given arguments and returns the process exit code.
pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> ExitCode {
    let args = match expand_config(args.into_iter().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_parsing() {
        let kv = parse_config("# comment\nnu = 0.1\n\nno_adapt=true\n").unwrap();
        assert_eq!(kv, vec![("nu".into(), "0.1".into()), ("no-adapt".into(), "true".into())]);
        assert!(parse_config("oops").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "nu=0.1\nchains=3\nfixed-step=true\nno-adapt=false\n").unwrap();
        let args = expand_config(os(&["lspcm", "--config", cfg.to_str().unwrap(), "fit", "net.csv", "--nu", "0.5"])).unwrap();
        let cli = Cli::try_parse_from(args).unwrap();
        let Command::Fit(f) = cli.command else { panic!("wrong command") };
        assert_eq!(f.hp.nu, Some(0.5));
        assert_eq!(f.chains, 3);
        assert!(f.fixed_step);
        assert!(!f.no_adapt);
    }

    #[test]
    fn scenario_range_is_a_usage_error() {
        let err = Cli::try_parse_from(os(&["lspcm", "simulate", "--scenario", "3"])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(Cli::try_parse_from(os(&["lspcm", "simulate", "--scenario", "2"])).is_ok());
    }

    #[test]
    fn invalid_parameters_map_to_usage() {
        assert!(matches!(CliError::from(Error::InvalidParameter("x".into())), CliError::Usage(_)));
        assert!(matches!(CliError::from(Error::InvalidNetwork("x".into())), CliError::Runtime(_)));
    }

    fn summary(nu: f64, p: Vec<usize>, ari: Option<f64>) -> PosteriorSummary {
        let hist = |v: &[usize]| {
            let mut values = v.to_vec();
            values.sort_unstable();
            values.dedup();
            Histogram {
                counts: values.iter().map(|x| v.iter().filter(|y| *y == x).count()).collect(),
                values,
            }
        };
        PosteriorSummary {
            nu,
            chains: 1,
            samples: p.len(),
            p_mode: 0,
            p_interval: (0, 0),
            g_mode: 0,
            g_interval: (0, 0),
            p_histogram: hist(&p),
            g_histogram: hist(&[3, 3, 4]),
            pear_partition: vec![1],
            pear_clusters: 1,
            pear_expected_ari: 1.0,
            positions: vec![],
            cluster_means: vec![],
            ari,
            pc: ari,
            diagnostics: vec![],
        }
    }

    #[test]
    fn report_groups_and_renders_consistently() {
        let rows = report_rows(&[
            summary(0.01, vec![2; 9], Some(0.9)),
            summary(0.1, vec![3, 3, 2], None),
            summary(0.01, vec![3], Some(0.7)),
        ])
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].nu, 0.1);
        assert_eq!(rows[1].replicates, 2);
        assert_eq!(rows[1].p, (2, (2, 3)));
        let (m, (lo, hi)) = rows[1].ari.unwrap();
        assert!((m - 0.8).abs() < 1e-12 && lo == 0.7 && hi == 0.9);

        let text = render_text(&rows);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_report_csv(&rows, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), REPORT_HEADER.to_vec());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for (rec, line) in reader.records().zip(&lines[1..]) {
            for cell in rec.unwrap().iter() {
                assert!(line.contains(cell), "{cell} missing from {line}");
            }
        }
    }
}
