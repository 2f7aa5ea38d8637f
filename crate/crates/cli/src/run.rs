use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use log::info;
use mfrn_core::io::{fmt_f64, write_field_csv};
use mfrn_core::measures::{moments, wasserstein1};
use mfrn_core::optim::write_controls_csv;
use mfrn_core::scenarios::{run_convergence_study, verify_exact_controls, Scenario, ScenarioName};
use mfrn_core::{Activation, DensityField, Error};

use crate::manifest::RunManifest;
use crate::CliError;

const SUMMARY_COLUMNS: [&str; 14] = [
    "scenario",
    "activation",
    "final_cost",
    "final_w1",
    "iterations",
    "converged",
    "stop_reason",
    "mean_f_t",
    "mean_g",
    "var_f_t",
    "var_g",
    "max_mass_error",
    "min_density",
    "slope",
];

#[derive(Debug, Default)]
struct Summary {
    final_cost: Option<f64>,
    final_w1: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    stop_reason: Option<String>,
    moments: Option<[f64; 4]>,
    max_mass_error: Option<f64>,
    min_density: Option<f64>,
    slope: Option<f64>,
}

/// Runs the scenario at `config` and writes its artifacts into `out`.
pub fn run(config: &Path, out: &Path, seed: Option<u64>, activation: Option<&str>) -> Result<(), CliError> {
    let text = fs::read_to_string(config)
        .map_err(|e| CliError::InvalidConfig(format!("{}: {e}", config.display())))?;
    let mut scenario = parse_scenario(&text, config)?;
    if let Some(name) = activation {
        scenario.activation = name
            .parse::<Activation>()
            .map_err(|e| CliError::InvalidConfig(format!("--activation: {e}")))?;
    }
    if let Some(first) = seed {
        let n = scenario.seeds.len().max(1) as u64;
        scenario.seeds = (first..first + n).collect();
    }

    fs::create_dir_all(out)?;
    let mut manifest = RunManifest::new(&scenario, out);
    manifest.write(out)?;
    info!("running {:?} into {}", scenario.name, out.display());

    let result = execute(&scenario, out, &mut manifest);
    manifest.status = match &result {
        Ok(()) => "ok".into(),
        Err(CliError::Divergence(_)) => "diverged".into(),
        Err(_) => "failed".into(),
    };
    manifest.write(out)?;
    result
}

fn parse_scenario(text: &str, path: &Path) -> Result<Scenario, CliError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
        CliError::InvalidConfig(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
    })?;
    scenario.validate().map_err(|e| match e {
        Error::InvalidConfig { field, reason } => {
            let line = field_line(text, field).map_or_else(String::new, |l| format!("{l}:"));
            CliError::InvalidConfig(format!("{}:{line} {field}: {reason}", path.display()))
        }
        other => CliError::InvalidConfig(format!("{}: {other}", path.display())),
    })?;
    Ok(scenario)
}

/// One-based line of the first `"field":` key in `text`.
fn field_line(text: &str, field: &str) -> Option<usize> {
    let key = format!("\"{field}\"");
    text.lines().position(|l| l.contains(&key)).map(|i| i + 1)
}

fn timed<T>(
    manifest: &mut RunManifest,
    phase: &str,
    f: impl FnOnce() -> Result<T, CliError>,
) -> Result<T, CliError> {
    let start = Instant::now();
    let out = f();
    manifest.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
    out
}

fn execute(s: &Scenario, out: &Path, manifest: &mut RunManifest) -> Result<(), CliError> {
    let f0 = timed(manifest, "setup", || Ok(s.initial_density()?))?;
    write_fields(&out.join("f0.csv"), std::slice::from_ref(&f0))?;
    let summary = match s.name {
        ScenarioName::Test1 | ScenarioName::Test2 | ScenarioName::Test3 => train(s, out, manifest)?,
        ScenarioName::Convergence => convergence(s, out, manifest)?,
        ScenarioName::ShiftControl | ScenarioName::ScaleControl => exact(s, out, manifest)?,
    };
    write_summary(&out.join("summary.csv"), s, &summary)
}

fn train(s: &Scenario, out: &Path, manifest: &mut RunManifest) -> Result<Summary, CliError> {
    let (problem, g) = timed(manifest, "target", || {
        let g = s.target_density()?;
        Ok((s.problem()?, g))
    })?;
    write_fields(&out.join("g.csv"), std::slice::from_ref(&g))?;
    let c0 = s.initial_controls()?;
    let state = timed(manifest, "train", || Ok(problem.train(&c0)?))?;
    state.write_log_csv(BufWriter::new(File::create(out.join("iterations.csv"))?))?;
    write_controls_csv(&state.controls, BufWriter::new(File::create(out.join("controls.csv"))?))?;
    let traj = timed(manifest, "final_forward", || Ok(problem.forward(&state.controls)?))?;
    let f_t = traj.last().expect("nonempty").clone();
    write_fields(&out.join("f_T.csv"), std::slice::from_ref(&f_t))?;
    write_fields(&out.join("snapshots.csv"), &quarter_snapshots(&traj))?;
    let stats = problem.stats();
    Ok(Summary {
        final_cost: Some(state.final_cost()),
        final_w1: Some(wasserstein1(&f_t, &g)?),
        iterations: Some(state.iteration),
        converged: Some(state.converged()),
        stop_reason: Some(format!("{:?}", state.stop)),
        moments: Some(moment_pair(&f_t, &g)),
        max_mass_error: Some(stats.max_mass_error),
        min_density: Some(stats.min_value),
        slope: None,
    })
}

fn convergence(s: &Scenario, out: &Path, manifest: &mut RunManifest) -> Result<Summary, CliError> {
    let report = timed(manifest, "study", || Ok(run_convergence_study(s)?))?;
    let mut w = csv::Writer::from_path(out.join("convergence.csv"))?;
    w.write_record(["particles", "seed", "w1"])?;
    for (i, m) in report.particle_counts.iter().enumerate() {
        for (k, seed) in report.seeds.iter().enumerate() {
            w.write_record([m.to_string(), seed.to_string(), fmt_f64(report.w1[i][k])])?;
        }
    }
    w.flush()?;
    let g = s.target_density()?;
    write_fields(&out.join("f_T.csv"), &[g])?;
    Ok(Summary {
        final_w1: report.mean_w1.last().copied(),
        iterations: Some(0),
        slope: Some(report.slope),
        ..Summary::default()
    })
}

fn exact(s: &Scenario, out: &Path, manifest: &mut RunManifest) -> Result<Summary, CliError> {
    let check = timed(manifest, "forward", || Ok(verify_exact_controls(s)?))?;
    if let Some(c) = s.exact_path()? {
        write_controls_csv(&c, BufWriter::new(File::create(out.join("controls.csv"))?))?;
    }
    write_fields(&out.join("g.csv"), std::slice::from_ref(&check.g))?;
    write_fields(&out.join("f_T.csv"), std::slice::from_ref(&check.f_t))?;
    Ok(Summary {
        final_w1: Some(check.w1),
        iterations: Some(0),
        moments: Some(moment_pair(&check.f_t, &check.g)),
        ..Summary::default()
    })
}

fn moment_pair(f: &DensityField, g: &DensityField) -> [f64; 4] {
    let (mf, mg) = (moments(f, 1), moments(g, 1));
    [mf, mg, moments(f, 2) - mf * mf, moments(g, 2) - mg * mg]
}

fn quarter_snapshots(traj: &[DensityField]) -> Vec<DensityField> {
    let n = traj.len() - 1;
    let mut idx: Vec<usize> = (0..=4).map(|q| q * n / 4).collect();
    idx.dedup();
    idx.into_iter().map(|k| traj[k].clone()).collect()
}

fn write_fields(path: &Path, fields: &[DensityField]) -> Result<(), CliError> {
    write_field_csv(BufWriter::new(File::create(path)?), fields)?;
    Ok(())
}

fn write_summary(path: &Path, s: &Scenario, r: &Summary) -> Result<(), CliError> {
    let num = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let [mf, mg, vf, vg] = r.moments.map_or([None; 4], |m| m.map(Some));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    w.write_record([
        serde_json::to_value(s.name)?.as_str().unwrap_or_default().to_string(),
        s.activation.to_string(),
        num(r.final_cost),
        num(r.final_w1),
        r.iterations.map(|v| v.to_string()).unwrap_or_default(),
        r.converged.map(|v| v.to_string()).unwrap_or_default(),
        r.stop_reason.clone().unwrap_or_default(),
        num(mf),
        num(mg),
        num(vf),
        num(vg),
        num(r.max_mass_error),
        num(r.min_density),
        num(r.slope),
    ])?;
    w.flush()?;
    Ok(())
}
