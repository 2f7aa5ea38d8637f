use std::fs::File;
use std::path::Path;

use mfrn_core::io::fmt_f64;

use crate::manifest::RunManifest;
use crate::CliError;

struct RunData {
    costs: Vec<f64>,
    errors: Vec<f64>,
    /// `(t, w, b)` rows.
    controls: Vec<[f64; 3]>,
}

fn read_run(dir: &Path) -> Result<RunData, CliError> {
    let mut costs = Vec::new();
    let mut errors = Vec::new();
    let iterations = dir.join("iterations.csv");
    if iterations.exists() {
        for rec in csv::Reader::from_path(iterations)?.records() {
            let rec = rec?;
            costs.push(parse(&rec, 1)?);
            errors.push(parse(&rec, 2)?);
        }
    }
    let mut controls = Vec::new();
    let path = dir.join("controls.csv");
    if path.exists() {
        for rec in csv::Reader::from_path(path)?.records() {
            let rec = rec?;
            controls.push([parse(&rec, 0)?, parse(&rec, 1)?, parse(&rec, 2)?]);
        }
    }
    Ok(RunData {
        costs,
        errors,
        controls,
    })
}

fn parse(rec: &csv::StringRecord, i: usize) -> Result<f64, CliError> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Other(format!("malformed CSV row {rec:?}")))
}

/// Writes `series, index, t, a, b, delta` rows aligning two runs' cost and
/// `e_k` histories and their final controls.
pub fn compare(dir_a: &Path, dir_b: &Path, out: &Path) -> Result<(), CliError> {
    let (ma, mb) = (RunManifest::read(dir_a)?, RunManifest::read(dir_b)?);
    let grid = |m: &RunManifest| (m.config.domain, m.config.n_cells, m.config.t_final, m.config.dt);
    if grid(&ma) != grid(&mb) {
        return Err(CliError::Other(format!(
            "runs use different grids: {:?} vs {:?}",
            grid(&ma),
            grid(&mb)
        )));
    }
    let (a, b) = (read_run(dir_a)?, read_run(dir_b)?);
    let mut w = csv::Writer::from_writer(File::create(out)?);
    w.write_record(["series", "index", "t", "a", "b", "delta"])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let delta = |x: Option<f64>, y: Option<f64>| opt(x.zip(y).map(|(x, y)| y - x));
    for (name, xs, ys) in [("cost", &a.costs, &b.costs), ("e_k", &a.errors, &b.errors)] {
        for k in 0..xs.len().max(ys.len()) {
            let (x, y) = (xs.get(k).copied(), ys.get(k).copied());
            w.write_record([name.to_string(), (k + 1).to_string(), String::new(), opt(x), opt(y), delta(x, y)])?;
        }
    }
    for (col, name) in [(1, "w"), (2, "b")] {
        for (k, (x, y)) in a.controls.iter().zip(&b.controls).enumerate() {
            w.write_record([
                name.to_string(),
                k.to_string(),
                fmt_f64(x[0]),
                fmt_f64(x[col]),
                fmt_f64(y[col]),
                fmt_f64(y[col] - x[col]),
            ])?;
        }
    }
    let last = |v: &[f64]| v.last().copied();
    w.write_record([
        "final_cost".to_string(),
        String::new(),
        String::new(),
        opt(last(&a.costs)),
        opt(last(&b.costs)),
        delta(last(&a.costs), last(&b.costs)),
    ])?;
    w.flush()?;
    Ok(())
}
