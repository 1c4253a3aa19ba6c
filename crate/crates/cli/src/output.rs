//! CSV tables and the JSON state file.

use std::fs::File;
use std::path::Path;

use krotov_core::functionals::{d_hs, d_trace};
use krotov_core::krotov::IterationRecord;
use krotov_core::models::{resonator_state, squeezing_db, x1_variance, OptomechParams};
use krotov_core::propagation::{ControlSet, ControlTrack, TimeGrid};
use krotov_core::quantum::{DensityMatrix, Operator, C64};
use serde::{Deserialize, Serialize};

use crate::config::ModelChoice;
use crate::error::{CliError, CliResult};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("{}: {e}", path.display()))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let file = File::create(path).map_err(|e| out_err(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(header).map_err(|e| out_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| out_err(path, e))?;
    }
    w.flush().map_err(|e| out_err(path, e))
}

fn optomech_columns(rho: &DensityMatrix, p: &OptomechParams) -> CliResult<[String; 3]> {
    let purity_res = resonator_state(rho, p)?.purity();
    let x1 = x1_variance(rho, p)?;
    Ok([num(purity_res), num(x1), num(squeezing_db(x1)?)])
}

/// State-derived columns shared by the trajectory tables. The qubit reports
/// the ground-state population `alpha`; the optomechanical system the
/// resonator purity, `<X1^2>` and its squeezing in dB.
fn state_header(model: &ModelChoice) -> Vec<String> {
    let mut h = vec!["purity_joint".to_string()];
    match model {
        ModelChoice::Qubit { .. } => h.push("alpha".into()),
        ModelChoice::Optomech(_) => h.extend(["purity_resonator", "x1_var", "squeezing_db"].map(String::from)),
    }
    h.extend(["d_trace_to_target", "d_hs_to_target"].map(String::from));
    h
}

fn state_row(model: &ModelChoice, rho: &DensityMatrix, target: &DensityMatrix) -> CliResult<Vec<String>> {
    let mut row = vec![num(rho.purity())];
    match model {
        ModelChoice::Qubit { .. } => row.push(num(rho.matrix()[(0, 0)].re)),
        ModelChoice::Optomech(p) => row.extend(optomech_columns(rho, p)?),
    }
    row.push(num(d_trace(rho, target)?));
    row.push(num(d_hs(rho, target)?));
    Ok(row)
}

/// One trajectory segment: the controls on its grid and the states at its
/// grid points. Row `j` lists the control value on the interval opening at
/// `t_j`; the final row repeats the last interval's value.
pub struct Segment<'a> {
    pub t_offset: f64,
    pub grid: &'a TimeGrid,
    pub controls: &'a ControlSet,
    pub states: &'a [DensityMatrix],
}

pub fn trajectory_table(
    model: &ModelChoice,
    segments: &[Segment<'_>],
    target: &DensityMatrix,
) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut header = vec!["t_s".to_string()];
    header.extend(model.track_names().iter().map(|s| s.to_string()));
    header.extend(state_header(model));
    let mut rows = Vec::new();
    for (s, seg) in segments.iter().enumerate() {
        let n = seg.grid.n_steps();
        // segments after the first share their opening point with the
        // previous segment's closing point
        let start = usize::from(s > 0);
        for j in start..=n {
            let mut row = vec![num(seg.t_offset + seg.grid.t(j))];
            row.extend(seg.controls.values_at(j.min(n - 1)).into_iter().map(num));
            row.extend(state_row(model, &seg.states[j], target)?);
            rows.push(row);
        }
    }
    Ok((header, rows))
}

pub fn controls_table(grid: &TimeGrid, optimized: &ControlSet, guess: &ControlSet) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["interval".to_string(), "t_start_s".into(), "t_end_s".into()];
    header.extend(optimized.names().iter().map(|s| s.to_string()));
    header.extend(guess.names().iter().map(|s| format!("{s}_guess")));
    let rows = (0..grid.n_steps())
        .map(|j| {
            let mut row = vec![j.to_string(), num(grid.t(j)), num(grid.t(j + 1))];
            row.extend(optimized.values_at(j).into_iter().map(num));
            row.extend(guess.values_at(j).into_iter().map(num));
            row
        })
        .collect();
    (header, rows)
}

/// Reads the named tracks back from a controls table.
pub fn read_controls(path: &Path, names: &[&str]) -> CliResult<ControlSet> {
    let cfg = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(|e| cfg(&e))?;
    let header = r.headers().map_err(|e| cfg(&e))?.clone();
    let cols: Vec<usize> = names
        .iter()
        .map(|n| header.iter().position(|h| h == *n).ok_or_else(|| cfg(&format!("missing column '{n}'"))))
        .collect::<CliResult<_>>()?;
    let mut samples = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| cfg(&e))?;
        for (k, &c) in cols.iter().enumerate() {
            let v: f64 = rec
                .get(c)
                .unwrap_or("")
                .parse()
                .map_err(|e| cfg(&format!("column '{}': {e}", names[k])))?;
            samples[k].push(v);
        }
    }
    let tracks =
        names.iter().zip(samples).map(|(n, s)| ControlTrack { name: n.to_string(), samples: s }).collect();
    ControlSet::new(tracks).map_err(|e| cfg(&e))
}

/// Distance columns of the iteration log, in the order of the header below.
pub fn iterations_table(model: &ModelChoice, records: &[IterationRecord]) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut header: Vec<String> = [
        "iter", "J", "D", "d_re", "d_sm", "d_hs", "d_angle", "d_length", "d_split", "d_trace", "d_bures",
        "d_hellinger", "d_js", "alpha1", "alpha2", "max_field_update",
    ]
    .map(String::from)
    .to_vec();
    header.push(match model {
        ModelChoice::Qubit { .. } => "alpha_T".into(),
        ModelChoice::Optomech(_) => "x1_var_T".into(),
    });
    let mut rows = Vec::new();
    for r in records {
        let d = &r.distances;
        let max_update = r.max_update.iter().cloned().fold(0.0, f64::max);
        let mut row = vec![
            r.iteration.to_string(),
            num(r.j),
            num(r.d),
            num(d.d_re),
            num(d.d_sm),
            num(d.d_hs),
            // an undefined angle (maximally mixed state) is left empty
            d.d_angle.map(num).unwrap_or_default(),
            num(d.d_length),
            num(d.d_split),
            num(d.d_trace),
            num(d.d_bures),
            num(d.d_hellinger),
            num(d.d_js),
            num(r.alpha1),
            num(r.alpha2),
            num(max_update),
        ];
        row.push(match model {
            ModelChoice::Qubit { .. } => num(r.state.matrix()[(0, 0)].re),
            ModelChoice::Optomech(p) => num(x1_variance(&r.state, p)?),
        });
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    dims: Vec<usize>,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Writes `{"dims": [...], "re": [...], "im": [...]}`, entries row-major.
pub fn write_state(path: &Path, dims: &[usize], rho: &DensityMatrix) -> CliResult<()> {
    let m = rho.matrix();
    let n = m.nrows();
    let entries: Vec<C64> = (0..n).flat_map(|i| (0..n).map(move |j| m[(i, j)])).collect();
    let state = StateFile { dims: dims.to_vec(), re: entries.iter().map(|z| z.re).collect(), im: entries.iter().map(|z| z.im).collect() };
    let text = serde_json::to_string(&state).map_err(|e| out_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| out_err(path, e))
}

pub fn read_state(path: &Path, dims: &[usize]) -> CliResult<DensityMatrix> {
    let cfg = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| cfg(&e))?;
    let s: StateFile = serde_json::from_str(&text).map_err(|e| cfg(&e))?;
    if s.dims != dims {
        return Err(cfg(&format!("dims {:?} do not match the model's {:?}", s.dims, dims)));
    }
    let n: usize = dims.iter().product();
    if s.re.len() != n * n || s.im.len() != n * n {
        return Err(cfg(&format!("expected {} entries in re and im", n * n)));
    }
    let m = Operator::from_fn(n, n, |i, j| C64::new(s.re[i * n + j], s.im[i * n + j]));
    DensityMatrix::new(m).map_err(|e| cfg(&e))
}
