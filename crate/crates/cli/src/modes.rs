//! Run modes.

use std::path::{Path, PathBuf};

use krotov_core::functionals::{d_hs, d_trace, FunctionalSpec};
use krotov_core::krotov::{krotov_optimize, OptimizationResult};
use krotov_core::models::{cooperativity, optomech_model, squeezing_db, x1_variance, OptomechParams};
use krotov_core::propagation::{propagate_forward, steady_state, ControlSet, SystemModel, TimeGrid};
use krotov_core::quantum::DensityMatrix;
use rayon::prelude::*;

use crate::config::{GridChoice, Mode, RunConfig, ScanTimes, TargetChoice, Thermalization};
use crate::error::{CliError, CliResult};
use crate::output::*;

pub struct Context {
    pub cfg: RunConfig,
    pub model: SystemModel,
    dims: Vec<usize>,
}

fn numerical<T>(r: krotov_core::Result<T>) -> CliResult<T> {
    r.map_err(CliError::Numerical)
}

/// First time at which constant drives bring the model within `th.threshold`
/// trace distance of `target`, sampled every `th.dt`.
fn thermalization_time(
    model: &SystemModel,
    drives: &[f64],
    names: &[&str],
    target: &DensityMatrix,
    th: &Thermalization,
) -> CliResult<Option<f64>> {
    let n = (th.horizon / th.dt).ceil() as usize;
    let grid = numerical(TimeGrid::new(th.dt * n as f64, n))?;
    let c = numerical(ControlSet::constant(names, drives, n))?;
    let tr = numerical(propagate_forward(model, &c, model.initial_state(), &grid))?;
    for (j, s) in tr.states.iter().enumerate() {
        if numerical(d_trace(s, target))? < th.threshold {
            return Ok(Some(grid.t(j)));
        }
    }
    Ok(None)
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl Context {
    pub fn new(cfg: RunConfig) -> CliResult<Self> {
        let model = cfg.model.build()?;
        let dims = model.subsystem_dims().to_vec();
        Ok(Self { cfg, model, dims })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn names(&self) -> Vec<&'static str> {
        self.cfg.model.track_names()
    }

    fn target(&self) -> CliResult<DensityMatrix> {
        match &self.cfg.target {
            TargetChoice::Diagonal(d) => {
                DensityMatrix::from_diagonal(d).map_err(|e| CliError::Config(format!("target.diagonal: {e}")))
                    .and_then(|t| {
                        if t.dim() == self.model.dim() {
                            Ok(t)
                        } else {
                            Err(CliError::Config(format!(
                                "target.diagonal: {} entries for a model of dimension {}",
                                t.dim(),
                                self.model.dim()
                            )))
                        }
                    })
            }
            TargetChoice::File(p) => read_state(p, &self.dims),
            TargetChoice::SteadyState => Ok(self.steady_state()?.state),
        }
    }

    fn steady_state(&self) -> CliResult<krotov_core::propagation::SteadyState> {
        numerical(steady_state(&self.model, &self.cfg.model.guess_values(), self.cfg.ss_tol, self.cfg.ss_horizon))
    }

    fn thermalization(&self, target: &DensityMatrix) -> CliResult<f64> {
        let t = thermalization_time(&self.model, &self.cfg.model.guess_values(), &self.names(), target, &self.cfg.thermalization)?;
        t.ok_or_else(|| {
            CliError::Numerical(krotov_core::Error::NumericalConsistency(format!(
                "constant drives did not reach trace distance {:e} within {:e} s",
                self.cfg.thermalization.threshold, self.cfg.thermalization.horizon
            )))
        })
    }

    fn grid(&self, target: &DensityMatrix) -> CliResult<TimeGrid> {
        let g = self.cfg.grid.expect("grid checked at load time");
        let t_final = match g {
            GridChoice::Fixed { t_final, .. } => t_final,
            GridChoice::Thermalization { fraction, .. } => {
                let t_th = self.thermalization(target)?;
                println!("thermalization time {} s", num(t_th));
                fraction * t_th
            }
        };
        numerical(TimeGrid::new(t_final, g.n_steps()))
    }

    fn spec(&self, target: DensityMatrix) -> FunctionalSpec {
        FunctionalSpec { kind: self.cfg.kind, alpha1: self.cfg.alpha1, alpha2: self.cfg.alpha2, target }
    }

    fn optimize_on(&self, grid: &TimeGrid, target: &DensityMatrix) -> CliResult<(ControlSet, OptimizationResult)> {
        let guess = self.cfg.model.guess(grid.n_steps())?;
        let res = numerical(krotov_optimize(
            &self.model,
            &guess,
            &self.spec(target.clone()),
            self.model.initial_state(),
            grid,
            &self.cfg.krotov,
        ))?;
        Ok((guess, res))
    }

    /// Controls from a previous run's table, or a fresh optimization.
    fn optimized_controls(&self, file: Option<&Path>, grid: &TimeGrid, target: &DensityMatrix) -> CliResult<ControlSet> {
        match file {
            Some(path) => {
                let c = read_controls(path, &self.names())?;
                if c.n_steps() != Some(grid.n_steps()) {
                    return Err(CliError::Config(format!(
                        "{}: {} intervals, grid has {}",
                        path.display(),
                        c.n_steps().unwrap_or(0),
                        grid.n_steps()
                    )));
                }
                Ok(c)
            }
            None => Ok(self.optimize_on(grid, target)?.1.controls),
        }
    }

    fn write_trajectory(&self, name: &str, segments: &[Segment<'_>], target: &DensityMatrix) -> CliResult<()> {
        let (h, rows) = trajectory_table(&self.cfg.model, segments, target)?;
        write_csv(&self.out(name), &h, &rows)
    }

    pub fn run(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.cfg.out)
            .map_err(|e| CliError::Output(format!("{}: {e}", self.cfg.out.display())))?;
        match self.cfg.mode {
            Mode::Propagate => self.propagate(),
            Mode::Optimize => self.optimize(),
            Mode::SteadyState => self.steady_state_mode(),
            Mode::ScanTimeCooperativity => self.scan(),
            Mode::NoiseScan => self.noise_scan(),
            Mode::Switchback => self.switchback(),
        }
    }

    fn propagate(&self) -> CliResult<()> {
        let target = self.target()?;
        let grid = self.grid(&target)?;
        let guess = self.cfg.model.guess(grid.n_steps())?;
        let tr = numerical(propagate_forward(&self.model, &guess, self.model.initial_state(), &grid))?;
        let seg = Segment { t_offset: 0.0, grid: &grid, controls: &guess, states: &tr.states };
        self.write_trajectory("trajectory.csv", &[seg], &target)?;
        println!("propagate: T {} s, final d_trace {}", num(grid.t_final()), num(numerical(d_trace(tr.last(), &target))?));
        Ok(())
    }

    fn optimize(&self) -> CliResult<()> {
        let target = self.target()?;
        let grid = self.grid(&target)?;
        let (guess, res) = self.optimize_on(&grid, &target)?;
        let guess_tr = numerical(propagate_forward(&self.model, &guess, self.model.initial_state(), &grid))?;
        let seg = Segment { t_offset: 0.0, grid: &grid, controls: &guess, states: &guess_tr.states };
        self.write_trajectory("trajectory_guess.csv", &[seg], &target)?;
        let seg = Segment { t_offset: 0.0, grid: &grid, controls: &res.controls, states: &res.trajectory.states };
        self.write_trajectory("trajectory.csv", &[seg], &target)?;
        let (h, rows) = controls_table(&grid, &res.controls, &guess);
        write_csv(&self.out("controls.csv"), &h, &rows)?;
        let (h, rows) = iterations_table(&self.cfg.model, &res.records)?;
        write_csv(&self.out("iterations.csv"), &h, &rows)?;
        let last = res.final_record();
        println!(
            "optimize: {} iterations, stop {:?}, D {}, d_trace {} (guess {})",
            last.iteration,
            res.stop,
            num(last.d),
            num(last.distances.d_trace),
            num(res.records[0].distances.d_trace)
        );
        Ok(())
    }

    fn steady_state_mode(&self) -> CliResult<()> {
        let ss = self.steady_state()?;
        write_state(&self.out("state.json"), &self.dims, &ss.state)?;
        let mut line = format!(
            "steady-state: residual {}, t_elapsed {} s, purity {}",
            num(ss.residual),
            num(ss.t_elapsed),
            num(ss.state.purity())
        );
        if let Some(p) = self.cfg.model.optomech() {
            let x1 = numerical(x1_variance(&ss.state, p))?;
            line += &format!(", x1_var {}, squeezing_db {}", num(x1), num(numerical(squeezing_db(x1))?));
        }
        println!("{line}");
        Ok(())
    }

    fn scan(&self) -> CliResult<()> {
        let scan = self.cfg.scan.as_ref().expect("scan block checked at load time");
        let p = self.cfg.model.optomech().expect("optomech model checked at load time");
        let target = self.target()?;
        let times = match &scan.times {
            ScanTimes::Seconds(t) => t.clone(),
            ScanTimes::Fractions(f) => {
                let t_th = self.thermalization(&target)?;
                println!("thermalization time {} s", num(t_th));
                f.iter().map(|x| x * t_th).collect()
            }
        };
        let n_steps = self.cfg.grid.map_or(200, |g| g.n_steps());
        let mut settings = self.cfg.krotov.clone();
        settings.d_trace_stop = Some(scan.threshold);
        let spec = self.spec(target.clone());
        let guess = self.cfg.model.guess(n_steps)?;

        let points: Vec<CliResult<Vec<String>>> = times
            .par_iter()
            .map(|&t| {
                let grid = numerical(TimeGrid::new(t, n_steps))?;
                let res = numerical(krotov_optimize(&self.model, &guess, &spec, self.model.initial_state(), &grid, &settings))?;
                let c: Vec<f64> =
                    res.controls.tracks()[0].samples.iter().map(|g| cooperativity(*g, p.kappa, p.gamma_m)).collect();
                let peak = c.iter().cloned().fold(0.0, f64::max);
                let avg = c.iter().sum::<f64>() / c.len() as f64;
                let last = res.final_record();
                let reached = last.distances.d_trace < scan.threshold;
                Ok(vec![
                    num(t),
                    last.iteration.to_string(),
                    u8::from(reached).to_string(),
                    num(last.distances.d_trace),
                    num(peak),
                    num(avg),
                ])
            })
            .collect();
        let rows: Vec<Vec<String>> = points.into_iter().collect::<CliResult<_>>()?;
        let header = ["t_final_s", "iterations", "reached", "d_trace_final", "peak_cooperativity", "avg_cooperativity"]
            .map(String::from)
            .to_vec();
        write_csv(&self.out("scan.csv"), &header, &rows)?;

        // power law C ~ T^k over the points that reached the threshold
        let reached: Vec<&Vec<String>> = rows.iter().filter(|r| r[2] == "1").collect();
        let ln = |s: &String| s.parse::<f64>().map(f64::ln).unwrap_or(f64::NAN);
        let ln_t: Vec<f64> = reached.iter().map(|r| ln(&r[0])).collect();
        let mut fit_rows = Vec::new();
        for (name, col) in [("peak_cooperativity", 4), ("avg_cooperativity", 5)] {
            let ln_c: Vec<f64> = reached.iter().map(|r| ln(&r[col])).collect();
            let k = least_squares_slope(&ln_t, &ln_c);
            println!("scan: {name} ~ T^k, k = {}", k.map_or("n/a".into(), num));
            fit_rows.push(vec![name.to_string(), k.map(num).unwrap_or_default(), reached.len().to_string()]);
        }
        write_csv(&self.out("scan_fit.csv"), &["quantity", "exponent", "points"].map(String::from), &fit_rows)?;

        if !scan.constant_cooperativities.is_empty() {
            let ratio = if p.g_minus > 0.0 { p.g_plus / p.g_minus } else { 0.0 };
            let th = crate::config::Thermalization { threshold: scan.threshold, ..self.cfg.thermalization.clone() };
            let points: Vec<CliResult<Vec<String>>> = scan
                .constant_cooperativities
                .par_iter()
                .map(|&c| {
                    let q = numerical(OptomechParams::from_cooperativity(
                        p.kappa, p.gamma_m, p.n_th, p.n_cav, p.n_res, c, ratio,
                    ))?;
                    let m = numerical(optomech_model(&q))?;
                    let drives = q.constant_controls();
                    let own = numerical(steady_state(&m, &drives, self.cfg.ss_tol, self.cfg.ss_horizon))?.state;
                    let t = thermalization_time(&m, &drives, &self.names(), &own, &th)?;
                    Ok(vec![num(c), t.map(num).unwrap_or_default()])
                })
                .collect();
            let rows: Vec<Vec<String>> = points.into_iter().collect::<CliResult<_>>()?;
            write_csv(&self.out("scan_constant.csv"), &["cooperativity", "min_time_s"].map(String::from), &rows)?;
        }
        println!("scan: {} durations written", rows.len());
        Ok(())
    }

    fn noise_scan(&self) -> CliResult<()> {
        let target = self.target()?;
        let grid = self.grid(&target)?;
        let optimized = self.optimized_controls(self.cfg.noise_controls.as_deref(), &grid, &target)?;
        let unperturbed = numerical(propagate_forward(&self.model, &optimized, self.model.initial_state(), &grid))?;
        let d0 = numerical(d_trace(unperturbed.last(), &target))?;
        let mut header = vec!["epsilon".to_string(), "d_trace_final".into(), "d_hs_final".into()];
        if self.cfg.model.optomech().is_some() {
            header.extend(["x1_var_final", "squeezing_db_final"].map(String::from));
        }
        let points: Vec<CliResult<Vec<String>>> = self
            .cfg
            .epsilons
            .par_iter()
            .map(|&eps| {
                let c = optimized.scaled(1.0 + eps);
                let tr = numerical(propagate_forward(&self.model, &c, self.model.initial_state(), &grid))?;
                let rho = tr.last();
                let mut row = vec![num(eps), num(numerical(d_trace(rho, &target))?), num(numerical(d_hs(rho, &target))?)];
                if let Some(p) = self.cfg.model.optomech() {
                    let x1 = numerical(x1_variance(rho, p))?;
                    row.extend([num(x1), num(numerical(squeezing_db(x1))?)]);
                }
                Ok(row)
            })
            .collect();
        let rows: Vec<Vec<String>> = points.into_iter().collect::<CliResult<_>>()?;
        write_csv(&self.out("noise.csv"), &header, &rows)?;
        println!("noise-scan: unperturbed d_trace {}, {} perturbations written", num(d0), rows.len());
        Ok(())
    }

    fn switchback(&self) -> CliResult<()> {
        let sb = self.cfg.switchback.as_ref().expect("switchback block checked at load time");
        let target = self.target()?;
        let grid = self.grid(&target)?;
        let optimized = self.optimized_controls(sb.controls.as_deref(), &grid, &target)?;
        let first = numerical(propagate_forward(&self.model, &optimized, self.model.initial_state(), &grid))?;
        let ext_grid = numerical(TimeGrid::new(sb.extension, sb.extension_steps))?;
        let constant = self.cfg.model.guess(sb.extension_steps)?;
        let second = numerical(propagate_forward(&self.model, &constant, first.last(), &ext_grid))?;
        let segments = [
            Segment { t_offset: 0.0, grid: &grid, controls: &optimized, states: &first.states },
            Segment { t_offset: grid.t_final(), grid: &ext_grid, controls: &constant, states: &second.states },
        ];
        self.write_trajectory("switchback.csv", &segments, &target)?;
        println!(
            "switchback: d_trace at T {}, at T + extension {}",
            num(numerical(d_trace(first.last(), &target))?),
            num(numerical(d_trace(second.last(), &target))?)
        );
        Ok(())
    }
}
