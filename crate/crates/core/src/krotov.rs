//! First-order Krotov optimization of piecewise-constant controls.
//!
//! Each iteration propagates the co-state backward from `chi(T) = -grad D`
//! under the current fields, then sweeps forward once, updating interval `j`
//! of every track from the co-state and the freshly propagated state at the
//! opening grid point `t_j`:
//!
//! ```text
//! new_k(j) = old_k(j) + S_j / (2 lambda_k) * Re <chi(t_j), (dL/dE_k) rho(t_j)>
//! ```
//!
//! and immediately advancing the state over the interval with the new values.
//! The penalty `sum_k lambda_k / S_j (new - old)^2 dt` is added to `D` to
//! form `J`. The factor 1/2 pairs the real gradient in `chi(T) = -grad D`
//! with this penalty: to first order the step lowers `D` by twice the
//! penalty it incurs, so `J` decreases.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::functionals::{costate_seed, distance_report, DistanceReport, FunctionalKind, FunctionalSpec};
use crate::propagation::{
    check_snapshot, propagate_backward_with, propagate_forward_with, ControlSet, Dopri, PropagationOptions,
    SystemModel, TimeGrid, Trajectory,
};
use crate::quantum::{hs_overlap_unchecked, DensityMatrix, Operator};

/// Smallest value of the update shape function.
pub const SHAPE_FLOOR: f64 = 1e-8;
/// Allowed increase of `J` between fixed-weight iterations.
pub const MONOTONICITY_SLACK: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct KrotovSettings {
    /// Inverse step size per track.
    pub lambda: Vec<f64>,
    /// Fraction of `T` covered by each of the switch-on and switch-off ramps.
    pub ramp_fraction: f64,
    pub max_iters: usize,
    /// Stop once `J` decreases by less than this between iterations.
    pub j_tol: f64,
    /// Recompute the split weights from the latest angle and length terms
    /// before every iteration. Implied by [`FunctionalKind::SplitAdaptive`].
    pub adaptive_weights: bool,
    /// Optional early stop once the trace distance to the target drops below this.
    pub d_trace_stop: Option<f64>,
    pub propagation: PropagationOptions,
}

impl KrotovSettings {
    pub fn new(lambda: Vec<f64>) -> Self {
        Self {
            lambda,
            ramp_fraction: 0.05,
            max_iters: 100,
            j_tol: 0.0,
            adaptive_weights: false,
            d_trace_stop: None,
            propagation: PropagationOptions::default(),
        }
    }

    pub fn validate(&self, n_tracks: usize) -> Result<()> {
        if self.lambda.len() != n_tracks {
            return invalid(format!("expected {n_tracks} lambda values, got {}", self.lambda.len()));
        }
        if self.lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return invalid("lambda must be positive and finite");
        }
        if !(self.ramp_fraction > 0.0 && self.ramp_fraction < 0.5) {
            return invalid(format!("ramp_fraction {} outside (0, 0.5)", self.ramp_fraction));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.j_tol >= 0.0) {
            return invalid("j_tol must be nonnegative");
        }
        Ok(())
    }
}

/// Update weight: `sin^2` ramps over the first and last `ramp_fraction * T`,
/// 1 in between, never below [`SHAPE_FLOOR`].
pub fn shape_function(t: f64, t_final: f64, ramp_fraction: f64) -> f64 {
    let ramp = ramp_fraction * t_final;
    let edge = t.min(t_final - t).max(0.0);
    let s = if edge >= ramp { 1.0 } else { (0.5 * PI * edge / ramp).sin().powi(2) };
    s.max(SHAPE_FLOOR)
}

/// Shape value used for interval `j`: the smaller of its endpoint values, so
/// the first and last intervals receive exactly the floor.
pub fn interval_shape(grid: &TimeGrid, j: usize, ramp_fraction: f64) -> f64 {
    let t = grid.t_final();
    shape_function(grid.t(j), t, ramp_fraction).min(shape_function(grid.t(j + 1), t, ramp_fraction))
}

/// New sample for control `k` given the co-state and state at the opening
/// point of the interval.
pub fn field_update(
    model: &SystemModel,
    k: usize,
    chi: &Operator,
    rho: &Operator,
    shape: f64,
    lambda: f64,
    reference: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let d = model.control_derivative(k, rho)?;
    Ok(reference + 0.5 * shape / lambda * hs_overlap_unchecked(chi, &d).re)
}

/// Per-iteration log entry. Iteration 0 describes the guess.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    pub j: f64,
    pub d: f64,
    pub distances: DistanceReport,
    /// Largest `|new - old|` per track.
    pub max_update: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Final state `rho(T)` reached by this iteration's fields.
    pub state: DensityMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    JTolerance,
    TraceDistance,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    pub controls: ControlSet,
    pub records: Vec<IterationRecord>,
    /// Forward trajectory under the optimized controls.
    pub trajectory: Trajectory<DensityMatrix>,
    pub stop: StopReason,
}

impl OptimizationResult {
    pub fn final_record(&self) -> &IterationRecord {
        self.records.last().expect("at least the guess record")
    }
}

/// Weights `D_angle / (D_angle + D_length)` and its complement; an undefined
/// angle counts as zero and a vanishing sum gives equal weights.
pub fn adaptive_weights(report: &DistanceReport) -> (f64, f64) {
    let a = report.d_angle.unwrap_or(0.0);
    let l = report.d_length;
    if a + l > 0.0 {
        let a1 = a / (a + l);
        (a1, 1.0 - a1)
    } else {
        (0.5, 0.5)
    }
}

fn record(
    iteration: usize,
    j: f64,
    spec: &FunctionalSpec,
    rho: &DensityMatrix,
    max_update: Vec<f64>,
) -> Result<IterationRecord> {
    Ok(IterationRecord {
        iteration,
        j,
        d: spec.value(rho)?,
        distances: distance_report(rho, &spec.target)?,
        max_update,
        alpha1: spec.alpha1,
        alpha2: spec.alpha2,
        state: rho.clone(),
    })
}

pub fn krotov_optimize(
    model: &SystemModel,
    guess: &ControlSet,
    spec: &FunctionalSpec,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    settings: &KrotovSettings,
) -> Result<OptimizationResult> {
    let n_tracks = guess.n_tracks();
    settings.validate(n_tracks)?;
    spec.validate()?;
    if spec.target.dim() != model.dim() || rho0.dim() != model.dim() {
        return invalid("initial and target states must match the model dimension");
    }
    let adaptive = settings.adaptive_weights || spec.kind == FunctionalKind::SplitAdaptive;
    if adaptive && !spec.kind.is_split() {
        return invalid(format!("adaptive weights need a split functional, got '{}'", spec.kind));
    }
    let opts = &settings.propagation;
    let n = grid.n_steps();
    let dt = grid.dt();
    let shapes: Vec<f64> = (0..n).map(|j| interval_shape(grid, j, settings.ramp_fraction)).collect();

    let mut spec = spec.clone();
    let mut fields = guess.clone();
    let mut rho_t = propagate_forward_with(model, &fields, rho0, grid, opts)?.last().clone();
    if adaptive {
        (spec.alpha1, spec.alpha2) = adaptive_weights(&distance_report(&rho_t, &spec.target)?);
    }
    let first = record(0, spec.value(&rho_t)?, &spec, &rho_t, vec![0.0; n_tracks])?;
    let mut prev_j = first.j;
    let mut records = vec![first];
    let mut stop = StopReason::MaxIters;

    if let Some(thr) = settings.d_trace_stop {
        if records[0].distances.d_trace < thr {
            stop = StopReason::TraceDistance;
        }
    }

    let mut iteration = 0;
    while stop == StopReason::MaxIters && iteration < settings.max_iters {
        iteration += 1;
        if adaptive {
            let last = &records.last().expect("record").distances;
            (spec.alpha1, spec.alpha2) = adaptive_weights(last);
        }
        let chi_t = costate_seed(&spec, &rho_t)?;
        let chis = propagate_backward_with(model, &fields, &chi_t, grid, opts)?;

        let mut updated = fields.clone();
        let mut max_update = vec![0.0f64; n_tracks];
        let mut penalty = 0.0;
        let mut y = rho0.matrix().clone();
        let mut dopri = Dopri::new(model.dim(), opts.tol);
        for j in 0..n {
            let chi = chis.states[j].matrix();
            for k in 0..n_tracks {
                let old = fields.tracks()[k].samples[j];
                let mut new = field_update(model, k, chi, &y, shapes[j], settings.lambda[k], old)?;
                if model.is_rate_control(k) {
                    new = new.max(0.0);
                }
                let delta = new - old;
                max_update[k] = max_update[k].max(delta.abs());
                penalty += settings.lambda[k] / shapes[j] * delta * delta * dt;
                updated.tracks_mut()[k].samples[j] = new;
            }
            let gen = model.generator(&updated.values_at(j), false);
            dopri
                .advance(&gen, &mut y, dt)
                .map_err(|reason| Error::PropagationAccuracy { step: j, reason })?;
            check_snapshot(&y, j + 1, opts.check_every_positivity || j + 1 == n)?;
        }
        fields = updated;
        rho_t = DensityMatrix::from_trusted(y);

        let d = spec.value(&rho_t)?;
        let j_val = d + penalty;
        if !adaptive && j_val > prev_j + MONOTONICITY_SLACK {
            return Err(Error::MonotonicityViolation { iteration, previous: prev_j, current: j_val });
        }
        let rec = record(iteration, j_val, &spec, &rho_t, max_update)?;
        let decrease = if adaptive { (prev_j - j_val).abs() } else { prev_j - j_val };
        if let Some(thr) = settings.d_trace_stop {
            if rec.distances.d_trace < thr {
                stop = StopReason::TraceDistance;
            }
        }
        if stop == StopReason::MaxIters && decrease < settings.j_tol {
            stop = StopReason::JTolerance;
        }
        prev_j = j_val;
        records.push(rec);
    }

    let trajectory = propagate_forward_with(model, &fields, rho0, grid, opts)?;
    Ok(OptimizationResult { controls: fields, records, trajectory, stop })
}
