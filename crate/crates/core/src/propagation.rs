//! Time evolution of states and co-states under piecewise-constant controls.
//!
//! The generator of a control interval is applied matrix-free:
//!
//! ```text
//! L rho  = -i (H_eff rho - rho H_eff^dagger) + sum_l L_l rho L_l^dagger
//! L' chi =  i (H_eff^dagger chi - chi H_eff) + sum_l L_l^dagger chi L_l
//! ```
//!
//! with `H_eff = H - (i/2) sum_l L_l^dagger L_l`. `L'` is the Hilbert-Schmidt
//! adjoint of `L`. Co-states obey `d chi/dt = -L' chi`, so that `<chi(t), rho(t)>`
//! is conserved when both are propagated under the same controls.
//!
//! Within each interval an adaptive Dormand-Prince 5(4) scheme sub-steps until
//! the local error estimate is below the configured tolerance.

use crate::error::{invalid, Error, Result};
use crate::quantum::{hermiticity_defect, max_abs, min_eigenvalue, CoState, DensityMatrix, Operator, C64};
use crate::sparse::Csr;

/// Trace drift accepted along a propagated trajectory.
pub const TRACE_DRIFT_TOL: f64 = 1e-8;
/// Most negative eigenvalue accepted along a propagated trajectory.
pub const POSITIVITY_TOL: f64 = 1e-8;
const HERMITICITY_DRIFT_TOL: f64 = 1e-10;
const MAX_SUBSTEPS: usize = 50_000_000;

/// Uniform time grid on `[0, t_final]` with `n_steps` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return invalid(format!("final time must be positive, got {t_final}"));
        }
        if n_steps == 0 {
            return invalid("time grid needs at least one step");
        }
        Ok(Self { t_final, n_steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Grid point `j` in `0..=n_steps`.
    pub fn t(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_final
        } else {
            j as f64 * self.dt()
        }
    }

    /// Midpoint of interval `j`, where the control samples live.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrack {
    pub name: String,
    pub samples: Vec<f64>,
}

/// Piecewise-constant control amplitudes, one sample per grid interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSet {
    tracks: Vec<ControlTrack>,
}

impl ControlSet {
    pub fn new(tracks: Vec<ControlTrack>) -> Result<Self> {
        if let Some(first) = tracks.first() {
            let n = first.samples.len();
            if n == 0 {
                return invalid("control tracks must not be empty");
            }
            if let Some(bad) = tracks.iter().find(|t| t.samples.len() != n) {
                return invalid(format!("track '{}' has {} samples, expected {n}", bad.name, bad.samples.len()));
            }
            if let Some(bad) = tracks.iter().find(|t| t.samples.iter().any(|v| !v.is_finite())) {
                return invalid(format!("track '{}' contains non-finite samples", bad.name));
            }
        }
        Ok(Self { tracks })
    }

    /// Every track held at a constant value.
    pub fn constant(names: &[&str], values: &[f64], n_steps: usize) -> Result<Self> {
        if names.len() != values.len() {
            return invalid("names and values differ in length");
        }
        Self::new(
            names
                .iter()
                .zip(values)
                .map(|(n, &v)| ControlTrack { name: n.to_string(), samples: vec![v; n_steps] })
                .collect(),
        )
    }

    pub fn tracks(&self) -> &[ControlTrack] {
        &self.tracks
    }

    pub fn tracks_mut(&mut self) -> &mut [ControlTrack] {
        &mut self.tracks
    }

    pub fn n_tracks(&self) -> usize {
        self.tracks.len()
    }

    /// Number of samples per track (zero when there are no tracks).
    pub fn n_steps(&self) -> Option<usize> {
        self.tracks.first().map(|t| t.samples.len())
    }

    pub fn names(&self) -> Vec<&str> {
        self.tracks.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn values_at(&self, j: usize) -> Vec<f64> {
        self.tracks.iter().map(|t| t.samples[j]).collect()
    }

    /// All amplitudes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            tracks: self
                .tracks
                .iter()
                .map(|t| ControlTrack { name: t.name.clone(), samples: t.samples.iter().map(|v| v * factor).collect() })
                .collect(),
        }
    }

    pub(crate) fn check_against(&self, model: &SystemModel, grid: &TimeGrid) -> Result<()> {
        if self.n_tracks() != model.controls().len() {
            return invalid(format!("model has {} controls, control set has {}", model.controls().len(), self.n_tracks()));
        }
        if let Some(n) = self.n_steps() {
            if n != grid.n_steps() {
                return invalid(format!("controls have {n} samples, grid has {} intervals", grid.n_steps()));
            }
        }
        Ok(())
    }
}

/// How a control amplitude enters the generator.
#[derive(Clone, Debug)]
pub enum ControlKind {
    /// Adds `value * H_k` to the Hamiltonian.
    Hamiltonian(Operator),
    /// Collapse operator `L` whose rate is the control value: `value * D[L]`.
    DecayRate(Operator),
}

#[derive(Clone, Debug)]
pub struct Control {
    pub name: String,
    pub kind: ControlKind,
}

#[derive(Clone, Debug)]
struct ControlCache {
    op: Csr,
    /// `L^dagger L` for rate controls.
    decay: Option<(Csr, Operator)>,
}

/// Drift Hamiltonian, linearly coupled controls and collapse operators on a
/// common Hilbert space, plus the default initial state.
#[derive(Clone, Debug)]
pub struct SystemModel {
    dim: usize,
    subsystem_dims: Vec<usize>,
    drift: Operator,
    controls: Vec<Control>,
    collapse: Vec<Operator>,
    initial_state: DensityMatrix,
    cache: Vec<ControlCache>,
    collapse_csr: Vec<(Csr, Csr)>,
    collapse_decay: Operator,
}

impl SystemModel {
    /// Builds a model. Collapse operators carry their rates (`sqrt(rate) * L`).
    pub fn new(
        drift: Operator,
        controls: Vec<Control>,
        collapse: Vec<Operator>,
        initial_state: DensityMatrix,
        subsystem_dims: Vec<usize>,
    ) -> Result<Self> {
        let dim = drift.nrows();
        if dim == 0 || drift.ncols() != dim {
            return invalid("drift Hamiltonian must be a non-empty square matrix");
        }
        let scale = |m: &Operator| max_abs(m).max(1.0);
        if hermiticity_defect(&drift) > 1e-12 * scale(&drift) {
            return invalid("drift Hamiltonian is not Hermitian");
        }
        for c in &controls {
            let op = match &c.kind {
                ControlKind::Hamiltonian(h) | ControlKind::DecayRate(h) => h,
            };
            if op.shape() != (dim, dim) {
                return invalid(format!("control '{}' has wrong dimension", c.name));
            }
            if let ControlKind::Hamiltonian(h) = &c.kind {
                if hermiticity_defect(h) > 1e-12 * scale(h) {
                    return invalid(format!("control Hamiltonian '{}' is not Hermitian", c.name));
                }
            }
        }
        if collapse.iter().any(|l| l.shape() != (dim, dim)) {
            return invalid("collapse operator has wrong dimension");
        }
        if initial_state.dim() != dim {
            return invalid("initial state has wrong dimension");
        }
        if subsystem_dims.iter().product::<usize>() != dim {
            return invalid(format!("subsystem dims {subsystem_dims:?} do not multiply to {dim}"));
        }

        let cache = controls
            .iter()
            .map(|c| match &c.kind {
                ControlKind::Hamiltonian(h) => ControlCache { op: Csr::from_dense(h), decay: None },
                ControlKind::DecayRate(l) => {
                    let k = l.adjoint() * l;
                    ControlCache { op: Csr::from_dense(l), decay: Some((Csr::from_dense(&k), k)) }
                }
            })
            .collect();
        let collapse_csr = collapse.iter().map(|l| (Csr::from_dense(l), Csr::from_dense(&l.adjoint()))).collect();
        let collapse_decay = collapse.iter().fold(Operator::zeros(dim, dim), |acc, l| acc + l.adjoint() * l);

        Ok(Self {
            dim,
            subsystem_dims,
            drift,
            controls,
            collapse,
            initial_state,
            cache,
            collapse_csr,
            collapse_decay,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subsystem_dims(&self) -> &[usize] {
        &self.subsystem_dims
    }

    pub fn drift(&self) -> &Operator {
        &self.drift
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn control_names(&self) -> Vec<&str> {
        self.controls.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn collapse_ops(&self) -> &[Operator] {
        &self.collapse
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.initial_state
    }

    pub fn is_rate_control(&self, k: usize) -> bool {
        matches!(self.controls[k].kind, ControlKind::DecayRate(_))
    }

    fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.controls.len() {
            return invalid(format!("expected {} control values, got {}", self.controls.len(), values.len()));
        }
        Ok(())
    }

    fn check_dim(&self, m: &Operator) -> Result<()> {
        if m.shape() != (self.dim, self.dim) {
            return invalid(format!("operator shape {:?} does not match model dimension {}", m.shape(), self.dim));
        }
        Ok(())
    }

    /// Generator for fixed control values; `adjoint` selects `L'` instead of `L`.
    pub(crate) fn generator(&self, values: &[f64], adjoint: bool) -> Generator {
        let i = C64::new(0.0, 1.0);
        let mut h = self.drift.clone();
        let mut decay = self.collapse_decay.clone();
        let mut jumps: Vec<(Csr, f64)> = Vec::with_capacity(self.collapse.len() + self.controls.len());
        for (l, ladj) in &self.collapse_csr {
            jumps.push(((if adjoint { ladj } else { l }).clone(), 1.0));
        }
        for (k, (c, &v)) in self.controls.iter().zip(values).enumerate() {
            match &c.kind {
                ControlKind::Hamiltonian(hk) => h += hk.map(|z| z * v),
                ControlKind::DecayRate(l) => {
                    if v != 0.0 {
                        decay += &self.cache[k].decay.as_ref().expect("rate control cache").1.map(|z| z * v);
                        let op = if adjoint { Csr::from_dense(&l.adjoint()) } else { self.cache[k].op.clone() };
                        jumps.push((op, v));
                    }
                }
            }
        }
        let rate_scale = max_abs(&h).max(max_abs(&decay));
        let h_eff = h - decay.map(|z| z * i * 0.5);
        let a = if adjoint { h_eff.adjoint().map(|z| -z) } else { h_eff };
        Generator { a: Csr::from_dense(&a), jumps, rate_scale }
    }

    /// `(d L / d value_k) rho`.
    pub fn control_derivative(&self, k: usize, rho: &Operator) -> Result<Operator> {
        if k >= self.controls.len() {
            return invalid(format!("control index {k} out of range"));
        }
        self.check_dim(rho)?;
        let n = self.dim;
        let mut out = Operator::zeros(n, n);
        let cache = &self.cache[k];
        match &cache.decay {
            None => {
                let i = C64::new(0.0, 1.0);
                cache.op.mul_left(rho, -i, &mut out);
                cache.op.add_mul_right_adjoint(rho, i, &mut out);
            }
            Some((kcsr, _)) => {
                let mut tmp = Operator::zeros(n, n);
                cache.op.mul_left(rho, C64::new(1.0, 0.0), &mut tmp);
                cache.op.add_mul_right_adjoint(&tmp, C64::new(1.0, 0.0), &mut out);
                kcsr.mul_left(rho, C64::new(-0.5, 0.0), &mut tmp);
                out += &tmp;
                kcsr.add_mul_right_adjoint(rho, C64::new(-0.5, 0.0), &mut out);
            }
        }
        Ok(out)
    }
}

/// Matrix-free generator `y -> -i(A y - y A^dagger) + sum w L y L^dagger`.
#[derive(Clone, Debug)]
pub(crate) struct Generator {
    a: Csr,
    jumps: Vec<(Csr, f64)>,
    /// Largest entry of `H` or `sum L^dagger L`, a characteristic rate.
    rate_scale: f64,
}

impl Generator {
    pub(crate) fn apply(&self, y: &Operator, out: &mut Operator, tmp: &mut Operator) {
        let i = C64::new(0.0, 1.0);
        self.a.mul_left(y, -i, out);
        self.a.add_mul_right_adjoint(y, i, out);
        for (l, w) in &self.jumps {
            l.mul_left(y, C64::new(*w, 0.0), tmp);
            l.add_mul_right_adjoint(tmp, C64::new(1.0, 0.0), out);
        }
    }
}

/// `d rho / dt` for the given control values.
pub fn liouville_apply(model: &SystemModel, values: &[f64], state: &Operator) -> Result<Operator> {
    model.check_values(values)?;
    model.check_dim(state)?;
    let gen = model.generator(values, false);
    let n = model.dim();
    let (mut out, mut tmp) = (Operator::zeros(n, n), Operator::zeros(n, n));
    gen.apply(state, &mut out, &mut tmp);
    Ok(out)
}

/// Hilbert-Schmidt adjoint of [`liouville_apply`].
pub fn adjoint_apply(model: &SystemModel, values: &[f64], costate: &Operator) -> Result<Operator> {
    model.check_values(values)?;
    model.check_dim(costate)?;
    let gen = model.generator(values, true);
    let n = model.dim();
    let (mut out, mut tmp) = (Operator::zeros(n, n), Operator::zeros(n, n));
    gen.apply(costate, &mut out, &mut tmp);
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand-Prince integrator for `y' = G y` with constant `G`.
pub(crate) struct Dopri {
    tol: f64,
    h: Option<f64>,
    err_prev: f64,
    k: Vec<Operator>,
    stage: Operator,
    y_new: Operator,
    tmp: Operator,
    pub(crate) substeps: usize,
}

/// Outcome of an integration leg.
pub(crate) enum Leg {
    Completed,
    /// Stopped early because the monitor returned true; carries the elapsed time.
    Stopped(f64),
}

impl Dopri {
    pub(crate) fn new(dim: usize, tol: f64) -> Self {
        Self {
            tol,
            h: None,
            err_prev: 1e-4,
            k: (0..7).map(|_| Operator::zeros(dim, dim)).collect(),
            stage: Operator::zeros(dim, dim),
            y_new: Operator::zeros(dim, dim),
            tmp: Operator::zeros(dim, dim),
            substeps: 0,
        }
    }

    /// Advances `y` by `span` under `gen`.
    pub(crate) fn advance(&mut self, gen: &Generator, y: &mut Operator, span: f64) -> std::result::Result<(), String> {
        self.run(gen, y, span, |_, _| false).map(|_| ())
    }

    /// Integrates up to `span`, calling `monitor(t, y')` after every accepted
    /// step with the derivative at the new point; stops when it returns true.
    pub(crate) fn run(
        &mut self,
        gen: &Generator,
        y: &mut Operator,
        span: f64,
        mut monitor: impl FnMut(f64, &Operator) -> bool,
    ) -> std::result::Result<Leg, String> {
        if span <= 0.0 {
            return Ok(Leg::Completed);
        }
        gen.apply(y, &mut self.k[0], &mut self.tmp);
        let mut t = 0.0;
        let mut h = match self.h {
            Some(h) => h,
            None => {
                let fy = max_abs(&self.k[0]);
                let ys = max_abs(y);
                if fy > 0.0 && ys > 0.0 {
                    0.01 * ys / fy
                } else {
                    span
                }
            }
        };
        let mut count = 0usize;
        while t < span {
            let truncated = h >= span - t;
            let step = if truncated { span - t } else { h };
            for s in 1..7 {
                self.stage.copy_from(y);
                for (r, &a) in A[s].iter().enumerate().take(s) {
                    if a != 0.0 {
                        self.stage.zip_apply(&self.k[r], |x, kv| *x += kv * (a * step));
                    }
                }
                if s == 6 {
                    self.y_new.copy_from(&self.stage);
                }
                gen.apply(&self.stage, &mut self.k[s], &mut self.tmp);
            }
            let ks: Vec<&[C64]> = self.k.iter().map(|m| m.as_slice()).collect();
            let mut err = 0.0_f64;
            for idx in 0..y.len() {
                let mut e = C64::new(0.0, 0.0);
                for (s, &w) in E.iter().enumerate() {
                    if w != 0.0 {
                        e += ks[s][idx] * w;
                    }
                }
                err = err.max(e.norm() * step);
            }
            if err.is_nan() {
                return Err("non-finite values during integration".into());
            }
            let scale = self.tol * max_abs(y).max(max_abs(&self.y_new));
            let ratio = if err == 0.0 { 0.0 } else if scale == 0.0 { f64::INFINITY } else { err / scale };
            count += 1;
            if count > MAX_SUBSTEPS {
                return Err("too many integration sub-steps".into());
            }
            if ratio <= 1.0 {
                t = if truncated { span } else { t + step };
                y.copy_from(&self.y_new);
                self.k.swap(0, 6);
                self.substeps += 1;
                let r = ratio.max(1e-10);
                let fac = (0.9 * r.powf(-0.17) * self.err_prev.powf(0.04)).clamp(0.2, 10.0);
                self.err_prev = r.max(1e-4);
                if !truncated {
                    h = step * fac;
                } else if fac < 1.0 {
                    h = h.min(step * fac);
                }
                self.h = Some(h);
                if monitor(t, &self.k[0]) {
                    return Ok(Leg::Stopped(t));
                }
            } else {
                h = step * (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9);
                self.h = Some(h);
            }
        }
        Ok(Leg::Completed)
    }
}

/// Integration accuracy knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    /// Relative local error tolerance per sub-step (max-entry norm).
    pub tol: f64,
    /// Check positivity of every forward snapshot (otherwise only the last).
    pub check_every_positivity: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { tol: 1e-10, check_every_positivity: true }
    }
}

/// Snapshots at all grid points, `states[j]` belonging to `t_j`.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub grid: TimeGrid,
    pub states: Vec<S>,
}

impl<S> Trajectory<S> {
    pub fn last(&self) -> &S {
        self.states.last().expect("trajectory has at least one state")
    }
}

pub(crate) fn check_snapshot(m: &Operator, step: usize, positivity: bool) -> Result<()> {
    let tr = m.trace();
    if (tr.re - 1.0).abs() > TRACE_DRIFT_TOL || tr.im.abs() > TRACE_DRIFT_TOL {
        return Err(Error::PropagationAccuracy { step, reason: format!("trace drifted to {tr}") });
    }
    let herm = hermiticity_defect(m);
    if herm > HERMITICITY_DRIFT_TOL {
        return Err(Error::PropagationAccuracy { step, reason: format!("Hermiticity defect {herm:e}") });
    }
    if positivity {
        let min = min_eigenvalue(m);
        if min < -POSITIVITY_TOL {
            return Err(Error::PropagationAccuracy { step, reason: format!("eigenvalue {min:e}") });
        }
    }
    Ok(())
}

fn accuracy_err(step: usize) -> impl Fn(String) -> Error {
    move |reason| Error::PropagationAccuracy { step, reason }
}

pub fn propagate_forward(
    model: &SystemModel,
    controls: &ControlSet,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
) -> Result<Trajectory<DensityMatrix>> {
    propagate_forward_with(model, controls, rho0, grid, &PropagationOptions::default())
}

pub fn propagate_forward_with(
    model: &SystemModel,
    controls: &ControlSet,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<Trajectory<DensityMatrix>> {
    controls.check_against(model, grid)?;
    if rho0.dim() != model.dim() {
        return invalid("initial state dimension does not match the model");
    }
    let n = grid.n_steps();
    let mut dopri = Dopri::new(model.dim(), opts.tol);
    let mut states = Vec::with_capacity(n + 1);
    states.push(rho0.clone());
    let mut y = rho0.matrix().clone();
    for j in 0..n {
        let gen = model.generator(&controls.values_at(j), false);
        dopri.advance(&gen, &mut y, grid.dt()).map_err(accuracy_err(j))?;
        check_snapshot(&y, j + 1, opts.check_every_positivity || j + 1 == n)?;
        states.push(DensityMatrix::from_trusted(y.clone()));
    }
    Ok(Trajectory { grid: *grid, states })
}

/// Integrates the co-state from `chi(T) = chi_t` down to `t = 0`.
pub fn propagate_backward(
    model: &SystemModel,
    controls: &ControlSet,
    chi_t: &CoState,
    grid: &TimeGrid,
) -> Result<Trajectory<CoState>> {
    propagate_backward_with(model, controls, chi_t, grid, &PropagationOptions::default())
}

pub fn propagate_backward_with(
    model: &SystemModel,
    controls: &ControlSet,
    chi_t: &CoState,
    grid: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<Trajectory<CoState>> {
    controls.check_against(model, grid)?;
    if chi_t.dim() != model.dim() {
        return invalid("co-state dimension does not match the model");
    }
    let n = grid.n_steps();
    let mut dopri = Dopri::new(model.dim(), opts.tol);
    let mut states = vec![CoState::zeros(model.dim()); n + 1];
    states[n] = chi_t.clone();
    let mut y = chi_t.matrix().clone();
    for j in (0..n).rev() {
        // reversed time: d chi / d tau = L' chi
        let gen = model.generator(&controls.values_at(j), true);
        dopri.advance(&gen, &mut y, grid.dt()).map_err(accuracy_err(j))?;
        if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::PropagationAccuracy { step: j, reason: "non-finite co-state".into() });
        }
        states[j] = CoState::from_trusted(y.clone());
    }
    Ok(Trajectory { grid: *grid, states })
}

/// Result of [`steady_state`].
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: DensityMatrix,
    /// `max |d rho / dt|` at the returned state, in units of the generator's
    /// characteristic rate (the largest entry of `H` or `sum L^dagger L`).
    pub residual: f64,
    pub t_elapsed: f64,
}

/// Propagates the model's initial state under constant controls until the
/// relative residual `max |d rho/dt| / rate` drops below `tol` or `t_max` is
/// reached.
pub fn steady_state(model: &SystemModel, values: &[f64], tol: f64, t_max: f64) -> Result<SteadyState> {
    steady_state_from(model, values, model.initial_state(), tol, t_max)
}

pub fn steady_state_from(
    model: &SystemModel,
    values: &[f64],
    rho0: &DensityMatrix,
    tol: f64,
    t_max: f64,
) -> Result<SteadyState> {
    if !(tol > 0.0) {
        return invalid("steady-state tolerance must be positive");
    }
    model.check_values(values)?;
    let gen = model.generator(values, false);
    let n = model.dim();
    let mut y = rho0.matrix().clone();
    let (mut f, mut tmp) = (Operator::zeros(n, n), Operator::zeros(n, n));
    gen.apply(&y, &mut f, &mut tmp);
    let rate = if gen.rate_scale > 0.0 { gen.rate_scale } else { 1.0 };
    let mut residual = max_abs(&f) / rate;
    if residual < tol {
        return Ok(SteadyState { state: rho0.clone(), residual, t_elapsed: 0.0 });
    }
    let mut dopri = Dopri::new(n, PropagationOptions::default().tol);
    let leg = dopri
        .run(&gen, &mut y, t_max, |_, dy| {
            residual = max_abs(dy) / rate;
            residual < tol
        })
        .map_err(accuracy_err(0))?;
    let t_elapsed = match leg {
        Leg::Stopped(t) => t,
        Leg::Completed => {
            return Err(Error::NonConvergence { residual, t_elapsed: t_max });
        }
    };
    check_snapshot(&y, 0, true)?;
    Ok(SteadyState { state: DensityMatrix::from_trusted(y), residual, t_elapsed })
}
