//! Backward Euler time stepping with adaptive steps and damped Newton
//! iterations on top of the sparse direct solves.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{AssembledSystem, Discretization, FormulationVariant};
use crate::linalg::{reaction_solve, schur_bordered_solve, SkylineCholesky};
use crate::postprocess;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig<T> {
    pub newton_tol_rel: T,
    pub newton_tol_abs: T,
    pub max_newton_iters: usize,
    pub dt_init: T,
    pub dt_min: T,
    pub dt_max: T,
    pub periods: T,
    /// Step length factor applied at each backtracking trial.
    pub damping: T,
}

impl<T: Real> SolverConfig<T> {
    /// Defaults scaled to an excitation period.
    pub fn for_period(period: T) -> Self {
        SolverConfig {
            newton_tol_rel: T::lit(1e-8),
            newton_tol_abs: T::lit(1e-10),
            max_newton_iters: 25,
            dt_init: period / T::lit(1000.0),
            dt_min: period / T::lit(1e6),
            dt_max: period / T::lit(200.0),
            periods: T::lit(2.0),
            damping: T::lit(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: T, name: &str| {
            if x > T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("solver.{name} must be positive, got {x}")))
            }
        };
        pos(self.newton_tol_rel, "newton_tol_rel")?;
        pos(self.newton_tol_abs, "newton_tol_abs")?;
        pos(self.dt_min, "dt_min")?;
        pos(self.periods, "periods")?;
        if self.max_newton_iters == 0 {
            return Err(Error::Config("solver.max_newton_iters must be at least 1".into()));
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::Config("solver time steps must satisfy dt_min <= dt_init <= dt_max".into()));
        }
        if !(self.damping > T::zero() && self.damping < T::one()) {
            return Err(Error::Config(format!("solver.damping must lie in (0, 1), got {}", self.damping)));
        }
        Ok(())
    }
}

/// Safety factor on the rounding error bound of an assembled residual.
pub const ROUNDING_FACTOR: f64 = 64.0;

/// Most step-length halvings tried by the line search.
pub const MAX_BACKTRACKS: usize = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonStats<T> {
    pub iterations: usize,
    /// Scaled residual norm after each iteration, starting with the initial one.
    pub history: Vec<T>,
}

impl<T: Real> NewtonStats<T> {
    pub fn final_residual(&self) -> T {
        self.history.last().copied().unwrap_or(T::zero())
    }
}

/// Normalizes the magnetic rows and the voltage (current) rows separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockScales<T> {
    pub h: T,
    pub v: T,
}

impl<T: Real> BlockScales<T> {
    /// Electric field `e_c` around the mean turn for the magnetic rows, and the
    /// total imposed current for the voltage rows.
    pub fn physical(disc: &Discretization<T>) -> Self {
        let g = &disc.mesh.geometry.params;
        let r_mean = g.inner_radius + T::lit(0.5) * g.stack_thickness();
        let h = disc.materials.e_c * T::lit(4.0) * T::PI() * r_mean;
        let per_row = match disc.variant() {
            FormulationVariant::RefHPhi => T::one(),
            _ => T::from_usize_lossy(g.n_turns),
        };
        let amp = disc.excitation.amplitude.abs();
        let v = if amp > T::zero() { amp * per_row } else { per_row };
        BlockScales { h, v }
    }

    pub fn norm(&self, sys: &AssembledSystem<T>) -> T {
        self.scaled_norm(&sys.residual, sys)
    }

    /// Scaled norm of the rounding error bound of the residual: the smallest
    /// residual the assembly can resolve.
    pub fn noise_floor(&self, sys: &AssembledSystem<T>) -> T {
        T::lit(ROUNDING_FACTOR) * T::epsilon() * self.scaled_norm(&sys.magnitude, sys)
    }

    fn scaled_norm(&self, v: &[T], sys: &AssembledSystem<T>) -> T {
        let mut s = T::zero();
        for (i, r) in v.iter().enumerate() {
            let x = if sys.voltage.contains(&i) { *r / self.v } else { *r / self.h };
            s += x * x;
        }
        s.sqrt()
    }
}

/// Factorization workspace reused across Newton iterations and time steps.
#[derive(Clone, Debug)]
pub struct LinearSolver<T> {
    chol: SkylineCholesky<T>,
    n_h: usize,
    fixed: Vec<usize>,
}

impl<T: Real> LinearSolver<T> {
    pub fn new(disc: &Discretization<T>, template: &AssembledSystem<T>) -> Self {
        let n_h = disc.layout.n_h_dofs();
        let fixed = disc.layout.fixed.clone();
        let mut is_fixed = vec![false; n_h];
        fixed.iter().for_each(|&d| is_fixed[d] = true);
        let subset: Vec<usize> = (0..n_h).filter(|&d| !is_fixed[d]).collect();
        let chol = SkylineCholesky::analyze(&template.jacobian, &subset);
        log::debug!("factor profile {} for {} unknowns", chol.profile(), subset.len());
        LinearSolver { chol, n_h, fixed }
    }

    /// Newton increment `δ` with `J δ = -r`, fixed DoFs held.
    pub fn solve(&mut self, sys: &AssembledSystem<T>) -> Result<Vec<T>> {
        let zero = vec![T::zero(); self.fixed.len()];
        self.solve_prescribed(sys, &zero)
    }

    /// Newton increment with the fixed DoFs moved by `increments`.
    pub fn solve_prescribed(&mut self, sys: &AssembledSystem<T>, increments: &[T]) -> Result<Vec<T>> {
        self.chol.factor(&sys.jacobian)?;
        let rhs: Vec<T> = sys.residual.iter().map(|&r| -r).collect();
        let mut x = self.solve_factored(sys, &rhs, increments)?;
        // one step of iterative refinement
        let ax = sys.jacobian.matvec(&x);
        let mut res: Vec<T> = rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        for &d in &self.fixed {
            res[d] = T::zero();
        }
        let zero = vec![T::zero(); self.fixed.len()];
        let dx = self.solve_factored(sys, &res, &zero)?;
        x.iter_mut().zip(&dx).for_each(|(a, &d)| *a += d);
        Ok(x)
    }

    fn solve_factored(&self, sys: &AssembledSystem<T>, rhs: &[T], increments: &[T]) -> Result<Vec<T>> {
        if self.fixed.is_empty() {
            schur_bordered_solve(&sys.jacobian, &self.chol, self.n_h, rhs)
        } else {
            reaction_solve(&sys.jacobian, &self.chol, self.n_h, &self.fixed, increments, rhs)
        }
    }
}

/// Damped Newton iterations.
///
/// `system_fn` assembles the system at a state and `linear` solves it; `norm`
/// returns the residual norm and the rounding floor of an assembled system.
/// At least `min_iterations` iterations are taken; afterwards the loop stops
/// as soon as the residual is below `max(abs_tol, rel_tol * initial, floor)`.
pub fn newton_solve<T, F, L>(
    mut system_fn: F,
    mut linear: L,
    u0: Vec<T>,
    norm: impl Fn(&AssembledSystem<T>) -> (T, T),
    config: &SolverConfig<T>,
    min_iterations: usize,
) -> Result<(Vec<T>, NewtonStats<T>)>
where
    T: Real,
    F: FnMut(&[T]) -> Result<AssembledSystem<T>>,
    L: FnMut(&AssembledSystem<T>, &[T]) -> Result<Vec<T>>,
{
    let mut u = u0;
    let mut sys = system_fn(&u)?;
    let (mut r, mut floor) = norm(&sys);
    let mut stats = NewtonStats { iterations: 0, history: vec![r] };
    let target = config.newton_tol_abs.max(config.newton_tol_rel * r);
    if !r.is_finite() {
        return Err(Error::NonConvergence { iterations: 0, residual: r.as_f64() });
    }
    while stats.iterations < min_iterations || r > target.max(floor) {
        if stats.iterations >= config.max_newton_iters {
            return Err(Error::NonConvergence { iterations: stats.iterations, residual: r.as_f64() });
        }
        let delta = match linear(&sys, &u) {
            Ok(d) => d,
            // an indefinite tangent at an overshooting iterate
            Err(Error::SingularMatrix { .. }) => {
                return Err(Error::NonConvergence { iterations: stats.iterations, residual: r.as_f64() })
            }
            Err(e) => return Err(e),
        };
        stats.iterations += 1;
        let mut step = T::one();
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let u_try: Vec<T> = u.iter().zip(&delta).map(|(&a, &d)| a + step * d).collect();
            let sys_try = system_fn(&u_try)?;
            let (r_try, floor_try) = norm(&sys_try);
            let converged = r <= target.max(floor);
            if (r_try.is_finite() && r_try < r) || converged {
                accepted = Some((u_try, sys_try, r_try, floor_try));
                break;
            }
            step *= config.damping;
        }
        let Some((u_new, sys_new, r_new, floor_new)) = accepted else {
            return Err(Error::NonConvergence { iterations: stats.iterations, residual: r.as_f64() });
        };
        u = u_new;
        sys = sys_new;
        r = r_new;
        floor = floor_new;
        stats.history.push(r);
    }
    Ok((u, stats))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransientState<T> {
    pub t: T,
    pub dt: T,
    pub u: Vec<T>,
    pub u_prev: Vec<T>,
    pub newton_stats: NewtonStats<T>,
    pub linsys_count: usize,
    pub rejected_steps: usize,
}

impl<T: Real> TransientState<T> {
    pub fn initial(n_dofs: usize, dt: T) -> Self {
        TransientState {
            t: T::zero(),
            dt,
            u: vec![T::zero(); n_dofs],
            u_prev: vec![T::zero(); n_dofs],
            newton_stats: NewtonStats::default(),
            linsys_count: 0,
            rejected_steps: 0,
        }
    }
}

/// Time integrator bound to one discretization.
pub struct Stepper<'a, T: Real> {
    pub disc: &'a Discretization<T>,
    pub config: SolverConfig<T>,
    pub scales: BlockScales<T>,
    linear: LinearSolver<T>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(disc: &'a Discretization<T>, config: SolverConfig<T>) -> Result<Self> {
        config.validate()?;
        let n = disc.n_dofs();
        let zero = vec![T::zero(); n];
        let template = disc.assemble(&zero, &zero, T::zero(), config.dt_init)?;
        let linear = LinearSolver::new(disc, &template);
        Ok(Stepper { disc, config, scales: BlockScales::physical(disc), linear })
    }

    /// Solves one backward Euler step of length `dt` from `u_prev`.
    pub fn solve_step(&mut self, u_prev: &[T], t_new: T, dt: T) -> Result<(Vec<T>, NewtonStats<T>)> {
        let disc = self.disc;
        let scales = self.scales;
        let linear = &mut self.linear;
        // strong current constraints enter through the increments so that the
        // tangent spreads a change of the cut values over the free DoFs
        let targets: Vec<(usize, T)> = disc
            .constraints(t_new)
            .into_iter()
            .filter_map(|c| match (c.strong, c.cut_dof) {
                (true, Some(d)) => Some((d, c.value)),
                _ => None,
            })
            .collect();
        newton_solve(
            |u| disc.assemble(u, u_prev, t_new, dt),
            |sys, u| {
                let inc: Vec<T> = targets.iter().map(|&(d, v)| v - u[d]).collect();
                linear.solve_prescribed(sys, &inc)
            },
            u_prev.to_vec(),
            |sys| (scales.norm(sys), scales.noise_floor(sys)),
            &self.config,
            1,
        )
    }

    /// Advances by one accepted step, halving on Newton failure and growing
    /// after fast convergence. `t_stop` caps the step end.
    pub fn step(&mut self, state: &TransientState<T>, t_stop: T) -> Result<TransientState<T>> {
        let cfg = self.config.clone();
        let mut dt = state.dt.min(cfg.dt_max);
        let mut linsys = state.linsys_count;
        let mut rejected = state.rejected_steps;
        loop {
            let remaining = t_stop - state.t;
            let (dt_try, clipped) = if dt >= remaining - cfg.dt_min { (remaining, true) } else { (dt, false) };
            match self.solve_step(&state.u, state.t + dt_try, dt_try) {
                Ok((u, stats)) => {
                    linsys += stats.iterations;
                    let mut next_dt = dt;
                    if stats.iterations <= 3 {
                        next_dt = (dt * T::lit(1.2)).min(cfg.dt_max);
                    }
                    if clipped {
                        next_dt = next_dt.max(dt_try);
                    }
                    return Ok(TransientState {
                        t: state.t + dt_try,
                        dt: next_dt,
                        u,
                        u_prev: state.u.clone(),
                        newton_stats: stats,
                        linsys_count: linsys,
                        rejected_steps: rejected,
                    });
                }
                Err(Error::NonConvergence { iterations, residual }) => {
                    linsys += iterations;
                    rejected += 1;
                    dt = dt_try * T::lit(0.5);
                    log::debug!("step at t={} rejected (residual {residual:e}), dt -> {}", state.t, dt);
                    if dt < cfg.dt_min {
                        log::error!(
                            "time step underflow at t={}: dt={} < dt_min={}, last residual {residual:e}, {} DoFs",
                            state.t,
                            dt,
                            cfg.dt_min,
                            state.u.len()
                        );
                        return Err(Error::DtUnderflow { t: state.t.as_f64(), dt: dt.as_f64(), dt_min: cfg.dt_min.as_f64() });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Recorded history of a transient run.
#[derive(Clone, Debug, Default)]
pub struct SolutionTrace<T> {
    pub variant: Option<FormulationVariant>,
    pub times: Vec<T>,
    /// Instantaneous losses of the whole coil [W].
    pub losses: Vec<T>,
    /// Imposed current per turn [A].
    pub currents: Vec<T>,
    pub newton_iters: Vec<usize>,
    pub dts: Vec<T>,
    /// Current through each radial slice of the coil (per turn for the
    /// detailed model) [A].
    pub slice_currents: Vec<Vec<T>>,
    /// Field circulation around the coil [A].
    pub circulation: Vec<T>,
    /// Largest |j| / jc over the coil.
    pub max_j_ratio: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub final_state: Vec<T>,
    /// State at the largest current magnitude of the last period.
    pub peak_snapshot: Option<(T, Vec<T>)>,
    pub linsys_count: usize,
    pub rejected_steps: usize,
    pub n_dofs: usize,
    pub wall_seconds: f64,
}

impl<T: Real> SolutionTrace<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn record(&mut self, disc: &Discretization<T>, t: T, u: &[T], iters: usize, dt: T, keep_state: bool) {
        self.times.push(t);
        self.losses.push(disc.instantaneous_losses(u));
        self.currents.push(disc.excitation.current(t));
        self.newton_iters.push(iters);
        self.dts.push(dt);
        self.slice_currents.push(postprocess::slice_currents(disc, u));
        self.circulation.push(postprocess::coil_circulation(disc, u));
        self.max_j_ratio.push(postprocess::max_current_ratio(disc, u));
        if keep_state {
            self.states.push(u.to_vec());
        }
    }
}

/// Runs `config.periods` excitation periods from the zero state.
pub fn run_transient<T: Real>(disc: &Discretization<T>, config: &SolverConfig<T>, keep_states: bool) -> Result<SolutionTrace<T>> {
    let start = Instant::now();
    let mut stepper = Stepper::new(disc, config.clone())?;
    let t_end = config.periods * disc.excitation.period();
    let mut state = TransientState::initial(disc.n_dofs(), config.dt_init);
    let mut trace = SolutionTrace { variant: Some(disc.variant()), n_dofs: disc.n_dofs(), ..Default::default() };
    trace.record(disc, state.t, &state.u, 0, T::zero(), keep_states);
    let mut n_steps = 0usize;
    while t_end - state.t > config.dt_min {
        let next = stepper.step(&state, t_end)?;
        n_steps += 1;
        let dt_taken = next.t - state.t;
        log::debug!(
            "step {n_steps}: t={:.6e} dt={:.3e} newton={} residual={:.3e}",
            next.t.as_f64(),
            dt_taken.as_f64(),
            next.newton_stats.iterations,
            next.newton_stats.final_residual().as_f64()
        );
        trace.record(disc, next.t, &next.u, next.newton_stats.iterations, dt_taken, keep_states);
        if next.t >= t_end - disc.excitation.period() {
            let i_now = disc.excitation.current(next.t).abs();
            let better = match &trace.peak_snapshot {
                Some((t_best, _)) => i_now > disc.excitation.current(*t_best).abs(),
                None => true,
            };
            if better {
                trace.peak_snapshot = Some((next.t, next.u.clone()));
            }
        }
        state = next;
    }
    trace.linsys_count = state.linsys_count;
    trace.rejected_steps = state.rejected_steps;
    trace.final_state = state.u;
    trace.wall_seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{}: {} steps, {} linear solves, {} rejected, {:.2} s",
        disc.variant(),
        n_steps,
        trace.linsys_count,
        trace.rejected_steps,
        trace.wall_seconds
    );
    Ok(trace)
}
