//! Closed-loop event-triggered MPC: forced trigger at k = 0, solve the
//! synthesis SDP at each triggering instant, recover gains, zero-order hold
//! between triggers, true plant saturation, and full trajectory recording.
//!
//! Trigger evaluation at step `k` uses `beta_k` before that step's update
//! (compare-then-update); at a trigger instant the freshly recovered `Phi`
//! takes effect for that step's `beta` update onward.

use nalgebra::{DMatrix, DVector};

use crate::analysis::{
    FeasibilityAudit, SolveDiagnostics, StepRecord, Trajectory, TriggerRecord,
};
use crate::etm::{self, EtmConfig, EtmState};
use crate::linalg::min_eig_sym;
use crate::lmi::{
    self, CostConfig, DecisionVars, LmiBlock, RecoveredController, VarLayout,
};
use crate::model::{
    self, DelayBuffer, DisturbanceSignal, PolytopicModel, SchedulingSignal, SchedulingWeights,
};
use crate::sdp::{self, ConicProgram, SdpSolution, SolveStatus, SolverOptions};
use crate::{Error, Result};

/// Which triggering rule drives control updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtmMode {
    Adaptive,
    Static,
    /// Trigger every step; a baseline isolating the ETM savings.
    PeriodicEveryStep,
}

impl EtmMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EtmMode::Adaptive => "adaptive",
            EtmMode::Static => "static",
            EtmMode::PeriodicEveryStep => "periodic",
        }
    }
}

impl std::str::FromStr for EtmMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "adaptive" => Ok(EtmMode::Adaptive),
            "static" => Ok(EtmMode::Static),
            "periodic" | "periodic-every-step" => Ok(EtmMode::PeriodicEveryStep),
            other => Err(Error::Config(format!(
                "unknown ETM mode '{other}' (expected adaptive | static | periodic)"
            ))),
        }
    }
}

/// A complete simulation description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: PolytopicModel,
    pub cost: CostConfig,
    pub etm: EtmConfig,
    pub mode: EtmMode,
    pub x0: DVector<f64>,
    /// Number of simulated instants; the trajectory covers `k = 0..steps-1`.
    pub steps: usize,
    pub disturbance: DisturbanceSignal,
    pub scheduling: SchedulingSignal,
    /// Optional explicit pre-initial history `(x_{-1}, .., x_{-tau_l})`;
    /// default replicates `x0`.
    pub initial_history: Option<Vec<DVector<f64>>>,
    /// Steady-state threshold used by reporting.
    pub zeta: f64,
    /// Display scale for converting steps to time.
    pub sample_time: f64,
    pub solver: SolverOptions,
}

impl Scenario {
    /// Hard validation of everything a run depends on.
    pub fn validate(&self) -> Result<()> {
        if self.x0.len() != self.model.n_x {
            return Err(Error::Dimension(format!(
                "x0 has dimension {}, model n_x = {}",
                self.x0.len(),
                self.model.n_x
            )));
        }
        if self.steps == 0 {
            return Err(Error::Parameter("steps must be >= 1".into()));
        }
        if self.cost.q.nrows() != self.model.n_x || self.cost.r.nrows() != self.model.n_u {
            return Err(Error::Dimension("cost weights sized for a different model".into()));
        }
        self.cost.check_delta_against_mu(self.etm.mu)?;
        if (self.cost.dsq - self.model.d_sq).abs() > 1e-12 * self.model.d_sq {
            return Err(Error::Parameter(format!(
                "cost d^2 = {} disagrees with model d^2 = {}",
                self.cost.dsq, self.model.d_sq
            )));
        }
        if let Some(hist) = &self.initial_history {
            if hist.len() != self.model.max_delay() {
                return Err(Error::Dimension(format!(
                    "initial history must supply {} states, got {}",
                    self.model.max_delay(),
                    hist.len()
                )));
            }
            if hist.iter().any(|x| x.len() != self.model.n_x) {
                return Err(Error::Dimension("initial history entry dimension mismatch".into()));
            }
        }
        if !(self.zeta > 0.0) {
            return Err(Error::Parameter(format!("zeta must be > 0, got {}", self.zeta)));
        }
        if !(self.sample_time > 0.0) {
            return Err(Error::Parameter("sample_time must be > 0".into()));
        }
        // Scripted signals must respect the disturbance budget up front.
        let (ok, worst) =
            model::validate_disturbance_budget(&self.disturbance, &self.model, self.steps)?;
        if !ok {
            return Err(Error::Parameter(format!(
                "disturbance worst-case norm^2 {worst} exceeds d^2 = {}",
                self.model.d_sq
            )));
        }
        Ok(())
    }

    fn initial_buffer(&self) -> DelayBuffer {
        match &self.initial_history {
            None => DelayBuffer::replicate(&self.x0, self.model.max_delay()),
            Some(hist) => {
                let mut h = Vec::with_capacity(hist.len() + 1);
                h.push(self.x0.clone());
                h.extend(hist.iter().cloned());
                DelayBuffer::from_history(h, self.model.max_delay())
                    .expect("validated in Scenario::validate")
            }
        }
    }
}

/// Mutable controller state across one run.
#[derive(Debug, Clone)]
pub struct ControllerState {
    /// Active control gain from the most recent trigger.
    pub f: DMatrix<f64>,
    /// Active auxiliary (hull) gain; never multiplies the applied input.
    pub h: DMatrix<f64>,
    /// Held pre-saturation input `F x_{k_t}`.
    pub u_held: DVector<f64>,
    /// Packed previous solution, used for warm starts and audits.
    pub last_solution: Option<Vec<f64>>,
    pub etm: EtmState,
}

/// Outcome of one synthesis solve.
#[derive(Debug, Clone)]
pub struct TriggerSolve {
    pub vars: DecisionVars,
    pub recovered: RecoveredController,
    pub gamma: f64,
    pub solution: SdpSolution,
}

/// Solve the synthesis SDP at a triggering instant: assemble the four
/// families at the current state and `beta`, minimize gamma, recover the
/// gains.
pub fn solve_at_trigger(
    static_blocks: &[LmiBlock],
    layout: &VarLayout,
    buffer: &DelayBuffer,
    beta: f64,
    options: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<TriggerSolve> {
    if beta < 0.0 {
        return Err(Error::Parameter(format!("beta = {beta} negative at trigger")));
    }
    let state_block = lmi::assemble_lmi_state_bound(layout, buffer, beta)?;
    let mut blocks: Vec<_> = static_blocks.iter().map(|b| b.block.clone()).collect();
    blocks.push(state_block.block.clone());
    let program = ConicProgram::minimize_first(layout.n_vars(), blocks);
    let solution = sdp::solve(&program, options, warm_start)?;
    match solution.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Solver(format!(
                "synthesis SDP infeasible (certificate measure {:?})",
                solution.infeasibility
            )));
        }
        SolveStatus::MaxIterations => {
            return Err(Error::Solver(format!(
                "synthesis SDP hit the iteration cap (rel gap {:.3e}, primal {:.3e})",
                solution.rel_gap, solution.primal_residual
            )));
        }
        SolveStatus::NumericalFailure => {
            return Err(Error::Solver("synthesis SDP numerical failure".into()));
        }
    }
    let vars = DecisionVars::unpack(layout, &solution.x)?;
    let recovered = lmi::recover_controller(&vars)?;
    Ok(TriggerSolve {
        gamma: vars.gamma,
        vars,
        recovered,
        solution,
    })
}

/// The state-independent constraint blocks (everything except the state
/// bound), assembled once per scenario.
pub fn static_constraint_blocks(scenario: &Scenario) -> Result<Vec<LmiBlock>> {
    let layout = VarLayout::new(scenario.model.n_x, scenario.model.n_u);
    let mut blocks =
        lmi::assemble_lmi_cost_decrease(&scenario.model, &scenario.cost, scenario.etm.theta)?;
    blocks.extend(lmi::assemble_lmi_saturation_rows(&layout, scenario.model.u_sat)?);
    blocks.extend(lmi::assemble_lmi_invariance(
        &scenario.model,
        scenario.etm.theta,
        scenario.cost.delta,
        scenario.etm.mu,
        scenario.cost.dsq,
    )?);
    blocks.extend(lmi::assemble_pd_margins(&layout));
    Ok(blocks)
}

fn audit_previous_solution(
    static_blocks: &[LmiBlock],
    layout: &VarLayout,
    buffer: &DelayBuffer,
    beta: f64,
    previous: &[f64],
) -> Result<FeasibilityAudit> {
    let state_block = lmi::assemble_lmi_state_bound(layout, buffer, beta)?;
    let state_eig = min_eig_sym(&state_block.block.eval(previous));
    let mut static_eig = f64::INFINITY;
    for b in static_blocks {
        static_eig = static_eig.min(min_eig_sym(&b.block.eval(previous)));
    }
    let tol = 1e-6;
    Ok(FeasibilityAudit {
        state_bound_min_eig: state_eig,
        static_min_eig: static_eig,
        pass: state_eig >= -tol && static_eig >= -tol,
    })
}

/// Row-wise `max_i |h_i^T x|` of the auxiliary gain at the current state.
fn h_row_max(h: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let v = h * x;
    v.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
}

/// Run the closed loop over the scenario horizon.
pub fn run(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    if scenario.model.n_delays() != 1 {
        return Err(Error::Synthesis(
            "closed-loop synthesis requires a single state delay".into(),
        ));
    }
    let model = &scenario.model;
    let layout = VarLayout::new(model.n_x, model.n_u);
    let horizon = scenario.steps;
    let omega_seq = scenario.disturbance.realize(model, horizon)?;
    let alpha_seq = scenario.scheduling.realize(model.n_vertices(), horizon)?;
    let static_blocks = static_constraint_blocks(scenario)?;

    // Static and periodic baselines run with beta pinned to zero, which
    // reduces the Lyapunov function to its quadratic part.
    let adaptive = scenario.mode == EtmMode::Adaptive;
    let mut beta = if adaptive { scenario.etm.beta0 } else { 0.0 };

    let mut buffer = scenario.initial_buffer();
    let initial_history: Vec<DVector<f64>> =
        (0..buffer.len()).map(|i| buffer.delayed(i).clone()).collect();

    let mut steps: Vec<StepRecord> = Vec::with_capacity(horizon);
    let mut triggers: Vec<TriggerRecord> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let mut certified = true;
    let mut ctrl: Option<ControllerState> = None;

    for k in 0..horizon {
        let x_k = buffer.current().clone();

        let wants_trigger = match (&ctrl, scenario.mode) {
            (None, _) => true, // forced trigger at k = 0
            (Some(_), EtmMode::PeriodicEveryStep) => true,
            (Some(c), EtmMode::Adaptive) => etm::should_trigger(&c.etm, &scenario.etm, &x_k)?,
            (Some(c), EtmMode::Static) => {
                etm::static_should_trigger(&c.etm, scenario.etm.theta, &x_k)?
            }
        };

        let mut triggered = false;
        if wants_trigger {
            let warm = ctrl.as_ref().and_then(|c| c.last_solution.as_deref());
            match solve_at_trigger(&static_blocks, &layout, &buffer, beta, &scenario.solver, warm)
            {
                Ok(solve) => {
                    // Recursive-feasibility audit of the previous solution
                    // against the new state's constraint set.
                    let audit = match &ctrl {
                        Some(c) => match c.last_solution.as_deref() {
                            Some(prev) => {
                                let a = audit_previous_solution(
                                    &static_blocks,
                                    &layout,
                                    &buffer,
                                    beta,
                                    prev,
                                )?;
                                if !a.pass {
                                    certified = false;
                                    notes.push(format!(
                                        "recursive feasibility audit failed at k = {k} \
                                         (state bound {:.3e}, static {:.3e})",
                                        a.state_bound_min_eig, a.static_min_eig
                                    ));
                                }
                                Some(a)
                            }
                            None => None,
                        },
                        None => None,
                    };
                    let u_held = &solve.recovered.f * &x_k;
                    let etm_state = EtmState::at_trigger(
                        beta,
                        x_k.clone(),
                        k,
                        solve.recovered.phi.clone(),
                    )?;
                    triggers.push(TriggerRecord {
                        k,
                        gamma: solve.gamma,
                        vars: solve.vars.clone(),
                        f: solve.recovered.f.clone(),
                        h: solve.recovered.h.clone(),
                        phi: solve.recovered.phi.clone(),
                        p: solve.recovered.p.clone(),
                        p_tau: solve.recovered.p_tau.clone(),
                        diagnostics: SolveDiagnostics {
                            status: solve.solution.status,
                            iterations: solve.solution.iterations,
                            primal_residual: solve.solution.primal_residual,
                            dual_residual: solve.solution.dual_residual,
                            rel_gap: solve.solution.rel_gap,
                            min_block_eig: solve.solution.min_block_eig,
                        },
                        audit,
                    });
                    ctrl = Some(ControllerState {
                        f: solve.recovered.f,
                        h: solve.recovered.h,
                        u_held,
                        last_solution: Some(solve.solution.x),
                        etm: etm_state,
                    });
                    triggered = true;
                }
                Err(Error::Solver(msg)) => {
                    // Graceful degradation: hold the previous input, flag
                    // the run, retry at the next mandated trigger.
                    match &ctrl {
                        Some(_) => {
                            certified = false;
                            notes.push(format!("solve failed at k = {k}: {msg}"));
                        }
                        None => {
                            return Err(Error::Solver(format!(
                                "initial solve at k = 0 failed: {msg}"
                            )));
                        }
                    }
                }
                Err(e) => return Err(e),
            }
        }

        let c = ctrl.as_mut().expect("controller exists after k = 0");
        let u_pre = c.u_held.clone();
        let u_post = model::saturate(&u_pre, model.u_sat);

        if beta < -1e-12 {
            certified = false;
            notes.push(format!("beta went negative at k = {k}: {beta}"));
        }

        // Hull precondition |h_i^T x| <= u_sat must hold along the run for
        // the saturation representation to be valid.
        let h_max = h_row_max(&c.h, &x_k);
        if h_max > model.u_sat * (1.0 + 1e-6) {
            certified = false;
            notes.push(format!(
                "saturation-hull precondition violated at k = {k}: max |h_i^T x| = {h_max} > u_sat"
            ));
        }

        steps.push(StepRecord {
            k,
            x: x_k.clone(),
            u_pre: u_pre.clone(),
            u_post,
            omega: omega_seq[k].clone(),
            alpha: alpha_seq[k].as_slice().to_vec(),
            beta,
            triggered,
            trigger_idx: triggers.len() - 1,
            h_row_max: h_max,
        });

        // beta update with the Phi of the interval this step belongs to;
        // at a trigger instant that is the freshly recovered Phi. The
        // invariant here is c.etm.beta == beta_k (set either at the trigger
        // or at the end of the previous iteration).
        beta = if adaptive {
            etm::update_beta(&c.etm, &scenario.etm, &x_k)
        } else {
            0.0
        };
        c.etm.beta = beta;

        if k + 1 < horizon {
            buffer = model::step(model, &buffer, &u_pre, &omega_seq[k], &alpha_seq[k])?;
        }
    }

    let traj = Trajectory {
        steps,
        triggers,
        initial_history,
        tau1: model.max_delay(),
        certified,
        notes,
    };
    traj.check_structure()?;
    Ok(traj)
}

/// Convenience: run the same scenario under a different triggering mode.
pub fn run_with_mode(scenario: &Scenario, mode: EtmMode) -> Result<Trajectory> {
    let mut s = scenario.clone();
    s.mode = mode;
    run(&s)
}

/// The `alpha` sequences two modes see must coincide for fair comparisons;
/// re-expose the realization for callers that precompute.
pub fn realize_signals(
    scenario: &Scenario,
) -> Result<(Vec<DVector<f64>>, Vec<SchedulingWeights>)> {
    let w = scenario.disturbance.realize(&scenario.model, scenario.steps)?;
    let a = scenario
        .scheduling
        .realize(scenario.model.n_vertices(), scenario.steps)?;
    Ok((w, a))
}
