//! Certificate and metric evaluation on recorded closed-loop trajectories:
//! Lyapunov-Krasovskii values, per-step decrease residuals, invariant-set
//! membership, triggering statistics, steady-state time, and gain norms.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{is_spd, weighted_norm_sq};
use crate::lmi::{CostConfig, DecisionVars};
use crate::model::DelayBuffer;
use crate::sdp::SolveStatus;
use crate::{Error, Result};

/// One simulated step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub x: DVector<f64>,
    /// Held input before plant saturation (`F x_{k_t}` of the active gain).
    pub u_pre: DVector<f64>,
    /// Applied input after plant saturation.
    pub u_post: DVector<f64>,
    pub omega: DVector<f64>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub triggered: bool,
    /// Index into [`Trajectory::triggers`] of the snapshot active at this
    /// step (the most recent trigger at or before `k`).
    pub trigger_idx: usize,
    /// `max_i |h_i^T x_k|` with the active auxiliary gain, logged against
    /// the saturation-hull precondition.
    pub h_row_max: f64,
}

/// Condensed solver diagnostics stored per trigger.
#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
    pub min_block_eig: f64,
}

/// Result of auditing the previous trigger's solution against the new
/// state's constraint set (recursive feasibility).
#[derive(Debug, Clone)]
pub struct FeasibilityAudit {
    /// Min eigenvalue of the new state-bound block at the previous solution.
    pub state_bound_min_eig: f64,
    /// Min eigenvalue across the state-independent blocks.
    pub static_min_eig: f64,
    pub pass: bool,
}

/// One triggering instant with the solved decision variables and recovered
/// matrices.
#[derive(Debug, Clone)]
pub struct TriggerRecord {
    pub k: usize,
    pub gamma: f64,
    pub vars: DecisionVars,
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub p_tau: DMatrix<f64>,
    pub diagnostics: SolveDiagnostics,
    /// Recursive-feasibility audit; absent for the forced trigger at k = 0.
    pub audit: Option<FeasibilityAudit>,
}

/// Time-indexed record of a closed-loop run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub triggers: Vec<TriggerRecord>,
    /// Delay-buffer contents at step 0, newest first (defines the
    /// pre-initial history used to rebuild buffers).
    pub initial_history: Vec<DVector<f64>>,
    /// Single synthesis delay `tau_1`.
    pub tau1: usize,
    /// False when any solve failed or a certificate was violated online.
    pub certified: bool,
    pub notes: Vec<String>,
}

impl Trajectory {
    /// Final step index `k_f`.
    pub fn k_f(&self) -> usize {
        self.steps.len().saturating_sub(1)
    }

    /// Trigger instants in chronological order.
    pub fn trigger_instants(&self) -> Vec<usize> {
        self.triggers.iter().map(|t| t.k).collect()
    }

    /// Rebuild the delay buffer `(x_k, ..., x_{k-tau1})` at step `k`,
    /// falling back to the recorded pre-initial history for negative
    /// indices.
    pub fn buffer_at(&self, k: usize) -> Result<DelayBuffer> {
        if k >= self.steps.len() {
            return Err(Error::Dimension(format!(
                "step {k} outside trajectory of length {}",
                self.steps.len()
            )));
        }
        let mut hist = Vec::with_capacity(self.tau1 + 1);
        for back in 0..=self.tau1 {
            if back <= k {
                hist.push(self.steps[k - back].x.clone());
            } else {
                // Index into the pre-initial history: buffer_at(0) equals
                // initial_history exactly.
                let idx = back - k;
                if idx >= self.initial_history.len() {
                    return Err(Error::Dimension(
                        "pre-initial history shorter than tau_1".into(),
                    ));
                }
                hist.push(self.initial_history[idx].clone());
            }
        }
        DelayBuffer::from_history(hist, self.tau1)
    }

    /// Basic structural invariants: contiguous indices, forced first
    /// trigger, trigger instants within range.
    pub fn check_structure(&self) -> Result<()> {
        for (i, s) in self.steps.iter().enumerate() {
            if s.k != i {
                return Err(Error::Dimension(format!(
                    "step record {i} carries index {}",
                    s.k
                )));
            }
        }
        if self.triggers.first().map(|t| t.k) != Some(0) {
            return Err(Error::Parameter("trigger log must start at k = 0".into()));
        }
        for t in &self.triggers {
            if t.k >= self.steps.len() {
                return Err(Error::Parameter(format!(
                    "trigger at {} outside horizon",
                    t.k
                )));
            }
        }
        Ok(())
    }
}

/// Value of the Lyapunov-Krasovskii-like function split into its parts.
#[derive(Debug, Clone, Copy)]
pub struct VFunctionValue {
    pub total: f64,
    pub quadratic: f64,
    pub beta: f64,
}

/// `V = x^T P x + sum_{rho=1}^{tau1} x_{-rho}^T P_tau x_{-rho} + beta`.
pub fn lyapunov_value(
    buffer: &DelayBuffer,
    p: &DMatrix<f64>,
    p_tau: &DMatrix<f64>,
    beta: f64,
) -> Result<VFunctionValue> {
    if !is_spd(p) || !is_spd(p_tau) {
        return Err(Error::Parameter(
            "P and P_tau must be symmetric positive definite".into(),
        ));
    }
    if beta < 0.0 {
        return Err(Error::Parameter(format!("beta = {beta} negative")));
    }
    let tau1 = buffer.len() - 1;
    let mut quadratic = weighted_norm_sq(buffer.current(), p);
    for rho in 1..=tau1 {
        quadratic += weighted_norm_sq(buffer.delayed(rho), p_tau);
    }
    Ok(VFunctionValue {
        total: quadratic + beta,
        quadratic,
        beta,
    })
}

/// Per-step decrease residual.
#[derive(Debug, Clone, Copy)]
pub struct DecreaseResidual {
    pub k: usize,
    /// `V_{k+1} - V_k + |x_k|^2_Q + |u_k|^2_R - varphi |w_k|^2`, evaluated
    /// with the matrices of the trigger interval containing `k`.
    pub residual: f64,
    pub v_k: f64,
}

/// Decrease residuals over `window` (default: every step with a successor).
/// Certified runs satisfy `residual <= tol * (1 + V_k)` throughout. The
/// input weight applies to the post-saturation input, which is what the
/// synthesis hull represents.
pub fn check_decrease_condition(
    traj: &Trajectory,
    cost: &CostConfig,
    window: Option<std::ops::Range<usize>>,
) -> Result<Vec<DecreaseResidual>> {
    let k_f = traj.k_f();
    let range = window.unwrap_or(0..k_f);
    if range.end > k_f {
        return Err(Error::Dimension(format!(
            "window end {} exceeds last checkable step {k_f}",
            range.end
        )));
    }
    let mut out = Vec::with_capacity(range.len());
    for k in range {
        let snap = &traj.triggers[traj.steps[k].trigger_idx];
        let v_k = lyapunov_value(&traj.buffer_at(k)?, &snap.p, &snap.p_tau, traj.steps[k].beta)?;
        let v_next = lyapunov_value(
            &traj.buffer_at(k + 1)?,
            &snap.p,
            &snap.p_tau,
            traj.steps[k + 1].beta,
        )?;
        let s = &traj.steps[k];
        let stage = weighted_norm_sq(&s.x, &cost.q) + weighted_norm_sq(&s.u_post, &cost.r)
            - cost.varphi * s.omega.norm_squared();
        out.push(DecreaseResidual {
            k,
            residual: v_next.total - v_k.total + stage,
            v_k: v_k.total,
        });
    }
    Ok(out)
}

/// Per-step invariant-set membership.
#[derive(Debug, Clone, Copy)]
pub struct InvariantMembership {
    pub k: usize,
    /// `z_k^T Pbar* z_k + beta_k`.
    pub value: f64,
    /// The active trigger's optimal cost bound.
    pub gamma: f64,
    pub pass: bool,
}

/// Membership of every step in the invariant set of its trigger interval:
/// `z^T Pbar* z + beta <= gamma* (1 + rel_tol)`.
pub fn check_invariant_set(traj: &Trajectory, rel_tol: f64) -> Result<Vec<InvariantMembership>> {
    let mut out = Vec::with_capacity(traj.steps.len());
    for s in &traj.steps {
        let snap = &traj.triggers[s.trigger_idx];
        let v = lyapunov_value(&traj.buffer_at(s.k)?, &snap.p, &snap.p_tau, s.beta)?;
        out.push(InvariantMembership {
            k: s.k,
            value: v.total,
            gamma: snap.gamma,
            pass: v.total <= snap.gamma * (1.0 + rel_tol),
        });
    }
    Ok(out)
}

/// Smallest `k` with `max_{j >= k, i} |x_{i,j}| <= zeta`, computed with a
/// single reverse scan over the suffix maxima.
pub fn steady_state_time(traj: &Trajectory, zeta: f64) -> Result<Option<usize>> {
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!("zeta must be > 0, got {zeta}")));
    }
    let mut suffix_max = f64::NEG_INFINITY;
    let mut k_s = None;
    for s in traj.steps.iter().rev() {
        let step_max = s.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        suffix_max = suffix_max.max(step_max);
        if suffix_max <= zeta {
            k_s = Some(s.k);
        } else {
            break;
        }
    }
    Ok(k_s)
}

/// Triggering statistics: ratio over the horizon, mean inter-event
/// interval, and the interval histogram.
#[derive(Debug, Clone)]
pub struct TriggerStats {
    pub count: usize,
    /// `|S| / (k_f + 1)`.
    pub ratio: f64,
    /// Mean of consecutive trigger differences; `None` with fewer than two
    /// triggers.
    pub average_interval: Option<f64>,
    /// Inter-event interval -> occurrence count.
    pub histogram: BTreeMap<usize, usize>,
}

pub fn trigger_statistics(traj: &Trajectory) -> Result<TriggerStats> {
    if traj.triggers.is_empty() {
        return Err(Error::Parameter("empty trigger log".into()));
    }
    let instants = traj.trigger_instants();
    let horizon = traj.steps.len();
    let mut histogram = BTreeMap::new();
    let mut total = 0usize;
    for w in instants.windows(2) {
        let interval = w[1] - w[0];
        *histogram.entry(interval).or_insert(0) += 1;
        total += interval;
    }
    let average_interval = if instants.len() >= 2 {
        Some(total as f64 / (instants.len() - 1) as f64)
    } else {
        None
    };
    Ok(TriggerStats {
        count: instants.len(),
        ratio: instants.len() as f64 / horizon as f64,
        average_interval,
        histogram,
    })
}

/// Per-trigger Frobenius norms of the control gain and triggering matrix.
pub fn gain_norm_series(traj: &Trajectory) -> Vec<(usize, f64, f64)> {
    traj.triggers
        .iter()
        .map(|t| (t.k, t.f.norm(), t.phi.norm()))
        .collect()
}

/// Render the trajectory as CSV with columns
/// `k, x_1..x_n, u_1..u_m, sat_u_1..sat_u_m, beta, trigger, gamma, normF, normPhi`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n_x = traj.steps.first().map(|s| s.x.len()).unwrap_or(0);
    let n_u = traj.steps.first().map(|s| s.u_pre.len()).unwrap_or(0);
    let mut out = String::new();
    out.push('k');
    for i in 1..=n_x {
        out.push_str(&format!(",x_{i}"));
    }
    for i in 1..=n_u {
        out.push_str(&format!(",u_{i}"));
    }
    for i in 1..=n_u {
        out.push_str(&format!(",sat_u_{i}"));
    }
    out.push_str(",beta,trigger,gamma,normF,normPhi\n");
    for s in &traj.steps {
        let snap = &traj.triggers[s.trigger_idx];
        out.push_str(&format!("{}", s.k));
        for v in s.x.iter() {
            out.push_str(&format!(",{v}"));
        }
        for v in s.u_pre.iter() {
            out.push_str(&format!(",{v}"));
        }
        for v in s.u_post.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(
            ",{},{},{},{},{}\n",
            s.beta,
            u8::from(s.triggered),
            snap.gamma,
            snap.f.norm(),
            snap.phi.norm()
        ));
    }
    out
}
