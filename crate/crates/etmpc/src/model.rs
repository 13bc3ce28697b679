//! Disturbed polytopic LPV time-delay plant with actuator saturation.
//!
//! The plant is
//!
//! ```text
//! x_{k+1} = A(k) x_k + sum_rho Atilde_rho(k) x_{k-tau_rho} + B(k) sat(u_k) + D w_k
//! ```
//!
//! with `[A(k), Atilde_1(k), .., B(k)]` a convex combination of `L` vertex
//! matrix tuples, `w_k^T w_k <= d^2`, and component-wise input saturation at
//! `u_sat`. Model and signal descriptions are immutable after construction;
//! a [`DelayBuffer`] is owned by exactly one simulation at a time.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One vertex of the matrix polytope: `A^v`, the delayed matrices
/// `Atilde_rho^v` (one per delay channel) and `B^v`.
#[derive(Debug, Clone)]
pub struct VertexMatrices {
    pub a: DMatrix<f64>,
    pub a_delay: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
}

/// The polytopic LPV time-delay plant description.
#[derive(Debug, Clone)]
pub struct PolytopicModel {
    pub n_x: usize,
    pub n_u: usize,
    pub n_w: usize,
    /// Delay steps `tau_1 < tau_2 < ... < tau_l`, all >= 1.
    pub delays: Vec<usize>,
    pub vertices: Vec<VertexMatrices>,
    /// Disturbance input matrix `D` (`n_x x n_w`).
    pub d_matrix: DMatrix<f64>,
    /// Component-wise input saturation magnitude.
    pub u_sat: f64,
    /// Squared disturbance norm bound `d^2`.
    pub d_sq: f64,
}

impl PolytopicModel {
    pub fn new(
        delays: Vec<usize>,
        vertices: Vec<VertexMatrices>,
        d_matrix: DMatrix<f64>,
        u_sat: f64,
        d_sq: f64,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::Parameter("at least one vertex required".into()));
        }
        let n_x = vertices[0].a.nrows();
        let n_u = vertices[0].b.ncols();
        let n_w = d_matrix.ncols();
        if n_x == 0 || n_u == 0 || n_w == 0 {
            return Err(Error::Dimension("n_x, n_u, n_w must be positive".into()));
        }
        if delays.is_empty() {
            return Err(Error::Parameter("at least one delay channel required".into()));
        }
        for w in delays.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Parameter(format!(
                    "delays must be strictly increasing, got {:?}",
                    delays
                )));
            }
        }
        if delays[0] < 1 {
            return Err(Error::Parameter("delays must all be >= 1".into()));
        }
        for (v, vm) in vertices.iter().enumerate() {
            if vm.a.nrows() != n_x || vm.a.ncols() != n_x {
                return Err(Error::Dimension(format!("vertex {v}: A must be {n_x}x{n_x}")));
            }
            if vm.a_delay.len() != delays.len() {
                return Err(Error::Dimension(format!(
                    "vertex {v}: expected {} delayed matrices, got {}",
                    delays.len(),
                    vm.a_delay.len()
                )));
            }
            for (rho, ad) in vm.a_delay.iter().enumerate() {
                if ad.nrows() != n_x || ad.ncols() != n_x {
                    return Err(Error::Dimension(format!(
                        "vertex {v}: Atilde_{} must be {n_x}x{n_x}",
                        rho + 1
                    )));
                }
            }
            if vm.b.nrows() != n_x || vm.b.ncols() != n_u {
                return Err(Error::Dimension(format!("vertex {v}: B must be {n_x}x{n_u}")));
            }
        }
        if d_matrix.nrows() != n_x {
            return Err(Error::Dimension(format!("D must have {n_x} rows")));
        }
        if !(u_sat > 0.0) {
            return Err(Error::Parameter(format!("u_sat must be > 0, got {u_sat}")));
        }
        if !(d_sq > 0.0) {
            return Err(Error::Parameter(format!("d^2 must be > 0, got {d_sq}")));
        }
        Ok(Self {
            n_x,
            n_u,
            n_w,
            delays,
            vertices,
            d_matrix,
            u_sat,
            d_sq,
        })
    }

    /// Number of polytope vertices `L`.
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Number of delay channels `l`.
    pub fn n_delays(&self) -> usize {
        self.delays.len()
    }

    /// Largest delay `tau_l`.
    pub fn max_delay(&self) -> usize {
        *self.delays.last().expect("at least one delay")
    }

    /// Disturbance norm bound `d` (= sqrt(d^2)).
    pub fn d_bound(&self) -> f64 {
        self.d_sq.sqrt()
    }
}

/// Convex scheduling weights `alpha`: each in `[0, 1]`, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulingWeights(Vec<f64>);

impl SchedulingWeights {
    const SUM_TOL: f64 = 1e-12;

    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Parameter("weights must be non-empty".into()));
        }
        for (i, a) in alpha.iter().enumerate() {
            if !(*a >= 0.0 && *a <= 1.0) {
                return Err(Error::Parameter(format!(
                    "alpha[{i}] = {a} outside [0, 1]"
                )));
            }
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::Parameter(format!(
                "weights sum to {sum}, expected 1 within {:e}",
                Self::SUM_TOL
            )));
        }
        Ok(Self(alpha))
    }

    /// The degenerate weight vector selecting vertex `v` out of `l`.
    pub fn vertex(v: usize, l: usize) -> Self {
        let mut w = vec![0.0; l];
        w[v] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Matrices realized at a specific scheduling point.
#[derive(Debug, Clone)]
pub struct RealizedMatrices {
    pub a: DMatrix<f64>,
    pub a_delay: Vec<DMatrix<f64>>,
    pub b: DMatrix<f64>,
}

/// `A(alpha) = sum_v alpha_v A^v`, likewise for the delayed matrices and `B`.
/// The result lies in the model polytope by construction.
pub fn evaluate_matrices(
    model: &PolytopicModel,
    alpha: &SchedulingWeights,
) -> Result<RealizedMatrices> {
    if alpha.len() != model.n_vertices() {
        return Err(Error::Dimension(format!(
            "scheduling weights have length {}, model has {} vertices",
            alpha.len(),
            model.n_vertices()
        )));
    }
    let mut a = DMatrix::zeros(model.n_x, model.n_x);
    let mut a_delay = vec![DMatrix::zeros(model.n_x, model.n_x); model.n_delays()];
    let mut b = DMatrix::zeros(model.n_x, model.n_u);
    for (w, vm) in alpha.as_slice().iter().zip(&model.vertices) {
        a += &vm.a * *w;
        for (acc, ad) in a_delay.iter_mut().zip(&vm.a_delay) {
            *acc += ad * *w;
        }
        b += &vm.b * *w;
    }
    Ok(RealizedMatrices { a, a_delay, b })
}

/// Component-wise saturation `sign(u_i) * min(u_sat, |u_i|)`.
pub fn saturate(u: &DVector<f64>, u_sat: f64) -> DVector<f64> {
    u.map(|v| v.clamp(-u_sat, u_sat))
}

/// Ordered history of the last `tau_l + 1` states, newest first:
/// `(x_k, x_{k-1}, ..., x_{k-tau_l})`.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    history: Vec<DVector<f64>>,
}

impl DelayBuffer {
    /// Buffer with `x0` replicated across the whole history. This is the
    /// default pre-initial history: the plant equations never define
    /// `x_{-1} .. x_{-tau_l}`, and replication keeps the initial
    /// Lyapunov value finite and reproducible.
    pub fn replicate(x0: &DVector<f64>, max_delay: usize) -> Self {
        Self {
            history: vec![x0.clone(); max_delay + 1],
        }
    }

    /// Buffer from an explicit history, newest first. Length must be
    /// `max_delay + 1` and all entries dimension-consistent.
    pub fn from_history(history: Vec<DVector<f64>>, max_delay: usize) -> Result<Self> {
        if history.len() != max_delay + 1 {
            return Err(Error::Dimension(format!(
                "history length {} != max_delay + 1 = {}",
                history.len(),
                max_delay + 1
            )));
        }
        let n = history[0].len();
        if history.iter().any(|x| x.len() != n) {
            return Err(Error::Dimension("history entries differ in dimension".into()));
        }
        Ok(Self { history })
    }

    /// Current state `x_k`.
    pub fn current(&self) -> &DVector<f64> {
        &self.history[0]
    }

    /// Delayed state `x_{k - tau}` for `0 <= tau <= tau_l`.
    pub fn delayed(&self, tau: usize) -> &DVector<f64> {
        &self.history[tau]
    }

    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Stacked augmented state `(x_k^T, x_{k-1}^T, ..., x_{k-depth}^T)^T`.
    pub fn stacked(&self, depth: usize) -> DVector<f64> {
        let n = self.history[0].len();
        let mut z = DVector::zeros(n * (depth + 1));
        for (i, x) in self.history.iter().take(depth + 1).enumerate() {
            z.rows_mut(i * n, n).copy_from(x);
        }
        z
    }

    fn shifted(&self, x_next: DVector<f64>) -> Self {
        let mut history = Vec::with_capacity(self.history.len());
        history.push(x_next);
        history.extend_from_slice(&self.history[..self.history.len() - 1]);
        Self { history }
    }
}

/// Advance the plant one step: the true (not hull-represented) saturation is
/// applied to `u`, the disturbance must already satisfy `w^T w <= d^2`.
pub fn step(
    model: &PolytopicModel,
    buffer: &DelayBuffer,
    u: &DVector<f64>,
    omega: &DVector<f64>,
    alpha: &SchedulingWeights,
) -> Result<DelayBuffer> {
    if buffer.len() != model.max_delay() + 1 {
        return Err(Error::Dimension(format!(
            "delay buffer has {} entries, expected {}",
            buffer.len(),
            model.max_delay() + 1
        )));
    }
    if buffer.current().len() != model.n_x {
        return Err(Error::Dimension("state dimension mismatch".into()));
    }
    if u.len() != model.n_u {
        return Err(Error::Dimension(format!(
            "input has dimension {}, expected {}",
            u.len(),
            model.n_u
        )));
    }
    if omega.len() != model.n_w {
        return Err(Error::Dimension(format!(
            "disturbance has dimension {}, expected {}",
            omega.len(),
            model.n_w
        )));
    }
    // Hard model assumption; out-of-ball disturbances are rejected here,
    // clamping belongs to the random signal generators.
    let wsq = omega.norm_squared();
    if wsq > model.d_sq * (1.0 + 1e-9) {
        return Err(Error::Parameter(format!(
            "disturbance norm^2 {wsq} exceeds d^2 = {}",
            model.d_sq
        )));
    }
    let m = evaluate_matrices(model, alpha)?;
    let sat_u = saturate(u, model.u_sat);
    let mut x_next = &m.a * buffer.current() + &m.b * sat_u + &model.d_matrix * omega;
    for (ad, tau) in m.a_delay.iter().zip(&model.delays) {
        x_next += ad * buffer.delayed(*tau);
    }
    Ok(buffer.shifted(x_next))
}

/// Disturbance signal description. Every emitted sample satisfies
/// `w^T w <= d^2`: scripted kinds are validated against the budget when a
/// scenario is built, the random kind projects onto the ball.
#[derive(Debug, Clone)]
pub enum DisturbanceSignal {
    Zero,
    /// `w_k[i] = amplitude[i] * sin(freq * k + phase)`.
    Sinusoid {
        amplitude: DVector<f64>,
        freq: f64,
        phase: f64,
    },
    /// Uniform draw in the ball of radius `scale * d`, seeded; draws outside
    /// the d-ball (scale > 1) are radially projected back.
    BoundedRandom { seed: u64, scale: f64 },
    /// Explicit per-step table, cycled when the horizon exceeds its length.
    Table { rows: Vec<DVector<f64>> },
}

impl DisturbanceSignal {
    /// Deterministically realize the signal for steps `0..horizon`.
    pub fn realize(&self, model: &PolytopicModel, horizon: usize) -> Result<Vec<DVector<f64>>> {
        let n_w = model.n_w;
        let d = model.d_bound();
        match self {
            DisturbanceSignal::Zero => Ok(vec![DVector::zeros(n_w); horizon]),
            DisturbanceSignal::Sinusoid {
                amplitude,
                freq,
                phase,
            } => {
                if amplitude.len() != n_w {
                    return Err(Error::Dimension(format!(
                        "sinusoid amplitude has dimension {}, expected {n_w}",
                        amplitude.len()
                    )));
                }
                if !amplitude.iter().all(|a| a.is_finite()) || !freq.is_finite() {
                    return Err(Error::Parameter("non-finite sinusoid parameters".into()));
                }
                Ok((0..horizon)
                    .map(|k| amplitude * (freq * k as f64 + phase).sin())
                    .collect())
            }
            DisturbanceSignal::BoundedRandom { seed, scale } => {
                if !(*scale >= 0.0) || !scale.is_finite() {
                    return Err(Error::Parameter(format!("invalid random scale {scale}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut out = Vec::with_capacity(horizon);
                for _ in 0..horizon {
                    // Uniform direction from normalized gaussians, radius
                    // d * scale * U^(1/n), then projection onto the d-ball.
                    let mut v = DVector::from_fn(n_w, |_, _| {
                        // Box-Muller from two uniforms.
                        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                        let u2: f64 = rng.gen_range(0.0..1.0);
                        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
                    });
                    let norm = v.norm();
                    if norm > 0.0 {
                        let u: f64 = rng.gen_range(0.0..1.0_f64);
                        let radius = d * scale * u.powf(1.0 / n_w as f64);
                        v *= radius / norm;
                    }
                    let nsq = v.norm_squared();
                    if nsq > model.d_sq {
                        v *= (model.d_sq / nsq).sqrt();
                    }
                    out.push(v);
                }
                Ok(out)
            }
            DisturbanceSignal::Table { rows } => {
                if rows.is_empty() {
                    return Err(Error::Parameter("disturbance table is empty".into()));
                }
                for (i, r) in rows.iter().enumerate() {
                    if r.len() != n_w {
                        return Err(Error::Dimension(format!(
                            "table row {i} has dimension {}, expected {n_w}",
                            r.len()
                        )));
                    }
                    if !r.iter().all(|v| v.is_finite()) {
                        return Err(Error::Parameter(format!("table row {i} not finite")));
                    }
                }
                Ok((0..horizon).map(|k| rows[k % rows.len()].clone()).collect())
            }
        }
    }

    /// Worst-case `w^T w` of the signal: analytic where available, else the
    /// supremum over the declared horizon. Returns `(within_budget, worst)`.
    pub fn budget(&self, model: &PolytopicModel, horizon: usize) -> Result<(bool, f64)> {
        let worst = match self {
            DisturbanceSignal::Zero => 0.0,
            DisturbanceSignal::Sinusoid { amplitude, .. } => {
                if !amplitude.iter().all(|a| a.is_finite()) {
                    return Err(Error::Parameter("unbounded sinusoid amplitude".into()));
                }
                // sin^2 <= 1 componentwise, all components in phase.
                amplitude.norm_squared()
            }
            DisturbanceSignal::BoundedRandom { .. } => self
                .realize(model, horizon)?
                .iter()
                .map(|w| w.norm_squared())
                .fold(0.0, f64::max),
            DisturbanceSignal::Table { rows } => {
                if rows.is_empty() {
                    return Err(Error::Parameter("disturbance table is empty".into()));
                }
                if rows.iter().any(|r| !r.iter().all(|v| v.is_finite())) {
                    return Err(Error::Parameter("unbounded table entry".into()));
                }
                rows.iter().map(|w| w.norm_squared()).fold(0.0, f64::max)
            }
        };
        Ok((worst <= model.d_sq * (1.0 + 1e-12), worst))
    }
}

/// Whether the signal respects the model disturbance budget over the given
/// horizon; also returns the worst-case squared norm.
pub fn validate_disturbance_budget(
    signal: &DisturbanceSignal,
    model: &PolytopicModel,
    horizon: usize,
) -> Result<(bool, f64)> {
    signal.budget(model, horizon)
}

/// Scheduling-parameter generator for simulation runs. The paper leaves the
/// realization of `alpha(k)` open; the seeded random kind exercises the full
/// polytope and is the default.
#[derive(Debug, Clone)]
pub enum SchedulingSignal {
    Constant { weights: Vec<f64> },
    /// `alpha_v(k) ∝ 1 + sin(2 pi k / period + 2 pi v / L)`, normalized.
    SinusoidBlend { period: f64 },
    /// Uniform on the simplex (normalized exponentials), seeded.
    Random { seed: u64 },
}

impl SchedulingSignal {
    pub fn realize(&self, l: usize, horizon: usize) -> Result<Vec<SchedulingWeights>> {
        match self {
            SchedulingSignal::Constant { weights } => {
                let w = SchedulingWeights::new(weights.clone())?;
                if w.len() != l {
                    return Err(Error::Dimension(format!(
                        "constant weights have length {}, model has {l} vertices",
                        w.len()
                    )));
                }
                Ok(vec![w; horizon])
            }
            SchedulingSignal::SinusoidBlend { period } => {
                if !(*period > 0.0) {
                    return Err(Error::Parameter(format!("period must be > 0, got {period}")));
                }
                (0..horizon)
                    .map(|k| {
                        let raw: Vec<f64> = (0..l)
                            .map(|v| {
                                1.0 + (std::f64::consts::TAU * k as f64 / period
                                    + std::f64::consts::TAU * v as f64 / l as f64)
                                    .sin()
                            })
                            .collect();
                        let sum: f64 = raw.iter().sum();
                        SchedulingWeights::new(normalize_exact(raw, sum))
                    })
                    .collect()
            }
            SchedulingSignal::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..horizon)
                    .map(|_| {
                        let raw: Vec<f64> = (0..l)
                            .map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0_f64).ln())
                            .collect();
                        let sum: f64 = raw.iter().sum();
                        SchedulingWeights::new(normalize_exact(raw, sum))
                    })
                    .collect()
            }
        }
    }
}

/// Divide by the sum, then pin the largest entry so the total is exactly one
/// (the weights constructor checks the sum to 1e-12).
fn normalize_exact(mut raw: Vec<f64>, sum: f64) -> Vec<f64> {
    for r in raw.iter_mut() {
        *r /= sum;
    }
    let imax = raw
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let rest: f64 = raw
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != imax)
        .map(|(_, v)| *v)
        .sum();
    raw[imax] = 1.0 - rest;
    raw
}
