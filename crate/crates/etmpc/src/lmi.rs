//! Assembly of the synthesis LMIs as affine symmetric blocks over the
//! decision variables `{gamma, W, W_tau, Y1..Y5}`, enumerating polytope
//! vertices and saturation vertices, plus recovery of the controller and
//! triggering matrices from a solution.
//!
//! Four constraint families are emitted:
//!
//! - cost decrease: `L * 2^{n_u}` blocks bounding the one-step cost,
//! - state bound: one state-dependent block encoding `V_{k|k} <= gamma`,
//! - saturation rows: `n_u` blocks keeping the auxiliary feedback rows
//!   inside the saturation limit on the solution ellipsoid,
//! - invariance: `L * 2^{n_u}` blocks making the solution ellipsoid
//!   robustly invariant under the disturbance budget.
//!
//! Every block is affine in the decision variables and exactly symmetric by
//! construction. Synthesis is limited to a single state delay; models with
//! more delay channels are rejected.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{condition_number, is_spd, symmetrize};
use crate::model::{DelayBuffer, PolytopicModel};
use crate::sdp::{AffineBlock, ConicProgram};
use crate::{Error, Result};

/// Positive-definiteness margin added for `Y1..Y3` as explicit blocks.
pub const EPS_PD: f64 = 1e-9;
/// Verification tolerance for non-strict PSD checks.
pub const EPS_PSD: f64 = 1e-8;
/// Condition-number cap beyond which `W` is treated as singular.
pub const W_COND_CAP: f64 = 1e12;

/// Indexing of the scalar decision vector: `gamma` first, then row-major
/// vectorized `W`, `W_tau`, `Y4`, `Y5`, then upper-triangle packed `Y1`,
/// `Y2`, `Y3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub n_x: usize,
    pub n_u: usize,
}

impl VarLayout {
    pub fn new(n_x: usize, n_u: usize) -> Self {
        Self { n_x, n_u }
    }

    pub fn gamma(&self) -> usize {
        0
    }

    pub fn w(&self, r: usize, c: usize) -> usize {
        1 + r * self.n_x + c
    }

    pub fn w_tau(&self, r: usize, c: usize) -> usize {
        1 + self.n_x * self.n_x + r * self.n_x + c
    }

    pub fn y4(&self, r: usize, c: usize) -> usize {
        1 + 2 * self.n_x * self.n_x + r * self.n_x + c
    }

    pub fn y5(&self, r: usize, c: usize) -> usize {
        1 + 2 * self.n_x * self.n_x + self.n_u * self.n_x + r * self.n_x + c
    }

    fn sym_base(&self) -> usize {
        1 + 2 * self.n_x * self.n_x + 2 * self.n_u * self.n_x
    }

    fn sym_size(&self) -> usize {
        self.n_x * (self.n_x + 1) / 2
    }

    fn sym_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * self.n_x - i * (i.saturating_sub(1)) / 2 + (j - i)
    }

    pub fn y1(&self, i: usize, j: usize) -> usize {
        self.sym_base() + self.sym_index(i, j)
    }

    pub fn y2(&self, i: usize, j: usize) -> usize {
        self.sym_base() + self.sym_size() + self.sym_index(i, j)
    }

    pub fn y3(&self, i: usize, j: usize) -> usize {
        self.sym_base() + 2 * self.sym_size() + self.sym_index(i, j)
    }

    /// Total scalar variable count:
    /// `1 + 2 n_x^2 + 2 n_u n_x + 3 n_x (n_x + 1) / 2`.
    pub fn n_vars(&self) -> usize {
        self.sym_base() + 3 * self.sym_size()
    }
}

/// Values of the decision variables. `Y1..Y3` are symmetric by storage
/// (packed upper triangle in the scalar vector).
#[derive(Debug, Clone)]
pub struct DecisionVars {
    pub gamma: f64,
    pub w: DMatrix<f64>,
    pub w_tau: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    pub y3: DMatrix<f64>,
    pub y4: DMatrix<f64>,
    pub y5: DMatrix<f64>,
}

impl DecisionVars {
    /// Pack into the scalar layout order.
    pub fn pack(&self, layout: &VarLayout) -> Vec<f64> {
        let n_x = layout.n_x;
        let n_u = layout.n_u;
        let mut x = vec![0.0; layout.n_vars()];
        x[layout.gamma()] = self.gamma;
        for r in 0..n_x {
            for c in 0..n_x {
                x[layout.w(r, c)] = self.w[(r, c)];
                x[layout.w_tau(r, c)] = self.w_tau[(r, c)];
            }
        }
        for r in 0..n_u {
            for c in 0..n_x {
                x[layout.y4(r, c)] = self.y4[(r, c)];
                x[layout.y5(r, c)] = self.y5[(r, c)];
            }
        }
        for i in 0..n_x {
            for j in i..n_x {
                x[layout.y1(i, j)] = self.y1[(i, j)];
                x[layout.y2(i, j)] = self.y2[(i, j)];
                x[layout.y3(i, j)] = self.y3[(i, j)];
            }
        }
        x
    }

    /// Unpack from the scalar layout order; `Y1..Y3` come back exactly
    /// symmetric.
    pub fn unpack(layout: &VarLayout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.n_vars() {
            return Err(Error::Dimension(format!(
                "expected {} scalars, got {}",
                layout.n_vars(),
                x.len()
            )));
        }
        let n_x = layout.n_x;
        let n_u = layout.n_u;
        let mut w = DMatrix::zeros(n_x, n_x);
        let mut w_tau = DMatrix::zeros(n_x, n_x);
        let mut y4 = DMatrix::zeros(n_u, n_x);
        let mut y5 = DMatrix::zeros(n_u, n_x);
        let mut y1 = DMatrix::zeros(n_x, n_x);
        let mut y2 = DMatrix::zeros(n_x, n_x);
        let mut y3 = DMatrix::zeros(n_x, n_x);
        for r in 0..n_x {
            for c in 0..n_x {
                w[(r, c)] = x[layout.w(r, c)];
                w_tau[(r, c)] = x[layout.w_tau(r, c)];
            }
        }
        for r in 0..n_u {
            for c in 0..n_x {
                y4[(r, c)] = x[layout.y4(r, c)];
                y5[(r, c)] = x[layout.y5(r, c)];
            }
        }
        for i in 0..n_x {
            for j in i..n_x {
                y1[(i, j)] = x[layout.y1(i, j)];
                y1[(j, i)] = x[layout.y1(i, j)];
                y2[(i, j)] = x[layout.y2(i, j)];
                y2[(j, i)] = x[layout.y2(i, j)];
                y3[(i, j)] = x[layout.y3(i, j)];
                y3[(j, i)] = x[layout.y3(i, j)];
            }
        }
        Ok(Self {
            gamma: x[layout.gamma()],
            w,
            w_tau,
            y1,
            y2,
            y3,
            y4,
            y5,
        })
    }
}

/// Cost weights and scalar constants of the min-max objective and the
/// invariance condition.
#[derive(Debug, Clone)]
pub struct CostConfig {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub varphi: f64,
    pub delta: f64,
    /// Squared disturbance bound `d^2` as used in the invariance blocks.
    pub dsq: f64,
}

impl CostConfig {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>, varphi: f64, delta: f64, dsq: f64) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::Dimension("Q and R must be square".into()));
        }
        if !is_spd(&q) {
            return Err(Error::Parameter("Q must be positive definite".into()));
        }
        if !is_spd(&r) {
            return Err(Error::Parameter("R must be positive definite".into()));
        }
        if !(varphi > 0.0) {
            return Err(Error::Parameter(format!("varphi must be > 0, got {varphi}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("delta = {delta} not in (0, 1)")));
        }
        if !(dsq > 0.0) {
            return Err(Error::Parameter(format!("d^2 must be > 0, got {dsq}")));
        }
        Ok(Self {
            q,
            r,
            varphi,
            delta,
            dsq,
        })
    }

    /// The full bound `0 < delta < 1 - mu` requires the ETM decay rate.
    pub fn check_delta_against_mu(&self, mu: f64) -> Result<()> {
        if !(self.delta < 1.0 - mu) {
            return Err(Error::Parameter(format!(
                "delta = {} violates delta < 1 - mu = {}",
                self.delta,
                1.0 - mu
            )));
        }
        Ok(())
    }
}

/// Symmetric square root of an SPD matrix via eigendecomposition.
pub fn sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| *l < 0.0) {
        return Err(Error::Parameter("matrix square root of indefinite matrix".into()));
    }
    let sqrt_vals = eig.eigenvalues.map(|l| l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

/// One vertex of the saturation hull: a diagonal 0/1 selector `E` with
/// complement `E^- = I - E`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaturationVertex {
    /// Diagonal of `E`, true = 1.
    pub diag: Vec<bool>,
}

impl SaturationVertex {
    pub fn e(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.diag.len(),
            self.diag.iter().map(|b| if *b { 1.0 } else { 0.0 }),
        ))
    }

    pub fn e_minus(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.diag.len(),
            self.diag.iter().map(|b| if *b { 0.0 } else { 1.0 }),
        ))
    }

    /// Diagonal entry of `E` as a scalar.
    pub fn e_entry(&self, i: usize) -> f64 {
        if self.diag[i] {
            1.0
        } else {
            0.0
        }
    }
}

/// All `2^{n_u}` distinct diagonal 0/1 selectors in binary counting order
/// (entry 0 is the most significant bit). Hard-capped at `n_u = 12`.
pub fn enumerate_saturation_vertices(n_u: usize) -> Result<Vec<SaturationVertex>> {
    if n_u == 0 {
        return Err(Error::Parameter("n_u must be >= 1".into()));
    }
    if n_u > 12 {
        return Err(Error::Parameter(format!(
            "n_u = {n_u} exceeds the saturation-vertex cap of 12 (2^{n_u} vertices)"
        )));
    }
    if n_u > 8 {
        log::warn!("enumerating {} saturation vertices (n_u = {n_u})", 1usize << n_u);
    }
    let count = 1usize << n_u;
    Ok((0..count)
        .map(|eta| SaturationVertex {
            diag: (0..n_u).map(|i| (eta >> (n_u - 1 - i)) & 1 == 1).collect(),
        })
        .collect())
}

/// Provenance of an emitted block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockProvenance {
    CostDecrease { vertex: usize, sat_vertex: usize },
    StateBound,
    SaturationRow { row: usize },
    Invariance { vertex: usize, sat_vertex: usize },
    PosDefMargin { var: &'static str },
}

impl BlockProvenance {
    fn name(&self) -> String {
        match self {
            BlockProvenance::CostDecrease { vertex, sat_vertex } => {
                format!("cost_decrease[v={vertex},eta={sat_vertex}]")
            }
            BlockProvenance::StateBound => "state_bound".into(),
            BlockProvenance::SaturationRow { row } => format!("saturation_row[i={row}]"),
            BlockProvenance::Invariance { vertex, sat_vertex } => {
                format!("invariance[v={vertex},eta={sat_vertex}]")
            }
            BlockProvenance::PosDefMargin { var } => format!("pd_margin[{var}]"),
        }
    }
}

/// An affine constraint block with its provenance tag.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub provenance: BlockProvenance,
    pub block: AffineBlock,
}

impl LmiBlock {
    /// Evaluate at explicit decision-variable values.
    pub fn eval(&self, layout: &VarLayout, vars: &DecisionVars) -> DMatrix<f64> {
        self.block.eval(&vars.pack(layout))
    }
}

/// Incremental builder for one affine symmetric block.
struct BlockBuilder {
    side: usize,
    f0: DMatrix<f64>,
    coeffs: BTreeMap<usize, BTreeMap<(usize, usize), f64>>,
}

impl BlockBuilder {
    fn new(side: usize) -> Self {
        Self {
            side,
            f0: DMatrix::zeros(side, side),
            coeffs: BTreeMap::new(),
        }
    }

    fn add_const(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.f0[(r, c)] += v;
        }
    }

    fn add_var(&mut self, var: usize, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            *self
                .coeffs
                .entry(var)
                .or_default()
                .entry((r, c))
                .or_insert(0.0) += v;
        }
    }

    /// Mirrored stamp for strictly off-diagonal sub-blocks.
    fn add_var_mirrored(&mut self, var: usize, r: usize, c: usize, v: f64) {
        self.add_var(var, r, c, v);
        self.add_var(var, c, r, v);
    }

    fn add_const_mirrored(&mut self, r: usize, c: usize, v: f64) {
        self.add_const(r, c, v);
        self.add_const(c, r, v);
    }

    fn finish(self, provenance: BlockProvenance) -> LmiBlock {
        let coeffs = self
            .coeffs
            .into_iter()
            .map(|(var, map)| {
                (
                    var,
                    map.into_iter()
                        .filter(|(_, v)| *v != 0.0)
                        .map(|((r, c), v)| (r, c, v))
                        .collect::<Vec<_>>(),
                )
            })
            .filter(|(_, t): &(usize, Vec<_>)| !t.is_empty())
            .collect();
        LmiBlock {
            block: AffineBlock {
                side: self.side,
                f0: self.f0,
                coeffs,
                name: provenance.name(),
            },
            provenance,
        }
    }
}

/// Stamp `W + W^T - Y` at diagonal offset `o` (both index functions map
/// matrix entries to scalar variables).
fn stamp_w_wt_minus_y(
    b: &mut BlockBuilder,
    layout: &VarLayout,
    o: usize,
    w_idx: impl Fn(&VarLayout, usize, usize) -> usize,
    y_idx: impl Fn(&VarLayout, usize, usize) -> usize,
) {
    let n = layout.n_x;
    for i in 0..n {
        for j in 0..n {
            b.add_var(w_idx(layout, i, j), o + i, o + j, 1.0);
            b.add_var(w_idx(layout, j, i), o + i, o + j, 1.0);
            b.add_var(y_idx(layout, i, j), o + i, o + j, -1.0);
        }
    }
}

/// Stamp a symmetric-variable matrix `Y` at diagonal offset `o`.
fn stamp_y(
    b: &mut BlockBuilder,
    layout: &VarLayout,
    o: usize,
    y_idx: impl Fn(&VarLayout, usize, usize) -> usize,
) {
    let n = layout.n_x;
    for i in 0..n {
        for j in 0..n {
            b.add_var(y_idx(layout, i, j), o + i, o + j, 1.0);
        }
    }
}

/// Stamp `coeff * gamma * I` of size `n` at diagonal offset `o`.
fn stamp_gamma_identity(b: &mut BlockBuilder, layout: &VarLayout, o: usize, n: usize, coeff: f64) {
    for i in 0..n {
        b.add_var(layout.gamma(), o + i, o + i, coeff);
    }
}

/// Stamp `M * W` (constant `M`, variable `W`-like matrix indexed by `w_idx`)
/// at off-diagonal offset `(r0, c0)`, mirrored.
fn stamp_mat_times_w(
    b: &mut BlockBuilder,
    layout: &VarLayout,
    r0: usize,
    c0: usize,
    m: &DMatrix<f64>,
    w_idx: impl Fn(&VarLayout, usize, usize) -> usize,
) {
    let n = layout.n_x;
    for i in 0..m.nrows() {
        for t in 0..n {
            let coeff = m[(i, t)];
            if coeff != 0.0 {
                for j in 0..n {
                    b.add_var_mirrored(w_idx(layout, t, j), r0 + i, c0 + j, coeff);
                }
            }
        }
    }
}

/// Stamp `M * script_N` where `script_N = E Y4 + E^- Y5`, mirrored.
fn stamp_mat_times_n(
    b: &mut BlockBuilder,
    layout: &VarLayout,
    r0: usize,
    c0: usize,
    m: &DMatrix<f64>,
    sat: &SaturationVertex,
) {
    let n_x = layout.n_x;
    let n_u = layout.n_u;
    for i in 0..m.nrows() {
        for t in 0..n_u {
            let coeff = m[(i, t)];
            if coeff == 0.0 {
                continue;
            }
            let e = sat.e_entry(t);
            for j in 0..n_x {
                if e != 0.0 {
                    b.add_var_mirrored(layout.y4(t, j), r0 + i, c0 + j, coeff * e);
                }
                if e != 1.0 {
                    b.add_var_mirrored(layout.y5(t, j), r0 + i, c0 + j, coeff * (1.0 - e));
                }
            }
        }
    }
}

/// Cost-decrease family: `L * 2^{n_u}` blocks of side
/// `7 n_x + n_u + n_w`, one per (polytope vertex, saturation vertex) pair.
pub fn assemble_lmi_cost_decrease(
    model: &PolytopicModel,
    cost: &CostConfig,
    theta: f64,
) -> Result<Vec<LmiBlock>> {
    require_single_delay(model)?;
    check_cost_dims(model, cost)?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Parameter(format!("theta = {theta} not in (0, 1)")));
    }
    let layout = VarLayout::new(model.n_x, model.n_u);
    let (n_x, n_u, n_w) = (model.n_x, model.n_u, model.n_w);
    let q_sqrt = sqrt_spd(&cost.q)?;
    let r_sqrt = sqrt_spd(&cost.r)?;
    let theta_sqrt_i = DMatrix::identity(n_x, n_x) * theta.sqrt();
    let identity = DMatrix::identity(n_x, n_x);
    let sat_vertices = enumerate_saturation_vertices(n_u)?;

    // Side: Theta1 part (3 n_x + n_w) then Theta3 part (4 n_x + n_u).
    let t1 = 3 * n_x + n_w;
    let side = t1 + 4 * n_x + n_u;
    let mut blocks = Vec::with_capacity(model.n_vertices() * sat_vertices.len());
    for (v, vm) in model.vertices.iter().enumerate() {
        for (eta, sat) in sat_vertices.iter().enumerate() {
            let mut b = BlockBuilder::new(side);
            // Theta1 = blkdiag{W+W^T-Y1, Wt+Wt^T-Y2, W+W^T-Y3, varphi gamma I}.
            stamp_w_wt_minus_y(&mut b, &layout, 0, VarLayout::w, VarLayout::y1);
            stamp_w_wt_minus_y(&mut b, &layout, n_x, VarLayout::w_tau, VarLayout::y2);
            stamp_w_wt_minus_y(&mut b, &layout, 2 * n_x, VarLayout::w, VarLayout::y3);
            stamp_gamma_identity(&mut b, &layout, 3 * n_x, n_w, cost.varphi);

            // Theta2 rows at (t1.., 0..t1), mirrored into the upper triangle:
            //   [A^v W + B^v N | Atilde^v Wt | B^v N | gamma D]
            //   [W             | 0           | 0     | 0      ]
            //   [Q^0.5 W       | 0           | 0     | 0      ]
            //   [R^0.5 N       | 0           | R^0.5 N | 0    ]
            //   [theta^0.5 W   | 0           | 0     | 0      ]
            stamp_mat_times_w(&mut b, &layout, t1, 0, &vm.a, VarLayout::w);
            stamp_mat_times_n(&mut b, &layout, t1, 0, &vm.b, sat);
            stamp_mat_times_w(&mut b, &layout, t1, n_x, &vm.a_delay[0], VarLayout::w_tau);
            stamp_mat_times_n(&mut b, &layout, t1, 2 * n_x, &vm.b, sat);
            for i in 0..n_x {
                for j in 0..n_w {
                    b.add_var_mirrored(
                        layout.gamma(),
                        t1 + i,
                        3 * n_x + j,
                        model.d_matrix[(i, j)],
                    );
                }
            }
            stamp_mat_times_w(&mut b, &layout, t1 + n_x, 0, &identity, VarLayout::w);
            stamp_mat_times_w(&mut b, &layout, t1 + 2 * n_x, 0, &q_sqrt, VarLayout::w);
            stamp_mat_times_n(&mut b, &layout, t1 + 3 * n_x, 0, &r_sqrt, sat);
            stamp_mat_times_n(&mut b, &layout, t1 + 3 * n_x, 2 * n_x, &r_sqrt, sat);
            stamp_mat_times_w(&mut b, &layout, t1 + 3 * n_x + n_u, 0, &theta_sqrt_i, VarLayout::w);

            // Theta3 = blkdiag{Y1, Y2, gamma I, gamma I, Y3}.
            stamp_y(&mut b, &layout, t1, VarLayout::y1);
            stamp_y(&mut b, &layout, t1 + n_x, VarLayout::y2);
            stamp_gamma_identity(&mut b, &layout, t1 + 2 * n_x, n_x, 1.0);
            stamp_gamma_identity(&mut b, &layout, t1 + 3 * n_x, n_u, 1.0);
            stamp_y(&mut b, &layout, t1 + 3 * n_x + n_u, VarLayout::y3);

            blocks.push(b.finish(BlockProvenance::CostDecrease {
                vertex: v,
                sat_vertex: eta,
            }));
        }
    }
    Ok(blocks)
}

/// State-bound block: side `1 + n_x (tau1 + 1) + 1`, the only block that
/// depends on the measured state and `beta`.
pub fn assemble_lmi_state_bound(
    layout: &VarLayout,
    buffer: &DelayBuffer,
    beta: f64,
) -> Result<LmiBlock> {
    if beta < 0.0 {
        return Err(Error::Parameter(format!("beta = {beta} negative")));
    }
    let n_x = layout.n_x;
    if buffer.current().len() != n_x {
        return Err(Error::Dimension(format!(
            "buffer state dimension {} != n_x = {n_x}",
            buffer.current().len()
        )));
    }
    let tau1 = buffer.len() - 1;
    let z_bar = buffer.stacked(tau1);
    let nz = n_x * (tau1 + 1);
    let side = 1 + nz + 1;
    let mut b = BlockBuilder::new(side);
    b.add_const(0, 0, 1.0);
    for i in 0..nz {
        b.add_const_mirrored(0, 1 + i, z_bar[i]);
    }
    b.add_const_mirrored(0, 1 + nz, beta.sqrt());
    // Theta4 = blkdiag{Y1, Y2, ..., Y2} (tau1 copies of Y2).
    stamp_y(&mut b, layout, 1, VarLayout::y1);
    for rho in 1..=tau1 {
        stamp_y(&mut b, layout, 1 + rho * n_x, VarLayout::y2);
    }
    b.add_var(layout.gamma(), 1 + nz, 1 + nz, 1.0);
    Ok(b.finish(BlockProvenance::StateBound))
}

/// Saturation-row family: `n_u` blocks of side `1 + n_x` keeping each row of
/// the auxiliary feedback inside the saturation limit on the ellipsoid.
pub fn assemble_lmi_saturation_rows(layout: &VarLayout, u_sat: f64) -> Result<Vec<LmiBlock>> {
    if !(u_sat > 0.0) {
        return Err(Error::Parameter(format!("u_sat must be > 0, got {u_sat}")));
    }
    let n_x = layout.n_x;
    let mut blocks = Vec::with_capacity(layout.n_u);
    for i in 0..layout.n_u {
        let mut b = BlockBuilder::new(1 + n_x);
        b.add_const(0, 0, u_sat * u_sat);
        for j in 0..n_x {
            b.add_var_mirrored(layout.y5(i, j), 0, 1 + j, 1.0);
        }
        stamp_w_wt_minus_y(&mut b, layout, 1, VarLayout::w, VarLayout::y1);
        blocks.push(b.finish(BlockProvenance::SaturationRow { row: i }));
    }
    Ok(blocks)
}

/// Invariance family: `L * 2^{n_u}` blocks of side `6 n_x + n_w` making the
/// solution ellipsoid robustly invariant. Requires `0 < delta < 1 - mu`.
pub fn assemble_lmi_invariance(
    model: &PolytopicModel,
    theta: f64,
    delta: f64,
    mu: f64,
    dsq: f64,
) -> Result<Vec<LmiBlock>> {
    require_single_delay(model)?;
    if !(delta > 0.0 && delta < 1.0 - mu) {
        return Err(Error::Parameter(format!(
            "delta = {delta} outside (0, 1 - mu) = (0, {})",
            1.0 - mu
        )));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Parameter(format!("theta = {theta} not in (0, 1)")));
    }
    if !(dsq > 0.0) {
        return Err(Error::Parameter(format!("d^2 must be > 0, got {dsq}")));
    }
    let layout = VarLayout::new(model.n_x, model.n_u);
    let (n_x, n_w) = (model.n_x, model.n_w);
    let theta_sqrt_i = DMatrix::identity(n_x, n_x) * theta.sqrt();
    let identity = DMatrix::identity(n_x, n_x);
    let sat_vertices = enumerate_saturation_vertices(model.n_u)?;

    let s1 = 3 * n_x + n_w;
    let side = s1 + 3 * n_x;
    let mut blocks = Vec::with_capacity(model.n_vertices() * sat_vertices.len());
    for (v, vm) in model.vertices.iter().enumerate() {
        for (eta, sat) in sat_vertices.iter().enumerate() {
            let mut b = BlockBuilder::new(side);
            // Theta5 = blkdiag{W+W^T-Y1, Wt+Wt^T-Y2, W+W^T-Y3, (delta/d^2) I}.
            stamp_w_wt_minus_y(&mut b, &layout, 0, VarLayout::w, VarLayout::y1);
            stamp_w_wt_minus_y(&mut b, &layout, n_x, VarLayout::w_tau, VarLayout::y2);
            stamp_w_wt_minus_y(&mut b, &layout, 2 * n_x, VarLayout::w, VarLayout::y3);
            for j in 0..n_w {
                b.add_const(3 * n_x + j, 3 * n_x + j, delta / dsq);
            }

            // Theta6 rows at (s1.., 0..s1):
            //   [A^v W + B^v N | Atilde^v Wt | B^v N | D]
            //   [W             | 0           | 0     | 0]
            //   [theta^0.5 W   | 0           | 0     | 0]
            stamp_mat_times_w(&mut b, &layout, s1, 0, &vm.a, VarLayout::w);
            stamp_mat_times_n(&mut b, &layout, s1, 0, &vm.b, sat);
            stamp_mat_times_w(&mut b, &layout, s1, n_x, &vm.a_delay[0], VarLayout::w_tau);
            stamp_mat_times_n(&mut b, &layout, s1, 2 * n_x, &vm.b, sat);
            for i in 0..n_x {
                for j in 0..n_w {
                    b.add_const_mirrored(s1 + i, 3 * n_x + j, model.d_matrix[(i, j)]);
                }
            }
            stamp_mat_times_w(&mut b, &layout, s1 + n_x, 0, &identity, VarLayout::w);
            stamp_mat_times_w(&mut b, &layout, s1 + 2 * n_x, 0, &theta_sqrt_i, VarLayout::w);

            // Theta7 = blkdiag{Y1, Y2, Y3}.
            stamp_y(&mut b, &layout, s1, VarLayout::y1);
            stamp_y(&mut b, &layout, s1 + n_x, VarLayout::y2);
            stamp_y(&mut b, &layout, s1 + 2 * n_x, VarLayout::y3);

            blocks.push(b.finish(BlockProvenance::Invariance {
                vertex: v,
                sat_vertex: eta,
            }));
        }
    }
    Ok(blocks)
}

/// Margin blocks `Y_i - eps_pd I >= 0` for `Y1..Y3`; the recovery identities
/// need strict definiteness and the constraint set alone only forces PSD.
pub fn assemble_pd_margins(layout: &VarLayout) -> Vec<LmiBlock> {
    let n_x = layout.n_x;
    let mut out = Vec::with_capacity(3);
    for (name, idx) in [
        ("y1", VarLayout::y1 as fn(&VarLayout, usize, usize) -> usize),
        ("y2", VarLayout::y2),
        ("y3", VarLayout::y3),
    ] {
        let mut b = BlockBuilder::new(n_x);
        stamp_y(&mut b, layout, 0, idx);
        for i in 0..n_x {
            b.add_const(i, i, -EPS_PD);
        }
        out.push(b.finish(BlockProvenance::PosDefMargin { var: name }));
    }
    out
}

fn require_single_delay(model: &PolytopicModel) -> Result<()> {
    if model.n_delays() != 1 {
        return Err(Error::Synthesis(format!(
            "LMI synthesis covers a single state delay; model declares {} delay channels",
            model.n_delays()
        )));
    }
    Ok(())
}

fn check_cost_dims(model: &PolytopicModel, cost: &CostConfig) -> Result<()> {
    if cost.q.nrows() != model.n_x {
        return Err(Error::Dimension(format!(
            "Q is {}x{}, expected {0}x{0} with n_x = {}",
            cost.q.nrows(),
            cost.q.ncols(),
            model.n_x
        )));
    }
    if cost.r.nrows() != model.n_u {
        return Err(Error::Dimension(format!(
            "R is {}x{}, expected n_u = {}",
            cost.r.nrows(),
            cost.r.ncols(),
            model.n_u
        )));
    }
    Ok(())
}

/// The full synthesis problem at a given state: all four families plus the
/// positive-definiteness margins, with `minimize gamma` as objective.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub layout: VarLayout,
    pub blocks: Vec<LmiBlock>,
}

impl LmiProblem {
    pub fn assemble(
        model: &PolytopicModel,
        cost: &CostConfig,
        theta: f64,
        mu: f64,
        buffer: &DelayBuffer,
        beta: f64,
    ) -> Result<Self> {
        let layout = VarLayout::new(model.n_x, model.n_u);
        let mut blocks = assemble_lmi_cost_decrease(model, cost, theta)?;
        blocks.push(assemble_lmi_state_bound(&layout, buffer, beta)?);
        blocks.extend(assemble_lmi_saturation_rows(&layout, model.u_sat)?);
        blocks.extend(assemble_lmi_invariance(
            model, theta, cost.delta, mu, cost.dsq,
        )?);
        blocks.extend(assemble_pd_margins(&layout));
        Ok(Self { layout, blocks })
    }

    /// Repackage as a conic program minimizing gamma.
    pub fn to_conic(&self) -> ConicProgram {
        ConicProgram::minimize_first(
            self.layout.n_vars(),
            self.blocks.iter().map(|b| b.block.clone()).collect(),
        )
    }

    /// Sparse text dump for cross-checking against external solvers.
    pub fn dump_sparse(&self) -> String {
        self.to_conic().to_sparse_text()
    }
}

/// Matrices recovered from a solution via the closing identities
/// `P = gamma Y1^{-1}`, `P_tau = gamma Y2^{-1}`, `Phi = gamma Y3^{-1}`,
/// `F = Y4 W^{-1}`, `H = Y5 W^{-1}`.
#[derive(Debug, Clone)]
pub struct RecoveredController {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub p_tau: DMatrix<f64>,
    /// Condition number of `W`, reported for diagnostics.
    pub w_condition: f64,
}

pub fn recover_controller(vars: &DecisionVars) -> Result<RecoveredController> {
    if !(vars.gamma > 0.0) {
        return Err(Error::Parameter(format!(
            "gamma must be > 0 for recovery, got {}",
            vars.gamma
        )));
    }
    let w_condition = condition_number(&vars.w);
    if !w_condition.is_finite() || w_condition > W_COND_CAP {
        return Err(Error::Solver(format!(
            "W numerically singular (condition number {w_condition:.3e})"
        )));
    }
    let w_inv = vars
        .w
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Solver("W not invertible".into()))?;
    let inv_spd = |m: &DMatrix<f64>, name: &str| -> Result<DMatrix<f64>> {
        if !is_spd(m) {
            return Err(Error::Parameter(format!("{name} not positive definite")));
        }
        m.clone()
            .try_inverse()
            .map(|inv| symmetrize(&inv) * vars.gamma)
            .ok_or_else(|| Error::Solver(format!("{name} not invertible")))
    };
    Ok(RecoveredController {
        f: &vars.y4 * &w_inv,
        h: &vars.y5 * &w_inv,
        phi: inv_spd(&vars.y3, "Y3")?,
        p: inv_spd(&vars.y1, "Y1")?,
        p_tau: inv_spd(&vars.y2, "Y2")?,
        w_condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VertexMatrices;
    use approx::assert_relative_eq;

    fn model_of_dims(n_x: usize, n_u: usize, n_w: usize, l: usize) -> PolytopicModel {
        let vertices = (0..l)
            .map(|v| VertexMatrices {
                a: DMatrix::identity(n_x, n_x) * (0.5 + 0.1 * v as f64),
                a_delay: vec![DMatrix::identity(n_x, n_x) * 0.1],
                b: DMatrix::from_fn(n_x, n_u, |i, j| if i == j { 1.0 } else { 0.2 }),
            })
            .collect();
        PolytopicModel::new(
            vec![2],
            vertices,
            DMatrix::identity(n_x, n_w) * 0.1,
            0.4,
            0.0018,
        )
        .unwrap()
    }

    fn cost_of_dims(n_x: usize, n_u: usize) -> CostConfig {
        CostConfig::new(
            DMatrix::identity(n_x, n_x) * 0.01,
            DMatrix::identity(n_u, n_u) * 0.001,
            10.0,
            0.09,
            0.0018,
        )
        .unwrap()
    }

    #[test]
    fn layout_counts_match_formula() {
        for (n_x, n_u) in [(1, 1), (2, 1), (5, 5), (3, 2)] {
            let layout = VarLayout::new(n_x, n_u);
            assert_eq!(
                layout.n_vars(),
                1 + 2 * n_x * n_x + 2 * n_u * n_x + 3 * n_x * (n_x + 1) / 2
            );
        }
        // Heater dimensions: 146 scalar variables.
        assert_eq!(VarLayout::new(5, 5).n_vars(), 146);
    }

    #[test]
    fn pack_unpack_round_trip() {
        let layout = VarLayout::new(3, 2);
        let sym = |seed: f64| {
            let m = DMatrix::from_fn(3, 3, |i, j| seed + (i * 3 + j) as f64);
            symmetrize(&m)
        };
        let vars = DecisionVars {
            gamma: 4.2,
            w: DMatrix::from_fn(3, 3, |i, j| (i + 2 * j) as f64),
            w_tau: DMatrix::from_fn(3, 3, |i, j| (2 * i + j) as f64 - 1.0),
            y1: sym(1.0),
            y2: sym(-2.0),
            y3: sym(0.5),
            y4: DMatrix::from_fn(2, 3, |i, j| (i + j) as f64),
            y5: DMatrix::from_fn(2, 3, |i, j| (i * j) as f64 + 0.5),
        };
        let x = vars.pack(&layout);
        let back = DecisionVars::unpack(&layout, &x).unwrap();
        assert_relative_eq!(vars.w, back.w);
        assert_relative_eq!(vars.w_tau, back.w_tau);
        assert_relative_eq!(vars.y1, back.y1);
        assert_relative_eq!(vars.y2, back.y2);
        assert_relative_eq!(vars.y3, back.y3);
        assert_relative_eq!(vars.y4, back.y4);
        assert_relative_eq!(vars.y5, back.y5);
        assert_eq!(vars.gamma, back.gamma);
    }

    #[test]
    fn saturation_vertices_enumerate_in_binary_order() {
        let vs = enumerate_saturation_vertices(1).unwrap();
        assert_eq!(vs.len(), 2);
        assert_eq!(vs[0].diag, vec![false]);
        assert_eq!(vs[1].diag, vec![true]);

        let vs = enumerate_saturation_vertices(2).unwrap();
        assert_eq!(vs.len(), 4);
        assert_eq!(vs[0].diag, vec![false, false]);
        assert_eq!(vs[1].diag, vec![false, true]);
        assert_eq!(vs[2].diag, vec![true, false]);
        assert_eq!(vs[3].diag, vec![true, true]);
        for v in &vs {
            let sum = v.e() + v.e_minus();
            assert_relative_eq!(sum, DMatrix::identity(2, 2));
        }

        assert_eq!(enumerate_saturation_vertices(5).unwrap().len(), 32);
        assert!(enumerate_saturation_vertices(13).is_err());
        assert!(enumerate_saturation_vertices(0).is_err());
    }

    #[test]
    fn cost_decrease_block_bookkeeping() {
        // Heater dimensions: 64 blocks of 45x45.
        let model = model_of_dims(5, 5, 5, 2);
        let cost = cost_of_dims(5, 5);
        let blocks = assemble_lmi_cost_decrease(&model, &cost, 0.1).unwrap();
        assert_eq!(blocks.len(), 64);
        assert!(blocks.iter().all(|b| b.block.side == 45));

        // Scalar case: 2 blocks of 9x9.
        let model = model_of_dims(1, 1, 1, 1);
        let cost = cost_of_dims(1, 1);
        let blocks = assemble_lmi_cost_decrease(&model, &cost, 0.1).unwrap();
        assert_eq!(blocks.len(), 2);
        assert!(blocks.iter().all(|b| b.block.side == 9));
    }

    #[test]
    fn cost_decrease_blocks_symmetric() {
        let model = model_of_dims(2, 2, 2, 2);
        let cost = cost_of_dims(2, 2);
        let layout = VarLayout::new(2, 2);
        let vars = DecisionVars {
            gamma: 1.0,
            w: DMatrix::identity(2, 2),
            w_tau: DMatrix::identity(2, 2),
            y1: DMatrix::identity(2, 2),
            y2: DMatrix::identity(2, 2),
            y3: DMatrix::identity(2, 2),
            y4: DMatrix::zeros(2, 2),
            y5: DMatrix::zeros(2, 2),
        };
        for b in assemble_lmi_cost_decrease(&model, &cost, 0.1).unwrap() {
            let m = b.eval(&layout, &vars);
            assert_eq!(m, m.transpose(), "block {} asymmetric", b.block.name);
        }
    }

    #[test]
    fn state_bound_block_dimensions_and_boundary_case() {
        // Heater: n_x = 5, tau1 = 2 -> 17x17.
        let layout = VarLayout::new(5, 5);
        let buffer = DelayBuffer::replicate(&DVector::zeros(5), 2);
        let b = assemble_lmi_state_bound(&layout, &buffer, 0.0).unwrap();
        assert_eq!(b.block.side, 17);

        // Scalar boundary case: z = (1, 0), beta = 0, Y = I, gamma = 1.
        let layout = VarLayout::new(1, 1);
        let buffer = DelayBuffer::from_history(
            vec![DVector::from_vec(vec![1.0]), DVector::zeros(1)],
            1,
        )
        .unwrap();
        let b = assemble_lmi_state_bound(&layout, &buffer, 0.0).unwrap();
        assert_eq!(b.block.side, 4);
        let vars = DecisionVars {
            gamma: 1.0,
            w: DMatrix::identity(1, 1),
            w_tau: DMatrix::identity(1, 1),
            y1: DMatrix::identity(1, 1),
            y2: DMatrix::identity(1, 1),
            y3: DMatrix::identity(1, 1),
            y4: DMatrix::zeros(1, 1),
            y5: DMatrix::zeros(1, 1),
        };
        let m = b.eval(&layout, &vars);
        let expect = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 1.0, 0.0, 0.0, //
                1.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_relative_eq!(m, expect);
        let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        let expect_eigs = [0.0, 1.0, 1.0, 2.0];
        for (e, x) in eigs.iter().zip(expect_eigs) {
            assert_relative_eq!(*e, x, epsilon = 1e-12);
        }

        // Negative beta rejected.
        assert!(assemble_lmi_state_bound(&layout, &buffer, -0.1).is_err());
    }

    #[test]
    fn saturation_rows_shapes_and_boundary_determinant() {
        // Heater: 5 blocks of 6x6.
        let layout = VarLayout::new(5, 5);
        let blocks = assemble_lmi_saturation_rows(&layout, 0.4).unwrap();
        assert_eq!(blocks.len(), 5);
        assert!(blocks.iter().all(|b| b.block.side == 6));

        // Scalar boundary: W = Y1 = 1, v5 = 0.4, u_sat = 0.4 -> det = 0.
        let layout = VarLayout::new(1, 1);
        let blocks = assemble_lmi_saturation_rows(&layout, 0.4).unwrap();
        let vars = DecisionVars {
            gamma: 1.0,
            w: DMatrix::identity(1, 1),
            w_tau: DMatrix::identity(1, 1),
            y1: DMatrix::identity(1, 1),
            y2: DMatrix::identity(1, 1),
            y3: DMatrix::identity(1, 1),
            y4: DMatrix::zeros(1, 1),
            y5: DMatrix::from_element(1, 1, 0.4),
        };
        let m = blocks[0].eval(&layout, &vars);
        assert_relative_eq!(m, DMatrix::from_row_slice(2, 2, &[0.16, 0.4, 0.4, 1.0]));
        assert_relative_eq!(m.determinant(), 0.0, epsilon = 1e-15);
        assert!(crate::linalg::is_psd(&m, 1e-12));

        // Zero auxiliary gain: the block degenerates to
        // blkdiag{u_sat^2, W + W^T - Y1}.
        let vars = DecisionVars {
            y5: DMatrix::zeros(1, 1),
            ..vars
        };
        let m = blocks[0].eval(&layout, &vars);
        assert_relative_eq!(m, DMatrix::from_row_slice(2, 2, &[0.16, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn every_block_family_exactly_symmetric() {
        let model = model_of_dims(3, 2, 2, 2);
        let cost = cost_of_dims(3, 2);
        let layout = VarLayout::new(3, 2);
        let buffer = DelayBuffer::from_history(
            vec![
                DVector::from_vec(vec![0.4, -1.1, 2.0]),
                DVector::from_vec(vec![0.1, 0.2, -0.3]),
                DVector::from_vec(vec![1.5, 0.0, 0.7]),
            ],
            2,
        )
        .unwrap();
        let problem = LmiProblem::assemble(&model, &cost, 0.1, 0.9, &buffer, 3.7).unwrap();
        let mut state = 0xabcdef12345u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let x: Vec<f64> = (0..layout.n_vars()).map(|_| next()).collect();
        for b in &problem.blocks {
            let m = b.block.eval(&x);
            assert_eq!(m, m.transpose(), "block {} not exactly symmetric", b.block.name);
        }
    }

    #[test]
    fn invariance_block_bookkeeping_and_delta_range() {
        let model = model_of_dims(5, 5, 5, 2);
        let blocks = assemble_lmi_invariance(&model, 0.1, 0.09, 0.9, 0.0018).unwrap();
        assert_eq!(blocks.len(), 64);
        assert!(blocks.iter().all(|b| b.block.side == 35));

        // delta = 0.09 < 1 - 0.9 accepted; 0.15 rejected.
        assert!(assemble_lmi_invariance(&model, 0.1, 0.15, 0.9, 0.0018).is_err());
    }

    #[test]
    fn multi_delay_synthesis_rejected() {
        let n_x = 2;
        let vertices = vec![VertexMatrices {
            a: DMatrix::identity(n_x, n_x) * 0.5,
            a_delay: vec![
                DMatrix::identity(n_x, n_x) * 0.1,
                DMatrix::identity(n_x, n_x) * 0.05,
            ],
            b: DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
        }];
        let model = PolytopicModel::new(
            vec![1, 3],
            vertices,
            DMatrix::identity(2, 2),
            0.4,
            0.0018,
        )
        .unwrap();
        let cost = cost_of_dims(2, 1);
        let err = assemble_lmi_cost_decrease(&model, &cost, 0.1).unwrap_err();
        assert!(matches!(err, Error::Synthesis(_)));
    }

    #[test]
    fn recover_controller_identities() {
        // Y4 = W -> F = I.
        let vars = DecisionVars {
            gamma: 2.0,
            w: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.5]),
            w_tau: DMatrix::identity(2, 2),
            y1: DMatrix::identity(2, 2) * 2.0,
            y2: DMatrix::identity(2, 2),
            y3: DMatrix::identity(2, 2) * 2.0,
            y4: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.5]),
            y5: DMatrix::zeros(2, 2),
        };
        let rec = recover_controller(&vars).unwrap();
        assert_relative_eq!(rec.f, DMatrix::identity(2, 2), epsilon = 1e-12);
        // gamma = 2, Y3 = 2I -> Phi = I.
        assert_relative_eq!(rec.phi, DMatrix::identity(2, 2), epsilon = 1e-12);

        // Scalar W = 2, Y4 = 1 -> F = 0.5.
        let vars = DecisionVars {
            gamma: 1.0,
            w: DMatrix::from_element(1, 1, 2.0),
            w_tau: DMatrix::identity(1, 1),
            y1: DMatrix::identity(1, 1),
            y2: DMatrix::identity(1, 1),
            y3: DMatrix::identity(1, 1),
            y4: DMatrix::from_element(1, 1, 1.0),
            y5: DMatrix::zeros(1, 1),
        };
        let rec = recover_controller(&vars).unwrap();
        assert_relative_eq!(rec.f[(0, 0)], 0.5);

        // Singular W rejected.
        let vars = DecisionVars {
            w: DMatrix::zeros(1, 1),
            ..vars
        };
        assert!(recover_controller(&vars).is_err());
    }

    #[test]
    fn full_problem_block_census() {
        // Surrogate-style dims: L * 2^{n_u} twice + 1 + n_u + 3 margins.
        let model = model_of_dims(2, 1, 2, 2);
        let cost = cost_of_dims(2, 1);
        let buffer = DelayBuffer::replicate(&DVector::from_vec(vec![1.0, -1.0]), 2);
        let problem = LmiProblem::assemble(&model, &cost, 0.1, 0.9, &buffer, 10.0).unwrap();
        let expect = 2 * 2 + 1 + 1 + 2 * 2 + 3;
        assert_eq!(problem.blocks.len(), expect);
        let conic = problem.to_conic();
        assert!(conic.validate().is_ok());
        assert_eq!(conic.n_vars, VarLayout::new(2, 1).n_vars());
        // Objective touches only gamma.
        assert_eq!(conic.objective[0], 1.0);
        assert!(conic.objective[1..].iter().all(|c| *c == 0.0));
    }

    #[test]
    fn affinity_of_blocks() {
        // block(t v1 + (1-t) v2) == t block(v1) + (1-t) block(v2) entrywise.
        let model = model_of_dims(2, 1, 2, 2);
        let cost = cost_of_dims(2, 1);
        let layout = VarLayout::new(2, 1);
        let buffer = DelayBuffer::replicate(&DVector::from_vec(vec![0.3, -0.7]), 2);
        let problem = LmiProblem::assemble(&model, &cost, 0.1, 0.9, &buffer, 2.0).unwrap();

        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        let mut rand_vars = || {
            let sym = |f: &mut dyn FnMut() -> f64| {
                symmetrize(&DMatrix::from_fn(2, 2, |_, _| f()))
            };
            DecisionVars {
                gamma: next().abs() + 0.1,
                w: DMatrix::from_fn(2, 2, |_, _| next()),
                w_tau: DMatrix::from_fn(2, 2, |_, _| next()),
                y1: sym(&mut next),
                y2: sym(&mut next),
                y3: sym(&mut next),
                y4: DMatrix::from_fn(1, 2, |_, _| next()),
                y5: DMatrix::from_fn(1, 2, |_, _| next()),
            }
        };
        for trial in 0..20 {
            let v1 = rand_vars();
            let v2 = rand_vars();
            let t = (trial as f64) / 19.0;
            let x1 = DVector::from_vec(v1.pack(&layout));
            let x2 = DVector::from_vec(v2.pack(&layout));
            let xm: DVector<f64> = &x1 * t + &x2 * (1.0 - t);
            for b in &problem.blocks {
                let lhs = b.block.eval(xm.as_slice());
                let rhs = b.block.eval(x1.as_slice()) * t + b.block.eval(x2.as_slice()) * (1.0 - t);
                let diff = (&lhs - &rhs).abs().max();
                assert!(
                    diff <= 1e-12 * (1.0 + lhs.abs().max()),
                    "block {} not affine (diff {diff:.3e})",
                    b.block.name
                );
            }
        }
    }

    #[test]
    fn sqrt_spd_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sqrt_spd(&m).unwrap();
        assert_relative_eq!(&s * &s, m, epsilon = 1e-12);
    }
}
