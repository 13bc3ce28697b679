//! Dense semidefinite programming: minimize a linear objective subject to
//! affine symmetric matrix blocks being positive semidefinite.
//!
//! The reference solver is a primal-dual path-following interior-point
//! method with Nesterov-Todd scaling and a Mehrotra predictor-corrector,
//! sized for problems with a few hundred scalar variables and block sides
//! up to a few dozen. It sits behind [`solve`] so an external-solver
//! adapter can be substituted without touching callers.
//!
//! Problem form, for variable vector `x` of length `m`:
//!
//! ```text
//! minimize    c . x
//! subject to  F_b(x) = F_b0 + sum_i x_i F_bi  PSD   for every block b
//! ```
//!
//! with dual variables `Z_b` PSD, optimality conditions `F_b(x) = S_b`,
//! `sum_b <F_bi, Z_b> = c_i` and `Z_b S_b = 0`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{min_eig_sym, symmetrize};
use crate::{Error, Result};

/// Sparse coefficient matrix as `(row, col, value)` triplets, with both
/// mirror entries present for off-diagonal positions.
pub type SparseTriplets = Vec<(usize, usize, f64)>;

/// One affine PSD constraint block `F0 + sum_i x_i F_i >= 0`.
///
/// Coefficient matrices are stored as full (already mirrored) triplet lists
/// per variable, sorted by variable index.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    pub side: usize,
    pub f0: DMatrix<f64>,
    /// `(variable index, triplets)`, sorted by variable index.
    pub coeffs: Vec<(usize, SparseTriplets)>,
    /// Human-readable provenance label, used in diagnostics.
    pub name: String,
}

impl AffineBlock {
    /// Evaluate the block at `x`.
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut f = self.f0.clone();
        for (var, triplets) in &self.coeffs {
            let xv = x[*var];
            if xv != 0.0 {
                for &(r, c, v) in triplets {
                    f[(r, c)] += xv * v;
                }
            }
        }
        f
    }

    fn check(&self, n_vars: usize) -> Result<()> {
        if self.side == 0 {
            return Err(Error::Dimension(format!("block '{}' has side 0", self.name)));
        }
        if self.f0.nrows() != self.side || self.f0.ncols() != self.side {
            return Err(Error::Dimension(format!(
                "block '{}': constant term is {}x{}, expected side {}",
                self.name,
                self.f0.nrows(),
                self.f0.ncols(),
                self.side
            )));
        }
        for (var, triplets) in &self.coeffs {
            if *var >= n_vars {
                return Err(Error::Dimension(format!(
                    "block '{}': variable index {var} out of range ({n_vars} vars)",
                    self.name
                )));
            }
            for &(r, c, _) in triplets {
                if r >= self.side || c >= self.side {
                    return Err(Error::Dimension(format!(
                        "block '{}': entry ({r},{c}) outside side {}",
                        self.name, self.side
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A conic program: linear objective plus affine PSD blocks.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub n_vars: usize,
    /// Objective coefficients; for the LMI synthesis problems this is the
    /// unit vector on the leading gamma variable.
    pub objective: Vec<f64>,
    pub blocks: Vec<AffineBlock>,
}

impl ConicProgram {
    /// Program minimizing the first variable (gamma).
    pub fn minimize_first(n_vars: usize, blocks: Vec<AffineBlock>) -> Self {
        let mut objective = vec![0.0; n_vars];
        if n_vars > 0 {
            objective[0] = 1.0;
        }
        Self {
            n_vars,
            objective,
            blocks,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 {
            return Err(Error::Dimension("program has no variables".into()));
        }
        if self.objective.len() != self.n_vars {
            return Err(Error::Dimension(format!(
                "objective has {} coefficients for {} variables",
                self.objective.len(),
                self.n_vars
            )));
        }
        if self.blocks.is_empty() {
            return Err(Error::Parameter("program has no constraint blocks".into()));
        }
        for b in &self.blocks {
            b.check(self.n_vars)?;
        }
        Ok(())
    }

    /// Serialize in the sparse text exchange format: one line per affine
    /// coefficient `block row col var value`, with `var = -1` for the
    /// constant term. Objective coefficients use `obj` lines.
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# sdp-sparse v1\n");
        out.push_str(&format!("vars {}\n", self.n_vars));
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                out.push_str(&format!("obj {i} {c:.17e}\n"));
            }
        }
        for (bi, b) in self.blocks.iter().enumerate() {
            out.push_str(&format!("block {bi} {} {}\n", b.side, b.name));
            for r in 0..b.side {
                for c in 0..b.side {
                    let v = b.f0[(r, c)];
                    if v != 0.0 {
                        out.push_str(&format!("{bi} {r} {c} -1 {v:.17e}\n"));
                    }
                }
            }
            for (var, triplets) in &b.coeffs {
                for &(r, c, v) in triplets {
                    out.push_str(&format!("{bi} {r} {c} {var} {v:.17e}\n"));
                }
            }
        }
        out
    }

    /// Parse the sparse text exchange format produced by
    /// [`ConicProgram::to_sparse_text`].
    pub fn from_sparse_text(text: &str) -> Result<Self> {
        let mut n_vars = 0usize;
        let mut objective: Vec<f64> = Vec::new();
        let mut blocks: Vec<AffineBlock> = Vec::new();
        use std::collections::BTreeMap;
        let mut coeff_maps: Vec<BTreeMap<usize, SparseTriplets>> = Vec::new();

        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap();
            let ctx = |m: &str| Error::Config(format!("sparse program line {}: {m}", ln + 1));
            match head {
                "vars" => {
                    n_vars = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad vars count"))?;
                    objective = vec![0.0; n_vars];
                }
                "obj" => {
                    let i: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad obj index"))?;
                    let v: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad obj value"))?;
                    if i >= n_vars {
                        return Err(ctx("obj index out of range"));
                    }
                    objective[i] = v;
                }
                "block" => {
                    let bi: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad block id"))?;
                    if bi != blocks.len() {
                        return Err(ctx("block ids must be sequential"));
                    }
                    let side: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad block side"))?;
                    let name = parts.collect::<Vec<_>>().join(" ");
                    blocks.push(AffineBlock {
                        side,
                        f0: DMatrix::zeros(side, side),
                        coeffs: Vec::new(),
                        name,
                    });
                    coeff_maps.push(BTreeMap::new());
                }
                _ => {
                    let bi: usize = head.parse().map_err(|_| ctx("bad block id"))?;
                    if bi >= blocks.len() {
                        return Err(ctx("entry references unknown block"));
                    }
                    let r: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad row"))?;
                    let c: usize = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad col"))?;
                    let var: i64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad var"))?;
                    let v: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| ctx("bad value"))?;
                    if var < 0 {
                        blocks[bi].f0[(r, c)] += v;
                    } else {
                        coeff_maps[bi]
                            .entry(var as usize)
                            .or_default()
                            .push((r, c, v));
                    }
                }
            }
        }
        for (b, map) in blocks.iter_mut().zip(coeff_maps) {
            b.coeffs = map.into_iter().collect();
        }
        let program = ConicProgram {
            n_vars,
            objective,
            blocks,
        };
        program.validate()?;
        Ok(program)
    }
}

/// Solver tolerances and caps.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Relative primal residual tolerance.
    pub tol_primal: f64,
    /// Relative dual residual tolerance.
    pub tol_dual: f64,
    /// Relative duality gap tolerance.
    pub tol_gap: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            tol_gap: 1e-6,
            max_iters: 200,
        }
    }
}

/// Terminal status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

/// Solve outcome with diagnostics.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective value `c . x` (gamma* for the synthesis problems).
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
    /// Minimum eigenvalue across all blocks at the returned point.
    pub min_block_eig: f64,
    /// Normalized dual-improving-ray measure when status is Infeasible.
    pub infeasibility: Option<f64>,
}

struct BlockScaling {
    /// `R` with `W = R R^T` (NT scaling point, `W Z W = S`).
    r: DMatrix<f64>,
    /// `R^{-1}`.
    r_inv: DMatrix<f64>,
    /// `W^{-1} = R^{-T} R^{-1}`.
    w_inv: DMatrix<f64>,
    /// Scaled spectrum `lambda` (`R^{-1} S R^{-T} = R^T Z R = diag(lambda)`).
    lambda: DVector<f64>,
}

/// Largest `alpha` in `(0, 1]` keeping `S + alpha * dS` PSD, given the
/// Cholesky factor of `S`.
fn max_psd_step(chol_s: &Cholesky<f64, nalgebra::Dyn>, ds: &DMatrix<f64>) -> f64 {
    // S + a dS >= 0  <=>  I + a L^-1 dS L^-T >= 0.
    let li_ds = match chol_s.l().solve_lower_triangular(ds) {
        Some(m) => m,
        None => return 0.0,
    };
    let m = match chol_s.l().solve_lower_triangular(&li_ds.transpose()) {
        Some(m) => m,
        None => return 0.0,
    };
    let lam_min = min_eig_sym(&m);
    if lam_min >= 0.0 {
        1.0
    } else {
        (-1.0 / lam_min).min(1.0)
    }
}

fn chol_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = Cholesky::new(symmetrize(m)) {
        return Some(c);
    }
    let n = m.nrows();
    let scale = m.trace().abs().max(1.0) / n as f64;
    let mut jitter = 1e-14 * scale;
    for _ in 0..4 {
        let jittered = symmetrize(m) + DMatrix::identity(n, n) * jitter;
        if let Some(c) = Cholesky::new(jittered) {
            return Some(c);
        }
        jitter *= 100.0;
    }
    None
}

/// Frobenius inner product of two equally sized matrices.
fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solve the program. Deterministic for identical inputs and options. The
/// optional warm start is used as an initial centering point when it is
/// strictly feasible, otherwise the solver cold-starts.
pub fn solve(
    program: &ConicProgram,
    options: &SolverOptions,
    warm_start: Option<&[f64]>,
) -> Result<SdpSolution> {
    program.validate()?;
    let m = program.n_vars;
    let nb = program.blocks.len();
    let c = DVector::from_column_slice(&program.objective);
    let n_total: usize = program.blocks.iter().map(|b| b.side).sum();

    // -- Initial point ------------------------------------------------------
    let mut x = DVector::zeros(m);
    let mut s: Vec<DMatrix<f64>> = Vec::with_capacity(nb);
    let mut z: Vec<DMatrix<f64>> = Vec::with_capacity(nb);

    let mut warm_ok = false;
    if let Some(ws) = warm_start {
        if ws.len() != m {
            return Err(Error::Dimension(format!(
                "warm start has {} entries for {} variables",
                ws.len(),
                m
            )));
        }
        let f_ws: Vec<DMatrix<f64>> = program.blocks.iter().map(|b| b.eval(ws)).collect();
        let strictly_feasible = f_ws
            .iter()
            .all(|f| min_eig_sym(f) > 1e-8 * (1.0 + f.norm()));
        if strictly_feasible {
            x = DVector::from_column_slice(ws);
            let obj = c.dot(&x);
            let mu0 = 1e-2 * (1.0 + obj.abs());
            for f in f_ws {
                let sym = symmetrize(&f);
                let zi = sym
                    .clone()
                    .try_inverse()
                    .map(|inv| symmetrize(&inv) * mu0)
                    .unwrap_or_else(|| DMatrix::identity(sym.nrows(), sym.ncols()));
                s.push(sym);
                z.push(zi);
            }
            warm_ok = true;
        }
    }
    if !warm_ok {
        s.clear();
        z.clear();
        // Scale S to the block data and Z so the initial dual residual
        // c - A(Z) is O(1).
        let mut adjoint_identity: DVector<f64> = DVector::zeros(m);
        for b in &program.blocks {
            for (var, triplets) in &b.coeffs {
                let mut tr = 0.0;
                for &(r, cc, v) in triplets {
                    if r == cc {
                        tr += v;
                    }
                }
                adjoint_identity[*var] += tr;
            }
        }
        let z0 = ((1.0 + c.norm()) / (1.0 + adjoint_identity.norm())).min(1.0);
        for b in &program.blocks {
            let f = b.eval(x.as_slice());
            let scale = 1.0 + f.norm();
            s.push(DMatrix::identity(b.side, b.side) * scale);
            z.push(DMatrix::identity(b.side, b.side) * z0);
        }
    }

    let data_norm: f64 = program
        .blocks
        .iter()
        .map(|b| b.f0.norm_squared())
        .sum::<f64>()
        .sqrt();
    let c_norm = c.norm();

    let fail = |iters: usize, x: &DVector<f64>, why: &str| {
        log::warn!("sdp solve failed: {why}");
        SdpSolution {
            status: SolveStatus::NumericalFailure,
            x: x.as_slice().to_vec(),
            objective: c.dot(x),
            iterations: iters,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            rel_gap: f64::NAN,
            min_block_eig: f64::NAN,
            infeasibility: None,
        }
    };

    let mut iter = 0usize;
    loop {
        // -- Residuals and convergence test ---------------------------------
        let f_x: Vec<DMatrix<f64>> =
            program.blocks.iter().map(|b| b.eval(x.as_slice())).collect();
        // r_p = F(x) - S (want zero).
        let r_p: Vec<DMatrix<f64>> = f_x.iter().zip(&s).map(|(f, si)| f - si).collect();
        // r_d_i = c_i - sum_b <F_bi, Z_b> (want zero); per-block partials
        // folded in block order to keep the summation deterministic.
        let adjoint = |mats: &[DMatrix<f64>]| -> DVector<f64> {
            let partials: Vec<Vec<(usize, f64)>> = program
                .blocks
                .iter()
                .zip(mats.iter())
                .map(|(b, zb)| {
                    b.coeffs
                        .iter()
                        .map(|(var, triplets)| {
                            let mut acc = 0.0;
                            for &(r, cc, v) in triplets {
                                acc += v * zb[(r, cc)];
                            }
                            (*var, acc)
                        })
                        .collect()
                })
                .collect();
            let mut out: DVector<f64> = DVector::zeros(m);
            for part in partials {
                for (var, acc) in part {
                    out[var] += acc;
                }
            }
            out
        };
        let r_d = &c - adjoint(&z);
        let gap: f64 = z.iter().zip(&s).map(|(zb, sb)| frob_dot(zb, sb)).sum();
        let pobj = c.dot(&x);
        let dobj: f64 = -program
            .blocks
            .iter()
            .zip(&z)
            .map(|(b, zb)| frob_dot(&b.f0, zb))
            .sum::<f64>();
        let nrm_p: f64 = r_p.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt();
        let rel_p = nrm_p / (1.0 + data_norm);
        let rel_d = r_d.norm() / (1.0 + c_norm);
        let rel_gap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());

        log::trace!(
            "sdp iter {iter}: rel_p {rel_p:.2e} rel_d {rel_d:.2e} gap {gap:.3e} rel_gap {rel_gap:.2e} pobj {pobj:.6}"
        );
        if rel_p <= options.tol_primal && rel_d <= options.tol_dual && rel_gap <= options.tol_gap {
            let min_eig = f_x.iter().map(min_eig_sym).fold(f64::INFINITY, f64::min);
            return Ok(SdpSolution {
                status: SolveStatus::Optimal,
                x: x.as_slice().to_vec(),
                objective: pobj,
                iterations: iter,
                primal_residual: rel_p,
                dual_residual: rel_d,
                rel_gap,
                min_block_eig: min_eig,
                infeasibility: None,
            });
        }

        // -- Primal infeasibility certificate -------------------------------
        // A dual improving ray: Z >= 0 with A(Z) ~ 0 and -<F0, Z> > 0 proves
        // that no x satisfies F(x) >= 0.
        let tz: f64 = z.iter().map(|zb| zb.trace()).sum();
        if iter > 3 && tz > 1.0 {
            let ray_resid = adjoint(&z).norm() / tz;
            let ray_obj = dobj / tz;
            if ray_resid <= 1e-9 * (1.0 + c_norm) && ray_obj > 1e-7 * (1.0 + data_norm) {
                return Ok(SdpSolution {
                    status: SolveStatus::Infeasible,
                    x: x.as_slice().to_vec(),
                    objective: pobj,
                    iterations: iter,
                    primal_residual: rel_p,
                    dual_residual: rel_d,
                    rel_gap,
                    min_block_eig: f_x.iter().map(min_eig_sym).fold(f64::INFINITY, f64::min),
                    infeasibility: Some(ray_obj),
                });
            }
        }

        if iter >= options.max_iters {
            let min_eig = f_x.iter().map(min_eig_sym).fold(f64::INFINITY, f64::min);
            return Ok(SdpSolution {
                status: SolveStatus::MaxIterations,
                x: x.as_slice().to_vec(),
                objective: pobj,
                iterations: iter,
                primal_residual: rel_p,
                dual_residual: rel_d,
                rel_gap,
                min_block_eig: min_eig,
                infeasibility: None,
            });
        }

        // -- Nesterov-Todd scaling per block ---------------------------------
        let mu = gap / n_total as f64;
        if !mu.is_finite() {
            return Ok(fail(iter, &x, "complementarity became non-finite"));
        }
        let phase_t0 = std::time::Instant::now();
        type ScaledBlock = (
            BlockScaling,
            Cholesky<f64, nalgebra::Dyn>,
            Cholesky<f64, nalgebra::Dyn>,
        );
        let scaled: Vec<std::result::Result<ScaledBlock, &'static str>> = s
            .iter()
            .zip(z.iter())
            .map(|(sb, zb)| {
                let cs = chol_with_jitter(sb).ok_or("primal slack lost definiteness")?;
                let cz = chol_with_jitter(zb).ok_or("dual variable lost definiteness")?;
                // M = L_z^T L_s, SVD M = U diag(lambda) V^T:
                //   R      = L_s V lambda^{-1/2}   (W = R R^T, W Z W = S)
                //   R^{-1} = lambda^{-1/2} U^T L_z^T
                let mmat = cz.l().transpose() * cs.l();
                let svd = mmat.svd(true, true);
                let (u, v_t) = match (&svd.u, &svd.v_t) {
                    (Some(u), Some(v_t)) => (u.clone(), v_t.clone()),
                    _ => return Err("NT scaling SVD failed"),
                };
                let lambda = svd.singular_values.clone();
                if lambda.iter().any(|l| *l <= 0.0 || !l.is_finite()) {
                    return Err("NT spectrum degenerate");
                }
                let lam_inv_sqrt = DMatrix::from_diagonal(&lambda.map(|l| 1.0 / l.sqrt()));
                let r = cs.l() * v_t.transpose() * &lam_inv_sqrt;
                let r_inv = &lam_inv_sqrt * u.transpose() * cz.l().transpose();
                let w_inv = r_inv.transpose() * &r_inv;
                Ok((
                    BlockScaling {
                        r,
                        r_inv,
                        w_inv,
                        lambda,
                    },
                    cs,
                    cz,
                ))
            })
            .collect();
        let mut scalings: Vec<BlockScaling> = Vec::with_capacity(nb);
        let mut chol_s_list = Vec::with_capacity(nb);
        let mut chol_z_list = Vec::with_capacity(nb);
        for r in scaled {
            match r {
                Ok((sc, cs, cz)) => {
                    scalings.push(sc);
                    chol_s_list.push(cs);
                    chol_z_list.push(cz);
                }
                Err(why) => return Ok(fail(iter, &x, why)),
            }
        }
        let t_scaling = phase_t0.elapsed();

        // -- Schur complement H_ij = sum_b <F_bi, W^-1 F_bj W^-1> ------------
        // Per block: G_i = W^-1 F_bi W^-1 for each active variable, then
        // <G_i, F_bj> over pairs; per-block triplet lists are folded in
        // block order.
        let phase_t0 = std::time::Instant::now();
        let h_parts: Vec<Vec<(usize, usize, f64)>> = program
            .blocks
            .iter()
            .zip(scalings.iter())
            .map(|(b, sc)| {
                let n = b.side;
                let mut g_cache: Vec<DMatrix<f64>> = Vec::with_capacity(b.coeffs.len());
                let mut rows_scratch: Vec<usize> = Vec::new();
                for (_, triplets) in &b.coeffs {
                    // T = F_i W^-1 has nonzero rows only where F_i does, so
                    // G = W^-1 T reduces to |rows| column-scaled updates.
                    let mut t = DMatrix::zeros(n, n);
                    rows_scratch.clear();
                    for &(r, cc, v) in triplets {
                        for k in 0..n {
                            t[(r, k)] += v * sc.w_inv[(cc, k)];
                        }
                        if !rows_scratch.contains(&r) {
                            rows_scratch.push(r);
                        }
                    }
                    let mut g = DMatrix::zeros(n, n);
                    for &r in &rows_scratch {
                        let wcol = sc.w_inv.column(r);
                        for j in 0..n {
                            let trj = t[(r, j)];
                            if trj != 0.0 {
                                g.column_mut(j).axpy(trj, &wcol, 1.0);
                            }
                        }
                    }
                    g_cache.push(g);
                }
                let mut part = Vec::with_capacity(b.coeffs.len() * (b.coeffs.len() + 1) / 2);
                for (ii, (vi, _)) in b.coeffs.iter().enumerate() {
                    let gi = &g_cache[ii];
                    for (vj, tj) in b.coeffs.iter().skip(ii) {
                        let mut acc = 0.0;
                        for &(r, cc, v) in tj {
                            acc += v * gi[(r, cc)];
                        }
                        part.push((*vi, *vj, acc));
                    }
                }
                part
            })
            .collect();
        let mut h = DMatrix::zeros(m, m);
        for part in h_parts {
            for (vi, vj, acc) in part {
                h[(vi, vj)] += acc;
                if vi != vj {
                    h[(vj, vi)] += acc;
                }
            }
        }
        let t_schur = phase_t0.elapsed();
        let phase_t0 = std::time::Instant::now();
        let h_chol = {
            let mut attempt = Cholesky::new(symmetrize(&h));
            if attempt.is_none() {
                let ridge_base = h.trace().abs().max(1.0) / m as f64;
                let mut ridge = 1e-13 * ridge_base;
                for _ in 0..6 {
                    attempt = Cholesky::new(symmetrize(&h) + DMatrix::identity(m, m) * ridge);
                    if attempt.is_some() {
                        break;
                    }
                    ridge *= 100.0;
                }
            }
            match attempt {
                Some(c) => c,
                None => return Ok(fail(iter, &x, "Schur complement not positive definite")),
            }
        };
        let t_chol = phase_t0.elapsed();

        // Shared rhs pieces: K_b = R^-T G_b R^-1 - W^-1 r_p W^-1, with the
        // centering matrix G_b in the scaled space.
        let rhs_from = |g_scaled: &[DMatrix<f64>]| -> DVector<f64> {
            let partials: Vec<Vec<(usize, f64)>> = program
                .blocks
                .iter()
                .zip(scalings.iter())
                .zip(g_scaled.iter().zip(r_p.iter()))
                .map(|((b, sc), (gs, rp))| {
                    let k = sc.r_inv.transpose() * gs * &sc.r_inv - &sc.w_inv * rp * &sc.w_inv;
                    b.coeffs
                        .iter()
                        .map(|(var, triplets)| {
                            let mut acc = 0.0;
                            for &(r, cc, v) in triplets {
                                acc += v * k[(r, cc)];
                            }
                            (*var, acc)
                        })
                        .collect()
                })
                .collect();
            let mut rhs = -r_d.clone();
            for part in partials {
                for (var, acc) in part {
                    rhs[var] += acc;
                }
            }
            rhs
        };

        let directions = |dx: &DVector<f64>, g_scaled: &[DMatrix<f64>]| {
            let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = program
                .blocks
                .iter()
                .zip(scalings.iter())
                .zip(g_scaled.iter().zip(r_p.iter()))
                .map(|((b, sc), (gs, rp))| {
                    let mut ds = rp.clone();
                    for (var, triplets) in &b.coeffs {
                        let xv = dx[*var];
                        if xv != 0.0 {
                            for &(r, cc, v) in triplets {
                                ds[(r, cc)] += xv * v;
                            }
                        }
                    }
                    let dz = symmetrize(
                        &(sc.r_inv.transpose() * gs * &sc.r_inv - &sc.w_inv * &ds * &sc.w_inv),
                    );
                    (symmetrize(&ds), dz)
                })
                .collect();
            let mut ds_list = Vec::with_capacity(nb);
            let mut dz_list = Vec::with_capacity(nb);
            for (ds, dz) in pairs {
                ds_list.push(ds);
                dz_list.push(dz);
            }
            (ds_list, dz_list)
        };

        // Block-wise maximal PSD steps, reduced by min (order-insensitive).
        let psd_steps = |mats: &[DMatrix<f64>], chols: &[Cholesky<f64, nalgebra::Dyn>]| -> f64 {
            mats.iter()
                .zip(chols.iter())
                .map(|(d, ch)| max_psd_step(ch, d))
                .fold(1.0_f64, f64::min)
        };

        let phase_t0 = std::time::Instant::now();

        // -- Predictor (affine scaling) --------------------------------------
        // In scaled space the centering equation L_lam(dZ~ + dS~) = Rc~ has
        // Rc~ = -lambda^2 for the affine step, giving G_aff = -diag(lambda).
        let g_aff: Vec<DMatrix<f64>> = scalings
            .iter()
            .map(|sc| -DMatrix::from_diagonal(&sc.lambda))
            .collect();
        let rhs_aff = rhs_from(&g_aff);
        let dx_aff = h_chol.solve(&rhs_aff);
        let (ds_aff, dz_aff) = directions(&dx_aff, &g_aff);

        let alpha_p_aff = psd_steps(&ds_aff, &chol_s_list);
        let alpha_d_aff = psd_steps(&dz_aff, &chol_z_list);

        let t_pred = phase_t0.elapsed();
        let phase_t0 = std::time::Instant::now();
        let gap_parts: Vec<f64> = (0..nb)
            .map(|i| {
                let s_new = &s[i] + &ds_aff[i] * alpha_p_aff;
                let z_new = &z[i] + &dz_aff[i] * alpha_d_aff;
                frob_dot(&z_new, &s_new)
            })
            .collect();
        let gap_aff: f64 = gap_parts.iter().sum();
        let mu_aff = (gap_aff / n_total as f64).max(0.0);
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-8, 1.0);

        // -- Corrector --------------------------------------------------------
        // Rc~ = sigma mu I - lambda^2 - 0.5 (dZ~ dS~ + dS~ dZ~), then
        // G = elementwise Rc~_ij * 2 / (lambda_i + lambda_j).
        let g_comb: Vec<DMatrix<f64>> = (0..nb)
            .map(|i| {
                let sc = &scalings[i];
                let n = program.blocks[i].side;
                let dz_t = sc.r.transpose() * &dz_aff[i] * &sc.r;
                let ds_t = &sc.r_inv * &ds_aff[i] * sc.r_inv.transpose();
                let cross = (&dz_t * &ds_t + &ds_t * &dz_t) * 0.5;
                let mut rc = -cross;
                for d in 0..n {
                    rc[(d, d)] += sigma * mu - sc.lambda[d] * sc.lambda[d];
                }
                let mut g = DMatrix::zeros(n, n);
                for r in 0..n {
                    for cc in 0..n {
                        g[(r, cc)] = 2.0 * rc[(r, cc)] / (sc.lambda[r] + sc.lambda[cc]);
                    }
                }
                symmetrize(&g)
            })
            .collect();
        let rhs_comb = rhs_from(&g_comb);
        let dx = h_chol.solve(&rhs_comb);
        let (ds, dz) = directions(&dx, &g_comb);

        let alpha_p = (0.99 * psd_steps(&ds, &chol_s_list)).min(1.0);
        let alpha_d = (0.99 * psd_steps(&dz, &chol_z_list)).min(1.0);
        log::trace!(
            "sdp iter {iter} phases: scaling {:.1?} schur {:.1?} chol {:.1?} predictor {:.1?} corrector {:.1?}",
            t_scaling, t_schur, t_chol, t_pred, phase_t0.elapsed()
        );
        log::trace!(
            "sdp iter {iter} steps: alpha_aff ({alpha_p_aff:.3}, {alpha_d_aff:.3}) sigma {sigma:.3e} alpha ({alpha_p:.3}, {alpha_d:.3})"
        );

        if alpha_p < 1e-12 && alpha_d < 1e-12 {
            return Ok(fail(iter, &x, "step length collapsed"));
        }

        x += &dx * alpha_p;
        for i in 0..nb {
            s[i] += &ds[i] * alpha_p;
            s[i] = symmetrize(&s[i]);
            z[i] += &dz[i] * alpha_d;
            z[i] = symmetrize(&z[i]);
        }
        iter += 1;
    }
}

/// Per-block minimum eigenvalues of `F_b(x)` at a candidate point; passes
/// iff every block is PSD down to `-tolerance`.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// `(block name, min eigenvalue)` in block order.
    pub blocks: Vec<(String, f64)>,
    pub min_eig: f64,
    pub pass: bool,
}

pub fn check_feasibility(
    program: &ConicProgram,
    candidate: &[f64],
    tolerance: f64,
) -> Result<FeasibilityReport> {
    if candidate.len() != program.n_vars {
        return Err(Error::Dimension(format!(
            "candidate has {} entries for {} variables",
            candidate.len(),
            program.n_vars
        )));
    }
    let mut blocks = Vec::with_capacity(program.blocks.len());
    let mut min_eig = f64::INFINITY;
    for b in &program.blocks {
        let eig = min_eig_sym(&b.eval(candidate));
        min_eig = min_eig.min(eig);
        blocks.push((b.name.clone(), eig));
    }
    Ok(FeasibilityReport {
        blocks,
        min_eig,
        pass: min_eig >= -tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_1x1(name: &str, constant: f64, gamma_coeff: f64) -> AffineBlock {
        AffineBlock {
            side: 1,
            f0: DMatrix::from_element(1, 1, constant),
            coeffs: vec![(0, vec![(0, 0, gamma_coeff)])],
            name: name.into(),
        }
    }

    /// Tight tolerances for tests asserting absolute optimality gaps.
    fn tight() -> SolverOptions {
        SolverOptions {
            tol_primal: 1e-9,
            tol_dual: 1e-9,
            tol_gap: 1e-9,
            max_iters: 200,
        }
    }

    /// min gamma s.t. [[gamma, c],[c, 1]] >= 0, optimum gamma* = c^2.
    fn schur_toy(c: f64) -> ConicProgram {
        let mut f0 = DMatrix::zeros(2, 2);
        f0[(0, 1)] = c;
        f0[(1, 0)] = c;
        f0[(1, 1)] = 1.0;
        ConicProgram::minimize_first(
            1,
            vec![AffineBlock {
                side: 2,
                f0,
                coeffs: vec![(0, vec![(0, 0, 1.0)])],
                name: "schur-toy".into(),
            }],
        )
    }

    #[test]
    fn schur_toy_optimum_is_one() {
        let p = schur_toy(1.0);
        let sol = solve(&p, &tight(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6, "gamma* = {}", sol.objective);
    }

    #[test]
    fn scalar_bound_optimum_is_five() {
        let p = ConicProgram::minimize_first(1, vec![block_1x1("gamma-minus-5", -5.0, 1.0)]);
        let sol = solve(&p, &tight(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 5.0).abs() < 1e-6, "gamma* = {}", sol.objective);
    }

    #[test]
    fn infeasible_program_detected() {
        // gamma >= 1 and -gamma - 1 >= 0 cannot both hold.
        let p = ConicProgram::minimize_first(
            1,
            vec![
                block_1x1("lower", -1.0, 1.0),
                block_1x1("upper", -1.0, -1.0),
            ],
        );
        let sol = solve(&p, &SolverOptions::default(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.infeasibility.is_some());
    }

    #[test]
    fn check_feasibility_reports_violations() {
        let p = ConicProgram::minimize_first(1, vec![block_1x1("gamma-minus-5", -5.0, 1.0)]);
        let rep = check_feasibility(&p, &[0.0], 1e-6).unwrap();
        assert!(!rep.pass);
        assert!((rep.min_eig + 5.0).abs() < 1e-12);
        let rep = check_feasibility(&p, &[5.0], 1e-6).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn solution_satisfies_feasibility_postcondition() {
        let p = schur_toy(-2.5);
        let sol = solve(&p, &SolverOptions::default(), None).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let rep = check_feasibility(&p, &sol.x, 1e-6).unwrap();
        assert!(rep.pass);
        assert!(sol.rel_gap <= 1e-6);
    }

    #[test]
    fn warm_start_accepted_from_interior_point() {
        let p = schur_toy(1.0);
        // gamma = 4 is strictly feasible.
        let sol = solve(&p, &tight(), Some(&[4.0])).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-6);
    }

    #[test]
    fn determinism_bitwise() {
        let p = schur_toy(1.7);
        let a = solve(&p, &SolverOptions::default(), None).unwrap();
        let b = solve(&p, &SolverOptions::default(), None).unwrap();
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        assert_eq!(a.iterations, b.iterations);
        assert!(a.status == b.status);
    }

    #[test]
    fn sparse_text_round_trip() {
        let p = schur_toy(0.3);
        let text = p.to_sparse_text();
        let q = ConicProgram::from_sparse_text(&text).unwrap();
        assert_eq!(p.n_vars, q.n_vars);
        assert_eq!(p.blocks.len(), q.blocks.len());
        let sol_p = solve(&p, &SolverOptions::default(), None).unwrap();
        let sol_q = solve(&q, &SolverOptions::default(), None).unwrap();
        assert_eq!(sol_p.objective.to_bits(), sol_q.objective.to_bits());
    }

    #[test]
    fn malformed_programs_rejected() {
        // Objective length mismatch.
        let p = ConicProgram {
            n_vars: 2,
            objective: vec![1.0],
            blocks: vec![block_1x1("b", 0.0, 1.0)],
        };
        assert!(solve(&p, &SolverOptions::default(), None).is_err());
        // Out-of-range variable.
        let p = ConicProgram::minimize_first(1, vec![block_1x1("b", 0.0, 1.0)]);
        let mut bad = p.clone();
        bad.blocks[0].coeffs[0].0 = 3;
        assert!(bad.validate().is_err());
        // No blocks.
        let p = ConicProgram::minimize_first(1, vec![]);
        assert!(solve(&p, &SolverOptions::default(), None).is_err());
    }
}
