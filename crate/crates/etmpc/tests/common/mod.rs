//! Shared helpers for the integration and acceptance suites.
#![allow(dead_code)]

use std::path::Path;

use etmpc::config::ScenarioFile;
use etmpc::controller::Scenario;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// The committed surrogate benchmark with its scheduling seed replaced.
pub fn surrogate_scenario(seed: u64) -> Scenario {
    let mut file = ScenarioFile::load(&scenario_path("surrogate.toml")).expect("load surrogate");
    file.reseed(seed);
    file.build().expect("build surrogate")
}

/// Equilibrium variant: zero initial state, zero disturbance.
pub fn equilibrium_scenario() -> Scenario {
    let mut s = surrogate_scenario(1);
    s.x0 = DVector::zeros(2);
    s.disturbance = etmpc::model::DisturbanceSignal::Zero;
    s
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn rand_sym(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let m = rand_matrix(rng, n, n, scale);
    (&m + m.transpose()) * 0.5
}

/// Random SPD matrix `G G^T + margin I`.
pub fn rand_spd(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> DMatrix<f64> {
    let g = rand_matrix(rng, n, n, 1.0);
    &g * g.transpose() + DMatrix::identity(n, n) * margin
}

pub fn rand_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

/// Try to express `target` as a convex combination of `vertices` by
/// enumerating Caratheodory-sized support sets and solving the small
/// barycentric system. Returns the coefficients over the full vertex list.
pub fn convex_hull_coefficients(
    vertices: &[DVector<f64>],
    target: &DVector<f64>,
    tol: f64,
) -> Option<Vec<f64>> {
    let dim = target.len();
    let n = vertices.len();
    let max_support = (dim + 1).min(n);
    let mut support: Vec<usize> = Vec::new();
    fn search(
        vertices: &[DVector<f64>],
        target: &DVector<f64>,
        tol: f64,
        start: usize,
        support: &mut Vec<usize>,
        max_support: usize,
    ) -> Option<Vec<f64>> {
        if !support.is_empty() {
            if let Some(coeffs) = solve_support(vertices, target, support, tol) {
                return Some(coeffs);
            }
        }
        if support.len() == max_support {
            return None;
        }
        for i in start..vertices.len() {
            support.push(i);
            if let Some(c) = search(vertices, target, tol, i + 1, support, max_support) {
                return Some(c);
            }
            support.pop();
        }
        None
    }
    search(vertices, target, tol, 0, &mut support, max_support)
}

/// Schur-complement equivalence counterexamples over `instances` random
/// trials: `[[A, B^T],[B, S]] PSD  <=>  A - B^T S^-1 B PSD` for SPD `S`.
pub fn schur_oracle_counterexamples(instances: usize, seed: u64) -> (usize, usize) {
    let mut rng = rng(seed);
    let psd = |m: &DMatrix<f64>| etmpc::linalg::min_eig_sym(m) >= -1e-9 * (1.0 + m.norm());
    let mut counterexamples = 0usize;
    let mut positives = 0usize;
    for trial in 0..instances {
        let na = 1 + (trial % 6);
        let ns = 1 + (trial % 5);
        let s = rand_spd(&mut rng, ns, 0.2);
        let b = rand_matrix(&mut rng, ns, na, 1.0);
        let a = if trial % 2 == 0 {
            let c = rand_matrix(&mut rng, na, na, 0.7);
            b.transpose() * s.clone().try_inverse().unwrap() * &b
                + &c * c.transpose()
                + DMatrix::identity(na, na) * 1e-6
        } else {
            rand_sym(&mut rng, na, 1.0)
        };
        let mut big = DMatrix::zeros(na + ns, na + ns);
        big.view_mut((0, 0), (na, na)).copy_from(&a);
        big.view_mut((na, na), (ns, ns)).copy_from(&s);
        big.view_mut((na, 0), (ns, na)).copy_from(&b);
        big.view_mut((0, na), (na, ns)).copy_from(&b.transpose());
        let complement = &a - b.transpose() * s.clone().try_inverse().unwrap() * &b;
        let lhs = psd(&big);
        if lhs != psd(&complement) {
            counterexamples += 1;
        }
        if lhs {
            positives += 1;
        }
    }
    (counterexamples, positives)
}

/// Scaling-inequality counterexamples over random `(W, P, gamma)`:
/// `gamma^-1 W^T P W >= W + W^T - gamma P^-1`.
pub fn scaling_oracle_counterexamples(instances: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    let mut counterexamples = 0usize;
    for trial in 0..instances {
        let n = 1 + (trial % 6);
        let w = rand_matrix(&mut rng, n, n, 2.0);
        let p = rand_spd(&mut rng, n, 0.1);
        let gamma: f64 = rng.gen_range(0.05..20.0);
        let lhs = w.transpose() * &p * &w / gamma;
        let rhs = &w + w.transpose() - p.clone().try_inverse().unwrap() * gamma;
        let diff = lhs - rhs;
        if etmpc::linalg::min_eig_sym(&diff) < -1e-9 * (1.0 + diff.norm()) {
            counterexamples += 1;
        }
    }
    counterexamples
}

/// Saturation-hull failures over random `(F, H, x)` with `|h_i^T x| <=
/// u_sat`: `sat(Fx)` must admit nonnegative hull coefficients summing to 1.
pub fn hull_oracle_failures(instances: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    let u_sat = 0.4;
    let mut failures = 0usize;
    for trial in 0..instances {
        let n_u = 1 + (trial % 3);
        let n_x = 1 + (trial % 4);
        let f = rand_matrix(&mut rng, n_u, n_x, 3.0);
        let h = rand_matrix(&mut rng, n_u, n_x, 2.0);
        let mut x = rand_vector(&mut rng, n_x, 2.0);
        let hx = &h * &x;
        let hmax = hx.amax();
        if hmax > u_sat {
            x *= (u_sat / hmax) * rng.gen_range(0.2..1.0);
        }
        let target = etmpc::model::saturate(&(&f * &x), u_sat);
        let vertices: Vec<DVector<f64>> = etmpc::lmi::enumerate_saturation_vertices(n_u)
            .unwrap()
            .iter()
            .map(|sv| (sv.e() * &f + sv.e_minus() * &h) * &x)
            .collect();
        match convex_hull_coefficients(&vertices, &target, 1e-9) {
            Some(coeffs) => {
                let total: f64 = coeffs.iter().sum();
                if (total - 1.0).abs() > 1e-7 || coeffs.iter().any(|c| *c < -1e-9) {
                    failures += 1;
                }
            }
            None => failures += 1,
        }
    }
    failures
}

fn solve_support(
    vertices: &[DVector<f64>],
    target: &DVector<f64>,
    support: &[usize],
    tol: f64,
) -> Option<Vec<f64>> {
    let dim = target.len();
    let k = support.len();
    // Rows: the dim coordinates plus the sum-to-one constraint.
    let a = DMatrix::from_fn(dim + 1, k, |r, c| {
        if r < dim {
            vertices[support[c]][r]
        } else {
            1.0
        }
    });
    let mut b = DVector::zeros(dim + 1);
    b.rows_mut(0, dim).copy_from(target);
    b[dim] = 1.0;
    // Least squares via SVD handles rank-deficient supports.
    let svd = a.clone().svd(true, true);
    let coeffs = svd.solve(&b, 1e-12).ok()?;
    let residual = (&a * &coeffs - &b).norm();
    let scale = 1.0 + target.norm();
    if residual > tol * scale {
        return None;
    }
    if coeffs.iter().any(|c| *c < -1e-9) {
        return None;
    }
    let mut full = vec![0.0; vertices.len()];
    for (i, s) in support.iter().enumerate() {
        full[*s] = coeffs[i].max(0.0);
    }
    Some(full)
}
