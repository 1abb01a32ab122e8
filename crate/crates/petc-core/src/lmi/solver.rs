//! Feasibility search by alternating projections (Douglas-Rachford averaged
//! reflections) between the affine variety of reachable instance values and
//! the shifted negative-semidefinite cone.
//!
//! Variable domains are folded into the cone as extra diagonal blocks
//! (`floor*I - P <= 0` for definite variables, `floor - v <= 0` for scalar
//! ones), so both projections are exact and the iteration converges whenever
//! a strictly feasible point exists. Budget exhaustion is reported as
//! `InfeasibleBudget`; it is evidence, not a certificate of infeasibility.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::symmat::{eig_sym, project_eig_floor, SymMatrix};

use super::instance::{Assignment, Domain, LmiInstance, VarKind, VerifyStatus};
use super::LmiError;

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Required relative margin: feasible means margin <= -eps_rel * scale.
    pub eps_rel: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Perturb the iterate with seeded noise after this many iterations
    /// without improvement.
    pub stall_restart: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            eps_rel: 1e-8,
            max_iter: 5000,
            seed: 0,
            stall_restart: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    /// The iteration budget ran out before a feasible point was found.
    InfeasibleBudget,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: SolveStatus,
    pub assignment: Assignment,
    /// Margin of the assembled form at `assignment`.
    pub margin: f64,
    /// Strictness threshold the margin was required to beat.
    pub eps_strict: f64,
    pub iterations: usize,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// One stacked diagonal block: the main form plus one block per constrained
/// variable. `terms` maps coordinate index to its contribution per block.
struct Stacked {
    /// Constant part per block (before the dynamic cone shift on block 0).
    f0: Vec<SymMatrix>,
    /// (block index, basis matrix) contributions per coordinate.
    terms: Vec<Vec<(usize, SymMatrix)>>,
    /// Cholesky-free: dense Gram matrix of the stacked basis, factored on use.
    gram: Vec<Vec<f64>>,
}

fn build_stacked(inst: &LmiInstance) -> Stacked {
    let n = inst.n_coords();
    let mut f0 = vec![inst.constant().clone()];
    let mut terms: Vec<Vec<(usize, SymMatrix)>> = inst
        .basis()
        .iter()
        .map(|b| vec![(0usize, b.clone())])
        .collect();
    for spec in inst.vars() {
        match (&spec.kind, spec.domain) {
            (VarKind::SymmetricMatrix { n: vn }, Domain::PosDef { floor }) => {
                let block = f0.len();
                f0.push(SymMatrix::scaled_identity(*vn, floor));
                let mut k = spec.coord_offset;
                for i in 0..*vn {
                    for j in i..*vn {
                        let mut e = SymMatrix::zeros(*vn);
                        e.set_sym(i, j, -1.0);
                        terms[k].push((block, e));
                        k += 1;
                    }
                }
            }
            (VarKind::Scalar, Domain::Positive { floor }) => {
                let block = f0.len();
                f0.push(SymMatrix::scaled_identity(1, floor));
                terms[spec.coord_offset].push((block, SymMatrix::scaled_identity(1, -1.0)));
            }
            (VarKind::Scalar, Domain::NonNegative) => {
                let block = f0.len();
                f0.push(SymMatrix::zeros(1));
                terms[spec.coord_offset].push((block, SymMatrix::scaled_identity(1, -1.0)));
            }
            _ => {}
        }
    }
    // Gram matrix of the stacked basis
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for (bi, fi) in &terms[i] {
                for (bj, fj) in &terms[j] {
                    if bi == bj {
                        acc += fi.dot(fj);
                    }
                }
            }
            gram[i][j] = acc;
            gram[j][i] = acc;
        }
    }
    // tiny ridge keeps the solve well-posed when a coordinate never appears
    let ridge = 1e-12 * (0..n).map(|i| gram[i][i]).fold(1.0f64, |m, v| m.max(v));
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] += ridge;
    }
    Stacked { f0, terms, gram }
}

impl Stacked {
    fn n_blocks(&self) -> usize {
        self.f0.len()
    }

    fn value(&self, theta: &[f64]) -> Vec<SymMatrix> {
        let mut out = self.f0.clone();
        for (k, tk) in self.terms.iter().enumerate() {
            if theta[k] == 0.0 {
                continue;
            }
            for (b, fk) in tk {
                out[*b].axpy(theta[k], fk);
            }
        }
        out
    }

    /// Least-squares projection of stacked matrices onto the affine variety.
    fn project_affine(&self, xs: &[SymMatrix]) -> Vec<f64> {
        let n = self.terms.len();
        let mut rhs = vec![0.0; n];
        for (k, tk) in self.terms.iter().enumerate() {
            for (b, fk) in tk {
                rhs[k] += fk.dot(&xs[*b].sub(&self.f0[*b]));
            }
        }
        solve_spd(&self.gram, &rhs)
    }
}

/// Solve a symmetric positive-(semi)definite system by Gaussian elimination
/// with partial pivoting; sizes here are tiny.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[piv][col].abs() {
                piv = r;
            }
        }
        if m[piv][col] == 0.0 {
            continue;
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= m[col][k] * x[k];
        }
        x[col] = if m[col][col] != 0.0 {
            acc / m[col][col]
        } else {
            0.0
        };
    }
    x
}

fn clamp_domains(inst: &LmiInstance, theta: &mut [f64]) {
    for spec in inst.vars() {
        match (&spec.kind, spec.domain) {
            (VarKind::SymmetricMatrix { n }, Domain::PosDef { floor }) => {
                let mut m = SymMatrix::zeros(*n);
                let mut k = spec.coord_offset;
                for i in 0..*n {
                    for j in i..*n {
                        m.set_sym(i, j, theta[k]);
                        k += 1;
                    }
                }
                let spec_eig = eig_sym(&m);
                if spec_eig.min() < floor {
                    let floored = project_eig_floor(&m, floor);
                    let mut k = spec.coord_offset;
                    for i in 0..*n {
                        for j in i..*n {
                            theta[k] = floored.get(i, j);
                            k += 1;
                        }
                    }
                }
            }
            (VarKind::Scalar, Domain::Positive { floor }) => {
                let k = spec.coord_offset;
                if theta[k] < floor {
                    theta[k] = floor;
                }
            }
            (VarKind::Scalar, Domain::NonNegative) => {
                let k = spec.coord_offset;
                if theta[k] < 0.0 {
                    theta[k] = 0.0;
                }
            }
            _ => {}
        }
    }
}

/// Search for a strictly feasible assignment. Deterministic for a fixed
/// `(instance, options)` pair.
pub fn solve_feasibility(
    inst: &LmiInstance,
    opts: SolveOptions,
) -> Result<FeasibilityResult, LmiError> {
    let stacked = build_stacked(inst);
    let n_blocks = stacked.n_blocks();
    let mut z: Vec<SymMatrix> = stacked.f0.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut best_theta: Vec<f64> = vec![0.0; inst.n_coords()];
    clamp_domains(inst, &mut best_theta);
    let mut best_margin = f64::INFINITY;
    let mut best_eps = 0.0;
    let mut last_improve = 0usize;
    // cone depth follows the scale of the current candidate value
    let mut shift = 2.0 * opts.eps_rel * inst.constant().frobenius().max(1.0);

    for it in 0..opts.max_iter {
        // cone projection of the current iterate (main block pushed past the shift)
        let mut cone: Vec<SymMatrix> = Vec::with_capacity(n_blocks);
        for (b, zb) in z.iter().enumerate() {
            let target = if b == 0 { -shift } else { 0.0 };
            let spec = eig_sym(zb);
            let clamped: Vec<f64> = spec.values.iter().map(|&v| v.min(target)).collect();
            cone.push(spec.reconstruct(&clamped));
        }

        // candidate: affine projection of the cone point, domains clamped
        let mut theta_c = stacked.project_affine(&cone);
        clamp_domains(inst, &mut theta_c);
        let f_c = inst.value_packed(&theta_c);
        let scale = f_c.frobenius().max(1.0);
        let eps_strict = opts.eps_rel * scale;
        let margin = crate::symmat::nsd_margin(&f_c);
        if margin <= -eps_strict {
            let assignment = inst.unpack(&theta_c);
            debug_assert_eq!(
                inst.verify_with(&assignment, 0.0)?.status,
                VerifyStatus::Pass
            );
            return Ok(FeasibilityResult {
                status: SolveStatus::Feasible,
                assignment,
                margin,
                eps_strict,
                iterations: it,
            });
        }
        if margin < best_margin {
            best_margin = margin;
            best_theta = theta_c;
            best_eps = eps_strict;
            last_improve = it;
        }
        shift = 2.0 * eps_strict;

        // Douglas-Rachford step: z <- z + V(2C(z) - z) - C(z)
        let reflected: Vec<SymMatrix> = cone
            .iter()
            .zip(&z)
            .map(|(c, zb)| c.scale(2.0).sub(zb))
            .collect();
        let theta_v = stacked.project_affine(&reflected);
        let v = stacked.value(&theta_v);
        for b in 0..n_blocks {
            z[b] = z[b].add(&v[b]).sub(&cone[b]);
        }

        // stalled runs get a seeded shake; divergent runs get cut short
        let z_norm: f64 = z.iter().map(|m| m.frobenius()).sum();
        if !z_norm.is_finite() || z_norm > 1e14 {
            break;
        }
        if it - last_improve >= opts.stall_restart {
            let amp = 0.1 * z_norm.max(1.0) / inst.dim() as f64;
            for zb in z.iter_mut() {
                let n = zb.n();
                for i in 0..n {
                    for j in i..n {
                        let noise: f64 = rng.random_range(-amp..=amp);
                        zb.add_sym(i, j, noise);
                    }
                }
            }
            last_improve = it;
        }
    }

    Ok(FeasibilityResult {
        status: SolveStatus::InfeasibleBudget,
        assignment: inst.unpack(&best_theta),
        margin: best_margin,
        eps_strict: best_eps,
        iterations: opts.max_iter,
    })
}
