//! Constructors for the concrete matrix inequalities: state-feedback gain
//! synthesis, state-feedback triggering certification, output-feedback
//! certification with its coupling condition, and the linear special cases.

use crate::symmat::{assemble, BlockLayout, Mat, SymMatrix};
use crate::systems::{build_output_matrices, IqcPlant, ObserverDesign, StateFeedbackGains};

use super::instance::{Domain, LmiBuilder, LmiInstance};
use super::LmiError;

/// Default eigenvalue floor for positive-definite matrix variables.
pub const PD_FLOOR: f64 = 1e-3;
/// Default floor for strictly positive scalar variables.
pub const SCALAR_FLOOR: f64 = 1e-6;

fn pd() -> Domain {
    Domain::PosDef { floor: PD_FLOOR }
}

fn pos() -> Domain {
    Domain::Positive {
        floor: SCALAR_FLOOR,
    }
}

/// Sparse `rows x cols` selector assembled from `(row_offset, col_offset,
/// block)` entries.
fn selector(rows: usize, cols: usize, entries: &[(usize, usize, &Mat)]) -> Mat {
    let mut s = Mat::zeros(rows, cols);
    for (r0, c0, m) in entries {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                s[(r0 + i, c0 + j)] = (*m)[(i, j)];
            }
        }
    }
    s
}

/// Gain-synthesis inequality in variables `P1 > 0` (n_x), `P2` (n_u x n_x),
/// `K2` (n_u x n_p), `d > 0`, `sigma > 0`:
///
/// ```text
/// [ A P1 + P1 A' + B P2 + P2' B' + alpha P1   E + B K2   E_w  ]
/// [ *                                         0          0    ]  + sigma S' M S <= 0
/// [ *                                         *          -d I ]
/// ```
///
/// Afterwards `K1 = P2 P1^{-1}` stabilizes the continuous closed loop.
pub fn build_gain_synthesis(plant: &IqcPlant, alpha: f64) -> Result<LmiInstance, LmiError> {
    if !(alpha > 0.0) {
        return Err(LmiError::Shape(format!("alpha must be > 0, got {alpha}")));
    }
    let (n_x, n_u, n_p, n_q, n_w) = (
        plant.n_x(),
        plant.n_u(),
        plant.n_p(),
        plant.n_q(),
        plant.n_w(),
    );
    let layout = BlockLayout::new(&[n_x, n_p, n_w]);
    let dim = layout.dim();

    let f0 = assemble(
        &layout,
        &[(0, 1, plant.e.clone()), (0, 2, plant.e_w.clone())],
    )?;

    let s_sel = selector(
        n_q + n_p,
        dim,
        &[(0, 0, &plant.c_q), (n_q, n_x, &Mat::identity(n_p))],
    );
    let sigma_basis = plant.m.m.congruence(&s_sel);

    let mut d_basis = SymMatrix::zeros(dim);
    for i in 0..n_w {
        d_basis.set_sym(n_x + n_p + i, n_x + n_p + i, -1.0);
    }

    let a = plant.a.clone();
    let b = plant.b.clone();
    let layout_p1 = layout.clone();
    let layout_p2 = layout.clone();
    let layout_k2 = layout.clone();
    let b2 = b.clone();
    let b3 = b.clone();

    Ok(LmiBuilder::new("gain-synthesis", layout)
        .constant(f0)
        .sym_matrix("P1", n_x, pd(), move |p1| {
            let p1m = p1.to_mat();
            let phi = a
                .mul(&p1m)
                .add(&p1m.mul(&a.transpose()))
                .add(&p1m.scale(alpha));
            assemble(&layout_p1, &[(0, 0, phi)]).unwrap()
        })?
        .matrix("P2", n_u, n_x, move |p2| {
            let bp2 = b2.mul(p2);
            assemble(&layout_p2, &[(0, 0, bp2.add(&bp2.transpose()))]).unwrap()
        })?
        .matrix("K2", n_u, n_p, move |k2| {
            assemble(&layout_k2, &[(0, 1, b3.mul(k2))]).unwrap()
        })?
        .scalar("d", pos(), d_basis)
        .scalar("sigma", pos(), sigma_basis)
        .build())
}

/// State-feedback triggering certificate in variables `P > 0` (n_x),
/// `mu, gamma, d > 0`, `sigma1, sigma2 >= 0`, for fixed gains. Block rows:
/// state, held-sample error, nonlinearity, its sampled increment, the
/// weighted error, and the disturbance.
pub fn build_state_certificate(
    plant: &IqcPlant,
    gains: &StateFeedbackGains,
    alpha: f64,
) -> Result<LmiInstance, LmiError> {
    if !(alpha > 0.0) {
        return Err(LmiError::Shape(format!("alpha must be > 0, got {alpha}")));
    }
    let (n_x, n_p, n_q, n_w) = (plant.n_x(), plant.n_p(), plant.n_q(), plant.n_w());
    let layout = BlockLayout::new(&[n_x, n_x, n_p, n_p, n_x, n_w]);
    let dim = layout.dim();
    let off = |i: usize| layout.offset(i);

    let k2 = if gains.k2.cols() == 0 {
        Mat::zeros(plant.n_u(), n_p)
    } else {
        gains.k2.clone()
    };
    let bk1 = plant.b.mul(&gains.k1);
    let bk2 = plant.b.mul(&k2);
    let ak = plant.a.add(&bk1);
    let ebk2 = plant.e.add(&bk2);

    let mut half_alpha_eye = Mat::zeros(n_x, n_x);
    for i in 0..n_x {
        half_alpha_eye[(i, i)] = 0.5 * alpha;
    }
    let f0 = assemble(
        &layout,
        &[
            (0, 4, ak.transpose()),
            (1, 4, bk1.transpose().scale(-1.0).add(&half_alpha_eye)),
            (2, 4, ebk2.transpose()),
            (3, 4, bk2.transpose()),
            (4, 5, plant.e_w.clone()),
        ],
    )?;

    // q = C_q x, p picked from the p slot
    let s1 = selector(
        n_q + n_p,
        dim,
        &[(0, off(0), &plant.c_q), (n_q, off(2), &Mat::identity(n_p))],
    );
    // dq = -C_q e, dp picked from the increment slot
    let s2 = selector(
        n_q + n_p,
        dim,
        &[
            (0, off(1), &plant.c_q.scale(-1.0)),
            (n_q, off(3), &Mat::identity(n_p)),
        ],
    );
    let sigma1_basis = plant.m.m.congruence(&s1);
    let sigma2_basis = plant.m.m.congruence(&s2);

    let mut mu_basis = SymMatrix::zeros(dim);
    for i in 0..n_x {
        mu_basis.set_sym(off(1) + i, off(4) + i, -1.0);
    }
    let mut gamma_basis = SymMatrix::zeros(dim);
    for i in 0..n_x {
        gamma_basis.set_sym(off(1) + i, off(1) + i, -1.0);
        gamma_basis.set_sym(off(4) + i, off(4) + i, -1.0);
    }
    let mut d_basis = SymMatrix::zeros(dim);
    for i in 0..n_w {
        d_basis.set_sym(off(5) + i, off(5) + i, -1.0);
    }

    let layout_p = layout.clone();
    let (a_c, e_w_c) = (ak.clone(), plant.e_w.clone());
    let (bk1_c, ebk2_c, bk2_c) = (bk1.clone(), ebk2.clone(), bk2.clone());

    Ok(LmiBuilder::new("state-feedback-certificate", layout)
        .constant(f0)
        .sym_matrix("P", n_x, pd(), move |p| {
            let pm = p.to_mat();
            let psi = pm
                .mul(&a_c)
                .add(&a_c.transpose().mul(&pm))
                .add(&pm.scale(alpha));
            assemble(
                &layout_p,
                &[
                    (0, 0, psi),
                    (0, 1, pm.mul(&bk1_c).scale(-1.0)),
                    (0, 2, pm.mul(&ebk2_c)),
                    (0, 3, pm.mul(&bk2_c)),
                    (0, 5, pm.mul(&e_w_c)),
                ],
            )
            .unwrap()
        })?
        .scalar("mu", pos(), mu_basis)
        .scalar("gamma", pos(), gamma_basis)
        .scalar("d", pos(), d_basis)
        .scalar("sigma1", Domain::NonNegative, sigma1_basis)
        .scalar("sigma2", Domain::NonNegative, sigma2_basis)
        .build())
}

/// Output-feedback triggering certificate in variables `P > 0` (2 n_x),
/// `a1, a2, b1, b2, mu1, mu2, d > 0`, `sigma1..3 >= 0`. Block rows: the
/// (state, estimation-error) pair, the two held-sample errors, the
/// nonlinearity and its two increments, the weighted errors, and the
/// disturbance.
pub fn build_output_certificate(
    plant: &IqcPlant,
    design: &ObserverDesign,
    alpha: f64,
) -> Result<LmiInstance, LmiError> {
    if !(alpha > 0.0) {
        return Err(LmiError::Shape(format!("alpha must be > 0, got {alpha}")));
    }
    let c = plant.c.as_ref().ok_or(LmiError::MissingOutput)?;
    let (n_x, n_p, n_q, n_w, n_y) = (plant.n_x(), plant.n_p(), plant.n_q(), plant.n_w(), c.rows());
    let cl = build_output_matrices(plant, design).map_err(|e| LmiError::Shape(e.to_string()))?;
    let n_eta = n_y + n_x;
    let layout = BlockLayout::new(&[2 * n_x, n_eta, n_p, n_p, n_p, n_eta, n_w]);
    let dim = layout.dim();
    let off = |i: usize| layout.offset(i);

    let mut half_alpha_eye = Mat::zeros(n_eta, n_eta);
    for i in 0..n_eta {
        half_alpha_eye[(i, i)] = 0.5 * alpha;
    }
    let f0 = assemble(
        &layout,
        &[
            (0, 5, cl.a3.transpose()),
            (1, 5, cl.a4.transpose().add(&half_alpha_eye)),
            (2, 5, cl.h5.transpose()),
            (3, 5, cl.h6.transpose()),
            (4, 5, cl.h7.transpose()),
            (5, 6, cl.h8.clone()),
        ],
    )?;

    // column offsets inside the stacked coordinate vector
    let col_x = off(0);
    let col_ehat = off(0) + n_x;
    let col_ye = off(1);
    let col_xe = off(1) + n_y;
    let eye_p = Mat::identity(n_p);

    // absolute constraint: q = C_q x, p
    let s1 = selector(
        n_q + n_p,
        dim,
        &[(0, col_x, &plant.c_q), (n_q, off(2), &eye_p)],
    );
    // observer increment: dq = -(C_q + L1 C) ehat - L1 y_e
    let cq_l1c = plant.c_q.add(&design.l1.mul(c));
    let s2 = selector(
        n_q + n_p,
        dim,
        &[
            (0, col_ehat, &cq_l1c.scale(-1.0)),
            (0, col_ye, &design.l1.scale(-1.0)),
            (n_q, off(3), &eye_p),
        ],
    );
    // controller increment: dq = C_q (x_e - ehat)
    let s3 = selector(
        n_q + n_p,
        dim,
        &[
            (0, col_ehat, &plant.c_q.scale(-1.0)),
            (0, col_xe, &plant.c_q),
            (n_q, off(4), &eye_p),
        ],
    );
    let sigma1_basis = plant.m.m.congruence(&s1);
    let sigma2_basis = plant.m.m.congruence(&s2);
    let sigma3_basis = plant.m.m.congruence(&s3);

    // R1 on the eta diagonal, R2 on the rho diagonal, R3 in the (eta, rho) slot
    let diag_part = |block: usize, first: bool| {
        let mut b = SymMatrix::zeros(dim);
        let o = off(block);
        if first {
            for i in 0..n_y {
                b.set_sym(o + i, o + i, -1.0);
            }
        } else {
            for i in 0..n_x {
                b.set_sym(o + n_y + i, o + n_y + i, -1.0);
            }
        }
        b
    };
    let cross_part = |first: bool| {
        let mut b = SymMatrix::zeros(dim);
        let (oe, or) = (off(1), off(5));
        if first {
            for i in 0..n_y {
                b.set_sym(oe + i, or + i, -1.0);
            }
        } else {
            for i in 0..n_x {
                b.set_sym(oe + n_y + i, or + n_y + i, -1.0);
            }
        }
        b
    };
    let mut d_basis = SymMatrix::zeros(dim);
    for i in 0..n_w {
        d_basis.set_sym(off(6) + i, off(6) + i, -1.0);
    }

    let basis_a1 = diag_part(1, true);
    let basis_a2 = diag_part(1, false);
    let basis_b1 = diag_part(5, true);
    let basis_b2 = diag_part(5, false);
    let basis_mu1 = cross_part(true);
    let basis_mu2 = cross_part(false);

    let layout_p = layout.clone();
    let cl_c = cl.clone();

    Ok(LmiBuilder::new("output-feedback-certificate", layout)
        .constant(f0)
        .sym_matrix("P", 2 * n_x, pd(), move |p| {
            let pm = p.to_mat();
            let psi = pm
                .mul(&cl_c.a1)
                .add(&cl_c.a1.transpose().mul(&pm))
                .add(&pm.scale(alpha));
            assemble(
                &layout_p,
                &[
                    (0, 0, psi),
                    (0, 1, pm.mul(&cl_c.a2)),
                    (0, 2, pm.mul(&cl_c.h1)),
                    (0, 3, pm.mul(&cl_c.h2)),
                    (0, 4, pm.mul(&cl_c.h3)),
                    (0, 6, pm.mul(&cl_c.h4)),
                ],
            )
            .unwrap()
        })?
        .scalar("a1", pos(), basis_a1)
        .scalar("a2", pos(), basis_a2)
        .scalar("b1", pos(), basis_b1)
        .scalar("b2", pos(), basis_b2)
        .scalar("mu1", pos(), basis_mu1)
        .scalar("mu2", pos(), basis_mu2)
        .scalar("d", pos(), d_basis)
        .scalar("sigma1", Domain::NonNegative, sigma1_basis)
        .scalar("sigma2", Domain::NonNegative, sigma2_basis)
        .scalar("sigma3", Domain::NonNegative, sigma3_basis)
        .build())
}

/// Coupling condition tying the triggering-function matrices `P1 > 0` (n_y)
/// and `P2 > 0` (n_x) to a certificate `P` on the (state, estimation-error)
/// pair: `diag(c1 C' P1 C, c2 P2) <= T' P T` with `T = [I 0; I -I]`.
pub fn build_output_coupling(
    p: &SymMatrix,
    c: &Mat,
    c1: f64,
    c2: f64,
) -> Result<LmiInstance, LmiError> {
    let n_x = c.cols();
    let n_y = c.rows();
    if p.n() != 2 * n_x {
        return Err(LmiError::Shape(format!(
            "P must be {}x{}, got {}x{}",
            2 * n_x,
            2 * n_x,
            p.n(),
            p.n()
        )));
    }
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(LmiError::Shape("channel weights must be positive".into()));
    }
    let layout = BlockLayout::new(&[n_x, n_x]);
    let mut t = Mat::zeros(2 * n_x, 2 * n_x);
    for i in 0..n_x {
        t[(i, i)] = 1.0;
        t[(n_x + i, i)] = 1.0;
        t[(n_x + i, n_x + i)] = -1.0;
    }
    let f0 = p.congruence(&t).scale(-1.0);

    let c_mat = c.clone();
    let layout_p1 = layout.clone();
    let layout_p2 = layout.clone();

    Ok(LmiBuilder::new("triggering-coupling", layout)
        .constant(f0)
        .sym_matrix("P1", n_y, pd(), move |p1| {
            let block = p1.congruence(&c_mat).scale(c1).to_mat();
            assemble(&layout_p1, &[(0, 0, block)]).unwrap()
        })?
        .sym_matrix("P2", n_x, pd(), move |p2| {
            assemble(&layout_p2, &[(1, 1, p2.scale(c2).to_mat())]).unwrap()
        })?
        .build())
}

/// Linear special case of the state-feedback certificate (`E = 0`): the
/// nonlinearity block rows and multiplier terms are absent.
pub fn build_linear_state_certificate(
    plant: &IqcPlant,
    k: &Mat,
    alpha: f64,
) -> Result<LmiInstance, LmiError> {
    if !plant.is_linear() {
        return Err(LmiError::NotLinear("plant must have E = 0".into()));
    }
    if !(alpha > 0.0) {
        return Err(LmiError::Shape(format!("alpha must be > 0, got {alpha}")));
    }
    let (n_x, n_w) = (plant.n_x(), plant.n_w());
    let layout = BlockLayout::new(&[n_x, n_x, n_x, n_w]);
    let off = |i: usize| layout.offset(i);

    let bk = plant.b.mul(k);
    let ak = plant.a.add(&bk);
    let mut half_alpha_eye = Mat::zeros(n_x, n_x);
    for i in 0..n_x {
        half_alpha_eye[(i, i)] = 0.5 * alpha;
    }
    let f0 = assemble(
        &layout,
        &[
            (0, 2, ak.transpose()),
            (1, 2, bk.transpose().scale(-1.0).add(&half_alpha_eye)),
            (2, 3, plant.e_w.clone()),
        ],
    )?;

    let mut mu_basis = SymMatrix::zeros(layout.dim());
    for i in 0..n_x {
        mu_basis.set_sym(off(1) + i, off(2) + i, -1.0);
    }
    let mut gamma_basis = SymMatrix::zeros(layout.dim());
    for i in 0..n_x {
        gamma_basis.set_sym(off(1) + i, off(1) + i, -1.0);
        gamma_basis.set_sym(off(2) + i, off(2) + i, -1.0);
    }
    let mut d_basis = SymMatrix::zeros(layout.dim());
    for i in 0..n_w {
        d_basis.set_sym(off(3) + i, off(3) + i, -1.0);
    }

    let layout_p = layout.clone();
    let (ak_c, bk_c, e_w_c) = (ak.clone(), bk.clone(), plant.e_w.clone());

    Ok(LmiBuilder::new("linear-state-certificate", layout)
        .constant(f0)
        .sym_matrix("P", n_x, pd(), move |p| {
            let pm = p.to_mat();
            let psi = pm
                .mul(&ak_c)
                .add(&ak_c.transpose().mul(&pm))
                .add(&pm.scale(alpha));
            assemble(
                &layout_p,
                &[
                    (0, 0, psi),
                    (0, 1, pm.mul(&bk_c).scale(-1.0)),
                    (0, 3, pm.mul(&e_w_c)),
                ],
            )
            .unwrap()
        })?
        .scalar("mu", pos(), mu_basis)
        .scalar("gamma", pos(), gamma_basis)
        .scalar("d", pos(), d_basis)
        .build())
}

/// Linear special case of the output-feedback certificate (`E = 0`) with
/// observer gain `L` and feedback gain `K`.
pub fn build_linear_output_certificate(
    plant: &IqcPlant,
    k: &Mat,
    l: &Mat,
    alpha: f64,
) -> Result<LmiInstance, LmiError> {
    if !plant.is_linear() {
        return Err(LmiError::NotLinear("plant must have E = 0".into()));
    }
    if !(alpha > 0.0) {
        return Err(LmiError::Shape(format!("alpha must be > 0, got {alpha}")));
    }
    let c = plant.c.as_ref().ok_or(LmiError::MissingOutput)?;
    let (n_x, n_w, n_y) = (plant.n_x(), plant.n_w(), c.rows());
    let design = ObserverDesign {
        l1: Mat::zeros(plant.n_q(), n_y),
        l2: l.clone(),
        gains: StateFeedbackGains::new(k.clone(), Mat::zeros(k.rows(), plant.n_p())),
    };
    let cl = build_output_matrices(plant, &design).map_err(|e| LmiError::Shape(e.to_string()))?;
    let n_eta = n_y + n_x;
    let layout = BlockLayout::new(&[2 * n_x, n_eta, n_eta, n_w]);
    let off = |i: usize| layout.offset(i);

    let mut half_alpha_eye = Mat::zeros(n_eta, n_eta);
    for i in 0..n_eta {
        half_alpha_eye[(i, i)] = 0.5 * alpha;
    }
    let f0 = assemble(
        &layout,
        &[
            (0, 2, cl.a3.transpose()),
            (1, 2, cl.a4.transpose().add(&half_alpha_eye)),
            (2, 3, cl.h8.clone()),
        ],
    )?;

    let diag_part = |block: usize, first: bool| {
        let mut b = SymMatrix::zeros(layout.dim());
        let o = off(block);
        if first {
            for i in 0..n_y {
                b.set_sym(o + i, o + i, -1.0);
            }
        } else {
            for i in 0..n_x {
                b.set_sym(o + n_y + i, o + n_y + i, -1.0);
            }
        }
        b
    };
    let cross_part = |first: bool| {
        let mut b = SymMatrix::zeros(layout.dim());
        let (oe, or) = (off(1), off(2));
        if first {
            for i in 0..n_y {
                b.set_sym(oe + i, or + i, -1.0);
            }
        } else {
            for i in 0..n_x {
                b.set_sym(oe + n_y + i, or + n_y + i, -1.0);
            }
        }
        b
    };
    let mut d_basis = SymMatrix::zeros(layout.dim());
    for i in 0..n_w {
        d_basis.set_sym(off(3) + i, off(3) + i, -1.0);
    }

    let basis_a1 = diag_part(1, true);
    let basis_a2 = diag_part(1, false);
    let basis_b1 = diag_part(2, true);
    let basis_b2 = diag_part(2, false);
    let basis_mu1 = cross_part(true);
    let basis_mu2 = cross_part(false);

    let layout_p = layout.clone();
    let cl_c = cl.clone();

    Ok(LmiBuilder::new("linear-output-certificate", layout)
        .constant(f0)
        .sym_matrix("P", 2 * n_x, pd(), move |p| {
            let pm = p.to_mat();
            let psi = pm
                .mul(&cl_c.a1)
                .add(&cl_c.a1.transpose().mul(&pm))
                .add(&pm.scale(alpha));
            assemble(
                &layout_p,
                &[
                    (0, 0, psi),
                    (0, 1, pm.mul(&cl_c.a2)),
                    (0, 3, pm.mul(&cl_c.h4)),
                ],
            )
            .unwrap()
        })?
        .scalar("a1", pos(), basis_a1)
        .scalar("a2", pos(), basis_a2)
        .scalar("b1", pos(), basis_b1)
        .scalar("b2", pos(), basis_b2)
        .scalar("mu1", pos(), basis_mu1)
        .scalar("mu2", pos(), basis_mu2)
        .scalar("d", pos(), d_basis)
        .build())
}

/// Minimize the verification margin over a set of scalar variables by
/// coarse grid search followed by local pattern refinement; used to recover
/// multiplier scalings that published certificates leave unprinted.
pub fn refine_scalars(
    inst: &LmiInstance,
    base: &super::instance::Assignment,
    names: &[&str],
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<(super::instance::Assignment, f64), LmiError> {
    assert!(
        !names.is_empty() && names.len() <= 3,
        "grid search over 1..=3 scalars"
    );
    let mut best = base.clone();
    for name in names {
        best.set_scalar(name, lo);
    }
    let mut best_margin = f64::INFINITY;

    let n_steps = ((hi - lo) / step).round() as usize;
    let mut idx = vec![0usize; names.len()];
    loop {
        let mut cand = base.clone();
        for (k, name) in names.iter().enumerate() {
            cand.set_scalar(name, lo + idx[k] as f64 * step);
        }
        let margin = crate::symmat::nsd_margin(&inst.value(&cand)?);
        if margin < best_margin {
            best_margin = margin;
            best = cand;
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == names.len() {
                break;
            }
            idx[k] += 1;
            if idx[k] <= n_steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == names.len() {
            break;
        }
    }

    // local pattern refinement
    let mut width = step;
    while width > 1e-7 {
        let mut improved = false;
        for name in names {
            let center = best.scalar(name).unwrap();
            for cand_v in [center - width, center + width] {
                if cand_v < 0.0 {
                    continue;
                }
                let mut cand = best.clone();
                cand.set_scalar(name, cand_v);
                let margin = crate::symmat::nsd_margin(&inst.value(&cand)?);
                if margin < best_margin {
                    best_margin = margin;
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            width *= 0.5;
        }
    }
    Ok((best, best_margin))
}
