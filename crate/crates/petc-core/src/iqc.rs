//! Incremental multiplier matrices: canned constructors for Lipschitz and
//! sector-bounded nonlinearities, the incremental quadratic form, and a
//! sampling-based validity check.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::symmat::{Mat, SymMatrix};

#[derive(Debug, Error)]
pub enum IqcError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("nonlinearity declared zero_at_zero but |p(0)| = {0}")]
    NotZeroAtZero(f64),
}

/// Symmetric multiplier certifying the incremental quadratic constraint
/// `[dq; dp]' M [dq; dp] >= 0` of a nonlinearity with input dimension `n_q`
/// and output dimension `n_p`.
#[derive(Debug, Clone)]
pub struct MultiplierMatrix {
    pub m: SymMatrix,
    pub n_q: usize,
    pub n_p: usize,
}

impl MultiplierMatrix {
    pub fn new(m: SymMatrix, n_q: usize, n_p: usize) -> Result<Self, IqcError> {
        if m.n() != n_q + n_p {
            return Err(IqcError::DimMismatch(format!(
                "multiplier is {}x{} but n_q + n_p = {}",
                m.n(),
                m.n(),
                n_q + n_p
            )));
        }
        Ok(MultiplierMatrix { m, n_q, n_p })
    }

    pub fn dim(&self) -> usize {
        self.n_q + self.n_p
    }

    pub fn scale(&self, s: f64) -> MultiplierMatrix {
        MultiplierMatrix {
            m: self.m.scale(s),
            n_q: self.n_q,
            n_p: self.n_p,
        }
    }
}

type VectorMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Static nonlinearity `p: R^{n_q} -> R^{n_p}` wrapped with its dimensions.
/// The map must be side-effect free; it is shared across simulations.
#[derive(Clone)]
pub struct Nonlinearity {
    pub n_q: usize,
    pub n_p: usize,
    eval: VectorMap,
    pub zero_at_zero: bool,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("n_q", &self.n_q)
            .field("n_p", &self.n_p)
            .field("zero_at_zero", &self.zero_at_zero)
            .finish()
    }
}

impl Nonlinearity {
    pub fn new(
        n_q: usize,
        n_p: usize,
        zero_at_zero: bool,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Result<Self, IqcError> {
        let p = Nonlinearity {
            n_q,
            n_p,
            eval: Arc::new(eval),
            zero_at_zero,
        };
        if zero_at_zero {
            let at_zero = p.eval(&vec![0.0; n_q]);
            let norm = at_zero.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return Err(IqcError::NotZeroAtZero(norm));
            }
        }
        Ok(p)
    }

    /// Scalar sine nonlinearity, the canonical 1-Lipschitz example.
    pub fn sine() -> Self {
        Nonlinearity::new(1, 1, true, |q| vec![q[0].sin()]).unwrap()
    }

    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        debug_assert_eq!(q.len(), self.n_q);
        let out = (self.eval)(q);
        debug_assert_eq!(out.len(), self.n_p);
        out
    }

    /// Increment `p(q + dq) - p(q)`.
    pub fn increment(&self, q: &[f64], dq: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = q.iter().zip(dq).map(|(a, b)| a + b).collect();
        let p1 = self.eval(&shifted);
        let p0 = self.eval(q);
        p1.iter().zip(&p0).map(|(a, b)| a - b).collect()
    }
}

/// Multiplier for a globally Lipschitz nonlinearity with constant `L`:
/// `diag(L^2 I_{n_q}, -I_{n_p})`.
pub fn lipschitz_multiplier(l: f64, n_q: usize, n_p: usize) -> Result<MultiplierMatrix, IqcError> {
    if !(l > 0.0) {
        return Err(IqcError::DimMismatch(format!(
            "Lipschitz constant must be > 0, got {l}"
        )));
    }
    let mut d = vec![l * l; n_q];
    d.extend(std::iter::repeat_n(-1.0, n_p));
    MultiplierMatrix::new(SymMatrix::diag(&d), n_q, n_p)
}

/// Multiplier for a sector-bounded nonlinearity with boundary matrices
/// `K1, K2` (each `n_p x n_q`) and symmetric shaping matrix `S`:
///
/// ```text
/// M = [ -K1' S K2 - K2' S K1    *   ]
///     [      S (K1 + K2)      -2 S  ]
/// ```
pub fn sector_multiplier(k1: &Mat, k2: &Mat, s: &SymMatrix) -> Result<MultiplierMatrix, IqcError> {
    let n_p = k1.rows();
    let n_q = k1.cols();
    if k2.rows() != n_p || k2.cols() != n_q {
        return Err(IqcError::DimMismatch(format!(
            "K1 is {}x{}, K2 is {}x{}",
            n_p,
            n_q,
            k2.rows(),
            k2.cols()
        )));
    }
    if s.n() != n_p {
        return Err(IqcError::DimMismatch(format!(
            "S is {}x{}, expected {n_p}x{n_p}",
            s.n(),
            s.n()
        )));
    }
    let sm = s.to_mat();
    let upper_left = {
        let a = k1.transpose().mul(&sm).mul(k2);
        let b = k2.transpose().mul(&sm).mul(k1);
        // exactly symmetric: a + b = (K1'SK2) + (K1'SK2)' up to data symmetry
        SymMatrix::from_mat_symmetrized(&a.add(&b)).scale(-1.0)
    };
    let lower_left = sm.mul(&k1.add(k2));
    let lower_right = s.scale(-2.0);
    let n = n_q + n_p;
    let mut m = SymMatrix::zeros(n);
    for i in 0..n_q {
        for j in i..n_q {
            m.set_sym(i, j, upper_left.get(i, j));
        }
    }
    for i in 0..n_p {
        for j in 0..n_q {
            m.set_sym(n_q + i, j, lower_left[(i, j)]);
        }
        for j in i..n_p {
            m.set_sym(n_q + i, n_q + j, lower_right.get(i, j));
        }
    }
    MultiplierMatrix::new(m, n_q, n_p)
}

/// The incremental quadratic form `[dq; dp]' M [dq; dp]`.
pub fn iqc_form(m: &MultiplierMatrix, dq: &[f64], dp: &[f64]) -> f64 {
    assert_eq!(dq.len(), m.n_q, "dq dimension");
    assert_eq!(dp.len(), m.n_p, "dp dimension");
    let mut z = Vec::with_capacity(m.dim());
    z.extend_from_slice(dq);
    z.extend_from_slice(dp);
    m.m.quad_form(&z)
}

/// Outcome of a randomized multiplier check: the worst (minimum) value of the
/// incremental form over the sampled pairs and the pair attaining it.
#[derive(Debug, Clone)]
pub struct MultiplierCheck {
    pub min_value: f64,
    pub witness_q1: Vec<f64>,
    pub witness_q2: Vec<f64>,
    pub n_samples: usize,
}

/// Acceptance threshold: sampling cannot prove validity, so small negative
/// values from floating-point noise are tolerated.
pub const CHECK_TOL: f64 = -1e-9;

impl MultiplierCheck {
    pub fn passes(&self) -> bool {
        self.min_value >= CHECK_TOL
    }
}

/// Evaluate the incremental quadratic form on seeded uniform pairs
/// `(q1, q2)` in `[-radius, radius]^{n_q}` and report the minimum. A negative
/// minimum disproves the multiplier; a non-negative one is evidence only.
pub fn check_multiplier(
    m: &MultiplierMatrix,
    p: &Nonlinearity,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<MultiplierCheck, IqcError> {
    if p.n_q != m.n_q || p.n_p != m.n_p {
        return Err(IqcError::DimMismatch(format!(
            "nonlinearity is ({}, {}), multiplier is ({}, {})",
            p.n_q, p.n_p, m.n_q, m.n_p
        )));
    }
    assert!(n_samples >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = MultiplierCheck {
        min_value: f64::INFINITY,
        witness_q1: vec![0.0; p.n_q],
        witness_q2: vec![0.0; p.n_q],
        n_samples,
    };
    for _ in 0..n_samples {
        let q1: Vec<f64> = (0..p.n_q)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        let q2: Vec<f64> = (0..p.n_q)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        let dq: Vec<f64> = q2.iter().zip(&q1).map(|(a, b)| a - b).collect();
        let p1 = p.eval(&q1);
        let p2 = p.eval(&q2);
        let dp: Vec<f64> = p2.iter().zip(&p1).map(|(a, b)| a - b).collect();
        let v = iqc_form(m, &dq, &dp);
        if v < best.min_value {
            best.min_value = v;
            best.witness_q1 = q1;
            best.witness_q2 = q2;
        }
    }
    Ok(best)
}
