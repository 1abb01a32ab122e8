//! Affine symmetric-matrix-valued forms in scalar and matrix decision
//! variables, with sign/definiteness domains, packing of named assignments,
//! and margin verification.

use std::collections::BTreeMap;

use crate::symmat::{nsd_margin, BlockLayout, Mat, SymMatrix};

use super::LmiError;

/// Sign/definiteness constraint attached to a decision variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Free,
    /// Scalar bounded below by a strictly positive floor.
    Positive {
        floor: f64,
    },
    /// Scalar bounded below by zero.
    NonNegative,
    /// Symmetric matrix with eigenvalues bounded below by a positive floor.
    PosDef {
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum VarKind {
    Scalar,
    SymmetricMatrix { n: usize },
    Matrix { rows: usize, cols: usize },
}

impl VarKind {
    pub fn n_coords(&self) -> usize {
        match *self {
            VarKind::Scalar => 1,
            VarKind::SymmetricMatrix { n } => n * (n + 1) / 2,
            VarKind::Matrix { rows, cols } => rows * cols,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VarSpec {
    pub name: String,
    pub kind: VarKind,
    pub domain: Domain,
    pub(crate) coord_offset: usize,
}

/// An affine LMI `F(theta) = F0 + sum_k theta_k B_k <= 0`, where the scalar
/// coordinates theta are the packed entries of all decision variables.
/// Affinity is structural: each variable contributes through a linear map
/// sampled on canonical basis elements, so no bilinear term can be expressed.
#[derive(Debug, Clone)]
pub struct LmiInstance {
    pub name: String,
    pub layout: BlockLayout,
    pub(crate) constant: SymMatrix,
    pub(crate) vars: Vec<VarSpec>,
    pub(crate) basis: Vec<SymMatrix>,
    pub(crate) n_coords: usize,
}

/// Named values for every decision variable of an instance.
#[derive(Debug, Clone, Default)]
pub struct Assignment {
    scalars: BTreeMap<String, f64>,
    syms: BTreeMap<String, SymMatrix>,
    mats: BTreeMap<String, Mat>,
}

impl Assignment {
    pub fn new() -> Self {
        Assignment::default()
    }

    pub fn set_scalar(&mut self, name: &str, v: f64) -> &mut Self {
        self.scalars.insert(name.to_string(), v);
        self
    }

    pub fn set_sym(&mut self, name: &str, v: SymMatrix) -> &mut Self {
        self.syms.insert(name.to_string(), v);
        self
    }

    pub fn set_mat(&mut self, name: &str, v: Mat) -> &mut Self {
        self.mats.insert(name.to_string(), v);
        self
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn sym(&self, name: &str) -> Option<&SymMatrix> {
        self.syms.get(name)
    }

    pub fn mat(&self, name: &str) -> Option<&Mat> {
        self.mats.get(name)
    }

    pub fn scalars(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scalars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn syms(&self) -> impl Iterator<Item = (&str, &SymMatrix)> {
        self.syms.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn mats(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.mats.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Outcome of a margin check at a concrete assignment.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Largest eigenvalue of the assembled form.
    pub margin: f64,
    /// Frobenius norm of the assembled form, floored at 1.
    pub scale: f64,
    /// Margin divided by scale.
    pub margin_rel: f64,
    /// Absolute tolerance used for the pass decision.
    pub eps_abs: f64,
    /// Domain constraints that the assignment violates (empty when valid).
    pub domain_violations: Vec<String>,
    pub status: VerifyStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyStatus {
    Pass,
    Fail,
    /// The assignment violates a variable domain; the margin is still
    /// reported but meaningless as a certificate.
    Invalid,
}

/// Default relative verification tolerance: accepts externally supplied
/// certificates printed with finite precision.
pub const DEFAULT_VERIFY_EPS_REL: f64 = 1e-8;

impl LmiInstance {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn n_coords(&self) -> usize {
        self.n_coords
    }

    pub fn vars(&self) -> &[VarSpec] {
        &self.vars
    }

    pub fn var(&self, name: &str) -> Option<&VarSpec> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub(crate) fn constant(&self) -> &SymMatrix {
        &self.constant
    }

    pub(crate) fn basis(&self) -> &[SymMatrix] {
        &self.basis
    }

    /// Pack a named assignment into the coordinate vector.
    pub fn pack(&self, a: &Assignment) -> Result<Vec<f64>, LmiError> {
        let mut theta = vec![0.0; self.n_coords];
        for spec in &self.vars {
            match &spec.kind {
                VarKind::Scalar => {
                    let v = a
                        .scalar(&spec.name)
                        .ok_or_else(|| LmiError::MissingVariable(spec.name.clone()))?;
                    theta[spec.coord_offset] = v;
                }
                VarKind::SymmetricMatrix { n } => {
                    let m = a
                        .sym(&spec.name)
                        .ok_or_else(|| LmiError::MissingVariable(spec.name.clone()))?;
                    if m.n() != *n {
                        return Err(LmiError::Shape(format!(
                            "variable {} expects dimension {n}, got {}",
                            spec.name,
                            m.n()
                        )));
                    }
                    let mut k = spec.coord_offset;
                    for i in 0..*n {
                        for j in i..*n {
                            theta[k] = m.get(i, j);
                            k += 1;
                        }
                    }
                }
                VarKind::Matrix { rows, cols } => {
                    let m = a
                        .mat(&spec.name)
                        .ok_or_else(|| LmiError::MissingVariable(spec.name.clone()))?;
                    if m.rows() != *rows || m.cols() != *cols {
                        return Err(LmiError::Shape(format!(
                            "variable {} expects {rows}x{cols}, got {}x{}",
                            spec.name,
                            m.rows(),
                            m.cols()
                        )));
                    }
                    let mut k = spec.coord_offset;
                    for i in 0..*rows {
                        for j in 0..*cols {
                            theta[k] = m[(i, j)];
                            k += 1;
                        }
                    }
                }
            }
        }
        Ok(theta)
    }

    /// Unpack a coordinate vector into a named assignment.
    pub fn unpack(&self, theta: &[f64]) -> Assignment {
        assert_eq!(theta.len(), self.n_coords);
        let mut a = Assignment::new();
        for spec in &self.vars {
            match &spec.kind {
                VarKind::Scalar => {
                    a.set_scalar(&spec.name, theta[spec.coord_offset]);
                }
                VarKind::SymmetricMatrix { n } => {
                    let mut m = SymMatrix::zeros(*n);
                    let mut k = spec.coord_offset;
                    for i in 0..*n {
                        for j in i..*n {
                            m.set_sym(i, j, theta[k]);
                            k += 1;
                        }
                    }
                    a.set_sym(&spec.name, m);
                }
                VarKind::Matrix { rows, cols } => {
                    let mut m = Mat::zeros(*rows, *cols);
                    let mut k = spec.coord_offset;
                    for i in 0..*rows {
                        for j in 0..*cols {
                            m[(i, j)] = theta[k];
                            k += 1;
                        }
                    }
                    a.set_mat(&spec.name, m);
                }
            }
        }
        a
    }

    pub(crate) fn value_packed(&self, theta: &[f64]) -> SymMatrix {
        let mut f = self.constant.clone();
        for (k, b) in self.basis.iter().enumerate() {
            if theta[k] != 0.0 {
                f.axpy(theta[k], b);
            }
        }
        f
    }

    /// Assemble the form at a named assignment.
    pub fn value(&self, a: &Assignment) -> Result<SymMatrix, LmiError> {
        Ok(self.value_packed(&self.pack(a)?))
    }

    /// Domain violations of an assignment (empty when all hold).
    pub fn domain_violations(&self, a: &Assignment) -> Result<Vec<String>, LmiError> {
        let mut out = Vec::new();
        for spec in &self.vars {
            match (&spec.kind, spec.domain) {
                (VarKind::Scalar, Domain::Positive { floor }) => {
                    let v = a
                        .scalar(&spec.name)
                        .ok_or_else(|| LmiError::MissingVariable(spec.name.clone()))?;
                    if v < floor {
                        out.push(format!("{} = {v} below positive floor {floor}", spec.name));
                    }
                }
                (VarKind::Scalar, Domain::NonNegative) => {
                    let v = a
                        .scalar(&spec.name)
                        .ok_or_else(|| LmiError::MissingVariable(spec.name.clone()))?;
                    if v < 0.0 {
                        out.push(format!("{} = {v} negative", spec.name));
                    }
                }
                (VarKind::SymmetricMatrix { .. }, Domain::PosDef { .. }) => {
                    let m = a
                        .sym(&spec.name)
                        .ok_or_else(|| LmiError::MissingVariable(spec.name.clone()))?;
                    let min_eig = crate::symmat::eig_sym(m).min();
                    if min_eig <= 0.0 {
                        out.push(format!(
                            "{} has minimum eigenvalue {min_eig}, not positive definite",
                            spec.name
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(out)
    }

    /// Margin report at an assignment, with relative tolerance `eps_rel`
    /// (absolute tolerance `eps_rel * max(1, |F|_F)`).
    pub fn verify_with(&self, a: &Assignment, eps_rel: f64) -> Result<VerifyReport, LmiError> {
        let f = self.value(a)?;
        let margin = nsd_margin(&f);
        let scale = f.frobenius().max(1.0);
        let eps_abs = eps_rel * scale;
        let domain_violations = self.domain_violations(a)?;
        let status = if !domain_violations.is_empty() {
            VerifyStatus::Invalid
        } else if margin <= eps_abs {
            VerifyStatus::Pass
        } else {
            VerifyStatus::Fail
        };
        Ok(VerifyReport {
            margin,
            scale,
            margin_rel: margin / scale,
            eps_abs,
            domain_violations,
            status,
        })
    }

    /// Margin report at the default tolerance.
    pub fn verify(&self, a: &Assignment) -> Result<VerifyReport, LmiError> {
        self.verify_with(a, DEFAULT_VERIFY_EPS_REL)
    }
}

/// Incremental construction of an [`LmiInstance`]: declare the block layout
/// and constant part, then add variables with the linear map sending each
/// one into the form. Maps are sampled on canonical basis elements; a map
/// that is not linear (nonzero at zero) is rejected.
pub struct LmiBuilder {
    name: String,
    layout: BlockLayout,
    constant: SymMatrix,
    vars: Vec<VarSpec>,
    basis: Vec<SymMatrix>,
    n_coords: usize,
}

impl LmiBuilder {
    pub fn new(name: &str, layout: BlockLayout) -> Self {
        let dim = layout.dim();
        LmiBuilder {
            name: name.to_string(),
            layout,
            constant: SymMatrix::zeros(dim),
            vars: Vec::new(),
            basis: Vec::new(),
            n_coords: 0,
        }
    }

    pub fn constant(mut self, f0: SymMatrix) -> Self {
        assert_eq!(f0.n(), self.layout.dim());
        self.constant = f0;
        self
    }

    /// Scalar variable entering as `v * basis`.
    pub fn scalar(mut self, name: &str, domain: Domain, basis: SymMatrix) -> Self {
        assert_eq!(basis.n(), self.layout.dim());
        self.vars.push(VarSpec {
            name: name.to_string(),
            kind: VarKind::Scalar,
            domain,
            coord_offset: self.n_coords,
        });
        self.basis.push(basis);
        self.n_coords += 1;
        self
    }

    /// Symmetric matrix variable entering through the linear `map`.
    pub fn sym_matrix(
        mut self,
        name: &str,
        n: usize,
        domain: Domain,
        map: impl Fn(&SymMatrix) -> SymMatrix,
    ) -> Result<Self, LmiError> {
        let zero_img = map(&SymMatrix::zeros(n));
        if zero_img.max_abs() != 0.0 {
            return Err(LmiError::NotLinear(name.to_string()));
        }
        let offset = self.n_coords;
        for i in 0..n {
            for j in i..n {
                let mut e = SymMatrix::zeros(n);
                e.set_sym(i, j, 1.0);
                let img = map(&e);
                assert_eq!(img.n(), self.layout.dim());
                self.basis.push(img);
                self.n_coords += 1;
            }
        }
        self.vars.push(VarSpec {
            name: name.to_string(),
            kind: VarKind::SymmetricMatrix { n },
            domain,
            coord_offset: offset,
        });
        Ok(self)
    }

    /// General matrix variable entering through the linear `map`.
    pub fn matrix(
        mut self,
        name: &str,
        rows: usize,
        cols: usize,
        map: impl Fn(&Mat) -> SymMatrix,
    ) -> Result<Self, LmiError> {
        let zero_img = map(&Mat::zeros(rows, cols));
        if zero_img.max_abs() != 0.0 {
            return Err(LmiError::NotLinear(name.to_string()));
        }
        let offset = self.n_coords;
        for i in 0..rows {
            for j in 0..cols {
                let mut e = Mat::zeros(rows, cols);
                e[(i, j)] = 1.0;
                let img = map(&e);
                assert_eq!(img.n(), self.layout.dim());
                self.basis.push(img);
                self.n_coords += 1;
            }
        }
        self.vars.push(VarSpec {
            name: name.to_string(),
            kind: VarKind::Matrix { rows, cols },
            domain: Domain::Free,
            coord_offset: offset,
        });
        Ok(self)
    }

    pub fn build(self) -> LmiInstance {
        LmiInstance {
            name: self.name,
            layout: self.layout,
            constant: self.constant,
            vars: self.vars,
            basis: self.basis,
            n_coords: self.n_coords,
        }
    }
}
