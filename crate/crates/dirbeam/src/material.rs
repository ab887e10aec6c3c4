//! Hyperelastic constitutive laws and the curvilinear component transform.
//!
//! Strains arrive in covariant Voigt components (doubled shears, the same
//! convention the section interpolation produces); the isotropic laws are
//! stated in an orthonormal frame, so a [`MetricFrame`] built from the initial
//! covariant base vectors maps strain components out and stress/tangent
//! components back. For initially straight beams the transform is a pure
//! rotation and, by isotropy, has no effect.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("Young's modulus must be positive, Poisson's ratio in (-1, 0.5)")]
    InvalidParameters,
    #[error("deformation state not admissible: det(1 + 2E) = {0} <= 0")]
    InadmissibleDeformation(f64),
    #[error("degenerate metric frame: determinant {0}")]
    DegenerateFrame(f64),
}

/// Six independent components of a symmetric tensor in the order
/// [11, 22, 33, 12, 13, 23]. Strain vectors store doubled shears
/// (2E12, 2E13, 2E23); stress vectors store plain shears, which makes the
/// pair work-conjugate without extra factors.
pub type Voigt6 = SMatrix<f64, 6, 1>;

pub fn strain_to_tensor(v: &Voigt6) -> Matrix3<f64> {
    Matrix3::new(
        v[0],
        0.5 * v[3],
        0.5 * v[4],
        0.5 * v[3],
        v[1],
        0.5 * v[5],
        0.5 * v[4],
        0.5 * v[5],
        v[2],
    )
}

pub fn strain_from_tensor(m: &Matrix3<f64>) -> Voigt6 {
    Voigt6::from_column_slice(&[
        m[(0, 0)],
        m[(1, 1)],
        m[(2, 2)],
        2.0 * m[(0, 1)],
        2.0 * m[(0, 2)],
        2.0 * m[(1, 2)],
    ])
}

pub fn stress_from_tensor(m: &Matrix3<f64>) -> Voigt6 {
    Voigt6::from_column_slice(&[m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]])
}

const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialModel {
    SaintVenantKirchhoff,
    NeoHookean,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaterialLaw {
    pub model: MaterialModel,
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    #[serde(skip)]
    lambda: f64,
    #[serde(skip)]
    mu: f64,
}

impl MaterialLaw {
    pub fn new(model: MaterialModel, youngs: f64, poisson: f64) -> Result<Self, MaterialError> {
        if youngs <= 0.0 || poisson <= -1.0 || poisson >= 0.5 {
            return Err(MaterialError::InvalidParameters);
        }
        Ok(MaterialLaw {
            model,
            youngs_modulus: youngs,
            poissons_ratio: poisson,
            lambda: youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson)),
            mu: youngs / (2.0 * (1.0 + poisson)),
        })
    }

    /// Re-derives the cached moduli after deserialization.
    pub fn rebuild(&self) -> Result<Self, MaterialError> {
        Self::new(self.model, self.youngs_modulus, self.poissons_ratio)
    }

    pub fn lame_lambda(&self) -> f64 {
        self.lambda
    }

    pub fn shear_modulus(&self) -> f64 {
        self.mu
    }

    pub fn is_linear(&self) -> bool {
        self.model == MaterialModel::SaintVenantKirchhoff
    }

    /// Strain energy density per unit undeformed volume.
    pub fn energy(&self, strain: &Voigt6) -> Result<f64, MaterialError> {
        match self.model {
            MaterialModel::SaintVenantKirchhoff => {
                let e = strain_to_tensor(strain);
                let tr = e.trace();
                Ok(0.5 * self.lambda * tr * tr + self.mu * (e.transpose() * e).trace())
            }
            MaterialModel::NeoHookean => {
                let (c, ln_j) = self.right_cauchy_green(strain)?;
                Ok(0.5 * self.mu * (c.trace() - 3.0) - self.mu * ln_j
                    + 0.5 * self.lambda * ln_j * ln_j)
            }
        }
    }

    /// Second Piola-Kirchhoff stress, plain-shear Voigt components.
    pub fn stress(&self, strain: &Voigt6) -> Result<Voigt6, MaterialError> {
        match self.model {
            MaterialModel::SaintVenantKirchhoff => {
                let e = strain_to_tensor(strain);
                let s = Matrix3::identity() * (self.lambda * e.trace()) + e * (2.0 * self.mu);
                Ok(stress_from_tensor(&s))
            }
            MaterialModel::NeoHookean => {
                let (c, ln_j) = self.right_cauchy_green(strain)?;
                let ci = c
                    .try_inverse()
                    .ok_or_else(|| MaterialError::InadmissibleDeformation(c.determinant()))?;
                let s = Matrix3::identity() * self.mu + ci * (self.lambda * ln_j - self.mu);
                Ok(stress_from_tensor(&s))
            }
        }
    }

    /// Material tangent as a symmetric 6x6 matrix mapping doubled-shear strain
    /// increments to plain-shear stress increments.
    pub fn tangent(&self, strain: &Voigt6) -> Result<SMatrix<f64, 6, 6>, MaterialError> {
        match self.model {
            MaterialModel::SaintVenantKirchhoff => Ok(self.linear_tangent()),
            MaterialModel::NeoHookean => {
                let (c, ln_j) = self.right_cauchy_green(strain)?;
                let ci = c
                    .try_inverse()
                    .ok_or_else(|| MaterialError::InadmissibleDeformation(c.determinant()))?;
                let coef = 2.0 * (self.mu - self.lambda * ln_j);
                let mut out = SMatrix::<f64, 6, 6>::zeros();
                for a in 0..6 {
                    let (i, j) = VOIGT_PAIRS[a];
                    for b in 0..6 {
                        let (k, l) = VOIGT_PAIRS[b];
                        out[(a, b)] = self.lambda * ci[(i, j)] * ci[(k, l)]
                            + coef * 0.5 * (ci[(i, k)] * ci[(j, l)] + ci[(i, l)] * ci[(j, k)]);
                    }
                }
                Ok(out)
            }
        }
    }

    fn linear_tangent(&self) -> SMatrix<f64, 6, 6> {
        let mut c = SMatrix::<f64, 6, 6>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                c[(i, j)] = self.lambda;
            }
            c[(i, i)] += 2.0 * self.mu;
            c[(i + 3, i + 3)] = self.mu;
        }
        c
    }

    fn right_cauchy_green(&self, strain: &Voigt6) -> Result<(Matrix3<f64>, f64), MaterialError> {
        let c = Matrix3::identity() + strain_to_tensor(strain) * 2.0;
        let det = c.determinant();
        if det <= 0.0 || c.cholesky().is_none() {
            return Err(MaterialError::InadmissibleDeformation(det));
        }
        Ok((c, 0.5 * det.ln()))
    }
}

/// Transformation between covariant tensor components (with respect to the
/// initial contravariant basis) and components in the global orthonormal
/// frame, frozen at one material point of the initial configuration.
#[derive(Debug, Clone)]
pub struct MetricFrame {
    /// Maps covariant doubled-shear strain Voigt vectors to Cartesian ones.
    t_strain: SMatrix<f64, 6, 6>,
    det: f64,
}

impl MetricFrame {
    /// Builds the frame from the covariant base vectors at the point.
    pub fn new(
        g1: &Vector3<f64>,
        g2: &Vector3<f64>,
        g3: &Vector3<f64>,
    ) -> Result<Self, MaterialError> {
        let gmat = Matrix3::from_columns(&[*g1, *g2, *g3]);
        let det = gmat.determinant();
        if det.abs() < 1e-12 {
            return Err(MaterialError::DegenerateFrame(det));
        }
        // Columns of the inverse transpose are the contravariant base vectors.
        let q = gmat.try_inverse().unwrap().transpose();
        let mut t_strain = SMatrix::<f64, 6, 6>::zeros();
        for b in 0..6 {
            let mut unit = Voigt6::zeros();
            unit[b] = 1.0;
            let e_cov = strain_to_tensor(&unit);
            let e_cart = q * e_cov * q.transpose();
            t_strain.set_column(b, &strain_from_tensor(&e_cart));
        }
        Ok(MetricFrame { t_strain, det })
    }

    /// Identity transform for points where the covariant basis is orthonormal.
    pub fn orthonormal() -> Self {
        MetricFrame {
            t_strain: SMatrix::identity(),
            det: 1.0,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    /// Covariant strain components -> Cartesian components.
    pub fn strain_to_cartesian(&self, cov: &Voigt6) -> Voigt6 {
        self.t_strain * cov
    }

    /// Cartesian stress components -> covariant-conjugate components, so that
    /// `stress_cov . strain_cov` equals the frame-independent double dot.
    pub fn stress_to_covariant(&self, cart: &Voigt6) -> Voigt6 {
        self.t_strain.transpose() * cart
    }

    /// Cartesian tangent -> covariant-conjugate tangent.
    pub fn tangent_to_covariant(&self, cart: &SMatrix<f64, 6, 6>) -> SMatrix<f64, 6, 6> {
        self.t_strain.transpose() * cart * self.t_strain
    }

    /// Inverse strain map (used by tests and post-processing).
    pub fn strain_to_covariant(&self, cart: &Voigt6) -> Voigt6 {
        self.t_strain
            .lu()
            .solve(cart)
            .expect("frame matrix is invertible by construction")
    }
}
