//! Rectangular cross-section machinery.
//!
//! A section point carries two transverse coordinates `(z1, z2)` with the
//! origin at the centroid. Three ingredients of the mixed formulation live
//! here:
//!
//! * the interpolation matrix `A(z1, z2)` mapping the 15 beam strain
//!   components to the six Green-Lagrange components at a section point,
//! * the incompatible-strain basis: families of polynomials orthogonal (in
//!   L2 over the section) to every monomial up to the degree already present
//!   in the compatible strain component they enrich, and the block matrix
//!   `Gamma(z1, z2)` built from them,
//! * inertia moments and the initial-volume Jacobian `j0 = 1 - z^a kappa_a`
//!   for initially curved beams.

use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::splines::gauss_legendre;

#[derive(Debug, Error)]
pub enum SectionError {
    #[error("cross-section dimensions and density must be positive")]
    InvalidDimensions,
    #[error("family {0}: max degree {1} must exceed the compatible degree {2}")]
    DegreeTooLow(usize, usize, usize),
    #[error("internal: singular Gram matrix while building the enhanced basis")]
    SingularGram,
    #[error("section exceeds curvature radius: j0 = {0} at (z1, z2) = ({1}, {2})")]
    FoldedSection(f64, f64, f64),
}

/// Rectangle `(-w/2, w/2) x (-h/2, h/2)` with constant initial mass density.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrossSection {
    pub width: f64,
    pub height: f64,
    pub density: f64,
}

impl CrossSection {
    pub fn new(width: f64, height: f64, density: f64) -> Result<Self, SectionError> {
        if width <= 0.0 || height <= 0.0 || density <= 0.0 {
            return Err(SectionError::InvalidDimensions);
        }
        Ok(CrossSection {
            width,
            height,
            density,
        })
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// Tensor-product Gauss points on the section; weights carry the area measure.
#[derive(Debug, Clone)]
pub struct QuadratureRule2D {
    pub points: Vec<(f64, f64, f64)>,
}

pub fn gauss_rule(cs: &CrossSection, n1: usize, n2: usize) -> QuadratureRule2D {
    let r1 = gauss_legendre(n1);
    let r2 = gauss_legendre(n2);
    let hw = 0.5 * cs.width;
    let hh = 0.5 * cs.height;
    let mut points = Vec::with_capacity(n1 * n2);
    for &(x1, w1) in &r1 {
        for &(x2, w2) in &r2 {
            points.push((hw * x1, hh * x2, hw * hh * w1 * w2));
        }
    }
    QuadratureRule2D { points }
}

/// Exact monomial integrals over the centered rectangle:
/// `M[n][m] = integral of z1^n z2^m dA`, zero when n or m is odd.
#[derive(Debug, Clone)]
pub struct MonomialTable {
    size: usize,
    values: Vec<f64>,
}

impl MonomialTable {
    pub fn get(&self, n: usize, m: usize) -> f64 {
        debug_assert!(n < self.size && m < self.size);
        self.values[n * self.size + m]
    }
}

pub fn monomial_integrals(cs: &CrossSection, max_deg: usize) -> MonomialTable {
    let size = max_deg + 1;
    let mut values = vec![0.0; size * size];
    for n in 0..size {
        for m in 0..size {
            if n % 2 == 0 && m % 2 == 0 {
                values[n * size + m] = cs.width.powi(n as i32 + 1) * cs.height.powi(m as i32 + 1)
                    / (2f64.powi((n + m) as i32) * (n as f64 + 1.0) * (m as f64 + 1.0));
            }
        }
    }
    MonomialTable { size, values }
}

/// Bivariate polynomial stored as dense monomial coefficients in graded-lex
/// order: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Poly2 {
    pub coeffs: Vec<f64>,
}

/// Graded-lex position of the monomial `z1^n z2^m`.
pub fn monomial_index(n: usize, m: usize) -> usize {
    let d = n + m;
    d * (d + 1) / 2 + m
}

/// Number of monomials of total degree `<= deg`.
pub fn monomial_count(deg: usize) -> usize {
    (deg + 1) * (deg + 2) / 2
}

/// Inverse of [`monomial_index`].
pub fn monomial_exponents(idx: usize) -> (usize, usize) {
    let mut d = 0usize;
    while monomial_count(d) <= idx {
        d += 1;
    }
    let m = idx - d * (d + 1) / 2;
    (d - m, m)
}

impl Poly2 {
    pub fn monomial(n: usize, m: usize) -> Self {
        let mut coeffs = vec![0.0; monomial_index(n, m) + 1];
        *coeffs.last_mut().unwrap() = 1.0;
        Poly2 { coeffs }
    }

    pub fn eval(&self, z1: f64, z2: f64) -> f64 {
        let mut s = 0.0;
        for (idx, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 {
                let (n, m) = monomial_exponents(idx);
                s += c * z1.powi(n as i32) * z2.powi(m as i32);
            }
        }
        s
    }

    /// Partial derivative with respect to `z1` (axis = 0) or `z2` (axis = 1).
    pub fn derivative(&self, axis: usize) -> Poly2 {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for (idx, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let (n, m) = monomial_exponents(idx);
            match axis {
                0 if n > 0 => coeffs[monomial_index(n - 1, m)] += n as f64 * c,
                1 if m > 0 => coeffs[monomial_index(n, m - 1)] += m as f64 * c,
                _ => {}
            }
        }
        Poly2 { coeffs }
    }

    /// Exact integral of the polynomial over the section.
    pub fn integral(&self, table: &MonomialTable) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(idx, &c)| {
                let (n, m) = monomial_exponents(idx);
                c * table.get(n, m)
            })
            .sum()
    }
}

/// Per-family configuration of the incompatible strain basis. `None` disables
/// a family; the axial family is typically off because the compatible axial
/// strain is already quadratic over the section.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EasConfig {
    /// Family enriching E11 and E22 (two independent column blocks).
    pub m_in_plane: Option<usize>,
    /// Family enriching the in-plane shear E12.
    pub m_in_plane_shear: Option<usize>,
    /// Family enriching the axial strain E33.
    pub m_axial: Option<usize>,
    /// Family whose section derivatives enrich E13 and E23.
    pub m_transverse_shear: Option<usize>,
}

/// Compatible polynomial degree already present in the strain component each
/// family enriches; enhanced polynomials start one degree above.
pub const COMPATIBLE_DEGREE: [usize; 4] = [0, 0, 2, 1];

#[derive(Debug, Clone)]
pub struct EasFamily {
    pub max_degree: usize,
    pub compatible_degree: usize,
    pub polys: Vec<Poly2>,
}

/// The four polynomial families plus bookkeeping of the total column count
/// `d_a = 2 d1 + d2 + d3 + d4` (the in-plane family appears twice in Gamma
/// with independent coefficient columns).
#[derive(Debug, Clone)]
pub struct EasBasisSet {
    pub families: [Option<EasFamily>; 4],
    pub dims: [usize; 4],
    pub d_a: usize,
    shear_dz1: Vec<Poly2>,
    shear_dz2: Vec<Poly2>,
}

impl EasBasisSet {
    /// Largest max degree among enabled families (0 when all disabled).
    pub fn max_degree(&self) -> usize {
        self.families
            .iter()
            .flatten()
            .map(|f| f.max_degree)
            .max()
            .unwrap_or(0)
    }
}

/// Builds one orthogonalized family: every monomial of degree
/// `m_bar + 1 ..= m_max` is corrected by a combination of monomials of degree
/// `<= m_bar` so that its section integral against any such monomial is zero.
fn build_family(cs: &CrossSection, m_max: usize, m_bar: usize) -> Result<EasFamily, SectionError> {
    let table = monomial_integrals(cs, 2 * m_max.max(m_bar) + 1);
    let n_low = monomial_count(m_bar);

    let mut gram = DMatrix::zeros(n_low, n_low);
    for a in 0..n_low {
        let (na, ma) = monomial_exponents(a);
        for b in 0..n_low {
            let (nb, mb) = monomial_exponents(b);
            gram[(a, b)] = table.get(na + nb, ma + mb);
        }
    }
    let chol = gram.cholesky().ok_or(SectionError::SingularGram)?;

    let mut polys = Vec::new();
    for idx in monomial_count(m_bar)..monomial_count(m_max) {
        let (n, m) = monomial_exponents(idx);
        let mut rhs = DVector::zeros(n_low);
        for a in 0..n_low {
            let (na, ma) = monomial_exponents(a);
            rhs[a] = -table.get(na + n, ma + m);
        }
        let beta = chol.solve(&rhs);
        let mut p = Poly2::monomial(n, m);
        for a in 0..n_low {
            let (na, ma) = monomial_exponents(a);
            p.coeffs[monomial_index(na, ma)] += beta[a];
        }
        polys.push(p);
    }
    Ok(EasFamily {
        max_degree: m_max,
        compatible_degree: m_bar,
        polys,
    })
}

pub fn build_eas_basis(cs: &CrossSection, config: &EasConfig) -> Result<EasBasisSet, SectionError> {
    let requested = [
        config.m_in_plane,
        config.m_in_plane_shear,
        config.m_axial,
        config.m_transverse_shear,
    ];
    let mut families: [Option<EasFamily>; 4] = [None, None, None, None];
    let mut dims = [0usize; 4];
    for i in 0..4 {
        if let Some(m_max) = requested[i] {
            let m_bar = COMPATIBLE_DEGREE[i];
            if m_max <= m_bar {
                return Err(SectionError::DegreeTooLow(i + 1, m_max, m_bar));
            }
            let fam = build_family(cs, m_max, m_bar)?;
            dims[i] = fam.polys.len();
            debug_assert_eq!(dims[i], monomial_count(m_max) - monomial_count(m_bar));
            families[i] = Some(fam);
        }
    }
    let d_a = 2 * dims[0] + dims[1] + dims[2] + dims[3];
    let (shear_dz1, shear_dz2) = match &families[3] {
        Some(f) => (
            f.polys.iter().map(|p| p.derivative(0)).collect(),
            f.polys.iter().map(|p| p.derivative(1)).collect(),
        ),
        None => (Vec::new(), Vec::new()),
    };
    Ok(EasBasisSet {
        families,
        dims,
        d_a,
        shear_dz1,
        shear_dz2,
    })
}

/// Enhanced-strain interpolation matrix at a section point (6 x d_a).
///
/// Block layout by row: E11 and E22 carry independent copies of the in-plane
/// family, E33 the axial family, the in-plane shear row its own family, and
/// the two transverse shear rows the z1/z2 derivatives of the last family.
pub fn eval_gamma(basis: &EasBasisSet, z1: f64, z2: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(6, basis.d_a);
    let mut col = 0;
    if let Some(f) = &basis.families[0] {
        for p in &f.polys {
            g[(0, col)] = p.eval(z1, z2);
            col += 1;
        }
        for p in &f.polys {
            g[(1, col)] = p.eval(z1, z2);
            col += 1;
        }
    }
    if let Some(f) = &basis.families[2] {
        for p in &f.polys {
            g[(2, col)] = p.eval(z1, z2);
            col += 1;
        }
    }
    if let Some(f) = &basis.families[1] {
        for p in &f.polys {
            g[(3, col)] = p.eval(z1, z2);
            col += 1;
        }
    }
    if basis.families[3].is_some() {
        for (d1, d2) in basis.shear_dz1.iter().zip(&basis.shear_dz2) {
            g[(4, col)] = d1.eval(z1, z2);
            g[(5, col)] = d2.eval(z1, z2);
            col += 1;
        }
    }
    debug_assert_eq!(col, basis.d_a);
    g
}

/// Column range of the axial (E33) block inside `Gamma`, when enabled.
pub fn gamma_axial_columns(basis: &EasBasisSet) -> Option<std::ops::Range<usize>> {
    if basis.dims[2] == 0 {
        return None;
    }
    let start = 2 * basis.dims[0];
    Some(start..start + basis.dims[2])
}

/// Strain interpolation matrix at a section point (6 x 15).
///
/// Row order is the Green-Lagrange Voigt convention with doubled shears
/// [E11, E22, E33, 2E12, 2E13, 2E23]; column order is the beam strain array
/// [eps, rho1, rho2, k11, k22, 2k12, del1, del2, g11, g12, g21, g22,
///  chi11, chi22, 2chi12].
pub fn eval_a(z1: f64, z2: f64) -> SMatrix<f64, 6, 15> {
    let mut a = SMatrix::<f64, 6, 15>::zeros();
    a[(0, 12)] = 1.0;
    a[(1, 13)] = 1.0;
    a[(2, 0)] = 1.0;
    a[(2, 1)] = z1;
    a[(2, 2)] = z2;
    a[(2, 3)] = z1 * z1;
    a[(2, 4)] = z2 * z2;
    a[(2, 5)] = z1 * z2;
    a[(3, 14)] = 1.0;
    a[(4, 6)] = 1.0;
    a[(4, 8)] = z1;
    a[(4, 9)] = z2;
    a[(5, 7)] = 1.0;
    a[(5, 10)] = z1;
    a[(5, 11)] = z2;
    a
}

/// Initial-volume Jacobian at a section point for center-axis curvature
/// components `kappa = (k1, k2)`.
pub fn initial_jacobian(z1: f64, z2: f64, kappa: (f64, f64)) -> Result<f64, SectionError> {
    let j0 = 1.0 - z1 * kappa.0 - z2 * kappa.1;
    if j0 <= 0.0 {
        return Err(SectionError::FoldedSection(j0, z1, z2));
    }
    Ok(j0)
}

/// Line mass density and first/second mass moments per unit arc length,
/// including the curvature correction from `j0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaProps {
    pub rho_a: f64,
    pub i1: f64,
    pub i2: f64,
    pub i11: f64,
    pub i12: f64,
    pub i22: f64,
}

pub fn inertia_properties(
    cs: &CrossSection,
    kappa: (f64, f64),
) -> Result<InertiaProps, SectionError> {
    // j0 is affine in (z1, z2), so checking the corners guards the section
    for &z1 in &[-0.5 * cs.width, 0.5 * cs.width] {
        for &z2 in &[-0.5 * cs.height, 0.5 * cs.height] {
            initial_jacobian(z1, z2, kappa)?;
        }
    }
    let t = monomial_integrals(cs, 4);
    let r = cs.density;
    let (k1, k2) = kappa;
    let wm = |n: usize, m: usize| t.get(n, m) - k1 * t.get(n + 1, m) - k2 * t.get(n, m + 1);
    Ok(InertiaProps {
        rho_a: r * wm(0, 0),
        i1: r * wm(1, 0),
        i2: r * wm(0, 1),
        i11: r * wm(2, 0),
        i12: r * wm(1, 1),
        i22: r * wm(0, 2),
    })
}

impl InertiaProps {
    /// Symmetric 9x9 mass-moment matrix acting on `[v_phi, v_d1, v_d2]`.
    pub fn mass_matrix(&self) -> SMatrix<f64, 9, 9> {
        let mut m = SMatrix::<f64, 9, 9>::zeros();
        let blocks = [
            [self.rho_a, self.i1, self.i2],
            [self.i1, self.i11, self.i12],
            [self.i2, self.i12, self.i22],
        ];
        for a in 0..3 {
            for b in 0..3 {
                for k in 0..3 {
                    m[(3 * a + k, 3 * b + k)] = blocks[a][b];
                }
            }
        }
        m
    }
}

/// Torsion stiffness factor of a solid rectangle (series truncation of the
/// classical Saint-Venant solution): with half-sides `a >= b`,
/// `K = a b^3 (16/3 - 3.36 (b/a) (1 - b^4 / (12 a^4)))`.
pub fn roark_torsion_k(cs: &CrossSection) -> f64 {
    let a = 0.5 * cs.width.max(cs.height);
    let b = 0.5 * cs.width.min(cs.height);
    a * b.powi(3) * (16.0 / 3.0 - 3.36 * (b / a) * (1.0 - b.powi(4) / (12.0 * a.powi(4))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_section() -> CrossSection {
        CrossSection::new(0.3, 0.4, 1.0).unwrap()
    }

    #[test]
    fn gauss_rule_weights_and_exactness() {
        let cs = unit_section();
        let r = gauss_rule(&cs, 1, 1);
        assert_eq!(r.points.len(), 1);
        assert_relative_eq!(r.points[0].0, 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.points[0].2, 0.12, epsilon = 1e-15);

        // 2x2 integrates z1^2 exactly
        let r = gauss_rule(&cs, 2, 2);
        let v: f64 = r.points.iter().map(|&(z1, _, w)| w * z1 * z1).sum();
        assert_relative_eq!(v, cs.width.powi(3) * cs.height / 12.0, epsilon = 1e-15);

        // 5x5 integrates z1^4 z2^4; compare against a much finer rule
        let r5 = gauss_rule(&cs, 5, 5);
        let v5: f64 = r5
            .points
            .iter()
            .map(|&(z1, z2, w)| w * z1.powi(4) * z2.powi(4))
            .sum();
        let r20 = gauss_rule(&cs, 20, 20);
        let v20: f64 = r20
            .points
            .iter()
            .map(|&(z1, z2, w)| w * z1.powi(4) * z2.powi(4))
            .sum();
        assert_relative_eq!(v5, v20, epsilon = 1e-12);
        let t = monomial_integrals(&cs, 8);
        assert_relative_eq!(v5, t.get(4, 4), epsilon = 1e-12);
    }

    #[test]
    fn monomial_table_closed_forms() {
        let cs = unit_section();
        let t = monomial_integrals(&cs, 3);
        assert_relative_eq!(t.get(0, 0), 0.12, epsilon = 1e-15);
        assert_eq!(t.get(1, 0), 0.0);
        assert_relative_eq!(t.get(2, 0), 0.3f64.powi(3) * 0.4 / 12.0, epsilon = 1e-16);
    }

    #[test]
    fn eas_family_examples() {
        let cs = unit_section();
        // compatible degree 0: odd monomials pass through unchanged
        let basis = build_eas_basis(
            &cs,
            &EasConfig {
                m_in_plane: Some(1),
                ..Default::default()
            },
        )
        .unwrap();
        let f = basis.families[0].as_ref().unwrap();
        assert_eq!(f.polys.len(), 2);
        let z1 = Poly2::monomial(1, 0);
        for (c_got, c_want) in f.polys[0].coeffs.iter().zip(&z1.coeffs) {
            assert_relative_eq!(*c_got, *c_want, epsilon = 1e-14);
        }

        // transverse-shear family: (z1)^2 is shifted by -w^2/12
        let basis = build_eas_basis(
            &cs,
            &EasConfig {
                m_transverse_shear: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let f = basis.families[3].as_ref().unwrap();
        assert_eq!(f.polys.len(), 3);
        let p20 = &f.polys[0];
        assert_relative_eq!(p20.coeffs[0], -cs.width * cs.width / 12.0, epsilon = 1e-15);
        assert_relative_eq!(p20.coeffs[monomial_index(2, 0)], 1.0, epsilon = 1e-15);

        // dimension bookkeeping
        let basis = build_eas_basis(
            &cs,
            &EasConfig {
                m_transverse_shear: Some(4),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(basis.dims[3], 12);

        // requesting m <= compatible degree is rejected
        assert!(build_eas_basis(
            &cs,
            &EasConfig {
                m_axial: Some(2),
                ..Default::default()
            },
        )
        .is_err());
    }

    #[test]
    fn eas_orthogonality_property() {
        let cs = CrossSection::new(0.37, 1.21, 1.0).unwrap();
        let config = EasConfig {
            m_in_plane: Some(3),
            m_in_plane_shear: Some(2),
            m_axial: Some(4),
            m_transverse_shear: Some(4),
        };
        let basis = build_eas_basis(&cs, &config).unwrap();
        for (i, fam) in basis.families.iter().enumerate() {
            let Some(fam) = fam else { continue };
            let rule = gauss_rule(&cs, fam.max_degree + 2, fam.max_degree + 2);
            for p in &fam.polys {
                let p_norm: f64 = rule
                    .points
                    .iter()
                    .map(|&(z1, z2, w)| w * p.eval(z1, z2).powi(2))
                    .sum::<f64>()
                    .sqrt();
                for low in 0..monomial_count(fam.compatible_degree) {
                    let (n, m) = monomial_exponents(low);
                    let q = Poly2::monomial(n, m);
                    let q_norm: f64 = rule
                        .points
                        .iter()
                        .map(|&(z1, z2, w)| w * q.eval(z1, z2).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let dot: f64 = rule
                        .points
                        .iter()
                        .map(|&(z1, z2, w)| w * p.eval(z1, z2) * q.eval(z1, z2))
                        .sum();
                    assert!(
                        dot.abs() <= 1e-12 * p_norm * q_norm,
                        "family {i}: <P*, z1^{n} z2^{m}> = {dot}"
                    );
                }
            }
        }
    }

    #[test]
    fn gamma_layout_and_dimensions() {
        let cs = unit_section();
        let empty = build_eas_basis(&cs, &EasConfig::default()).unwrap();
        assert_eq!(empty.d_a, 0);
        assert_eq!(eval_gamma(&empty, 0.0, 0.0).ncols(), 0);

        let config = EasConfig {
            m_in_plane: Some(2),
            m_in_plane_shear: Some(2),
            m_axial: Some(4),
            m_transverse_shear: Some(4),
        };
        let basis = build_eas_basis(&cs, &config).unwrap();
        let expect = 2 * basis.dims[0] + basis.dims[1] + basis.dims[2] + basis.dims[3];
        assert_eq!(basis.d_a, expect);
        let g = eval_gamma(&basis, 0.07, -0.11);
        assert_eq!(g.ncols(), basis.d_a);
        let ax = gamma_axial_columns(&basis).unwrap();
        assert_eq!(ax.len(), basis.dims[2]);
        // axial block rows other than E33 are zero
        for c in ax {
            for r in [0, 1, 3, 4, 5] {
                assert_eq!(g[(r, c)], 0.0);
            }
        }

        // transverse shear derivative rows vanish at the centroid for the
        // quadratic members (derivatives of z1^2 - c, z1 z2, z2^2 - c)
        let basis = build_eas_basis(
            &cs,
            &EasConfig {
                m_transverse_shear: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        let g = eval_gamma(&basis, 0.0, 0.0);
        for c in 0..3 {
            assert_relative_eq!(g[(4, c)], 0.0, epsilon = 1e-15);
            assert_relative_eq!(g[(5, c)], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn a_matrix_entries() {
        let a = eval_a(0.0, 0.0);
        let row3: Vec<f64> = (0..15).map(|j| a[(2, j)]).collect();
        assert_eq!(row3[0], 1.0);
        assert!(row3[1..].iter().all(|&v| v == 0.0));
        let row5: Vec<f64> = (0..15).map(|j| a[(4, j)]).collect();
        assert_eq!(row5[6], 1.0);
        assert_eq!(row5.iter().filter(|&&v| v != 0.0).count(), 1);

        // single chi11 component maps to E11 only
        let mut eps = SMatrix::<f64, 15, 1>::zeros();
        eps[12] = 0.7;
        let e = eval_a(0.123, -0.04) * eps;
        assert_relative_eq!(e[0], 0.7, epsilon = 1e-15);
        for k in 1..6 {
            assert_relative_eq!(e[k], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn initial_jacobian_values() {
        assert_relative_eq!(initial_jacobian(0.2, 0.1, (0.0, 0.0)).unwrap(), 1.0);
        assert_relative_eq!(initial_jacobian(0.2, 0.0, (0.1, 0.0)).unwrap(), 0.98);
        // ring-like curvature: half-height 0.5 at radius 20
        assert_relative_eq!(
            initial_jacobian(0.0, 0.5, (0.0, 1.0 / 20.0)).unwrap(),
            0.975
        );
        assert!(initial_jacobian(0.5, 0.0, (3.0, 0.0)).is_err());
    }

    #[test]
    fn inertia_closed_forms_and_quadrature_oracle() {
        let cs = CrossSection::new(1.0 / 3.0, 1.0, 1.0).unwrap();
        let p = inertia_properties(&cs, (0.0, 0.0)).unwrap();
        assert_relative_eq!(p.rho_a, cs.area(), epsilon = 1e-15);
        assert_eq!(p.i1, 0.0);
        assert_relative_eq!(p.i11, 3.086e-3, max_relative = 1e-3);
        assert_relative_eq!(p.i22, 2.778e-2, max_relative = 1e-3);

        // curvature couples in a first moment; verify against quadrature
        let kappa = (0.21, -0.34);
        let p = inertia_properties(&cs, kappa).unwrap();
        let rule = gauss_rule(&cs, 10, 10);
        let num = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
            rule.points
                .iter()
                .map(|&(z1, z2, w)| w * f(z1, z2) * (1.0 - z1 * kappa.0 - z2 * kappa.1))
                .sum()
        };
        assert_relative_eq!(p.rho_a, num(&|_, _| 1.0), epsilon = 1e-14);
        assert_relative_eq!(p.i1, num(&|z1, _| z1), epsilon = 1e-14);
        assert_relative_eq!(p.i11, num(&|z1, _| z1 * z1), epsilon = 1e-14);
        assert_relative_eq!(p.i12, num(&|z1, z2| z1 * z2), epsilon = 1e-14);
        assert_relative_eq!(
            p.i1,
            -cs.density * kappa.0 * cs.width.powi(3) * cs.height / 12.0,
            epsilon = 1e-15
        );

        let m = p.mass_matrix();
        assert_relative_eq!((m - m.transpose()).norm(), 0.0, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 0)], p.rho_a, epsilon = 1e-15);
        assert_relative_eq!(m[(3, 6)], p.i12, epsilon = 1e-15);
    }

    #[test]
    fn roark_factor_values() {
        let k = roark_torsion_k(&CrossSection::new(1.0 / 3.0, 1.0, 1.0).unwrap());
        assert_relative_eq!(k, 9.753e-3, max_relative = 1e-3);

        let k = roark_torsion_k(&CrossSection::new(0.3, 0.4, 1.0).unwrap());
        assert_relative_eq!(k, 1.9439e-3, max_relative = 1e-4);

        // square: K = 2.2533 (d/2)^4, below the polar moment
        let d = 0.7;
        let cs = CrossSection::new(d, d, 1.0).unwrap();
        let k = roark_torsion_k(&cs);
        assert_relative_eq!(k, 2.2533 * (d / 2.0).powi(4), max_relative = 1e-4);
        let ip = 2.0 * d.powi(4) / 12.0;
        assert!(k < ip);
    }
}
