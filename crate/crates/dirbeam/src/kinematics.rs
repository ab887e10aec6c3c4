//! Configuration representation and the strain-configuration relation.
//!
//! A cross-section carries nine degrees of freedom: the center-axis position
//! `phi` and two unconstrained directors `d1`, `d2`. The 15-component beam
//! strain array packs, in order,
//!
//! ```text
//! [eps, rho1, rho2, k11, k22, 2 k12, del1, del2,
//!  g11, g12, g21, g22, chi11, chi22, 2 chi12]
//! ```
//!
//! built from differences of scalar products between the current fields
//! `(phi_s, d_a, d_a_s)` and their initial counterparts. The initial director
//! field is reconstructed in the same spline space as the current one by
//! collocation at the Greville abscissae; using that reconstructed field for
//! the initial scalar products is what makes the discrete strain exactly
//! invariant under superposed rigid motions, for any director degree.

use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::BandMatrix;
use crate::splines::{derive_field_knots, KnotVector, NurbsCurve, ParamMap, SplineError};

pub type BeamStrain = SVector<f64, 15>;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("Frenet frame undefined: vanishing curvature at xi = {0}")]
    FrenetStraight(f64),
    #[error("smallest-rotation transport failed: tangent reverses near xi = {0}")]
    TangentFlip(f64),
    #[error("internal: singular director collocation matrix")]
    SingularCollocation,
    #[error("rotation matrix is not proper orthogonal (defect {0:.3e})")]
    NotARotation(f64),
}

/// Method used to generate the continuous initial director field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMethod {
    SmallestRotation,
    Frenet,
}

/// Choice of initial director data entering the strain definition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectorMode {
    /// Initial scalar products from the collocation-projected spline field.
    Discrete,
    /// Initial scalar products from the continuous frame field.
    Continuous,
}

/// Continuous director field sampler along the initial curve.
#[derive(Debug, Clone)]
pub enum FrameField {
    /// Constant frame of a straight segment.
    Straight { d: [Vector3<f64>; 2] },
    /// Planar curve: the out-of-plane director is constant, the other follows
    /// the tangent. `out_slot` says which director carries the plane normal.
    Planar { normal: Vector3<f64>, out_slot: usize },
    /// Marching table for general curves: frames transported by the rotation
    /// that maps one tangent onto the next with the smallest angle.
    Marching {
        xis: Vec<f64>,
        frames: Vec<[Vector3<f64>; 2]>,
    },
    /// Frame from curve derivatives; requires non-vanishing curvature.
    Frenet,
}

fn rotate_min(t0: &Vector3<f64>, t1: &Vector3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
    // rotation taking t0 to t1 about t0 x t1, applied to x
    let c = t0.dot(t1);
    let v = t0.cross(t1);
    x * c + v.cross(x) + v * (v.dot(x) / (1.0 + c))
}

fn complete_frame(tangent: &Vector3<f64>, seed: &Vector3<f64>, slot: usize) -> [Vector3<f64>; 2] {
    // Gram-Schmidt the seed against the tangent, then close the triad so that
    // d1 x d2 = tangent.
    let d_seed = (seed - tangent * tangent.dot(seed)).normalize();
    if slot == 0 {
        [d_seed, tangent.cross(&d_seed)]
    } else {
        [d_seed.cross(tangent), d_seed]
    }
}

/// Generates the continuous initial director field.
///
/// `seed` is `(vector, slot)`: the director in `slot` starts aligned with the
/// given vector (orthogonalized against the tangent). Straight and planar
/// curves get exact closed-form fields; general curves use smallest-rotation
/// marching on a refined grid.
pub fn generate_frame(
    curve: &NurbsCurve,
    method: FrameMethod,
    seed: (Vector3<f64>, usize),
) -> Result<FrameField, KinematicsError> {
    if method == FrameMethod::Frenet {
        for &xi in &[0.1, 0.5, 0.9] {
            let d = curve.point_derivs(xi, 2)?;
            let t = d[1].normalize();
            let n = d[2] - t * t.dot(&d[2]);
            if n.norm() <= 1e-10 * d[1].norm_squared() {
                return Err(KinematicsError::FrenetStraight(xi));
            }
        }
        return Ok(FrameField::Frenet);
    }

    let n_probe = 64;
    let tangent_at = |xi: f64| -> Result<Vector3<f64>, KinematicsError> {
        Ok(curve.point_derivs(xi, 1)?[1].normalize())
    };
    let t0 = tangent_at(0.0)?;

    let mut straight = true;
    for i in 1..=n_probe {
        let t = tangent_at(i as f64 / n_probe as f64)?;
        if (t - t0).norm() > 1e-12 {
            straight = false;
            break;
        }
    }
    if straight {
        return Ok(FrameField::Straight {
            d: complete_frame(&t0, &seed.0, seed.1),
        });
    }

    // planar when some fixed normal is orthogonal to every sampled tangent
    let mut normal = None;
    for i in 1..=n_probe {
        let t = tangent_at(i as f64 / n_probe as f64)?;
        let n = t0.cross(&t);
        if n.norm() > 1e-6 {
            normal = Some(n.normalize());
            break;
        }
    }
    if let Some(n) = normal {
        let mut planar = true;
        for i in 0..=n_probe {
            let t = tangent_at(i as f64 / n_probe as f64)?;
            if t.dot(&n).abs() > 1e-10 {
                planar = false;
                break;
            }
        }
        if planar && seed.0.cross(&n).norm() < 1e-9 {
            let sign = if seed.0.dot(&n) >= 0.0 { 1.0 } else { -1.0 };
            return Ok(FrameField::Planar {
                normal: n * sign,
                out_slot: seed.1,
            });
        }
    }

    smallest_rotation_march(curve, seed, 32 * n_probe)
}

/// Smallest-rotation transport of the seed frame over a uniform grid.
pub fn smallest_rotation_march(
    curve: &NurbsCurve,
    seed: (Vector3<f64>, usize),
    n_grid: usize,
) -> Result<FrameField, KinematicsError> {
    let mut xis = Vec::with_capacity(n_grid + 1);
    let mut frames = Vec::with_capacity(n_grid + 1);
    let mut t_prev = curve.point_derivs(0.0, 1)?[1].normalize();
    let mut frame = complete_frame(&t_prev, &seed.0, seed.1);
    xis.push(0.0);
    frames.push(frame);
    for i in 1..=n_grid {
        let xi = i as f64 / n_grid as f64;
        let t = curve.point_derivs(xi, 1)?[1].normalize();
        if t_prev.dot(&t) <= -0.5 {
            return Err(KinematicsError::TangentFlip(xi));
        }
        frame = [
            rotate_min(&t_prev, &t, &frame[0]),
            rotate_min(&t_prev, &t, &frame[1]),
        ];
        t_prev = t;
        xis.push(xi);
        frames.push(frame);
    }
    Ok(FrameField::Marching { xis, frames })
}

impl FrameField {
    /// Director pair at a parameter point.
    pub fn eval(&self, curve: &NurbsCurve, xi: f64) -> Result<[Vector3<f64>; 2], KinematicsError> {
        let t = curve.point_derivs(xi, 1)?[1].normalize();
        match self {
            FrameField::Straight { d } => Ok(*d),
            FrameField::Planar { normal, out_slot } => Ok(complete_frame(&t, normal, *out_slot)),
            FrameField::Marching { xis, frames } => {
                let pos = xis.partition_point(|&x| x <= xi).saturating_sub(1);
                let t_node = curve.point_derivs(xis[pos], 1)?[1].normalize();
                if t_node.dot(&t) <= -0.5 {
                    return Err(KinematicsError::TangentFlip(xi));
                }
                Ok([
                    rotate_min(&t_node, &t, &frames[pos][0]),
                    rotate_min(&t_node, &t, &frames[pos][1]),
                ])
            }
            FrameField::Frenet => {
                let d = curve.point_derivs(xi, 2)?;
                let n = d[2] - t * t.dot(&d[2]);
                if n.norm() <= 1e-12 * d[1].norm_squared() {
                    return Err(KinematicsError::FrenetStraight(xi));
                }
                let d1 = n.normalize();
                Ok([d1, t.cross(&d1).normalize()])
            }
        }
    }

    /// Arc-length derivative of the directors. Exact for straight and planar
    /// fields, central finite differences in the parameter otherwise.
    pub fn eval_derivative(
        &self,
        curve: &NurbsCurve,
        xi: f64,
    ) -> Result<[Vector3<f64>; 2], KinematicsError> {
        match self {
            FrameField::Straight { .. } => Ok([Vector3::zeros(), Vector3::zeros()]),
            FrameField::Planar { normal, out_slot } => {
                let d = curve.point_derivs(xi, 2)?;
                let jt = d[1].norm();
                let t = d[1] / jt;
                // arc-length derivative of the unit tangent
                let ts = (d[2] - t * t.dot(&d[2])) / (jt * jt);
                if *out_slot == 1 {
                    // d1 = d2 x t with constant d2 = normal
                    Ok([normal.cross(&ts), Vector3::zeros()])
                } else {
                    // d2 = t x d1 with constant d1 = normal
                    Ok([Vector3::zeros(), ts.cross(normal)])
                }
            }
            _ => {
                let h = 1e-6;
                let a = (xi - h).max(0.0);
                let b = (xi + h).min(1.0);
                let fa = self.eval(curve, a)?;
                let fb = self.eval(curve, b)?;
                let jt = curve.point_derivs(xi, 1)?[1].norm();
                let denom = (b - a) * jt;
                Ok([(fb[0] - fa[0]) / denom, (fb[1] - fa[1]) / denom])
            }
        }
    }
}

/// Spline basis for one of the solution fields; rational when weights are
/// present (the position field reuses the geometry weights).
#[derive(Debug, Clone)]
pub struct FieldBasis {
    pub kv: KnotVector,
    pub weights: Option<Vec<f64>>,
}

impl FieldBasis {
    pub fn n_basis(&self) -> usize {
        self.kv.n_basis()
    }

    /// Values and first parametric derivatives of the non-zero functions.
    pub fn eval(&self, xi: f64) -> Result<(usize, Vec<f64>, Vec<f64>), SplineError> {
        let b = self.kv.eval_basis(xi, 1)?;
        match &self.weights {
            None => Ok((b.first, b.values[0].clone(), b.values[1].clone())),
            Some(w) => {
                let k = self.kv.degree() + 1;
                let mut wsum = 0.0;
                let mut dwsum = 0.0;
                for j in 0..k {
                    wsum += w[b.first + j] * b.values[0][j];
                    dwsum += w[b.first + j] * b.values[1][j];
                }
                let mut val = vec![0.0; k];
                let mut der = vec![0.0; k];
                for j in 0..k {
                    let wj = w[b.first + j];
                    val[j] = wj * b.values[0][j] / wsum;
                    der[j] = wj * (b.values[1][j] * wsum - b.values[0][j] * dwsum) / (wsum * wsum);
                }
                Ok((b.first, val, der))
            }
        }
    }
}

/// Initial geometry: curve, reconstructed director field and derived data.
#[derive(Debug, Clone)]
pub struct InitialGeometry {
    pub curve: NurbsCurve,
    pub param: ParamMap,
    pub frame: FrameField,
    pub geom_basis: FieldBasis,
    pub dir_basis: FieldBasis,
    pub dir_coeffs: Vec<[Vector3<f64>; 2]>,
    pub mode: DirectorMode,
}

impl InitialGeometry {
    /// Builds the initial geometry: the director basis shares the geometry
    /// basis when the degrees match, otherwise a maximally smooth B-spline
    /// basis of the requested degree on the same element partition is used;
    /// the continuous frame is interpolated at the Greville abscissae.
    pub fn new(
        curve: NurbsCurve,
        director_degree: usize,
        method: FrameMethod,
        seed: (Vector3<f64>, usize),
        mode: DirectorMode,
    ) -> Result<Self, KinematicsError> {
        let param = ParamMap::new(&curve)?;
        let frame = generate_frame(&curve, method, seed)?;
        let geom_basis = FieldBasis {
            kv: curve.knot_vector().clone(),
            weights: Some(curve.weights().to_vec()),
        };
        let dir_basis = if director_degree == curve.knot_vector().degree() {
            geom_basis.clone()
        } else {
            FieldBasis {
                kv: derive_field_knots(curve.knot_vector(), director_degree),
                weights: None,
            }
        };
        let dir_coeffs = project_initial_directors(&curve, &frame, &dir_basis)?;
        Ok(InitialGeometry {
            curve,
            param,
            frame,
            geom_basis,
            dir_basis,
            dir_coeffs,
            mode,
        })
    }

    /// Reference configuration: control data of the initial geometry. In the
    /// continuous mode the director coefficients carry the change over the
    /// exact initial field, so they start at zero.
    pub fn reference_configuration(&self) -> Configuration {
        Configuration {
            phi: self.curve.control_points().to_vec(),
            dir: match self.mode {
                DirectorMode::Discrete => self.dir_coeffs.clone(),
                DirectorMode::Continuous => {
                    vec![[Vector3::zeros(); 2]; self.dir_coeffs.len()]
                }
            },
        }
    }

    /// Frozen offset added to the spline director field: the continuous
    /// initial directors in continuous mode, zero otherwise.
    pub fn director_offset(&self, xi: f64) -> Result<[Vector3<f64>; 2], KinematicsError> {
        match self.mode {
            DirectorMode::Discrete => Ok([Vector3::zeros(), Vector3::zeros()]),
            DirectorMode::Continuous => self.frame.eval(&self.curve, xi),
        }
    }

    /// Projected director field value and arc-length derivative.
    pub fn projected_directors(
        &self,
        xi: f64,
    ) -> Result<([Vector3<f64>; 2], [Vector3<f64>; 2]), KinematicsError> {
        let jt = ParamMap::jacobian_at(&self.curve, xi)?;
        let (first, val, dxi) = self.dir_basis.eval(xi)?;
        let mut d = [Vector3::zeros(), Vector3::zeros()];
        let mut ds = [Vector3::zeros(), Vector3::zeros()];
        for j in 0..val.len() {
            for a in 0..2 {
                d[a] += self.dir_coeffs[first + j][a] * val[j];
                ds[a] += self.dir_coeffs[first + j][a] * (dxi[j] / jt);
            }
        }
        Ok((d, ds))
    }

    /// Initial data entering the strain at one parametric point.
    pub fn initial_point_data(&self, xi: f64) -> Result<InitPointData, KinematicsError> {
        let derivs = self.curve.point_derivs(xi, 2)?;
        let jt = derivs[1].norm();
        if jt <= 1e-14 {
            return Err(SplineError::DegenerateTangent(xi).into());
        }
        let tangent = derivs[1] / jt;
        // phi0_ss = X_xixi / jt^2 - X_xi (X_xi . X_xixi) / jt^4
        let phi_ss = derivs[2] / (jt * jt) - derivs[1] * (derivs[1].dot(&derivs[2]) / jt.powi(4));

        let (d_proj, ds_proj) = self.projected_directors(xi)?;
        let kappa = [phi_ss.dot(&d_proj[0]), phi_ss.dot(&d_proj[1])];

        let (d, ds) = match self.mode {
            DirectorMode::Discrete => (d_proj, ds_proj),
            DirectorMode::Continuous => (
                self.frame.eval(&self.curve, xi)?,
                self.frame.eval_derivative(&self.curve, xi)?,
            ),
        };
        Ok(InitPointData {
            jtilde: jt,
            tangent,
            d,
            d_s: ds,
            kappa,
        })
    }
}

/// Initial quantities frozen at a quadrature point.
#[derive(Debug, Clone)]
pub struct InitPointData {
    pub jtilde: f64,
    pub tangent: Vector3<f64>,
    pub d: [Vector3<f64>; 2],
    pub d_s: [Vector3<f64>; 2],
    pub kappa: [f64; 2],
}

impl InitPointData {
    /// The fifteen initial scalar products in strain order, so the strain is
    /// a plain difference of current and initial product arrays.
    pub fn products(&self) -> SVector<f64, 15> {
        field_products(&self.tangent, &self.d, &self.d_s)
    }
}

fn field_products(
    u: &Vector3<f64>,
    a: &[Vector3<f64>; 2],
    b: &[Vector3<f64>; 2],
) -> SVector<f64, 15> {
    SVector::<f64, 15>::from_column_slice(&[
        0.5 * u.dot(u),
        u.dot(&b[0]),
        u.dot(&b[1]),
        0.5 * b[0].dot(&b[0]),
        0.5 * b[1].dot(&b[1]),
        b[0].dot(&b[1]),
        u.dot(&a[0]),
        u.dot(&a[1]),
        a[0].dot(&b[0]),
        a[0].dot(&b[1]),
        a[1].dot(&b[0]),
        a[1].dot(&b[1]),
        0.5 * a[0].dot(&a[0]),
        0.5 * a[1].dot(&a[1]),
        a[0].dot(&a[1]),
    ])
}

/// Current control coefficients: positions and director pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub phi: Vec<Vector3<f64>>,
    pub dir: Vec<[Vector3<f64>; 2]>,
}

impl Configuration {
    pub fn n_dofs(&self) -> usize {
        3 * self.phi.len() + 6 * self.dir.len()
    }

    /// Flat layout: all positions, then per director node (d1, d2).
    pub fn flatten(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_dofs());
        for (i, p) in self.phi.iter().enumerate() {
            v.fixed_rows_mut::<3>(3 * i).copy_from(p);
        }
        let off = 3 * self.phi.len();
        for (j, d) in self.dir.iter().enumerate() {
            v.fixed_rows_mut::<3>(off + 6 * j).copy_from(&d[0]);
            v.fixed_rows_mut::<3>(off + 6 * j + 3).copy_from(&d[1]);
        }
        v
    }

    pub fn from_flat(v: &DVector<f64>, n_phi: usize, n_dir: usize) -> Self {
        assert_eq!(v.len(), 3 * n_phi + 6 * n_dir);
        let phi = (0..n_phi)
            .map(|i| Vector3::from(v.fixed_rows::<3>(3 * i)))
            .collect();
        let off = 3 * n_phi;
        let dir = (0..n_dir)
            .map(|j| {
                [
                    Vector3::from(v.fixed_rows::<3>(off + 6 * j)),
                    Vector3::from(v.fixed_rows::<3>(off + 6 * j + 3)),
                ]
            })
            .collect();
        Configuration { phi, dir }
    }

    pub fn lerp(&self, other: &Configuration, t: f64) -> Configuration {
        Configuration {
            phi: self
                .phi
                .iter()
                .zip(&other.phi)
                .map(|(a, b)| a * (1.0 - t) + b * t)
                .collect(),
            dir: self
                .dir
                .iter()
                .zip(&other.dir)
                .map(|(a, b)| [a[0] * (1.0 - t) + b[0] * t, a[1] * (1.0 - t) + b[1] * t])
                .collect(),
        }
    }
}

/// Solves the banded Greville collocation system for the director control
/// coefficients: the reconstructed field interpolates the continuous one at
/// every Greville point.
pub fn project_initial_directors(
    curve: &NurbsCurve,
    frame: &FrameField,
    dir_basis: &FieldBasis,
) -> Result<Vec<[Vector3<f64>; 2]>, KinematicsError> {
    let greville = dir_basis.kv.greville()?;
    let n = dir_basis.n_basis();
    let p = dir_basis.kv.degree();
    let mut mat = BandMatrix::new(n, p, p);
    let mut rhs = vec![[Vector3::<f64>::zeros(); 2]; n];
    for (row, &g) in greville.iter().enumerate() {
        let (first, val, _) = dir_basis.eval(g)?;
        for (j, &v) in val.iter().enumerate() {
            if v != 0.0 {
                mat.add(row, first + j, v);
            }
        }
        rhs[row] = frame.eval(curve, g)?;
    }
    let piv = mat
        .factor()
        .map_err(|_| KinematicsError::SingularCollocation)?;
    let mut coeffs = vec![[Vector3::<f64>::zeros(); 2]; n];
    for a in 0..2 {
        for c in 0..3 {
            let mut b: Vec<f64> = rhs.iter().map(|r| r[a][c]).collect();
            mat.solve(&piv, &mut b);
            for i in 0..n {
                coeffs[i][a][c] = b[i];
            }
        }
    }
    Ok(coeffs)
}

/// Current field values at one parametric point.
#[derive(Debug, Clone)]
pub struct FieldPoint {
    /// Center-axis tangent of the current configuration (per initial arc length).
    pub u: Vector3<f64>,
    /// Current directors.
    pub a: [Vector3<f64>; 2],
    /// Arc-length derivatives of the directors.
    pub b: [Vector3<f64>; 2],
}

/// Non-zero basis data at one point, with derivatives taken per unit initial
/// arc length.
///
/// In the continuous-initial-director mode the spline coefficients carry the
/// director *change* over the exact initial field, so the field evaluation
/// adds the frozen offset `(D(xi), D_s(xi))`; the discrete mode keeps the
/// offsets at zero and the coefficients are total directors.
#[derive(Debug, Clone)]
pub struct LocalBasis {
    pub geom_first: usize,
    pub geom_val: Vec<f64>,
    pub geom_ds: Vec<f64>,
    pub dir_first: usize,
    pub dir_val: Vec<f64>,
    pub dir_ds: Vec<f64>,
    pub dir_offset: [Vector3<f64>; 2],
    pub dir_offset_s: [Vector3<f64>; 2],
}

impl LocalBasis {
    pub fn at(geom: &InitialGeometry, xi: f64) -> Result<Self, KinematicsError> {
        let jt = ParamMap::jacobian_at(&geom.curve, xi)?;
        let (gf, gv, gd) = geom.geom_basis.eval(xi)?;
        let (df, dv, dd) = geom.dir_basis.eval(xi)?;
        let (dir_offset, dir_offset_s) = match geom.mode {
            DirectorMode::Discrete => (
                [Vector3::zeros(), Vector3::zeros()],
                [Vector3::zeros(), Vector3::zeros()],
            ),
            DirectorMode::Continuous => (
                geom.frame.eval(&geom.curve, xi)?,
                geom.frame.eval_derivative(&geom.curve, xi)?,
            ),
        };
        Ok(LocalBasis {
            geom_first: gf,
            geom_val: gv,
            geom_ds: gd.iter().map(|d| d / jt).collect(),
            dir_first: df,
            dir_val: dv,
            dir_ds: dd.iter().map(|d| d / jt).collect(),
            dir_offset,
            dir_offset_s,
        })
    }

    pub fn n_geom(&self) -> usize {
        self.geom_val.len()
    }

    pub fn n_dir(&self) -> usize {
        self.dir_val.len()
    }

    /// Element DOF count: 3 per position node plus 6 per director node.
    pub fn n_dofs(&self) -> usize {
        3 * self.n_geom() + 6 * self.n_dir()
    }

    pub fn fields(&self, cfg: &Configuration) -> FieldPoint {
        let mut u = Vector3::zeros();
        for j in 0..self.n_geom() {
            u += cfg.phi[self.geom_first + j] * self.geom_ds[j];
        }
        let mut a = self.dir_offset;
        let mut b = self.dir_offset_s;
        for j in 0..self.n_dir() {
            let node = &cfg.dir[self.dir_first + j];
            for k in 0..2 {
                a[k] += node[k] * self.dir_val[j];
                b[k] += node[k] * self.dir_ds[j];
            }
        }
        FieldPoint { u, a, b }
    }
}

/// Beam strain at a point: current minus initial scalar products, with the
/// axial entry referenced to the exact unit initial tangent.
pub fn strain_from_fields(fp: &FieldPoint, init: &InitPointData) -> BeamStrain {
    let mut eps = field_products(&fp.u, &fp.a, &fp.b) - init.products();
    eps[0] = 0.5 * (fp.u.dot(&fp.u) - 1.0);
    eps
}

/// Evaluates the configuration fields and strain at `xi`.
pub fn beam_strain(
    cfg: &Configuration,
    geom: &InitialGeometry,
    xi: f64,
) -> Result<BeamStrain, KinematicsError> {
    let lb = LocalBasis::at(geom, xi)?;
    let init = geom.initial_point_data(xi)?;
    Ok(strain_from_fields(&lb.fields(cfg), &init))
}

/// First variation of the strain with respect to the element DOFs
/// `[phi nodes | (d1, d2) nodes]`: a 15 x m_e matrix, linear in the current
/// fields.
pub fn b_matrix_from_fields(lb: &LocalBasis, fp: &FieldPoint) -> DMatrix<f64> {
    let m = lb.n_dofs();
    let mut bm = DMatrix::zeros(15, m);
    let ng = lb.n_geom();
    let dir_off = 3 * ng;
    let set3 = |bm: &mut DMatrix<f64>, row: usize, col: usize, v: &Vector3<f64>, s: f64| {
        bm[(row, col)] += s * v.x;
        bm[(row, col + 1)] += s * v.y;
        bm[(row, col + 2)] += s * v.z;
    };
    for j in 0..ng {
        let c = 3 * j;
        let ns = lb.geom_ds[j];
        set3(&mut bm, 0, c, &fp.u, ns);
        set3(&mut bm, 1, c, &fp.b[0], ns);
        set3(&mut bm, 2, c, &fp.b[1], ns);
        set3(&mut bm, 6, c, &fp.a[0], ns);
        set3(&mut bm, 7, c, &fp.a[1], ns);
    }
    for j in 0..lb.n_dir() {
        let c1 = dir_off + 6 * j;
        let c2 = c1 + 3;
        let nv = lb.dir_val[j];
        let ns = lb.dir_ds[j];
        // rho_a = u . b_a
        set3(&mut bm, 1, c1, &fp.u, ns);
        set3(&mut bm, 2, c2, &fp.u, ns);
        // k11, k22, 2 k12
        set3(&mut bm, 3, c1, &fp.b[0], ns);
        set3(&mut bm, 4, c2, &fp.b[1], ns);
        set3(&mut bm, 5, c1, &fp.b[1], ns);
        set3(&mut bm, 5, c2, &fp.b[0], ns);
        // del_a = u . a_a
        set3(&mut bm, 6, c1, &fp.u, nv);
        set3(&mut bm, 7, c2, &fp.u, nv);
        // g_ab = a_a . b_b
        set3(&mut bm, 8, c1, &fp.b[0], nv);
        set3(&mut bm, 8, c1, &fp.a[0], ns);
        set3(&mut bm, 9, c1, &fp.b[1], nv);
        set3(&mut bm, 9, c2, &fp.a[0], ns);
        set3(&mut bm, 10, c2, &fp.b[0], nv);
        set3(&mut bm, 10, c1, &fp.a[1], ns);
        set3(&mut bm, 11, c2, &fp.b[1], nv);
        set3(&mut bm, 11, c2, &fp.a[1], ns);
        // chi11, chi22, 2 chi12
        set3(&mut bm, 12, c1, &fp.a[0], nv);
        set3(&mut bm, 13, c2, &fp.a[1], nv);
        set3(&mut bm, 14, c1, &fp.a[1], nv);
        set3(&mut bm, 14, c2, &fp.a[0], nv);
    }
    bm
}

/// Strain-variation operator at a point (wrapper around the field version).
pub fn b_operator(
    cfg: &Configuration,
    geom: &InitialGeometry,
    xi: f64,
) -> Result<DMatrix<f64>, KinematicsError> {
    let lb = LocalBasis::at(geom, xi)?;
    let fp = lb.fields(cfg);
    Ok(b_matrix_from_fields(&lb, &fp))
}

/// Second variation of `strain . r` with respect to the element DOFs: the
/// geometric stiffness kernel, symmetric and independent of the configuration
/// because the strain components are quadratic.
pub fn geometric_stiffness_from_basis(lb: &LocalBasis, r: &BeamStrain) -> DMatrix<f64> {
    let m = lb.n_dofs();
    let mut k = DMatrix::zeros(m, m);
    let ng = lb.n_geom();
    let dir_off = 3 * ng;

    // field tag: shape value per node + dof column base per node
    enum F {
        U,
        A(usize),
        B(usize),
    }
    let node_data = |f: &F, j: usize| -> (f64, usize) {
        match f {
            F::U => (lb.geom_ds[j], 3 * j),
            F::A(kk) => (lb.dir_val[j], dir_off + 6 * j + 3 * kk),
            F::B(kk) => (lb.dir_ds[j], dir_off + 6 * j + 3 * kk),
        }
    };
    let n_nodes = |f: &F| -> usize {
        match f {
            F::U => ng,
            _ => lb.n_dir(),
        }
    };
    let add_pair = |k: &mut DMatrix<f64>, f: &F, g: &F, w: f64, mirror: bool| {
        if w == 0.0 {
            return;
        }
        for i in 0..n_nodes(f) {
            let (si, ci) = node_data(f, i);
            for j in 0..n_nodes(g) {
                let (sj, cj) = node_data(g, j);
                let v = w * si * sj;
                for c in 0..3 {
                    k[(ci + c, cj + c)] += v;
                    if mirror {
                        k[(cj + c, ci + c)] += v;
                    }
                }
            }
        }
    };

    add_pair(&mut k, &F::U, &F::U, r[0], false);
    add_pair(&mut k, &F::U, &F::B(0), r[1], true);
    add_pair(&mut k, &F::U, &F::B(1), r[2], true);
    add_pair(&mut k, &F::B(0), &F::B(0), r[3], false);
    add_pair(&mut k, &F::B(1), &F::B(1), r[4], false);
    add_pair(&mut k, &F::B(0), &F::B(1), r[5], true);
    add_pair(&mut k, &F::U, &F::A(0), r[6], true);
    add_pair(&mut k, &F::U, &F::A(1), r[7], true);
    add_pair(&mut k, &F::A(0), &F::B(0), r[8], true);
    add_pair(&mut k, &F::A(0), &F::B(1), r[9], true);
    add_pair(&mut k, &F::A(1), &F::B(0), r[10], true);
    add_pair(&mut k, &F::A(1), &F::B(1), r[11], true);
    add_pair(&mut k, &F::A(0), &F::A(0), r[12], false);
    add_pair(&mut k, &F::A(1), &F::A(1), r[13], false);
    add_pair(&mut k, &F::A(0), &F::A(1), r[14], true);
    k
}

/// Geometric stiffness kernel at a point (wrapper).
pub fn geometric_stiffness(
    geom: &InitialGeometry,
    xi: f64,
    r: &BeamStrain,
) -> Result<DMatrix<f64>, KinematicsError> {
    let lb = LocalBasis::at(geom, xi)?;
    Ok(geometric_stiffness_from_basis(&lb, r))
}

/// Superposes a rigid motion on the control coefficients:
/// `phi -> R (phi + c)`, `d_a -> R d_a`.
pub fn rigid_transform(
    cfg: &Configuration,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Result<Configuration, KinematicsError> {
    let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm()
        + (rotation.determinant() - 1.0).abs();
    if defect > 1e-12 {
        return Err(KinematicsError::NotARotation(defect));
    }
    Ok(Configuration {
        phi: cfg.phi.iter().map(|p| rotation * (p + translation)).collect(),
        dir: cfg
            .dir
            .iter()
            .map(|d| [rotation * d[0], rotation * d[1]])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::FRAC_PI_2;

    fn quarter_circle_geom(p_d: usize, n_el: usize, mode: DirectorMode) -> InitialGeometry {
        let curve = NurbsCurve::circular_arc(100.0, 0.0, FRAC_PI_2).refined_to(n_el);
        InitialGeometry::new(
            curve,
            p_d,
            FrameMethod::SmallestRotation,
            (Vector3::z(), 1),
            mode,
        )
        .unwrap()
    }

    fn straight_geom(p: usize, n_el: usize) -> InitialGeometry {
        let curve = NurbsCurve::line(Vector3::zeros(), Vector3::new(3.0, 0.0, 0.0), p, n_el);
        InitialGeometry::new(
            curve,
            p,
            FrameMethod::SmallestRotation,
            (Vector3::y(), 0),
            DirectorMode::Discrete,
        )
        .unwrap()
    }

    fn perturbed(cfg: &Configuration, rng: &mut StdRng, scale: f64) -> Configuration {
        Configuration {
            phi: cfg
                .phi
                .iter()
                .map(|p| p + Vector3::from_fn(|_, _| rng.random_range(-scale..scale)))
                .collect(),
            dir: cfg
                .dir
                .iter()
                .map(|d| {
                    [
                        d[0] + Vector3::from_fn(|_, _| rng.random_range(-scale..scale)),
                        d[1] + Vector3::from_fn(|_, _| rng.random_range(-scale..scale)),
                    ]
                })
                .collect(),
        }
    }

    fn random_rotation(rng: &mut StdRng) -> Matrix3<f64> {
        let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
        nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            rng.random_range(0.0..std::f64::consts::TAU),
        )
        .into_inner()
    }

    #[test]
    fn straight_frame_is_constant() {
        let curve = NurbsCurve::line(Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0), 2, 3);
        let f = generate_frame(&curve, FrameMethod::SmallestRotation, (Vector3::y(), 0)).unwrap();
        for i in 0..=10 {
            let d = f.eval(&curve, i as f64 / 10.0).unwrap();
            assert_relative_eq!((d[0] - Vector3::y()).norm(), 0.0, epsilon = 1e-14);
            assert_relative_eq!((d[1] - Vector3::z()).norm(), 0.0, epsilon = 1e-14);
        }
        assert!(matches!(
            generate_frame(&curve, FrameMethod::Frenet, (Vector3::y(), 0)),
            Err(KinematicsError::FrenetStraight(_))
        ));
    }

    #[test]
    fn planar_arc_keeps_binormal() {
        let curve = NurbsCurve::circular_arc(5.0, 0.0, FRAC_PI_2);
        let f = generate_frame(&curve, FrameMethod::SmallestRotation, (Vector3::z(), 1)).unwrap();
        for i in 0..=20 {
            let xi = i as f64 / 20.0;
            let d = f.eval(&curve, xi).unwrap();
            assert_relative_eq!((d[1] - Vector3::z()).norm(), 0.0, epsilon = 1e-12);
            let t = curve.point_derivs(xi, 1).unwrap()[1].normalize();
            assert_relative_eq!(d[0].dot(&t), 0.0, epsilon = 1e-12);
            assert_relative_eq!((d[0].cross(&d[1]) - t).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn marching_frame_closes_on_a_ring() {
        let curve = NurbsCurve::full_ring(7.0);
        let f = smallest_rotation_march(&curve, (Vector3::z(), 1), 4096).unwrap();
        let d0 = f.eval(&curve, 0.0).unwrap();
        let d1 = f.eval(&curve, 1.0).unwrap();
        assert!((d0[0] - d1[0]).norm() < 1e-10);
        assert!((d0[1] - d1[1]).norm() < 1e-10);
    }

    #[test]
    fn projection_reproduces_constant_field_exactly() {
        let geom = straight_geom(3, 4);
        for c in &geom.dir_coeffs {
            assert_relative_eq!((c[0] - Vector3::y()).norm(), 0.0, epsilon = 1e-13);
            assert_relative_eq!((c[1] - Vector3::z()).norm(), 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn projection_interpolates_at_greville_points() {
        for p_d in [1usize, 2] {
            let geom = quarter_circle_geom(p_d, 8, DirectorMode::Discrete);
            let greville = geom.dir_basis.kv.greville().unwrap();
            for &g in &greville {
                let (d, _) = geom.projected_directors(g).unwrap();
                let exact = geom.frame.eval(&geom.curve, g).unwrap();
                assert!(
                    (d[0] - exact[0]).norm() < 1e-12 && (d[1] - exact[1]).norm() < 1e-12,
                    "p_d={p_d}, g={g}"
                );
            }
        }
    }

    #[test]
    fn projection_error_converges_quadratically_for_linears() {
        let err = |n_el: usize| -> f64 {
            let geom = quarter_circle_geom(1, n_el, DirectorMode::Discrete);
            let mut e: f64 = 0.0;
            for i in 0..=200 {
                let xi = i as f64 / 200.0;
                let (d, _) = geom.projected_directors(xi).unwrap();
                let exact = geom.frame.eval(&geom.curve, xi).unwrap();
                e = e.max((d[0] - exact[0]).norm()).max((d[1] - exact[1]).norm());
            }
            e
        };
        let e8 = err(8);
        let e16 = err(16);
        let rate = e8 / e16;
        assert!(
            (3.0..6.0).contains(&rate),
            "expected ~4x decay per halving, got {rate} ({e8} -> {e16})"
        );
    }

    #[test]
    fn strain_vanishes_at_reference() {
        for (p_d, mode) in [(2, DirectorMode::Discrete), (1, DirectorMode::Discrete)] {
            let geom = quarter_circle_geom(p_d, 8, mode);
            let cfg = geom.reference_configuration();
            for i in 0..=40 {
                let xi = i as f64 / 40.0;
                let eps = beam_strain(&cfg, &geom, xi).unwrap();
                assert!(
                    eps.norm() < 1e-12,
                    "p_d={p_d}, xi={xi}: |eps| = {}",
                    eps.norm()
                );
            }
        }
    }

    #[test]
    fn uniform_stretch_and_director_dilation() {
        let geom = straight_geom(2, 4);
        let lambda = 1.3;
        let mut cfg = geom.reference_configuration();
        for p in &mut cfg.phi {
            *p *= lambda;
        }
        let eps = beam_strain(&cfg, &geom, 0.37).unwrap();
        assert_relative_eq!(eps[0], 0.5 * (lambda * lambda - 1.0), epsilon = 1e-12);
        for k in 1..15 {
            assert_relative_eq!(eps[k], 0.0, epsilon = 1e-12);
        }

        let c = 0.2;
        let mut cfg = geom.reference_configuration();
        for d in &mut cfg.dir {
            d[0] *= 1.0 + c;
            d[1] *= 1.0 + c;
        }
        let eps = beam_strain(&cfg, &geom, 0.61).unwrap();
        let chi = 0.5 * ((1.0 + c) * (1.0 + c) - 1.0);
        assert_relative_eq!(eps[12], chi, epsilon = 1e-12);
        assert_relative_eq!(eps[13], chi, epsilon = 1e-12);
        for k in [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 14] {
            assert_relative_eq!(eps[k], 0.0, epsilon = 1e-12);
        }
    }

    fn element_direction_vector(
        lb: &LocalBasis,
        dir: &Configuration,
    ) -> DVector<f64> {
        let mut dv = DVector::zeros(lb.n_dofs());
        for j in 0..lb.n_geom() {
            dv.fixed_rows_mut::<3>(3 * j).copy_from(&dir.phi[lb.geom_first + j]);
        }
        for j in 0..lb.n_dir() {
            let i = lb.dir_first + j;
            dv.fixed_rows_mut::<3>(3 * lb.n_geom() + 6 * j)
                .copy_from(&dir.dir[i][0]);
            dv.fixed_rows_mut::<3>(3 * lb.n_geom() + 6 * j + 3)
                .copy_from(&dir.dir[i][1]);
        }
        dv
    }

    #[test]
    fn b_operator_matches_directional_differences() {
        let geom = quarter_circle_geom(2, 4, DirectorMode::Discrete);
        let mut rng = StdRng::seed_from_u64(21);
        let cfg = perturbed(&geom.reference_configuration(), &mut rng, 0.05);
        let xi = 0.43;
        let bm = b_operator(&cfg, &geom, xi).unwrap();
        let lb = LocalBasis::at(&geom, xi).unwrap();

        let zero = Configuration {
            phi: vec![Vector3::zeros(); cfg.phi.len()],
            dir: vec![[Vector3::zeros(); 2]; cfg.dir.len()],
        };
        let dir = perturbed(&zero, &mut rng, 1.0);
        let h = 1e-6;
        let mut plus = cfg.clone();
        let mut minus = cfg.clone();
        for i in 0..cfg.phi.len() {
            plus.phi[i] += dir.phi[i] * h;
            minus.phi[i] -= dir.phi[i] * h;
        }
        for i in 0..cfg.dir.len() {
            for k in 0..2 {
                plus.dir[i][k] += dir.dir[i][k] * h;
                minus.dir[i][k] -= dir.dir[i][k] * h;
            }
        }
        let fd = (beam_strain(&plus, &geom, xi).unwrap()
            - beam_strain(&minus, &geom, xi).unwrap())
            / (2.0 * h);

        let predicted = &bm * element_direction_vector(&lb, &dir);
        for k in 0..15 {
            assert!(
                (predicted[k] - fd[k]).abs() <= 1e-6 * (1.0 + fd[k].abs()),
                "component {k}: {} vs {}",
                predicted[k],
                fd[k]
            );
        }
    }

    #[test]
    fn b_operator_midpoint_secant_is_exact() {
        let geom = straight_geom(3, 3);
        let mut rng = StdRng::seed_from_u64(22);
        let y1 = perturbed(&geom.reference_configuration(), &mut rng, 0.4);
        let y2 = perturbed(&geom.reference_configuration(), &mut rng, 0.4);
        let mid = y1.lerp(&y2, 0.5);
        for &xi in &[0.11, 0.5, 0.93] {
            let bm = b_operator(&mid, &geom, xi).unwrap();
            let lb = LocalBasis::at(&geom, xi).unwrap();
            let diff = Configuration {
                phi: y2.phi.iter().zip(&y1.phi).map(|(a, b)| a - b).collect(),
                dir: y2
                    .dir
                    .iter()
                    .zip(&y1.dir)
                    .map(|(a, b)| [a[0] - b[0], a[1] - b[1]])
                    .collect(),
            };
            let lhs = &bm * element_direction_vector(&lb, &diff);
            let rhs = beam_strain(&y2, &geom, xi).unwrap() - beam_strain(&y1, &geom, xi).unwrap();
            let defect = (lhs - rhs).norm();
            assert!(
                defect <= 1e-13 * (1.0 + rhs.norm()),
                "xi={xi}: defect {defect}"
            );
        }
    }

    #[test]
    fn rigid_directions_are_in_the_null_space() {
        let geom = quarter_circle_geom(2, 4, DirectorMode::Discrete);
        let mut rng = StdRng::seed_from_u64(23);
        let cfg = perturbed(&geom.reference_configuration(), &mut rng, 0.03);
        let xi = 0.3;
        let bm = b_operator(&cfg, &geom, xi).unwrap();
        let lb = LocalBasis::at(&geom, xi).unwrap();
        let omega = Vector3::new(0.3, -0.5, 0.7);
        let shift = Vector3::new(0.1, 0.2, -0.3);
        let rigid = Configuration {
            phi: cfg.phi.iter().map(|p| omega.cross(p) + shift).collect(),
            dir: cfg
                .dir
                .iter()
                .map(|d| [omega.cross(&d[0]), omega.cross(&d[1])])
                .collect(),
        };
        let v = &bm * element_direction_vector(&lb, &rigid);
        assert!(v.norm() < 1e-12, "rigid direction leaks strain: {}", v.norm());
    }

    #[test]
    fn geometric_stiffness_properties() {
        let geom = straight_geom(2, 3);
        let mut rng = StdRng::seed_from_u64(24);
        let cfg = perturbed(&geom.reference_configuration(), &mut rng, 0.2);
        let xi = 0.37;
        let lb = LocalBasis::at(&geom, xi).unwrap();

        let zero = geometric_stiffness(&geom, xi, &BeamStrain::zeros()).unwrap();
        assert_eq!(zero.norm(), 0.0);

        let r = BeamStrain::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let kg = geometric_stiffness(&geom, xi, &r).unwrap();
        assert_relative_eq!((&kg - kg.transpose()).norm(), 0.0, epsilon = 1e-13);

        // finite difference of B(y)^T r along each element dof
        let h = 1e-6;
        let m = lb.n_dofs();
        let mut fd = DMatrix::zeros(m, m);
        for col in 0..m {
            let mut plus = cfg.clone();
            let mut minus = cfg.clone();
            let apply = |c: &mut Configuration, s: f64| {
                if col < 3 * lb.n_geom() {
                    c.phi[lb.geom_first + col / 3][col % 3] += s;
                } else {
                    let loc = col - 3 * lb.n_geom();
                    let node = lb.dir_first + loc / 6;
                    let slot = (loc % 6) / 3;
                    c.dir[node][slot][loc % 3] += s;
                }
            };
            apply(&mut plus, h);
            apply(&mut minus, -h);
            let gp = b_operator(&plus, &geom, xi).unwrap().transpose() * r;
            let gm = b_operator(&minus, &geom, xi).unwrap().transpose() * r;
            fd.set_column(col, &((gp - gm) / (2.0 * h)));
        }
        assert!(
            (&kg - &fd).norm() <= 1e-5 * kg.norm().max(1.0),
            "defect {}",
            (&kg - &fd).norm()
        );

        // quadratic strains: the kernel does not depend on the configuration
        let kg2 = geometric_stiffness(&geom, xi, &r).unwrap();
        assert_eq!(kg, kg2);
    }

    #[test]
    fn rigid_transform_group_properties() {
        let geom = straight_geom(2, 2);
        let cfg = geom.reference_configuration();
        let id = rigid_transform(&cfg, &Matrix3::identity(), &Vector3::zeros()).unwrap();
        assert_eq!(id, cfg);

        let mut rng = StdRng::seed_from_u64(25);
        let r1 = random_rotation(&mut rng);
        let r2 = random_rotation(&mut rng);
        let a = rigid_transform(
            &rigid_transform(&cfg, &r1, &Vector3::zeros()).unwrap(),
            &r2,
            &Vector3::zeros(),
        )
        .unwrap();
        let b = rigid_transform(&cfg, &(r2 * r1), &Vector3::zeros()).unwrap();
        for (pa, pb) in a.phi.iter().zip(&b.phi) {
            assert!((pa - pb).norm() < 1e-12);
        }

        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(rigid_transform(&cfg, &skew, &Vector3::zeros()).is_err());
    }

    #[test]
    fn discrete_objectivity_for_all_degrees() {
        let mut rng = StdRng::seed_from_u64(26);
        for (p, p_d) in [(2usize, 1usize), (2, 2), (3, 2), (3, 3), (4, 2)] {
            let curve = if p == 2 {
                NurbsCurve::circular_arc(100.0, 0.0, FRAC_PI_2).refined_to(6)
            } else {
                NurbsCurve::line(Vector3::zeros(), Vector3::new(4.0, 0.0, 0.0), p, 6)
            };
            let geom = InitialGeometry::new(
                curve,
                p_d,
                FrameMethod::SmallestRotation,
                (Vector3::z(), 1),
                DirectorMode::Discrete,
            )
            .unwrap();
            let cfg = perturbed(&geom.reference_configuration(), &mut rng, 0.05);
            let rot = random_rotation(&mut rng);
            let shift = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let moved = rigid_transform(&cfg, &rot, &shift).unwrap();
            for i in 0..=20 {
                let xi = i as f64 / 20.0;
                let e0 = beam_strain(&cfg, &geom, xi).unwrap();
                let e1 = beam_strain(&moved, &geom, xi).unwrap();
                assert!(
                    (e0 - e1).norm() <= 1e-12 * (1.0 + e0.norm()),
                    "p={p}, p_d={p_d}, xi={xi}: defect {}",
                    (e0 - e1).norm()
                );
            }
        }
    }

    #[test]
    fn continuous_mode_cannot_represent_rigid_rotations() {
        // both modes are strain-free at the reference, but only the discrete
        // mode can reach a strain-free state after a rigid rotation when the
        // director space has lower degree than the exact initial field
        let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::x_axis(), 0.7).into_inner();

        let cont = quarter_circle_geom(1, 4, DirectorMode::Continuous);
        let ref_cont = cont.reference_configuration();
        let mut worst_ref: f64 = 0.0;
        for i in 0..=20 {
            let xi = i as f64 / 20.0;
            worst_ref = worst_ref.max(beam_strain(&ref_cont, &cont, xi).unwrap().norm());
        }
        assert!(worst_ref < 1e-13, "reference leaks strain: {worst_ref}");

        // best spline representation of the rotated state: positions rotate
        // exactly, director increments interpolate (R - 1) D at the Greville
        // points (plain interpolation for the degree-1 basis)
        let greville = cont.dir_basis.kv.greville().unwrap();
        let mut cfg = ref_cont.clone();
        for p in &mut cfg.phi {
            *p = rot * *p;
        }
        for (i, &g) in greville.iter().enumerate() {
            let d_exact = cont.frame.eval(&cont.curve, g).unwrap();
            cfg.dir[i] = [rot * d_exact[0] - d_exact[0], rot * d_exact[1] - d_exact[1]];
        }
        let mut worst_rot: f64 = 0.0;
        for i in 0..=20 {
            let xi = i as f64 / 20.0;
            worst_rot = worst_rot.max(beam_strain(&cfg, &cont, xi).unwrap().norm());
        }
        assert!(
            worst_rot > 1e-8,
            "expected a representability gap, got {worst_rot}"
        );

        // the discrete mode reaches the rotated state exactly
        let disc = quarter_circle_geom(1, 4, DirectorMode::Discrete);
        let moved =
            rigid_transform(&disc.reference_configuration(), &rot, &Vector3::zeros()).unwrap();
        let mut worst_disc: f64 = 0.0;
        for i in 0..=20 {
            let xi = i as f64 / 20.0;
            worst_disc = worst_disc.max(beam_strain(&moved, &disc, xi).unwrap().norm());
        }
        assert!(worst_disc < 1e-13, "discrete mode leaks {worst_disc}");
    }

    #[test]
    fn translation_leaves_derivatives_unchanged() {
        let geom = straight_geom(2, 3);
        let cfg = geom.reference_configuration();
        let mut shifted = cfg.clone();
        let c = Vector3::new(0.4, -0.2, 1.1);
        for p in &mut shifted.phi {
            *p += c;
        }
        let lb = LocalBasis::at(&geom, 0.4).unwrap();
        let f0 = lb.fields(&cfg);
        let f1 = lb.fields(&shifted);
        assert!((f0.u - f1.u).norm() < 1e-13);
    }

    #[test]
    fn current_tangent_matches_finite_differences_along_s() {
        let geom = quarter_circle_geom(2, 6, DirectorMode::Discrete);
        let mut rng = StdRng::seed_from_u64(27);
        let cfg = perturbed(&geom.reference_configuration(), &mut rng, 0.1);
        let eval_phi = |xi: f64| -> Vector3<f64> {
            let (first, val, _) = geom.geom_basis.eval(xi).unwrap();
            let mut p = Vector3::zeros();
            for j in 0..val.len() {
                p += cfg.phi[first + j] * val[j];
            }
            p
        };
        let xi = 0.47;
        let h = 1e-6;
        let jt = ParamMap::jacobian_at(&geom.curve, xi).unwrap();
        let fd = (eval_phi(xi + h) - eval_phi(xi - h)) / (2.0 * h * jt);
        let lb = LocalBasis::at(&geom, xi).unwrap();
        let u = lb.fields(&cfg).u;
        assert!((u - fd).norm() <= 1e-6 * u.norm().max(1.0));
    }

    #[test]
    fn ring_initial_curvature_magnitude() {
        let r = 20.0;
        let curve = NurbsCurve::full_ring(r).refined_to(24);
        let geom = InitialGeometry::new(
            curve,
            2,
            FrameMethod::SmallestRotation,
            (Vector3::z(), 0),
            DirectorMode::Discrete,
        )
        .unwrap();
        // seed slot 0 puts the plane normal on d1, so the in-plane curvature
        // shows up in kappa_2
        for &xi in &[0.05, 0.3, 0.62, 0.9] {
            let init = geom.initial_point_data(xi).unwrap();
            assert!(init.kappa[0].abs() < 1e-6, "kappa1 = {}", init.kappa[0]);
            assert_relative_eq!(init.kappa[1].abs(), 1.0 / r, max_relative = 1e-3);
        }
    }
}
