//! Three-field mixed finite elements and global assembly.
//!
//! Unknowns per patch: the configuration control coefficients `y`, patch-wise
//! smooth stress-resultant and strain coefficient arrays `r` and `e` (15
//! components each, degree one below the geometry), and one incompatible
//! section-strain vector `alpha` per element, condensed out of the global
//! system through its Schur complement.
//!
//! The same element routine serves four evaluation schemes. The dynamic
//! mid-point variants evaluate the constitutive terms at averaged fields and
//! carry the factor-two bookkeeping of the time-discrete linearized equations;
//! the energy-momentum variant additionally enforces the strain compatibility
//! at the end of the step, which makes its tangent unsymmetric.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::kinematics::{
    b_matrix_from_fields, geometric_stiffness_from_basis, strain_from_fields, BeamStrain,
    Configuration, InitPointData, InitialGeometry, KinematicsError, LocalBasis,
};
use crate::linalg::{BandMatrix, LinalgError};
use crate::material::{MaterialError, MaterialLaw, MetricFrame, Voigt6};
use crate::section::{
    build_eas_basis, eval_a, eval_gamma, gauss_rule, inertia_properties, initial_jacobian,
    CrossSection, EasBasisSet, EasConfig, SectionError,
};
use crate::splines::{derive_field_knots, gauss_legendre, SplineError};

#[derive(Debug, Error)]
pub enum FemError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error("element {0}: {1}")]
    AtElement(usize, Box<FemError>),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("element {0}: condensation matrix is singular")]
    SingularCondensation(usize),
    #[error("linear solve failed: {0}")]
    Solve(#[from] LinalgError),
    #[error("constraint location {0} is not an interpolatory parameter")]
    NotInterpolatory(f64),
    #[error("duplicate constraint on control point {0}")]
    DuplicateConstraint(usize),
}

/// Evaluation scheme selected by the time/load stepper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    QuasiStatic,
    EnergyMomentum,
    Midpoint,
    Trapezoidal,
}

impl SchemeKind {
    /// Right-hand-side factors (external, y, r, e, alpha) of the linearized
    /// step equations.
    fn factors(self) -> ModeFactors {
        match self {
            SchemeKind::QuasiStatic | SchemeKind::Trapezoidal => ModeFactors {
                ext: 1.0,
                y: 1.0,
                r: 1.0,
                e: 1.0,
                alpha: 1.0,
            },
            SchemeKind::EnergyMomentum => ModeFactors {
                ext: 2.0,
                y: 2.0,
                r: 1.0,
                e: 2.0,
                alpha: 2.0,
            },
            SchemeKind::Midpoint => ModeFactors {
                ext: 2.0,
                y: 2.0,
                r: 2.0,
                e: 2.0,
                alpha: 2.0,
            },
        }
    }

    pub fn is_dynamic(self) -> bool {
        self != SchemeKind::QuasiStatic
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModeFactors {
    pub ext: f64,
    pub y: f64,
    pub r: f64,
    pub e: f64,
    pub alpha: f64,
}

/// Cached constitutive section integrals for linear (constant-tangent) laws.
#[derive(Debug, Clone)]
struct LinearBlocks {
    c_ee: DMatrix<f64>,
    c_ae: DMatrix<f64>,
    c_aa: DMatrix<f64>,
}

/// Data of one section quadrature point used by nonlinear laws.
#[derive(Debug, Clone)]
struct SectionPt {
    a: SMatrix<f64, 6, 15>,
    gamma: DMatrix<f64>,
    frame: MetricFrame,
    w_j0: f64,
}

/// Precomputed data at one longitudinal quadrature point.
pub struct QpData {
    pub xi: f64,
    /// Gauss weight times the arc-length Jacobian: the ds measure.
    pub w_ds: f64,
    pub basis: LocalBasis,
    pub phys_first: usize,
    pub phys_val: Vec<f64>,
    pub init: InitPointData,
    pub mass: SMatrix<f64, 9, 9>,
    section_pts: Vec<SectionPt>,
    lin: Option<LinearBlocks>,
}

pub struct ElementData {
    pub span: (f64, f64),
    pub qps: Vec<QpData>,
    pub geom_first: usize,
    pub n_geom: usize,
    pub dir_first: usize,
    pub n_dir: usize,
    pub phys_first: usize,
    pub n_phys: usize,
}

impl ElementData {
    pub fn m_y(&self) -> usize {
        3 * self.n_geom + 6 * self.n_dir
    }

    pub fn m_p(&self) -> usize {
        15 * self.n_phys
    }
}

/// Assembled spatial discretization of one beam patch.
pub struct Discretization {
    pub geom: InitialGeometry,
    pub section: CrossSection,
    pub eas: EasBasisSet,
    pub material: MaterialLaw,
    pub phys_kv: crate::splines::KnotVector,
    pub elements: Vec<ElementData>,
    pub closed: bool,
    pub assume_orthonormal_frame: bool,
    n_phi: usize,
    n_dir: usize,
    n_phys: usize,
}

impl Discretization {
    pub fn new(
        geom: InitialGeometry,
        section: CrossSection,
        eas_config: &EasConfig,
        material: MaterialLaw,
        assume_orthonormal_frame: bool,
        closed: bool,
    ) -> Result<Self, FemError> {
        let eas = build_eas_basis(&section, eas_config)?;
        let p = geom.curve.knot_vector().degree();
        let phys_kv = derive_field_knots(geom.curve.knot_vector(), p.saturating_sub(1));
        let n_phi = geom.geom_basis.n_basis();
        let n_dir = geom.dir_basis.n_basis();
        let n_phys = phys_kv.n_basis();

        let long_rule = gauss_legendre(p + 1);
        let n_sq = (eas.max_degree() + 1).max(3);
        let rule2d = gauss_rule(&section, n_sq, n_sq);
        let c_cart_lin = if material.is_linear() {
            Some(material.tangent(&Voigt6::zeros())?)
        } else {
            None
        };

        let spans = geom.curve.knot_vector().element_spans();
        let mut elements = Vec::with_capacity(spans.len());
        for (e_idx, &(a, b)) in spans.iter().enumerate() {
            let build = || -> Result<ElementData, FemError> {
                let h = 0.5 * (b - a);
                let mut qps = Vec::with_capacity(long_rule.len());
                for &(x, w) in &long_rule {
                    let xi = a + h * (x + 1.0);
                    let basis = LocalBasis::at(&geom, xi)?;
                    let init = geom.initial_point_data(xi)?;
                    let pb = phys_kv.eval_basis(xi, 0)?;
                    let inertia = inertia_properties(&section, (init.kappa[0], init.kappa[1]))?;

                    let mut section_pts = Vec::with_capacity(rule2d.points.len());
                    let mut lin = c_cart_lin.map(|_| LinearBlocks {
                        c_ee: DMatrix::zeros(15, 15),
                        c_ae: DMatrix::zeros(eas.d_a, 15),
                        c_aa: DMatrix::zeros(eas.d_a, eas.d_a),
                    });
                    for &(z1, z2, wa) in &rule2d.points {
                        let j0 = initial_jacobian(z1, z2, (init.kappa[0], init.kappa[1]))?;
                        let frame = if assume_orthonormal_frame {
                            MetricFrame::orthonormal()
                        } else {
                            let g3 = init.tangent + init.d_s[0] * z1 + init.d_s[1] * z2;
                            MetricFrame::new(&init.d[0], &init.d[1], &g3)?
                        };
                        let a_mat = eval_a(z1, z2);
                        let gamma = eval_gamma(&eas, z1, z2);
                        if let (Some(lin), Some(c_cart)) = (lin.as_mut(), c_cart_lin.as_ref()) {
                            let c_cov = frame.tangent_to_covariant(c_cart);
                            let ca = c_cov * a_mat;
                            let w = wa * j0;
                            add_ata15(&mut lin.c_ee, &a_mat, &ca, w);
                            if eas.d_a > 0 {
                                let cg = c_cov * &gamma;
                                for i in 0..eas.d_a {
                                    for j in 0..15 {
                                        let mut s = 0.0;
                                        for k in 0..6 {
                                            s += gamma[(k, i)] * ca[(k, j)];
                                        }
                                        lin.c_ae[(i, j)] += w * s;
                                    }
                                    for j in 0..eas.d_a {
                                        let mut s = 0.0;
                                        for k in 0..6 {
                                            s += gamma[(k, i)] * cg[(k, j)];
                                        }
                                        lin.c_aa[(i, j)] += w * s;
                                    }
                                }
                            }
                        }
                        section_pts.push(SectionPt {
                            a: a_mat,
                            gamma,
                            frame,
                            w_j0: wa * j0,
                        });
                    }
                    qps.push(QpData {
                        xi,
                        w_ds: w * h * init.jtilde,
                        basis,
                        phys_first: pb.first,
                        phys_val: pb.values[0].clone(),
                        init,
                        mass: inertia.mass_matrix(),
                        section_pts,
                        lin,
                    });
                }
                let q0 = &qps[0];
                Ok(ElementData {
                    span: (a, b),
                    geom_first: q0.basis.geom_first,
                    n_geom: q0.basis.n_geom(),
                    dir_first: q0.basis.dir_first,
                    n_dir: q0.basis.n_dir(),
                    phys_first: q0.phys_first,
                    n_phys: q0.phys_val.len(),
                    qps,
                })
            };
            elements.push(build().map_err(|e| FemError::AtElement(e_idx, Box::new(e)))?);
        }
        Ok(Discretization {
            geom,
            section,
            eas,
            material,
            phys_kv,
            elements,
            closed,
            assume_orthonormal_frame,
            n_phi,
            n_dir,
            n_phys,
        })
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_dir(&self) -> usize {
        self.n_dir
    }

    pub fn n_phys(&self) -> usize {
        self.n_phys
    }

    pub fn n_y(&self) -> usize {
        3 * self.n_phi + 6 * self.n_dir
    }

    pub fn n_z(&self) -> usize {
        self.n_y() + 30 * self.n_phys
    }

    pub fn phi_dof(&self, cp: usize) -> usize {
        3 * cp
    }

    pub fn dir_dof(&self, cp: usize, slot: usize) -> usize {
        3 * self.n_phi + 6 * cp + 3 * slot
    }

    pub fn r_offset(&self) -> usize {
        self.n_y()
    }

    pub fn e_offset(&self) -> usize {
        self.n_y() + 15 * self.n_phys
    }

    /// Stress-free reference state with zero velocity.
    pub fn reference_state(&self) -> GlobalState {
        GlobalState {
            config: self.geom.reference_configuration(),
            velocity: DVector::zeros(self.n_y()),
            stress: DVector::zeros(15 * self.n_phys),
            strain: DVector::zeros(15 * self.n_phys),
            alpha: self
                .elements
                .iter()
                .map(|_| DVector::zeros(self.eas.d_a))
                .collect(),
            accel: DVector::zeros(self.n_y()),
        }
    }

    /// Control point whose basis function is interpolatory at `xi` (ends of a
    /// clamped patch, or interior breakpoints of full multiplicity).
    pub fn interpolatory_cp(
        &self,
        basis: &crate::kinematics::FieldBasis,
        xi: f64,
    ) -> Result<usize, FemError> {
        let (first, val, _) = basis.eval(xi).map_err(FemError::Spline)?;
        for (j, &v) in val.iter().enumerate() {
            if (v - 1.0).abs() < 1e-9 {
                return Ok(first + j);
            }
        }
        Err(FemError::NotInterpolatory(xi))
    }

    /// 15-component field value of a patch-wise coefficient array at a qp.
    pub fn phys_field_at(&self, coeffs: &DVector<f64>, qp: &QpData) -> BeamStrain {
        let mut v = BeamStrain::zeros();
        for (j, &n) in qp.phys_val.iter().enumerate() {
            let base = 15 * (qp.phys_first + j);
            for c in 0..15 {
                v[c] += n * coeffs[base + c];
            }
        }
        v
    }

    /// 9-component field value of a y-layout vector (velocity, acceleration).
    pub fn y_field_at(&self, v: &DVector<f64>, qp: &QpData) -> SMatrix<f64, 9, 1> {
        let mut out = SMatrix::<f64, 9, 1>::zeros();
        let lb = &qp.basis;
        for j in 0..lb.n_geom() {
            let base = self.phi_dof(lb.geom_first + j);
            for c in 0..3 {
                out[c] += lb.geom_val[j] * v[base + c];
            }
        }
        for j in 0..lb.n_dir() {
            for slot in 0..2 {
                let base = self.dir_dof(lb.dir_first + j, slot);
                for c in 0..3 {
                    out[3 + 3 * slot + c] += lb.dir_val[j] * v[base + c];
                }
            }
        }
        out
    }
}

/// Full unknown set of a run.
#[derive(Debug, Clone)]
pub struct GlobalState {
    pub config: Configuration,
    /// Independent velocity coefficients in y layout.
    pub velocity: DVector<f64>,
    /// Stress-resultant coefficients (15 per physical basis function).
    pub stress: DVector<f64>,
    /// Physical strain coefficients, same layout as `stress`.
    pub strain: DVector<f64>,
    /// Per-element incompatible strain parameters.
    pub alpha: Vec<DVector<f64>>,
    /// Acceleration coefficients (used by the trapezoidal scheme).
    pub accel: DVector<f64>,
}

impl GlobalState {
    pub fn midpoint_with(&self, other: &GlobalState) -> GlobalState {
        GlobalState {
            config: self.config.lerp(&other.config, 0.5),
            velocity: (&self.velocity + &other.velocity) * 0.5,
            stress: (&self.stress + &other.stress) * 0.5,
            strain: (&self.strain + &other.strain) * 0.5,
            alpha: self
                .alpha
                .iter()
                .zip(&other.alpha)
                .map(|(a, b)| (a + b) * 0.5)
                .collect(),
            accel: (&self.accel + &other.accel) * 0.5,
        }
    }
}

/// Dirichlet structure: which control points carry constrained positions
/// and/or directors. Values are written into the configuration by the driver
/// before each step; increments on these DOFs are zero.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    pub phi_cps: Vec<usize>,
    pub dir_cps: Vec<usize>,
}

/// Resolved DOF numbering: ties for closed patches, removed constrained DOFs,
/// and a parametric-anchor ordering that keeps the factorization banded.
pub struct DofMap {
    pub map: Vec<Option<usize>>,
    pub n_reduced: usize,
    pub bandwidth: usize,
}

impl DofMap {
    pub fn build(disc: &Discretization, constraints: &ConstraintSet) -> Result<Self, FemError> {
        let n_z = disc.n_z();
        let n_y = disc.n_y();

        // tie the seam of closed patches: last control point follows the first
        let mut alias: Vec<usize> = (0..n_z).collect();
        if disc.closed {
            for c in 0..3 {
                alias[disc.phi_dof(disc.n_phi - 1) + c] = disc.phi_dof(0) + c;
            }
            for slot in 0..2 {
                for c in 0..3 {
                    alias[disc.dir_dof(disc.n_dir - 1, slot) + c] = disc.dir_dof(0, slot) + c;
                }
            }
        }

        let mut constrained = vec![false; n_z];
        let mut seen = std::collections::HashSet::new();
        for &cp in &constraints.phi_cps {
            if !seen.insert(("phi", cp)) {
                return Err(FemError::DuplicateConstraint(cp));
            }
            for c in 0..3 {
                constrained[alias[disc.phi_dof(cp) + c]] = true;
            }
        }
        for &cp in &constraints.dir_cps {
            if !seen.insert(("dir", cp)) {
                return Err(FemError::DuplicateConstraint(cp));
            }
            for slot in 0..2 {
                for c in 0..3 {
                    constrained[alias[disc.dir_dof(cp, slot) + c]] = true;
                }
            }
        }

        // parametric anchor of every representative dof; closed patches fold
        // the anchor around the seam so the wrap-around coupling stays local
        let g_geom = disc.geom.geom_basis.kv.greville().map_err(FemError::Spline)?;
        let g_dir = disc.geom.dir_basis.kv.greville().map_err(FemError::Spline)?;
        let g_phys = if disc.phys_kv.degree() == 0 {
            // midpoints of the element spans
            disc.phys_kv
                .element_spans()
                .iter()
                .map(|&(a, b)| 0.5 * (a + b))
                .collect()
        } else {
            disc.phys_kv.greville().map_err(FemError::Spline)?
        };
        let fold = |g: f64| if disc.closed { g.min(1.0 - g) } else { g };
        let anchor = |z: usize| -> (f64, usize) {
            if z < 3 * disc.n_phi {
                (fold(g_geom[z / 3]), z)
            } else if z < n_y {
                (fold(g_dir[(z - 3 * disc.n_phi) / 6]), z)
            } else {
                (fold(g_phys[(z - n_y) % (15 * disc.n_phys) / 15]), z)
            }
        };

        let mut reps: Vec<usize> = (0..n_z)
            .filter(|&z| alias[z] == z && !constrained[z])
            .collect();
        reps.sort_by(|&a, &b| {
            let (ga, ia) = anchor(a);
            let (gb, ib) = anchor(b);
            ga.partial_cmp(&gb).unwrap().then(ia.cmp(&ib))
        });
        let mut map = vec![None; n_z];
        for (red, &z) in reps.iter().enumerate() {
            map[z] = Some(red);
        }
        for z in 0..n_z {
            if alias[z] != z && !constrained[alias[z]] {
                map[z] = map[alias[z]];
            }
        }

        // honest bandwidth from the coupled dof sets of each element
        let mut bandwidth = 0usize;
        for el in &disc.elements {
            let mut lo = usize::MAX;
            let mut hi = 0usize;
            for z in element_dofs(disc, el) {
                if let Some(r) = map[z] {
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            if lo != usize::MAX {
                bandwidth = bandwidth.max(hi - lo);
            }
        }
        Ok(DofMap {
            map,
            n_reduced: reps.len(),
            bandwidth,
        })
    }
}

/// Global z-indices coupled by one element: y block, then r, then e.
fn element_dofs(disc: &Discretization, el: &ElementData) -> Vec<usize> {
    let mut out = Vec::with_capacity(el.m_y() + 2 * el.m_p());
    for j in 0..el.n_geom {
        let base = disc.phi_dof(el.geom_first + j);
        out.extend(base..base + 3);
    }
    for j in 0..el.n_dir {
        let base = disc.dir_dof(el.dir_first + j, 0);
        out.extend(base..base + 6);
    }
    let r0 = disc.r_offset();
    let e0 = disc.e_offset();
    for j in 0..el.n_phys {
        let base = r0 + 15 * (el.phys_first + j);
        out.extend(base..base + 15);
    }
    for j in 0..el.n_phys {
        let base = e0 + 15 * (el.phys_first + j);
        out.extend(base..base + 15);
    }
    out
}

/// Element tangent blocks and residuals, with the incompatible strain already
/// condensed; `recovery` carries what is needed to update it after the solve.
pub struct ElementBlocks {
    pub k_yy: DMatrix<f64>,
    pub k_yr: DMatrix<f64>,
    pub k_ry: DMatrix<f64>,
    pub k_re: DMatrix<f64>,
    pub k_ee: DMatrix<f64>,
    pub f_y: DVector<f64>,
    pub f_r: DVector<f64>,
    pub f_e: DVector<f64>,
    pub recovery: Option<AlphaRecovery>,
}

pub struct AlphaRecovery {
    pub k_aa_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub k_ae: DMatrix<f64>,
    pub f_a: DVector<f64>,
}

/// Schur condensation of the incompatible strain block.
pub fn condense_alpha(
    k_ee: &DMatrix<f64>,
    k_ae: &DMatrix<f64>,
    k_aa_lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    f_e: &DVector<f64>,
    f_a: &DVector<f64>,
) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let kaa_inv_kae = k_aa_lu.solve(k_ae)?;
    let kaa_inv_fa = k_aa_lu.solve(f_a)?;
    let k_hat = k_ee - k_ae.transpose() * kaa_inv_kae;
    let f_hat = f_e - k_ae.transpose() * kaa_inv_fa;
    Some((k_hat, f_hat))
}

/// Recovers the incompatible strain increment after the global solve; the
/// residual factor matches the right-hand-side convention of the scheme.
pub fn recover_alpha(rec: &AlphaRecovery, de: &DVector<f64>, residual_factor: f64) -> DVector<f64> {
    let rhs = &rec.f_a * residual_factor + &rec.k_ae * de;
    -rec.k_aa_lu.solve(&rhs).expect("factorized k_aa")
}

/// Per-step inputs of the element routine.
pub struct StepContext<'a> {
    pub mode: SchemeKind,
    pub dt: f64,
    pub state_n: &'a GlobalState,
    /// Mid-point state (built by the driver for the dynamic mid-point modes).
    pub mid: Option<&'a GlobalState>,
    /// Current acceleration iterate (trapezoidal only), y layout.
    pub accel: Option<&'a DVector<f64>>,
}

struct LineDensityEval {
    grad_e: BeamStrain,
    grad_a: DVector<f64>,
    c_ee: DMatrix<f64>,
    c_ae: DMatrix<f64>,
    c_aa: DMatrix<f64>,
}

/// Line energy density of one quadrature point: section integral of the
/// volumetric energy with the `j0` measure.
pub fn line_density_energy(
    disc: &Discretization,
    qp: &QpData,
    eps_p: &BeamStrain,
    alpha: &DVector<f64>,
) -> Result<f64, FemError> {
    if let Some(lin) = &qp.lin {
        let ce = &lin.c_ee * eps_p;
        let mut psi = 0.5 * eps_p.dot(&ce);
        if disc.eas.d_a > 0 {
            let cae_e = &lin.c_ae * eps_p;
            psi += alpha.dot(&cae_e) + 0.5 * alpha.dot(&(&lin.c_aa * alpha));
        }
        Ok(psi)
    } else {
        let mut psi = 0.0;
        for pt in &qp.section_pts {
            let mut e_cov: Voigt6 = pt.a * eps_p;
            if disc.eas.d_a > 0 {
                for k in 0..6 {
                    for c in 0..disc.eas.d_a {
                        e_cov[k] += pt.gamma[(k, c)] * alpha[c];
                    }
                }
            }
            let e_cart = pt.frame.strain_to_cartesian(&e_cov);
            psi += pt.w_j0 * disc.material.energy(&e_cart)?;
        }
        Ok(psi)
    }
}

/// Gradients and constitutive blocks of the line density at one point.
fn line_density_grads(
    disc: &Discretization,
    qp: &QpData,
    eps_p: &BeamStrain,
    alpha: &DVector<f64>,
) -> Result<LineDensityEval, FemError> {
    let d_a = disc.eas.d_a;
    if let Some(lin) = &qp.lin {
        let mut ge: DVector<f64> = &lin.c_ee * eps_p;
        let mut grad_a = DVector::zeros(d_a);
        if d_a > 0 {
            ge += lin.c_ae.transpose() * alpha;
            grad_a = &lin.c_ae * eps_p + &lin.c_aa * alpha;
        }
        Ok(LineDensityEval {
            grad_e: BeamStrain::from_column_slice(ge.as_slice()),
            grad_a,
            c_ee: lin.c_ee.clone(),
            c_ae: lin.c_ae.clone(),
            c_aa: lin.c_aa.clone(),
        })
    } else {
        let mut grad_e = BeamStrain::zeros();
        let mut grad_a = DVector::zeros(d_a);
        let mut c_ee = DMatrix::zeros(15, 15);
        let mut c_ae = DMatrix::zeros(d_a, 15);
        let mut c_aa = DMatrix::zeros(d_a, d_a);
        for pt in &qp.section_pts {
            let mut e_cov: Voigt6 = pt.a * eps_p;
            if d_a > 0 {
                for k in 0..6 {
                    for c in 0..d_a {
                        e_cov[k] += pt.gamma[(k, c)] * alpha[c];
                    }
                }
            }
            let e_cart = pt.frame.strain_to_cartesian(&e_cov);
            let s_cov = pt.frame.stress_to_covariant(&disc.material.stress(&e_cart)?);
            let c_cov = pt.frame.tangent_to_covariant(&disc.material.tangent(&e_cart)?);
            let w = pt.w_j0;
            grad_e += (pt.a.transpose() * s_cov) * w;
            let ca = c_cov * pt.a;
            add_ata15(&mut c_ee, &pt.a, &ca, w);
            if d_a > 0 {
                let cg = c_cov * &pt.gamma;
                for i in 0..d_a {
                    let mut ga = 0.0;
                    for k in 0..6 {
                        ga += pt.gamma[(k, i)] * s_cov[k];
                    }
                    grad_a[i] += w * ga;
                    for j in 0..15 {
                        let mut s = 0.0;
                        for k in 0..6 {
                            s += pt.gamma[(k, i)] * ca[(k, j)];
                        }
                        c_ae[(i, j)] += w * s;
                    }
                    for j in 0..d_a {
                        let mut s = 0.0;
                        for k in 0..6 {
                            s += pt.gamma[(k, i)] * cg[(k, j)];
                        }
                        c_aa[(i, j)] += w * s;
                    }
                }
            }
        }
        Ok(LineDensityEval {
            grad_e,
            grad_a,
            c_ee,
            c_ae,
            c_aa,
        })
    }
}

/// Accumulates `w * A^T * B` into `dst` for the 6 x 15 section sandwiches.
fn add_ata15(dst: &mut DMatrix<f64>, a: &SMatrix<f64, 6, 15>, b: &SMatrix<f64, 6, 15>, w: f64) {
    for i in 0..15 {
        for j in 0..15 {
            let mut s = 0.0;
            for k in 0..6 {
                s += a[(k, i)] * b[(k, j)];
            }
            dst[(i, j)] += w * s;
        }
    }
}

/// Computes the condensed tangent blocks and residuals of one element at the
/// current iterate.
pub fn compute_element(
    disc: &Discretization,
    e_idx: usize,
    iterate: &GlobalState,
    ctx: &StepContext,
) -> Result<ElementBlocks, FemError> {
    compute_element_inner(disc, e_idx, iterate, ctx)
        .map_err(|e| FemError::AtElement(e_idx, Box::new(e)))
}

fn compute_element_inner(
    disc: &Discretization,
    e_idx: usize,
    iterate: &GlobalState,
    ctx: &StepContext,
) -> Result<ElementBlocks, FemError> {
    let el = &disc.elements[e_idx];
    let m_y = el.m_y();
    let m_p = el.m_p();
    let d_a = disc.eas.d_a;
    let dyn_mid = matches!(ctx.mode, SchemeKind::EnergyMomentum | SchemeKind::Midpoint);

    // evaluation states per scheme
    let mid = ctx.mid;
    let cfg_weight = |qp: &QpData| -> (crate::kinematics::FieldPoint, crate::kinematics::FieldPoint) {
        // (fields for k_yr/f_y, fields for k_ry/f_r)
        match ctx.mode {
            SchemeKind::QuasiStatic | SchemeKind::Trapezoidal => {
                let f = qp.basis.fields(&iterate.config);
                (f.clone(), f)
            }
            SchemeKind::EnergyMomentum => (
                qp.basis.fields(&mid.unwrap().config),
                qp.basis.fields(&iterate.config),
            ),
            SchemeKind::Midpoint => {
                let f = qp.basis.fields(&mid.unwrap().config);
                (f.clone(), f)
            }
        }
    };

    let mut k_yy = DMatrix::zeros(m_y, m_y);
    let mut k_yr = DMatrix::zeros(m_y, m_p);
    let mut k_ry = DMatrix::zeros(m_p, m_y);
    let mut k_re = DMatrix::zeros(m_p, m_p);
    let mut k_ee = DMatrix::zeros(m_p, m_p);
    let mut k_ae = DMatrix::zeros(d_a, m_p);
    let mut k_aa = DMatrix::zeros(d_a, d_a);
    let mut f_y = DVector::zeros(m_y);
    let mut f_r = DVector::zeros(m_p);
    let mut f_e = DVector::zeros(m_p);
    let mut f_a = DVector::zeros(d_a);

    let alpha_cur = &iterate.alpha[e_idx];
    let alpha_use = if dyn_mid {
        &mid.unwrap().alpha[e_idx]
    } else {
        alpha_cur
    };

    for qp in &el.qps {
        let w = qp.w_ds;
        let (fp_bar, fp_new) = cfg_weight(qp);
        let b_bar = b_matrix_from_fields(&qp.basis, &fp_bar);
        let b_new = if dyn_mid && ctx.mode == SchemeKind::EnergyMomentum {
            b_matrix_from_fields(&qp.basis, &fp_new)
        } else {
            b_bar.clone()
        };

        // field values of the mixed coefficient arrays at this point
        let r_use = if dyn_mid {
            disc.phys_field_at(&mid.unwrap().stress, qp)
        } else {
            disc.phys_field_at(&iterate.stress, qp)
        };
        let e_use = if dyn_mid {
            disc.phys_field_at(&mid.unwrap().strain, qp)
        } else {
            disc.phys_field_at(&iterate.strain, qp)
        };
        // compatibility pairing: end-of-step for the energy-momentum scheme
        // and the static/trapezoidal modes, mid-point for the mid-point rule
        let (eps_compat, e_compat) = match ctx.mode {
            SchemeKind::Midpoint => (strain_from_fields(&fp_bar, &qp.init), e_use),
            _ => (
                strain_from_fields(&fp_new, &qp.init),
                disc.phys_field_at(&iterate.strain, qp),
            ),
        };

        let ld = line_density_grads(disc, qp, &e_use, alpha_use)?;

        // geometric stiffness + inertia
        k_yy += geometric_stiffness_from_basis(&qp.basis, &r_use) * w;
        if ctx.mode.is_dynamic() {
            let mf = 4.0 / (ctx.dt * ctx.dt) * w;
            add_mass(&mut k_yy, el, qp, mf);
        }

        // coupling and constitutive blocks (the physical basis is a scalar
        // basis times the 15x15 identity, so blocks repeat per node)
        for j in 0..el.n_phys {
            let nj = qp.phys_val[j];
            let col = 15 * j;
            for row in 0..m_y {
                for c in 0..15 {
                    k_yr[(row, col + c)] += w * nj * b_bar[(c, row)];
                    k_ry[(col + c, row)] += w * nj * b_new[(c, row)];
                }
            }
            for i in 0..el.n_phys {
                let ni = qp.phys_val[i];
                let wnn = w * ni * nj;
                for c in 0..15 {
                    k_re[(15 * i + c, col + c)] -= wnn;
                }
                for a in 0..15 {
                    for b in 0..15 {
                        k_ee[(15 * i + a, col + b)] += wnn * ld.c_ee[(a, b)];
                    }
                }
            }
            for a in 0..d_a {
                for b in 0..15 {
                    k_ae[(a, col + b)] += w * nj * ld.c_ae[(a, b)];
                }
            }
        }
        if d_a > 0 {
            k_aa += &ld.c_aa * w;
            f_a += &ld.grad_a * w;
        }

        // residuals
        f_y += b_bar.transpose() * r_use * w;
        if ctx.mode.is_dynamic() {
            let acc9 = match ctx.mode {
                SchemeKind::Trapezoidal => disc.y_field_at(ctx.accel.unwrap(), qp),
                _ => {
                    // (2/dt) * M ((y_new - y_n)/dt - V_n) at this point
                    let dy = config_diff_at(disc, qp, &iterate.config, &ctx.state_n.config);
                    let vn = disc.y_field_at(&ctx.state_n.velocity, qp);
                    (dy / ctx.dt - vn) * (2.0 / ctx.dt)
                }
            };
            let mv = qp.mass * acc9;
            add_y_vector(&mut f_y, el, qp, &mv, w);
        }
        let compat = eps_compat - e_compat;
        let con = ld.grad_e - r_use;
        for i in 0..el.n_phys {
            let ni = qp.phys_val[i];
            for c in 0..15 {
                f_r[15 * i + c] += w * ni * compat[c];
                f_e[15 * i + c] += w * ni * con[c];
            }
        }
    }

    // condense the incompatible strain
    let (k_ee, f_e, recovery) = if d_a > 0 {
        let lu = k_aa.clone().lu();
        let (k_hat, f_hat) = condense_alpha(&k_ee, &k_ae, &lu, &f_e, &f_a)
            .ok_or(FemError::SingularCondensation(e_idx))?;
        (
            k_hat,
            f_hat,
            Some(AlphaRecovery {
                k_aa_lu: lu,
                k_ae,
                f_a,
            }),
        )
    } else {
        (k_ee, f_e, None)
    };

    Ok(ElementBlocks {
        k_yy,
        k_yr,
        k_ry,
        k_re,
        k_ee,
        f_y,
        f_r,
        f_e,
        recovery,
    })
}

fn add_mass(k_yy: &mut DMatrix<f64>, el: &ElementData, qp: &QpData, w: f64) {
    let lb = &qp.basis;
    let m = &qp.mass;
    let dir_off = 3 * el.n_geom;
    // phi-phi
    for i in 0..el.n_geom {
        for j in 0..el.n_geom {
            let v = w * lb.geom_val[i] * lb.geom_val[j] * m[(0, 0)];
            for c in 0..3 {
                k_yy[(3 * i + c, 3 * j + c)] += v;
            }
        }
        // phi-dir
        for j in 0..el.n_dir {
            for slot in 0..2 {
                let v = w * lb.geom_val[i] * lb.dir_val[j] * m[(0, 3 + 3 * slot)];
                for c in 0..3 {
                    k_yy[(3 * i + c, dir_off + 6 * j + 3 * slot + c)] += v;
                    k_yy[(dir_off + 6 * j + 3 * slot + c, 3 * i + c)] += v;
                }
            }
        }
    }
    for i in 0..el.n_dir {
        for j in 0..el.n_dir {
            for si in 0..2 {
                for sj in 0..2 {
                    let v = w * lb.dir_val[i] * lb.dir_val[j] * m[(3 + 3 * si, 3 + 3 * sj)];
                    for c in 0..3 {
                        k_yy[(dir_off + 6 * i + 3 * si + c, dir_off + 6 * j + 3 * sj + c)] += v;
                    }
                }
            }
        }
    }
}

fn add_y_vector(
    f_y: &mut DVector<f64>,
    el: &ElementData,
    qp: &QpData,
    v9: &SMatrix<f64, 9, 1>,
    w: f64,
) {
    let lb = &qp.basis;
    let dir_off = 3 * el.n_geom;
    for i in 0..el.n_geom {
        for c in 0..3 {
            f_y[3 * i + c] += w * lb.geom_val[i] * v9[c];
        }
    }
    for j in 0..el.n_dir {
        for slot in 0..2 {
            for c in 0..3 {
                f_y[dir_off + 6 * j + 3 * slot + c] += w * lb.dir_val[j] * v9[3 + 3 * slot + c];
            }
        }
    }
}

fn config_diff_at(
    disc: &Discretization,
    qp: &QpData,
    a: &Configuration,
    b: &Configuration,
) -> SMatrix<f64, 9, 1> {
    let _ = disc;
    let lb = &qp.basis;
    let mut out = SMatrix::<f64, 9, 1>::zeros();
    for j in 0..lb.n_geom() {
        let d = a.phi[lb.geom_first + j] - b.phi[lb.geom_first + j];
        for c in 0..3 {
            out[c] += lb.geom_val[j] * d[c];
        }
    }
    for j in 0..lb.n_dir() {
        for slot in 0..2 {
            let d = a.dir[lb.dir_first + j][slot] - b.dir[lb.dir_first + j][slot];
            for c in 0..3 {
                out[3 + 3 * slot + c] += lb.dir_val[j] * d[c];
            }
        }
    }
    out
}

/// Computes all element blocks, in parallel when the global pool has more
/// than one thread.
pub fn compute_all_elements(
    disc: &Discretization,
    iterate: &GlobalState,
    ctx: &StepContext,
) -> Result<Vec<ElementBlocks>, FemError> {
    if rayon::current_num_threads() > 1 && disc.elements.len() > 1 {
        (0..disc.elements.len())
            .into_par_iter()
            .map(|e| compute_element(disc, e, iterate, ctx))
            .collect()
    } else {
        (0..disc.elements.len())
            .map(|e| compute_element(disc, e, iterate, ctx))
            .collect()
    }
}

/// External point loads resolved to control points, plus an optional constant
/// distributed load per unit initial arc length.
#[derive(Debug, Clone, Default)]
pub struct LoadVector {
    /// (phi control point, force)
    pub point_forces: Vec<(usize, Vector3<f64>)>,
    /// (director control point, slot, couple)
    pub point_couples: Vec<(usize, usize, Vector3<f64>)>,
    /// constant distributed [force, couple1, couple2] per unit length
    pub distributed: Option<[Vector3<f64>; 3]>,
}

/// Assembles the global external load vector (y layout). End loads land on
/// the boundary control-point rows through the clamped-basis interpolation
/// property; distributed loads are integrated against the solution basis.
pub fn external_load(disc: &Discretization, load: &LoadVector) -> DVector<f64> {
    let mut f = DVector::zeros(disc.n_y());
    for &(cp, force) in &load.point_forces {
        let base = disc.phi_dof(cp);
        for c in 0..3 {
            f[base + c] += force[c];
        }
    }
    for &(cp, slot, couple) in &load.point_couples {
        let base = disc.dir_dof(cp, slot);
        for c in 0..3 {
            f[base + c] += couple[c];
        }
    }
    if let Some(r) = &load.distributed {
        let mut v9 = SMatrix::<f64, 9, 1>::zeros();
        for k in 0..3 {
            for c in 0..3 {
                v9[3 * k + c] = r[k][c];
            }
        }
        for el in &disc.elements {
            let mut fe = DVector::zeros(el.m_y());
            for qp in &el.qps {
                add_y_vector(&mut fe, el, qp, &v9, qp.w_ds);
            }
            scatter_y(disc, el, &fe, &mut f);
        }
    }
    f
}

fn scatter_y(disc: &Discretization, el: &ElementData, fe: &DVector<f64>, f: &mut DVector<f64>) {
    for j in 0..el.n_geom {
        let base = disc.phi_dof(el.geom_first + j);
        for c in 0..3 {
            f[base + c] += fe[3 * j + c];
        }
    }
    let off = 3 * el.n_geom;
    for j in 0..el.n_dir {
        let base = disc.dir_dof(el.dir_first + j, 0);
        for c in 0..6 {
            f[base + c] += fe[off + 6 * j + c];
        }
    }
}

/// Assembled reduced linear system of one Newton iteration.
pub struct AssembledSystem {
    pub matrix: BandMatrix,
    pub rhs: DVector<f64>,
}

/// Assembles the banded tangent and the scaled right-hand side.
pub fn assemble(
    disc: &Discretization,
    dofmap: &DofMap,
    blocks: &[ElementBlocks],
    f_ext: &DVector<f64>,
    mode: SchemeKind,
) -> AssembledSystem {
    let fac = mode.factors();
    let n = dofmap.n_reduced;
    let bw = dofmap.bandwidth;
    let mut matrix = BandMatrix::new(n, bw, bw);
    let mut rhs = DVector::zeros(n);

    // external load on y rows
    for z in 0..disc.n_y() {
        if let Some(r) = dofmap.map[z] {
            rhs[r] += fac.ext * f_ext[z];
        }
    }

    for (el, bl) in disc.elements.iter().zip(blocks) {
        let dofs = element_dofs(disc, el);
        let m_y = el.m_y();
        let m_p = el.m_p();
        let red: Vec<Option<usize>> = dofs.iter().map(|&z| dofmap.map[z]).collect();

        let mut add_block = |mat: &DMatrix<f64>, row0: usize, col0: usize| {
            for i in 0..mat.nrows() {
                let Some(ri) = red[row0 + i] else { continue };
                for j in 0..mat.ncols() {
                    let v = mat[(i, j)];
                    if v != 0.0 {
                        if let Some(rj) = red[col0 + j] {
                            matrix.add(ri, rj, v);
                        }
                    }
                }
            }
        };
        add_block(&bl.k_yy, 0, 0);
        add_block(&bl.k_yr, 0, m_y);
        add_block(&bl.k_ry, m_y, 0);
        add_block(&bl.k_re, m_y, m_y + m_p);
        let k_er = bl.k_re.transpose();
        add_block(&k_er, m_y + m_p, m_y);
        add_block(&bl.k_ee, m_y + m_p, m_y + m_p);

        for i in 0..m_y {
            if let Some(ri) = red[i] {
                rhs[ri] -= fac.y * bl.f_y[i];
            }
        }
        for i in 0..m_p {
            if let Some(ri) = red[m_y + i] {
                rhs[ri] -= fac.r * bl.f_r[i];
            }
            if let Some(ri) = red[m_y + m_p + i] {
                rhs[ri] -= fac.e * bl.f_e[i];
            }
        }
    }
    AssembledSystem { matrix, rhs }
}

/// Incompatible (enhanced) strain components at the section quadrature points
/// of the element containing `xi`: one six-component vector per point.
pub fn enhanced_strain_at(
    disc: &Discretization,
    state: &GlobalState,
    xi: f64,
) -> Result<Vec<Voigt6>, FemError> {
    let e_idx = disc
        .elements
        .iter()
        .position(|el| xi >= el.span.0 && xi <= el.span.1)
        .unwrap_or(disc.elements.len() - 1);
    let el = &disc.elements[e_idx];
    let alpha = &state.alpha[e_idx];
    let mut out = Vec::new();
    for pt in &el.qps[0].section_pts {
        let mut e = Voigt6::zeros();
        for k in 0..6 {
            for c in 0..disc.eas.d_a {
                e[k] += pt.gamma[(k, c)] * alpha[c];
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Unreduced physical residual on the y rows, `f_int - f_ext`; the entries at
/// constrained DOFs are the support reactions.
pub fn full_y_residual(
    disc: &Discretization,
    blocks: &[ElementBlocks],
    f_ext: &DVector<f64>,
) -> DVector<f64> {
    let mut res = -f_ext.clone();
    for (el, bl) in disc.elements.iter().zip(blocks) {
        scatter_y(disc, el, &bl.f_y, &mut res);
    }
    res
}

/// Applies a reduced solution increment to the iterate: configuration,
/// mixed coefficient arrays, and the recovered incompatible strains.
pub fn apply_increment(
    disc: &Discretization,
    dofmap: &DofMap,
    blocks: &[ElementBlocks],
    dz: &DVector<f64>,
    mode: SchemeKind,
    iterate: &mut GlobalState,
) {
    let n_phi = disc.n_phi();
    let n_dir = disc.n_dir();
    for cp in 0..n_phi {
        for c in 0..3 {
            if let Some(r) = dofmap.map[disc.phi_dof(cp) + c] {
                iterate.config.phi[cp][c] += dz[r];
            }
        }
    }
    for cp in 0..n_dir {
        for slot in 0..2 {
            for c in 0..3 {
                if let Some(r) = dofmap.map[disc.dir_dof(cp, slot) + c] {
                    iterate.config.dir[cp][slot][c] += dz[r];
                }
            }
        }
    }
    let r0 = disc.r_offset();
    let e0 = disc.e_offset();
    for k in 0..15 * disc.n_phys() {
        if let Some(r) = dofmap.map[r0 + k] {
            iterate.stress[k] += dz[r];
        }
        if let Some(r) = dofmap.map[e0 + k] {
            iterate.strain[k] += dz[r];
        }
    }
    // incompatible strain recovery, element by element
    let fac = mode.factors();
    for (e_idx, (el, bl)) in disc.elements.iter().zip(blocks).enumerate() {
        let Some(rec) = &bl.recovery else { continue };
        let mut de = DVector::zeros(el.m_p());
        for j in 0..el.n_phys {
            for c in 0..15 {
                let z = e0 + 15 * (el.phys_first + j) + c;
                if let Some(r) = dofmap.map[z] {
                    de[15 * j + c] = dz[r];
                }
            }
        }
        let da = recover_alpha(rec, &de, fac.alpha);
        iterate.alpha[e_idx] += da;
    }
}
