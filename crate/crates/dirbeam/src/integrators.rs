//! Load stepping and implicit time integration.
//!
//! One Newton driver serves the quasi-static continuation and three implicit
//! dynamic schemes. The energy-momentum scheme approximates the balance
//! equations at the interval mid-point while enforcing strain compatibility
//! at the end of the step; together with the algorithmically averaged stress
//! this conserves linear and angular momentum always, and the total energy
//! exactly for constant-tangent constitutive laws. The mid-point rule
//! (compatibility at the averaged configuration) and the trapezoidal rule
//! (everything at the end of the step, velocity/acceleration updates of
//! Newmark type) serve as baselines. Steps that fail to converge are halved,
//! down to a floor of 1/256 of the nominal increment.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::mixedfem::{
    assemble, compute_all_elements, external_load, full_y_residual, ConstraintSet, Discretization,
    DofMap, FemError, GlobalState, LoadVector, SchemeKind, StepContext,
};

/// Errors caused by an inadmissible trial state (as opposed to bad setup
/// data); the Newton driver treats them as divergence and lets the stepper
/// bisect the increment.
fn is_state_error(err: &FemError) -> bool {
    match err {
        FemError::Material(crate::material::MaterialError::InadmissibleDeformation(_)) => true,
        FemError::AtElement(_, inner) => is_state_error(inner),
        _ => false,
    }
}

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("no convergence at t = {t} (dt = {dt}, residual {residual:.3e}) after substepping")]
    NonConvergence { t: f64, dt: f64, residual: f64 },
    #[error("scheme requires a positive time step")]
    InvalidStep,
}

/// Newton iteration controls. The residual is measured on the assembled
/// right-hand side and compared against `tol_abs + tol_rel * ref`, where
/// `ref` is the larger of the external load norm and the first residual of
/// the step; an iteration that stalls below `stall_floor * ref` is accepted
/// as converged at the round-off plateau.
#[derive(Debug, Clone, Copy)]
pub struct NewtonSettings {
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_iter: usize,
    pub stall_floor: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol_rel: 1e-10,
            tol_abs: 1e-12,
            max_iter: 30,
            stall_floor: 1e-7,
        }
    }
}

/// Discretization plus constraint structure: everything fixed over a run.
pub struct Model {
    pub disc: Discretization,
    pub constraints: ConstraintSet,
    pub dofmap: DofMap,
}

impl Model {
    pub fn new(disc: Discretization, constraints: ConstraintSet) -> Result<Self, FemError> {
        let dofmap = DofMap::build(&disc, &constraints)?;
        Ok(Model {
            disc,
            constraints,
            dofmap,
        })
    }
}

/// Prescribed boundary values of one step.
#[derive(Debug, Clone, Default)]
pub struct BcValues {
    pub phi: Vec<(usize, Vector3<f64>)>,
    pub dir: Vec<(usize, [Vector3<f64>; 2])>,
}

/// Writes prescribed values into the configuration and mirrors the seam of
/// closed patches.
pub fn apply_bc_values(disc: &Discretization, bc: &BcValues, cfg: &mut crate::Configuration) {
    for &(cp, v) in &bc.phi {
        cfg.phi[cp] = v;
    }
    for &(cp, d) in &bc.dir {
        cfg.dir[cp] = d;
    }
    sync_ties(disc, cfg);
}

pub fn sync_ties(disc: &Discretization, cfg: &mut crate::Configuration) {
    if disc.closed {
        cfg.phi[disc.n_phi() - 1] = cfg.phi[0];
        cfg.dir[disc.n_dir() - 1] = cfg.dir[0];
    }
}

pub struct NewtonOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Unreduced y-residual at the converged state (support reactions at the
    /// constrained rows).
    pub reactions: DVector<f64>,
}

/// Newton iteration on the mixed step equations; the iterate must arrive with
/// the boundary values of the step already applied.
pub fn newton_solve(
    model: &Model,
    mode: SchemeKind,
    dt: f64,
    state_n: &GlobalState,
    f_ext: &DVector<f64>,
    settings: &NewtonSettings,
    iterate: &mut GlobalState,
) -> Result<NewtonOutcome, IntegratorError> {
    let disc = &model.disc;
    let fac_ext = match mode {
        SchemeKind::EnergyMomentum | SchemeKind::Midpoint => 2.0,
        _ => 1.0,
    };
    let load_norm = f_ext.norm() * fac_ext;
    let mut ref_norm: Option<f64> = None;
    let mut prev_norm = f64::INFINITY;

    for it in 0..settings.max_iter {
        let mid_state;
        let accel_vec;
        let ctx = {
            let mid = match mode {
                SchemeKind::EnergyMomentum | SchemeKind::Midpoint => {
                    mid_state = state_n.midpoint_with(iterate);
                    Some(&mid_state)
                }
                _ => None,
            };
            let accel = match mode {
                SchemeKind::Trapezoidal => {
                    let y1 = iterate.config.flatten();
                    let y0 = state_n.config.flatten();
                    accel_vec = (y1 - &y0 - &state_n.velocity * dt) * (4.0 / (dt * dt))
                        - &state_n.accel;
                    Some(&accel_vec)
                }
                _ => None,
            };
            StepContext {
                mode,
                dt,
                state_n,
                mid,
                accel,
            }
        };
        let blocks = match compute_all_elements(disc, iterate, &ctx) {
            Ok(b) => b,
            Err(e) if is_state_error(&e) => {
                return Ok(NewtonOutcome {
                    converged: false,
                    iterations: it,
                    residual: prev_norm,
                    reactions: DVector::zeros(disc.n_y()),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let sys = assemble(disc, &model.dofmap, &blocks, f_ext, mode);
        let norm = sys.rhs.norm();
        let reference = ref_norm.get_or_insert(norm.max(load_norm)).max(1e-300);
        let tol = settings.tol_abs + settings.tol_rel * reference;
        let stalled =
            it >= 2 && norm <= settings.stall_floor * reference && norm >= 0.5 * prev_norm;
        if norm <= tol || stalled {
            return Ok(NewtonOutcome {
                converged: true,
                iterations: it,
                residual: norm,
                reactions: full_y_residual(disc, &blocks, f_ext),
            });
        }
        if !norm.is_finite() || norm > 1e6 * reference {
            return Ok(NewtonOutcome {
                converged: false,
                iterations: it,
                residual: norm,
                reactions: DVector::zeros(disc.n_y()),
            });
        }
        prev_norm = norm;

        let mut matrix = sys.matrix;
        let piv = match matrix.factor() {
            Ok(p) => p,
            Err(_) => {
                return Ok(NewtonOutcome {
                    converged: false,
                    iterations: it,
                    residual: norm,
                    reactions: DVector::zeros(disc.n_y()),
                })
            }
        };
        let mut dz = sys.rhs.as_slice().to_vec();
        matrix.solve(&piv, &mut dz);
        let dz = DVector::from_vec(dz);
        crate::mixedfem::apply_increment(disc, &model.dofmap, &blocks, &dz, mode, iterate);
        sync_ties(disc, &mut iterate.config);
    }
    Ok(NewtonOutcome {
        converged: false,
        iterations: settings.max_iter,
        residual: prev_norm,
        reactions: DVector::zeros(disc.n_y()),
    })
}

/// Converged state of one accepted increment.
pub struct StepRecord {
    /// Load factor (quasi-statics) or time (dynamics).
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
    pub residual: f64,
    pub state: GlobalState,
    pub reactions: DVector<f64>,
}

/// One quasi-static loading phase: boundary values and loads parameterized by
/// a factor running from 0 to 1 across the phase.
pub struct QuasiStaticPhase<'a> {
    pub steps: usize,
    pub bc: Box<dyn Fn(f64) -> BcValues + 'a>,
    pub load: Box<dyn Fn(f64) -> LoadVector + 'a>,
}

/// Result of a stepping run: the accepted increments, and the failure that
/// ended the run early when one occurred.
pub struct RunOutcome {
    pub records: Vec<StepRecord>,
    pub failure: Option<IntegratorError>,
}

/// Incremental-iterative continuation over the given phases. On Newton
/// failure the increment is bisected, down to 1/256 of the nominal one.
pub fn quasistatic_run(
    model: &Model,
    phases: &[QuasiStaticPhase],
    settings: &NewtonSettings,
    mut state: GlobalState,
) -> Result<RunOutcome, IntegratorError> {
    let mut records = Vec::new();
    for phase in phases {
        let mut lambda = 0.0;
        let nominal = 1.0 / phase.steps as f64;
        let min_step = nominal / 256.0;
        while lambda < 1.0 - 1e-12 {
            let mut dl = nominal.min(1.0 - lambda);
            loop {
                let target = lambda + dl;
                let mut iterate = state.clone();
                apply_bc_values(&model.disc, &(phase.bc)(target), &mut iterate.config);
                let f_ext = external_load(&model.disc, &(phase.load)(target));
                let out = newton_solve(
                    model,
                    SchemeKind::QuasiStatic,
                    0.0,
                    &state,
                    &f_ext,
                    settings,
                    &mut iterate,
                )?;
                if out.converged {
                    state = iterate;
                    lambda = target;
                    records.push(StepRecord {
                        t: lambda,
                        dt: dl,
                        iterations: out.iterations,
                        residual: out.residual,
                        state: state.clone(),
                        reactions: out.reactions,
                    });
                    break;
                }
                dl *= 0.5;
                if dl < min_step {
                    return Ok(RunOutcome {
                        records,
                        failure: Some(IntegratorError::NonConvergence {
                            t: lambda,
                            dt: dl,
                            residual: out.residual,
                        }),
                    });
                }
            }
        }
    }
    Ok(RunOutcome {
        records,
        failure: None,
    })
}

/// Time-dependent external load description for dynamics.
pub struct TimeLoad<'a> {
    /// Load vector at an arbitrary time.
    pub at: Box<dyn Fn(f64) -> LoadVector + 'a>,
    /// Time derivative of the load on the open interval containing `t`
    /// (piece-wise linear schedules have piece-wise constant slopes).
    pub slope: Box<dyn Fn(f64) -> LoadVector + 'a>,
}

/// Advances one dynamic step (with internal bisection on failure) and returns
/// the accepted sub-records.
fn dynamic_step(
    model: &Model,
    mode: SchemeKind,
    t: f64,
    dt: f64,
    state: &GlobalState,
    loads: &TimeLoad,
    settings: &NewtonSettings,
    depth: usize,
    out: &mut Vec<StepRecord>,
) -> Result<GlobalState, IntegratorError> {
    let disc = &model.disc;
    let t_load = match mode {
        SchemeKind::Trapezoidal => t + dt,
        _ => t + 0.5 * dt,
    };
    let f_ext = external_load(disc, &(loads.at)(t_load));
    let mut iterate = state.clone();
    let outcome = newton_solve(model, mode, dt, state, &f_ext, settings, &mut iterate)?;
    if outcome.converged {
        // velocity / acceleration updates
        let y1 = iterate.config.flatten();
        let y0 = state.config.flatten();
        match mode {
            SchemeKind::Trapezoidal => {
                let a1 = (&y1 - &y0 - &state.velocity * dt) * (4.0 / (dt * dt)) - &state.accel;
                iterate.velocity = &state.velocity + (&state.accel + &a1) * (0.5 * dt);
                iterate.accel = a1;
            }
            _ => {
                iterate.velocity = (&y1 - &y0) * (2.0 / dt) - &state.velocity;
            }
        }
        out.push(StepRecord {
            t: t + dt,
            dt,
            iterations: outcome.iterations,
            residual: outcome.residual,
            state: iterate.clone(),
            reactions: outcome.reactions,
        });
        return Ok(iterate);
    }
    if depth >= 8 {
        return Err(IntegratorError::NonConvergence {
            t,
            dt,
            residual: outcome.residual,
        });
    }
    let half = 0.5 * dt;
    let mid = dynamic_step(model, mode, t, half, state, loads, settings, depth + 1, out)?;
    dynamic_step(model, mode, t + half, half, &mid, loads, settings, depth + 1, out)
}

/// Runs `n_steps` implicit steps of size `dt` from `state0` at `t0`; an
/// unrecoverable step ends the run early with the failure recorded.
pub fn dynamic_run(
    model: &Model,
    mode: SchemeKind,
    dt: f64,
    n_steps: usize,
    t0: f64,
    state0: GlobalState,
    loads: &TimeLoad,
    settings: &NewtonSettings,
) -> Result<RunOutcome, IntegratorError> {
    if dt <= 0.0 || !mode.is_dynamic() {
        return Err(IntegratorError::InvalidStep);
    }
    let mut records = Vec::with_capacity(n_steps);
    let mut state = state0;
    let mut t = t0;
    for _ in 0..n_steps {
        match dynamic_step(model, mode, t, dt, &state, loads, settings, 0, &mut records) {
            Ok(next) => state = next,
            Err(e @ IntegratorError::NonConvergence { .. }) => {
                return Ok(RunOutcome {
                    records,
                    failure: Some(e),
                });
            }
            Err(e) => return Err(e),
        }
        t += dt;
    }
    Ok(RunOutcome {
        records,
        failure: None,
    })
}

/// Consistent initial acceleration of the trapezoidal scheme:
/// `M a0 = F_ext(t0) - f_int(state0)`.
pub fn initialize_acceleration(
    model: &Model,
    state: &mut GlobalState,
    f_ext0: &DVector<f64>,
) -> Result<(), IntegratorError> {
    let disc = &model.disc;
    let ctx = StepContext {
        mode: SchemeKind::QuasiStatic,
        dt: 0.0,
        state_n: state,
        mid: None,
        accel: None,
    };
    let blocks = compute_all_elements(disc, state, &ctx)?;
    let res = full_y_residual(disc, &blocks, f_ext0);
    let mass = assemble_global_mass(disc);
    let accel = mass
        .lu()
        .solve(&(-res))
        .expect("mass matrix is positive definite");
    state.accel = accel;
    // constrained rows do not accelerate
    zero_constrained(model, &mut state.accel);
    Ok(())
}

fn zero_constrained(model: &Model, v: &mut DVector<f64>) {
    let disc = &model.disc;
    for &cp in &model.constraints.phi_cps {
        for c in 0..3 {
            v[disc.phi_dof(cp) + c] = 0.0;
        }
    }
    for &cp in &model.constraints.dir_cps {
        for slot in 0..2 {
            for c in 0..3 {
                v[disc.dir_dof(cp, slot) + c] = 0.0;
            }
        }
    }
}

/// Dense consistent mass matrix on the configuration DOFs.
pub fn assemble_global_mass(disc: &Discretization) -> DMatrix<f64> {
    let n = disc.n_y();
    let mut m = DMatrix::zeros(n, n);
    for el in &disc.elements {
        for qp in &el.qps {
            let w = qp.w_ds;
            let lb = &qp.basis;
            let mut dofs = Vec::with_capacity(el.m_y());
            let mut shapes = Vec::with_capacity(el.m_y());
            for j in 0..el.n_geom {
                for c in 0..3 {
                    dofs.push(disc.phi_dof(el.geom_first + j) + c);
                    shapes.push((c, lb.geom_val[j]));
                }
            }
            for j in 0..el.n_dir {
                for slot in 0..2 {
                    for c in 0..3 {
                        dofs.push(disc.dir_dof(el.dir_first + j, slot) + c);
                        shapes.push((3 + 3 * slot + c, lb.dir_val[j]));
                    }
                }
            }
            for (a, (&da, &(fa, na))) in dofs.iter().zip(&shapes).enumerate() {
                let _ = a;
                for (&db, &(fb, nb)) in dofs.iter().zip(&shapes) {
                    let mm = qp.mass[(fa, fb)];
                    if mm != 0.0 {
                        m[(da, db)] += w * na * nb * mm;
                    }
                }
            }
        }
    }
    m
}

/// L2 projection of an initial velocity profile onto the solution space with
/// the mass-weighted inner product; this preserves the total linear and
/// angular momentum of the profile exactly.
pub fn project_initial_velocity(
    disc: &Discretization,
    profile: &dyn Fn(&Vector3<f64>) -> [Vector3<f64>; 3],
) -> DVector<f64> {
    let n = disc.n_y();
    let mass = assemble_global_mass(disc);
    let mut rhs = DVector::zeros(n);
    for el in &disc.elements {
        for qp in &el.qps {
            let pos = {
                // initial center-axis position at the quadrature point
                let mut p = Vector3::zeros();
                for j in 0..el.n_geom {
                    p += disc.geom.curve.control_points()[el.geom_first + j]
                        * qp.basis.geom_val[j];
                }
                p
            };
            let v = profile(&pos);
            let mut v9 = nalgebra::SMatrix::<f64, 9, 1>::zeros();
            for k in 0..3 {
                for c in 0..3 {
                    v9[3 * k + c] = v[k][c];
                }
            }
            let mv = qp.mass * v9;
            let w = qp.w_ds;
            let lb = &qp.basis;
            for j in 0..el.n_geom {
                let base = disc.phi_dof(el.geom_first + j);
                for c in 0..3 {
                    rhs[base + c] += w * lb.geom_val[j] * mv[c];
                }
            }
            for j in 0..el.n_dir {
                for slot in 0..2 {
                    let base = disc.dir_dof(el.dir_first + j, slot);
                    for c in 0..3 {
                        rhs[base + c] += w * lb.dir_val[j] * mv[3 + 3 * slot + c];
                    }
                }
            }
        }
    }
    mass.lu().solve(&rhs).expect("mass matrix is invertible")
}

/// Integral quantities of motion at one state.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub linear_momentum: Vector3<f64>,
    pub angular_momentum: Vector3<f64>,
    pub kinetic_energy: f64,
    pub strain_energy: f64,
    pub external_work: f64,
    /// `K + U - W_ext`.
    pub total_energy: f64,
    /// Work-recursion companion of the total energy; equal to it, step by
    /// step, for the energy-momentum scheme with constant-tangent materials.
    pub total_energy_recursive: f64,
}

/// Evaluates momenta and energies with the same quadrature as the residuals
/// (the conservation identities hold at the quadrature level).
pub fn diagnostics(
    disc: &Discretization,
    state: &GlobalState,
    t: f64,
    f_ext: &DVector<f64>,
) -> Result<DiagnosticsRecord, FemError> {
    let mut lin = Vector3::zeros();
    let mut ang = Vector3::zeros();
    let mut kin = 0.0;
    let mut strain_e = 0.0;
    for (e_idx, el) in disc.elements.iter().enumerate() {
        for qp in &el.qps {
            let w = qp.w_ds;
            let v9 = disc.y_field_at(&state.velocity, qp);
            let mv = qp.mass * v9;
            let p = Vector3::new(mv[0], mv[1], mv[2]);
            let mu1 = Vector3::new(mv[3], mv[4], mv[5]);
            let mu2 = Vector3::new(mv[6], mv[7], mv[8]);
            lin += p * w;
            let fp = qp.basis.fields(&state.config);
            let phi = {
                let mut p = Vector3::zeros();
                for j in 0..qp.basis.n_geom() {
                    p += state.config.phi[qp.basis.geom_first + j] * qp.basis.geom_val[j];
                }
                p
            };
            ang += (phi.cross(&p) + fp.a[0].cross(&mu1) + fp.a[1].cross(&mu2)) * w;
            kin += 0.5 * w * v9.dot(&mv);
            let eps_p = disc.phys_field_at(&state.strain, qp);
            strain_e += w * line_energy(disc, qp, &eps_p, &state.alpha[e_idx])?;
        }
    }
    let w_ext = state.config.flatten().dot(f_ext);
    Ok(DiagnosticsRecord {
        t,
        linear_momentum: lin,
        angular_momentum: ang,
        kinetic_energy: kin,
        strain_energy: strain_e,
        external_work: w_ext,
        total_energy: kin + strain_e - w_ext,
        total_energy_recursive: kin + strain_e - w_ext,
    })
}

fn line_energy(
    disc: &Discretization,
    qp: &crate::mixedfem::QpData,
    eps_p: &crate::kinematics::BeamStrain,
    alpha: &DVector<f64>,
) -> Result<f64, FemError> {
    crate::mixedfem::line_density_energy(disc, qp, eps_p, alpha)
}

/// Per-step diagnostics of a dynamic run, including the work-recursion total
/// energy: `E*_{n+1} = E_n - dt/2 (dW/dt|_{n+1} + dW/dt|_n)`, with the load
/// slope taken inside each interval. A state whose stored strain has left the
/// admissible range of the material (blown-up baseline runs) truncates the
/// series.
pub fn dynamic_diagnostics(
    model: &Model,
    records: &[StepRecord],
    t0: f64,
    state0: &GlobalState,
    loads: &TimeLoad,
) -> Result<Vec<DiagnosticsRecord>, FemError> {
    let disc = &model.disc;
    let mut out = Vec::with_capacity(records.len() + 1);
    let f0 = external_load(disc, &(loads.at)(t0));
    let mut prev = diagnostics(disc, state0, t0, &f0)?;
    let mut prev_state = state0;
    let mut prev_t = t0;
    out.push(prev);
    for rec in records {
        let f = external_load(disc, &(loads.at)(rec.t));
        let mut d = match diagnostics(disc, &rec.state, rec.t, &f) {
            Ok(d) => d,
            Err(e) if is_state_error(&e) => break,
            Err(e) => return Err(e),
        };
        let t_mid = 0.5 * (prev_t + rec.t);
        let slope = external_load(disc, &(loads.slope)(t_mid));
        let wdot_new = rec.state.config.flatten().dot(&slope);
        let wdot_old = prev_state.config.flatten().dot(&slope);
        let dt = rec.t - prev_t;
        d.total_energy_recursive =
            prev.total_energy - 0.5 * dt * (wdot_new + wdot_old);
        out.push(d);
        prev = d;
        prev_state = &rec.state;
        prev_t = rec.t;
    }
    Ok(out)
}

/// Per-step relative defect `|E_{n+1} - E*_{n+1}| / max |E|`.
pub fn energy_consistency_defects(diags: &[DiagnosticsRecord]) -> Vec<f64> {
    let scale = diags
        .iter()
        .map(|d| d.total_energy.abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);
    diags
        .iter()
        .skip(1)
        .map(|d| (d.total_energy - d.total_energy_recursive).abs() / scale)
        .collect()
}

/// Torque of the support reactions of one constrained cross-section about an
/// axis through `point`: position and director rows both contribute.
pub fn reaction_moment(
    disc: &Discretization,
    reactions: &DVector<f64>,
    config: &crate::Configuration,
    phi_cps: &[usize],
    dir_cps: &[usize],
    axis: &Vector3<f64>,
    point: &Vector3<f64>,
) -> f64 {
    let mut m = Vector3::zeros();
    for &cp in phi_cps {
        let base = disc.phi_dof(cp);
        let f = Vector3::new(reactions[base], reactions[base + 1], reactions[base + 2]);
        m += (config.phi[cp] - point).cross(&f);
    }
    for &cp in dir_cps {
        for slot in 0..2 {
            let base = disc.dir_dof(cp, slot);
            let f = Vector3::new(reactions[base], reactions[base + 1], reactions[base + 2]);
            m += config.dir[cp][slot].cross(&f);
        }
    }
    m.dot(&axis.normalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{DirectorMode, FrameMethod, InitialGeometry};
    use crate::material::{MaterialLaw, MaterialModel};
    use crate::section::{CrossSection, EasConfig};
    use crate::splines::NurbsCurve;
    use approx::assert_relative_eq;

    fn flying_beam_model(n_el: usize) -> Model {
        let curve = NurbsCurve::line(Vector3::zeros(), Vector3::new(3.0, 0.0, 0.0), 2, n_el);
        let geom = InitialGeometry::new(
            curve,
            2,
            FrameMethod::SmallestRotation,
            (Vector3::y(), 0),
            DirectorMode::Discrete,
        )
        .unwrap();
        let section = CrossSection::new(0.3, 0.3, 1.0).unwrap();
        let material = MaterialLaw::new(MaterialModel::SaintVenantKirchhoff, 2.1e7, 0.3).unwrap();
        let eas = EasConfig {
            m_in_plane: Some(2),
            m_in_plane_shear: Some(2),
            m_axial: None,
            m_transverse_shear: Some(4),
        };
        let disc =
            crate::mixedfem::Discretization::new(geom, section, &eas, material, false, false)
                .unwrap();
        Model::new(disc, ConstraintSet::default()).unwrap()
    }

    fn no_load() -> TimeLoad<'static> {
        TimeLoad {
            at: Box::new(|_| LoadVector::default()),
            slope: Box::new(|_| LoadVector::default()),
        }
    }

    #[test]
    fn zero_load_step_stays_at_reference() {
        let model = flying_beam_model(3);
        let phases = [QuasiStaticPhase {
            steps: 1,
            bc: Box::new(|_| BcValues::default()),
            load: Box::new(|_| LoadVector::default()),
        }];
        // free-free with zero load: the reference state solves the step with
        // zero iterations beyond the residual check
        let out = quasistatic_run(
            &model,
            &phases,
            &NewtonSettings::default(),
            model.disc.reference_state(),
        )
        .unwrap();
        assert!(out.failure.is_none());
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].iterations, 0);
    }

    #[test]
    fn force_free_translation_is_exact() {
        let model = flying_beam_model(3);
        let mut state = model.disc.reference_state();
        let v = Vector3::new(0.4, -0.1, 0.25);
        for cp in 0..model.disc.n_phi() {
            let base = model.disc.phi_dof(cp);
            for c in 0..3 {
                state.velocity[base + c] = v[c];
            }
        }
        let dt = 0.05;
        for mode in [
            SchemeKind::EnergyMomentum,
            SchemeKind::Midpoint,
            SchemeKind::Trapezoidal,
        ] {
            let out = dynamic_run(
                &model,
                mode,
                dt,
                4,
                0.0,
                state.clone(),
                &no_load(),
                &NewtonSettings::default(),
            )
            .unwrap();
            assert!(out.failure.is_none());
            let last = &out.records.last().unwrap().state;
            for (cp, p) in last.config.phi.iter().enumerate() {
                let expect = model.disc.geom.curve.control_points()[cp] + v * (4.0 * dt);
                assert!(
                    (p - expect).norm() < 1e-10,
                    "{mode:?}: cp {cp} drifted by {}",
                    (p - expect).norm()
                );
            }
            // velocity unchanged
            assert!((&last.velocity - &state.velocity).norm() < 1e-10);
        }
    }

    #[test]
    fn velocity_update_is_an_involution() {
        let model = flying_beam_model(2);
        let disc = &model.disc;
        let y0 = disc.reference_state().config.flatten();
        let mut y1 = y0.clone();
        for v in y1.iter_mut() {
            *v += 0.01;
        }
        let dt = 0.1;
        let v0 = DVector::from_fn(disc.n_y(), |i, _| (i as f64 * 0.37).sin());
        let v1 = (&y1 - &y0) * (2.0 / dt) - &v0;
        let v0_back = (&y1 - &y0) * (2.0 / dt) - &v1;
        assert_relative_eq!((v0_back - &v0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rigid_velocity_projection_preserves_momenta() {
        let model = flying_beam_model(4);
        let disc = &model.disc;
        let c = Vector3::new(0.3, 0.7, -0.2);
        let v = project_initial_velocity(disc, &|_p| [c, Vector3::zeros(), Vector3::zeros()]);
        let mut state = disc.reference_state();
        state.velocity = v;
        let f0 = DVector::zeros(disc.n_y());
        let d = diagnostics(disc, &state, 0.0, &f0).unwrap();
        // total mass times velocity
        let mass = disc.section.area() * disc.geom.param.total_length();
        assert_relative_eq!(
            (d.linear_momentum - c * mass).norm(),
            0.0,
            epsilon = 1e-10 * mass * c.norm()
        );
        assert_relative_eq!(d.kinetic_energy, 0.5 * mass * c.norm_squared(), max_relative = 1e-10);
    }

    #[test]
    fn flying_profile_initial_momenta_match_quadrature() {
        let model = flying_beam_model(10);
        let disc = &model.disc;
        let (v1, v2, l) = (1.0, 150.0, 3.0);
        let profile = |p: &Vector3<f64>| -> [Vector3<f64>; 3] {
            let x = p.x;
            let vx = -(v1 / l) * (x - l);
            let vy = v2 * ((x / l) * (x / l - 1.0) + 1.0 / 6.0) + (v1 / l) * (x - 0.5 * l);
            [Vector3::new(vx, vy, 0.0), Vector3::zeros(), Vector3::zeros()]
        };
        let mut state = disc.reference_state();
        state.velocity = project_initial_velocity(disc, &profile);
        let f0 = DVector::zeros(disc.n_y());
        let d = diagnostics(disc, &state, 0.0, &f0).unwrap();

        // Simpson quadrature of the closed-form profile (the integrands are
        // cubics at most, so this reference is exact)
        let rho_a = disc.section.area();
        let n = 2_000;
        let mut lx = 0.0;
        let mut ly = 0.0;
        let mut jz = 0.0;
        for i in 0..n {
            let x0 = i as f64 / n as f64 * l;
            let x2 = (i + 1) as f64 / n as f64 * l;
            let x1 = 0.5 * (x0 + x2);
            let f = |x: f64| profile(&Vector3::new(x, 0.0, 0.0))[0];
            let w = (x2 - x0) / 6.0 * rho_a;
            let (v0, v1, v2) = (f(x0), f(x1), f(x2));
            lx += w * (v0.x + 4.0 * v1.x + v2.x);
            ly += w * (v0.y + 4.0 * v1.y + v2.y);
            jz += w * (x0 * v0.y + 4.0 * x1 * v1.y + x2 * v2.y);
        }
        assert_relative_eq!(d.linear_momentum.x, lx, max_relative = 1e-9);
        assert_relative_eq!(d.linear_momentum.x, rho_a * v1 * l / 2.0, max_relative = 1e-9);
        assert!(d.linear_momentum.y.abs() < 1e-12 * lx.abs().max(1.0) + ly.abs() * 1e-6);
        assert_relative_eq!(d.angular_momentum.z, jz, max_relative = 1e-9);
    }

    #[test]
    fn discrete_momentum_balances_under_load() {
        // free-free beam with a constant end force: per step the change of
        // linear momentum equals dt * f_ext, and the change of angular
        // momentum equals dt * (phi_mid x F) at the loaded point
        let model = flying_beam_model(4);
        let disc = &model.disc;
        let force = Vector3::new(2.0, 5.0, -1.0);
        let end_cp = disc.n_phi() - 1;
        let load = TimeLoad {
            at: Box::new(move |_t| LoadVector {
                point_forces: vec![(end_cp, force)],
                ..Default::default()
            }),
            slope: Box::new(|_t| LoadVector::default()),
        };
        let dt = 0.05;
        let state0 = disc.reference_state();
        let out = dynamic_run(
            &model,
            SchemeKind::EnergyMomentum,
            dt,
            5,
            0.0,
            state0.clone(),
            &load,
            &NewtonSettings {
                tol_rel: 1e-13,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.failure.is_none());
        let f0 = DVector::zeros(disc.n_y());
        let mut prev = diagnostics(disc, &state0, 0.0, &f0).unwrap();
        let mut prev_state = state0;
        for rec in &out.records {
            let d = diagnostics(disc, &rec.state, rec.t, &f0).unwrap();
            let dl = (d.linear_momentum - prev.linear_momentum) / rec.dt;
            assert_relative_eq!((dl - force).norm(), 0.0, epsilon = 1e-10 * force.norm());
            // external moment about the origin at the mid configuration
            let phi_mid = 0.5 * (rec.state.config.phi[end_cp] + prev_state.config.phi[end_cp]);
            let m_ext = phi_mid.cross(&force);
            let dj = (d.angular_momentum - prev.angular_momentum) / rec.dt;
            assert_relative_eq!((dj - m_ext).norm(), 0.0, epsilon = 1e-9 * m_ext.norm().max(1.0));
            prev = d;
            prev_state = rec.state.clone();
        }
    }

    #[test]
    fn still_state_has_no_momenta() {
        let model = flying_beam_model(2);
        let state = model.disc.reference_state();
        let f0 = DVector::zeros(model.disc.n_y());
        let d = diagnostics(&model.disc, &state, 0.0, &f0).unwrap();
        assert_eq!(d.linear_momentum.norm(), 0.0);
        assert_eq!(d.angular_momentum.norm(), 0.0);
        assert_eq!(d.kinetic_energy, 0.0);
    }
}
