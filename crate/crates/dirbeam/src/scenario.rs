//! Declarative scenario documents and run orchestration.
//!
//! A scenario is a single JSON document describing geometry, section,
//! material, boundary conditions, loading schedule, scheme and outputs. All
//! angles are radians, all units SI. Parsing materializes every default so
//! the echoed document reproduces the run byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrators::{
    diagnostics, dynamic_diagnostics, dynamic_run, energy_consistency_defects,
    initialize_acceleration, project_initial_velocity, quasistatic_run, reaction_moment,
    sync_ties, BcValues, DiagnosticsRecord, IntegratorError, Model, NewtonSettings,
    QuasiStaticPhase, StepRecord, TimeLoad,
};
use crate::kinematics::{DirectorMode, FrameMethod, InitialGeometry, KinematicsError};
use crate::material::{MaterialError, MaterialLaw, MaterialModel};
use crate::mixedfem::{
    external_load, ConstraintSet, Discretization, FemError, LoadVector, SchemeKind,
};
use crate::section::{CrossSection, EasConfig, SectionError};
use crate::splines::{NurbsCurve, SplineError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn v3(a: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

// ---------------------------------------------------------------------------
// document schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    Straight {
        length: f64,
        #[serde(default)]
        origin: [f64; 3],
        #[serde(default = "default_axis")]
        axis: [f64; 3],
    },
    /// Circular arc in the XY plane centered at the origin.
    Arc {
        radius: f64,
        angle: f64,
        #[serde(default)]
        start_angle: f64,
    },
    /// Closed circle in the XY plane; the seam control points are tied.
    Ring { radius: f64 },
    /// Almost-closed circle with a symmetric gap of `slot_angle` at the
    /// positive X axis.
    SlottedRing { radius: f64, slot_angle: f64 },
    Explicit {
        degree: usize,
        knots: Vec<f64>,
        control_points: Vec<[f64; 3]>,
        weights: Vec<f64>,
    },
}

fn default_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameSeed {
    pub vector: [f64; 3],
    /// Which director (0 or 1) starts aligned with the seed vector.
    pub slot: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub primitive: Primitive,
    pub degree: usize,
    pub elements: usize,
    #[serde(default)]
    pub director_degree: Option<usize>,
    #[serde(default = "default_director_mode")]
    pub director_mode: DirectorMode,
    #[serde(default = "default_frame_method")]
    pub frame_method: FrameMethod,
    #[serde(default)]
    pub frame_seed: Option<FrameSeed>,
}

fn default_director_mode() -> DirectorMode {
    DirectorMode::Discrete
}

fn default_frame_method() -> FrameMethod {
    FrameMethod::SmallestRotation
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionSpec {
    pub width: f64,
    pub height: f64,
    #[serde(default = "one")]
    pub density: f64,
    #[serde(default)]
    pub eas: EasSpec,
}

fn one() -> f64 {
    1.0
}

/// Maximum polynomial degrees of the four enhancement families; `null`
/// disables a family. The axial family defaults to off.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EasSpec {
    #[serde(default, alias = "m1")]
    pub m_in_plane: Option<usize>,
    #[serde(default, alias = "m2")]
    pub m_in_plane_shear: Option<usize>,
    #[serde(default, alias = "m3")]
    pub m_axial: Option<usize>,
    #[serde(default, alias = "m4")]
    pub m_transverse_shear: Option<usize>,
}

impl EasSpec {
    pub fn to_config(&self) -> EasConfig {
        EasConfig {
            m_in_plane: self.m_in_plane,
            m_in_plane_shear: self.m_in_plane_shear,
            m_axial: self.m_axial,
            m_transverse_shear: self.m_transverse_shear,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub model: MaterialModel,
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    /// Skip the metric transform (exact only for straight beams).
    #[serde(default)]
    pub assume_orthonormal_frame: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Start,
    End,
    Param(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionSpec {
    /// Hold the phase-start value.
    Fixed,
    /// Linear translation by `offset` over the phase.
    Translate { offset: [f64; 3] },
    /// Rotation by `angle` about `axis` through `point` over the phase
    /// (positions orbit the axis, directors rotate in place).
    Rotate {
        axis: [f64; 3],
        #[serde(default)]
        point: [f64; 3],
        angle: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionAssignment {
    pub at: Location,
    #[serde(default)]
    pub phi: Option<MotionSpec>,
    #[serde(default)]
    pub directors: Option<MotionSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeCurveSpec {
    /// value(t) = 1
    Constant,
    /// value(t) = t / t_unit
    Linear { t_unit: f64 },
    /// value(t) = t/t_unit up to t_end/2, then (t_end - t)/t_unit
    Triangle { t_end: f64, t_unit: f64 },
}

impl TimeCurveSpec {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeCurveSpec::Constant => 1.0,
            TimeCurveSpec::Linear { t_unit } => t / t_unit,
            TimeCurveSpec::Triangle { t_end, t_unit } => {
                if t <= 0.5 * t_end {
                    t / t_unit
                } else {
                    (t_end - t) / t_unit
                }
            }
        }
    }

    pub fn slope(&self, t: f64) -> f64 {
        match self {
            TimeCurveSpec::Constant => 0.0,
            TimeCurveSpec::Linear { t_unit } => 1.0 / t_unit,
            TimeCurveSpec::Triangle { t_end, t_unit } => {
                if t <= 0.5 * t_end {
                    1.0 / t_unit
                } else {
                    -1.0 / t_unit
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadSpec {
    /// Point load at a boundary location, or a distributed load when `at`
    /// is omitted.
    #[serde(default)]
    pub at: Option<Location>,
    #[serde(default)]
    pub force: [f64; 3],
    #[serde(default)]
    pub couple1: [f64; 3],
    #[serde(default)]
    pub couple2: [f64; 3],
    #[serde(default = "default_curve")]
    pub curve: TimeCurveSpec,
}

fn default_curve() -> TimeCurveSpec {
    TimeCurveSpec::Constant
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSpec {
    pub steps: usize,
    #[serde(default)]
    pub motions: Vec<MotionAssignment>,
    /// Loads ramp linearly from zero to full within the phase.
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicScheme {
    Emc,
    Midpoint,
    Trapezoidal,
}

impl DynamicScheme {
    pub fn kind(self) -> SchemeKind {
        match self {
            DynamicScheme::Emc => SchemeKind::EnergyMomentum,
            DynamicScheme::Midpoint => SchemeKind::Midpoint,
            DynamicScheme::Trapezoidal => SchemeKind::Trapezoidal,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeSpec {
    QuasiStatic {
        phases: Vec<PhaseSpec>,
    },
    Dynamic {
        scheme: DynamicScheme,
        dt: f64,
        steps: usize,
        /// Cross-sections held fixed for the whole run.
        #[serde(default)]
        fixed: Vec<Location>,
        #[serde(default)]
        loads: Vec<LoadSpec>,
        #[serde(default)]
        initial_velocity: Option<InitialVelocitySpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialVelocitySpec {
    Uniform { v: [f64; 3] },
    /// Center-axis profile combining an axial closing speed `v1` with a
    /// quadratic bending speed `v2` plus a rigid spin, driven by the initial
    /// x-coordinate over the beam length.
    FlyingBeam { v1: f64, v2: f64, length: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonSpec {
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default = "default_tol_abs")]
    pub tol_abs: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol_rel() -> f64 {
    1e-10
}
fn default_tol_abs() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    30
}

impl Default for NewtonSpec {
    fn default() -> Self {
        NewtonSpec {
            tol_rel: default_tol_rel(),
            tol_abs: default_tol_abs(),
            max_iter: default_max_iter(),
        }
    }
}

impl NewtonSpec {
    pub fn settings(&self) -> NewtonSettings {
        NewtonSettings {
            tol_rel: self.tol_rel,
            tol_abs: self.tol_abs,
            max_iter: self.max_iter,
            ..NewtonSettings::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReactionSpec {
    pub at: Location,
    pub axis: [f64; 3],
    #[serde(default)]
    pub point: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSpec {
    /// Number of centerline sample points in snapshot files.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Times (dynamics) or load factors (statics) at which to write
    /// centerline snapshots.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub reaction: Option<ReactionSpec>,
    /// Emit a gnuplot script next to the history file.
    #[serde(default)]
    pub gnuplot: bool,
}

fn default_samples() -> usize {
    101
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            samples: default_samples(),
            snapshots: Vec::new(),
            reaction: None,
            gnuplot: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub geometry: GeometrySpec,
    pub section: SectionSpec,
    pub material: MaterialSpec,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub newton: NewtonSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

// ---------------------------------------------------------------------------
// compilation
// ---------------------------------------------------------------------------

pub struct Compiled {
    pub scenario: Scenario,
    pub model: Model,
    pub constrained_points: Vec<ConstraintPoint>,
}

/// Resolved constrained cross-section: control point indices plus the frozen
/// director offset of the continuous mode at that location (zero otherwise);
/// prescribed director data acts on total directors, coefficients store the
/// difference.
#[derive(Debug, Clone)]
pub struct ConstraintPoint {
    pub loc: Location,
    pub phi_cp: usize,
    pub dir_cp: usize,
    pub dir_offset: [Vector3<f64>; 2],
}

fn build_curve(spec: &GeometrySpec) -> Result<(NurbsCurve, bool), ScenarioError> {
    let check_native = |native: usize| -> Result<(), ScenarioError> {
        if spec.degree != native {
            return Err(ScenarioError::Validation(format!(
                "geometry.degree: curved primitives are exact rational curves of degree {native}; \
                 requested degree {} is not supported",
                spec.degree
            )));
        }
        Ok(())
    };
    let (curve, closed) = match &spec.primitive {
        Primitive::Straight {
            length,
            origin,
            axis,
        } => {
            if *length <= 0.0 {
                return Err(ScenarioError::Validation(
                    "geometry.primitive.length must be positive".into(),
                ));
            }
            let o = v3(origin);
            let a = v3(axis);
            if a.norm() == 0.0 {
                return Err(ScenarioError::Validation(
                    "geometry.primitive.axis must be non-zero".into(),
                ));
            }
            (
                NurbsCurve::line(o, o + a.normalize() * *length, spec.degree, spec.elements),
                false,
            )
        }
        Primitive::Arc {
            radius,
            angle,
            start_angle,
        } => {
            check_native(2)?;
            (
                NurbsCurve::circular_arc(*radius, *start_angle, *start_angle + *angle)
                    .refined_to(spec.elements),
                false,
            )
        }
        Primitive::Ring { radius } => {
            check_native(2)?;
            (NurbsCurve::full_ring(*radius).refined_to(spec.elements), true)
        }
        Primitive::SlottedRing { radius, slot_angle } => {
            check_native(2)?;
            let half = 0.5 * slot_angle;
            (
                NurbsCurve::circular_arc(*radius, half, std::f64::consts::TAU - half)
                    .refined_to(spec.elements),
                false,
            )
        }
        Primitive::Explicit {
            degree,
            knots,
            control_points,
            weights,
        } => {
            let kv = crate::splines::KnotVector::new(knots.clone(), *degree)?;
            let cps = control_points.iter().map(v3).collect();
            (
                NurbsCurve::new(kv, cps, weights.clone())?.refined_to(spec.elements),
                false,
            )
        }
    };
    Ok((curve, closed))
}

fn default_seed(curve: &NurbsCurve, primitive: &Primitive) -> (Vector3<f64>, usize) {
    match primitive {
        Primitive::Straight { axis, .. } => {
            // the global axis most orthogonal to the beam axis
            let a = v3(axis).normalize();
            let candidates = [Vector3::x(), Vector3::y(), Vector3::z()];
            let best = candidates
                .iter()
                .min_by(|u, v| {
                    u.dot(&a)
                        .abs()
                        .partial_cmp(&v.dot(&a).abs())
                        .unwrap()
                })
                .unwrap();
            (*best, 0)
        }
        _ => {
            let _ = curve;
            // planar primitives live in the XY plane: second director out of plane
            (Vector3::z(), 1)
        }
    }
}

pub fn compile(scenario: &Scenario) -> Result<Compiled, ScenarioError> {
    let spec = &scenario.geometry;
    if spec.degree < 1 {
        return Err(ScenarioError::Validation(
            "geometry.degree must be at least 1".into(),
        ));
    }
    let (curve, closed) = build_curve(spec)?;
    let seed = match &spec.frame_seed {
        Some(s) => {
            if s.slot > 1 {
                return Err(ScenarioError::Validation(
                    "geometry.frame_seed.slot must be 0 or 1".into(),
                ));
            }
            (v3(&s.vector), s.slot)
        }
        None => default_seed(&curve, &spec.primitive),
    };
    let p_d = spec.director_degree.unwrap_or(spec.degree);
    let geom = InitialGeometry::new(curve, p_d, spec.frame_method, seed, spec.director_mode)?;
    let section = CrossSection::new(
        scenario.section.width,
        scenario.section.height,
        scenario.section.density,
    )?;
    let material = MaterialLaw::new(
        scenario.material.model,
        scenario.material.youngs_modulus,
        scenario.material.poissons_ratio,
    )?;
    let disc = Discretization::new(
        geom,
        section,
        &scenario.section.eas.to_config(),
        material,
        scenario.material.assume_orthonormal_frame,
        closed,
    )?;

    // constraint structure: every location that is ever constrained
    let mut locations: Vec<Location> = Vec::new();
    let mut push_loc = |loc: Location| {
        if !locations.contains(&loc) {
            locations.push(loc);
        }
    };
    match &scenario.scheme {
        SchemeSpec::QuasiStatic { phases } => {
            if phases.is_empty() {
                return Err(ScenarioError::Validation(
                    "scheme.phases must not be empty".into(),
                ));
            }
            for ph in phases {
                if ph.steps == 0 {
                    return Err(ScenarioError::Validation(
                        "phase.steps must be at least 1".into(),
                    ));
                }
                for m in &ph.motions {
                    push_loc(m.at);
                }
            }
        }
        SchemeSpec::Dynamic { fixed, dt, steps, .. } => {
            if *dt <= 0.0 || *steps == 0 {
                return Err(ScenarioError::Validation(
                    "dynamic scheme needs dt > 0 and steps >= 1".into(),
                ));
            }
            for loc in fixed {
                push_loc(*loc);
            }
        }
    }

    let mut constrained_points = Vec::new();
    let mut constraints = ConstraintSet::default();
    for loc in &locations {
        let xi = match loc {
            Location::Start => 0.0,
            Location::End => 1.0,
            Location::Param(x) => *x,
        };
        let phi_cp = disc.interpolatory_cp(&disc.geom.geom_basis, xi)?;
        let dir_cp = disc.interpolatory_cp(&disc.geom.dir_basis, xi)?;
        let dir_offset = disc.geom.director_offset(xi)?;
        constrained_points.push(ConstraintPoint {
            loc: *loc,
            phi_cp,
            dir_cp,
            dir_offset,
        });
        // which fields the location constrains depends on the scheme spec
        let (con_phi, con_dir) = constraint_fields(scenario, loc);
        if con_phi {
            constraints.phi_cps.push(phi_cp);
        }
        if con_dir {
            constraints.dir_cps.push(dir_cp);
        }
    }
    let model = Model::new(disc, constraints)?;
    Ok(Compiled {
        scenario: scenario.clone(),
        model,
        constrained_points,
    })
}

/// Whether a location constrains positions and/or directors anywhere in the
/// schedule.
fn constraint_fields(scenario: &Scenario, loc: &Location) -> (bool, bool) {
    match &scenario.scheme {
        SchemeSpec::QuasiStatic { phases } => {
            let mut phi = false;
            let mut dir = false;
            for ph in phases {
                for m in &ph.motions {
                    if m.at == *loc {
                        phi |= m.phi.is_some();
                        dir |= m.directors.is_some();
                    }
                }
            }
            (phi, dir)
        }
        SchemeSpec::Dynamic { .. } => (true, true),
    }
}

// ---------------------------------------------------------------------------
// running
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub dump_eas_basis: bool,
    pub dump_matrix: bool,
    pub log_residuals: bool,
}

#[derive(Debug, Serialize)]
pub struct StepLog {
    pub t: f64,
    pub dt: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub name: String,
    /// Message of the failure that ended the run early, if any.
    pub failure: Option<String>,
    pub steps_completed: usize,
    pub total_iterations: usize,
    pub wall_ms: u128,
    pub final_strain_energy: f64,
    pub final_total_energy: f64,
    pub manifest: Vec<String>,
    pub convergence: Vec<StepLog>,
}

/// Full result of a run, kept in memory for the library API; files are only
/// written when an output directory is configured.
pub struct RunResult {
    pub report: RunReport,
    pub records: Vec<StepRecord>,
    pub diagnostics: Vec<DiagnosticsRecord>,
    /// Per-step energy-consistency defects (dynamics only).
    pub consistency: Vec<f64>,
    /// Reaction moments per step when a reaction probe is configured.
    pub reaction_moments: Vec<f64>,
    pub compiled: Compiled,
}

fn motion_target_phi(m: &MotionSpec, start: &Vector3<f64>, f: f64) -> Vector3<f64> {
    match m {
        MotionSpec::Fixed => *start,
        MotionSpec::Translate { offset } => start + v3(offset) * f,
        MotionSpec::Rotate { axis, point, angle } => {
            let rot = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(v3(axis)),
                angle * f,
            );
            let p = v3(point);
            p + rot * (start - p)
        }
    }
}

fn motion_target_dir(m: &MotionSpec, start: &[Vector3<f64>; 2], f: f64) -> [Vector3<f64>; 2] {
    match m {
        MotionSpec::Fixed => *start,
        MotionSpec::Translate { .. } => *start,
        MotionSpec::Rotate { axis, angle, .. } => {
            let rot = nalgebra::Rotation3::from_axis_angle(
                &nalgebra::Unit::new_normalize(v3(axis)),
                angle * f,
            );
            [rot * start[0], rot * start[1]]
        }
    }
}

fn resolve_load(
    compiled: &Compiled,
    spec: &LoadSpec,
    scale: f64,
) -> Result<LoadVector, ScenarioError> {
    let disc = &compiled.model.disc;
    let mut load = LoadVector::default();
    match &spec.at {
        Some(loc) => {
            let xi = match loc {
                Location::Start => 0.0,
                Location::End => 1.0,
                Location::Param(x) => *x,
            };
            let phi_cp = disc.interpolatory_cp(&disc.geom.geom_basis, xi)?;
            let dir_cp = disc.interpolatory_cp(&disc.geom.dir_basis, xi)?;
            load.point_forces.push((phi_cp, v3(&spec.force) * scale));
            if spec.couple1 != [0.0; 3] || spec.couple2 != [0.0; 3] {
                load.point_couples.push((dir_cp, 0, v3(&spec.couple1) * scale));
                load.point_couples.push((dir_cp, 1, v3(&spec.couple2) * scale));
            }
        }
        None => {
            load.distributed = Some([
                v3(&spec.force) * scale,
                v3(&spec.couple1) * scale,
                v3(&spec.couple2) * scale,
            ]);
        }
    }
    Ok(load)
}

fn merge_loads(loads: Vec<LoadVector>) -> LoadVector {
    let mut out = LoadVector::default();
    for l in loads {
        out.point_forces.extend(l.point_forces);
        out.point_couples.extend(l.point_couples);
        if let Some(d) = l.distributed {
            let acc = out.distributed.get_or_insert([Vector3::zeros(); 3]);
            for k in 0..3 {
                acc[k] += d[k];
            }
        }
    }
    out
}

pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunResult, ScenarioError> {
    let start_time = std::time::Instant::now();
    let compiled = compile(scenario)?;
    let settings = scenario.newton.settings();
    let disc = &compiled.model.disc;

    let mut records: Vec<StepRecord> = Vec::new();
    let mut diags: Vec<DiagnosticsRecord> = Vec::new();
    let mut consistency: Vec<f64> = Vec::new();
    let mut failure: Option<String> = None;

    match &scenario.scheme {
        SchemeSpec::QuasiStatic { phases } => {
            let mut state = disc.reference_state();
            for ph in phases {
                // phase-start snapshot of the constrained coefficients plus
                // which fields the location constrains over the whole run
                #[allow(clippy::type_complexity)]
                let snapshot: Vec<(
                    &ConstraintPoint,
                    Vector3<f64>,
                    [Vector3<f64>; 2],
                    (bool, bool),
                )> = compiled
                    .constrained_points
                    .iter()
                    .map(|cp| {
                        // phase-start totals: coefficient plus frozen offset
                        let dir_total = [
                            state.config.dir[cp.dir_cp][0] + cp.dir_offset[0],
                            state.config.dir[cp.dir_cp][1] + cp.dir_offset[1],
                        ];
                        (
                            cp,
                            state.config.phi[cp.phi_cp],
                            dir_total,
                            constraint_fields(scenario, &cp.loc),
                        )
                    })
                    .collect();
                let motions = &ph.motions;
                let bc = move |f: f64| -> BcValues {
                    let mut out = BcValues::default();
                    for &(cp, phi0, dir0, (has_phi, has_dir)) in &snapshot {
                        let assigned = motions.iter().find(|m| m.at == cp.loc);
                        let phi_m = assigned.and_then(|m| m.phi.as_ref());
                        let dir_m = assigned.and_then(|m| m.directors.as_ref());
                        if let Some(m) = phi_m {
                            out.phi.push((cp.phi_cp, motion_target_phi(m, &phi0, f)));
                        } else if has_phi {
                            out.phi.push((cp.phi_cp, phi0));
                        }
                        if let Some(m) = dir_m {
                            let tot = motion_target_dir(m, &dir0, f);
                            out.dir.push((
                                cp.dir_cp,
                                [tot[0] - cp.dir_offset[0], tot[1] - cp.dir_offset[1]],
                            ));
                        } else if has_dir {
                            out.dir.push((
                                cp.dir_cp,
                                [dir0[0] - cp.dir_offset[0], dir0[1] - cp.dir_offset[1]],
                            ));
                        }
                    }
                    out
                };
                let load_specs = ph.loads.clone();
                let compiled_ref = &compiled;
                let load = move |f: f64| -> LoadVector {
                    merge_loads(
                        load_specs
                            .iter()
                            .map(|s| resolve_load(compiled_ref, s, f).expect("validated"))
                            .collect(),
                    )
                };
                let phase = QuasiStaticPhase {
                    steps: ph.steps,
                    bc: Box::new(bc),
                    load: Box::new(load),
                };
                let outcome =
                    quasistatic_run(&compiled.model, &[phase], &settings, state.clone())?;
                if let Some(last) = outcome.records.last() {
                    state = last.state.clone();
                }
                records.extend(outcome.records);
                if let Some(f) = outcome.failure {
                    failure = Some(f.to_string());
                    break;
                }
            }
            // static diagnostics: zero loads in the work bookkeeping
            let f0 = nalgebra::DVector::zeros(disc.n_y());
            for rec in &records {
                diags.push(diagnostics(disc, &rec.state, rec.t, &f0)?);
            }
        }
        SchemeSpec::Dynamic {
            scheme,
            dt,
            steps,
            loads,
            initial_velocity,
            ..
        } => {
            let mut state = disc.reference_state();
            match initial_velocity {
                Some(InitialVelocitySpec::Uniform { v }) => {
                    let vv = v3(v);
                    state.velocity =
                        project_initial_velocity(disc, &|_| [vv, Vector3::zeros(), Vector3::zeros()]);
                }
                Some(InitialVelocitySpec::FlyingBeam { v1, v2, length }) => {
                    let (v1, v2, l) = (*v1, *v2, *length);
                    state.velocity = project_initial_velocity(disc, &|p| {
                        let x = p.x;
                        let vx = -(v1 / l) * (x - l);
                        let vy = v2 * ((x / l) * (x / l - 1.0) + 1.0 / 6.0)
                            + (v1 / l) * (x - 0.5 * l);
                        [Vector3::new(vx, vy, 0.0), Vector3::zeros(), Vector3::zeros()]
                    });
                }
                None => {}
            }
            // fixed cross-sections: pin the reference values and zero velocity
            for cp in &compiled.constrained_points {
                for c in 0..3 {
                    state.velocity[disc.phi_dof(cp.phi_cp) + c] = 0.0;
                }
                for slot in 0..2 {
                    for c in 0..3 {
                        state.velocity[disc.dir_dof(cp.dir_cp, slot) + c] = 0.0;
                    }
                }
            }
            sync_ties(disc, &mut state.config);

            let load_specs = loads.clone();
            let compiled_ref = &compiled;
            let at = move |t: f64| -> LoadVector {
                merge_loads(
                    load_specs
                        .iter()
                        .map(|s| {
                            resolve_load(compiled_ref, s, s.curve.value(t)).expect("validated")
                        })
                        .collect(),
                )
            };
            let slope_specs = loads.clone();
            let slope = move |t: f64| -> LoadVector {
                merge_loads(
                    slope_specs
                        .iter()
                        .map(|s| {
                            resolve_load(compiled_ref, s, s.curve.slope(t)).expect("validated")
                        })
                        .collect(),
                )
            };
            let time_load = TimeLoad {
                at: Box::new(at),
                slope: Box::new(slope),
            };
            if scheme.kind() == SchemeKind::Trapezoidal {
                let f0 = external_load(disc, &(time_load.at)(0.0));
                initialize_acceleration(&compiled.model, &mut state, &f0)?;
            }
            let outcome = dynamic_run(
                &compiled.model,
                scheme.kind(),
                *dt,
                *steps,
                0.0,
                state.clone(),
                &time_load,
                &settings,
            )?;
            diags = dynamic_diagnostics(&compiled.model, &outcome.records, 0.0, &state, &time_load)?;
            consistency = energy_consistency_defects(&diags);
            records = outcome.records;
            failure = outcome.failure.map(|f| f.to_string());
        }
    }

    // reaction probe
    let mut reaction_moments = Vec::new();
    if let Some(rs) = &scenario.outputs.reaction {
        let (phi_cps, dir_cps, dir_offset) = reaction_cps(&compiled, &rs.at)?;
        for rec in &records {
            // total directors at the probed cross-section
            let mut cfg = rec.state.config.clone();
            for &dcp in &dir_cps {
                cfg.dir[dcp][0] += dir_offset[0];
                cfg.dir[dcp][1] += dir_offset[1];
            }
            reaction_moments.push(reaction_moment(
                disc,
                &rec.reactions,
                &cfg,
                &phi_cps,
                &dir_cps,
                &v3(&rs.axis),
                &v3(&rs.point),
            ));
        }
    }

    let total_iterations: usize = records.iter().map(|r| r.iterations).sum();
    let final_diag = diags.last();
    let mut report = RunReport {
        name: scenario.name.clone(),
        failure: failure.clone(),
        steps_completed: records.len(),
        total_iterations,
        wall_ms: start_time.elapsed().as_millis(),
        final_strain_energy: final_diag.map_or(0.0, |d| d.strain_energy),
        final_total_energy: final_diag.map_or(0.0, |d| d.total_energy),
        manifest: Vec::new(),
        convergence: records
            .iter()
            .map(|r| StepLog {
                t: r.t,
                dt: r.dt,
                iterations: r.iterations,
                residual: r.residual,
            })
            .collect(),
    };

    if let Some(dir_path) = &opts.out_dir {
        write_outputs(
            scenario,
            opts,
            &compiled,
            &records,
            &diags,
            &consistency,
            &reaction_moments,
            dir_path,
            &mut report,
        )?;
    }

    Ok(RunResult {
        report,
        records,
        diagnostics: diags,
        consistency,
        reaction_moments,
        compiled,
    })
}

fn reaction_cps(
    compiled: &Compiled,
    at: &Location,
) -> Result<(Vec<usize>, Vec<usize>, [Vector3<f64>; 2]), ScenarioError> {
    let disc = &compiled.model.disc;
    let cp = compiled
        .constrained_points
        .iter()
        .find(|cp| cp.loc == *at)
        .ok_or_else(|| {
            ScenarioError::Validation("outputs.reaction.at must be a constrained location".into())
        })?;
    let mut phi_cps = vec![cp.phi_cp];
    let mut dir_cps = vec![cp.dir_cp];
    // tied seam partners carry part of the reaction
    if disc.closed && cp.phi_cp == 0 {
        phi_cps.push(disc.n_phi() - 1);
    }
    if disc.closed && cp.dir_cp == 0 {
        dir_cps.push(disc.n_dir() - 1);
    }
    Ok((phi_cps, dir_cps, cp.dir_offset))
}

// ---------------------------------------------------------------------------
// outputs
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn write_outputs(
    scenario: &Scenario,
    opts: &RunOptions,
    compiled: &Compiled,
    records: &[StepRecord],
    diags: &[DiagnosticsRecord],
    consistency: &[f64],
    reaction_moments: &[f64],
    dir_path: &Path,
    report: &mut RunReport,
) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(dir_path)?;
    let disc = &compiled.model.disc;
    let mut manifest = Vec::new();

    // echoed scenario (all defaults materialized by construction of the types)
    let echo_path = dir_path.join("scenario_echo.json");
    std::fs::write(&echo_path, serde_json::to_string_pretty(scenario)?)?;
    manifest.push(echo_path.display().to_string());

    // history: one row per accepted step
    let hist_path = dir_path.join("history.csv");
    {
        let mut f = std::fs::File::create(&hist_path)?;
        writeln!(
            f,
            "t,l_norm,l_x,l_y,l_z,j_x,j_y,j_z,kinetic,strain,total,total_recursive,iterations,dt"
        )?;
        // dynamics diagnostics carry an initial row (and may be truncated by
        // a blown-up state); statics have exactly one row per record
        let offset = usize::from(matches!(scenario.scheme, SchemeSpec::Dynamic { .. }));
        for (rec, d) in records.iter().zip(diags.iter().skip(offset)) {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.t,
                d.linear_momentum.norm(),
                d.linear_momentum.x,
                d.linear_momentum.y,
                d.linear_momentum.z,
                d.angular_momentum.x,
                d.angular_momentum.y,
                d.angular_momentum.z,
                d.kinetic_energy,
                d.strain_energy,
                d.total_energy,
                d.total_energy_recursive,
                rec.iterations,
                rec.dt
            )?;
        }
        manifest.push(hist_path.display().to_string());
    }

    if !consistency.is_empty() {
        let path = dir_path.join("consistency.csv");
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "step,t,defect")?;
        for (k, (rec, c)) in records.iter().zip(consistency).enumerate() {
            writeln!(f, "{},{},{}", k + 1, rec.t, c)?;
        }
        manifest.push(path.display().to_string());
    }

    if !reaction_moments.is_empty() {
        let path = dir_path.join("reactions.csv");
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "step,t,moment")?;
        for (k, (rec, m)) in records.iter().zip(reaction_moments).enumerate() {
            writeln!(f, "{},{},{}", k + 1, rec.t, m)?;
        }
        manifest.push(path.display().to_string());
    }

    if opts.log_residuals {
        let path = dir_path.join("residuals.csv");
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "step,t,iterations,residual")?;
        for (k, rec) in records.iter().enumerate() {
            writeln!(f, "{},{},{},{}", k + 1, rec.t, rec.iterations, rec.residual)?;
        }
        manifest.push(path.display().to_string());
    }

    // centerline snapshots at the requested times / load factors
    for (k, &t_want) in scenario.outputs.snapshots.iter().enumerate() {
        let Some(rec) = records.iter().min_by(|a, b| {
            (a.t - t_want)
                .abs()
                .partial_cmp(&(b.t - t_want).abs())
                .unwrap()
        }) else {
            continue;
        };
        let path = dir_path.join(format!("snapshot_{k}.csv"));
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "xi,x,y,z,d1x,d1y,d1z,d2x,d2y,d2z")?;
        let n = scenario.outputs.samples.max(2);
        for i in 0..n {
            let xi = i as f64 / (n - 1) as f64;
            let (first, val, _) = disc.geom.geom_basis.eval(xi)?;
            let mut p = Vector3::zeros();
            for (j, &v) in val.iter().enumerate() {
                p += rec.state.config.phi[first + j] * v;
            }
            let (df, dval, _) = disc.geom.dir_basis.eval(xi)?;
            let off = disc.geom.director_offset(xi)?;
            let mut d1 = off[0];
            let mut d2 = off[1];
            for (j, &v) in dval.iter().enumerate() {
                d1 += rec.state.config.dir[df + j][0] * v;
                d2 += rec.state.config.dir[df + j][1] * v;
            }
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{}",
                xi, p.x, p.y, p.z, d1.x, d1.y, d1.z, d2.x, d2.y, d2.z
            )?;
        }
        manifest.push(path.display().to_string());
    }

    if opts.dump_eas_basis {
        let path = dir_path.join("eas_basis.csv");
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "family,member,monomial_index,n,m,coefficient")?;
        for (fam_idx, fam) in disc.eas.families.iter().enumerate() {
            let Some(fam) = fam else { continue };
            for (mem, poly) in fam.polys.iter().enumerate() {
                for (idx, &c) in poly.coeffs.iter().enumerate() {
                    if c != 0.0 {
                        let (n, m) = crate::section::monomial_exponents(idx);
                        writeln!(f, "{},{},{},{},{},{}", fam_idx + 1, mem, idx, n, m, c)?;
                    }
                }
            }
        }
        manifest.push(path.display().to_string());
    }

    if opts.dump_matrix {
        let path = dir_path.join("tangent_matrix.txt");
        dump_tangent_matrix(compiled, &path)?;
        manifest.push(path.display().to_string());
    }

    if scenario.outputs.gnuplot {
        let path = dir_path.join("history.gp");
        let mut f = std::fs::File::create(&path)?;
        writeln!(
            f,
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n\
             plot 'history.csv' using 1:11 with lines title 'total energy', \\\n     \
             'history.csv' using 1:9 with lines title 'kinetic', \\\n     \
             'history.csv' using 1:10 with lines title 'strain'"
        )?;
        manifest.push(path.display().to_string());
    }

    let report_path = dir_path.join("report.json");
    report.manifest = manifest;
    report.manifest.push(report_path.display().to_string());
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

/// Writes the tangent matrix at the reference state as `i j value` triplets
/// (one-based indices).
fn dump_tangent_matrix(compiled: &Compiled, path: &Path) -> Result<(), ScenarioError> {
    use crate::mixedfem::{assemble, compute_all_elements, StepContext};
    let disc = &compiled.model.disc;
    let state = disc.reference_state();
    let ctx = StepContext {
        mode: SchemeKind::QuasiStatic,
        dt: 0.0,
        state_n: &state,
        mid: None,
        accel: None,
    };
    let blocks = compute_all_elements(disc, &state, &ctx)?;
    let f_ext = nalgebra::DVector::zeros(disc.n_y());
    let sys = assemble(
        disc,
        &compiled.model.dofmap,
        &blocks,
        &f_ext,
        SchemeKind::QuasiStatic,
    );
    let n = sys.matrix.n();
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "% unsymmetric sparse tangent, {n} x {n}")?;
    for i in 0..n {
        for j in 0..n {
            let v = sys.matrix.get(i, j);
            if v != 0.0 {
                writeln!(f, "{} {} {}", i + 1, j + 1, v)?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bundled scenarios
// ---------------------------------------------------------------------------

/// Catalog entry of a bundled scenario.
#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub cases: &'static [&'static str],
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "ex1_objectivity",
            summary: "stress-free quarter-circle arc driven through ten full end rotations; strain energy stays at round-off when the initial directors are reconstructed",
            cases: &[],
        },
        CatalogEntry {
            name: "ex2_bent_rotation",
            summary: "straight rod bent by a tip displacement, then rigidly rotated in nine increments; strain energy must stay constant",
            cases: &[],
        },
        CatalogEntry {
            name: "ex3_torsion",
            summary: "straight beam twisted from both ends; reaction moment versus the analytic torsion stiffness of a rectangle",
            cases: &["case1", "case2"],
        },
        CatalogEntry {
            name: "ex4_ring_twist",
            summary: "closed elastic ring folded by opposite end rotations; applied moment must vanish at half and full turn",
            cases: &[],
        },
        CatalogEntry {
            name: "ex5_flying_beam",
            summary: "free-flying beam with spinning/bending initial velocity; momentum and energy conservation across schemes",
            cases: &[],
        },
        CatalogEntry {
            name: "ex6_ring",
            summary: "slotted ring under an end traction; static large deformation and a ramp-loaded dynamic energy-consistency check",
            cases: &["static", "dynamic"],
        },
        CatalogEntry {
            name: "patch_axial",
            summary: "three-element axial patch test; constant stress resultant reproduced to round-off",
            cases: &[],
        },
    ]
}

/// Builds a bundled scenario by name; `case` picks a variant where one exists.
pub fn bundled(name: &str, case: Option<&str>) -> Result<Scenario, ScenarioError> {
    match (name, case.unwrap_or("")) {
        ("ex1_objectivity", _) => Ok(ex1_objectivity(2, DirectorMode::Discrete)),
        ("ex2_bent_rotation", _) => Ok(ex2_bent_rotation(3)),
        ("ex3_torsion", "" | "case1") | ("ex3_torsion_case1", _) => {
            Ok(ex3_torsion(0.3, 0.4, std::f64::consts::TAU, 16))
        }
        ("ex3_torsion", "case2") | ("ex3_torsion_case2", _) => {
            Ok(ex3_torsion(1.0 / 3.0, 1.0, std::f64::consts::TAU, 16))
        }
        ("ex4_ring_twist", _) => Ok(ex4_ring_twist(24, 16)),
        ("ex5_flying_beam", _) => Ok(ex5_flying_beam(DynamicScheme::Emc, 0.1, 100)),
        ("ex6_ring", "" | "static") => Ok(ex6_ring_static()),
        ("ex6_ring", "dynamic") => Ok(ex6_ring_dynamic(
            DynamicScheme::Emc,
            MaterialModel::SaintVenantKirchhoff,
        )),
        ("patch_axial", _) => Ok(patch_axial()),
        _ => Err(ScenarioError::Validation(format!(
            "unknown bundled scenario or case: {name} {case:?}"
        ))),
    }
}

pub fn ex1_objectivity(p_d: usize, mode: DirectorMode) -> Scenario {
    Scenario {
        name: "ex1_objectivity".into(),
        description: "quarter-circle arc, one end driven through ten full turns".into(),
        geometry: GeometrySpec {
            primitive: Primitive::Arc {
                radius: 100.0,
                angle: std::f64::consts::FRAC_PI_2,
                start_angle: -std::f64::consts::FRAC_PI_2,
            },
            degree: 2,
            elements: 8,
            director_degree: Some(p_d),
            director_mode: mode,
            frame_method: FrameMethod::SmallestRotation,
            frame_seed: Some(FrameSeed {
                vector: [0.0, 0.0, 1.0],
                slot: 1,
            }),
        },
        section: SectionSpec {
            width: 1.0,
            height: 1.0,
            density: 1.0,
            eas: EasSpec::default(),
        },
        material: MaterialSpec {
            model: MaterialModel::SaintVenantKirchhoff,
            youngs_modulus: 1e6,
            poissons_ratio: 0.0,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::QuasiStatic {
            phases: vec![PhaseSpec {
                steps: 100,
                motions: vec![MotionAssignment {
                    at: Location::Start,
                    phi: Some(MotionSpec::Fixed),
                    directors: Some(MotionSpec::Rotate {
                        // the arc starts at (0, -R? ) -- start_angle puts the
                        // first end on the rotation axis through the origin
                        axis: [0.0, 1.0, 0.0],
                        point: [0.0, 0.0, 0.0],
                        angle: 20.0 * std::f64::consts::PI,
                    }),
                }],
                loads: vec![],
            }],
        },
        newton: NewtonSpec {
            tol_rel: 1e-12,
            ..Default::default()
        },
        outputs: OutputSpec::default(),
    }
}

pub fn ex2_bent_rotation(p: usize) -> Scenario {
    let a = 1.0 / 3f64.sqrt();
    Scenario {
        name: "ex2_bent_rotation".into(),
        description: "bent rod under superposed rigid rotations about an axis through the fixed end".into(),
        geometry: GeometrySpec {
            primitive: Primitive::Straight {
                length: 3.0,
                origin: [0.0, 0.0, 2.0],
                axis: [0.0, 0.0, 1.0],
            },
            degree: p,
            elements: 8,
            director_degree: None,
            director_mode: DirectorMode::Discrete,
            frame_method: FrameMethod::SmallestRotation,
            frame_seed: None,
        },
        section: SectionSpec {
            width: 0.1,
            height: 0.1,
            density: 1.0,
            eas: EasSpec {
                m_in_plane: Some(2),
                m_in_plane_shear: Some(2),
                m_axial: None,
                m_transverse_shear: Some(2),
            },
        },
        material: MaterialSpec {
            model: MaterialModel::SaintVenantKirchhoff,
            youngs_modulus: 21e6,
            poissons_ratio: 0.3,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::QuasiStatic {
            phases: vec![
                PhaseSpec {
                    steps: 5,
                    motions: vec![
                        MotionAssignment {
                            at: Location::Start,
                            phi: Some(MotionSpec::Fixed),
                            directors: Some(MotionSpec::Fixed),
                        },
                        MotionAssignment {
                            at: Location::End,
                            phi: Some(MotionSpec::Translate {
                                offset: [1.0, -1.0, 0.0],
                            }),
                            directors: None,
                        },
                    ],
                    loads: vec![],
                },
                PhaseSpec {
                    steps: 9,
                    motions: vec![
                        MotionAssignment {
                            at: Location::Start,
                            phi: Some(MotionSpec::Fixed),
                            directors: Some(MotionSpec::Rotate {
                                axis: [a, a, a],
                                point: [0.0, 0.0, 2.0],
                                angle: std::f64::consts::FRAC_PI_2,
                            }),
                        },
                        MotionAssignment {
                            at: Location::End,
                            phi: Some(MotionSpec::Rotate {
                                axis: [a, a, a],
                                point: [0.0, 0.0, 2.0],
                                angle: std::f64::consts::FRAC_PI_2,
                            }),
                            directors: None,
                        },
                    ],
                    loads: vec![],
                },
            ],
        },
        newton: NewtonSpec {
            tol_rel: 1e-12,
            ..Default::default()
        },
        outputs: OutputSpec::default(),
    }
}

pub fn ex3_torsion(w: f64, h: f64, total_angle: f64, steps: usize) -> Scenario {
    Scenario {
        name: "ex3_torsion".into(),
        description: "straight beam twisted from both ends, warping left free".into(),
        geometry: GeometrySpec {
            primitive: Primitive::Straight {
                length: 10.0,
                origin: [0.0; 3],
                axis: [1.0, 0.0, 0.0],
            },
            degree: 3,
            elements: 40,
            director_degree: None,
            director_mode: DirectorMode::Discrete,
            frame_method: FrameMethod::SmallestRotation,
            frame_seed: Some(FrameSeed {
                vector: [0.0, 1.0, 0.0],
                slot: 0,
            }),
        },
        section: SectionSpec {
            width: w,
            height: h,
            density: 1.0,
            eas: EasSpec {
                m_in_plane: Some(2),
                m_in_plane_shear: Some(2),
                m_axial: None,
                m_transverse_shear: Some(4),
            },
        },
        material: MaterialSpec {
            model: MaterialModel::SaintVenantKirchhoff,
            youngs_modulus: 210e9,
            poissons_ratio: 0.3,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::QuasiStatic {
            phases: vec![PhaseSpec {
                steps,
                motions: vec![
                    MotionAssignment {
                        at: Location::Start,
                        phi: Some(MotionSpec::Fixed),
                        directors: Some(MotionSpec::Rotate {
                            axis: [1.0, 0.0, 0.0],
                            point: [0.0; 3],
                            angle: -0.5 * total_angle,
                        }),
                    },
                    MotionAssignment {
                        at: Location::End,
                        phi: None,
                        directors: Some(MotionSpec::Rotate {
                            axis: [1.0, 0.0, 0.0],
                            point: [0.0; 3],
                            angle: 0.5 * total_angle,
                        }),
                    },
                ],
                loads: vec![],
            }],
        },
        newton: NewtonSpec::default(),
        outputs: OutputSpec {
            reaction: Some(ReactionSpec {
                at: Location::End,
                axis: [1.0, 0.0, 0.0],
                point: [0.0; 3],
            }),
            ..Default::default()
        },
    }
}

pub fn ex4_ring_twist(elements: usize, steps: usize) -> Scenario {
    Scenario {
        name: "ex4_ring_twist".into(),
        description: "closed ring with opposite prescribed cross-section rotations at two diametral points".into(),
        geometry: GeometrySpec {
            primitive: Primitive::Ring { radius: 20.0 },
            degree: 2,
            elements,
            director_degree: None,
            director_mode: DirectorMode::Discrete,
            frame_method: FrameMethod::SmallestRotation,
            // section height out of the ring plane; the in-plane-height
            // orientation does not fold back and stiffens instead
            frame_seed: Some(FrameSeed {
                vector: [0.0, 0.0, 1.0],
                slot: 1,
            }),
        },
        section: SectionSpec {
            width: 1.0 / 3.0,
            height: 1.0,
            density: 1.0,
            eas: EasSpec {
                m_in_plane: Some(2),
                m_in_plane_shear: Some(2),
                m_axial: None,
                m_transverse_shear: Some(4),
            },
        },
        material: MaterialSpec {
            model: MaterialModel::SaintVenantKirchhoff,
            youngs_modulus: 21e6,
            poissons_ratio: 0.3,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::QuasiStatic {
            phases: vec![PhaseSpec {
                steps,
                // the driven cross-section at the seam keeps its position
                // free: the ring folds toward the diametrically opposite
                // anchor, which pins translations
                motions: vec![
                    MotionAssignment {
                        at: Location::Start,
                        phi: None,
                        directors: Some(MotionSpec::Rotate {
                            axis: [1.0, 0.0, 0.0],
                            point: [0.0; 3],
                            angle: std::f64::consts::TAU,
                        }),
                    },
                    MotionAssignment {
                        at: Location::Param(0.5),
                        phi: Some(MotionSpec::Fixed),
                        directors: Some(MotionSpec::Rotate {
                            axis: [1.0, 0.0, 0.0],
                            point: [0.0; 3],
                            angle: -std::f64::consts::TAU,
                        }),
                    },
                ],
                loads: vec![],
            }],
        },
        newton: NewtonSpec {
            tol_rel: 1e-12,
            ..Default::default()
        },
        outputs: OutputSpec {
            reaction: Some(ReactionSpec {
                at: Location::Start,
                axis: [1.0, 0.0, 0.0],
                point: [0.0; 3],
            }),
            ..Default::default()
        },
    }
}

pub fn ex5_flying_beam(scheme: DynamicScheme, dt: f64, steps: usize) -> Scenario {
    Scenario {
        name: "ex5_flying_beam".into(),
        description: "free beam with translational, bending and spinning initial velocity".into(),
        geometry: GeometrySpec {
            primitive: Primitive::Straight {
                length: 3.0,
                origin: [0.0; 3],
                axis: [1.0, 0.0, 0.0],
            },
            degree: 2,
            elements: 10,
            director_degree: None,
            director_mode: DirectorMode::Discrete,
            frame_method: FrameMethod::SmallestRotation,
            frame_seed: Some(FrameSeed {
                vector: [0.0, 1.0, 0.0],
                slot: 0,
            }),
        },
        section: SectionSpec {
            width: 0.3,
            height: 0.3,
            density: 1.0,
            eas: EasSpec {
                m_in_plane: Some(2),
                m_in_plane_shear: Some(2),
                m_axial: None,
                m_transverse_shear: Some(4),
            },
        },
        material: MaterialSpec {
            model: MaterialModel::SaintVenantKirchhoff,
            youngs_modulus: 21e6,
            poissons_ratio: 0.3,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::Dynamic {
            scheme,
            dt,
            steps,
            fixed: vec![],
            loads: vec![],
            initial_velocity: Some(InitialVelocitySpec::FlyingBeam {
                v1: 1.0,
                v2: 150.0,
                length: 3.0,
            }),
        },
        newton: NewtonSpec {
            tol_rel: 1e-12,
            max_iter: 50,
            ..Default::default()
        },
        outputs: OutputSpec::default(),
    }
}

pub fn ex6_ring_static() -> Scenario {
    let mut s = ex6_ring_dynamic(DynamicScheme::Emc, MaterialModel::NeoHookean);
    s.name = "ex6_ring".into();
    s.material.youngs_modulus = 1.12e7;
    s.material.poissons_ratio = 0.4;
    s.scheme = SchemeSpec::QuasiStatic {
        phases: vec![PhaseSpec {
            steps: 8,
            motions: vec![MotionAssignment {
                at: Location::Start,
                phi: Some(MotionSpec::Fixed),
                directors: Some(MotionSpec::Fixed),
            }],
            loads: vec![LoadSpec {
                at: Some(Location::End),
                force: [0.0, 0.0, 5e4 * 0.3 * 0.4],
                couple1: [0.0; 3],
                couple2: [0.0; 3],
                curve: TimeCurveSpec::Constant,
            }],
        }],
    };
    s
}

pub fn ex6_ring_dynamic(scheme: DynamicScheme, model: MaterialModel) -> Scenario {
    Scenario {
        name: "ex6_ring".into(),
        description: "slotted ring, one end fixed, triangular ramp traction on the free end"
            .into(),
        geometry: GeometrySpec {
            primitive: Primitive::SlottedRing {
                radius: 1.3,
                slot_angle: std::f64::consts::PI / 180.0,
            },
            degree: 2,
            elements: 40,
            director_degree: None,
            director_mode: DirectorMode::Discrete,
            frame_method: FrameMethod::SmallestRotation,
            frame_seed: Some(FrameSeed {
                vector: [0.0, 0.0, 1.0],
                slot: 1,
            }),
        },
        section: SectionSpec {
            width: 0.3,
            height: 0.4,
            density: 1.0,
            eas: EasSpec {
                m_in_plane: Some(2),
                m_in_plane_shear: Some(2),
                m_axial: None,
                m_transverse_shear: Some(4),
            },
        },
        material: MaterialSpec {
            model,
            youngs_modulus: 1.12e7,
            poissons_ratio: 0.4,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::Dynamic {
            scheme,
            dt: 0.2,
            steps: 100,
            fixed: vec![Location::Start],
            loads: vec![LoadSpec {
                at: Some(Location::End),
                force: [0.0, 0.0, 5e4 * 0.3 * 0.4],
                couple1: [0.0; 3],
                couple2: [0.0; 3],
                curve: TimeCurveSpec::Triangle {
                    t_end: 20.0,
                    t_unit: 1.0,
                },
            }],
            initial_velocity: None,
        },
        newton: NewtonSpec {
            tol_rel: 1e-12,
            max_iter: 50,
            ..Default::default()
        },
        outputs: OutputSpec::default(),
    }
}

pub fn patch_axial() -> Scenario {
    Scenario {
        name: "patch_axial".into(),
        description: "axial patch test: end force on a three-element straight beam".into(),
        geometry: GeometrySpec {
            primitive: Primitive::Straight {
                length: 3.0,
                origin: [0.0; 3],
                axis: [1.0, 0.0, 0.0],
            },
            degree: 2,
            elements: 3,
            director_degree: None,
            director_mode: DirectorMode::Discrete,
            frame_method: FrameMethod::SmallestRotation,
            frame_seed: None,
        },
        section: SectionSpec {
            width: 0.3,
            height: 0.4,
            density: 1.0,
            eas: EasSpec::default(),
        },
        material: MaterialSpec {
            model: MaterialModel::SaintVenantKirchhoff,
            youngs_modulus: 2.1e8,
            poissons_ratio: 0.0,
            assume_orthonormal_frame: false,
        },
        scheme: SchemeSpec::QuasiStatic {
            phases: vec![PhaseSpec {
                steps: 4,
                motions: vec![MotionAssignment {
                    at: Location::Start,
                    phi: Some(MotionSpec::Fixed),
                    directors: Some(MotionSpec::Fixed),
                }],
                loads: vec![LoadSpec {
                    at: Some(Location::End),
                    force: [1e6, 0.0, 0.0],
                    couple1: [0.0; 3],
                    couple2: [0.0; 3],
                    curve: TimeCurveSpec::Constant,
                }],
            }],
        },
        newton: NewtonSpec {
            tol_rel: 1e-12,
            ..Default::default()
        },
        outputs: OutputSpec::default(),
    }
}

/// Parses a scenario from JSON text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s: Scenario = serde_json::from_str(text)?;
    validate(&s)?;
    Ok(s)
}

/// Structural validation beyond what the type system enforces.
pub fn validate(s: &Scenario) -> Result<(), ScenarioError> {
    if s.section.width <= 0.0 || s.section.height <= 0.0 || s.section.density <= 0.0 {
        return Err(ScenarioError::Validation(
            "section dimensions and density must be positive".into(),
        ));
    }
    if s.material.youngs_modulus <= 0.0 {
        return Err(ScenarioError::Validation(
            "material.youngs_modulus must be positive".into(),
        ));
    }
    if s.material.poissons_ratio >= 0.5 || s.material.poissons_ratio <= -1.0 {
        return Err(ScenarioError::Validation(
            "material.poissons_ratio must lie in (-1, 0.5)".into(),
        ));
    }
    if s.geometry.elements == 0 {
        return Err(ScenarioError::Validation(
            "geometry.elements must be at least 1".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_compile() {
        for entry in catalog() {
            let cases: Vec<Option<&str>> = if entry.cases.is_empty() {
                vec![None]
            } else {
                entry.cases.iter().map(|c| Some(*c)).collect()
            };
            for case in cases {
                let s = bundled(entry.name, case).unwrap();
                validate(&s).unwrap();
                compile(&s).unwrap_or_else(|e| panic!("{} {case:?}: {e}", entry.name));
            }
        }
    }

    #[test]
    fn parse_echo_round_trip_is_fixed_point() {
        let s = bundled("ex5_flying_beam", None).unwrap();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let s2 = parse_scenario(&text).unwrap();
        let text2 = serde_json::to_string_pretty(&s2).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn missing_material_is_a_named_error() {
        let s = bundled("patch_axial", None).unwrap();
        let mut v: serde_json::Value = serde_json::to_value(&s).unwrap();
        v.as_object_mut().unwrap().remove("material");
        let err = parse_scenario(&serde_json::to_string(&v).unwrap()).unwrap_err();
        assert!(err.to_string().contains("material"), "{err}");
    }

    #[test]
    fn nu_out_of_range_is_a_validation_error() {
        let mut s = bundled("patch_axial", None).unwrap();
        s.material.poissons_ratio = 0.5;
        assert!(matches!(validate(&s), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn axial_patch_test_reproduces_constant_stress() {
        // independent scalar solution of the 1d problem:
        // EA eps lambda = F with eps = (lambda^2 - 1)/2
        let s = patch_axial();
        let result = run(&s, &RunOptions::default()).unwrap();
        let f = 1e6;
        let ea = 2.1e8 * 0.12;
        let mut lambda = 1.0f64;
        for _ in 0..100 {
            let eps = 0.5 * (lambda * lambda - 1.0);
            let g = ea * eps * lambda - f;
            let dg = ea * (eps + lambda * lambda);
            lambda -= g / dg;
        }
        let eps_exact = 0.5 * (lambda * lambda - 1.0);
        let r_exact = ea * eps_exact;

        let disc = &result.compiled.model.disc;
        let last = &result.records.last().unwrap().state;
        for el in &disc.elements {
            for qp in &el.qps {
                let eps_p = disc.phys_field_at(&last.strain, qp);
                let r_p = disc.phys_field_at(&last.stress, qp);
                assert!(
                    (eps_p[0] - eps_exact).abs() <= 1e-10 * eps_exact.abs(),
                    "eps {} vs {}",
                    eps_p[0],
                    eps_exact
                );
                assert!(
                    (r_p[0] - r_exact).abs() <= 1e-10 * r_exact.abs(),
                    "r {} vs {}",
                    r_p[0],
                    r_exact
                );
                for k in 1..15 {
                    assert!(eps_p[k].abs() <= 1e-10 * eps_exact.abs().max(1e-12));
                }
            }
        }
    }
}
