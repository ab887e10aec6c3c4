//! B-spline / NURBS curve machinery: open knot vectors, basis evaluation with
//! derivatives, Greville abscissae, rational curve geometry, uniform knot
//! refinement and the parametric-to-arc-length map.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("knot vector must be non-decreasing")]
    NotMonotone,
    #[error("knot vector is not open (end knots must repeat degree+1 times)")]
    NotOpen,
    #[error("knot vector too short: need at least degree+1 basis functions")]
    TooShort,
    #[error("parameter {0} outside knot domain [{1}, {2}]")]
    OutOfDomain(f64, f64, f64),
    #[error("Greville abscissae are undefined for degree 0")]
    GrevilleDegreeZero,
    #[error("degenerate curve: vanishing tangent at xi = {0}")]
    DegenerateTangent(f64),
    #[error("weights must be strictly positive")]
    NonPositiveWeight,
    #[error("curve needs {0} control points, got {1}")]
    ControlPointCount(usize, usize),
}

/// Open (clamped) knot vector of a fixed polynomial degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

/// Non-zero basis values and derivatives at one parameter.
///
/// `values[k][j]` is the k-th derivative of basis function `first + j`;
/// exactly `degree + 1` functions are non-zero at any parameter.
#[derive(Debug, Clone)]
pub struct BasisValues {
    pub first: usize,
    pub values: Vec<Vec<f64>>,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self, SplineError> {
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(SplineError::NotMonotone);
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(SplineError::TooShort);
        }
        let first = knots[0];
        let last = *knots.last().unwrap();
        if knots[degree] != first || knots[knots.len() - 1 - degree] != last {
            return Err(SplineError::NotOpen);
        }
        Ok(KnotVector { knots, degree })
    }

    /// Open uniform knot vector on [0, 1] with `n_elements` equal spans.
    pub fn open_uniform(degree: usize, n_elements: usize) -> Self {
        let mut knots = vec![0.0; degree + 1];
        for i in 1..n_elements {
            knots.push(i as f64 / n_elements as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        KnotVector { knots, degree }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Affinely rescales the knots so the domain becomes [0, 1].
    pub fn normalized(&self) -> KnotVector {
        let (a, b) = self.domain();
        let s = 1.0 / (b - a);
        KnotVector {
            knots: self.knots.iter().map(|k| ((k - a) * s).clamp(0.0, 1.0)).collect(),
            degree: self.degree,
        }
    }

    /// Distinct interior knots.
    pub fn interior_breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.domain();
        let mut out = Vec::new();
        for &k in &self.knots {
            if k > a && k < b && out.last().map_or(true, |&l: &f64| k > l) {
                out.push(k);
            }
        }
        out
    }

    /// Non-zero knot spans, i.e. the elements of the patch.
    pub fn element_spans(&self) -> Vec<(f64, f64)> {
        self.knots
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| (w[0], w[1]))
            .collect()
    }

    /// Knot-span index of `xi`: spans are half-open `[k_i, k_{i+1})`, the last
    /// span is closed so the domain end belongs to the final element.
    pub fn find_span(&self, xi: f64) -> Result<usize, SplineError> {
        let (a, b) = self.domain();
        if !(xi >= a && xi <= b) {
            return Err(SplineError::OutOfDomain(xi, a, b));
        }
        let n = self.n_basis();
        let p = self.degree;
        if xi >= self.knots[n] {
            // last non-zero span
            let mut s = n - 1;
            while self.knots[s + 1] <= self.knots[s] {
                s -= 1;
            }
            return Ok(s);
        }
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if xi < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Evaluates the `degree + 1` non-zero basis functions and derivatives up
    /// to order `n_derivs` at `xi` (Cox-de Boor recursion; derivatives beyond
    /// the degree are identically zero).
    pub fn eval_basis(&self, xi: f64, n_derivs: usize) -> Result<BasisValues, SplineError> {
        let span = self.find_span(xi)?;
        let p = self.degree;
        let u = &self.knots;

        // Triangular table of all lower-degree bases plus knot differences.
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = xi - u[span + 1 - j];
            right[j] = u[span + j] - xi;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; n_derivs + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }

        let kmax = n_derivs.min(p);
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=kmax {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=kmax {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }

        Ok(BasisValues {
            first: span - p,
            values: ders,
        })
    }

    /// Greville abscissae: the moving average of `degree` consecutive knots,
    /// one per basis function.
    pub fn greville(&self) -> Result<Vec<f64>, SplineError> {
        let p = self.degree;
        if p == 0 {
            return Err(SplineError::GrevilleDegreeZero);
        }
        let n = self.n_basis();
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let s: f64 = self.knots[j + 1..=j + p].iter().sum();
            out.push(s / p as f64);
        }
        Ok(out)
    }
}

/// Open knot vector of `target_degree` sharing the distinct interior knots of
/// `geom`: multiplicity one (maximal smoothness) at the geometry's smooth
/// knots, and the geometry's own multiplicity at reduced-continuity knots, so
/// the field basis sits one continuity order below the geometry everywhere.
/// Without the reduced continuity at C0 geometry joins (composite arcs) the
/// mixed system develops kink mechanisms.
pub fn derive_field_knots(geom: &KnotVector, target_degree: usize) -> KnotVector {
    let (a, b) = geom.domain();
    let mut knots = vec![a; target_degree + 1];
    let mut run: Option<(f64, usize)> = None;
    let flush = |knots: &mut Vec<f64>, run: &Option<(f64, usize)>| {
        if let Some((k, m)) = run {
            let mult = (*m).min(target_degree + 1).max(1);
            knots.extend(std::iter::repeat(*k).take(mult));
        }
    };
    for &k in geom.knots() {
        if k <= a || k >= b {
            continue;
        }
        match &mut run {
            Some((kk, m)) if *kk == k => *m += 1,
            _ => {
                flush(&mut knots, &run);
                run = Some((k, 1));
            }
        }
    }
    flush(&mut knots, &run);
    knots.extend(std::iter::repeat(b).take(target_degree + 1));
    KnotVector {
        knots,
        degree: target_degree,
    }
}

/// NURBS curve in 3-space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NurbsCurve {
    kv: KnotVector,
    control_points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

impl NurbsCurve {
    pub fn new(
        kv: KnotVector,
        control_points: Vec<Vector3<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self, SplineError> {
        let n = kv.n_basis();
        if control_points.len() != n {
            return Err(SplineError::ControlPointCount(n, control_points.len()));
        }
        if weights.len() != n {
            return Err(SplineError::ControlPointCount(n, weights.len()));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(SplineError::NonPositiveWeight);
        }
        Ok(NurbsCurve {
            kv: kv.normalized(),
            control_points,
            weights,
        })
    }

    /// Straight segment with exactly linear parameterization for any degree:
    /// control points are placed at the Greville abscissae along the chord.
    pub fn line(
        start: Vector3<f64>,
        end: Vector3<f64>,
        degree: usize,
        n_elements: usize,
    ) -> Self {
        let kv = KnotVector::open_uniform(degree, n_elements);
        let greville = kv.greville().expect("degree >= 1");
        let control_points = greville
            .iter()
            .map(|&g| start + (end - start) * g)
            .collect();
        let n = kv.n_basis();
        NurbsCurve {
            kv,
            control_points,
            weights: vec![1.0; n],
        }
    }

    /// Circular arc in the XY plane, centered at the origin, from `angle0` to
    /// `angle1`, represented exactly by quadratic rational segments. Segments
    /// of equal sweep are chained with C0 joins; each sweep stays below pi/2.
    pub fn circular_arc(radius: f64, angle0: f64, angle1: f64) -> Self {
        let total = angle1 - angle0;
        let n_seg = (total.abs() / (std::f64::consts::FRAC_PI_2 + 1e-12)).ceil().max(1.0) as usize;
        let d = total / n_seg as f64;
        let w_mid = (d / 2.0).cos();

        let on_circle = |a: f64| Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
        let mut pts = vec![on_circle(angle0)];
        let mut weights = vec![1.0];
        for s in 0..n_seg {
            let a = angle0 + s as f64 * d;
            let mid = a + d / 2.0;
            pts.push(Vector3::new(
                radius / w_mid * mid.cos(),
                radius / w_mid * mid.sin(),
                0.0,
            ));
            pts.push(on_circle(a + d));
            weights.push(w_mid);
            weights.push(1.0);
        }
        let mut knots = vec![0.0, 0.0, 0.0];
        for s in 1..n_seg {
            let k = s as f64 / n_seg as f64;
            knots.push(k);
            knots.push(k);
        }
        knots.extend_from_slice(&[1.0, 1.0, 1.0]);
        NurbsCurve {
            kv: KnotVector { knots, degree: 2 },
            control_points: pts,
            weights,
        }
    }

    /// Full circle built from four exact quarter arcs; first and last control
    /// points coincide, closure is imposed by the analysis layer.
    pub fn full_ring(radius: f64) -> Self {
        Self::circular_arc(radius, 0.0, 2.0 * std::f64::consts::PI)
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.kv
    }

    pub fn control_points(&self) -> &[Vector3<f64>] {
        &self.control_points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_control_points(&self) -> usize {
        self.control_points.len()
    }

    /// Curve point and parametric derivatives up to order `n_derivs`.
    ///
    /// Rational derivatives come from the quotient rule applied to the
    /// homogeneous (weighted) form.
    pub fn point_derivs(&self, xi: f64, n_derivs: usize) -> Result<Vec<Vector3<f64>>, SplineError> {
        let basis = self.kv.eval_basis(xi, n_derivs)?;
        let p = self.kv.degree();
        // Homogeneous derivatives A^(k) (3-vector part) and w^(k).
        let mut aw = vec![(Vector3::zeros(), 0.0); n_derivs + 1];
        for k in 0..=n_derivs {
            for j in 0..=p {
                let i = basis.first + j;
                let nv = basis.values[k][j];
                aw[k].0 += self.control_points[i] * (self.weights[i] * nv);
                aw[k].1 += self.weights[i] * nv;
            }
        }
        let mut ders: Vec<Vector3<f64>> = Vec::with_capacity(n_derivs + 1);
        for k in 0..=n_derivs {
            let mut v = aw[k].0;
            for i in 1..=k {
                v -= ders[k - i] * (binomial(k, i) * aw[i].1);
            }
            ders.push(v / aw[0].1);
        }
        Ok(ders)
    }

    pub fn point(&self, xi: f64) -> Result<Vector3<f64>, SplineError> {
        Ok(self.point_derivs(xi, 0)?[0])
    }

    /// Inserts `xi` once, preserving the curve exactly (homogeneous form).
    pub fn insert_knot(&self, xi: f64) -> Result<NurbsCurve, SplineError> {
        let span = self.kv.find_span(xi)?;
        let p = self.kv.degree();
        let u = self.kv.knots();
        let hom = |i: usize| {
            let w = self.weights[i];
            (self.control_points[i] * w, w)
        };
        let mut pts = Vec::with_capacity(self.control_points.len() + 1);
        let mut wts = Vec::with_capacity(self.weights.len() + 1);
        for i in 0..=span - p {
            let (c, w) = hom(i);
            pts.push(c);
            wts.push(w);
        }
        for i in span - p + 1..=span {
            let alpha = (xi - u[i]) / (u[i + p] - u[i]);
            let (c0, w0) = hom(i - 1);
            let (c1, w1) = hom(i);
            pts.push(c0 * (1.0 - alpha) + c1 * alpha);
            wts.push(w0 * (1.0 - alpha) + w1 * alpha);
        }
        for i in span..self.control_points.len() {
            let (c, w) = hom(i);
            pts.push(c);
            wts.push(w);
        }
        let mut knots = u.to_vec();
        knots.insert(span + 1, xi);
        let control_points = pts
            .iter()
            .zip(&wts)
            .map(|(c, &w)| c / w)
            .collect();
        Ok(NurbsCurve {
            kv: KnotVector {
                knots,
                degree: p,
            },
            control_points,
            weights: wts,
        })
    }

    /// Uniformly subdivides every non-zero span until the curve has at least
    /// `target_elements` elements. Each original span is split into the same
    /// number of equal parametric pieces, so the geometry is unchanged.
    pub fn refined_to(&self, target_elements: usize) -> NurbsCurve {
        let spans = self.kv.element_spans();
        let per_span = target_elements.div_ceil(spans.len()).max(1);
        let mut curve = self.clone();
        for (a, b) in spans {
            for i in 1..per_span {
                let xi = a + (b - a) * i as f64 / per_span as f64;
                curve = curve.insert_knot(xi).expect("knot inside domain");
            }
        }
        curve
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut out = 1.0;
    for i in 0..k {
        out *= (n - i) as f64 / (k - i) as f64;
    }
    out
}

/// Arc-length map of a regular curve: Jacobian `|X_{,xi}|` and cached total
/// length from per-element Gauss quadrature.
#[derive(Debug, Clone)]
pub struct ParamMap {
    length: f64,
}

impl ParamMap {
    pub fn new(curve: &NurbsCurve) -> Result<Self, SplineError> {
        let rule = gauss_legendre(curve.knot_vector().degree() + 5);
        let mut length = 0.0;
        for (a, b) in curve.knot_vector().element_spans() {
            length += Self::adaptive_span_length(curve, a, b, &rule, 0)?;
        }
        Ok(ParamMap { length })
    }

    /// Gauss integral of the Jacobian over `[a, b]`, bisected until converged.
    /// The rational parameterization of conic arcs is not polynomial, so a
    /// fixed rule on coarse meshes is not accurate enough for the round-trip
    /// invariances expected of the length.
    fn adaptive_span_length(
        curve: &NurbsCurve,
        a: f64,
        b: f64,
        rule: &[(f64, f64)],
        depth: usize,
    ) -> Result<f64, SplineError> {
        let gauss = |a: f64, b: f64| -> Result<f64, SplineError> {
            let h = 0.5 * (b - a);
            let mut s = 0.0;
            for &(x, w) in rule {
                s += w * h * Self::jacobian_at(curve, a + h * (x + 1.0))?;
            }
            Ok(s)
        };
        let whole = gauss(a, b)?;
        let m = 0.5 * (a + b);
        let halves = gauss(a, m)? + gauss(m, b)?;
        if (whole - halves).abs() <= 1e-14 * halves.abs() || depth >= 30 {
            Ok(halves)
        } else {
            Ok(Self::adaptive_span_length(curve, a, m, rule, depth + 1)?
                + Self::adaptive_span_length(curve, m, b, rule, depth + 1)?)
        }
    }

    pub fn total_length(&self) -> f64 {
        self.length
    }

    pub fn jacobian_at(curve: &NurbsCurve, xi: f64) -> Result<f64, SplineError> {
        let d = curve.point_derivs(xi, 1)?;
        let j = d[1].norm();
        if j <= 1e-14 {
            return Err(SplineError::DegenerateTangent(xi));
        }
        Ok(j)
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((-x, w));
        if n - 1 - i != i {
            out.push((x, w));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_hat_functions() {
        let kv = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).unwrap();
        let b = kv.eval_basis(0.3, 0).unwrap();
        assert_eq!(b.first, 0);
        assert_relative_eq!(b.values[0][0], 0.7, epsilon = 1e-15);
        assert_relative_eq!(b.values[0][1], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn bernstein_midpoint() {
        let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        let b = kv.eval_basis(0.5, 0).unwrap();
        assert_relative_eq!(b.values[0][0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(b.values[0][1], 0.5, epsilon = 1e-15);
        assert_relative_eq!(b.values[0][2], 0.25, epsilon = 1e-15);
    }

    /// Brute-force Cox-de Boor recursion for a single basis function.
    fn basis_recursive(knots: &[f64], i: usize, p: usize, xi: f64) -> f64 {
        if p == 0 {
            let last_dom = knots[knots.len() - 1];
            let closed = xi == last_dom && knots[i + 1] == last_dom;
            return if (knots[i] <= xi && xi < knots[i + 1]) || closed {
                1.0
            } else {
                0.0
            };
        }
        let mut v = 0.0;
        if knots[i + p] > knots[i] {
            v += (xi - knots[i]) / (knots[i + p] - knots[i]) * basis_recursive(knots, i, p - 1, xi);
        }
        if knots[i + p + 1] > knots[i + 1] {
            v += (knots[i + p + 1] - xi) / (knots[i + p + 1] - knots[i + 1])
                * basis_recursive(knots, i + 1, p - 1, xi);
        }
        v
    }

    #[test]
    fn matches_termwise_recursive_definition() {
        let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0], 2).unwrap();
        let b = kv.eval_basis(0.25, 0).unwrap();
        for j in 0..=2 {
            let expect = basis_recursive(kv.knots(), b.first + j, 2, 0.25);
            assert_relative_eq!(b.values[0][j], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let kv = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).unwrap();
        assert!(matches!(
            kv.eval_basis(1.5, 0),
            Err(SplineError::OutOfDomain(..))
        ));
    }

    #[test]
    fn greville_moving_averages() {
        let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(kv.greville().unwrap(), vec![0.0, 0.5, 1.0]);

        let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(kv.greville().unwrap(), vec![0.0, 0.25, 0.75, 1.0]);

        let kv = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(kv.greville().unwrap(), vec![0.0, 1.0]);

        let kv = KnotVector::new(vec![0.0, 0.5, 1.0], 0).unwrap();
        assert!(matches!(
            kv.greville(),
            Err(SplineError::GrevilleDegreeZero)
        ));
    }

    #[test]
    fn derived_field_knots() {
        let geom = KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0], 2).unwrap();
        let d1 = derive_field_knots(&geom, 1);
        assert_eq!(d1.knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);

        let geom = KnotVector::new(
            vec![0.0, 0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0, 1.0],
            3,
        )
        .unwrap();
        let d2 = derive_field_knots(&geom, 2);
        assert_eq!(
            d2.knots(),
            &[0.0, 0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0, 1.0]
        );

        let d0 = derive_field_knots(&geom, 0);
        assert_eq!(d0.knots(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(d0.n_basis(), 3);

        // reduced-continuity geometry knots keep their multiplicity so the
        // field space is discontinuous where the geometry is only C0
        let ring_like =
            KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 0.5, 1.0, 1.0, 1.0], 2).unwrap();
        let d1 = derive_field_knots(&ring_like, 1);
        assert_eq!(d1.knots(), &[0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn straight_segment_interpolates_linearly() {
        let l = 4.0;
        let c = NurbsCurve::line(Vector3::zeros(), Vector3::new(l, 0.0, 0.0), 1, 1);
        let p = c.point(0.3).unwrap();
        assert_relative_eq!(p.x, 0.3 * l, epsilon = 1e-14);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-15);
        // clamped property for a higher degree too
        let c = NurbsCurve::line(Vector3::new(1.0, 2.0, 3.0), Vector3::new(5.0, 2.0, -1.0), 3, 4);
        assert_relative_eq!(
            (c.point(0.0).unwrap() - c.control_points()[0]).norm(),
            0.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            (c.point(1.0).unwrap() - *c.control_points().last().unwrap()).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn quarter_circle_is_exact() {
        let r = 2.5;
        let c = NurbsCurve::circular_arc(r, 0.0, std::f64::consts::FRAC_PI_2);
        for i in 0..=200 {
            let xi = i as f64 / 200.0;
            let p = c.point(xi).unwrap();
            assert!((p.norm() - r).abs() <= 1e-12 * r, "xi={xi}: |p|={}", p.norm());
        }
    }

    #[test]
    fn full_ring_is_exact_and_closed() {
        let r = 20.0;
        let c = NurbsCurve::full_ring(r);
        for i in 0..=400 {
            let xi = i as f64 / 400.0;
            let p = c.point(xi).unwrap();
            assert!((p.norm() - r).abs() <= 1e-11 * r);
        }
        let first = c.control_points()[0];
        let last = *c.control_points().last().unwrap();
        assert_relative_eq!((first - last).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let c = NurbsCurve::circular_arc(3.0, 0.2, 1.4);
        let h = 1e-6;
        for &xi in &[0.21, 0.4, 0.63, 0.9] {
            let d = c.point_derivs(xi, 1).unwrap();
            let fd = (c.point(xi + h).unwrap() - c.point(xi - h).unwrap()) / (2.0 * h);
            assert!((d[1] - fd).norm() <= 1e-6 * d[1].norm().max(1.0));
        }
    }

    #[test]
    fn arc_length_jacobian_straight_and_arc() {
        let l = 7.0;
        let c = NurbsCurve::line(Vector3::zeros(), Vector3::new(l, 0.0, 0.0), 1, 1);
        for &xi in &[0.0, 0.37, 1.0] {
            assert_relative_eq!(ParamMap::jacobian_at(&c, xi).unwrap(), l, epsilon = 1e-12);
        }

        let r = 4.0;
        let c = NurbsCurve::circular_arc(r, 0.0, std::f64::consts::FRAC_PI_2);
        let pm = ParamMap::new(&c).unwrap();
        assert_relative_eq!(
            pm.total_length(),
            std::f64::consts::FRAC_PI_2 * r,
            epsilon = 1e-10
        );
    }

    #[test]
    fn knot_insertion_preserves_geometry_and_length() {
        let r = 4.0;
        let c = NurbsCurve::circular_arc(r, 0.0, std::f64::consts::FRAC_PI_2);
        let refined = c.refined_to(8);
        assert_eq!(refined.knot_vector().element_spans().len(), 8);
        for i in 0..=100 {
            let xi = i as f64 / 100.0;
            let a = c.point(xi).unwrap();
            let b = refined.point(xi).unwrap();
            assert!((a - b).norm() <= 1e-12 * r);
        }
        let l0 = ParamMap::new(&c).unwrap().total_length();
        let l1 = ParamMap::new(&refined).unwrap().total_length();
        assert_relative_eq!(l0, l1, epsilon = 1e-12);
    }

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for n in 1..=10 {
            let rule = gauss_legendre(n);
            // integrate x^(2n-1) (odd, exact 0) and x^(2n-2)
            let odd: f64 = rule.iter().map(|&(x, w)| w * x.powi(2 * n as i32 - 1)).sum();
            assert!(odd.abs() < 1e-13);
            let even: f64 = rule.iter().map(|&(x, w)| w * x.powi(2 * n as i32 - 2)).sum();
            let exact = 2.0 / (2.0 * n as f64 - 1.0);
            assert_relative_eq!(even, exact, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_local_support(
            xi in 0.0f64..=1.0,
            degree in 1usize..=4,
            n_el in 1usize..=6,
        ) {
            let kv = KnotVector::open_uniform(degree, n_el);
            let b = kv.eval_basis(xi, 2).unwrap();
            prop_assert_eq!(b.values[0].len(), degree + 1);
            let sum: f64 = b.values[0].iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-13);
            let dsum: f64 = b.values[1].iter().sum();
            prop_assert!(dsum.abs() <= 1e-10);
        }

        #[test]
        fn basis_derivative_matches_central_difference(
            xi in 0.01f64..=0.99,
            degree in 1usize..=4,
        ) {
            let kv = KnotVector::open_uniform(degree, 4);
            let h = 1e-6;
            let b = kv.eval_basis(xi, 1).unwrap();
            let bp = kv.eval_basis(xi + h, 0).unwrap();
            let bm = kv.eval_basis(xi - h, 0).unwrap();
            // only compare when the span (hence the nonzero set) is unchanged
            if bp.first == b.first && bm.first == b.first {
                for j in 0..=degree {
                    let fd = (bp.values[0][j] - bm.values[0][j]) / (2.0 * h);
                    let scale = b.values[1][j].abs().max(1.0);
                    prop_assert!((b.values[1][j] - fd).abs() <= 1e-6 * scale);
                }
            }
        }

        #[test]
        fn greville_endpoints_hit_domain(degree in 1usize..=5, n_el in 1usize..=7) {
            let kv = KnotVector::open_uniform(degree, n_el);
            let g = kv.greville().unwrap();
            prop_assert_eq!(g[0], 0.0);
            prop_assert_eq!(*g.last().unwrap(), 1.0);
            prop_assert!(g.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
