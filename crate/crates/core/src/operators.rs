//! Direct-quadrature realization of `T`, `T*` and commutator pairings on
//! separated supports, off-diagonal constants, the partial kernel in the
//! first variable, the pointwise domination majorant, and Riesz potentials.
//!
//! Separation is enforced, never regularized: every evaluation point must be
//! strictly separated from the integration support in all three coordinates.
//! Where an integrable singularity is unavoidable (Riesz weights, the partial
//! kernel's inner integral) a band of one grid cell is excluded and its width
//! is reported.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::fields::{extremal_testfunction, GridFunction, Symbol};
use crate::geometry::{Box3, Interval, ZygmundRectangle};
use crate::kernels::{d_theta, Kernel, KernelError};
use crate::sum::{pairwise_sum, pairwise_sum_by};

/// Accepted range for "comparably separated" off-diagonal pairs:
/// `dist(J^i, L^i) / len(J^i)` must lie in `[OFF_DIST_MIN, OFF_DIST_MAX]`.
pub const OFF_DIST_MIN: f64 = 1.0;
pub const OFF_DIST_MAX: f64 = 3.0;

#[derive(Debug, Clone)]
pub enum OperatorError {
    /// An evaluation point or support violates coordinate-wise separation.
    Separation(String),
    /// An off-diagonal pair violates the equal-sides / comparable-distance
    /// requirements, or a test function exceeds its sup bound.
    Admissibility(String),
    /// Coinciding coordinates where the partial kernel needs separation.
    Degenerate(&'static str),
    Domain(String),
    Kernel(KernelError),
}

impl fmt::Display for OperatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorError::Separation(msg) => write!(f, "separation error: {msg}"),
            OperatorError::Admissibility(msg) => write!(f, "admissibility error: {msg}"),
            OperatorError::Degenerate(msg) => write!(f, "degenerate configuration: {msg}"),
            OperatorError::Domain(msg) => write!(f, "domain error: {msg}"),
            OperatorError::Kernel(e) => write!(f, "kernel error: {e}"),
        }
    }
}

impl std::error::Error for OperatorError {}

impl From<KernelError> for OperatorError {
    fn from(e: KernelError) -> Self {
        OperatorError::Kernel(e)
    }
}

/// A guarded source/target configuration with positive coordinate-wise gaps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeparatedPair {
    pub source: Box3,
    pub target: Box3,
    pub min_gaps: [f64; 3],
}

impl SeparatedPair {
    pub fn new(source: Box3, target: Box3) -> Result<Self, OperatorError> {
        let min_gaps = source.separation_gaps(&target).ok_or_else(|| {
            OperatorError::Separation(format!(
                "source {source:?} and target {target:?} touch in some coordinate"
            ))
        })?;
        Ok(SeparatedPair { source, target, min_gaps })
    }
}

/// Fallible quadrature sum with the shared pairwise tree shape.
fn quad_sum<F>(n: usize, f: F) -> Result<f64, OperatorError>
where
    F: Fn(usize) -> Result<f64, OperatorError>,
{
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        terms.push(f(i)?);
    }
    Ok(pairwise_sum(&terms))
}

fn require_separated_point(support: &Box3, x: [f64; 3]) -> Result<(), OperatorError> {
    if support.separation_gaps_to_point(x).is_none() {
        return Err(OperatorError::Separation(format!(
            "target {x:?} is not separated from support {support:?} in all coordinates"
        )));
    }
    Ok(())
}

/// `Tf(x) = integral of K(x, y) f(y) dy` by midpoint quadrature over the
/// support of `f`, at each target. Every target must be separated from the
/// support coordinate-wise.
pub fn apply_t(
    k: &dyn Kernel,
    f: &GridFunction,
    targets: &[[f64; 3]],
) -> Result<Vec<f64>, OperatorError> {
    apply_kernel_quadrature(k, f, targets, false)
}

/// `T*f(x) = integral of K(y, x) f(y) dy` — the transposed-kernel variant.
pub fn apply_t_star(
    k: &dyn Kernel,
    f: &GridFunction,
    targets: &[[f64; 3]],
) -> Result<Vec<f64>, OperatorError> {
    apply_kernel_quadrature(k, f, targets, true)
}

/// Midpoint coordinates along each axis of a grid function's support.
fn axis_nodes(f: &GridFunction) -> [Vec<f64>; 3] {
    let res = f.res();
    let sup = f.support();
    let mut out: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..3 {
        let lo = sup.axis(a).lo();
        let h = sup.axis(a).length() / res[a] as f64;
        out[a] = (0..res[a]).map(|i| lo + (i as f64 + 0.5) * h).collect();
    }
    out
}

fn apply_kernel_quadrature(
    k: &dyn Kernel,
    f: &GridFunction,
    targets: &[[f64; 3]],
    transpose: bool,
) -> Result<Vec<f64>, OperatorError> {
    for &x in targets {
        require_separated_point(f.support(), x)?;
    }
    let vol = f.cell_volume();
    let samples = f.samples();
    let [n1, n2, n3] = f.res();
    let nodes = axis_nodes(f);
    targets
        .par_iter()
        .map(|&x| {
            let mut kbuf = vec![0.0f64; n3];
            let mut rows = Vec::with_capacity(n1 * n2);
            for i in 0..n1 {
                for j in 0..n2 {
                    let base = (i * n2 + j) * n3;
                    let row = &samples[base..base + n3];
                    if row.iter().all(|&w| w == 0.0) {
                        rows.push(0.0);
                        continue;
                    }
                    k.evaluate_row(x, nodes[0][i], nodes[1][j], &nodes[2], transpose, &mut kbuf)?;
                    rows.push(pairwise_sum_by(n3, |kk| kbuf[kk] * row[kk]));
                }
            }
            Ok(pairwise_sum(&rows) * vol)
        })
        .collect()
}

/// Double quadrature of `(b(x) - b(y)) K(x, y) phi(y) psi(x)` over
/// `supp(phi) x supp(psi)`; this equals `<[b, T] phi, psi>` whenever the two
/// supports are separated coordinate-wise.
pub fn commutator_pairing(
    b: &Symbol,
    k: &dyn Kernel,
    phi: &GridFunction,
    psi: &GridFunction,
) -> Result<f64, OperatorError> {
    if phi.support().separation_gaps(psi.support()).is_none() {
        return Err(OperatorError::Separation(
            "pairing supports must be separated in all coordinates".into(),
        ));
    }
    let vy = phi.cell_volume();
    let vx = psi.cell_volume();
    let [m1, m2, m3] = phi.res();
    let ynodes = axis_nodes(phi);
    let phi_samples = phi.samples();
    // The symbol depends on one argument at a time; sample it per grid
    // rather than per pair.
    let b_phi: Vec<f64> = (0..phi.len()).map(|i| b.evaluate(phi.node(i))).collect();
    let outer: Result<Vec<f64>, OperatorError> = (0..psi.len())
        .into_par_iter()
        .map(|ix| {
            let w = psi.samples()[ix];
            if w == 0.0 {
                return Ok(0.0);
            }
            let x = psi.node(ix);
            let bx = b.evaluate(x);
            let mut kbuf = vec![0.0f64; m3];
            let mut rows = Vec::with_capacity(m1 * m2);
            for i in 0..m1 {
                for j in 0..m2 {
                    let base = (i * m2 + j) * m3;
                    let row = &phi_samples[base..base + m3];
                    if row.iter().all(|&wy| wy == 0.0) {
                        rows.push(0.0);
                        continue;
                    }
                    let brow = &b_phi[base..base + m3];
                    k.evaluate_row(x, ynodes[0][i], ynodes[1][j], &ynodes[2], false, &mut kbuf)?;
                    rows.push(pairwise_sum_by(m3, |kk| {
                        (bx - brow[kk]) * kbuf[kk] * row[kk]
                    }));
                }
            }
            Ok(pairwise_sum(&rows) * vy * w)
        })
        .collect();
    Ok(pairwise_sum(&outer?) * vx)
}

/// One admissible off-diagonal pair with its test functions.
#[derive(Debug, Clone)]
pub struct OffPairCase {
    pub p1: ZygmundRectangle,
    pub p2: ZygmundRectangle,
    pub label: String,
    /// Test-function pairs `(f1 on P1, f2 on P2)` with sup norm at most 1.
    pub testfns: Vec<OffTestPair>,
}

#[derive(Debug, Clone)]
pub struct OffTestPair {
    pub f1: GridFunction,
    pub f2: GridFunction,
    pub label: String,
}

/// Witness of the attaining configuration in an off-diagonal estimate.
#[derive(Debug, Clone, Serialize)]
pub struct OffWitness {
    pub pair: String,
    pub p1: ZygmundRectangle,
    pub p2: ZygmundRectangle,
    pub testfn: String,
}

/// A lower estimate of the off-diagonal constant `Off_u^t`.
#[derive(Debug, Clone, Serialize)]
pub struct OffDiagonalEstimate {
    pub u: f64,
    pub t: f64,
    pub value: f64,
    pub witness: Option<OffWitness>,
    pub pairs: usize,
}

fn check_off_admissible(case: &OffPairCase) -> Result<(), OperatorError> {
    let a = case.p1.side_lengths();
    let b = case.p2.side_lengths();
    for i in 0..3 {
        if (a[i] - b[i]).abs() > 1e-12 * a[i] {
            return Err(OperatorError::Admissibility(format!(
                "pair '{}': side lengths differ on axis {i}: {} vs {}",
                case.label, a[i], b[i]
            )));
        }
        let dist = case.p1.axis(i).dist(case.p2.axis(i));
        let lo = OFF_DIST_MIN * a[i] * (1.0 - 1e-12);
        let hi = OFF_DIST_MAX * a[i] * (1.0 + 1e-12);
        if dist < lo || dist > hi {
            return Err(OperatorError::Admissibility(format!(
                "pair '{}': dist {dist} on axis {i} outside [{lo}, {hi}]",
                case.label
            )));
        }
    }
    for f in &case.testfns {
        if f.f1.sup_norm() > 1.0 + 1e-12 || f.f2.sup_norm() > 1.0 + 1e-12 {
            return Err(OperatorError::Admissibility(format!(
                "pair '{}', fn '{}': test functions must satisfy sup <= 1",
                case.label, f.label
            )));
        }
    }
    Ok(())
}

/// Max over admissible pairs and test functions of
/// `|pairing| / |P1|^(1 + 1/u - 1/t)` — a lower estimate of `Off_u^t`,
/// monotone nondecreasing as pairs are added.
pub fn off_constant_estimate(
    b: &Symbol,
    k: &dyn Kernel,
    u: f64,
    t: f64,
    cases: &[OffPairCase],
) -> Result<OffDiagonalEstimate, OperatorError> {
    if !(u > 1.0 && u.is_finite() && t > 1.0 && t.is_finite()) {
        return Err(OperatorError::Domain(format!("exponents must lie in (1, inf): u={u}, t={t}")));
    }
    let mut best = 0.0f64;
    let mut witness = None;
    for case in cases {
        check_off_admissible(case)?;
        let norm = case.p1.volume().powf(1.0 + 1.0 / u - 1.0 / t);
        for tf in &case.testfns {
            let pairing = commutator_pairing(b, k, &tf.f1, &tf.f2)?;
            let val = pairing.abs() / norm;
            if val > best {
                best = val;
                witness = Some(OffWitness {
                    pair: case.label.clone(),
                    p1: case.p1,
                    p2: case.p2,
                    testfn: tf.label.clone(),
                });
            }
        }
    }
    Ok(OffDiagonalEstimate { u, t, value: best, witness, pairs: cases.len() })
}

/// Canonical admissible pairs for a sweep: each rectangle paired with its
/// translate by twice the side length per axis (so `dist = len` on every
/// axis), with sign-pattern test functions scaled to sup norm 1.
pub fn default_off_cases(
    b: &Symbol,
    rects: &[ZygmundRectangle],
    res: [usize; 3],
) -> Vec<OffPairCase> {
    rects
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let [l1, l2, l3] = r.side_lengths();
            let p2 = r.translated([2.0 * l1, 2.0 * l2, 2.0 * l3]);
            let one1 = GridFunction::indicator(r.to_box(), res);
            let one2 = GridFunction::indicator(p2.to_box(), res);
            // Extremal sign functions have sup <= 2; scale into the unit ball.
            let e1 = extremal_testfunction(b, r, res).scaled(0.5);
            let e2 = extremal_testfunction(b, &p2, res).scaled(0.5);
            let testfns = vec![
                OffTestPair { f1: one1.clone(), f2: one2.clone(), label: "1x1".into() },
                OffTestPair { f1: e1.clone(), f2: one2.clone(), label: "ext-x1".into() },
                OffTestPair { f1: one1, f2: e2.clone(), label: "1x-ext".into() },
                OffTestPair { f1: e1, f2: e2, label: "ext-x-ext".into() },
            ];
            OffPairCase { p1: *r, p2, label: format!("pair{i}"), testfns }
        })
        .collect()
}

/// Result of integrating the full kernel over `I1 x I1` in the first
/// variables, holding `x23, y23` fixed. The diagonal band `|x1 - y1| < h`
/// (one grid cell) is excluded and recorded.
#[derive(Debug, Clone, Serialize)]
pub struct PartialKernelValue {
    pub value: f64,
    pub band_width: f64,
    pub n: usize,
}

/// `K_{I1}(x23, y23)`: numerically integrates
/// `K((x1, x23), (y1, y23))` over `x1, y1 in I1`; valid for convolution-form
/// kernels where the sign-cancelling singularity at `x1 = y1` is integrable.
pub fn partial_kernel_i1(
    k: &dyn Kernel,
    i1: &Interval,
    x23: [f64; 2],
    y23: [f64; 2],
    n: usize,
) -> Result<PartialKernelValue, OperatorError> {
    if x23[0] == y23[0] || x23[1] == y23[1] {
        return Err(OperatorError::Degenerate("partial kernel needs x2 != y2 and x3 != y3"));
    }
    assert!(n > 0);
    let h = i1.length() / n as f64;
    let node = |i: usize| i1.lo() + (i as f64 + 0.5) * h;
    let value = quad_sum(n * n, |idx| {
        let i = idx / n;
        let j = idx % n;
        if i == j {
            return Ok(0.0);
        }
        let x = [node(i), x23[0], x23[1]];
        let y = [node(j), y23[0], y23[1]];
        Ok(k.evaluate(x, y)?)
    })? * h
        * h;
    Ok(PartialKernelValue { value, band_width: h, n })
}

/// Size envelope for the partial kernel:
/// `(|I1| / (|x2-y2| |x3-y3|)) * D_theta(|I1|, |x2-y2|, |x3-y3|)`.
pub fn partial_kernel_i1_bound(
    i1_len: f64,
    x23: [f64; 2],
    y23: [f64; 2],
    theta: f64,
) -> Result<f64, OperatorError> {
    let d2 = (x23[0] - y23[0]).abs();
    let d3 = (x23[1] - y23[1]).abs();
    if d2 == 0.0 || d3 == 0.0 {
        return Err(OperatorError::Degenerate("bound needs x2 != y2 and x3 != y3"));
    }
    Ok(i1_len / (d2 * d3) * d_theta(i1_len, d2, d3, theta)?)
}

/// `|K_{I1}| / bound` for one configuration.
pub fn partial_kernel_i1_ratio(
    k: &dyn Kernel,
    i1: &Interval,
    x23: [f64; 2],
    y23: [f64; 2],
    n: usize,
) -> Result<f64, OperatorError> {
    let pk = partial_kernel_i1(k, i1, x23, y23, n)?;
    let bound = partial_kernel_i1_bound(i1.length(), x23, y23, k.theta())?;
    Ok(pk.value.abs() / bound)
}

/// Pointwise majorant `integral of |b(z)-b(y)| |K(z,y)| |f(y)| dy` over the
/// support of `f`, at a separated point `z`.
pub fn domination_majorant(
    b: &Symbol,
    k: &dyn Kernel,
    f: &GridFunction,
    z: [f64; 3],
) -> Result<f64, OperatorError> {
    require_separated_point(f.support(), z)?;
    let bz = b.evaluate(z);
    let vol = f.cell_volume();
    let s = quad_sum(f.len(), |i| {
        let w = f.samples()[i];
        if w == 0.0 {
            return Ok(0.0);
        }
        let y = f.node(i);
        Ok(((bz - b.evaluate(y)) * k.evaluate(z, y)? * w).abs())
    })?;
    Ok(s * vol)
}

/// The commutator value `b(z) Tf(z) - T(bf)(z)` computed as the single
/// quadrature `integral of (b(z)-b(y)) K(z,y) f(y) dy`, so that its summands
/// match the majorant's term by term.
pub fn commutator_at(
    b: &Symbol,
    k: &dyn Kernel,
    f: &GridFunction,
    z: [f64; 3],
) -> Result<f64, OperatorError> {
    require_separated_point(f.support(), z)?;
    let bz = b.evaluate(z);
    let vol = f.cell_volume();
    let s = quad_sum(f.len(), |i| {
        let w = f.samples()[i];
        if w == 0.0 {
            return Ok(0.0);
        }
        let y = f.node(i);
        Ok((bz - b.evaluate(y)) * k.evaluate(z, y)? * w)
    })?;
    Ok(s * vol)
}

#[derive(Debug, Clone, Serialize)]
pub struct DominationCheck {
    pub commutator: f64,
    pub majorant: f64,
    pub holds: bool,
}

/// Asserts `|commutator at z| <= majorant at z`. Both sides are the same
/// quadrature tree over identical summands (one signed, one absolute), so
/// the inequality holds exactly in floating point.
pub fn check_domination(
    b: &Symbol,
    k: &dyn Kernel,
    f: &GridFunction,
    z: [f64; 3],
) -> Result<DominationCheck, OperatorError> {
    let commutator = commutator_at(b, k, f, z)?;
    let majorant = domination_majorant(b, k, f, z)?;
    Ok(DominationCheck { commutator, majorant, holds: commutator.abs() <= majorant })
}

/// A function sampled at midpoints of a one-dimensional grid.
#[derive(Debug, Clone)]
pub struct GridFunction1 {
    interval: Interval,
    samples: Vec<f64>,
}

impl GridFunction1 {
    pub fn from_fn<F: Fn(f64) -> f64>(interval: Interval, n: usize, f: F) -> Self {
        assert!(n > 0);
        let h = interval.length() / n as f64;
        let samples = (0..n).map(|i| f(interval.lo() + (i as f64 + 0.5) * h)).collect();
        GridFunction1 { interval, samples }
    }

    pub fn indicator(interval: Interval, n: usize) -> Self {
        Self::from_fn(interval, n, |_| 1.0)
    }

    pub fn interval(&self) -> &Interval {
        &self.interval
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn cell_width(&self) -> f64 {
        self.interval.length() / self.len() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.interval.lo() + (i as f64 + 0.5) * self.cell_width()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// A 1-d fractional integral value with its singular-cell bookkeeping.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RieszValue {
    pub value: f64,
    pub excluded_cells: usize,
    pub exclusion_width: f64,
}

/// One-dimensional Riesz potential `integral of |x-y|^(alpha-1) f(y) dy` by
/// midpoint quadrature, excluding cells whose midpoint lies within one cell
/// width of `x`.
pub fn riesz_potential_1d(alpha: f64, f: &GridFunction1, x: f64) -> Result<RieszValue, OperatorError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OperatorError::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let h = f.cell_width();
    let mut excluded = 0usize;
    let value = pairwise_sum_by(f.len(), |i| {
        let d = (x - f.node(i)).abs();
        if d < h {
            0.0
        } else {
            d.powf(alpha - 1.0) * f.samples()[i]
        }
    }) * h;
    for i in 0..f.len() {
        if (x - f.node(i)).abs() < h {
            excluded += 1;
        }
    }
    Ok(RieszValue { value, excluded_cells: excluded, exclusion_width: h })
}

/// Composition of the three axis-wise Riesz potentials applied to `|f|`,
/// evaluated at `x`. Separable: the weight of a cell is the product of the
/// per-axis kernels, each with one-cell diagonal exclusion.
pub fn riesz_majorant_3d(alpha: f64, f: &GridFunction, x: [f64; 3]) -> Result<f64, OperatorError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(OperatorError::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let res = f.res();
    let sup = f.support();
    let lens = sup.side_lengths();
    let mut weights: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for a in 0..3 {
        let n = res[a];
        let h = lens[a] / n as f64;
        let lo = sup.axis(a).lo();
        weights[a] = (0..n)
            .map(|i| {
                let d = (x[a] - (lo + (i as f64 + 0.5) * h)).abs();
                if d < h {
                    0.0
                } else {
                    d.powf(alpha - 1.0)
                }
            })
            .collect();
    }
    let vol = f.cell_volume();
    let n23 = res[1] * res[2];
    let s = pairwise_sum_by(f.len(), |idx| {
        let i = idx / n23;
        let j = (idx % n23) / res[2];
        let k = idx % res[2];
        let w = weights[0][i] * weights[1][j] * weights[2][k];
        if w == 0.0 {
            0.0
        } else {
            w * f.samples()[idx].abs()
        }
    });
    Ok(s * vol)
}

/// One point of the majorant-vs-Riesz comparison.
#[derive(Debug, Clone, Serialize)]
pub struct MajorantChainPoint {
    pub point: [f64; 3],
    pub majorant: f64,
    pub riesz: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MajorantChainCheck {
    pub alpha: f64,
    pub bnorm_estimate: f64,
    /// Largest `majorant / (bnorm * riesz)` over the sample points.
    pub c_recorded: f64,
    pub points: Vec<MajorantChainPoint>,
    pub all_finite: bool,
}

/// Checks `domination_majorant(b,k,f,x) <= C * bnorm * riesz_majorant_3d(|f|)`
/// at the given points, recording the smallest admissible `C`.
pub fn check_majorant_chain(
    b: &Symbol,
    k: &dyn Kernel,
    f: &GridFunction,
    points: &[[f64; 3]],
    alpha: f64,
    bnorm_estimate: f64,
) -> Result<MajorantChainCheck, OperatorError> {
    let mut out = Vec::with_capacity(points.len());
    let mut c = 0.0f64;
    let mut all_finite = true;
    for &x in points {
        let majorant = domination_majorant(b, k, f, x)?;
        let riesz = riesz_majorant_3d(alpha, f, x)?;
        let ratio = majorant / (bnorm_estimate * riesz);
        if !ratio.is_finite() {
            all_finite = false;
        }
        c = c.max(ratio);
        out.push(MajorantChainPoint { point: x, majorant, riesz, ratio });
    }
    Ok(MajorantChainCheck { alpha, bnorm_estimate, c_recorded: c, points: out, all_finite })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridFunction;
    use crate::geometry::{reflect, Box3, ZygmundRectangle};
    use crate::kernels::{NagelWainger, ZeroStub};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_cube() -> ZygmundRectangle {
        ZygmundRectangle::unit_cube()
    }

    fn far_targets(m: usize) -> Vec<[f64; 3]> {
        (0..m)
            .map(|i| {
                let t = i as f64 / m as f64;
                [2.0 + t, 3.0 + 0.5 * t, 8.0 + 2.0 * t]
            })
            .collect()
    }

    #[test]
    fn apply_t_zero_function() {
        let k = NagelWainger::default();
        let f = GridFunction::from_fn(Box3::unit_cube(), [4, 4, 4], |_| 0.0);
        let vals = apply_t(&k, &f, &far_targets(5)).unwrap();
        assert!(vals.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_t_rejects_touching_target() {
        let k = NagelWainger::default();
        let f = GridFunction::indicator(Box3::unit_cube(), [4, 4, 4]);
        // Separated in axes 1,3 but inside in axis 2.
        let err = apply_t(&k, &f, &[[2.0, 0.5, 2.0]]).unwrap_err();
        assert!(matches!(err, OperatorError::Separation(_)));
    }

    #[test]
    fn apply_t_linearity() {
        let k = NagelWainger::default();
        let res = [5, 5, 5];
        let f = GridFunction::from_fn(Box3::unit_cube(), res, |p| (3.0 * p[0]).sin());
        let g = GridFunction::from_fn(Box3::unit_cube(), res, |p| p[2] * p[2]);
        let combo = f.zip_with(&g, |a, b| 2.0 * a - 0.5 * b);
        let targets = far_targets(4);
        let tf = apply_t(&k, &f, &targets).unwrap();
        let tg = apply_t(&k, &g, &targets).unwrap();
        let tc = apply_t(&k, &combo, &targets).unwrap();
        for i in 0..targets.len() {
            assert_relative_eq!(tc[i], 2.0 * tf[i] - 0.5 * tg[i], max_relative = 1e-11);
        }
    }

    #[test]
    fn adjoint_identity_on_separated_supports() {
        // <Tf, g> = <f, T*g> is Fubini on finite sums.
        let k = NagelWainger::default();
        let res = [6, 6, 6];
        let fbox = Box3::unit_cube();
        let gbox = ZygmundRectangle::unit_cube().translated([3.0, 3.0, 9.0]).to_box();
        let f = GridFunction::from_fn(fbox, res, |p| (p[0] + p[1]).cos());
        let g = GridFunction::from_fn(gbox, res, |p| p[2] - 9.0);
        let tf_at_g: Vec<[f64; 3]> = (0..g.len()).map(|i| g.node(i)).collect();
        let tg_at_f: Vec<[f64; 3]> = (0..f.len()).map(|i| f.node(i)).collect();
        let tf = apply_t(&k, &f, &tf_at_g).unwrap();
        let tsg = apply_t_star(&k, &g, &tg_at_f).unwrap();
        let lhs = pairwise_sum_by(g.len(), |i| tf[i] * g.samples()[i]) * g.cell_volume();
        let rhs = pairwise_sum_by(f.len(), |i| tsg[i] * f.samples()[i]) * f.cell_volume();
        let scale = f.sup_norm() * g.sup_norm();
        assert!((lhs - rhs).abs() <= 1e-10 * scale, "lhs={lhs} rhs={rhs}");
    }

    #[test]
    fn apply_t_reflected_bracketing() {
        // |T 1_R| on the reflected rectangle is ~ 1/A_eff with small spread.
        let k = NagelWainger::default();
        let r = unit_cube();
        let amplitude = 4096.0;
        let pair = reflect(&r, &k, amplitude).unwrap();
        let f = GridFunction::indicator(r.to_box(), [8, 8, 8]);
        let probe = GridFunction::indicator(pair.reflected.to_box(), [4, 4, 4]);
        let targets: Vec<[f64; 3]> = (0..probe.len()).map(|i| probe.node(i)).collect();
        let vals = apply_t(&k, &f, &targets).unwrap();
        let a_eff = pair.effective_amplitude();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0f64, |m, v| m.max(v));
        assert!(lo > 0.0);
        assert!(hi * a_eff < 1.5, "upper {}", hi * a_eff);
        assert!(lo * a_eff > 0.6, "lower {}", lo * a_eff);
    }

    #[test]
    fn commutator_pairing_constant_symbol_vanishes() {
        let k = NagelWainger::default();
        let b = Symbol::constant(7.5);
        let r = unit_cube();
        let p2 = r.translated([2.0, 2.0, 4.0]);
        let phi = GridFunction::indicator(r.to_box(), [4, 4, 4]);
        let psi = GridFunction::indicator(p2.to_box(), [4, 4, 4]);
        let v = commutator_pairing(&b, &k, &phi, &psi).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn commutator_pairing_antisymmetry() {
        // Swapping roles with the transposed kernel negates the pairing,
        // because b(x)-b(y) is antisymmetric. The transpose of the
        // Nagel–Wainger kernel is itself (even kernel), so swapping phi/psi
        // directly exhibits the sign flip.
        let k = NagelWainger::default();
        let b = Symbol::linear_x3();
        let r = unit_cube();
        let p2 = r.translated([2.0, 2.0, 4.0]);
        let phi = GridFunction::indicator(r.to_box(), [4, 4, 4]);
        let psi = GridFunction::indicator(p2.to_box(), [4, 4, 4]);
        let a = commutator_pairing(&b, &k, &phi, &psi).unwrap();
        let bb = commutator_pairing(&b, &k, &psi, &phi).unwrap();
        assert_relative_eq!(a, -bb, max_relative = 1e-11);
    }

    #[test]
    fn commutator_pairing_stable_under_refinement() {
        let k = NagelWainger::default();
        let b = Symbol::linear_x3();
        let r = unit_cube();
        let pair = reflect(&r, &k, 4096.0).unwrap();
        let coarse = {
            let phi = GridFunction::indicator(r.to_box(), [8, 8, 8]);
            let psi = GridFunction::indicator(pair.reflected.to_box(), [8, 8, 8]);
            commutator_pairing(&b, &k, &phi, &psi).unwrap()
        };
        let fine = {
            let phi = GridFunction::indicator(r.to_box(), [16, 16, 16]);
            let psi = GridFunction::indicator(pair.reflected.to_box(), [16, 16, 16]);
            commutator_pairing(&b, &k, &phi, &psi).unwrap()
        };
        assert!(coarse != 0.0);
        assert!((coarse - fine).abs() <= 0.02 * fine.abs(), "coarse={coarse} fine={fine}");
    }

    #[test]
    fn off_estimate_constant_symbol_zero() {
        let k = NagelWainger::default();
        let b = Symbol::constant(1.0);
        let cases = default_off_cases(&b, &[unit_cube()], [4, 4, 4]);
        let est = off_constant_estimate(&b, &k, 2.0, 2.0, &cases).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn off_estimate_monotone_in_pairs() {
        let k = NagelWainger::default();
        let b = Symbol::linear_x3();
        let rects = crate::geometry::enumerate_zygmund(&Box3::unit_cube(), 0, 1);
        let cases = default_off_cases(&b, &rects[..4], [4, 4, 4]);
        let small = off_constant_estimate(&b, &k, 2.0, 2.0, &cases[..2]).unwrap();
        let large = off_constant_estimate(&b, &k, 2.0, 2.0, &cases).unwrap();
        assert!(large.value >= small.value);
    }

    #[test]
    fn off_estimate_rejects_malformed_pair() {
        let k = NagelWainger::default();
        let b = Symbol::linear_x3();
        let r = unit_cube();
        // Too far: 5 side lengths away.
        let p2 = r.translated([6.0, 6.0, 36.0]);
        let case = OffPairCase {
            p1: r,
            p2,
            label: "bad".into(),
            testfns: vec![OffTestPair {
                f1: GridFunction::indicator(r.to_box(), [2, 2, 2]),
                f2: GridFunction::indicator(p2.to_box(), [2, 2, 2]),
                label: "1x1".into(),
            }],
        };
        let err = off_constant_estimate(&b, &k, 2.0, 2.0, &[case]).unwrap_err();
        assert!(matches!(err, OperatorError::Admissibility(_)));
    }

    #[test]
    fn off_estimate_x3_stable_under_refinement() {
        let k = NagelWainger::default();
        let b = Symbol::linear_x3();
        let coarse_cases = default_off_cases(&b, &[unit_cube()], [8, 8, 8]);
        let fine_cases = default_off_cases(&b, &[unit_cube()], [16, 16, 16]);
        let coarse = off_constant_estimate(&b, &k, 2.0, 2.0, &coarse_cases).unwrap();
        let fine = off_constant_estimate(&b, &k, 2.0, 2.0, &fine_cases).unwrap();
        assert!(coarse.value > 0.0);
        assert!(
            (coarse.value - fine.value).abs() <= 0.05 * fine.value,
            "coarse={} fine={}",
            coarse.value,
            fine.value
        );
    }

    #[test]
    fn partial_kernel_rejects_degenerate() {
        let k = NagelWainger::default();
        let i1 = Interval::new(0.0, 1.0).unwrap();
        let err = partial_kernel_i1(&k, &i1, [1.0, 2.0], [1.0, 3.0], 8).unwrap_err();
        assert!(matches!(err, OperatorError::Degenerate(_)));
    }

    #[test]
    fn partial_kernel_parity_cancellation() {
        // The Nagel–Wainger kernel is odd in z1 for fixed z2 > 0, so the
        // symmetric double integral over I1 x I1 cancels.
        let k = NagelWainger::default();
        let i1 = Interval::new(-1.0, 1.0).unwrap();
        let pk = partial_kernel_i1(&k, &i1, [2.0, 5.0], [0.5, 4.0], 16).unwrap();
        assert!(pk.value.abs() <= 1e-14, "value {}", pk.value);
    }

    #[test]
    fn partial_kernel_small_interval_scaling() {
        // |I1| -> 0: K_I1 ~ |I1|^2 (1 - 1/n) K evaluated at the centers.
        let k = NagelWainger::default();
        let n = 32;
        for len in [1e-2, 1e-3] {
            let i1 = Interval::new(5.0, 5.0 + len).unwrap();
            let pk = partial_kernel_i1(&k, &i1, [2.0, 7.0], [0.5, 4.0], n).unwrap();
            let kv = k.evaluate([5.0 + len / 2.0, 2.0, 7.0], [5.0 + len / 2.0 + 1e-30, 0.5, 4.0]).unwrap();
            let expect = len * len * (1.0 - 1.0 / n as f64) * kv;
            assert_relative_eq!(pk.value, expect, max_relative = 1e-3);
        }
    }

    #[test]
    fn partial_kernel_size_ratio_bounded() {
        // Sweep of separated configurations; ratio recorded and finite.
        let k = NagelWainger::default();
        let mut worst = 0.0f64;
        for e2 in [-2, 0, 2] {
            for e3 in [-3, 0, 3] {
                let d2 = (e2 as f64).exp2();
                let d3 = (e3 as f64).exp2();
                let i1 = Interval::new(0.0, 1.0).unwrap();
                let r = partial_kernel_i1_ratio(&k, &i1, [1.0 + d2, 2.0 + d3], [1.0, 2.0], 24)
                    .unwrap();
                worst = worst.max(r);
            }
        }
        assert!(worst.is_finite());
        assert!(worst <= 4.0, "worst ratio {worst}");
    }

    #[test]
    fn domination_constant_symbol() {
        let k = NagelWainger::default();
        let b = Symbol::constant(2.0);
        let f = GridFunction::indicator(Box3::unit_cube(), [4, 4, 4]);
        let m = domination_majorant(&b, &k, &f, [3.0, 3.0, 9.0]).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn domination_holds_exactly() {
        let k = NagelWainger::default();
        let f = GridFunction::from_fn(Box3::unit_cube(), [5, 5, 5], |p| (9.0 * p[0]).sin());
        for b in [Symbol::linear_x3(), Symbol::separable(), Symbol::holder_x3(0.5)] {
            for z in far_targets(10) {
                let chk = check_domination(&b, &k, &f, z).unwrap();
                assert!(chk.holds, "b={}, z={:?}", b.name(), z);
            }
        }
    }

    #[test]
    fn domination_strict_for_reflected_point() {
        // With a sign-varying integrand the triangle inequality is strict;
        // for single-signed summands it degenerates to equality.
        let k = NagelWainger::default();
        let b = Symbol::linear_x3();
        let r = unit_cube();
        let pair = reflect(&r, &k, 4096.0).unwrap();
        let f = extremal_testfunction(&b, &r, [6, 6, 6]);
        let z = pair.reflected.center();
        let chk = check_domination(&b, &k, &f, z).unwrap();
        assert!(chk.holds);
        assert!(chk.commutator.abs() < chk.majorant);

        let plain = GridFunction::indicator(r.to_box(), [6, 6, 6]);
        let chk2 = check_domination(&b, &k, &plain, z).unwrap();
        assert!(chk2.holds);
    }

    #[test]
    fn commutator_single_sum_matches_operator_form() {
        let k = NagelWainger::default();
        let b = Symbol::separable();
        let f = GridFunction::from_fn(Box3::unit_cube(), [6, 6, 6], |p| p[0] + p[2]);
        let z = [2.5, 3.5, 9.0];
        let direct = commutator_at(&b, &k, &f, z).unwrap();
        let bf = f.map_with_node(|v, p| v * b.evaluate(p));
        let tf = apply_t(&k, &f, &[z]).unwrap()[0];
        let tbf = apply_t(&k, &bf, &[z]).unwrap()[0];
        let operator_form = b.evaluate(z) * tf - tbf;
        assert_relative_eq!(direct, operator_form, max_relative = 1e-10);
    }

    #[test]
    fn riesz_1d_zero_function() {
        let f = GridFunction1::from_fn(Interval::new(0.0, 1.0).unwrap(), 64, |_| 0.0);
        let v = riesz_potential_1d(0.5, &f, 0.3).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn riesz_1d_closed_form() {
        // integral over [0,1] of (2-y)^(-1/2) dy = 2(sqrt(2)-1).
        let f = GridFunction1::indicator(Interval::new(0.0, 1.0).unwrap(), 4096);
        let v = riesz_potential_1d(0.5, &f, 2.0).unwrap();
        let expect = 2.0 * (2.0f64.sqrt() - 1.0);
        assert!((v.value - expect).abs() <= 1e-3, "got {}", v.value);
        assert_eq!(v.excluded_cells, 0);
    }

    #[test]
    fn riesz_1d_dilation_law() {
        // I_alpha f_lambda (x) = lambda^-alpha (I_alpha f)(lambda x) for
        // f_lambda(y) = f(lambda y), checked at lambda = 2 within 1%.
        let alpha = 0.4;
        let lambda = 2.0f64;
        let f = GridFunction1::indicator(Interval::new(0.0, 1.0).unwrap(), 2048);
        let f_scaled = GridFunction1::indicator(Interval::new(0.0, 0.5).unwrap(), 1024);
        let x = 2.0;
        let lhs = riesz_potential_1d(alpha, &f_scaled, x).unwrap().value;
        let rhs = lambda.powf(-alpha) * riesz_potential_1d(alpha, &f, lambda * x).unwrap().value;
        assert!((lhs - rhs).abs() <= 0.01 * rhs.abs(), "lhs={lhs} rhs={rhs}");
    }

    #[test]
    fn riesz_3d_zero_and_tensor_product() {
        let zero = GridFunction::from_fn(Box3::unit_cube(), [8, 8, 8], |_| 0.0);
        assert_eq!(riesz_majorant_3d(0.25, &zero, [2.0, 2.0, 2.0]).unwrap(), 0.0);

        // Tensor f = f1 x f2 x f3 at a separated point: 3d value equals the
        // product of the 1d values.
        let alpha = 0.25;
        let n = 16;
        let f1 = |t: f64| 1.0 + t;
        let f2 = |t: f64| (2.0 * t).cos() + 2.0;
        let f3 = |t: f64| t * t + 0.5;
        let f = GridFunction::from_fn(Box3::unit_cube(), [n, n, n], |p| {
            f1(p[0]) * f2(p[1]) * f3(p[2])
        });
        let x = [3.0, 4.0, 5.0];
        let v3 = riesz_majorant_3d(alpha, &f, x).unwrap();
        let u = Interval::new(0.0, 1.0).unwrap();
        let g1 = riesz_potential_1d(alpha, &GridFunction1::from_fn(u, n, f1), x[0]).unwrap();
        let g2 = riesz_potential_1d(alpha, &GridFunction1::from_fn(u, n, f2), x[1]).unwrap();
        let g3 = riesz_potential_1d(alpha, &GridFunction1::from_fn(u, n, f3), x[2]).unwrap();
        assert_relative_eq!(v3, g1.value * g2.value * g3.value, max_relative = 1e-10);
    }

    #[test]
    fn zero_kernel_everything_vanishes() {
        let k = ZeroStub::default();
        let f = GridFunction::indicator(Box3::unit_cube(), [4, 4, 4]);
        let vals = apply_t_star(&k, &f, &far_targets(3)).unwrap();
        assert!(vals.iter().all(|&v| v == 0.0));
    }

    proptest! {
        /// Pointwise bound used for the Riesz majorant chain, branch
        /// t3 <= t1 t2: t3^(2a) / (t1^(1+h) t2^(1+h) t3^(1-h)) <= prod t_i^-(1-a).
        #[test]
        fn elementary_inequality_low_branch(
            t1 in 1e-3f64..1e3, t2 in 1e-3f64..1e3, frac in 0.01f64..1.0,
            theta in 0.05f64..1.0, alpha in 0.01f64..0.99,
        ) {
            let t3 = frac * t1 * t2; // forces t3 <= t1 t2
            let lhs = t3.powf(2.0 * alpha)
                / (t1.powf(1.0 + theta) * t2.powf(1.0 + theta) * t3.powf(1.0 - theta));
            let rhs = (t1 * t2 * t3).powf(-(1.0 - alpha));
            prop_assert!(lhs <= rhs * (1.0 + 1e-10));
        }

        /// Branch t1 t2 <= t3 requires alpha <= theta.
        #[test]
        fn elementary_inequality_high_branch(
            t1 in 1e-3f64..1e3, t2 in 1e-3f64..1e3, mult in 1.0f64..100.0,
            theta in 0.05f64..1.0, frac in 0.0f64..1.0,
        ) {
            let alpha = frac * theta; // forces alpha <= theta
            if alpha <= 0.0 { return Ok(()); }
            let t3 = mult * t1 * t2; // forces t1 t2 <= t3
            let lhs = t3.powf(2.0 * alpha)
                / (t1.powf(1.0 - theta) * t2.powf(1.0 - theta) * t3.powf(1.0 + theta));
            let rhs = (t1 * t2 * t3).powf(-(1.0 - alpha));
            prop_assert!(lhs <= rhs * (1.0 + 1e-10));
        }
    }
}
