//! Compactness-necessity machinery: selection of pairwise disjoint
//! subsequences from shrinking rectangle families, shrinking-scale
//! oscillation probes, and the constancy-forcing rectangle chains.
//!
//! A symbol obstructs compactness when its normalized oscillations stay
//! bounded away from zero along rectangles whose side length on some axis
//! tends to zero, with each oscillation certified through commutator
//! pairings and the witnessing rectangles (or their reflections) admitting
//! a pairwise disjoint subsequence.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::awf::{oscillation_lower_bound, AwfError, OscillationCertificate};
use crate::fields::{GridFunction, Symbol};
use crate::geometry::{
    enumerate_zygmund_jk, reflect, Box3, GeometryError, Interval, ZygmundRectangle,
};
use crate::kernels::Kernel;
use crate::norms::osc_value;

/// Greedy separation factor from the selection argument: the next interval
/// must satisfy `dist(I, x) + len(I) < dist(x, chosen) / 10`.
pub const SELECTION_SEPARATION_FACTOR: f64 = 10.0;

/// Default obstruction threshold for probes.
pub const PROBE_THRESHOLD_DEFAULT: f64 = 1e-3;

#[derive(Debug, Clone)]
pub enum CompactError {
    /// The input sequence does not shrink on the requested axis and the
    /// disjoint-greedy pass alone could not reach the requested count.
    SelectionFailure(String),
    /// A chain rectangle left the symbol's domain.
    Domain(String),
    Geometry(GeometryError),
    Awf(Box<AwfError>),
}

impl fmt::Display for CompactError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompactError::SelectionFailure(msg) => write!(f, "selection failure: {msg}"),
            CompactError::Domain(msg) => write!(f, "domain error: {msg}"),
            CompactError::Geometry(e) => write!(f, "{e}"),
            CompactError::Awf(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CompactError {}

impl From<GeometryError> for CompactError {
    fn from(e: GeometryError) -> Self {
        CompactError::Geometry(e)
    }
}

impl From<AwfError> for CompactError {
    fn from(e: AwfError) -> Self {
        CompactError::Awf(Box::new(e))
    }
}

/// Which family the selected indices refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WhichFamily {
    Base,
    Reflected,
}

/// Which branch of the selection argument produced the subsequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SelectionBranch {
    /// The direct disjoint greedy succeeded (escaping or already disjoint
    /// families).
    Escape,
    /// Nested dyadic refinement located an accumulation point first.
    Accumulation,
}

/// A pairwise disjoint subsequence of the input family.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    /// Strictly increasing indices into the input sequence.
    pub indices: Vec<usize>,
    pub which: WhichFamily,
    /// Axis the selection separated on (0, 1 or 2).
    pub axis: usize,
    pub branch: SelectionBranch,
    /// How many indices the verbatim `/10` greedy produced before the
    /// exhaustive disjoint completion.
    pub verbatim_count: usize,
}

fn intervals_on_axis(rects: &[ZygmundRectangle], axis: usize) -> Vec<Interval> {
    rects.iter().map(|r| *r.axis(axis)).collect()
}

/// Index-order greedy accepting any interval disjoint from all accepted.
fn disjoint_greedy(ivs: &[Interval]) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for (i, iv) in ivs.iter().enumerate() {
        if chosen.iter().all(|&c| ivs[c].disjoint(iv)) {
            chosen.push(i);
        }
    }
    chosen
}

/// Locate an accumulation point by nested dyadic refinement: start from a
/// dyadic interval centered at the origin containing every input, then
/// repeatedly descend into the half meeting the most intervals.
fn accumulation_point(ivs: &[Interval]) -> f64 {
    let mut bound = 1.0f64;
    for iv in ivs {
        bound = bound.max(iv.lo().abs()).max(iv.hi().abs());
    }
    let mut lo = -bound.exp2().max(2.0 * bound); // power-of-two envelope
    let mut hi = -lo;
    let min_len = ivs.iter().map(|iv| iv.length()).fold(f64::INFINITY, f64::min);
    let mut steps = 0usize;
    loop {
        let mid = 0.5 * (lo + hi);
        let count = |a: f64, b: f64| {
            ivs.iter().filter(|iv| iv.lo() <= b && a <= iv.hi()).count()
        };
        let left = count(lo, mid);
        let right = count(mid, hi);
        if left.max(right) < 2 || hi - lo < 0.25 * min_len || steps > 4000 {
            return mid;
        }
        if left >= right {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
}

/// The verbatim greedy from the selection argument over `candidates` (the
/// indices whose interval misses `x`), followed by an exhaustive disjoint
/// completion over the same candidate set. Returns `(indices, verbatim)`.
fn separation_greedy(ivs: &[Interval], x: f64, candidates: &[usize]) -> (Vec<usize>, usize) {
    let mut chosen: Vec<usize> = Vec::new();
    for &i in candidates {
        let iv = &ivs[i];
        if chosen.is_empty() {
            chosen.push(i);
            continue;
        }
        if chosen.last().copied().unwrap_or(0) >= i {
            continue;
        }
        let dist_to_chosen =
            chosen.iter().map(|&c| ivs[c].dist_to_point(x)).fold(f64::INFINITY, f64::min);
        if iv.dist_to_point(x) + iv.length() < dist_to_chosen / SELECTION_SEPARATION_FACTOR {
            chosen.push(i);
        }
    }
    let verbatim = chosen.len();
    // Exhaustive completion: the `/10` rule is sufficient for disjointness
    // but far from necessary; accept anything verifiably disjoint.
    for &i in candidates {
        if chosen.contains(&i) {
            continue;
        }
        if chosen.iter().all(|&c| ivs[c].disjoint(&ivs[i])) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    (chosen, verbatim)
}

fn assert_pairwise_disjoint(ivs: &[Interval], indices: &[usize]) -> bool {
    for (a, &i) in indices.iter().enumerate() {
        for &j in indices.iter().skip(a + 1) {
            if !ivs[i].disjoint(&ivs[j]) {
                return false;
            }
        }
    }
    true
}

/// Select a pairwise disjoint subsequence of the rectangles (or of their
/// reflections) along the given axis.
///
/// The direct disjoint greedy runs first and succeeds on escaping or
/// already-disjoint families without any shrinking requirement. Otherwise
/// the sequence must shrink on the axis (checked: last scale under half the
/// first); a nested dyadic refinement locates an accumulation point, the
/// intervals missing it are selected by the `/10` separation greedy plus an
/// exhaustive disjoint completion, and when too few intervals miss the
/// point the reflected family is used instead.
pub fn select_disjoint(
    rects: &[ZygmundRectangle],
    k: &dyn Kernel,
    amplitude: f64,
    axis: usize,
    requested: usize,
) -> Result<SelectionResult, CompactError> {
    assert!(axis < 3, "axis index out of range");
    if rects.is_empty() {
        return Err(CompactError::SelectionFailure("empty input".into()));
    }
    let want = requested.min(rects.len()).max(1);
    let base = intervals_on_axis(rects, axis);

    let greedy = disjoint_greedy(&base);
    if greedy.len() >= want {
        debug_assert!(assert_pairwise_disjoint(&base, &greedy));
        return Ok(SelectionResult {
            verbatim_count: greedy.len(),
            indices: greedy,
            which: WhichFamily::Base,
            axis,
            branch: SelectionBranch::Escape,
        });
    }

    // The accumulation machinery needs shrinking scales.
    let first = base[0].length();
    let last = base[base.len() - 1].length();
    if !(last < first / 2.0) {
        return Err(CompactError::SelectionFailure(format!(
            "axis {axis} scales do not shrink (first {first}, last {last}) \
             and only {} disjoint intervals were found of {want} requested",
            greedy.len()
        )));
    }

    let x = accumulation_point(&base);
    let missing: Vec<usize> =
        (0..base.len()).filter(|&i| !(base[i].lo() <= x && x <= base[i].hi())).collect();
    let (base_sel, base_verbatim) = separation_greedy(&base, x, &missing);
    if base_sel.len() >= want {
        debug_assert!(assert_pairwise_disjoint(&base, &base_sel));
        return Ok(SelectionResult {
            indices: base_sel,
            which: WhichFamily::Base,
            axis,
            branch: SelectionBranch::Accumulation,
            verbatim_count: base_verbatim,
        });
    }

    // Too few intervals miss the accumulation point; the reflected family
    // must miss it instead.
    let reflected: Vec<Interval> = rects
        .iter()
        .map(|r| reflect(r, k, amplitude).map(|p| *p.reflected.axis(axis)))
        .collect::<Result<_, _>>()?;
    let candidates: Vec<usize> = (0..reflected.len())
        .filter(|&i| !(reflected[i].lo() <= x && x <= reflected[i].hi()))
        .collect();
    let (refl_sel, refl_verbatim) = separation_greedy(&reflected, x, &candidates);
    let result = if refl_sel.len() >= base_sel.len() {
        SelectionResult {
            indices: refl_sel,
            which: WhichFamily::Reflected,
            axis,
            branch: SelectionBranch::Accumulation,
            verbatim_count: refl_verbatim,
        }
    } else {
        SelectionResult {
            indices: base_sel,
            which: WhichFamily::Base,
            axis,
            branch: SelectionBranch::Accumulation,
            verbatim_count: base_verbatim,
        }
    };
    let family = match result.which {
        WhichFamily::Base => &base,
        WhichFamily::Reflected => &reflected,
    };
    debug_assert!(assert_pairwise_disjoint(family, &result.indices));
    Ok(result)
}

/// Exact disjointness audit of a selection against its rectangles.
pub fn verify_selection(
    rects: &[ZygmundRectangle],
    k: &dyn Kernel,
    amplitude: f64,
    sel: &SelectionResult,
) -> Result<bool, CompactError> {
    let ivs = match sel.which {
        WhichFamily::Base => intervals_on_axis(rects, sel.axis),
        WhichFamily::Reflected => rects
            .iter()
            .map(|r| reflect(r, k, amplitude).map(|p| *p.reflected.axis(sel.axis)))
            .collect::<Result<_, _>>()?,
    };
    let increasing = sel.indices.windows(2).all(|w| w[0] < w[1]);
    Ok(increasing && assert_pairwise_disjoint(&ivs, &sel.indices))
}

/// Per-scale maxima of `O_alpha` along rectangles whose side on one axis
/// shrinks through a dyadic ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub axis: usize,
    pub alpha: f64,
    /// Shrinking side lengths, one per ladder depth.
    pub scales: Vec<f64>,
    /// Max `O_alpha` over the per-scale family.
    pub o_alpha_values: Vec<f64>,
    /// Rectangle attaining each per-scale max.
    pub witnesses: Vec<ZygmundRectangle>,
    /// `min` of the per-scale maxima; bounded away from zero along a
    /// shrinking ladder this witnesses a compactness obstruction.
    pub inf_witness: f64,
}

/// For each depth `m` in the ladder, search the dyadic rectangles with side
/// `2^-m` on `axis` (co-depths up to `co_depth_max`) for the largest
/// `O_alpha(b, R)`.
pub fn shrinking_probe(
    b: &Symbol,
    alpha: f64,
    axis: usize,
    scale_depths: &[u32],
    co_depth_max: u32,
    domain: &Box3,
    res: [usize; 3],
) -> ProbeReport {
    assert!(axis < 3, "axis index out of range");
    assert!(
        scale_depths.windows(2).all(|w| w[0] < w[1]),
        "scale ladder must be strictly increasing in depth"
    );
    let mut scales = Vec::with_capacity(scale_depths.len());
    let mut values = Vec::with_capacity(scale_depths.len());
    let mut witnesses = Vec::with_capacity(scale_depths.len());
    for &m in scale_depths {
        let mut family: Vec<ZygmundRectangle> = Vec::new();
        match axis {
            0 => {
                for k in 0..=co_depth_max {
                    family.extend(enumerate_zygmund_jk(domain, m, k));
                }
            }
            1 => {
                for j in 0..=co_depth_max {
                    family.extend(enumerate_zygmund_jk(domain, j, m));
                }
            }
            _ => {
                for j in 0..=m {
                    family.extend(enumerate_zygmund_jk(domain, j, m - j));
                }
            }
        }
        let scored: Vec<f64> = family
            .par_iter()
            .map(|r| osc_value(b, r, res) / r.volume().powf(alpha))
            .collect();
        let mut best = 0.0f64;
        let mut arg = None;
        for (i, &v) in scored.iter().enumerate() {
            if v > best {
                best = v;
                arg = Some(i);
            }
        }
        scales.push((-(m as f64)).exp2());
        values.push(best);
        // Fall back to the first family member when the max is zero
        // (constant symbols) so downstream selection still has a sequence.
        witnesses.push(arg.map(|i| family[i]).unwrap_or_else(|| {
            family.first().copied().unwrap_or_else(ZygmundRectangle::unit_cube)
        }));
    }
    let inf_witness = values.iter().cloned().fold(f64::INFINITY, f64::min);
    ProbeReport {
        axis,
        alpha,
        scales,
        o_alpha_values: values,
        witnesses,
        inf_witness: if inf_witness.is_finite() { inf_witness } else { 0.0 },
    }
}

/// One step of the eccentric-rectangle chain `R_j = 2^-j I1 x 2^j I2 x I3`.
#[derive(Debug, Clone, Serialize)]
pub struct RjStep {
    pub j: u32,
    pub rectangle: ZygmundRectangle,
    pub osc: f64,
    /// `<|b - c|>_(R_j) <= <|b - c|>_(R_(j+1))` for each sampled constant.
    pub mean_monotone: Vec<bool>,
    /// `<|b - <b>_R|>_R <= 2 <|b - <b>_(R_j)|>_(R_j)`.
    pub closing_inequality: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RjChainReport {
    pub steps: Vec<RjStep>,
    /// Whether the monotonicity hypothesis (independence of `x1, x2`)
    /// applies to this symbol; failures are recorded either way.
    pub hypothesis_applies: bool,
}

/// Squeeze the first axis and expand the second: `osc(b, R_j)` forces the
/// oscillation of the base rectangle once per-axis oscillations vanish.
/// Checks, for sampled constants `c`, the mean-deviation monotonicity in
/// `j` and the closing comparison against the base rectangle.
pub fn rj_chain(
    b: &Symbol,
    r: &ZygmundRectangle,
    j_max: u32,
    res: [usize; 3],
) -> Result<RjChainReport, CompactError> {
    let rect_at = |j: u32| -> Result<ZygmundRectangle, CompactError> {
        let s = (-(j as f64)).exp2();
        let rj = ZygmundRectangle::new(
            r.i1().rescaled_about_center(s),
            r.i2().rescaled_about_center(1.0 / s),
            *r.i3(),
        )
        .map_err(CompactError::Geometry)?;
        if let Some(domain) = b.domain() {
            if !rj.to_box().subset_of(domain) {
                return Err(CompactError::Domain(format!(
                    "R_{j} leaves the symbol domain {domain:?}"
                )));
            }
        }
        Ok(rj)
    };

    let sample_constants = |g: &GridFunction| -> Vec<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in g.samples() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        vec![g.mean(), 0.5 * (lo + hi), lo, hi]
    };

    let base_grid = GridFunction::sample_symbol(b, r, res);
    let base_mean = base_grid.mean();
    let base_dev = base_grid.map(|v| (v - base_mean).abs()).mean();

    let mut steps = Vec::with_capacity(j_max as usize + 1);
    for j in 0..=j_max {
        let rj = rect_at(j)?;
        let gj = GridFunction::sample_symbol(b, &rj, res);
        let o = crate::awf::grid_osc(&gj);
        let mut mean_monotone = Vec::new();
        if j < j_max {
            let rnext = rect_at(j + 1)?;
            let gnext = GridFunction::sample_symbol(b, &rnext, res);
            for c in sample_constants(&gj) {
                let here = gj.map(|v| (v - c).abs()).mean();
                let next = gnext.map(|v| (v - c).abs()).mean();
                let tol = 1e-12 * (1.0 + here.abs());
                mean_monotone.push(here <= next + tol);
            }
        }
        let mj = gj.mean();
        let devj = gj.map(|v| (v - mj).abs()).mean();
        let closing = base_dev <= 2.0 * devj + 1e-12 * (1.0 + base_dev);
        steps.push(RjStep {
            j,
            rectangle: rj,
            osc: o,
            mean_monotone,
            closing_inequality: closing,
        });
    }
    Ok(RjChainReport { steps, hypothesis_applies: b.x12_independent() })
}

/// Everything gathered about one axis of the compactness probe.
#[derive(Debug, Clone, Serialize)]
pub struct AxisDossier {
    pub probe: ProbeReport,
    /// Certificates for the per-scale witnesses (present when the probe
    /// cleared the threshold).
    pub certificates: Vec<OscillationCertificate>,
    pub selection: Option<SelectionResult>,
    pub obstructed: bool,
}

/// The combined compactness report: shrinking probes on all three axes,
/// oscillation certificates on their witnesses, and disjoint subsequences.
#[derive(Debug, Clone, Serialize)]
pub struct CompactnessDossier {
    pub symbol: String,
    pub alpha: f64,
    pub threshold: f64,
    pub axes: [AxisDossier; 3],
    /// Some axis kept `O_alpha >= threshold` with valid certificates and a
    /// disjoint (or reflected-disjoint) witness subsequence.
    pub obstruction_witnessed: bool,
}

/// Run the three-axis probe and, where the oscillations persist above the
/// threshold, certify the witnesses and select a disjoint subsequence.
#[allow(clippy::too_many_arguments)]
pub fn compactness_dossier(
    b: &Symbol,
    alpha: f64,
    k: &dyn Kernel,
    amplitude: f64,
    domain: &Box3,
    scale_depths: &[u32],
    co_depth_max: u32,
    res: [usize; 3],
    threshold: f64,
) -> Result<CompactnessDossier, CompactError> {
    let mut axes = Vec::with_capacity(3);
    for axis in 0..3 {
        let probe = shrinking_probe(b, alpha, axis, scale_depths, co_depth_max, domain, res);
        if probe.inf_witness >= threshold {
            let mut certificates = Vec::with_capacity(probe.witnesses.len());
            for w in &probe.witnesses {
                certificates.push(oscillation_lower_bound(b, k, w, amplitude, res)?);
            }
            let selection = select_disjoint(&probe.witnesses, k, amplitude, axis, probe.witnesses.len())?;
            let obstructed = certificates.iter().all(|c| c.valid) && selection.indices.len() >= 2;
            axes.push(AxisDossier {
                probe,
                certificates,
                selection: Some(selection),
                obstructed,
            });
        } else {
            axes.push(AxisDossier { probe, certificates: Vec::new(), selection: None, obstructed: false });
        }
    }
    let axes: [AxisDossier; 3] = axes.try_into().expect("three axes");
    let obstruction_witnessed = axes.iter().any(|a| a.obstructed);
    Ok(CompactnessDossier {
        symbol: b.name().to_string(),
        alpha,
        threshold,
        axes,
        obstruction_witnessed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::awf::calibrate_amplitude;
    use crate::kernels::NagelWainger;
    use approx::assert_relative_eq;

    const RES: [usize; 3] = [6, 6, 6];

    fn nw() -> NagelWainger {
        NagelWainger::default()
    }

    /// Unit-width translates: already pairwise disjoint.
    fn translates() -> Vec<ZygmundRectangle> {
        (1..=100)
            .map(|i| {
                let a = i as f64;
                ZygmundRectangle::new(
                    Interval::new(a, a + 1.0).unwrap(),
                    Interval::new(0.0, 1.0).unwrap(),
                    Interval::new(0.0, 1.0).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    /// `[0, 1/i]`: nested at the origin; the base family admits no large
    /// disjoint subsequence and the reflected one must be used.
    fn nested_at_origin() -> Vec<ZygmundRectangle> {
        (1..=100)
            .map(|i| {
                let l = 1.0 / i as f64;
                ZygmundRectangle::new(
                    Interval::new(0.0, l).unwrap(),
                    Interval::new(0.0, 1.0).unwrap(),
                    Interval::new(0.0, l).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    /// `[1/i, 1/i + 1/i^3]`: accumulate at 0 without containing it.
    fn accumulating() -> Vec<ZygmundRectangle> {
        (1..=100)
            .map(|i| {
                let a = 1.0 / i as f64;
                let l = a.powi(3);
                ZygmundRectangle::new(
                    Interval::new(a, a + l).unwrap(),
                    Interval::new(0.0, 1.0).unwrap(),
                    Interval::new(0.0, l).unwrap(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn select_translates_identity_order() {
        let rects = translates();
        let sel = select_disjoint(&rects, &nw(), 256.0, 0, 10).unwrap();
        assert_eq!(sel.which, WhichFamily::Base);
        assert_eq!(sel.branch, SelectionBranch::Escape);
        assert_eq!(sel.indices, (0..100).collect::<Vec<_>>());
        assert!(verify_selection(&rects, &nw(), 256.0, &sel).unwrap());
    }

    #[test]
    fn select_nested_uses_reflected_family() {
        let rects = nested_at_origin();
        let sel = select_disjoint(&rects, &nw(), 256.0, 0, 10).unwrap();
        assert_eq!(sel.which, WhichFamily::Reflected);
        assert_eq!(sel.branch, SelectionBranch::Accumulation);
        assert!(sel.indices.len() >= 10, "got {}", sel.indices.len());
        assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(verify_selection(&rects, &nw(), 256.0, &sel).unwrap());
    }

    #[test]
    fn select_accumulating_stays_base() {
        let rects = accumulating();
        let sel = select_disjoint(&rects, &nw(), 256.0, 0, 10).unwrap();
        assert_eq!(sel.which, WhichFamily::Base);
        assert!(sel.indices.len() >= 10);
        assert!(verify_selection(&rects, &nw(), 256.0, &sel).unwrap());
    }

    #[test]
    fn select_rejects_non_shrinking_overlap() {
        // Identical rectangles: not disjoint, not shrinking.
        let r = ZygmundRectangle::unit_cube();
        let rects = vec![r; 20];
        let err = select_disjoint(&rects, &nw(), 256.0, 0, 5).unwrap_err();
        assert!(matches!(err, CompactError::SelectionFailure(_)));
    }

    #[test]
    fn probe_constant_symbol_is_zero() {
        let p = shrinking_probe(
            &Symbol::constant(2.0),
            0.5,
            0,
            &[1, 2, 3],
            1,
            &Box3::unit_cube(),
            RES,
        );
        assert!(p.o_alpha_values.iter().all(|&v| v == 0.0));
        assert_eq!(p.inf_witness, 0.0);
    }

    #[test]
    fn probe_linear_x3_alpha_half_is_quarter() {
        for axis in 0..3 {
            let p = shrinking_probe(
                &Symbol::linear_x3(),
                0.5,
                axis,
                &[1, 2, 3, 4],
                2,
                &Box3::unit_cube(),
                RES,
            );
            for &v in &p.o_alpha_values {
                assert_relative_eq!(v, 0.25, max_relative = 1e-12);
            }
            assert_relative_eq!(p.inf_witness, 0.25, max_relative = 1e-12);
            assert!(p.scales.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn probe_diagonal_alpha_zero_decays_on_axis3() {
        // alpha = 0, axis 3: the per-scale max is l3/4, vanishing along the
        // ladder; no obstruction from shrinking third sides.
        let p = shrinking_probe(
            &Symbol::linear_x3(),
            0.0,
            2,
            &[1, 2, 3, 4],
            4,
            &Box3::unit_cube(),
            RES,
        );
        for (s, v) in p.scales.iter().zip(&p.o_alpha_values) {
            assert_relative_eq!(*v, s / 4.0, max_relative = 1e-12);
        }
        assert!(p.inf_witness < 0.05);
    }

    #[test]
    fn rj_chain_constant_symbol() {
        let rep = rj_chain(&Symbol::constant(1.0), &ZygmundRectangle::unit_cube(), 4, RES).unwrap();
        for step in &rep.steps {
            assert_eq!(step.osc, 0.0);
            assert!(step.mean_monotone.iter().all(|&ok| ok));
            assert!(step.closing_inequality);
        }
    }

    #[test]
    fn rj_chain_x3_symbol_monotone() {
        let rep = rj_chain(&Symbol::holder_x3(0.5), &ZygmundRectangle::unit_cube(), 5, RES).unwrap();
        assert!(rep.hypothesis_applies);
        for step in &rep.steps {
            assert!(
                step.mean_monotone.iter().all(|&ok| ok),
                "monotonicity failed at j = {}",
                step.j
            );
            assert!(step.closing_inequality, "closing failed at j = {}", step.j);
        }
    }

    #[test]
    fn rj_chain_x1_symbol_records_failures() {
        // b = x1 violates the hypothesis; oscillation shrinks as the first
        // axis is squeezed, so monotonicity genuinely fails somewhere.
        let rep = rj_chain(&Symbol::linear_x1(), &ZygmundRectangle::unit_cube(), 5, RES).unwrap();
        assert!(!rep.hypothesis_applies);
        let any_failure = rep
            .steps
            .iter()
            .any(|s| s.mean_monotone.iter().any(|&ok| !ok) || !s.closing_inequality);
        assert!(any_failure, "expected recorded failures for x1-dependent symbol");
    }

    #[test]
    fn dossier_constant_no_obstruction() {
        let a = calibrate_amplitude(&nw(), &ZygmundRectangle::unit_cube(), RES)
            .unwrap()
            .amplitude;
        let d = compactness_dossier(
            &Symbol::constant(5.0),
            0.5,
            &nw(),
            a,
            &Box3::unit_cube(),
            &[1, 2, 3],
            1,
            RES,
            PROBE_THRESHOLD_DEFAULT,
        )
        .unwrap();
        assert!(!d.obstruction_witnessed);
        assert!(d.axes.iter().all(|ax| !ax.obstructed));
    }

    #[test]
    fn dossier_linear_x3_obstructed_everywhere() {
        let a = calibrate_amplitude(&nw(), &ZygmundRectangle::unit_cube(), RES)
            .unwrap()
            .amplitude;
        let d = compactness_dossier(
            &Symbol::linear_x3(),
            0.5,
            &nw(),
            a,
            &Box3::unit_cube(),
            &[1, 2, 3],
            1,
            RES,
            PROBE_THRESHOLD_DEFAULT,
        )
        .unwrap();
        assert!(d.obstruction_witnessed);
        for ax in &d.axes {
            assert!(ax.obstructed, "axis {} not obstructed", ax.probe.axis);
            assert!((ax.probe.inf_witness - 0.25).abs() <= 0.25 * 0.02);
            assert!(ax.certificates.iter().all(|c| c.valid));
        }
    }
}
