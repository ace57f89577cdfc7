//! Oscillation functionals and norm estimators over Zygmund rectangles:
//! `osc`, the normalized `O_alpha`, the `bmo_Z` / `bmo_Z^alpha` suprema over
//! dyadic families, the Hölder-in-`x3` characterization with its nested
//! rectangle chains, and the Muckenhoupt-type weight constant.
//!
//! Norm suprema over all rectangles are not computable; estimators take the
//! max over a finite dyadic family (optionally jittered) and report the
//! family size, so reported values are honest lower estimates.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::awf::grid_osc;
use crate::fields::{GridFunction, Symbol};
use crate::geometry::{enumerate_zygmund, Box3, Interval, ZygmundRectangle};
use crate::sum::pairwise_sum_by;

/// Acceptance window for the two-sided characterization check: the ratio of
/// the oscillation norm to the Hölder seminorm must lie in
/// `[1/C_EQ_DEFAULT, C_EQ_DEFAULT]` unless overridden.
pub const C_EQ_DEFAULT: f64 = 16.0;

/// Default chain truncation depth; the tail decays like `2^(-4 k alpha)`.
pub const CHAIN_KMAX_DEFAULT: usize = 20;

#[derive(Debug, Clone)]
pub enum NormError {
    /// A weight sample was nonpositive.
    Positivity { rectangle: ZygmundRectangle, value: f64 },
    /// The chain construction produced a non-nested rectangle; indicates a
    /// construction bug or endpoints outside the supported branch.
    Nesting(String),
    Domain(String),
}

impl fmt::Display for NormError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormError::Positivity { rectangle, value } => {
                write!(f, "weight must be positive; sampled {value} on {rectangle:?}")
            }
            NormError::Nesting(msg) => write!(f, "chain nesting failure: {msg}"),
            NormError::Domain(msg) => write!(f, "domain error: {msg}"),
        }
    }
}

impl std::error::Error for NormError {}

/// Grid-level mean oscillation `(1/|R|) integral over R of |b - <b>_R|`.
pub fn osc_value(b: &Symbol, r: &ZygmundRectangle, res: [usize; 3]) -> f64 {
    grid_osc(&GridFunction::sample_symbol(b, r, res))
}

/// An oscillation measurement with one refinement doubling recorded.
#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub rectangle: ZygmundRectangle,
    pub osc: f64,
    pub alpha: f64,
    /// `osc / |R|^alpha`.
    pub o_alpha: f64,
    pub resolution: [usize; 3],
    /// `|osc(res) - osc(2 res)|`.
    pub refinement_delta: f64,
}

/// Mean oscillation with convergence evidence from one resolution doubling.
pub fn osc(b: &Symbol, r: &ZygmundRectangle, res: [usize; 3], alpha: f64) -> OscillationReport {
    let coarse = osc_value(b, r, res);
    let fine = osc_value(b, r, [2 * res[0], 2 * res[1], 2 * res[2]]);
    OscillationReport {
        rectangle: *r,
        osc: coarse,
        alpha,
        o_alpha: coarse / r.volume().powf(alpha),
        resolution: res,
        refinement_delta: (coarse - fine).abs(),
    }
}

/// A supremum estimate over a finite rectangle family.
#[derive(Debug, Clone, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub witness: Option<ZygmundRectangle>,
    pub family_size: usize,
    pub alpha: f64,
}

fn family_max<F>(rects: &[ZygmundRectangle], eval: F) -> (f64, Option<usize>)
where
    F: Fn(&ZygmundRectangle) -> f64 + Sync,
{
    let scored: Vec<f64> = rects.par_iter().map(&eval).collect();
    let mut best = 0.0f64;
    let mut witness = None;
    for (i, &v) in scored.iter().enumerate() {
        if v > best {
            best = v;
            witness = Some(i);
        }
    }
    (best, witness)
}

/// `max O_alpha(b, R)` over the dyadic family of the domain; `alpha = 0`
/// estimates the un-normalized oscillation norm.
pub fn bmo_norm(
    b: &Symbol,
    domain: &Box3,
    depths: (u32, u32),
    alpha: f64,
    res: [usize; 3],
) -> NormEstimate {
    let rects = enumerate_zygmund(domain, depths.0, depths.1);
    bmo_norm_over(b, &rects, alpha, res)
}

/// `max O_alpha` over an explicit rectangle family.
pub fn bmo_norm_over(
    b: &Symbol,
    rects: &[ZygmundRectangle],
    alpha: f64,
    res: [usize; 3],
) -> NormEstimate {
    let (value, idx) = family_max(rects, |r| osc_value(b, r, res) / r.volume().powf(alpha));
    NormEstimate { value, witness: idx.map(|i| rects[i]), family_size: rects.len(), alpha }
}

/// Dyadic family plus `n_jitter` random in-domain translates of each scale,
/// for probing suprema off the dyadic grid. Deterministic in the seed.
pub fn bmo_norm_with_jitter(
    b: &Symbol,
    domain: &Box3,
    depths: (u32, u32),
    alpha: f64,
    res: [usize; 3],
    n_jitter: usize,
    seed: u64,
) -> NormEstimate {
    let mut rects = enumerate_zygmund(domain, depths.0, depths.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rects.clone();
    for r in &base {
        for _ in 0..n_jitter {
            let [l1, l2, l3] = r.side_lengths();
            let mut slack = |len: f64, iv: &Interval| -> f64 {
                let room = iv.length() - len;
                if room <= 0.0 {
                    0.0
                } else {
                    rng.gen_range(0.0..room)
                }
            };
            let a1 = domain.i1.lo() + slack(l1, &domain.i1);
            let a2 = domain.i2.lo() + slack(l2, &domain.i2);
            let a3 = domain.i3.lo() + slack(l3, &domain.i3);
            if let (Ok(i1), Ok(i2), Ok(i3)) = (
                Interval::new(a1, a1 + l1),
                Interval::new(a2, a2 + l2),
                Interval::new(a3, a3 + l3),
            ) {
                if let Ok(jr) = ZygmundRectangle::new(i1, i2, i3) {
                    rects.push(jr);
                }
            }
        }
    }
    bmo_norm_over(b, &rects, alpha, res)
}

/// Hölder seminorm estimate by pair sampling; `value` is infinite when a
/// sampled pair with `x3 = y3` has differing symbol values (the symbol then
/// depends on the first two variables and lies outside the class).
#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub value: f64,
    pub samples: usize,
    pub witness: Option<([f64; 3], [f64; 3])>,
}

/// `sup |b(x) - b(y)| / |x3 - y3|^(2 alpha)` over sampled pairs.
pub fn holder_x3_seminorm(
    b: &Symbol,
    alpha: f64,
    sampler: &mut dyn FnMut() -> ([f64; 3], [f64; 3]),
    n: usize,
) -> HolderEstimate {
    assert!(alpha > 0.0, "alpha must be positive");
    let mut best = 0.0f64;
    let mut witness = None;
    for _ in 0..n {
        let (x, y) = sampler();
        let num = (b.evaluate(x) - b.evaluate(y)).abs();
        let den = (x[2] - y[2]).abs().powf(2.0 * alpha);
        let ratio = if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        };
        if ratio > best {
            best = ratio;
            witness = Some((x, y));
        }
    }
    HolderEstimate { value: best, samples: n, witness }
}

/// Pair sampler cycling through four classes: general pairs, pairs differing
/// only in `x3`, only in `x1`, and only in `x2`. The single-horizontal-axis
/// classes probe dependence on the first two variables.
pub fn pair_sampler(domain: Box3, seed: u64) -> impl FnMut() -> ([f64; 3], [f64; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    move || {
        let point = |rng: &mut ChaCha8Rng| -> [f64; 3] {
            [
                rng.gen_range(domain.i1.lo()..domain.i1.hi()),
                rng.gen_range(domain.i2.lo()..domain.i2.hi()),
                rng.gen_range(domain.i3.lo()..domain.i3.hi()),
            ]
        };
        let x = point(&mut rng);
        let mut y = point(&mut rng);
        match count % 4 {
            0 => {}
            1 => {
                y[0] = x[0];
                y[1] = x[1];
            }
            2 => {
                y[1] = x[1];
                y[2] = x[2];
            }
            _ => {
                y[0] = x[0];
                y[2] = x[2];
            }
        }
        count += 1;
        (x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquivalenceFlag {
    /// Both sides finite with ratio inside the window.
    Consistent,
    /// Both sides vanished (constant symbols).
    BothZero,
    /// The Hölder side is infinite: the symbol depends on `x1` or `x2` and
    /// does not belong to the class on all of R^3.
    NotInClass,
    /// Both sides finite but the ratio left the window.
    RatioOutOfRange,
}

/// Two-sided comparison of the oscillation norm with the Hölder seminorm.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub bmo: NormEstimate,
    pub holder: HolderEstimate,
    pub ratio: Option<f64>,
    pub flag: EquivalenceFlag,
    pub c_eq: f64,
    /// True when the symbol's local integrability beyond `L^1` is assumed
    /// rather than known (grid-file symbols).
    pub integrability_assumed: bool,
}

/// Compare `bmo_Z^alpha` against `sup |b(x)-b(y)| / |x3-y3|^(2 alpha)` and
/// flag inconsistencies. Flags report; they never raise.
#[allow(clippy::too_many_arguments)]
pub fn check_equivalence(
    b: &Symbol,
    alpha: f64,
    domain: &Box3,
    depths: (u32, u32),
    res: [usize; 3],
    n_pairs: usize,
    seed: u64,
    c_eq: f64,
) -> EquivalenceReport {
    let bmo = bmo_norm(b, domain, depths, alpha, res);
    let mut sampler = pair_sampler(*domain, seed);
    let holder = holder_x3_seminorm(b, alpha, &mut sampler, n_pairs);
    let (ratio, flag) = if holder.value.is_infinite() {
        (None, EquivalenceFlag::NotInClass)
    } else if bmo.value == 0.0 && holder.value == 0.0 {
        (None, EquivalenceFlag::BothZero)
    } else if holder.value == 0.0 {
        (None, EquivalenceFlag::RatioOutOfRange)
    } else {
        let r = bmo.value / holder.value;
        let flag = if r >= 1.0 / c_eq && r <= c_eq {
            EquivalenceFlag::Consistent
        } else {
            EquivalenceFlag::RatioOutOfRange
        };
        (Some(r), flag)
    };
    EquivalenceReport {
        bmo,
        holder,
        ratio,
        flag,
        c_eq,
        integrability_assumed: !b.integrability_known(),
    }
}

/// One rung of a nested chain: the rectangle with its measured oscillation.
#[derive(Debug, Clone, Serialize)]
pub struct ChainStep {
    pub rectangle: ZygmundRectangle,
    pub osc: f64,
    pub o_alpha: f64,
}

/// Transcript of the nested-rectangle argument bounding `|b(x) - b(y)|` by a
/// geometric sum of oscillations.
#[derive(Debug, Clone, Serialize)]
pub struct ChainTranscript {
    pub endpoints: ([f64; 3], [f64; 3]),
    pub top: ZygmundRectangle,
    pub chain_x: Vec<ChainStep>,
    pub chain_y: Vec<ChainStep>,
    /// `sum over k of osc(I_(k-1)) + osc(J_(k-1))`, truncated at `k_max`.
    pub osc_sum: f64,
    /// Geometric tail bound for the truncated part.
    pub tail_bound: f64,
    /// `chain_constant(alpha) * bmo_estimate * (r1 r2)^(2 alpha)`.
    pub bound: f64,
    pub bmo_estimate: f64,
    /// `|b(x) - b(y)|`.
    pub difference: f64,
    /// Measured `difference / osc_sum` when the sum is positive.
    pub ratio: Option<f64>,
}

/// `2 * sum over k >= 1 of (|I_(k-1)| / (r1 r2)^2)^alpha = 2 * 16^alpha /
/// (1 - 16^-alpha)`: the geometric constant of the chain bound.
pub fn chain_constant(alpha: f64) -> f64 {
    2.0 * 16f64.powf(alpha) / (1.0 - 16f64.powf(-alpha))
}

/// Zygmund tolerance needed to absorb endpoint rounding when a rectangle of
/// side lengths `l` sits at center `c`: each length read back from rounded
/// endpoints carries a relative error on the order of `eps |c_i| / l_i`.
fn float_tol(c: [f64; 3], l: [f64; 3]) -> f64 {
    let term = |ci: f64, li: f64| f64::EPSILON * (ci.abs() + li) / li;
    crate::geometry::DEFAULT_ZYGMUND_TOL
        .max(8.0 * (term(c[0], l[0]) + term(c[1], l[1]) + term(c[2], l[2])))
}

/// Rectangle of side lengths `l` centered at `c`, with the float-aware
/// tolerance above. `Ok(None)` means a side fell under the representation
/// floor of its center (the chain must truncate there).
fn centered_rect(c: [f64; 3], l: [f64; 3]) -> Result<Option<ZygmundRectangle>, NormError> {
    let mut ivs = [Interval::new(0.0, 1.0).unwrap(); 3];
    for i in 0..3 {
        match Interval::from_center(c[i], l[i]) {
            Ok(iv) => ivs[i] = iv,
            // hi <= lo after rounding: the side is below ulp scale.
            Err(_) => return Ok(None),
        }
        if l[i] < 64.0 * f64::EPSILON * c[i].abs() {
            return Ok(None);
        }
    }
    ZygmundRectangle::with_tol(ivs[0], ivs[1], ivs[2], float_tol(c, l))
        .map(Some)
        .map_err(|e| NormError::Nesting(e.to_string()))
}

/// Nested chain rung centered at `c` with scales `(2^(1-k) r1, 2^(1-k) r2,
/// 2^(2-2k) r1 r2)`.
fn chain_rect(
    c: [f64; 3],
    r1: f64,
    r2: f64,
    k: usize,
) -> Result<Option<ZygmundRectangle>, NormError> {
    let s = (1.0 - k as f64).exp2();
    let s3 = (2.0 - 2.0 * k as f64).exp2();
    centered_rect(c, [s * r1, s * r2, s3 * r1 * r2])
}

fn require_nested(inner: &ZygmundRectangle, outer: &ZygmundRectangle, what: &str) -> Result<(), NormError> {
    if !inner.to_box().subset_of(&outer.to_box()) {
        return Err(NormError::Nesting(format!("{what}: {inner:?} not inside {outer:?}")));
    }
    Ok(())
}

/// Bound `|b(x) - b(y)|` through the chain of shrinking Zygmund rectangles
/// centered at the endpoints under a common top rectangle. Supported for
/// endpoints with `|x3 - y3| <= r1 r2` (the horizontal-offset branch); the
/// construction errors if nesting fails.
#[allow(clippy::too_many_arguments)]
pub fn chain_bound(
    b: &Symbol,
    x: [f64; 3],
    y: [f64; 3],
    alpha: f64,
    eps: f64,
    k_max: usize,
    res: [usize; 3],
    bmo_estimate: f64,
) -> Result<ChainTranscript, NormError> {
    if !(eps > 0.0) {
        return Err(NormError::Domain("eps must be positive".into()));
    }
    if k_max == 0 {
        return Err(NormError::Domain("k_max must be at least 1".into()));
    }
    let r1 = (x[0] - y[0]).abs().max(eps);
    let r2 = (x[1] - y[1]).abs().max(eps);
    let mid = [
        0.5 * (x[0] + y[0]),
        0.5 * (x[1] + y[1]),
        0.5 * (x[2] + y[2]),
    ];
    let top = centered_rect(mid, [2.0 * r1, 2.0 * r2, 4.0 * r1 * r2])?.ok_or_else(|| {
        NormError::Domain(format!(
            "endpoint span {r1} x {r2} is below the representation floor at {mid:?}; raise eps"
        ))
    })?;

    // Rungs are built until k_max or until a side length falls under the
    // float representation floor of its center, whichever comes first.
    let build_chain = |c: [f64; 3], label: &str| -> Result<Vec<ZygmundRectangle>, NormError> {
        let mut chain: Vec<ZygmundRectangle> = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let Some(rk) = chain_rect(c, r1, r2, k)? else { break };
            if k == 1 {
                require_nested(&rk, &top, label)?;
            } else {
                require_nested(&rk, &chain[k - 2], label)?;
            }
            chain.push(rk);
        }
        Ok(chain)
    };
    let chain_x_rects = build_chain(x, "I_k chain")?;
    let chain_y_rects = build_chain(y, "J_k chain")?;

    let measure = |r: &ZygmundRectangle| -> ChainStep {
        let o = osc_value(b, r, res);
        ChainStep { rectangle: *r, osc: o, o_alpha: o / r.volume().powf(alpha) }
    };
    let top_step = measure(&top);
    let chain_x: Vec<ChainStep> = chain_x_rects.iter().map(&measure).collect();
    let chain_y: Vec<ChainStep> = chain_y_rects.iter().map(&measure).collect();

    // sum_{k=1..K} osc(I_(k-1)) + osc(J_(k-1)), with I_0 = J_0 = top and K
    // the effective depth of each chain.
    let kx = chain_x.len().max(1);
    let ky = chain_y.len().max(1);
    let mut osc_sum = 2.0 * top_step.osc;
    for step in chain_x.iter().take(kx - 1) {
        osc_sum += step.osc;
    }
    for step in chain_y.iter().take(ky - 1) {
        osc_sum += step.osc;
    }

    let r12a = (r1 * r2).powf(2.0 * alpha);
    // Geometric tails sum_{k > K} (2^(4-4(k-1)) (r1 r2)^2)^alpha per chain.
    let q = 16f64.powf(-alpha);
    let tail_of = |k_eff: usize| {
        bmo_estimate * r12a * 16f64.powf(alpha) * q.powf(k_eff as f64) / (1.0 - q)
    };
    let tail_bound = tail_of(kx) + tail_of(ky);
    let bound = chain_constant(alpha) * bmo_estimate * r12a;
    let difference = (b.evaluate(x) - b.evaluate(y)).abs();
    let ratio = if osc_sum > 0.0 { Some(difference / osc_sum) } else { None };
    Ok(ChainTranscript {
        endpoints: (x, y),
        top,
        chain_x,
        chain_y,
        osc_sum,
        tail_bound,
        bound,
        bmo_estimate,
        difference,
        ratio,
    })
}

/// Muckenhoupt-type weight constant over the dyadic Zygmund family:
/// `max over R of <w>_R <w^(-1/(p-1))>_R^(p-1)`.
pub fn apz_constant(
    w: &Symbol,
    p: f64,
    domain: &Box3,
    depths: (u32, u32),
    res: [usize; 3],
) -> Result<NormEstimate, NormError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(NormError::Domain(format!("p must lie in (1, inf), got {p}")));
    }
    let rects = enumerate_zygmund(domain, depths.0, depths.1);
    let exponent = -1.0 / (p - 1.0);
    let mut value = 0.0f64;
    let mut witness = None;
    for r in &rects {
        let g = GridFunction::sample_symbol(w, r, res);
        for &s in g.samples() {
            if !(s > 0.0) {
                return Err(NormError::Positivity { rectangle: *r, value: s });
            }
        }
        let n = g.len();
        let mean_w = g.mean();
        let mean_dual = pairwise_sum_by(n, |i| g.samples()[i].powf(exponent)) / n as f64;
        let v = mean_w * mean_dual.powf(p - 1.0);
        if v > value {
            value = v;
            witness = Some(*r);
        }
    }
    Ok(NormEstimate { value, witness, family_size: rects.len(), alpha: 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dilate_point, dilate_rectangle, ZygmundDilation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const RES: [usize; 3] = [8, 8, 8];

    fn cube() -> ZygmundRectangle {
        ZygmundRectangle::unit_cube()
    }

    #[test]
    fn osc_constant_is_zero() {
        assert_eq!(osc_value(&Symbol::constant(4.0), &cube(), RES), 0.0);
    }

    #[test]
    fn osc_linear_x3_is_quarter_side() {
        // osc(x3, R) = len(I3)/4, exact for even grids.
        assert_relative_eq!(osc_value(&Symbol::linear_x3(), &cube(), RES), 0.25);
        let d = ZygmundDilation::new(2.0, 1.5).unwrap();
        let big = dilate_rectangle(&cube(), &d);
        assert_relative_eq!(
            osc_value(&Symbol::linear_x3(), &big, RES),
            big.i3().length() / 4.0,
            max_relative = 1e-13
        );
    }

    #[test]
    fn osc_report_refinement_delta() {
        let rep = osc(&Symbol::holder_x3(0.5), &cube(), RES, 0.5);
        assert!(rep.osc > 0.0);
        // Smooth-away-from-zero symbol: the doubling delta is small.
        assert!(rep.refinement_delta < 0.05 * rep.osc);
    }

    #[test]
    fn osc_affine_algebra() {
        // osc(b + c) = osc(b) and osc(lambda b) = |lambda| osc(b).
        let b = Symbol::holder_x3(0.5);
        let shifted = Symbol::custom("shifted", true, |p| p[2].abs().sqrt() + 17.0);
        let scaled = Symbol::custom("scaled", true, |p| -3.0 * p[2].abs().sqrt());
        let base = osc_value(&b, &cube(), RES);
        assert_relative_eq!(osc_value(&shifted, &cube(), RES), base, max_relative = 1e-12);
        assert_relative_eq!(osc_value(&scaled, &cube(), RES), 3.0 * base, max_relative = 1e-12);
    }

    #[test]
    fn osc_best_constant_comparison() {
        // osc(b, R) <= 2 min over c of <|b - c|>_R at grid level.
        let b = Symbol::separable();
        let g = GridFunction::sample_symbol(&b, &cube(), RES);
        let o = osc_value(&b, &cube(), RES);
        for c in [-0.5, 0.0, 0.17, 0.5, 1.0] {
            let mean_dev = g.map(|v| (v - c).abs()).mean();
            assert!(o <= 2.0 * mean_dev + 1e-14, "c={c}");
        }
    }

    #[test]
    fn osc_dilation_law() {
        // osc(b o rho, R) = osc(b, rho R), so
        // O_alpha(b o rho, R) = (st)^(2 alpha) O_alpha(b, rho R).
        let alpha = 0.5;
        let d = ZygmundDilation::new(2.0, 0.5).unwrap();
        let b = Symbol::holder_x3(0.5);
        let composed = Symbol::custom("b-rho", true, move |p| {
            let q = dilate_point(p, &d);
            q[2].abs().sqrt()
        });
        let r = cube();
        let image = dilate_rectangle(&r, &d);
        let lhs = osc_value(&composed, &r, RES);
        let rhs = osc_value(&b, &image, RES);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        let st = 1.0;
        let o_composed = lhs / r.volume().powf(alpha);
        let o_image = rhs / image.volume().powf(alpha);
        assert_relative_eq!(o_composed, (st as f64).powf(2.0 * alpha) * o_image, max_relative = 1e-12);
    }

    #[test]
    fn bmo_norm_constant_zero() {
        let est = bmo_norm(&Symbol::constant(2.0), &Box3::unit_cube(), (0, 2), 0.5, RES);
        assert_eq!(est.value, 0.0);
        assert!(est.witness.is_none());
    }

    #[test]
    fn bmo_norm_linear_x3_quarter() {
        // O_1/2(x3, R) = (l3/4)/l3 = 1/4 for every Zygmund rectangle.
        let est = bmo_norm(&Symbol::linear_x3(), &Box3::unit_cube(), (0, 2), 0.5, RES);
        assert_relative_eq!(est.value, 0.25, max_relative = 1e-12);
        assert_eq!(est.family_size, 1 + 4 + 4 + 16 + 16 + 16 + 64 + 64 + 256);
    }

    #[test]
    fn bmo_norm_monotone_in_family() {
        let b = Symbol::separable();
        let small = bmo_norm(&b, &Box3::unit_cube(), (0, 1), 0.25, RES);
        let large = bmo_norm(&b, &Box3::unit_cube(), (0, 2), 0.25, RES);
        assert!(large.value >= small.value);
        assert!(large.family_size > small.family_size);
    }

    #[test]
    fn bmo_jitter_extends_family_deterministically() {
        let b = Symbol::holder_x3(0.5);
        let a = bmo_norm_with_jitter(&b, &Box3::unit_cube(), (0, 1), 0.25, RES, 2, 9);
        let bb = bmo_norm_with_jitter(&b, &Box3::unit_cube(), (0, 1), 0.25, RES, 2, 9);
        assert_eq!(a.value, bb.value);
        assert_eq!(a.family_size, 25 * 3);
        let plain = bmo_norm(&b, &Box3::unit_cube(), (0, 1), 0.25, RES);
        assert!(a.value >= plain.value);
    }

    #[test]
    fn holder_linear_x3_is_one() {
        let mut sampler = pair_sampler(Box3::unit_cube(), 3);
        let est = holder_x3_seminorm(&Symbol::linear_x3(), 0.5, &mut sampler, 4000);
        assert!(est.value <= 1.0 + 1e-12);
        assert!(est.value >= 1.0 - 1e-9, "value {}", est.value);
    }

    #[test]
    fn holder_constant_is_zero() {
        let mut sampler = pair_sampler(Box3::unit_cube(), 3);
        let est = holder_x3_seminorm(&Symbol::constant(1.0), 0.5, &mut sampler, 1000);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn holder_x1_dependence_is_infinite() {
        let mut sampler = pair_sampler(Box3::unit_cube(), 3);
        let est = holder_x3_seminorm(&Symbol::linear_x1(), 0.5, &mut sampler, 1000);
        assert!(est.value.is_infinite());
        assert!(est.witness.is_some());
    }

    #[test]
    fn equivalence_flags() {
        let domain = Box3::unit_cube();
        // Matching-exponent Hölder symbol: consistent.
        let rep = check_equivalence(&Symbol::holder_x3(0.5), 0.25, &domain, (0, 2), RES, 4000, 5, C_EQ_DEFAULT);
        assert_eq!(rep.flag, EquivalenceFlag::Consistent, "ratio {:?}", rep.ratio);

        // Constant: both zero.
        let rep = check_equivalence(&Symbol::constant(3.0), 0.25, &domain, (0, 1), RES, 500, 5, C_EQ_DEFAULT);
        assert_eq!(rep.flag, EquivalenceFlag::BothZero);

        // x1-dependent: flagged out of the class.
        let rep = check_equivalence(&Symbol::linear_x1(), 0.5, &domain, (0, 1), RES, 2000, 5, C_EQ_DEFAULT);
        assert_eq!(rep.flag, EquivalenceFlag::NotInClass);
        assert!(rep.bmo.value.is_finite());
    }

    #[test]
    fn chain_bound_coincident_endpoints() {
        let b = Symbol::holder_x3(0.5);
        let x = [0.4, 0.6, 0.3];
        let t = chain_bound(&b, x, x, 0.25, 1e-6, 8, RES, 0.5).unwrap();
        assert_eq!(t.difference, 0.0);
        assert!(t.osc_sum.is_finite());
    }

    #[test]
    fn chain_bound_holder_symbol() {
        // |x3 - y3| <= |x1 - y1| |x2 - y2| branch with measured C <= 8.
        let alpha = 0.25;
        let b = Symbol::holder_x3(2.0 * alpha);
        let x = [0.3f64, 0.3, 0.2];
        let y = [0.7f64, 0.8, 0.35];
        assert!((x[2] - y[2]).abs() <= (x[0] - y[0]).abs() * (x[1] - y[1]).abs());
        let bmo_est = bmo_norm(&b, &Box3::unit_cube(), (0, 2), alpha, RES).value;
        let t = chain_bound(&b, x, y, alpha, 1e-6, CHAIN_KMAX_DEFAULT, RES, bmo_est).unwrap();
        let c = t.ratio.unwrap();
        assert!(c <= 8.0, "measured chain constant {c}");
        assert!(t.difference <= t.bound + t.tail_bound, "difference above the chain bound");
        // Geometric decay of the chain oscillations.
        for step in &t.chain_x {
            assert!(step.o_alpha <= 1.1 * bmo_est, "step O_alpha {}", step.o_alpha);
        }
    }

    #[test]
    fn chain_rectangles_shrink_geometrically() {
        let b = Symbol::linear_x3();
        let t = chain_bound(&b, [0.2, 0.2, 0.1], [0.8, 0.7, 0.4], 0.25, 1e-6, 10, RES, 1.0)
            .unwrap();
        let r1 = 0.6f64;
        let r2 = 0.5f64;
        for (k, step) in t.chain_x.iter().enumerate() {
            let expect = (4.0 - 4.0 * (k as f64 + 1.0)).exp2() * (r1 * r2).powi(2);
            assert_relative_eq!(step.rectangle.volume(), expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn apz_unit_weight_is_exactly_one() {
        let est = apz_constant(&Symbol::constant(1.0), 2.0, &Box3::unit_cube(), (0, 1), RES).unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn apz_rejects_nonpositive_weight() {
        let w = Symbol::custom("signed", true, |p| p[2] - 0.5);
        let err = apz_constant(&w, 2.0, &Box3::unit_cube(), (0, 0), RES).unwrap_err();
        assert!(matches!(err, NormError::Positivity { .. }));
    }

    #[test]
    fn apz_power_weight_stable_under_refinement() {
        // w = |x3 - c|^delta-free: use a smooth positive weight off zero.
        let w = Symbol::custom("w", true, |p| 0.25 + p[2].abs().powf(0.2));
        let coarse = apz_constant(&w, 2.0, &Box3::unit_cube(), (0, 1), [6, 6, 6]).unwrap();
        let fine = apz_constant(&w, 2.0, &Box3::unit_cube(), (0, 1), [12, 12, 12]).unwrap();
        assert!(coarse.value >= 1.0);
        assert!((coarse.value - fine.value).abs() <= 0.05 * fine.value);
    }

    proptest! {
        /// Grid-level Jensen: every per-rectangle weight product is >= 1.
        #[test]
        fn apz_per_rectangle_at_least_one(seed in 0u64..200, p in 1.2f64..4.0) {
            let w = Symbol::custom("w", false, move |q| {
                0.5 + (q[0] * 3.0 + q[2] * (seed as f64 % 7.0)).sin().abs()
            });
            let est = apz_constant(&w, p, &Box3::unit_cube(), (1, 1), [4, 4, 4]).unwrap();
            prop_assert!(est.value >= 1.0 - 1e-12);
        }

        /// The chain bound dominates the difference for Hölder symbols on
        /// admissible endpoint pairs.
        #[test]
        fn chain_dominates_difference(
            x1 in 0.1f64..0.45, y1 in 0.55f64..0.9,
            x2 in 0.1f64..0.45, y2 in 0.55f64..0.9,
            frac in 0.0f64..1.0,
        ) {
            let alpha = 0.25;
            let b = Symbol::holder_x3(2.0 * alpha);
            let dx = (x1 - y1) as f64;
            let dy = (x2 - y2) as f64;
            let d3 = frac * dx.abs() * dy.abs();
            let x = [x1, x2, 0.3];
            let y = [y1, y2, 0.3 + d3];
            let t = chain_bound(&b, x, y, alpha, 1e-6, 16, [4, 4, 4], 1.0).unwrap();
            // Chain sum controls the difference with the geometric constant.
            prop_assert!(t.difference <= 16.0 * t.osc_sum + t.tail_bound + 1e-12);
        }
    }
}
