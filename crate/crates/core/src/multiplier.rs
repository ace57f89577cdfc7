//! The explicit frequency multiplier `m(xi) = xi3 / (xi1^2 xi2^2 + xi3^2)^(1/2)`:
//! closed-form first derivatives, finite-difference higher derivatives, the
//! mixed homogeneous derivative-bound audit, and the small-box sweep showing
//! the first derivatives are unbounded.
//!
//! `m` is invariant under the frequency dilations
//! `(xi1, xi2, xi3) -> (s xi1, t xi2, s t xi3)`, even under sign flips of
//! `xi1, xi2` and odd in `xi3`; all derivative magnitudes share those
//! symmetries, so audits sample the positive octant only.

use rayon::prelude::*;
use serde::Serialize;
use std::fmt;

/// Step-size policy: finite-difference steps are `FD_H_SCALE_DEFAULT * |xi_i|`
/// per axis. Richardson extrapolation halves the step once.
pub const FD_H_SCALE_DEFAULT: f64 = 1e-3;

/// Stencil clearance: with per-axis order at most 3 the step scale must stay
/// under `1/(10 * 2 * 3)` of the coordinate, so the whole stencil keeps a
/// factor-10 margin from the singular planes.
pub const FD_H_SCALE_MAX: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierError {
    /// `xi1 xi2 = xi3 = 0`.
    Singularity { xi: [f64; 3] },
    Domain(String),
    /// A finite-difference stencil would cross or crowd the singular set.
    Clearance(String),
}

impl fmt::Display for MultiplierError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MultiplierError::Singularity { xi } => {
                write!(f, "multiplier evaluated on its singular set at {xi:?}")
            }
            MultiplierError::Domain(msg) => write!(f, "domain error: {msg}"),
            MultiplierError::Clearance(msg) => write!(f, "clearance error: {msg}"),
        }
    }
}

impl std::error::Error for MultiplierError {}

/// A derivative multi-index `(a1, a2, a3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MultiIndex {
    pub a1: u32,
    pub a2: u32,
    pub a3: u32,
}

impl MultiIndex {
    pub fn new(a1: u32, a2: u32, a3: u32) -> Self {
        MultiIndex { a1, a2, a3 }
    }

    pub fn order(&self) -> u32 {
        self.a1 + self.a2 + self.a3
    }

    /// All multi-indices with order at most `max_order`, in lexicographic
    /// order of `(order, a1, a2)`.
    pub fn up_to(max_order: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for ord in 0..=max_order {
            for a1 in (0..=ord).rev() {
                for a2 in (0..=(ord - a1)).rev() {
                    out.push(MultiIndex::new(a1, a2, ord - a1 - a2));
                }
            }
        }
        out
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.a1, self.a2, self.a3)
    }
}

fn denom(xi: [f64; 3]) -> f64 {
    let p = xi[0] * xi[1];
    p * p + xi[2] * xi[2]
}

/// `m(xi) = xi3 / (xi1^2 xi2^2 + xi3^2)^(1/2)`; `|m| <= 1` off the singular
/// set.
pub fn fp_multiplier(xi: [f64; 3]) -> Result<f64, MultiplierError> {
    let s = denom(xi);
    if s == 0.0 {
        return Err(MultiplierError::Singularity { xi });
    }
    Ok(xi[2] / s.sqrt())
}

/// Closed-form first partials:
/// `d1 m = -xi1 xi2^2 xi3 / S^(3/2)`, `d2 m = -xi1^2 xi2 xi3 / S^(3/2)`,
/// `d3 m = xi1^2 xi2^2 / S^(3/2)` with `S = xi1^2 xi2^2 + xi3^2`.
/// The first component carries a `1/xi1` homogeneity factor, so `xi1 = 0`
/// is rejected.
pub fn fp_gradient(xi: [f64; 3]) -> Result<[f64; 3], MultiplierError> {
    let s = denom(xi);
    if s == 0.0 {
        return Err(MultiplierError::Singularity { xi });
    }
    if xi[0] == 0.0 {
        return Err(MultiplierError::Domain(
            "d1 m carries a 1/xi1 factor; evaluate off xi1 = 0".into(),
        ));
    }
    let s32 = s.powf(1.5);
    let d1 = -xi[0] * xi[1] * xi[1] * xi[2] / s32;
    let d2 = -xi[0] * xi[0] * xi[1] * xi[2] / s32;
    let d3 = xi[0] * xi[0] * xi[1] * xi[1] / s32;
    Ok([d1, d2, d3])
}

fn fd_nested(xi: [f64; 3], alpha: MultiIndex, h: [f64; 3]) -> Result<f64, MultiplierError> {
    if alpha.order() == 0 {
        return fp_multiplier(xi);
    }
    let (axis, rest) = if alpha.a1 > 0 {
        (0, MultiIndex::new(alpha.a1 - 1, alpha.a2, alpha.a3))
    } else if alpha.a2 > 0 {
        (1, MultiIndex::new(alpha.a1, alpha.a2 - 1, alpha.a3))
    } else {
        (2, MultiIndex::new(alpha.a1, alpha.a2, alpha.a3 - 1))
    };
    let mut plus = xi;
    plus[axis] += h[axis];
    let mut minus = xi;
    minus[axis] -= h[axis];
    Ok((fd_nested(plus, rest, h)? - fd_nested(minus, rest, h)?) / (2.0 * h[axis]))
}

/// `d^alpha m` by nested central differences, Richardson-extrapolated once
/// (`O(h^4)`).
///
/// Steps follow the multiplier's local variation scales rather than the raw
/// coordinates: `m` depends on `xi1` only through `xi1 xi2`, so with
/// `S = xi1^2 xi2^2 + xi3^2` the per-axis scales are `sqrt(S)/|xi2|`,
/// `sqrt(S)/|xi1|` and `sqrt(S)` (each at least `max(|xi_i|, ...)` up to a
/// root-two factor). This keeps both the truncation and the cancellation
/// error of the stencil proportional to the homogeneous envelope itself, so
/// ratios against `fp_bound` stay meaningful in every anisotropy regime.
pub fn fp_partial_fd(
    xi: [f64; 3],
    alpha: MultiIndex,
    h_scale: f64,
) -> Result<f64, MultiplierError> {
    if alpha.order() > 3 {
        return Err(MultiplierError::Domain(format!(
            "finite differences support order <= 3, got {alpha}"
        )));
    }
    if !(h_scale > 0.0 && h_scale <= FD_H_SCALE_MAX) {
        return Err(MultiplierError::Clearance(format!(
            "step scale {h_scale} outside (0, {FD_H_SCALE_MAX}]"
        )));
    }
    if xi.contains(&0.0) {
        return Err(MultiplierError::Clearance(format!(
            "stencil at {xi:?} has no clearance from the singular planes"
        )));
    }
    let rs = denom(xi).sqrt();
    let h = [
        h_scale * rs / xi[1].abs(),
        h_scale * rs / xi[0].abs(),
        h_scale * rs,
    ];
    let coarse = fd_nested(xi, alpha, h)?;
    let h2 = [0.5 * h[0], 0.5 * h[1], 0.5 * h[2]];
    let fine = fd_nested(xi, alpha, h2)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// The mixed homogeneous envelope
/// `|xi1|^(-a1 + a2) * (xi1^2 xi2^2 + xi3^2)^(-(a2 + a3)/2)`.
pub fn fp_bound(xi: [f64; 3], alpha: MultiIndex) -> Result<f64, MultiplierError> {
    let e1 = alpha.a2 as f64 - alpha.a1 as f64;
    let e23 = -((alpha.a2 + alpha.a3) as f64);
    let s = denom(xi);
    if s == 0.0 && e23 < 0.0 {
        return Err(MultiplierError::Domain(
            "bound needs (xi1 xi2, xi3) != 0 at positive joint order".into(),
        ));
    }
    if xi[0] == 0.0 && e1 < 0.0 {
        return Err(MultiplierError::Domain("bound needs xi1 != 0 when a1 > a2".into()));
    }
    let pow = |base: f64, e: f64| if e == 0.0 { 1.0 } else { base.powf(e) };
    Ok(pow(xi[0].abs(), e1) * pow(s.sqrt(), e23))
}

/// Log-spaced positive-octant frequency grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FrequencyGrid {
    pub per_axis: usize,
    /// Exponent range: coordinates run over `2^lo_exp ..= 2^hi_exp`.
    pub lo_exp: f64,
    pub hi_exp: f64,
}

impl FrequencyGrid {
    pub fn new(per_axis: usize, lo_exp: f64, hi_exp: f64) -> Self {
        assert!(per_axis >= 2 && hi_exp > lo_exp);
        FrequencyGrid { per_axis, lo_exp, hi_exp }
    }

    pub fn len(&self) -> usize {
        self.per_axis * self.per_axis * self.per_axis
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn coord(&self, idx: usize) -> f64 {
        let t = idx as f64 / (self.per_axis - 1) as f64;
        (self.lo_exp + t * (self.hi_exp - self.lo_exp)).exp2()
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let n = self.per_axis;
        let i = flat / (n * n);
        let j = (flat / n) % n;
        let k = flat % n;
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Same exponent range with twice the density per axis.
    pub fn doubled(&self) -> FrequencyGrid {
        FrequencyGrid { per_axis: 2 * self.per_axis, ..*self }
    }
}

/// One audited multi-index: the largest `|d^alpha m| / bound` over the grid.
#[derive(Debug, Clone, Serialize)]
pub struct MultiplierCheck {
    pub alpha: MultiIndex,
    pub max_ratio: f64,
    pub grid: FrequencyGrid,
    pub argmax: [f64; 3],
}

fn derivative_at(xi: [f64; 3], alpha: MultiIndex, h_scale: f64) -> Result<f64, MultiplierError> {
    match (alpha.a1, alpha.a2, alpha.a3) {
        (0, 0, 0) => fp_multiplier(xi),
        (1, 0, 0) => Ok(fp_gradient(xi)?[0]),
        (0, 1, 0) => Ok(fp_gradient(xi)?[1]),
        (0, 0, 1) => Ok(fp_gradient(xi)?[2]),
        _ => fp_partial_fd(xi, alpha, h_scale),
    }
}

/// Audit `|d^alpha m| <= C * bound` for every `|alpha| <= alpha_max` over the
/// grid, reporting the measured `C` and its argmax. First derivatives use
/// the closed forms, higher orders the Richardson finite differences.
pub fn check_mz1(
    grid: &FrequencyGrid,
    alpha_max: u32,
) -> Result<Vec<MultiplierCheck>, MultiplierError> {
    let mut out = Vec::new();
    for alpha in MultiIndex::up_to(alpha_max) {
        let ratios: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|flat| {
                let xi = grid.point(flat);
                let d = derivative_at(xi, alpha, FD_H_SCALE_DEFAULT)?;
                let b = fp_bound(xi, alpha)?;
                Ok(d.abs() / b)
            })
            .collect::<Result<_, MultiplierError>>()?;
        let mut max_ratio = 0.0f64;
        let mut arg = 0usize;
        for (i, &v) in ratios.iter().enumerate() {
            if v > max_ratio {
                max_ratio = v;
                arg = i;
            }
        }
        out.push(MultiplierCheck { alpha, max_ratio, grid: *grid, argmax: grid.point(arg) });
    }
    Ok(out)
}

/// One row of the unboundedness table: normalized first-derivative maxima
/// over the box `[eps, 2 eps]^2 x [eps^2, 2 eps^2]`.
#[derive(Debug, Clone, Serialize)]
pub struct UnboundednessRow {
    pub eps: f64,
    /// `eps * max |d1 m|` over the box.
    pub scaled_d1: f64,
    /// `eps * max |d2 m|`.
    pub scaled_d2: f64,
    /// `eps^2 * max |d3 m|`.
    pub scaled_d3: f64,
    /// `eps * |d1 m(eps, eps, eps^2)|`; equals `2^(-3/2)` in closed form.
    pub corner_d1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnboundednessTable {
    pub rows: Vec<UnboundednessRow>,
    pub samples_per_axis: usize,
}

/// Sweep the shrinking boxes: the normalized columns stay constant while the
/// raw maxima blow up like `1/eps` (first two axes) and `1/eps^2` (third),
/// witnessing that no first derivative is essentially bounded.
pub fn unboundedness_sweep(eps_ladder: &[f64], samples_per_axis: usize) -> UnboundednessTable {
    assert!(samples_per_axis >= 2);
    let n = samples_per_axis;
    let rows = eps_ladder
        .iter()
        .map(|&eps| {
            assert!(eps > 0.0);
            let mut max = [0.0f64; 3];
            for i in 0..n {
                // Relative offsets shared across eps values keep the sweep
                // exactly scale-covariant.
                let u = 1.0 + i as f64 / (n - 1) as f64;
                for j in 0..n {
                    let v = 1.0 + j as f64 / (n - 1) as f64;
                    for l in 0..n {
                        let w = 1.0 + l as f64 / (n - 1) as f64;
                        let xi = [eps * u, eps * v, eps * eps * w];
                        let g = fp_gradient(xi).expect("box avoids the singular set");
                        for (m, gi) in max.iter_mut().zip(&g) {
                            *m = m.max(gi.abs());
                        }
                    }
                }
            }
            let corner = fp_gradient([eps, eps, eps * eps]).expect("corner off singular set");
            UnboundednessRow {
                eps,
                scaled_d1: eps * max[0],
                scaled_d2: eps * max[1],
                scaled_d3: eps * eps * max[2],
                corner_d1: eps * corner[0].abs(),
            }
        })
        .collect();
    UnboundednessTable { rows, samples_per_axis: n }
}
