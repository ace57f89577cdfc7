//! Approximate weak factorization over reflected Zygmund rectangle pairs,
//! amplitude calibration, and the oscillation lower bound via commutator
//! pairings.
//!
//! For a mean-zero `f` supported on `R` the one-iteration decomposition is
//!
//! ```text
//! f = h_R * T'1_~R  -  1_~R * T h_R  +  e,      h_R := f / T'1_~R,
//! ```
//!
//! where `T'` is the transpose of `T` and `~R` the reflected rectangle. At
//! grid level the decomposition is exact by construction: the same discrete
//! value of `T'1_~R` appears in the division and in the reconstruction, so
//! the residual and the mean of `e` vanish to rounding. Iterating once more
//! with the roles of `R, ~R` and `T, T'` swapped moves the error back onto
//! `R`. The mean oscillation of a symbol is then controlled by two
//! commutator pairings built from the factors.

use std::fmt;

use serde::Serialize;

use crate::fields::{extremal_testfunction, GridFunction, Symbol};
use crate::geometry::{reflect, GeometryError, ReflectedPair, ZygmundRectangle};
use crate::kernels::Kernel;
use crate::operators::{apply_t, apply_t_star, commutator_pairing, OperatorError};

/// Amplitude ladder explored by calibration: `2^4, 2^8, ..., 2^32`.
pub const AMPLITUDE_LADDER_EXPONENTS: [u32; 8] = [4, 8, 12, 16, 20, 24, 28, 32];

/// Calibration requires the measured interior bracket
/// `inf |T 1| >= CAL_BRACKET_FACTOR * |R| * |K(c_~R, c_R)|`.
pub const CAL_BRACKET_FACTOR: f64 = 0.5;

/// Calibration cap on the measured error ratio `sup|e| / <|f|>_R`; one
/// quarter is what the certificate constant needs, a fifth leaves margin.
pub const CAL_ETA_MAX: f64 = 0.2;

/// Mean-zero tolerance for the error term, relative to `<|f|>_R |R|`.
pub const CAL_MEAN_ZERO_TOL: f64 = 1e-8;

/// Certificates assert `osc <= CERT_CONSTANT * (|p1| + |p2|)`, valid while
/// the measured `eta` stays at or below `CERT_ETA_MAX`: the grid identity
/// gives `osc (1 - 2 eta) <= |p1| + |p2|`.
pub const CERT_CONSTANT: f64 = 2.0;
pub const CERT_ETA_MAX: f64 = 0.25;

#[derive(Debug, Clone)]
pub enum AwfError {
    /// No ladder amplitude satisfied the brackets and error bounds.
    CalibrationFailure { kernel: String, detail: String },
    /// A node value of the dividing field fell under half the calibrated
    /// lower bracket.
    DivisionHazard { min_abs: f64, guard: f64 },
    /// Input violates a documented precondition (non-mean-zero f, support
    /// mismatch, bad exponents).
    Precondition(String),
    Geometry(GeometryError),
    Operator(OperatorError),
}

impl fmt::Display for AwfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AwfError::CalibrationFailure { kernel, detail } => {
                write!(f, "calibration failure for kernel '{kernel}': {detail}")
            }
            AwfError::DivisionHazard { min_abs, guard } => write!(
                f,
                "division hazard: node value {min_abs} under the guard {guard}"
            ),
            AwfError::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            AwfError::Geometry(e) => write!(f, "{e}"),
            AwfError::Operator(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AwfError {}

impl From<GeometryError> for AwfError {
    fn from(e: GeometryError) -> Self {
        AwfError::Geometry(e)
    }
}

impl From<OperatorError> for AwfError {
    fn from(e: OperatorError) -> Self {
        AwfError::Operator(e)
    }
}

/// The factors and diagnostics of a factorization run.
#[derive(Debug, Clone)]
pub struct AwfDecomposition {
    pub pair: ReflectedPair,
    /// `h_R = f / T'1_~R`, on the base rectangle.
    pub h_r: GridFunction,
    /// Second-stage factor on the reflected rectangle (twice-iterated only).
    pub h_rtilde: Option<GridFunction>,
    /// Error term: on `~R` after one iteration, back on `R` after two.
    pub e: GridFunction,
    /// Effective amplitude `1 / (|R| |K(c_~R, c_R)|)`; the measured scale of
    /// `1 / |T 1|` on the pair. For the built-in Nagel–Wainger witness this
    /// is `32 A` in terms of the reflection parameter `A`.
    pub amplitude: f64,
    /// Sup over all grid nodes of `|f - reconstruction|`.
    pub residual_sup: f64,
    /// `|integral of e|`.
    pub error_mean: f64,
    /// `sup|e| / <|f|>_R`; zero for `f = 0`.
    pub eta: f64,
    pub f_mean_abs: f64,
    pub f_sup: f64,
}

impl AwfDecomposition {
    /// `sup|h_R| / (amplitude * sup|f|)` — the measured constant in the
    /// factor bound `|h_R| <= C * amplitude * |f|`.
    pub fn h_bound_constant(&self) -> f64 {
        if self.f_sup == 0.0 {
            0.0
        } else {
            self.h_r.sup_norm() / (self.amplitude * self.f_sup)
        }
    }
}

fn node_points(g: &GridFunction) -> Vec<[f64; 3]> {
    (0..g.len()).map(|i| g.node(i)).collect()
}

fn check_mean_zero(f: &GridFunction, volume: f64) -> Result<(), AwfError> {
    let sup = f.sup_norm();
    if f.quadrature().abs() > 1e-10 * sup * volume {
        return Err(AwfError::Precondition(format!(
            "input must be mean-zero: integral {} vs sup {}",
            f.quadrature(),
            sup
        )));
    }
    Ok(())
}

/// Divide `f` nodewise by the field `denom`, guarding against values under
/// a quarter of the leading-order bracket `|R| |K(c_~R, c_R)|`.
fn guarded_divide(
    f: &GridFunction,
    denom: &[f64],
    bracket: f64,
) -> Result<GridFunction, AwfError> {
    let guard = 0.25 * bracket;
    let mut min_abs = f64::INFINITY;
    for &d in denom {
        min_abs = min_abs.min(d.abs());
    }
    if min_abs < guard {
        return Err(AwfError::DivisionHazard { min_abs, guard });
    }
    let samples = f.samples().iter().zip(denom).map(|(&v, &d)| v / d).collect();
    Ok(GridFunction::from_samples(*f.support(), f.res(), samples))
}

/// One iteration of the factorization for a mean-zero `f` on `r`.
pub fn awf_once(
    k: &dyn Kernel,
    r: &ZygmundRectangle,
    f: &GridFunction,
    amplitude: f64,
) -> Result<AwfDecomposition, AwfError> {
    let pair = reflect(r, k, amplitude)?;
    awf_once_with_pair(k, &pair, f)
}

fn awf_once_with_pair(
    k: &dyn Kernel,
    pair: &ReflectedPair,
    f: &GridFunction,
) -> Result<AwfDecomposition, AwfError> {
    awf_once_parts(k, pair, f).map(|(dec, _)| dec)
}

/// One iteration plus the dividing field `T'1_~R` at the nodes of the base
/// rectangle, reused by the second iteration's residual audit.
fn awf_once_parts(
    k: &dyn Kernel,
    pair: &ReflectedPair,
    f: &GridFunction,
) -> Result<(AwfDecomposition, Vec<f64>), AwfError> {
    let r = &pair.base;
    if f.support() != &r.to_box() {
        return Err(AwfError::Precondition("f must be sampled on the base rectangle".into()));
    }
    check_mean_zero(f, r.volume())?;
    let res = f.res();
    let rt_grid = GridFunction::indicator(pair.reflected.to_box(), res);
    let bracket = r.volume() * pair.kernel_at_centers.abs();

    // T'1_~R at the nodes of R, then h_R = f / that.
    let ts1 = apply_t_star(k, &rt_grid, &node_points(f))?;
    let h_r = guarded_divide(f, &ts1, bracket)?;

    // e = 1_~R * T h_R at the nodes of ~R.
    let e_vals = apply_t(k, &h_r, &node_points(&rt_grid))?;
    let e = GridFunction::from_samples(*rt_grid.support(), res, e_vals.clone());

    // Residual of f = h_R T'1_~R - 1_~R T h_R + e at all nodes: on R the two
    // ~R-supported terms vanish, on ~R the last two cancel by construction.
    let mut residual_sup = 0.0f64;
    for ((&fv, &hv), &tv) in f.samples().iter().zip(h_r.samples()).zip(&ts1) {
        residual_sup = residual_sup.max((fv - hv * tv).abs());
    }
    for (&ev, &stored) in e_vals.iter().zip(e.samples()) {
        residual_sup = residual_sup.max((-ev + stored).abs());
    }

    let f_mean_abs = f.mean_abs();
    let eta = if f_mean_abs == 0.0 { 0.0 } else { e.sup_norm() / f_mean_abs };
    let dec = AwfDecomposition {
        pair: pair.clone(),
        h_r,
        h_rtilde: None,
        error_mean: e.quadrature().abs(),
        eta,
        f_mean_abs,
        f_sup: f.sup_norm(),
        amplitude: pair.effective_amplitude(),
        residual_sup,
        e,
    };
    Ok((dec, ts1))
}

/// Twice-iterated factorization: the error term of the first pass, living on
/// the reflected rectangle, is factorized again with the roles of the
/// rectangles and of `T, T'` swapped, leaving a mean-zero error on `R`:
///
/// ```text
/// f = [h_R T'1_~R - 1_~R T h_R] + [h_~R T 1_R - 1_R T' h_~R] + e_R.
/// ```
pub fn awf_twice(
    k: &dyn Kernel,
    r: &ZygmundRectangle,
    f: &GridFunction,
    amplitude: f64,
) -> Result<AwfDecomposition, AwfError> {
    let pair = reflect(r, k, amplitude)?;
    awf_twice_with_pair(k, &pair, f)
}

fn awf_twice_with_pair(
    k: &dyn Kernel,
    pair: &ReflectedPair,
    f: &GridFunction,
) -> Result<AwfDecomposition, AwfError> {
    let (first, ts1) = awf_once_parts(k, pair, f)?;
    let r = &pair.base;
    let res = f.res();
    let r_grid = GridFunction::indicator(r.to_box(), res);
    let bracket = r.volume() * pair.kernel_at_centers.abs();

    // Second stage on g := e_~R, dividing by T1_R on the reflected nodes.
    let g = &first.e;
    let t1r = apply_t(k, &r_grid, &node_points(g))?;
    let h_rtilde = guarded_divide(g, &t1r, bracket)?;

    // e_R = 1_R * T' h_~R at the nodes of R.
    let e_vals = apply_t_star(k, &h_rtilde, &node_points(f))?;
    let e_r = GridFunction::from_samples(*r_grid.support(), res, e_vals.clone());

    // Full reconstruction residual. On R: f - (h_R T'1_~R - T'h_~R + e_R);
    // on ~R: 0 - (-T h_R + h_~R T 1_R), with T h_R = e_~R from the first
    // pass.
    let mut residual_sup = 0.0f64;
    for i in 0..f.len() {
        let recon = first.h_r.samples()[i] * ts1[i] - e_vals[i] + e_r.samples()[i];
        residual_sup = residual_sup.max((f.samples()[i] - recon).abs());
    }
    for i in 0..g.len() {
        let recon = -g.samples()[i] + h_rtilde.samples()[i] * t1r[i];
        residual_sup = residual_sup.max(recon.abs());
    }

    let f_mean_abs = first.f_mean_abs;
    let eta = if f_mean_abs == 0.0 { 0.0 } else { e_r.sup_norm() / f_mean_abs };
    Ok(AwfDecomposition {
        pair: pair.clone(),
        h_r: first.h_r,
        h_rtilde: Some(h_rtilde),
        error_mean: e_r.quadrature().abs(),
        eta,
        f_mean_abs,
        f_sup: first.f_sup,
        amplitude: pair.effective_amplitude(),
        residual_sup,
        e: e_r,
    })
}

/// Outcome of the amplitude search.
#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub kernel: String,
    /// The chosen reflection parameter, reused for every rectangle in an
    /// experiment.
    pub amplitude: f64,
    /// Effective amplitude of the calibration pair.
    pub amplitude_effective: f64,
    /// Measured `[min, max]` of `|T 1| * A_eff` over probe nodes (both
    /// orientations pooled); the lower end must clear `CAL_BRACKET_FACTOR`.
    pub bracket: [f64; 2],
    pub eta_once: f64,
    pub eta_twice: f64,
    pub resolution: [usize; 3],
}

/// Smallest ladder amplitude for which the reflected pair of `r` has the
/// interior kernel bracket and the factorization error bounds on a probe
/// function. The returned amplitude is then reused for all rectangles of the
/// experiment.
pub fn calibrate_amplitude(
    k: &dyn Kernel,
    r: &ZygmundRectangle,
    res: [usize; 3],
) -> Result<Calibration, AwfError> {
    let probe_symbol = Symbol::linear_x3();
    let mut last_reason = String::from("ladder exhausted");
    for &exponent in AMPLITUDE_LADDER_EXPONENTS.iter() {
        let amplitude = (exponent as f64).exp2();
        match try_amplitude(k, r, res, amplitude, &probe_symbol) {
            Ok(cal) => return Ok(cal),
            Err(reason) => {
                last_reason = format!("A=2^{exponent}: {reason}");
            }
        }
    }
    Err(AwfError::CalibrationFailure { kernel: k.name().to_string(), detail: last_reason })
}

fn try_amplitude(
    k: &dyn Kernel,
    r: &ZygmundRectangle,
    res: [usize; 3],
    amplitude: f64,
    probe_symbol: &Symbol,
) -> Result<Calibration, String> {
    let pair = reflect(r, k, amplitude).map_err(|e| e.to_string())?;
    let a_eff = pair.effective_amplitude();
    let r_grid = GridFunction::indicator(r.to_box(), res);
    let rt_grid = GridFunction::indicator(pair.reflected.to_box(), res);

    // Interior brackets in both orientations, normalized by 1/A_eff.
    let fwd = apply_t(k, &r_grid, &node_points(&rt_grid)).map_err(|e| e.to_string())?;
    let bwd = apply_t_star(k, &rt_grid, &node_points(&r_grid)).map_err(|e| e.to_string())?;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for v in fwd.iter().chain(bwd.iter()) {
        let n = v.abs() * a_eff;
        lo = lo.min(n);
        hi = hi.max(n);
    }
    if lo < CAL_BRACKET_FACTOR {
        return Err(format!("bracket floor {lo:.4} under {CAL_BRACKET_FACTOR}"));
    }

    let f = extremal_testfunction(probe_symbol, r, res);
    let mean_scale = f.mean_abs() * r.volume();
    let once = awf_once_with_pair(k, &pair, &f).map_err(|e| e.to_string())?;
    if once.error_mean > CAL_MEAN_ZERO_TOL * mean_scale {
        return Err(format!("one-iteration error mean {} too large", once.error_mean));
    }
    if once.eta > CAL_ETA_MAX {
        return Err(format!("one-iteration eta {} over {CAL_ETA_MAX}", once.eta));
    }
    let twice = awf_twice_with_pair(k, &pair, &f).map_err(|e| e.to_string())?;
    if twice.error_mean > CAL_MEAN_ZERO_TOL * mean_scale {
        return Err(format!("twice-iterated error mean {} too large", twice.error_mean));
    }
    if twice.eta > CAL_ETA_MAX {
        return Err(format!("twice-iterated eta {} over {CAL_ETA_MAX}", twice.eta));
    }
    Ok(Calibration {
        kernel: k.name().to_string(),
        amplitude,
        amplitude_effective: a_eff,
        bracket: [lo, hi],
        eta_once: once.eta,
        eta_twice: twice.eta,
        resolution: res,
    })
}

/// An oscillation bound witnessed by two commutator pairings.
#[derive(Debug, Clone, Serialize)]
pub struct OscillationCertificate {
    pub rectangle: ZygmundRectangle,
    /// Grid-level mean oscillation of the symbol over the rectangle.
    pub osc_value: f64,
    /// `<[b,T] h_R, |R|^-1 1_~R>`.
    pub pairing_1: f64,
    /// `<[b,T] 1_R, |R|^-1 h_~R>`.
    pub pairing_2: f64,
    /// Reflection parameter the certificate was produced with.
    pub amplitude: f64,
    pub amplitude_effective: f64,
    /// `CERT_CONSTANT * (|pairing_1| + |pairing_2|)`.
    pub bound: f64,
    /// Measured error ratio of the factorization run.
    pub eta: f64,
    pub resolution: [usize; 3],
    /// `osc_value <= bound` with `eta` within `CERT_ETA_MAX`.
    pub valid: bool,
}

/// Build the extremal test function of `b` on `r`, factorize it twice, and
/// certify `osc(b, R) <= CERT_CONSTANT * (|p1| + |p2|)` where the pairings
/// use the factors `(h_R, |R|^-1 1_~R)` and `(1_R, |R|^-1 h_~R)`.
pub fn oscillation_lower_bound(
    b: &Symbol,
    k: &dyn Kernel,
    r: &ZygmundRectangle,
    amplitude: f64,
    res: [usize; 3],
) -> Result<OscillationCertificate, AwfError> {
    let b_grid = GridFunction::sample_symbol(b, r, res);
    let osc_value = grid_osc(&b_grid);

    let f = extremal_testfunction(b, r, res);
    if f.sup_norm() == 0.0 {
        // Constant symbol at grid level: osc = 0 and both pairings vanish.
        let pair = reflect(r, k, amplitude)?;
        return Ok(OscillationCertificate {
            rectangle: *r,
            osc_value,
            pairing_1: 0.0,
            pairing_2: 0.0,
            amplitude,
            amplitude_effective: pair.effective_amplitude(),
            bound: 0.0,
            eta: 0.0,
            resolution: res,
            valid: osc_value <= 0.0,
        });
    }

    let pair = reflect(r, k, amplitude)?;
    let dec = awf_twice_with_pair(k, &pair, &f)?;
    let inv_vol = 1.0 / r.volume();
    let psi_1 = GridFunction::indicator(pair.reflected.to_box(), res).scaled(inv_vol);
    let psi_2 = dec.h_rtilde.as_ref().expect("twice-iterated run").scaled(inv_vol);
    let phi_2 = GridFunction::indicator(r.to_box(), res);

    let pairing_1 = commutator_pairing(b, k, &dec.h_r, &psi_1)?;
    let pairing_2 = commutator_pairing(b, k, &phi_2, &psi_2)?;
    let bound = CERT_CONSTANT * (pairing_1.abs() + pairing_2.abs());
    let valid = dec.eta <= CERT_ETA_MAX && osc_value <= bound;
    Ok(OscillationCertificate {
        rectangle: *r,
        osc_value,
        pairing_1,
        pairing_2,
        amplitude,
        amplitude_effective: dec.amplitude,
        bound,
        eta: dec.eta,
        resolution: res,
        valid,
    })
}

/// Grid-level mean oscillation of sampled values: mean of `|v - mean|`,
/// exactly zero when all samples coincide.
pub(crate) fn grid_osc(b_grid: &GridFunction) -> f64 {
    let samples = b_grid.samples();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in samples {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return 0.0;
    }
    let m = b_grid.mean();
    crate::sum::pairwise_sum_by(samples.len(), |i| (samples[i] - m).abs()) / samples.len() as f64
}

/// A lower witness for the oscillation norm built from certified rectangles.
#[derive(Debug, Clone, Serialize)]
pub struct BmoLowerEstimate {
    /// `max osc(b, R) / |R|^alpha` over the certified family.
    pub value: f64,
    pub alpha: f64,
    pub witness: Option<ZygmundRectangle>,
    pub certificates: Vec<OscillationCertificate>,
    pub all_valid: bool,
}

/// Max over rectangles of `osc(b, R) / |R|^(1/p - 1/q)`, each rectangle
/// certified by an oscillation lower bound.
pub fn bmo_lower_via_off(
    b: &Symbol,
    k: &dyn Kernel,
    p: f64,
    q: f64,
    rects: &[ZygmundRectangle],
    amplitude: f64,
    res: [usize; 3],
) -> Result<BmoLowerEstimate, AwfError> {
    if !(p > 1.0 && q > 1.0 && p <= q) {
        return Err(AwfError::Precondition(format!(
            "exponents must satisfy 1 < p <= q, got p={p}, q={q}"
        )));
    }
    let alpha = 1.0 / p - 1.0 / q;
    let mut value = 0.0f64;
    let mut witness = None;
    let mut certificates = Vec::with_capacity(rects.len());
    let mut all_valid = true;
    for r in rects {
        let cert = oscillation_lower_bound(b, k, r, amplitude, res)?;
        let v = cert.osc_value / r.volume().powf(alpha);
        if v > value {
            value = v;
            witness = Some(*r);
        }
        all_valid &= cert.valid;
        certificates.push(cert);
    }
    Ok(BmoLowerEstimate { value, alpha, witness, certificates, all_valid })
}
