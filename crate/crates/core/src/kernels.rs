//! The Zygmund kernel calculus: the decay factor `D_theta`, the size bound
//! `size_Z`, the Nagel–Wainger kernel, the kernel evaluation contract with
//! its continuity modulus and non-degeneracy witness, and sampling-based
//! bound checkers.
//!
//! `D_theta(t1,t2,t3) = (t3/(t1 t2) + t1 t2/t3)^(-theta)` measures deviation
//! from the Zygmund manifold `|z1 z2| = |z3|`; it is maximal (`2^-theta`) on
//! the manifold and invariant under `(t1,t2,t3) -> (s t1, t t2, s t t3)`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelError {
    /// Nonpositive scale, theta out of `(0, 1]`, or similar argument misuse.
    Domain(String),
    /// Evaluation requested on the singular set.
    Singularity { x: [f64; 3], y: [f64; 3] },
    UnknownKernel(String),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::Domain(msg) => write!(f, "domain error: {msg}"),
            KernelError::Singularity { x, y } => {
                write!(f, "kernel evaluated on its singular set: x={x:?}, y={y:?}")
            }
            KernelError::UnknownKernel(name) => write!(f, "unknown kernel '{name}'"),
        }
    }
}

impl std::error::Error for KernelError {}

fn check_scales(t1: f64, t2: f64, t3: f64, theta: f64) -> Result<(), KernelError> {
    if !(t1 > 0.0 && t2 > 0.0 && t3 > 0.0) {
        return Err(KernelError::Domain(format!(
            "scales must be positive, got ({t1}, {t2}, {t3})"
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(KernelError::Domain(format!("theta must lie in (0, 1], got {theta}")));
    }
    Ok(())
}

/// Decay factor `(t3/(t1 t2) + t1 t2/t3)^(-theta)`, in `(0, 2^-theta]`.
pub fn d_theta(t1: f64, t2: f64, t3: f64, theta: f64) -> Result<f64, KernelError> {
    check_scales(t1, t2, t3, theta)?;
    let u = t3 / (t1 * t2);
    Ok((u + 1.0 / u).powf(-theta))
}

/// Size bound `D_theta(t1,t2,t3) / (t1 t2 t3)`, equal to
/// `(t1^2 t2^2 + t3^2)^(-theta) * (t1 t2 t3)^(theta - 1)`.
pub fn size_z(t1: f64, t2: f64, t3: f64, theta: f64) -> Result<f64, KernelError> {
    Ok(d_theta(t1, t2, t3, theta)? / (t1 * t2 * t3))
}

/// The Nagel–Wainger kernel `sign(z1 z2) / ((z1 z2)^2 + z3^2)` with
/// `z = x - y`. Errors when the denominator vanishes.
pub fn nagel_wainger(x: [f64; 3], y: [f64; 3]) -> Result<f64, KernelError> {
    let z1 = x[0] - y[0];
    let z2 = x[1] - y[1];
    let z3 = x[2] - y[2];
    let p = z1 * z2;
    let denom = p * p + z3 * z3;
    if denom == 0.0 {
        return Err(KernelError::Singularity { x, y });
    }
    let sign = if p > 0.0 {
        1.0
    } else if p < 0.0 {
        -1.0
    } else {
        0.0
    };
    Ok(sign / denom)
}

/// Non-degeneracy witness for the Nagel–Wainger kernel: `x = y + (2 d1, 2 d2,
/// 4 d1 d2)`. The offset lies on the Zygmund manifold (`|z1 z2| = |z3|`),
/// where the decay factor is maximal, and strictly beyond the separations
/// `(d1, d2, d1 d2)`. There `|K(x, y)| = 1/(32 d1^2 d2^2)`.
pub fn nw_witness(y: [f64; 3], d1: f64, d2: f64) -> [f64; 3] {
    [y[0] + 2.0 * d1, y[1] + 2.0 * d2, y[2] + 4.0 * d1 * d2]
}

/// Slope of the Lipschitz-type continuity modulus `omega(t) = c * t` used for
/// the Nagel–Wainger kernel. With `omega(t) = t` the admissible-perturbation
/// ratio checked by `check_continuity` has supremum exactly 6, approached by
/// half-separation shifts along the dominant axis (`(1/(1-f)^2 - 1)/f` at
/// `f = 1/2`); adversarial scans reach 5.99999. The extra quarter is float
/// headroom.
pub const NW_MODULUS_SLOPE: f64 = 6.5;

/// Evaluation contract for Zygmund-invariant kernels: pointwise values off
/// the singular set, a size parameter `theta`, an increasing continuity
/// modulus vanishing at zero, and a non-degeneracy witness provider.
pub trait Kernel: Send + Sync {
    fn name(&self) -> &str;

    /// Decay parameter of the size bound the kernel claims to satisfy.
    fn theta(&self) -> f64;

    /// Kernel value; defined whenever `x_i != y_i` for all `i`. Evaluation on
    /// the singular set is an error, never a clamped value.
    fn evaluate(&self, x: [f64; 3], y: [f64; 3]) -> Result<f64, KernelError>;

    /// Continuity modulus `omega: [0,1] -> [0,inf)`, increasing, `omega(0)=0`.
    fn modulus(&self, t: f64) -> f64;

    /// A point `x` with `|x1-y1| > d1`, `|x2-y2| > d2`, `|x3-y3| > d1*d2` at
    /// which `|K(x, y)|` is comparable to the maximal size bound
    /// `1/(d1^2 d2^2)`.
    fn witness(&self, y: [f64; 3], d1: f64, d2: f64) -> Result<[f64; 3], KernelError>;

    /// Evaluate one grid row `K(x, (y1, y2, y3))` for `y3` in `y3s` (with
    /// the arguments swapped when `transpose` is set) into `out`. Quadrature
    /// loops call this; kernels should override it when row-constant work
    /// can be hoisted.
    fn evaluate_row(
        &self,
        x: [f64; 3],
        y1: f64,
        y2: f64,
        y3s: &[f64],
        transpose: bool,
        out: &mut [f64],
    ) -> Result<(), KernelError> {
        for (o, &y3) in out.iter_mut().zip(y3s) {
            let y = [y1, y2, y3];
            *o = if transpose { self.evaluate(y, x)? } else { self.evaluate(x, y)? };
        }
        Ok(())
    }
}

/// The model Zygmund-invariant convolution kernel.
#[derive(Debug, Clone)]
pub struct NagelWainger {
    theta: f64,
}

impl NagelWainger {
    pub fn new(theta: f64) -> Self {
        assert!(theta > 0.0 && theta <= 1.0, "theta must lie in (0, 1]");
        NagelWainger { theta }
    }
}

impl Default for NagelWainger {
    fn default() -> Self {
        NagelWainger { theta: 1.0 }
    }
}

impl Kernel for NagelWainger {
    fn name(&self) -> &str {
        "nagel-wainger"
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn evaluate(&self, x: [f64; 3], y: [f64; 3]) -> Result<f64, KernelError> {
        nagel_wainger(x, y)
    }

    fn modulus(&self, t: f64) -> f64 {
        NW_MODULUS_SLOPE * t
    }

    fn witness(&self, y: [f64; 3], d1: f64, d2: f64) -> Result<[f64; 3], KernelError> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(KernelError::Domain(format!(
                "witness scales must be positive, got ({d1}, {d2})"
            )));
        }
        Ok(nw_witness(y, d1, d2))
    }

    fn evaluate_row(
        &self,
        x: [f64; 3],
        y1: f64,
        y2: f64,
        y3s: &[f64],
        _transpose: bool,
        out: &mut [f64],
    ) -> Result<(), KernelError> {
        // The kernel is even in x - y, so the transposed row coincides with
        // the direct one. The product z1 z2 is constant along the row.
        let p = (x[0] - y1) * (x[1] - y2);
        let sign = if p > 0.0 {
            1.0
        } else if p < 0.0 {
            -1.0
        } else {
            0.0
        };
        let p2 = p * p;
        for (o, &y3) in out.iter_mut().zip(y3s) {
            let z3 = x[2] - y3;
            let den = p2 + z3 * z3;
            if den == 0.0 {
                return Err(KernelError::Singularity { x, y: [y1, y2, y3] });
            }
            *o = sign / den;
        }
        Ok(())
    }
}

/// Degenerate test kernel `K = 0`; fails every non-degeneracy lower bound.
#[derive(Debug, Clone)]
pub struct ZeroStub {
    theta: f64,
}

impl Default for ZeroStub {
    fn default() -> Self {
        ZeroStub { theta: 1.0 }
    }
}

impl Kernel for ZeroStub {
    fn name(&self) -> &str {
        "zero-stub"
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn evaluate(&self, _x: [f64; 3], _y: [f64; 3]) -> Result<f64, KernelError> {
        Ok(0.0)
    }

    fn modulus(&self, t: f64) -> f64 {
        t
    }

    fn witness(&self, y: [f64; 3], d1: f64, d2: f64) -> Result<[f64; 3], KernelError> {
        Ok(nw_witness(y, d1, d2))
    }
}

/// Test kernel `K = 1`; satisfies the pointwise lower bound trivially but
/// violates the size estimate at large separation.
#[derive(Debug, Clone)]
pub struct ConstantStub {
    theta: f64,
}

impl Default for ConstantStub {
    fn default() -> Self {
        ConstantStub { theta: 1.0 }
    }
}

impl Kernel for ConstantStub {
    fn name(&self) -> &str {
        "constant-stub"
    }

    fn theta(&self) -> f64 {
        self.theta
    }

    fn evaluate(&self, _x: [f64; 3], _y: [f64; 3]) -> Result<f64, KernelError> {
        Ok(1.0)
    }

    fn modulus(&self, t: f64) -> f64 {
        t
    }

    fn witness(&self, y: [f64; 3], d1: f64, d2: f64) -> Result<[f64; 3], KernelError> {
        Ok(nw_witness(y, d1, d2))
    }
}

/// Kernel catalog keyed by name, extensible with user-registered factories.
type KernelFactory = Arc<dyn Fn(f64) -> Arc<dyn Kernel> + Send + Sync>;

pub struct KernelRegistry {
    factories: HashMap<String, KernelFactory>,
}

impl KernelRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = KernelRegistry { factories: HashMap::new() };
        reg.register("nagel-wainger", |theta| Arc::new(NagelWainger::new(theta)));
        reg.register("zero-stub", |theta| Arc::new(ZeroStub { theta }));
        reg.register("constant-stub", |theta| Arc::new(ConstantStub { theta }));
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(f64) -> Arc<dyn Kernel> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Arc::new(factory));
    }

    pub fn get(&self, name: &str, theta: f64) -> Result<Arc<dyn Kernel>, KernelError> {
        self.factories
            .get(name)
            .map(|f| f(theta))
            .ok_or_else(|| KernelError::UnknownKernel(name.to_string()))
    }
}

/// Resolve a built-in kernel by name.
pub fn kernel_by_name(name: &str, theta: f64) -> Result<Arc<dyn Kernel>, KernelError> {
    KernelRegistry::with_builtins().get(name, theta)
}

/// Result of a sampling-based bound check.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckReport {
    pub max_ratio: f64,
    pub argmax_sample: ([f64; 3], [f64; 3]),
    pub samples: usize,
}

/// Max over sampled pairs of `|K(x,y)| / size_Z(|x1-y1|, |x2-y2|, |x3-y3|)`.
pub fn check_size_bound(
    k: &dyn Kernel,
    sampler: &mut dyn FnMut() -> ([f64; 3], [f64; 3]),
    n: usize,
) -> Result<BoundCheckReport, KernelError> {
    let theta = k.theta();
    let mut max_ratio = 0.0;
    let mut argmax = ([0.0; 3], [0.0; 3]);
    for _ in 0..n {
        let (x, y) = sampler();
        let t1 = (x[0] - y[0]).abs();
        let t2 = (x[1] - y[1]).abs();
        let t3 = (x[2] - y[2]).abs();
        let bound = size_z(t1, t2, t3, theta)?;
        let ratio = k.evaluate(x, y)?.abs() / bound;
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = (x, y);
        }
    }
    Ok(BoundCheckReport { max_ratio, argmax_sample: argmax, samples: n })
}

/// One admissible continuity sample: a separated pair plus perturbed copies
/// of both points, each perturbation at most half the matching separation.
#[derive(Debug, Clone, Copy)]
pub struct ContinuitySample {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub x_pert: [f64; 3],
    pub y_pert: [f64; 3],
}

/// Max over samples and over the four continuity variants of
/// `|K(perturbed) - K| / (omega(relative shift) * size_Z)`. The variants are
/// the first-axis shift, the joint (2,3) shift, and the symmetric shifts in
/// the second argument.
pub fn check_continuity(
    k: &dyn Kernel,
    sampler: &mut dyn FnMut() -> ContinuitySample,
    n: usize,
) -> Result<BoundCheckReport, KernelError> {
    let theta = k.theta();
    let mut max_ratio = 0.0;
    let mut argmax = ([0.0; 3], [0.0; 3]);
    for _ in 0..n {
        let s = sampler();
        let t = [
            (s.x[0] - s.y[0]).abs(),
            (s.x[1] - s.y[1]).abs(),
            (s.x[2] - s.y[2]).abs(),
        ];
        for (i, &ti) in t.iter().enumerate() {
            let dx = (s.x_pert[i] - s.x[i]).abs();
            let dy = (s.y_pert[i] - s.y[i]).abs();
            if dx > ti / 2.0 || dy > ti / 2.0 {
                return Err(KernelError::Domain(format!(
                    "perturbation exceeds half separation on axis {i}: dx={dx}, dy={dy}, t={ti}"
                )));
            }
        }
        let size = size_z(t[0], t[1], t[2], theta)?;
        let base = k.evaluate(s.x, s.y)?;

        let mut push = |num: f64, arg: f64| {
            // Zero perturbation: the difference also vanishes; treat 0/0 as 0.
            let ratio = if num == 0.0 { 0.0 } else { num / (k.modulus(arg) * size) };
            if ratio > max_ratio {
                max_ratio = ratio;
                argmax = (s.x, s.y);
            }
        };

        // First-axis shift of x.
        let x1 = [s.x_pert[0], s.x[1], s.x[2]];
        push((k.evaluate(x1, s.y)? - base).abs(), (s.x_pert[0] - s.x[0]).abs() / t[0]);
        // Joint (2,3) shift of x.
        let x23 = [s.x[0], s.x_pert[1], s.x_pert[2]];
        push(
            (k.evaluate(x23, s.y)? - base).abs(),
            (s.x_pert[1] - s.x[1]).abs() / t[1] + (s.x_pert[2] - s.x[2]).abs() / t[2],
        );
        // Symmetric variants in y.
        let y1 = [s.y_pert[0], s.y[1], s.y[2]];
        push((k.evaluate(s.x, y1)? - base).abs(), (s.y_pert[0] - s.y[0]).abs() / t[0]);
        let y23 = [s.y[0], s.y_pert[1], s.y_pert[2]];
        push(
            (k.evaluate(s.x, y23)? - base).abs(),
            (s.y_pert[1] - s.y[1]).abs() / t[1] + (s.y_pert[2] - s.y[2]).abs() / t[2],
        );
    }
    Ok(BoundCheckReport { max_ratio, argmax_sample: argmax, samples: n })
}

/// Deterministic samplers for the bound checkers.
pub mod samplers {
    use super::*;

    /// Separated point pairs with log-uniform coordinate gaps over several
    /// decades. With `on_manifold` the third gap is pinned to `z1*z2`, where
    /// the size bound is tightest.
    pub struct SeparatedPairs {
        rng: ChaCha8Rng,
        pub on_manifold: bool,
    }

    impl SeparatedPairs {
        pub fn new(seed: u64, on_manifold: bool) -> Self {
            SeparatedPairs { rng: ChaCha8Rng::seed_from_u64(seed), on_manifold }
        }

        fn log_uniform(&mut self, lo_exp: f64, hi_exp: f64) -> f64 {
            let e = self.rng.gen_range(lo_exp..hi_exp);
            e.exp2()
        }

        pub fn sample(&mut self) -> ([f64; 3], [f64; 3]) {
            let y = [
                self.rng.gen_range(-1.0..1.0),
                self.rng.gen_range(-1.0..1.0),
                self.rng.gen_range(-1.0..1.0),
            ];
            let s1 = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let s2 = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let s3 = if self.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let z1 = s1 * self.log_uniform(-8.0, 4.0);
            let z2 = s2 * self.log_uniform(-8.0, 4.0);
            let z3 = if self.on_manifold {
                s3 * (z1 * z2).abs()
            } else {
                s3 * self.log_uniform(-12.0, 6.0)
            };
            (add(y, [z1, z2, z3]), y)
        }
    }

    /// Admissible continuity samples: separated pairs plus perturbations
    /// bounded by half the matching separation.
    pub struct ContinuitySamples {
        pairs: SeparatedPairs,
        /// Perturbation size as a fraction of the per-axis separation, in
        /// `(0, 1/2]`.
        pub max_fraction: f64,
    }

    impl ContinuitySamples {
        pub fn new(seed: u64) -> Self {
            ContinuitySamples {
                pairs: SeparatedPairs::new(seed, false),
                max_fraction: 0.5,
            }
        }

        pub fn sample(&mut self) -> ContinuitySample {
            let (x, y) = self.pairs.sample();
            let mut x_pert = x;
            let mut y_pert = y;
            for i in 0..3 {
                let t = (x[i] - y[i]).abs();
                let fx: f64 = self.pairs.rng.gen_range(0.0..self.max_fraction);
                let fy: f64 = self.pairs.rng.gen_range(0.0..self.max_fraction);
                let sx = if self.pairs.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let sy = if self.pairs.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                x_pert[i] = x[i] + sx * fx * t;
                y_pert[i] = y[i] + sy * fy * t;
            }
            ContinuitySample { x, y, x_pert, y_pert }
        }
    }

    fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn d_theta_examples() {
        assert_relative_eq!(d_theta(1.0, 1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(d_theta(1.0, 1.0, 2.0, 1.0).unwrap(), 0.4);
        // Dilation invariance of the ratio arguments.
        for (s, t) in [(2.0, 3.0), (0.25, 8.0), (1e3, 1e-2)] {
            let v = d_theta(s, t, s * t, 0.7).unwrap();
            assert_relative_eq!(v, 0.5f64.powf(0.7), max_relative = 1e-14);
        }
    }

    #[test]
    fn d_theta_rejects_bad_arguments() {
        assert!(d_theta(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(d_theta(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(d_theta(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(d_theta(1.0, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn size_z_examples() {
        assert_relative_eq!(size_z(1.0, 1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(size_z(1.0, 1.0, 1.0, 0.5).unwrap(), 0.5f64.sqrt());
    }

    #[test]
    fn size_z_rewritten_form_agrees() {
        // D_theta/(t1 t2 t3) = (t1^2 t2^2 + t3^2)^-theta (t1 t2 t3)^(theta-1).
        let cases = [
            (0.3, 1.7, 0.9, 0.6),
            (2.0, 0.5, 4.0, 1.0),
            (1e-3, 1e2, 5.0, 0.25),
        ];
        for (t1, t2, t3, theta) in cases {
            let a = size_z(t1, t2, t3, theta).unwrap();
            let b = (t1 * t1 * t2 * t2 + t3 * t3).powf(-theta)
                * (t1 * t2 * t3).powf(theta - 1.0);
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn nagel_wainger_examples() {
        assert_relative_eq!(nagel_wainger([1.0, 1.0, 1.0], [0.0; 3]).unwrap(), 0.5);
        assert_relative_eq!(nagel_wainger([-1.0, 1.0, 1.0], [0.0; 3]).unwrap(), -0.5);
        assert_relative_eq!(nagel_wainger([2.0, 3.0, 6.0], [0.0; 3]).unwrap(), 1.0 / 72.0);
        // (st)^2 K(rho_{s,t} z) = K(z) at z = (1,1,1), (s,t) = (2,3).
        let lhs = 36.0 * nagel_wainger([2.0, 3.0, 6.0], [0.0; 3]).unwrap();
        assert_relative_eq!(lhs, 0.5);
    }

    #[test]
    fn nagel_wainger_singularity() {
        let err = nagel_wainger([0.0, 5.0, 0.0], [0.0; 3]).unwrap_err();
        assert!(matches!(err, KernelError::Singularity { .. }));
        // Off-diagonal zero of the sign factor is a legitimate value.
        assert_eq!(nagel_wainger([0.0, 5.0, 1.0], [0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn nw_witness_examples() {
        assert_eq!(nw_witness([0.0; 3], 1.0, 1.0), [2.0, 2.0, 4.0]);
        let x = nw_witness([0.0; 3], 1.0, 1.0);
        assert_relative_eq!(nagel_wainger(x, [0.0; 3]).unwrap(), 1.0 / 32.0);
        let x = nw_witness([1.0, 1.0, 1.0], 1.0, 2.0);
        assert_eq!(x, [3.0, 5.0, 9.0]);
        assert!((x[0] - 1.0).abs() > 1.0 && (x[1] - 1.0).abs() > 2.0 && (x[2] - 1.0).abs() > 2.0);
    }

    #[test]
    fn nw_witness_locality_bounds() {
        // The witness satisfies both the separations and the derived
        // locality bounds |x_i - y_i| <= 4 d_i (4 d1 d2 on the third axis).
        let y = [0.3, -0.7, 2.0];
        for (d1, d2) in [(0.1, 0.2), (1.0, 1.0), (3.0, 0.01)] {
            let x = nw_witness(y, d1, d2);
            let z = [(x[0] - y[0]).abs(), (x[1] - y[1]).abs(), (x[2] - y[2]).abs()];
            assert!(z[0] > d1 && z[1] > d2 && z[2] > d1 * d2);
            let c = 4.0 * (1.0 + 1e-12);
            assert!(z[0] <= c * d1 && z[1] <= c * d2 && z[2] <= c * d1 * d2);
        }
    }

    #[test]
    fn nw_witness_scaling() {
        // Witness for (s d1, t d2) is the dilation image structure; |K|
        // scales by (st)^-2.
        let (d1, d2) = (0.5, 1.5);
        let (s, t) = (3.0, 0.25);
        let k0 = nagel_wainger(nw_witness([0.0; 3], d1, d2), [0.0; 3]).unwrap();
        let k1 = nagel_wainger(nw_witness([0.0; 3], s * d1, t * d2), [0.0; 3]).unwrap();
        assert_relative_eq!(k1 * (s * t).powi(2), k0, max_relative = 1e-12);
    }

    #[test]
    fn size_bound_nagel_wainger_theta1_is_tight() {
        // |K| = size_Z exactly at theta = 1, so the max ratio is 1.
        let k = NagelWainger::default();
        let mut sampler = samplers::SeparatedPairs::new(3, true);
        let mut f = move || sampler.sample();
        let report = check_size_bound(&k, &mut f, 2000).unwrap();
        assert!(report.max_ratio <= 1.0 + 1e-12, "ratio {}", report.max_ratio);
        assert!(report.max_ratio > 0.99, "ratio {}", report.max_ratio);
    }

    #[test]
    fn size_bound_zero_stub() {
        let k = ZeroStub::default();
        let mut sampler = samplers::SeparatedPairs::new(4, false);
        let mut f = move || sampler.sample();
        let report = check_size_bound(&k, &mut f, 500).unwrap();
        assert_eq!(report.max_ratio, 0.0);
    }

    #[test]
    fn size_bound_constant_stub_grows() {
        // K = 1 has ratio 1/size_Z, unbounded as separation grows: at
        // manifold separation lambda the ratio is 2 lambda^4.
        let k = ConstantStub::default();
        let at_scale = |lambda: f64| {
            let mut f = move || ([lambda, lambda, lambda * lambda], [0.0f64; 3]);
            check_size_bound(&k, &mut f, 1).unwrap().max_ratio
        };
        let small = at_scale(1.0);
        let large = at_scale(4.0);
        assert_relative_eq!(small, 2.0);
        assert_relative_eq!(large, 2.0 * 4f64.powi(4));
        assert!(large > small);
    }

    #[test]
    fn continuity_zero_perturbation_gives_zero_ratio() {
        let k = NagelWainger::default();
        let mut pairs = samplers::SeparatedPairs::new(11, false);
        let mut f = move || {
            let (x, y) = pairs.sample();
            ContinuitySample { x, y, x_pert: x, y_pert: y }
        };
        let report = check_continuity(&k, &mut f, 200).unwrap();
        assert_eq!(report.max_ratio, 0.0);
    }

    #[test]
    fn continuity_nagel_wainger_finite() {
        let k = NagelWainger::default();
        let mut s = samplers::ContinuitySamples::new(7);
        let mut f = move || s.sample();
        let report = check_continuity(&k, &mut f, 10_000).unwrap();
        assert!(report.max_ratio.is_finite());
        // With omega(t) = NW_MODULUS_SLOPE * t the calibrated ratio is <= 1.
        assert!(report.max_ratio <= 1.0, "ratio {}", report.max_ratio);
    }

    #[test]
    fn continuity_rejects_inadmissible_perturbation() {
        let k = NagelWainger::default();
        let mut f = || ContinuitySample {
            x: [1.0, 1.0, 1.0],
            y: [0.0; 3],
            // Shift of 0.9 > separation/2 on axis 1.
            x_pert: [1.9, 1.0, 1.0],
            y_pert: [0.0; 3],
        };
        assert!(check_continuity(&k, &mut f, 1).is_err());
    }

    #[test]
    fn continuity_accepts_exact_half_separation() {
        let k = NagelWainger::default();
        let mut f = || ContinuitySample {
            x: [1.0, 1.0, 1.0],
            y: [0.0; 3],
            x_pert: [1.5, 1.0, 1.0],
            y_pert: [0.0; 3],
        };
        assert!(check_continuity(&k, &mut f, 1).is_ok());
    }

    #[test]
    fn registry_resolves_builtins() {
        for name in ["nagel-wainger", "zero-stub", "constant-stub"] {
            assert_eq!(kernel_by_name(name, 1.0).unwrap().name(), name);
        }
        assert!(kernel_by_name("no-such", 1.0).is_err());
    }

    proptest! {
        /// d_theta <= 2^-theta with the max on the Zygmund manifold t3 = t1 t2.
        #[test]
        fn d_theta_maximized_on_manifold(
            t1 in 1e-4f64..1e4, t2 in 1e-4f64..1e4, t3 in 1e-6f64..1e6,
            theta in 0.05f64..1.0,
        ) {
            let v = d_theta(t1, t2, t3, theta).unwrap();
            let cap = 0.5f64.powf(theta);
            prop_assert!(v <= cap * (1.0 + 1e-12));
            let on = d_theta(t1, t2, t1 * t2, theta).unwrap();
            prop_assert!((on - cap).abs() <= 1e-12 * cap);
        }

        /// size_Z homogeneity: size_Z(s t1, t t2, s t t3) (st)^2 = size_Z(t1,t2,t3).
        #[test]
        fn size_z_homogeneity(
            t1 in 1e-2f64..1e2, t2 in 1e-2f64..1e2, t3 in 1e-3f64..1e3,
            s in -10.0f64..10.0, t in -10.0f64..10.0,
            theta in 0.05f64..1.0,
        ) {
            let (s, t) = (s.exp2(), t.exp2());
            let base = size_z(t1, t2, t3, theta).unwrap();
            let scaled = size_z(s * t1, t * t2, s * t * t3, theta).unwrap();
            prop_assert!((scaled * (s * t).powi(2) - base).abs() <= 1e-12 * base);
        }

        /// K(z) = (st)^2 K(rho_{s,t} z) for the Nagel–Wainger kernel.
        #[test]
        fn nagel_wainger_homogeneity(
            z1 in 1e-2f64..1e2, z2 in 1e-2f64..1e2, z3 in 1e-3f64..1e3,
            s in -10.0f64..10.0, t in -10.0f64..10.0,
            sgn1 in prop::bool::ANY, sgn3 in prop::bool::ANY,
        ) {
            let (s, t) = (s.exp2(), t.exp2());
            let z1 = if sgn1 { z1 } else { -z1 };
            let z3 = if sgn3 { z3 } else { -z3 };
            let base = nagel_wainger([z1, z2, z3], [0.0; 3]).unwrap();
            let scaled =
                nagel_wainger([s * z1, t * z2, s * t * z3], [0.0; 3]).unwrap();
            prop_assert!(
                (scaled * (s * t).powi(2) - base).abs() <= 1e-12 * base.abs()
            );
        }
    }
}
