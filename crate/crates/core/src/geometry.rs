//! Intervals, Zygmund rectangles, Zygmund dilations, dyadic enumeration and
//! reflected rectangles.
//!
//! A Zygmund rectangle is an axis-parallel box `I1 x I2 x I3` whose side
//! lengths satisfy `len(I3) = len(I1) * len(I2)`. The constraint is exact in
//! exact arithmetic; a small relative tolerance absorbs float rounding only.
//!
//! Rectangles are stored closed-interval; containment and disjointness use
//! half-open semantics so that dyadic tilings never double count a shared
//! face.

use std::fmt;
use std::sync::Arc;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeStruct, Serializer};
use serde::{Deserialize, Serialize};

use crate::kernels::{Kernel, KernelError};

/// Relative tolerance on `len(I3) = len(I1)*len(I2)`.
pub const DEFAULT_ZYGMUND_TOL: f64 = 1e-12;

/// Lower-bound constant for accepting a non-degeneracy witness: the point
/// returned by the kernel must satisfy `|K(x, c_R)| >= REFLECT_WITNESS_MIN / (A |R|)`.
/// The built-in Nagel–Wainger witness attains exactly `1/32`, so half of that
/// is the rejection threshold.
pub const REFLECT_WITNESS_MIN: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometryError {
    /// `hi <= lo` or a non-finite endpoint.
    InvalidInterval { lo: f64, hi: f64 },
    /// Dilation factors must be strictly positive and finite.
    InvalidDilation { s: f64, t: f64 },
    /// Side lengths violate the Zygmund constraint beyond tolerance.
    NotZygmund { l1: f64, l2: f64, l3: f64, tol: f64 },
    /// The kernel's witness point violates separation or the lower bound.
    WitnessFailure { kernel: String, detail: String },
    Kernel(KernelError),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidInterval { lo, hi } => {
                write!(f, "invalid interval [{lo}, {hi}]: need lo < hi, finite")
            }
            GeometryError::InvalidDilation { s, t } => {
                write!(f, "invalid dilation (s, t) = ({s}, {t}): need s, t > 0")
            }
            GeometryError::NotZygmund { l1, l2, l3, tol } => write!(
                f,
                "not a Zygmund rectangle: |{l3} - {l1}*{l2}| > {tol} * {l3}"
            ),
            GeometryError::WitnessFailure { kernel, detail } => {
                write!(f, "non-degeneracy witness failure for kernel '{kernel}': {detail}")
            }
            GeometryError::Kernel(e) => write!(f, "kernel error: {e}"),
        }
    }
}

impl std::error::Error for GeometryError {}

impl From<KernelError> for GeometryError {
    fn from(e: KernelError) -> Self {
        GeometryError::Kernel(e)
    }
}

/// Closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GeometryError> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(GeometryError::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    /// Interval of given length centered at `center`.
    pub fn from_center(center: f64, length: f64) -> Result<Self, GeometryError> {
        let lo = center - 0.5 * length;
        Interval::new(lo, lo + length)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Half-open membership: `lo <= x < hi`.
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    /// Half-open disjointness; adjacent intervals sharing an endpoint count
    /// as disjoint.
    pub fn disjoint(&self, other: &Interval) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }

    /// Distance between the closed intervals (0 if they overlap).
    pub fn dist(&self, other: &Interval) -> f64 {
        if other.lo > self.hi {
            other.lo - self.hi
        } else if self.lo > other.hi {
            self.lo - other.hi
        } else {
            0.0
        }
    }

    /// Distance from a point to the closed interval.
    pub fn dist_to_point(&self, x: f64) -> f64 {
        if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        }
    }

    pub fn translated(&self, dx: f64) -> Interval {
        Interval { lo: self.lo + dx, hi: self.hi + dx }
    }

    pub fn scaled(&self, s: f64) -> Interval {
        debug_assert!(s > 0.0);
        Interval { lo: self.lo * s, hi: self.hi * s }
    }

    /// Interval with the same center and `c` times the length.
    pub fn rescaled_about_center(&self, c: f64) -> Interval {
        let half = 0.5 * self.length() * c;
        let mid = self.center();
        Interval { lo: mid - half, hi: mid + half }
    }

    /// Is `self` contained in `other` (closed-set containment, with a tiny
    /// slack for float endpoints)? The slack combines a relative term with
    /// an absolute one at the rounding scale of the endpoints, so geometric
    /// containment that is tight in exact arithmetic still passes.
    pub fn subset_of(&self, other: &Interval) -> bool {
        let slack = 1e-12 * other.length()
            + 4.0 * f64::EPSILON * other.lo.abs().max(other.hi.abs());
        self.lo >= other.lo - slack && self.hi <= other.hi + slack
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (self.lo, self.hi).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (lo, hi) = <(f64, f64)>::deserialize(d)?;
        Interval::new(lo, hi).map_err(de::Error::custom)
    }
}

/// Axis-parallel box in R^3 without the Zygmund constraint. Used for
/// experiment domains and grid supports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub i1: Interval,
    pub i2: Interval,
    pub i3: Interval,
}

impl Box3 {
    pub fn new(i1: Interval, i2: Interval, i3: Interval) -> Self {
        Box3 { i1, i2, i3 }
    }

    pub fn unit_cube() -> Self {
        let u = Interval::new(0.0, 1.0).unwrap();
        Box3 { i1: u, i2: u, i3: u }
    }

    pub fn axis(&self, j: usize) -> &Interval {
        match j {
            0 => &self.i1,
            1 => &self.i2,
            2 => &self.i3,
            _ => panic!("axis index out of range: {j}"),
        }
    }

    pub fn volume(&self) -> f64 {
        self.i1.length() * self.i2.length() * self.i3.length()
    }

    pub fn center(&self) -> [f64; 3] {
        [self.i1.center(), self.i2.center(), self.i3.center()]
    }

    pub fn side_lengths(&self) -> [f64; 3] {
        [self.i1.length(), self.i2.length(), self.i3.length()]
    }

    /// Half-open membership in all three axes.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.i1.contains(p[0]) && self.i2.contains(p[1]) && self.i3.contains(p[2])
    }

    /// Coordinate-wise gaps to a point; `None` if some gap vanishes.
    pub fn separation_gaps_to_point(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let g = [
            self.i1.dist_to_point(p[0]),
            self.i2.dist_to_point(p[1]),
            self.i3.dist_to_point(p[2]),
        ];
        if g.iter().all(|&x| x > 0.0) {
            Some(g)
        } else {
            None
        }
    }

    /// Coordinate-wise gaps to another box; `None` if some gap vanishes.
    pub fn separation_gaps(&self, other: &Box3) -> Option<[f64; 3]> {
        let g = [
            self.i1.dist(&other.i1),
            self.i2.dist(&other.i2),
            self.i3.dist(&other.i3),
        ];
        if g.iter().all(|&x| x > 0.0) {
            Some(g)
        } else {
            None
        }
    }

    pub fn subset_of(&self, other: &Box3) -> bool {
        self.i1.subset_of(&other.i1) && self.i2.subset_of(&other.i2) && self.i3.subset_of(&other.i3)
    }
}

/// Does `(l1, l2, l3)` satisfy `|l3 - l1*l2| <= tol * l3`?
pub fn is_zygmund_lengths(l1: f64, l2: f64, l3: f64, tol: f64) -> bool {
    (l3 - l1 * l2).abs() <= tol * l3
}

/// Do the three intervals form a Zygmund rectangle at the given tolerance?
pub fn is_zygmund(i1: &Interval, i2: &Interval, i3: &Interval, tol: f64) -> bool {
    is_zygmund_lengths(i1.length(), i2.length(), i3.length(), tol)
}

/// Axis-parallel box `I1 x I2 x I3` with `len(I3) = len(I1)*len(I2)` up to a
/// relative tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZygmundRectangle {
    i1: Interval,
    i2: Interval,
    i3: Interval,
    zygmund_tol: f64,
}

impl ZygmundRectangle {
    pub fn new(i1: Interval, i2: Interval, i3: Interval) -> Result<Self, GeometryError> {
        Self::with_tol(i1, i2, i3, DEFAULT_ZYGMUND_TOL)
    }

    pub fn with_tol(
        i1: Interval,
        i2: Interval,
        i3: Interval,
        tol: f64,
    ) -> Result<Self, GeometryError> {
        if !is_zygmund(&i1, &i2, &i3, tol) {
            return Err(GeometryError::NotZygmund {
                l1: i1.length(),
                l2: i2.length(),
                l3: i3.length(),
                tol,
            });
        }
        Ok(ZygmundRectangle { i1, i2, i3, zygmund_tol: tol })
    }

    /// The Zygmund cube `[0,1]^3`.
    pub fn unit_cube() -> Self {
        let u = Interval::new(0.0, 1.0).unwrap();
        ZygmundRectangle::new(u, u, u).unwrap()
    }

    /// Rectangle centered at `c` with side lengths `(l1, l2, l1*l2)`.
    pub fn from_center(c: [f64; 3], l1: f64, l2: f64) -> Result<Self, GeometryError> {
        ZygmundRectangle::new(
            Interval::from_center(c[0], l1)?,
            Interval::from_center(c[1], l2)?,
            Interval::from_center(c[2], l1 * l2)?,
        )
    }

    pub fn i1(&self) -> &Interval {
        &self.i1
    }

    pub fn i2(&self) -> &Interval {
        &self.i2
    }

    pub fn i3(&self) -> &Interval {
        &self.i3
    }

    pub fn axis(&self, j: usize) -> &Interval {
        match j {
            0 => &self.i1,
            1 => &self.i2,
            2 => &self.i3,
            _ => panic!("axis index out of range: {j}"),
        }
    }

    pub fn zygmund_tol(&self) -> f64 {
        self.zygmund_tol
    }

    pub fn center(&self) -> [f64; 3] {
        [self.i1.center(), self.i2.center(), self.i3.center()]
    }

    pub fn side_lengths(&self) -> [f64; 3] {
        [self.i1.length(), self.i2.length(), self.i3.length()]
    }

    pub fn volume(&self) -> f64 {
        self.i1.length() * self.i2.length() * self.i3.length()
    }

    pub fn to_box(&self) -> Box3 {
        Box3 { i1: self.i1, i2: self.i2, i3: self.i3 }
    }

    /// Half-open membership.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        self.to_box().contains(p)
    }

    pub fn translated(&self, d: [f64; 3]) -> ZygmundRectangle {
        ZygmundRectangle {
            i1: self.i1.translated(d[0]),
            i2: self.i2.translated(d[1]),
            i3: self.i3.translated(d[2]),
            zygmund_tol: self.zygmund_tol,
        }
    }
}

impl Serialize for ZygmundRectangle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ZygmundRectangle", 3)?;
        st.serialize_field("i1", &self.i1)?;
        st.serialize_field("i2", &self.i2)?;
        st.serialize_field("i3", &self.i3)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for ZygmundRectangle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RectVisitor;
        impl<'de> Visitor<'de> for RectVisitor {
            type Value = ZygmundRectangle;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("object with fields i1, i2, i3")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let (mut i1, mut i2, mut i3) = (None, None, None);
                while let Some(key) = map.next_key::<String>()? {
                    match key.as_str() {
                        "i1" => i1 = Some(map.next_value::<Interval>()?),
                        "i2" => i2 = Some(map.next_value::<Interval>()?),
                        "i3" => i3 = Some(map.next_value::<Interval>()?),
                        other => return Err(de::Error::unknown_field(other, &["i1", "i2", "i3"])),
                    }
                }
                let i1 = i1.ok_or_else(|| de::Error::missing_field("i1"))?;
                let i2 = i2.ok_or_else(|| de::Error::missing_field("i2"))?;
                let i3 = i3.ok_or_else(|| de::Error::missing_field("i3"))?;
                ZygmundRectangle::new(i1, i2, i3).map_err(de::Error::custom)
            }
        }
        d.deserialize_struct("ZygmundRectangle", &["i1", "i2", "i3"], RectVisitor)
    }
}

/// The anisotropic scaling `(x1, x2, x3) -> (s*x1, t*x2, s*t*x3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZygmundDilation {
    s: f64,
    t: f64,
}

impl ZygmundDilation {
    pub fn new(s: f64, t: f64) -> Result<Self, GeometryError> {
        if !(s.is_finite() && t.is_finite() && s > 0.0 && t > 0.0) {
            return Err(GeometryError::InvalidDilation { s, t });
        }
        Ok(ZygmundDilation { s, t })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Scale factors per axis: `(s, t, s*t)`.
    pub fn factors(&self) -> [f64; 3] {
        [self.s, self.t, self.s * self.t]
    }

    /// Composition law `(s,t) o (s',t') = (s s', t t')`.
    pub fn compose(&self, other: &ZygmundDilation) -> ZygmundDilation {
        ZygmundDilation { s: self.s * other.s, t: self.t * other.t }
    }
}

/// Image of a point under the dilation.
pub fn dilate_point(x: [f64; 3], d: &ZygmundDilation) -> [f64; 3] {
    [d.s * x[0], d.t * x[1], d.s * d.t * x[2]]
}

/// Coordinate-wise image of a rectangle; the Zygmund property is preserved
/// because `(s l1)(t l2) = (st) l3` exactly.
pub fn dilate_rectangle(r: &ZygmundRectangle, d: &ZygmundDilation) -> ZygmundRectangle {
    let st = d.s * d.t;
    ZygmundRectangle::with_tol(
        r.i1.scaled(d.s),
        r.i2.scaled(d.t),
        r.i3.scaled(st),
        r.zygmund_tol(),
    )
    .expect("dilation preserves the Zygmund constraint")
}

/// All Zygmund rectangles with side lengths `(2^-j, 2^-k, 2^-(j+k))`,
/// `j, k` in `[min_depth, max_depth]`, positioned on the absolute dyadic grid
/// of matching scale and fully contained in `domain`. Deterministic order:
/// `(j, k)` lexicographic, then grid positions lexicographic.
pub fn enumerate_zygmund(domain: &Box3, min_depth: u32, max_depth: u32) -> Vec<ZygmundRectangle> {
    assert!(min_depth <= max_depth, "min_depth must be <= max_depth");
    let mut out = Vec::new();
    for j in min_depth..=max_depth {
        for k in min_depth..=max_depth {
            out.extend(enumerate_zygmund_jk(domain, j, k));
        }
    }
    out
}

/// The dyadic placements for one fixed shape `(2^-j, 2^-k, 2^-(j+k))`.
pub fn enumerate_zygmund_jk(domain: &Box3, j: u32, k: u32) -> Vec<ZygmundRectangle> {
    let l1 = (-(j as f64)).exp2();
    let l2 = (-(k as f64)).exp2();
    let l3 = (-((j + k) as f64)).exp2();
    let p1 = dyadic_positions(domain.axis(0), l1);
    let p2 = dyadic_positions(domain.axis(1), l2);
    let p3 = dyadic_positions(domain.axis(2), l3);
    let mut out = Vec::with_capacity(p1.len() * p2.len() * p3.len());
    for &a in &p1 {
        for &b in &p2 {
            for &c in &p3 {
                let r = ZygmundRectangle::new(
                    Interval::new(a, a + l1).unwrap(),
                    Interval::new(b, b + l2).unwrap(),
                    Interval::new(c, c + l3).unwrap(),
                )
                .expect("dyadic side lengths satisfy the constraint");
                out.push(r);
            }
        }
    }
    out
}

/// Left endpoints `m * ell` of dyadic intervals of length `ell` fully inside
/// `within`, in increasing order.
fn dyadic_positions(within: &Interval, ell: f64) -> Vec<f64> {
    // Tiny relative slack so exact dyadic endpoints are kept.
    let slack = 1e-9 * ell;
    let m_lo = ((within.lo() - slack) / ell).ceil() as i64;
    let m_hi = ((within.hi() + slack) / ell).floor() as i64;
    (m_lo..m_hi)
        .map(|m| m as f64 * ell)
        .filter(|&a| a >= within.lo() - slack && a + ell <= within.hi() + slack)
        .collect()
}

/// A base rectangle together with its reflected companion: a translate of the
/// same shape, at distance comparable to `A^(1/4)` side lengths in the first
/// two axes (and `A^(1/2)` in the third), on which the kernel is uniformly
/// large against the base.
#[derive(Debug, Clone, Serialize)]
pub struct ReflectedPair {
    pub base: ZygmundRectangle,
    pub reflected: ZygmundRectangle,
    /// The amplitude parameter `A` used for the separation scales.
    pub amplitude: f64,
    /// `K(c_reflected, c_base)`.
    pub kernel_at_centers: f64,
    /// Measured comparability constants: `dist(I^i, ~I^i)` divided by
    /// `A^(1/4) len(I^i)` for axes 1, 2 and by `A^(1/2) len(I^3)` for axis 3.
    pub dist_ratios: [f64; 3],
}

impl ReflectedPair {
    /// `|K(c_~R, c_R)| * A * |R|` — the dimensionless witness strength. For
    /// the built-in Nagel–Wainger witness this is exactly `1/32`.
    pub fn witness_strength(&self) -> f64 {
        self.kernel_at_centers.abs() * self.amplitude * self.base.volume()
    }

    /// Effective amplitude `1 / (|R| * |K(c_~R, c_R)|)`: the reciprocal of
    /// the leading-order value of `|T* 1_~R|` on the base rectangle.
    pub fn effective_amplitude(&self) -> f64 {
        1.0 / (self.base.volume() * self.kernel_at_centers.abs())
    }
}

/// Construct the reflected rectangle of `r` for the kernel `k` at amplitude
/// `amplitude`, using the kernel's non-degeneracy witness at the center of
/// `r` with scales `delta_i = amplitude^(1/4) * len(I^i)`.
pub fn reflect(
    r: &ZygmundRectangle,
    k: &dyn Kernel,
    amplitude: f64,
) -> Result<ReflectedPair, GeometryError> {
    let fail = |detail: String| GeometryError::WitnessFailure {
        kernel: k.name().to_string(),
        detail,
    };
    if !(amplitude.is_finite() && amplitude > 1.0) {
        return Err(fail(format!("amplitude {amplitude} must be > 1")));
    }
    let c = r.center();
    let [l1, l2, l3] = r.side_lengths();
    let root4 = amplitude.powf(0.25);
    let (d1, d2) = (root4 * l1, root4 * l2);
    let x = k.witness(c, d1, d2)?;
    if !((x[0] - c[0]).abs() > d1 && (x[1] - c[1]).abs() > d2 && (x[2] - c[2]).abs() > d1 * d2) {
        return Err(fail(format!(
            "witness {x:?} violates separation (delta1={d1}, delta2={d2})"
        )));
    }
    let value = k.evaluate(x, c)?;
    let required = REFLECT_WITNESS_MIN / (amplitude * r.volume());
    if !(value.abs() >= required) {
        return Err(fail(format!(
            "witness kernel value |{value}| below lower bound {required}"
        )));
    }
    let reflected = ZygmundRectangle::with_tol(
        Interval::from_center(x[0], l1)?,
        Interval::from_center(x[1], l2)?,
        Interval::from_center(x[2], l3)?,
        r.zygmund_tol(),
    )?;
    let dist_ratios = [
        r.i1().dist(reflected.i1()) / (root4 * l1),
        r.i2().dist(reflected.i2()) / (root4 * l2),
        r.i3().dist(reflected.i3()) / (amplitude.sqrt() * l3),
    ];
    Ok(ReflectedPair {
        base: *r,
        reflected,
        amplitude,
        kernel_at_centers: value,
        dist_ratios,
    })
}

/// Convenience handle used by experiment drivers: a rectangle family plus the
/// kernel they were reflected with.
pub type SharedKernel = Arc<dyn Kernel>;
