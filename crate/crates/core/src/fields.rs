//! Symbols `b`, grid-sampled functions, tensor-product midpoint quadrature,
//! means, and the extremal test functions that drive the factorization.
//!
//! Everything is a midpoint rule on a tensor grid; there are no adaptive
//! rules. Convergence is certified by refinement doubling instead.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Box3, ZygmundRectangle};
use crate::sum::{pairwise_sum, pairwise_sum_by};

#[derive(Debug, Clone)]
pub enum FieldError {
    /// Resolution with a zero axis, or support with empty volume.
    InvalidGrid(String),
    /// Grid-file loading problems: missing sidecar keys, size mismatch, IO.
    GridFile(String),
    UnknownSymbol(String),
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldError::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            FieldError::GridFile(msg) => write!(f, "grid file: {msg}"),
            FieldError::UnknownSymbol(name) => write!(f, "unknown symbol '{name}'"),
        }
    }
}

impl std::error::Error for FieldError {}

/// Piecewise-constant samples read from disk, evaluated by cell lookup.
#[derive(Debug, Clone)]
pub struct GridData {
    pub support: Box3,
    pub res: [usize; 3],
    pub samples: Vec<f64>,
}

impl GridData {
    fn lookup(&self, p: [f64; 3]) -> f64 {
        let idx = |x: f64, lo: f64, len: f64, n: usize| -> usize {
            let u = ((x - lo) / len * n as f64).floor();
            (u.max(0.0) as usize).min(n - 1)
        };
        let i = idx(p[0], self.support.i1.lo(), self.support.i1.length(), self.res[0]);
        let j = idx(p[1], self.support.i2.lo(), self.support.i2.length(), self.res[1]);
        let k = idx(p[2], self.support.i3.lo(), self.support.i3.length(), self.res[2]);
        self.samples[(i * self.res[1] + j) * self.res[2] + k]
    }
}

#[derive(Clone)]
enum SymbolKind {
    Constant(f64),
    LinearX1,
    LinearX3,
    /// `b(x) = |x3|^beta`.
    HolderX3 { beta: f64 },
    /// `b(x) = sign(x3 - center)`.
    SignX3 { center: f64 },
    /// `b(x) = sin(pi x1) sin(pi x2) sin(pi x3)`.
    Separable,
    Grid(Arc<GridData>),
    Custom(Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>),
}

/// A scalar field on R^3: the commutator symbol. Carries light metadata used
/// by the sweep drivers: an optional Hölder-in-`x3` exponent claim (the
/// exponent `gamma` in `|b(x)-b(y)| <= C |x3-y3|^gamma`) and whether the
/// symbol depends on the first two coordinates.
#[derive(Clone)]
pub struct Symbol {
    name: String,
    kind: SymbolKind,
    holder_claim: Option<f64>,
    x12_independent: bool,
    domain: Option<Box3>,
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol").field("name", &self.name).finish()
    }
}

impl Symbol {
    pub fn evaluate(&self, p: [f64; 3]) -> f64 {
        match &self.kind {
            SymbolKind::Constant(c) => *c,
            SymbolKind::LinearX1 => p[0],
            SymbolKind::LinearX3 => p[2],
            SymbolKind::HolderX3 { beta } => p[2].abs().powf(*beta),
            SymbolKind::SignX3 { center } => {
                let d = p[2] - center;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            SymbolKind::Separable => {
                use std::f64::consts::PI;
                (PI * p[0]).sin() * (PI * p[1]).sin() * (PI * p[2]).sin()
            }
            SymbolKind::Grid(g) => g.lookup(p),
            SymbolKind::Custom(f) => f(p),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Claimed Hölder-in-`x3` exponent, if any.
    pub fn holder_claim(&self) -> Option<f64> {
        self.holder_claim
    }

    /// True when the symbol does not depend on `x1, x2`.
    pub fn x12_independent(&self) -> bool {
        self.x12_independent
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, SymbolKind::Constant(_))
    }

    /// Domain restriction, if the symbol is only defined on a box.
    pub fn domain(&self) -> Option<&Box3> {
        self.domain.as_ref()
    }

    /// True unless the symbol comes from a sampled grid, where local
    /// integrability beyond L^1 is an assumption rather than a fact.
    pub fn integrability_known(&self) -> bool {
        !matches!(self.kind, SymbolKind::Grid(_))
    }

    pub fn constant(c: f64) -> Symbol {
        Symbol {
            name: format!("constant({c})"),
            kind: SymbolKind::Constant(c),
            holder_claim: None,
            x12_independent: true,
            domain: None,
        }
    }

    pub fn linear_x1() -> Symbol {
        Symbol {
            name: "linear-x1".into(),
            kind: SymbolKind::LinearX1,
            holder_claim: None,
            x12_independent: false,
            domain: None,
        }
    }

    pub fn linear_x3() -> Symbol {
        Symbol {
            name: "linear-x3".into(),
            kind: SymbolKind::LinearX3,
            holder_claim: Some(1.0),
            x12_independent: true,
            domain: None,
        }
    }

    pub fn holder_x3(beta: f64) -> Symbol {
        assert!(beta > 0.0 && beta <= 1.0, "holder exponent must lie in (0, 1]");
        Symbol {
            name: format!("holder-x3({beta})"),
            kind: SymbolKind::HolderX3 { beta },
            holder_claim: Some(beta),
            x12_independent: true,
            domain: None,
        }
    }

    pub fn sign_x3(center: f64) -> Symbol {
        Symbol {
            name: format!("sign-x3({center})"),
            kind: SymbolKind::SignX3 { center },
            holder_claim: None,
            x12_independent: true,
            domain: None,
        }
    }

    pub fn separable() -> Symbol {
        Symbol {
            name: "separable".into(),
            kind: SymbolKind::Separable,
            holder_claim: None,
            x12_independent: false,
            domain: None,
        }
    }

    pub fn custom<F>(name: &str, x12_independent: bool, f: F) -> Symbol
    where
        F: Fn([f64; 3]) -> f64 + Send + Sync + 'static,
    {
        Symbol {
            name: name.to_string(),
            kind: SymbolKind::Custom(Arc::new(f)),
            holder_claim: None,
            x12_independent,
            domain: None,
        }
    }

    pub fn from_grid_data(name: &str, data: GridData) -> Symbol {
        let domain = data.support;
        Symbol {
            name: name.to_string(),
            kind: SymbolKind::Grid(Arc::new(data)),
            holder_claim: None,
            x12_independent: false,
            domain: Some(domain),
        }
    }

    /// Load a "from-grid-file" symbol: a JSON sidecar describing the support
    /// box, resolution and sample format, next to the sample payload.
    pub fn from_grid_file(sidecar: &Path) -> Result<Symbol, FieldError> {
        let data = load_grid_sidecar(sidecar)?;
        let name = format!("from-grid-file({})", sidecar.display());
        Ok(Symbol::from_grid_data(&name, data))
    }

    /// Resolve a catalog symbol by name with optional parameters:
    /// `constant` (value), `linear-x1`, `linear-x3`, `holder-x3` (beta),
    /// `sign-x3` (center), `separable`, `from-grid-file` (path).
    pub fn by_name(
        name: &str,
        value: Option<f64>,
        beta: Option<f64>,
        center: Option<f64>,
        path: Option<&Path>,
    ) -> Result<Symbol, FieldError> {
        match name {
            "constant" => Ok(Symbol::constant(value.unwrap_or(1.0))),
            "linear-x1" => Ok(Symbol::linear_x1()),
            "linear-x3" => Ok(Symbol::linear_x3()),
            "holder-x3" => Ok(Symbol::holder_x3(beta.unwrap_or(0.5))),
            "sign-x3" => Ok(Symbol::sign_x3(center.unwrap_or(0.5))),
            "separable" => Ok(Symbol::separable()),
            "from-grid-file" => {
                let p = path.ok_or_else(|| {
                    FieldError::GridFile("from-grid-file needs a sidecar path".into())
                })?;
                Symbol::from_grid_file(p)
            }
            other => Err(FieldError::UnknownSymbol(other.to_string())),
        }
    }
}

/// Default catalog used by sweep drivers.
pub fn catalog() -> Vec<Symbol> {
    vec![
        Symbol::constant(1.0),
        Symbol::linear_x3(),
        Symbol::sign_x3(0.5),
        Symbol::holder_x3(0.5),
        Symbol::separable(),
        Symbol::linear_x1(),
    ]
}

#[derive(Debug, Deserialize)]
struct GridSidecar {
    #[serde(rename = "box")]
    support: Box3,
    resolution: [usize; 3],
    format: String,
    data: String,
}

fn load_grid_sidecar(sidecar: &Path) -> Result<GridData, FieldError> {
    let text = std::fs::read_to_string(sidecar)
        .map_err(|e| FieldError::GridFile(format!("reading {}: {e}", sidecar.display())))?;
    let meta: GridSidecar =
        serde_json::from_str(&text).map_err(|e| FieldError::GridFile(format!("sidecar: {e}")))?;
    let n = meta.resolution[0] * meta.resolution[1] * meta.resolution[2];
    if n == 0 {
        return Err(FieldError::GridFile("resolution has a zero axis".into()));
    }
    let data_path = sidecar.parent().unwrap_or_else(|| Path::new(".")).join(&meta.data);
    let samples = match meta.format.as_str() {
        "csv" => {
            let text = std::fs::read_to_string(&data_path)
                .map_err(|e| FieldError::GridFile(format!("reading {}: {e}", data_path.display())))?;
            text.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| FieldError::GridFile(format!("parsing '{s}': {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        "f64le" => {
            let bytes = std::fs::read(&data_path)
                .map_err(|e| FieldError::GridFile(format!("reading {}: {e}", data_path.display())))?;
            if bytes.len() % 8 != 0 {
                return Err(FieldError::GridFile("binary payload not a multiple of 8 bytes".into()));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        other => return Err(FieldError::GridFile(format!("unknown format '{other}'"))),
    };
    if samples.len() != n {
        return Err(FieldError::GridFile(format!(
            "expected {n} samples for resolution {:?}, got {}",
            meta.resolution,
            samples.len()
        )));
    }
    Ok(GridData { support: meta.support, res: meta.resolution, samples })
}

/// A function sampled at the midpoints of a tensor grid over its support box.
/// Immutable after construction; the integral is `sum(samples) * cell volume`.
#[derive(Debug, Clone, Serialize)]
pub struct GridFunction {
    support: Box3,
    res: [usize; 3],
    samples: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn<F: Fn([f64; 3]) -> f64>(support: Box3, res: [usize; 3], f: F) -> Self {
        assert!(res.iter().all(|&n| n > 0), "resolution axes must be positive");
        let mut samples = Vec::with_capacity(res[0] * res[1] * res[2]);
        let h = Self::steps(&support, res);
        for i in 0..res[0] {
            let x1 = support.i1.lo() + (i as f64 + 0.5) * h[0];
            for j in 0..res[1] {
                let x2 = support.i2.lo() + (j as f64 + 0.5) * h[1];
                for k in 0..res[2] {
                    let x3 = support.i3.lo() + (k as f64 + 0.5) * h[2];
                    samples.push(f([x1, x2, x3]));
                }
            }
        }
        GridFunction { support, res, samples }
    }

    /// Sample a symbol over a rectangle.
    pub fn sample_symbol(b: &Symbol, r: &ZygmundRectangle, res: [usize; 3]) -> Self {
        Self::from_fn(r.to_box(), res, |p| b.evaluate(p))
    }

    /// Wrap precomputed cell values (row-major `(i1, i2, i3)`).
    pub fn from_samples(support: Box3, res: [usize; 3], samples: Vec<f64>) -> Self {
        assert_eq!(samples.len(), res[0] * res[1] * res[2], "sample count mismatch");
        GridFunction { support, res, samples }
    }

    /// The constant-one indicator of a box.
    pub fn indicator(support: Box3, res: [usize; 3]) -> Self {
        Self::from_fn(support, res, |_| 1.0)
    }

    fn steps(support: &Box3, res: [usize; 3]) -> [f64; 3] {
        [
            support.i1.length() / res[0] as f64,
            support.i2.length() / res[1] as f64,
            support.i3.length() / res[2] as f64,
        ]
    }

    pub fn support(&self) -> &Box3 {
        &self.support
    }

    pub fn res(&self) -> [usize; 3] {
        self.res
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn cell_volume(&self) -> f64 {
        self.support.volume() / self.len() as f64
    }

    /// Midpoint coordinates of the cell with flat index `idx`
    /// (row-major `(i1, i2, i3)`).
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let n23 = self.res[1] * self.res[2];
        let i = idx / n23;
        let j = (idx % n23) / self.res[2];
        let k = idx % self.res[2];
        let h = Self::steps(&self.support, self.res);
        [
            self.support.i1.lo() + (i as f64 + 0.5) * h[0],
            self.support.i2.lo() + (j as f64 + 0.5) * h[1],
            self.support.i3.lo() + (k as f64 + 0.5) * h[2],
        ]
    }

    /// Midpoint-rule integral over the support.
    pub fn quadrature(&self) -> f64 {
        pairwise_sum(&self.samples) * self.cell_volume()
    }

    /// Grid mean: integral divided by support volume.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.samples) / self.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Grid mean of `|f|`.
    pub fn mean_abs(&self) -> f64 {
        pairwise_sum_by(self.len(), |i| self.samples[i].abs()) / self.len() as f64
    }

    /// New grid function with samples `g(sample, node)`.
    pub fn map_with_node<F: Fn(f64, [f64; 3]) -> f64>(&self, g: F) -> GridFunction {
        let samples = (0..self.len()).map(|i| g(self.samples[i], self.node(i))).collect();
        GridFunction { support: self.support, res: self.res, samples }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, g: F) -> GridFunction {
        GridFunction {
            support: self.support,
            res: self.res,
            samples: self.samples.iter().map(|&v| g(v)).collect(),
        }
    }

    /// Combine two grid functions on the same grid.
    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &GridFunction, g: F) -> GridFunction {
        assert_eq!(self.res, other.res, "grids must share a resolution");
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| g(a, b))
            .collect();
        GridFunction { support: self.support, res: self.res, samples }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }
}

/// Midpoint-rule integral of a grid function; exact for cell-wise constants.
pub fn quadrature(g: &GridFunction) -> f64 {
    g.quadrature()
}

/// Mean of a symbol over a rectangle at the given resolution.
pub fn mean(b: &Symbol, r: &ZygmundRectangle, res: [usize; 3]) -> f64 {
    GridFunction::sample_symbol(b, r, res).mean()
}

/// The extremal test function `f = (g - <g>_R) 1_R` with
/// `g = sign(b - <b>_R)` and `sign(0) = 0`.
///
/// Guarantees at grid level: `|f| <= 2`, `integral(f) = 0` up to float
/// rounding, and the pairing identity `<b, f> = integral over R of
/// |b - <b>_R|` holds exactly, because
/// `sum (b_i - m)(g_i - <g>) = sum |b_i - m|` once `m` is the grid mean.
pub fn extremal_testfunction(
    b: &Symbol,
    r: &ZygmundRectangle,
    res: [usize; 3],
) -> GridFunction {
    let bg = GridFunction::sample_symbol(b, r, res);
    let m = bg.mean();
    let g = bg.map(|v| {
        let d = v - m;
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    let gm = g.mean();
    g.map(|v| v - gm)
}
