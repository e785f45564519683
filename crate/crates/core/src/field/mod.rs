//! Scalar and vector fields sampled on a uniform M×M grid over the unit square.
//!
//! Samples sit at pixel centres `((i + 1/2) h, (j + 1/2) h)` with `h = 1/M`.
//! Storage is row-major with `i` (the x index) running fastest, so the value
//! at `(i, j)` lives at `j * M + i`.
//!
//! All integrals carry the quadrature weight `h²`, which makes energies,
//! norms and step sizes comparable across grid sizes and with their
//! continuum counterparts.
//!
//! The discrete gradient is a forward difference with a zero closure on the
//! last row/column (homogeneous Neumann condition), and the divergence is
//! its exact negative adjoint:
//!
//! ```text
//! (grad u, p)_Z = -(u, div p)_H
//! ```
//!
//! so `div ∘ grad` is the standard five-point Neumann Laplacian, which the
//! cosine transform in [`crate::spectral`] diagonalizes exactly.

mod io;

pub use io::{read_csv, read_pgm, write_csv, write_pgm};

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid side must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("grid mismatch: {left} vs {right} points per side")]
    SpecMismatch { left: usize, right: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("disc centred at ({cx}, {cy}) with radius {radius} is not strictly inside the unit square")]
    DiscOutsideDomain { cx: f64, cy: f64, radius: f64 },
    #[error("point ({x}, {y}) is not strictly inside the unit square")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
}

/// Uniform grid with `side` points per axis over `[0,1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    side: usize,
}

impl GridSpec {
    pub fn new(side: usize) -> Result<Self, FieldError> {
        if side < 2 {
            return Err(FieldError::GridTooSmall(side));
        }
        Ok(Self { side })
    }

    /// Points per axis.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Grid spacing `h = 1/M`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.side as f64
    }

    /// Quadrature weight `h²` of a single pixel.
    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    /// Total number of grid points, `M²`.
    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side + i
    }

    /// Pixel centre of `(i, j)`.
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.spacing();
        ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
    }

    fn check(&self, other: &GridSpec) -> Result<(), FieldError> {
        if self.side != other.side {
            return Err(FieldError::SpecMismatch {
                left: self.side,
                right: other.side,
            });
        }
        Ok(())
    }
}

/// Operations shared by scalar and vector fields: the vector-space structure
/// the solver loops need, plus the h²-weighted norms.
///
/// Methods here panic on grid mismatch; the free functions [`inner_l2`] and
/// friends report it as an error instead.
pub trait GridFunction: Clone {
    fn spec(&self) -> GridSpec;

    /// Same shape, all zeros.
    fn zeros_like(&self) -> Self;

    /// `self <- a * self + b * other`.
    fn axpby(&mut self, a: f64, other: &Self, b: f64);

    /// h²-weighted L² inner product.
    fn dot(&self, other: &Self) -> f64;

    fn norm_l2(&self) -> f64 {
        self.dot(self).max(0.0).sqrt()
    }

    /// h²-weighted L¹ norm (pointwise Euclidean norm for vector fields).
    fn norm_l1(&self) -> f64;

    /// Maximum of the pointwise (Euclidean) magnitude.
    fn norm_linf(&self) -> f64;

    fn is_finite(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::constant(spec, 0.0)
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        Self {
            spec,
            values: vec![c; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != spec.len() {
            return Err(FieldError::LengthMismatch {
                expected: spec.len(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    /// Samples `f` at every pixel centre.
    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let m = spec.side();
        let mut values = Vec::with_capacity(spec.len());
        for j in 0..m {
            for i in 0..m {
                let (x, y) = spec.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { spec, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.spec.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.spec.index(i, j);
        self.values[k] = v;
    }

    /// Integral over the unit square, `h² Σ u`.
    pub fn integral(&self) -> f64 {
        self.spec.cell_area() * compensated_sum(&self.values)
    }

    /// Average value; equals [`Self::integral`] since the domain has unit area.
    pub fn mean(&self) -> f64 {
        compensated_sum(&self.values) / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl GridFunction for ScalarField {
    fn spec(&self) -> GridSpec {
        self.spec
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.spec)
    }

    fn axpby(&mut self, a: f64, other: &Self, b: f64) {
        assert_eq!(self.spec, other.spec, "grid mismatch");
        for (s, &o) in self.values.iter_mut().zip(&other.values) {
            *s = a * *s + b * o;
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.spec, other.spec, "grid mismatch");
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum();
        self.spec.cell_area() * s
    }

    fn norm_l1(&self) -> f64 {
        self.spec.cell_area() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Two-component field on the same collocated grid as [`ScalarField`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    spec: GridSpec,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            x: vec![0.0; spec.len()],
            y: vec![0.0; spec.len()],
        }
    }

    pub fn from_components(spec: GridSpec, x: Vec<f64>, y: Vec<f64>) -> Result<Self, FieldError> {
        for c in [&x, &y] {
            if c.len() != spec.len() {
                return Err(FieldError::LengthMismatch {
                    expected: spec.len(),
                    got: c.len(),
                });
            }
        }
        Ok(Self { spec, x, y })
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(spec);
        let m = spec.side();
        for j in 0..m {
            for i in 0..m {
                let (x, y) = spec.center(i, j);
                let (a, b) = f(x, y);
                let k = spec.index(i, j);
                out.x[k] = a;
                out.y[k] = b;
            }
        }
        out
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn components_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.x, &mut self.y)
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let k = self.spec.index(i, j);
        (self.x[k], self.y[k])
    }

    pub fn set(&mut self, i: usize, j: usize, v: (f64, f64)) {
        let k = self.spec.index(i, j);
        self.x[k] = v.0;
        self.y[k] = v.1;
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        }
    }

    /// Radial projection of every pixel onto the closed unit disc:
    /// `q(x) <- q(x) / max(1, |q(x)|)`.
    pub fn project_unit_ball(&mut self) {
        for (a, b) in self.x.iter_mut().zip(self.y.iter_mut()) {
            let n = a.hypot(*b);
            if n > 1.0 {
                *a /= n;
                *b /= n;
            }
        }
    }
}

impl GridFunction for VectorField {
    fn spec(&self) -> GridSpec {
        self.spec
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.spec)
    }

    fn axpby(&mut self, a: f64, other: &Self, b: f64) {
        assert_eq!(self.spec, other.spec, "grid mismatch");
        for (s, &o) in self.x.iter_mut().zip(&other.x) {
            *s = a * *s + b * o;
        }
        for (s, &o) in self.y.iter_mut().zip(&other.y) {
            *s = a * *s + b * o;
        }
    }

    fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.spec, other.spec, "grid mismatch");
        let sx: f64 = self.x.iter().zip(&other.x).map(|(a, b)| a * b).sum();
        let sy: f64 = self.y.iter().zip(&other.y).map(|(a, b)| a * b).sum();
        self.spec.cell_area() * (sx + sy)
    }

    fn norm_l1(&self) -> f64 {
        let s: f64 = self.x.iter().zip(&self.y).map(|(a, b)| a.hypot(*b)).sum();
        self.spec.cell_area() * s
    }

    fn norm_linf(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.y)
            .fold(0.0, |m, (a, b)| m.max(a.hypot(*b)))
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }
}

macro_rules! impl_ref_ops {
    ($t:ty) => {
        impl Add for &$t {
            type Output = $t;
            fn add(self, rhs: &$t) -> $t {
                let mut out = self.clone();
                out.axpby(1.0, rhs, 1.0);
                out
            }
        }

        impl Sub for &$t {
            type Output = $t;
            fn sub(self, rhs: &$t) -> $t {
                let mut out = self.clone();
                out.axpby(1.0, rhs, -1.0);
                out
            }
        }

        impl Mul<f64> for &$t {
            type Output = $t;
            fn mul(self, rhs: f64) -> $t {
                let mut out = self.clone();
                out.axpby(rhs, self, 0.0);
                out
            }
        }
    };
}

impl_ref_ops!(ScalarField);
impl_ref_ops!(VectorField);

/// Neumaier summation; mass normalization and compatibility checks need the
/// integral to near machine precision.
fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Forward-difference gradient with zero closure on the last column/row.
pub fn grad(u: &ScalarField) -> VectorField {
    let spec = u.spec;
    let m = spec.side();
    let inv_h = spec.side() as f64;
    let v = &u.values;
    let mut out = VectorField::zeros(spec);
    for j in 0..m {
        let row = j * m;
        for i in 0..m - 1 {
            out.x[row + i] = (v[row + i + 1] - v[row + i]) * inv_h;
        }
    }
    for j in 0..m - 1 {
        let row = j * m;
        for i in 0..m {
            out.y[row + i] = (v[row + m + i] - v[row + i]) * inv_h;
        }
    }
    out
}

/// Negative adjoint of [`grad`] in the h²-weighted inner products.
pub fn div(p: &VectorField) -> ScalarField {
    let spec = p.spec;
    let m = spec.side();
    let inv_h = spec.side() as f64;
    let mut out = vec![0.0; spec.len()];
    for j in 0..m {
        let row = j * m;
        out[row] = p.x[row];
        for i in 1..m - 1 {
            out[row + i] = p.x[row + i] - p.x[row + i - 1];
        }
        out[row + m - 1] = -p.x[row + m - 2];
    }
    for i in 0..m {
        out[i] += p.y[i];
    }
    for j in 1..m - 1 {
        let row = j * m;
        for i in 0..m {
            out[row + i] += p.y[row + i] - p.y[row - m + i];
        }
    }
    let last = (m - 1) * m;
    for i in 0..m {
        out[last + i] -= p.y[last - m + i];
    }
    for o in out.iter_mut() {
        *o *= inv_h;
    }
    ScalarField { spec, values: out }
}

/// Neumann Laplacian `div(grad u)`.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    div(&grad(u))
}

/// Total variation `‖grad u‖_{L¹}` with the isotropic pointwise norm.
pub fn tv_seminorm(u: &ScalarField) -> f64 {
    let spec = u.spec;
    let m = spec.side();
    let inv_h = m as f64;
    let v = &u.values;
    let mut s = 0.0;
    for j in 0..m {
        let row = j * m;
        for i in 0..m {
            let k = row + i;
            let gx = if i + 1 < m { v[k + 1] - v[k] } else { 0.0 };
            let gy = if j + 1 < m { v[k + m] - v[k] } else { 0.0 };
            s += gx.hypot(gy);
        }
    }
    s * inv_h * spec.cell_area()
}

pub fn inner_l2<F: GridFunction>(a: &F, b: &F) -> Result<f64, FieldError> {
    a.spec().check(&b.spec())?;
    Ok(a.dot(b))
}

pub fn norm_l2<F: GridFunction>(a: &F) -> f64 {
    a.norm_l2()
}

pub fn norm_l1<F: GridFunction>(a: &F) -> f64 {
    a.norm_l1()
}

pub fn norm_linf<F: GridFunction>(a: &F) -> f64 {
    a.norm_linf()
}

/// Indicator of the disc `|x - center| < radius`, evaluated at pixel
/// centres. With `mass_normalized` the result integrates to one.
pub fn rasterize_disc(
    spec: GridSpec,
    center: (f64, f64),
    radius: f64,
    mass_normalized: bool,
) -> Result<ScalarField, FieldError> {
    let (cx, cy) = center;
    let inside = radius > 0.0
        && cx - radius > 0.0
        && cx + radius < 1.0
        && cy - radius > 0.0
        && cy + radius < 1.0;
    if !inside {
        return Err(FieldError::DiscOutsideDomain { cx, cy, radius });
    }
    let r2 = radius * radius;
    let mut u = ScalarField::from_fn(spec, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        if dx * dx + dy * dy < r2 {
            1.0
        } else {
            0.0
        }
    });
    if mass_normalized {
        let mass = u.integral();
        if mass <= 0.0 {
            // disc smaller than a pixel and missed every centre
            return Err(FieldError::DiscOutsideDomain { cx, cy, radius });
        }
        for v in u.values.iter_mut() {
            *v /= mass;
        }
    }
    Ok(u)
}

/// Unit point mass: value `1/h²` on the pixel `[i h, (i+1) h) × [j h, (j+1) h)`
/// containing `point`.
pub fn rasterize_delta(spec: GridSpec, point: (f64, f64)) -> Result<ScalarField, FieldError> {
    let (x, y) = point;
    if !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0) {
        return Err(FieldError::PointOutsideDomain { x, y });
    }
    let m = spec.side();
    let cell = |t: f64| ((t * m as f64).floor() as usize).min(m - 1);
    let mut u = ScalarField::zeros(spec);
    u.set(cell(x), cell(y), 1.0 / spec.cell_area());
    Ok(u)
}
