//! Uniform grids, sampled fields, quadrature and finite-difference operators.
//!
//! Every field carries a validity mask. Derived fields (derivatives,
//! quotients) are only valid where every sample their stencil touched was
//! valid; invalid points hold zero.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, Mul, Sub};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Sample type stored in a [`Field`].
pub trait FieldValue:
    Copy + Default + PartialEq + Debug + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn is_finite_value(&self) -> bool;
}

impl FieldValue for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl FieldValue for Complex64 {
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// Uniform sampling of `[x_min, x_max]` with `n` points, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 points, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "bounds [{x_min}, {x_max}] are not an increasing finite interval"
            )));
        }
        Ok(Grid1D { x_min, x_max, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Coordinate of point `i`; the last point is exactly `x_max`.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.x_max
        } else {
            self.x_min + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.x(i))
    }

    /// Index of the grid point closest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let s = ((x - self.x_min) / self.spacing()).round();
        if s <= 0.0 {
            0
        } else {
            (s as usize).min(self.n - 1)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * self.width();
        x >= self.x_min - slack && x <= self.x_max + slack
    }

    /// Composite Simpson weights for odd `n`, trapezoid weights for even `n`.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let n = self.n;
        if n % 2 == 1 {
            (0..n)
                .map(|i| {
                    let w = if i == 0 || i == n - 1 {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    w * h / 3.0
                })
                .collect()
        } else {
            (0..n)
                .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                .collect()
        }
    }
}

/// Tensor-product grid; flat index is `j * nx + i` with `i` along x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    grid_x: Grid1D,
    grid_y: Grid1D,
}

impl Grid2D {
    pub fn new(grid_x: Grid1D, grid_y: Grid1D) -> Self {
        Grid2D { grid_x, grid_y }
    }

    pub fn square(min: f64, max: f64, n: usize) -> Result<Self> {
        let g = Grid1D::new(min, max, n)?;
        Ok(Grid2D::new(g, g))
    }

    pub fn grid_x(&self) -> Grid1D {
        self.grid_x
    }

    pub fn grid_y(&self) -> Grid1D {
        self.grid_y
    }

    pub fn nx(&self) -> usize {
        self.grid_x.len()
    }

    pub fn ny(&self) -> usize {
        self.grid_y.len()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let nx = self.nx();
        (self.grid_x.x(idx % nx), self.grid_y.x(idx / nx))
    }
}

/// How the points along one axis are laid out in the flat value array.
#[derive(Debug, Clone, Copy)]
pub struct LineLayout {
    pub lines: usize,
    pub len: usize,
    /// Flat-index step between consecutive points of a line.
    pub stride: usize,
    /// Flat-index step between the first points of consecutive lines.
    pub line_stride: usize,
}

/// Common interface of [`Grid1D`] and [`Grid2D`].
pub trait Mesh: Copy + PartialEq + Debug {
    const DIM: usize;

    fn point_count(&self) -> usize;

    fn axis(&self, axis: usize) -> Grid1D;

    fn layout(&self, axis: usize) -> LineLayout;

    /// Quadrature weights (product rule in 2D).
    fn weights(&self) -> Vec<f64>;

    /// Area element used for region measures (`h` or `hx * hy`).
    fn cell_measure(&self) -> f64 {
        (0..Self::DIM).map(|a| self.axis(a).spacing()).product()
    }

    /// `false` for points within `depth` of any boundary.
    fn interior_mask(&self, depth: usize) -> Vec<bool> {
        let mut mask = vec![true; self.point_count()];
        for a in 0..Self::DIM {
            let l = self.layout(a);
            for line in 0..l.lines {
                let start = line * l.line_stride;
                for k in 0..depth.min(l.len) {
                    mask[start + k * l.stride] = false;
                    mask[start + (l.len - 1 - k) * l.stride] = false;
                }
            }
        }
        mask
    }
}

impl Mesh for Grid1D {
    const DIM: usize = 1;

    fn point_count(&self) -> usize {
        self.n
    }

    fn axis(&self, _axis: usize) -> Grid1D {
        *self
    }

    fn layout(&self, _axis: usize) -> LineLayout {
        LineLayout {
            lines: 1,
            len: self.n,
            stride: 1,
            line_stride: 0,
        }
    }

    fn weights(&self) -> Vec<f64> {
        Grid1D::weights(self)
    }
}

impl Mesh for Grid2D {
    const DIM: usize = 2;

    fn point_count(&self) -> usize {
        self.nx() * self.ny()
    }

    fn axis(&self, axis: usize) -> Grid1D {
        if axis == 0 {
            self.grid_x
        } else {
            self.grid_y
        }
    }

    fn layout(&self, axis: usize) -> LineLayout {
        if axis == 0 {
            LineLayout {
                lines: self.ny(),
                len: self.nx(),
                stride: 1,
                line_stride: self.nx(),
            }
        } else {
            LineLayout {
                lines: self.nx(),
                len: self.ny(),
                stride: self.nx(),
                line_stride: 1,
            }
        }
    }

    fn weights(&self) -> Vec<f64> {
        let wx = self.grid_x.weights();
        let wy = self.grid_y.weights();
        let mut w = Vec::with_capacity(self.point_count());
        for wyj in &wy {
            for wxi in &wx {
                w.push(wxi * wyj);
            }
        }
        w
    }
}

/// Values sampled on a grid plus a per-point validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<G, T> {
    grid: G,
    values: Vec<T>,
    mask: Vec<bool>,
}

pub type ScalarField = Field<Grid1D, f64>;
pub type ComplexField = Field<Grid1D, Complex64>;
pub type ScalarField2 = Field<Grid2D, f64>;
pub type ComplexField2 = Field<Grid2D, Complex64>;

impl<G: Mesh, T: FieldValue> Field<G, T> {
    /// Field with every point valid.
    pub fn new(grid: G, values: Vec<T>) -> Result<Self> {
        let mask = vec![true; values.len()];
        Self::with_mask(grid, values, mask)
    }

    pub fn with_mask(grid: G, values: Vec<T>, mask: Vec<bool>) -> Result<Self> {
        let n = grid.point_count();
        if values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: values.len(),
            });
        }
        if mask.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: mask.len(),
            });
        }
        if let Some(index) = (0..n).find(|&i| mask[i] && !values[i].is_finite_value()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Field { grid, values, mask })
    }

    /// Builds from a per-index closure; non-finite results are masked.
    pub fn from_index_fn(grid: G, mut f: impl FnMut(usize) -> T) -> Self {
        let n = grid.point_count();
        let mut values = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..n {
            let v = f(i);
            if v.is_finite_value() {
                values.push(v);
                mask.push(true);
            } else {
                values.push(T::default());
                mask.push(false);
            }
        }
        Field { grid, values, mask }
    }

    pub fn zeros(grid: G) -> Self {
        Field {
            grid,
            values: vec![T::default(); grid.point_count()],
            mask: vec![true; grid.point_count()],
        }
    }

    pub fn grid(&self) -> &G {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn get(&self, i: usize) -> Option<T> {
        if self.mask[i] {
            Some(self.values[i])
        } else {
            None
        }
    }

    pub fn into_parts(self) -> (G, Vec<T>, Vec<bool>) {
        (self.grid, self.values, self.mask)
    }

    /// Pointwise map over valid points; masked points stay masked.
    pub fn map<U: FieldValue>(&self, f: impl Fn(T) -> U) -> Field<G, U> {
        let mut values = Vec::with_capacity(self.len());
        let mut mask = Vec::with_capacity(self.len());
        for (v, &m) in self.values.iter().zip(&self.mask) {
            let out = if m { f(*v) } else { U::default() };
            if m && out.is_finite_value() {
                values.push(out);
                mask.push(true);
            } else {
                values.push(U::default());
                mask.push(false);
            }
        }
        Field {
            grid: self.grid,
            values,
            mask,
        }
    }

    /// Pointwise binary combination; valid only where both inputs are valid.
    pub fn zip_map<U: FieldValue, V: FieldValue>(
        &self,
        other: &Field<G, U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Field<G, V>> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let mut values = Vec::with_capacity(self.len());
        let mut mask = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let ok = self.mask[i] && other.mask[i];
            let out = if ok {
                f(self.values[i], other.values[i])
            } else {
                V::default()
            };
            if ok && out.is_finite_value() {
                values.push(out);
                mask.push(true);
            } else {
                values.push(V::default());
                mask.push(false);
            }
        }
        Ok(Field {
            grid: self.grid,
            values,
            mask,
        })
    }

    /// Intersects the validity mask with `keep`; dropped points are zeroed.
    pub fn restrict(&self, keep: &[bool]) -> Self {
        let mut out = self.clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                out.mask[i] = false;
                out.values[i] = T::default();
            }
        }
        out
    }

    /// First derivative along `axis`: central differences inside,
    /// second-order one-sided at the ends.
    pub fn partial(&self, axis: usize) -> Self {
        let h = self.grid.axis(axis).spacing();
        self.line_op(axis, |f, m, i, n| first_derivative(f, m, i, n, h))
    }

    pub fn gradient(&self) -> Vec<Self> {
        (0..G::DIM).map(|a| self.partial(a)).collect()
    }

    /// 3-point (1D) / 5-point (2D) Laplacian with one-sided second-order ends.
    pub fn laplacian(&self) -> Self {
        self.laplacian_with(false)
    }

    /// Laplacian whose end stencil assumes the field is even about the
    /// boundary, `2(f₁ − f₀)/h²` — right for |ψ|² at a hard wall. With
    /// trapezoid weights the integral then telescopes to zero exactly.
    pub fn laplacian_mirrored(&self) -> Self {
        self.laplacian_with(true)
    }

    fn laplacian_with(&self, mirrored: bool) -> Self {
        let mut acc: Option<Self> = None;
        for axis in 0..G::DIM {
            let h = self.grid.axis(axis).spacing();
            let d2 = self.line_op(axis, |f, m, i, n| {
                if mirrored && (i == 0 || i == n - 1) {
                    let j = if i == 0 { 1 } else { n - 2 };
                    (m(i) && m(j)).then(|| (f(j) - f(i)) * (2.0 / (h * h)))
                } else {
                    second_derivative(f, m, i, n, h)
                }
            });
            acc = Some(match acc {
                None => d2,
                Some(prev) => prev
                    .zip_map(&d2, |a, b| a + b)
                    .expect("same grid by construction"),
            });
        }
        acc.expect("meshes have at least one axis")
    }

    fn line_op(
        &self,
        axis: usize,
        op: impl Fn(&dyn Fn(usize) -> T, &dyn Fn(usize) -> bool, usize, usize) -> Option<T>,
    ) -> Self {
        let l = self.grid.layout(axis);
        let mut values = vec![T::default(); self.len()];
        let mut mask = vec![false; self.len()];
        for line in 0..l.lines {
            let start = line * l.line_stride;
            let at = |k: usize| self.values[start + k * l.stride];
            let ok = |k: usize| self.mask[start + k * l.stride];
            for k in 0..l.len {
                if let Some(v) = op(&at, &ok, k, l.len) {
                    if v.is_finite_value() {
                        values[start + k * l.stride] = v;
                        mask[start + k * l.stride] = true;
                    }
                }
            }
        }
        Field {
            grid: self.grid,
            values,
            mask,
        }
    }

    /// Quadrature over the whole grid. Every point must be valid and finite.
    pub fn integrate(&self) -> Result<T> {
        if let Some(index) = self.mask.iter().position(|&m| !m) {
            return Err(Error::MaskedPoint { index });
        }
        self.quadrature()
    }

    /// Quadrature treating masked points as zero.
    pub fn integrate_masked(&self) -> Result<T> {
        self.quadrature()
    }

    fn quadrature(&self) -> Result<T> {
        let w = self.grid.weights();
        let mut acc = T::default();
        for i in 0..self.len() {
            if !self.mask[i] {
                continue;
            }
            if !self.values[i].is_finite_value() {
                return Err(Error::NonFinite { index: i });
            }
            acc = acc + self.values[i] * w[i];
        }
        Ok(acc)
    }

    /// Number of valid points.
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

impl<G: Mesh> Field<G, f64> {
    /// Largest |value| over valid points (0 if none).
    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .fold(0.0, |acc, (v, _)| acc.max(v.abs()))
    }
}

impl<G: Mesh> Field<G, Complex64> {
    pub fn re(&self) -> Field<G, f64> {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> Field<G, f64> {
        self.map(|z| z.im)
    }

    pub fn norm_sqr(&self) -> Field<G, f64> {
        self.map(|z| z.norm_sqr())
    }
}

impl<T: FieldValue> Field<Grid1D, T> {
    /// Samples `f(x)` at every grid point.
    pub fn sample(grid: Grid1D, f: impl Fn(f64) -> T) -> Self {
        Self::from_index_fn(grid, |i| f(grid.x(i)))
    }

    /// d/dx of a 1D field.
    pub fn derivative(&self) -> Self {
        self.partial(0)
    }

    /// Cubic (4-point Lagrange) interpolant and its derivative at `x`.
    /// `None` outside the grid or if the stencil touches a masked point.
    pub fn interpolate(&self, x: f64) -> Option<(T, T)> {
        interpolate_cubic(&self.grid, &self.values, Some(&self.mask), x)
    }
}

impl<T: FieldValue> Field<Grid2D, T> {
    pub fn sample(grid: Grid2D, f: impl Fn(f64, f64) -> T) -> Self {
        Self::from_index_fn(grid, |idx| {
            let (x, y) = grid.coords(idx);
            f(x, y)
        })
    }
}

/// 4-point Lagrange interpolation on a uniform grid; returns value and
/// first derivative.
pub fn interpolate_cubic<T: FieldValue>(
    grid: &Grid1D,
    values: &[T],
    mask: Option<&[bool]>,
    x: f64,
) -> Option<(T, T)> {
    let n = grid.len();
    if n < 4 || !grid.contains(x) || !x.is_finite() {
        return None;
    }
    let h = grid.spacing();
    let s = (x - grid.x_min()) / h;
    let cell = (s.floor().max(0.0) as usize).min(n - 2);
    let start = cell.saturating_sub(1).min(n - 4);
    if let Some(m) = mask {
        if !(start..start + 4).all(|k| m[k]) {
            return None;
        }
    }
    let u = s - start as f64;
    let (u0, u1, u2, u3) = (u, u - 1.0, u - 2.0, u - 3.0);
    let w = [
        -u1 * u2 * u3 / 6.0,
        u0 * u2 * u3 / 2.0,
        -u0 * u1 * u3 / 2.0,
        u0 * u1 * u2 / 6.0,
    ];
    let dw = [
        -(u2 * u3 + u1 * u3 + u1 * u2) / 6.0,
        (u2 * u3 + u0 * u3 + u0 * u2) / 2.0,
        -(u1 * u3 + u0 * u3 + u0 * u1) / 2.0,
        (u1 * u2 + u0 * u2 + u0 * u1) / 6.0,
    ];
    let mut v = T::default();
    let mut d = T::default();
    for k in 0..4 {
        v = v + values[start + k] * w[k];
        d = d + values[start + k] * (dw[k] / h);
    }
    Some((v, d))
}

fn first_derivative<T: FieldValue>(
    f: &dyn Fn(usize) -> T,
    ok: &dyn Fn(usize) -> bool,
    i: usize,
    n: usize,
    h: f64,
) -> Option<T> {
    let all = |ks: &[usize]| ks.iter().all(|&k| ok(k));
    if i == 0 {
        all(&[0, 1, 2]).then(|| (f(0) * -3.0 + f(1) * 4.0 - f(2)) * (0.5 / h))
    } else if i == n - 1 {
        all(&[n - 1, n - 2, n - 3])
            .then(|| (f(n - 1) * 3.0 - f(n - 2) * 4.0 + f(n - 3)) * (0.5 / h))
    } else {
        all(&[i - 1, i + 1]).then(|| (f(i + 1) - f(i - 1)) * (0.5 / h))
    }
}

fn second_derivative<T: FieldValue>(
    f: &dyn Fn(usize) -> T,
    ok: &dyn Fn(usize) -> bool,
    i: usize,
    n: usize,
    h: f64,
) -> Option<T> {
    let all = |ks: &[usize]| ks.iter().all(|&k| ok(k));
    let inv = 1.0 / (h * h);
    if n == 3 {
        // only one interior point; reuse its stencil at the ends
        return all(&[0, 1, 2]).then(|| (f(0) - f(1) * 2.0 + f(2)) * inv);
    }
    if i == 0 {
        all(&[0, 1, 2, 3]).then(|| (f(0) * 2.0 - f(1) * 5.0 + f(2) * 4.0 - f(3)) * inv)
    } else if i == n - 1 {
        all(&[n - 1, n - 2, n - 3, n - 4])
            .then(|| (f(n - 1) * 2.0 - f(n - 2) * 5.0 + f(n - 3) * 4.0 - f(n - 4)) * inv)
    } else {
        all(&[i - 1, i, i + 1]).then(|| (f(i + 1) - f(i) * 2.0 + f(i - 1)) * inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn unit(n: usize) -> Grid1D {
        Grid1D::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        assert!(Grid1D::new(1.0, 0.0, 10).is_err());
        assert!(Grid1D::new(0.0, f64::NAN, 10).is_err());
    }

    #[test]
    fn spacing_and_endpoints() {
        let g = Grid1D::new(-1.0, 1.0, 2001).unwrap();
        assert_eq!(g.spacing(), 1e-3);
        assert_eq!(g.x(0), -1.0);
        assert_eq!(g.x(2000), 1.0);
        assert_eq!(g.nearest(0.0), 1000);
        assert_eq!(g.nearest(-5.0), 0);
    }

    #[test]
    fn constant_integrates_exactly() {
        let f = ScalarField::sample(unit(101), |_| 1.0);
        assert!((f.integrate().unwrap() - 1.0).abs() < 1e-15);
        let f = ScalarField::sample(unit(100), |_| 1.0);
        assert!((f.integrate().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_sin_squared() {
        let f = ScalarField::sample(unit(101), |x| (PI * x).sin().powi(2));
        assert!((f.integrate().unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn integrate_reports_first_bad_index() {
        let g = unit(11);
        let mut mask = vec![true; 11];
        mask[4] = false;
        let f = ScalarField::with_mask(g, vec![1.0; 11], mask).unwrap();
        assert_eq!(f.integrate(), Err(Error::MaskedPoint { index: 4 }));
        let mut v = vec![1.0; 11];
        v[7] = f64::INFINITY;
        assert_eq!(
            ScalarField::new(g, v).unwrap_err(),
            Error::NonFinite { index: 7 }
        );
    }

    #[test]
    fn masked_integration_drops_points() {
        let g = unit(11);
        let mut mask = vec![true; 11];
        mask[5] = false;
        let f = ScalarField::with_mask(g, vec![1.0; 11], mask).unwrap();
        let full = ScalarField::sample(g, |_| 1.0).integrate().unwrap();
        let w = g.weights()[5];
        assert!((f.integrate_masked().unwrap() - (full - w)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_derivatives_exact_inside() {
        let g = Grid1D::new(-1.0, 1.0, 41).unwrap();
        let f = ScalarField::sample(g, |x| x * x);
        let d = f.derivative();
        let l = f.laplacian();
        for i in 0..g.len() {
            assert!((d.values()[i] - 2.0 * g.x(i)).abs() < 1e-12, "i={i}");
            assert!((l.values()[i] - 2.0).abs() < 1e-9, "i={i}");
        }
    }

    #[test]
    fn mirrored_laplacian_telescopes() {
        let g = Grid1D::new(-1.0, 1.0, 200).unwrap();
        let rho = ScalarField::sample(g, |x| (3.0 * PI * (x + 1.0) / 2.0).sin().powi(2) * (1.0 + x));
        assert!(rho.laplacian_mirrored().integrate().unwrap().abs() < 1e-10);
        assert!(rho.laplacian().integrate().unwrap().abs() > 1e-8);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let g = unit(17);
        let f = ScalarField::sample(g, |_| 3.5);
        assert!(f.derivative().max_abs() < 1e-12);
        assert!(f.laplacian().max_abs() < 1e-9);
    }

    fn sin_gradient_error(n: usize) -> f64 {
        let g = unit(n);
        let k = 5.0;
        let d = ScalarField::sample(g, |x| (k * x).sin()).derivative();
        (0..n)
            .map(|i| (d.values()[i] - k * (k * g.x(i)).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gradient_second_order() {
        let e1 = sin_gradient_error(101);
        let e2 = sin_gradient_error(201);
        let ratio = e1 / e2;
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn laplacian_2d_eigenfunction() {
        let l = 1.0;
        let err = |n: usize| {
            let g = Grid2D::square(0.0, l, n).unwrap();
            let f = ScalarField2::sample(g, |x, y| (PI * x / l).sin() * (2.0 * PI * y / l).sin());
            let lap = f.laplacian();
            let lam = -5.0 * PI * PI / (l * l);
            (0..g.point_count())
                .map(|i| (lap.values()[i] - lam * f.values()[i]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(81), err(161));
        assert!(e1 < 0.05 * 5.0 * PI * PI);
        assert!((3.5..4.5).contains(&(e1 / e2)), "ratio {}", e1 / e2);
    }

    #[test]
    fn mask_propagates_to_neighbours() {
        let g = unit(11);
        let mut mask = vec![true; 11];
        mask[5] = false;
        let f = ScalarField::with_mask(g, vec![1.0; 11], mask).unwrap();
        let d = f.derivative();
        assert!(!d.is_valid(4) && !d.is_valid(6));
        assert!(d.is_valid(5), "central stencil skips the centre point");
        let l = f.laplacian();
        assert!(!l.is_valid(4) && !l.is_valid(5) && !l.is_valid(6));
        assert!(l.is_valid(3) && l.is_valid(7));
    }

    #[test]
    fn gradient_integrates_to_endpoint_difference() {
        let g = Grid1D::new(0.0, 2.0, 401).unwrap();
        let f = |x: f64| (1.3 * x).sin() + x * x * x;
        let d = ScalarField::sample(g, f).derivative();
        let got = d.integrate().unwrap();
        assert!((got - (f(2.0) - f(0.0))).abs() < 1e-4);
    }

    #[test]
    fn product_rule_residual_is_second_order() {
        let res = |n: usize| {
            let g = Grid1D::new(-1.0, 1.0, n).unwrap();
            let r = ScalarField::sample(g, |x| (-(x * x)).exp() * (2.0 + (3.0 * x).sin()));
            let r2 = r.map(|v| v * v);
            let lhs = r2.laplacian();
            let dr = r.derivative();
            let lr = r.laplacian();
            (1..n - 1)
                .map(|i| {
                    let rhs = 2.0 * r.values()[i] * lr.values()[i] + 2.0 * dr.values()[i].powi(2);
                    (lhs.values()[i] - rhs).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = res(201) / res(401);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn interpolation_reproduces_cubics() {
        let g = Grid1D::new(-1.0, 2.0, 31).unwrap();
        let p = |x: f64| 0.3 * x * x * x - x * x + 2.0 * x - 1.0;
        let dp = |x: f64| 0.9 * x * x - 2.0 * x + 2.0;
        let f = ScalarField::sample(g, p);
        for &x in &[-1.0, -0.97, 0.0, 0.55, 1.999, 2.0] {
            let (v, d) = f.interpolate(x).unwrap();
            assert!((v - p(x)).abs() < 1e-12, "x={x}");
            assert!((d - dp(x)).abs() < 1e-10, "x={x}");
        }
        assert!(f.interpolate(2.1).is_none());
    }

    #[test]
    fn interior_mask_depth() {
        let g = Grid2D::square(0.0, 1.0, 5).unwrap();
        let m = g.interior_mask(1);
        assert_eq!(m.iter().filter(|&&b| b).count(), 9);
        let m1 = unit(10).interior_mask(2);
        assert_eq!(m1.iter().filter(|&&b| b).count(), 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn operators_are_linear(
                a in prop::collection::vec(-10.0f64..10.0, 12),
                b in prop::collection::vec(-10.0f64..10.0, 12),
                s in -5.0f64..5.0,
            ) {
                let g = Grid1D::new(0.0, 1.1, 12).unwrap();
                let fa = ScalarField::new(g, a.clone()).unwrap();
                let fb = ScalarField::new(g, b.clone()).unwrap();
                let sum = fa.zip_map(&fb, |x, y| s * x + y).unwrap();
                for (op, name) in [(0usize, "grad"), (1, "lap")] {
                    let apply = |f: &ScalarField| if op == 0 { f.derivative() } else { f.laplacian() };
                    let lhs = apply(&sum);
                    let (da, db) = (apply(&fa), apply(&fb));
                    for i in 0..12 {
                        let rhs = s * da.values()[i] + db.values()[i];
                        let scale = 1.0 + lhs.values()[i].abs();
                        prop_assert!((lhs.values()[i] - rhs).abs() < 1e-9 * scale, "{name} i={i}");
                    }
                }
            }
        }
    }
}
