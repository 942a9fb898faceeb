//! Discrete image domain: grid storage, forward-difference gradient, its
//! exact negative-adjoint divergence, and the composed 5-point Laplacian.
//!
//! Grid spacing is fixed at one pixel; model parameters absorb physical
//! scale. Neumann boundaries replicate the edge value (zero difference
//! across the boundary), Dirichlet boundaries use zero ghost values.

use crate::error::GridError;
use crate::scalar::Scalar;

/// Boundary handling for gradients, divergences and Laplacians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryCondition {
    /// Zero flux across the boundary (replicated ghost cells).
    #[default]
    Neumann,
    /// Zero ghost values outside the grid.
    Dirichlet,
}

/// 2-D scalar field (gray values) with a boundary-condition tag.
///
/// Values are stored row-major and are guaranteed finite; the grid is at
/// least 2x2. Nominal gray range is [0, 255] but values are unconstrained
/// until written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid<T: Scalar> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
    pub bc: BoundaryCondition,
}

/// Per-pixel 2-vector field (discrete gradient or flux).
///
/// Fields produced by [`gradient`] under the Neumann convention carry zero
/// x-components on the last row and zero y-components on the last column
/// (no flux across the boundary); [`divergence`] accepts arbitrary fields.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T: Scalar> {
    rows: usize,
    cols: usize,
    pub vx: Vec<T>,
    pub vy: Vec<T>,
}

impl<T: Scalar> ImageGrid<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<T>,
        bc: BoundaryCondition,
    ) -> Result<Self, GridError> {
        if rows < 2 || cols < 2 {
            return Err(GridError::TooSmall { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(GridError::LengthMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self {
            rows,
            cols,
            values,
            bc,
        })
    }

    pub fn zeros(rows: usize, cols: usize, bc: BoundaryCondition) -> Self {
        Self::constant(rows, cols, T::zero(), bc)
    }

    pub fn constant(rows: usize, cols: usize, value: T, bc: BoundaryCondition) -> Self {
        assert!(rows >= 2 && cols >= 2, "grid must be at least 2x2");
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
            bc,
        }
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        bc: BoundaryCondition,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Self::new(rows, cols, values, bc).expect("from_fn produced an invalid grid")
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn with_bc(mut self, bc: BoundaryCondition) -> Self {
        self.bc = bc;
        self
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
            bc: self.bc,
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.same_shape(other), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            bc: self.bc,
        }
    }

    /// `self - other`, keeping `self`'s boundary tag.
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, a: T) -> Self {
        self.map(|v| a * v)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: T, other: &Self) {
        assert!(self.same_shape(other), "shape mismatch");
        for (v, &o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }

    pub fn dot(&self, other: &Self) -> T {
        assert!(self.same_shape(other), "shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_l1(&self) -> T {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn norm_l2(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn norm_linf(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn mean(&self) -> T {
        let n = T::from_usize(self.values.len()).expect("grid size fits in scalar");
        self.values.iter().copied().sum::<T>() / n
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |acc, &v| acc.min(v))
    }

    pub fn max_value(&self) -> T {
        self.values
            .iter()
            .fold(T::neg_infinity(), |acc, &v| acc.max(v))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for ImageGrid<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.values[i * self.cols + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for ImageGrid<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.values[i * self.cols + j]
    }
}

impl<T: Scalar> VectorField<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            vx: vec![T::zero(); rows * cols],
            vy: vec![T::zero(); rows * cols],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> (T, T) {
        let k = i * self.cols + j;
        (self.vx[k], self.vy[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: (T, T)) {
        let k = i * self.cols + j;
        self.vx[k] = v.0;
        self.vy[k] = v.1;
    }

    pub fn dot(&self, other: &Self) -> T {
        assert!(
            self.rows == other.rows && self.cols == other.cols,
            "shape mismatch"
        );
        let x: T = self
            .vx
            .iter()
            .zip(&other.vx)
            .map(|(&a, &b)| a * b)
            .sum();
        let y: T = self
            .vy
            .iter()
            .zip(&other.vy)
            .map(|(&a, &b)| a * b)
            .sum();
        x + y
    }

    /// Applies `f` to every per-pixel 2-vector in place.
    pub fn map_inplace(&mut self, f: impl Fn(T, T) -> (T, T)) {
        for k in 0..self.vx.len() {
            let (a, b) = f(self.vx[k], self.vy[k]);
            self.vx[k] = a;
            self.vy[k] = b;
        }
    }

    /// Largest per-pixel Euclidean magnitude.
    pub fn max_norm(&self) -> T {
        let mut m = T::zero();
        for k in 0..self.vx.len() {
            let n2 = self.vx[k] * self.vx[k] + self.vy[k] * self.vy[k];
            m = m.max(n2);
        }
        m.sqrt()
    }
}

/// Forward-difference gradient with unit spacing.
///
/// `vx[i][j] = u[i+1][j] - u[i][j]` for `i < rows-1`; the last row holds 0
/// under Neumann and `-u[i][j]` under Dirichlet (zero ghost). Same along
/// columns for `vy`.
pub fn gradient<T: Scalar>(u: &ImageGrid<T>) -> VectorField<T> {
    gradient_bc(u, u.bc)
}

/// [`gradient`] with an explicit boundary condition, ignoring the tag
/// carried by the image.
pub fn gradient_bc<T: Scalar>(u: &ImageGrid<T>, bc: BoundaryCondition) -> VectorField<T> {
    let (rows, cols) = (u.rows, u.cols);
    let mut g = VectorField::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let x = if i + 1 < rows {
                u.values[k + cols] - u.values[k]
            } else {
                match bc {
                    BoundaryCondition::Neumann => T::zero(),
                    BoundaryCondition::Dirichlet => -u.values[k],
                }
            };
            let y = if j + 1 < cols {
                u.values[k + 1] - u.values[k]
            } else {
                match bc {
                    BoundaryCondition::Neumann => T::zero(),
                    BoundaryCondition::Dirichlet => -u.values[k],
                }
            };
            g.vx[k] = x;
            g.vy[k] = y;
        }
    }
    g
}

/// Exact negative adjoint of [`gradient`]:
/// `<gradient(u), p> = -<u, divergence(p)>` for all `u`, `p`.
///
/// This is the backward difference with a zero ghost above/left; under
/// Neumann the last-slot components are not part of the pairing and are
/// ignored.
pub fn divergence<T: Scalar>(p: &VectorField<T>, bc: BoundaryCondition) -> ImageGrid<T> {
    let (rows, cols) = (p.rows, p.cols);
    let mut out = ImageGrid::zeros(rows, cols, bc);
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut d = T::zero();
            let use_x = match bc {
                BoundaryCondition::Neumann => i + 1 < rows,
                BoundaryCondition::Dirichlet => true,
            };
            if use_x {
                d += p.vx[k];
            }
            if i > 0 {
                d -= p.vx[k - cols];
            }
            let use_y = match bc {
                BoundaryCondition::Neumann => j + 1 < cols,
                BoundaryCondition::Dirichlet => true,
            };
            if use_y {
                d += p.vy[k];
            }
            if j > 0 {
                d -= p.vy[k - 1];
            }
            out.values[k] = d;
        }
    }
    out
}

/// 5-point Laplacian defined as `divergence(gradient(u))`, so the
/// adjoint-pair identity holds bit-for-bit.
pub fn laplacian<T: Scalar>(u: &ImageGrid<T>) -> ImageGrid<T> {
    divergence(&gradient(u), u.bc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_from(rows: usize, cols: usize, v: &[f64], bc: BoundaryCondition) -> ImageGrid<f64> {
        ImageGrid::new(rows, cols, v.to_vec(), bc).unwrap()
    }

    fn random_grid(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bc: BoundaryCondition) -> ImageGrid<f64> {
        ImageGrid::from_fn(rows, cols, bc, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_field(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> VectorField<f64> {
        let mut p = VectorField::zeros(rows, cols);
        for k in 0..rows * cols {
            p.vx[k] = rng.gen_range(-1.0..1.0);
            p.vy[k] = rng.gen_range(-1.0..1.0);
        }
        p
    }

    #[test]
    fn rejects_invalid_grids() {
        assert!(matches!(
            ImageGrid::<f64>::new(1, 5, vec![0.0; 5], BoundaryCondition::Neumann),
            Err(GridError::TooSmall { .. })
        ));
        assert!(matches!(
            ImageGrid::<f64>::new(2, 2, vec![0.0; 3], BoundaryCondition::Neumann),
            Err(GridError::LengthMismatch { .. })
        ));
        assert!(matches!(
            ImageGrid::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0], BoundaryCondition::Neumann),
            Err(GridError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let u = ImageGrid::constant(5, 4, 7.0, BoundaryCondition::Neumann);
        let g = gradient(&u);
        assert!(g.vx.iter().chain(&g.vy).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_row_ramp_neumann() {
        let u = ImageGrid::from_fn(5, 3, BoundaryCondition::Neumann, |i, _| i as f64);
        let g = gradient(&u);
        for i in 0..5 {
            for j in 0..3 {
                let expected = if i < 4 { 1.0 } else { 0.0 };
                assert_eq!(g.at(i, j).0, expected);
                assert_eq!(g.at(i, j).1, 0.0);
            }
        }
    }

    #[test]
    fn gradient_2x2_dirichlet_stencil() {
        // u = [[0,1],[2,3]] with zero ghosts below/right.
        let u = grid_from(2, 2, &[0.0, 1.0, 2.0, 3.0], BoundaryCondition::Dirichlet);
        let g = gradient(&u);
        assert_eq!(g.at(0, 0), (2.0, 1.0));
        assert_eq!(g.at(0, 1), (2.0, -1.0));
        assert_eq!(g.at(1, 0), (-2.0, 1.0));
        assert_eq!(g.at(1, 1), (-3.0, -3.0));
    }

    #[test]
    fn divergence_of_zero_field_is_zero() {
        let p = VectorField::<f64>::zeros(4, 4);
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            assert!(divergence(&p, bc).values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn divergence_of_ramp_gradient_telescopes() {
        let rows = 6;
        let u = ImageGrid::from_fn(rows, 3, BoundaryCondition::Neumann, |i, _| i as f64);
        let d = divergence(&gradient(&u), BoundaryCondition::Neumann);
        for j in 0..3 {
            assert_eq!(d[(0, j)], 1.0);
            for i in 1..rows - 1 {
                assert_eq!(d[(i, j)], 0.0);
            }
            assert_eq!(d[(rows - 1, j)], -1.0);
        }
    }

    #[test]
    fn adjoint_identity_random_pairs_both_bcs() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            for _ in 0..100 {
                let rows = rng.gen_range(2..9);
                let cols = rng.gen_range(2..9);
                let u = random_grid(&mut rng, rows, cols, bc);
                let p = random_field(&mut rng, rows, cols);
                let lhs = gradient(&u).dot(&p);
                let rhs = -u.dot(&divergence(&p, bc));
                let scale = lhs.abs().max(rhs.abs()).max(1e-30);
                assert!(
                    (lhs - rhs).abs() / scale <= 1e-12,
                    "adjoint identity violated: {lhs} vs {rhs} ({bc:?})"
                );
            }
        }
    }

    #[test]
    fn laplacian_matches_div_grad_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for bc in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            let u = random_grid(&mut rng, 7, 5, bc);
            let a = laplacian(&u);
            let b = divergence(&gradient(&u), bc);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn laplacian_of_constant() {
        let u = ImageGrid::constant(4, 4, 3.0, BoundaryCondition::Neumann);
        assert!(laplacian(&u).values().iter().all(|&v| v == 0.0));

        // Dirichlet: the ghost differences enter on the far side of each
        // axis; the affected edge picks up -c and the corner -2c.
        let c = 3.0;
        let u = ImageGrid::constant(4, 4, c, BoundaryCondition::Dirichlet);
        let l = laplacian(&u);
        assert_eq!(l[(3, 3)], -2.0 * c);
        assert_eq!(l[(3, 1)], -c);
        assert_eq!(l[(1, 3)], -c);
        assert_eq!(l[(1, 1)], 0.0);
        assert_eq!(l[(0, 0)], 0.0);
    }

    #[test]
    fn neumann_laplacian_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_grid(&mut rng, 8, 6, BoundaryCondition::Neumann);
            let l = laplacian(&u);
            let total: f64 = l.values().iter().sum();
            assert!(total.abs() <= 1e-10 * u.norm_l1().max(1.0));
        }
    }
}
