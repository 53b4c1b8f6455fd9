//! Multivariate polynomials and polynomial vector fields.

use std::collections::BTreeMap;

use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Polynomial in `dim` real variables, stored as exponent vector ↦ coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial<T> {
    dim: usize,
    terms: BTreeMap<Vec<u32>, T>,
}

impl<T: Scalar> Polynomial<T> {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn variable(dim: usize, i: usize) -> Self {
        let mut powers = vec![0; dim];
        powers[i] = 1;
        let mut p = Self::zero(dim);
        p.add_term(powers, T::one());
        p
    }

    /// Linear form `a·x`.
    pub fn linear(a: &[T]) -> Self {
        let dim = a.len();
        let mut p = Self::zero(dim);
        for (i, &ai) in a.iter().enumerate() {
            p = p.add(&Self::variable(dim, i).scale(ai));
        }
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<u32>, T)>) -> Self {
        let mut p = Self::zero(dim);
        for (powers, c) in terms {
            assert_eq!(powers.len(), dim, "monomial arity mismatch");
            p.add_term(powers, c);
        }
        p
    }

    fn add_term(&mut self, powers: Vec<u32>, c: T) {
        if c == T::zero() {
            return;
        }
        let v = self.terms.get(&powers).copied().unwrap_or(T::zero()) + c;
        if v == T::zero() {
            self.terms.remove(&powers);
        } else {
            self.terms.insert(powers, v);
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], T)> {
        self.terms.iter().map(|(k, &v)| (k.as_slice(), v))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|k| k.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(powers, &c)| powers.iter().zip(x).fold(c, |acc, (&p, &xi)| acc * xi.powi(p as i32)))
            .fold(T::zero(), |a, b| a + b)
    }

    /// `∂/∂x_k`.
    pub fn partial(&self, k: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (powers, &c) in &self.terms {
            if powers[k] == 0 {
                continue;
            }
            let mut p = powers.clone();
            p[k] -= 1;
            out.add_term(p, c * T::nat(powers[k] as usize));
        }
        out
    }

    pub fn gradient(&self, x: &[T]) -> Vec<T> {
        (0..self.dim).map(|k| self.partial(k).eval(x)).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (powers, &c) in &other.terms {
            out.add_term(powers.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = Self::zero(self.dim);
        for (powers, &c) in &self.terms {
            out.add_term(powers.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Self::zero(self.dim);
        for (pa, &ca) in &self.terms {
            for (pb, &cb) in &other.terms {
                let powers = pa.iter().zip(pb).map(|(a, b)| a + b).collect();
                out.add_term(powers, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        (0..n).fold(Self::constant(self.dim, T::one()), |acc, _| acc.mul(self))
    }

    /// Substitution `x ↦ M x + b`, i.e. the polynomial `p(Mx + b)`.
    pub fn compose_affine(&self, matrix: &Mat<T>, translation: &[T]) -> Self {
        assert_eq!(matrix.rows(), self.dim);
        let new_dim = matrix.cols();
        let images: Vec<Self> = (0..self.dim)
            .map(|i| Self::linear(matrix.row(i)).add(&Self::constant(new_dim, translation[i])))
            .collect();
        let mut out = Self::zero(new_dim);
        for (powers, &c) in &self.terms {
            let mut term = Self::constant(new_dim, c);
            for (i, &p) in powers.iter().enumerate() {
                if p > 0 {
                    term = term.mul(&images[i].pow(p));
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// Largest absolute coefficient.
    pub fn max_coefficient(&self) -> T {
        self.terms.values().fold(T::zero(), |m, &c| m.max(c.abs()))
    }
}

/// Vector field whose components are polynomials, with its Jacobian kept
/// in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyField<T> {
    components: Vec<Polynomial<T>>,
    jacobian: Vec<Vec<Polynomial<T>>>,
}

impl<T: Scalar> PolyField<T> {
    pub fn new(components: Vec<Polynomial<T>>) -> Self {
        let dim = components.len();
        assert!(components.iter().all(|p| p.dim() == dim), "field must map R^d to R^d");
        let jacobian = components
            .iter()
            .map(|p| (0..dim).map(|k| p.partial(k)).collect())
            .collect();
        Self { components, jacobian }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(vec![Polynomial::zero(dim); dim])
    }

    pub fn constant(c: &[T]) -> Self {
        Self::new(c.iter().map(|&ci| Polynomial::constant(c.len(), ci)).collect())
    }

    /// `x ↦ A x`.
    pub fn linear(a: &Mat<T>) -> Self {
        assert!(a.is_square());
        Self::new((0..a.rows()).map(|i| Polynomial::linear(a.row(i))).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Polynomial<T>] {
        &self.components
    }

    pub fn degree(&self) -> u32 {
        self.components.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[T]) -> Vec<T> {
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    pub fn jacobian(&self, x: &[T]) -> Mat<T> {
        let d = self.dim();
        Mat::from_fn(d, d, |i, j| self.jacobian[i][j].eval(x))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        )
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.components.iter().map(|p| p.scale(s)).collect())
    }

    /// `x ↦ Dself(x)·other(x) − Dother(x)·self(x)`.
    pub fn bracket(&self, other: &Self) -> Self {
        let d = self.dim();
        let comps = (0..d)
            .map(|i| {
                // summed separately so that swapping the arguments negates exactly
                let (mut plus, mut minus) = (Polynomial::zero(d), Polynomial::zero(d));
                for j in 0..d {
                    plus = plus.add(&self.jacobian[i][j].mul(&other.components[j]));
                    minus = minus.add(&other.jacobian[i][j].mul(&self.components[j]));
                }
                plus.add(&minus.scale(-T::one()))
            })
            .collect();
        Self::new(comps)
    }

    /// `x ↦ L·f(M x + b)` for a linear `L` and affine substitution.
    pub fn conjugate(&self, outer: &Mat<T>, matrix: &Mat<T>, translation: &[T]) -> Self {
        let substituted: Vec<Polynomial<T>> = self
            .components
            .iter()
            .map(|p| p.compose_affine(matrix, translation))
            .collect();
        let d = substituted.first().map_or(0, Polynomial::dim);
        let comps = (0..outer.rows())
            .map(|i| {
                substituted
                    .iter()
                    .enumerate()
                    .fold(Polynomial::zero(d), |acc, (j, p)| acc.add(&p.scale(outer[(i, j)])))
            })
            .collect();
        Self::new(comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(dim: usize, i: usize) -> Polynomial<f64> {
        Polynomial::variable(dim, i)
    }

    #[test]
    fn eval_and_partial() {
        // p = 3 x0^2 x1 - x1 + 2
        let p = x(2, 0)
            .pow(2)
            .mul(&x(2, 1))
            .scale(3.0)
            .add(&x(2, 1).scale(-1.0))
            .add(&Polynomial::constant(2, 2.0));
        assert_eq!(p.eval(&[2.0, 1.0]), 13.0);
        assert_eq!(p.partial(0).eval(&[2.0, 1.0]), 12.0);
        assert_eq!(p.partial(1).eval(&[2.0, 1.0]), 11.0);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn cancellation_removes_terms() {
        let p = x(1, 0).add(&x(1, 0).scale(-1.0));
        assert!(p.is_zero());
    }

    #[test]
    fn compose_affine_matches_pointwise() {
        let p = x(2, 0).mul(&x(2, 1)).add(&x(2, 1).pow(3));
        let m = Mat::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.5]]);
        let b = [0.25, -1.0];
        let q = p.compose_affine(&m, &b);
        let pt = [0.3, -0.7];
        let mapped: Vec<f64> = m.mul_vec(&pt).iter().zip(&b).map(|(a, c)| a + c).collect();
        assert!((q.eval(&pt) - p.eval(&mapped)).abs() < 1e-14);
    }

    #[test]
    fn linear_bracket_is_commutator() {
        let a: Mat<f64> = Mat::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0]]);
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![3.0, 1.0]]);
        let br = PolyField::linear(&a).bracket(&PolyField::linear(&b));
        let comm = a.mul(&b).sub(&b.mul(&a));
        let pt = [0.4, -1.2];
        let expect = comm.mul_vec(&pt);
        let got = br.eval(&pt);
        assert!((got[0] - expect[0]).abs() < 1e-14 && (got[1] - expect[1]).abs() < 1e-14);
    }
}
