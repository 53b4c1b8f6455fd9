//! Affine isometries and finite groups of them.

use crate::error::{Error, Result};
use crate::linalg::{add, dist, Mat};
use crate::scalar::Scalar;

/// `x ↦ M x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T> {
    pub matrix: Mat<T>,
    pub translation: Vec<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn new(matrix: Mat<T>, translation: Vec<T>) -> Self {
        assert_eq!(matrix.rows(), translation.len());
        Self { matrix, translation }
    }

    pub fn linear(matrix: Mat<T>) -> Self {
        let n = matrix.rows();
        Self::new(matrix, vec![T::zero(); n])
    }

    pub fn identity(dim: usize) -> Self {
        Self::linear(Mat::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    #[inline]
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        add(&self.matrix.mul_vec(x), &self.translation)
    }

    /// Derivative action on tangent vectors.
    #[inline]
    pub fn apply_linear(&self, v: &[T]) -> Vec<T> {
        self.matrix.mul_vec(v)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.matrix.mul(&other.matrix),
            add(&self.matrix.mul_vec(&other.translation), &self.translation),
        )
    }

    pub fn inverse(&self) -> Option<Self> {
        let inv = self.matrix.inverse()?;
        let t = inv.mul_vec(&self.translation).iter().map(|&x| -x).collect();
        Some(Self::new(inv, t))
    }

    /// Max-entry distance of both parts.
    pub fn distance(&self, other: &Self) -> T {
        let dt = self
            .translation
            .iter()
            .zip(&other.translation)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        self.matrix.sub(&other.matrix).max_abs().max(dt)
    }

    /// `‖MᵀM − I‖_max`.
    pub fn orthogonality_defect(&self) -> T {
        let n = self.dim();
        self.matrix
            .transpose()
            .mul(&self.matrix)
            .sub(&Mat::identity(n))
            .max_abs()
    }
}

/// Affine isometry with orthogonal linear part.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement<T>(AffineMap<T>);

impl<T: Scalar> GroupElement<T> {
    pub fn new(map: AffineMap<T>, tol: T) -> Result<Self> {
        let defect = map.orthogonality_defect();
        if !(defect < tol) {
            return Err(Error::Validation(format!(
                "linear part is not orthogonal (defect {})",
                defect.as_f64()
            )));
        }
        Ok(Self(map))
    }

    pub fn linear(matrix: Mat<T>, tol: T) -> Result<Self> {
        Self::new(AffineMap::linear(matrix), tol)
    }

    pub fn identity(dim: usize) -> Self {
        Self(AffineMap::identity(dim))
    }

    pub fn map(&self) -> &AffineMap<T> {
        &self.0
    }

    pub fn linear_part(&self) -> &Mat<T> {
        &self.0.matrix
    }

    pub fn translation(&self) -> &[T] {
        &self.0.translation
    }

    pub fn is_linear(&self) -> bool {
        self.0.translation.iter().all(|&t| t == T::zero())
    }

    #[inline]
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.0.apply(x)
    }

    #[inline]
    pub fn apply_tangent(&self, v: &[T]) -> Vec<T> {
        self.0.apply_linear(v)
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self(self.0.compose(&other.0))
    }

    /// Exact for isometries: `(Aᵀ, −Aᵀb)`.
    pub fn inverse(&self) -> Self {
        let at = self.0.matrix.transpose();
        let t = at.mul_vec(&self.0.translation).iter().map(|&x| -x).collect();
        Self(AffineMap::new(at, t))
    }

    pub fn distance(&self, other: &Self) -> T {
        self.0.distance(&other.0)
    }
}

/// Finite group of affine isometries with its multiplication table.
#[derive(Clone, Debug)]
pub struct FiniteGroup<T> {
    dim: usize,
    elements: Vec<GroupElement<T>>,
    /// `table[i][j]` is the index of `elements[i] ∘ elements[j]`.
    table: Vec<Vec<usize>>,
    inverses: Vec<usize>,
}

/// Largest group the closure will build.
pub const MAX_GROUP_ORDER: usize = 1024;

impl<T: Scalar> FiniteGroup<T> {
    pub fn trivial(dim: usize) -> Self {
        Self {
            dim,
            elements: vec![GroupElement::identity(dim)],
            table: vec![vec![0]],
            inverses: vec![0],
        }
    }

    /// Closure of `generators` under composition.
    pub fn generated_by(dim: usize, generators: &[GroupElement<T>], tol: T) -> Result<Self> {
        let mut elements = vec![GroupElement::identity(dim)];
        let mut frontier = vec![0usize];
        while let Some(i) = frontier.pop() {
            for g in generators {
                if g.map().dim() != dim {
                    return Err(Error::Validation("generator dimension mismatch".into()));
                }
                let candidate = g.compose(&elements[i]);
                if find(&elements, &candidate, tol).is_none() {
                    elements.push(candidate);
                    frontier.push(elements.len() - 1);
                    if elements.len() > MAX_GROUP_ORDER {
                        return Err(Error::NotClosed(format!("closure exceeds {MAX_GROUP_ORDER} elements")));
                    }
                }
            }
        }
        Self::from_elements(dim, elements, tol)
    }

    /// Builds the Cayley table; fails on duplicates or non-closure.
    pub fn from_elements(dim: usize, mut elements: Vec<GroupElement<T>>, tol: T) -> Result<Self> {
        let id = GroupElement::identity(dim);
        let Some(pos) = find(&elements, &id, tol) else {
            return Err(Error::NotClosed("identity missing".into()));
        };
        elements.swap(0, pos);
        for i in 0..elements.len() {
            for j in i + 1..elements.len() {
                if elements[i].distance(&elements[j]) < tol {
                    return Err(Error::Validation(format!(
                        "action is not effective: elements {i} and {j} coincide"
                    )));
                }
            }
        }
        let n = elements.len();
        let mut table = vec![vec![0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let prod = elements[i].compose(&elements[j]);
                table[i][j] = find(&elements, &prod, tol)
                    .ok_or_else(|| Error::NotClosed(format!("product of elements {i} and {j} not listed")))?;
            }
        }
        let inverses = (0..n)
            .map(|i| {
                (0..n)
                    .find(|&j| table[i][j] == 0)
                    .ok_or_else(|| Error::NotClosed(format!("element {i} has no inverse")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            elements,
            table,
            inverses,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement<T>] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &GroupElement<T> {
        &self.elements[i]
    }

    pub fn is_trivial(&self) -> bool {
        self.elements.len() == 1
    }

    #[inline]
    pub fn product(&self, i: usize, j: usize) -> usize {
        self.table[i][j]
    }

    #[inline]
    pub fn inverse_index(&self, i: usize) -> usize {
        self.inverses[i]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn index_of(&self, g: &GroupElement<T>, tol: T) -> Option<usize> {
        find(&self.elements, g, tol)
    }

    /// Subset closed under the table product (contains identity, finite ⇒ subgroup).
    pub fn is_subgroup(&self, indices: &[usize]) -> bool {
        indices.contains(&0)
            && indices
                .iter()
                .all(|&i| indices.iter().all(|&j| indices.contains(&self.table[i][j])))
    }

    /// Group restricted to the listed indices.
    pub fn subgroup(&self, indices: &[usize], tol: T) -> Result<Self> {
        if !self.is_subgroup(indices) {
            return Err(Error::NotClosed("index set is not a subgroup".into()));
        }
        Self::from_elements(
            self.dim,
            indices.iter().map(|&i| self.elements[i].clone()).collect(),
            tol,
        )
    }

    /// Orbit of `x` (with repetitions at points of nontrivial isotropy).
    pub fn orbit(&self, x: &[T]) -> Vec<Vec<T>> {
        self.elements.iter().map(|g| g.apply(x)).collect()
    }

    /// Max over elements of `‖g(x) - x‖` restricted to points, used for sanity checks.
    pub fn displacement(&self, x: &[T]) -> T {
        self.elements.iter().fold(T::zero(), |m, g| m.max(dist(&g.apply(x), x)))
    }
}

fn find<T: Scalar>(elements: &[GroupElement<T>], g: &GroupElement<T>, tol: T) -> Option<usize> {
    elements.iter().position(|e| e.distance(g) < tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot(k: f64) -> GroupElement<f64> {
        GroupElement::linear(Mat::rotation2(2.0 * std::f64::consts::PI / k), 1e-9).unwrap()
    }

    #[test]
    fn cyclic_closure_and_table() {
        let g = FiniteGroup::generated_by(2, &[rot(5.0)], 1e-9).unwrap();
        assert_eq!(g.order(), 5);
        for i in 0..5 {
            for j in 0..5 {
                let prod = g.element(i).compose(g.element(j));
                assert!(prod.distance(g.element(g.product(i, j))) < 1e-9);
            }
            assert_eq!(g.product(i, g.inverse_index(i)), 0);
        }
    }

    #[test]
    fn non_orthogonal_rejected() {
        let m = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]);
        assert!(GroupElement::linear(m, 1e-9).is_err());
    }

    #[test]
    fn unclosed_list_rejected() {
        let e = vec![GroupElement::identity(2), rot(3.0)];
        assert!(matches!(
            FiniteGroup::from_elements(2, e, 1e-9),
            Err(Error::NotClosed(_))
        ));
    }

    #[test]
    fn dihedral_group_order() {
        let mirror = GroupElement::linear(Mat::diag(&[-1.0, 1.0]), 1e-9).unwrap();
        let g = FiniteGroup::generated_by(2, &[rot(4.0), mirror], 1e-9).unwrap();
        assert_eq!(g.order(), 8);
        assert!(g.is_subgroup(&[0]));
    }
}
