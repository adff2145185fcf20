//! Dense third-order tensors and the handful of multilinear operations the
//! moment method needs.
//!
//! Storage is row-major: entry `(i, j, l)` of a `d1 x d2 x d3` tensor lives
//! at offset `(i * d2 + j) * d3 + l`. All indices are zero-based. Where a
//! formula is usually written with one-based indices, the zero-based mapping
//! is stated next to the function.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Dense real third-order tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(d1: usize, d2: usize, d3: usize) -> Self {
        Self {
            dims: [d1, d2, d3],
            data: vec![0.0; d1 * d2 * d3],
        }
    }

    /// Cubic zero tensor.
    pub fn zeros_cubic(d: usize) -> Self {
        Self::zeros(d, d, d)
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(invalid(format!("tensor dims must be positive, got {dims:?}")));
        }
        let len = dims[0] * dims[1] * dims[2];
        if data.len() != len {
            return Err(invalid(format!(
                "tensor data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::zeros(dims[0], dims[1], dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for l in 0..dims[2] {
                    let off = t.offset(i, j, l);
                    t.data[off] = f(i, j, l);
                }
            }
        }
        t
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Side length when the tensor is cubic.
    pub fn cubic_dim(&self) -> Option<usize> {
        let [a, b, c] = self.dims;
        (a == b && b == c).then_some(a)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, l: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + l
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[self.offset(i, j, l)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, l: usize, value: f64) {
        let off = self.offset(i, j, l);
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Tensor3) -> Result<Self> {
        if self.dims != other.dims {
            return Err(invalid(format!(
                "tensor dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn add_rank_one(&mut self, w: f64, a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>) {
        let [d1, d2, d3] = self.dims;
        debug_assert!(a.len() == d1 && b.len() == d2 && c.len() == d3);
        for i in 0..d1 {
            let wa = w * a[i];
            for j in 0..d2 {
                let wab = wa * b[j];
                let row = (i * d2 + j) * d3;
                for l in 0..d3 {
                    self.data[row + l] += wab * c[l];
                }
            }
        }
    }

    /// Largest `|T(i,j,l) - T(pi(i,j,l))|` over all index permutations.
    /// Returns `None` for non-cubic tensors.
    pub fn symmetry_defect(&self) -> Option<f64> {
        let d = self.cubic_dim()?;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    let v = self.get(i, j, l);
                    for w in [
                        self.get(i, l, j),
                        self.get(j, i, l),
                        self.get(j, l, i),
                        self.get(l, i, j),
                        self.get(l, j, i),
                    ] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        Some(worst)
    }

    /// Scalar form `T(u, v, w) = sum_{ijl} T(i,j,l) u(i) v(j) w(l)`.
    pub fn form(&self, u: &DVector<f64>, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        self.check_vectors(u.len(), v.len(), w.len())?;
        let [d1, d2, d3] = self.dims;
        let mut acc = 0.0;
        for i in 0..d1 {
            let mut s_i = 0.0;
            for j in 0..d2 {
                let row = (i * d2 + j) * d3;
                let mut s_ij = 0.0;
                for l in 0..d3 {
                    s_ij += self.data[row + l] * w[l];
                }
                s_i += s_ij * v[j];
            }
            acc += s_i * u[i];
        }
        Ok(acc)
    }

    /// `T(v, v, v)` for a cubic tensor.
    pub fn cubic_form(&self, v: &DVector<f64>) -> Result<f64> {
        self.form(v, v, v)
    }

    /// Mode-3 contraction `T(I, I, theta)`, a `d1 x d2` matrix.
    pub fn contract_mode3(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let [d1, d2, d3] = self.dims;
        if theta.len() != d3 {
            return Err(invalid(format!(
                "contraction vector has length {}, expected {}",
                theta.len(),
                d3
            )));
        }
        Ok(DMatrix::from_fn(d1, d2, |i, j| {
            let row = (i * d2 + j) * d3;
            (0..d3).map(|l| self.data[row + l] * theta[l]).sum()
        }))
    }

    fn check_vectors(&self, a: usize, b: usize, c: usize) -> Result<()> {
        if [a, b, c] != self.dims {
            return Err(invalid(format!(
                "vector lengths {:?} do not match tensor dims {:?}",
                [a, b, c],
                self.dims
            )));
        }
        Ok(())
    }
}

/// Rank-one tensor `w * a (x) b (x) c`.
pub fn outer3(a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>, w: f64) -> Result<Tensor3> {
    let d = a.len();
    if d == 0 || b.len() != d || c.len() != d {
        return Err(invalid(format!(
            "outer3 needs equal nonzero lengths, got {}, {}, {}",
            a.len(),
            b.len(),
            c.len()
        )));
    }
    let mut t = Tensor3::zeros_cubic(d);
    t.add_rank_one(w, a, b, c);
    Ok(t)
}

/// Mode-1 unfolding of a cubic tensor into a `d x d^2` matrix.
///
/// One-based `M(i, l + (j-1) d) = T(i, j, l)` becomes zero-based
/// `M(i, l + j d) = T(i, j, l)`.
pub fn matricize(t: &Tensor3) -> Result<DMatrix<f64>> {
    let d = t
        .cubic_dim()
        .ok_or_else(|| invalid(format!("matricize needs a cubic tensor, got {:?}", t.dims())))?;
    Ok(DMatrix::from_fn(d, d * d, |i, col| {
        let (j, l) = (col / d, col % d);
        t.get(i, j, l)
    }))
}

/// Column-wise Kronecker product of two `d x k` matrices.
///
/// One-based `C(l + (i-1) d, j) = A(i, j) B(l, j)` becomes zero-based
/// `C(l + i d, j) = A(i, j) B(l, j)`: the row index of `A` varies slowest.
pub fn khatri_rao(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(invalid(format!(
            "khatri_rao needs equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (d, k) = a.shape();
    Ok(DMatrix::from_fn(d * d, k, |row, j| {
        let (i, l) = (row / d, row % d);
        a[(i, j)] * b[(l, j)]
    }))
}

/// Kronecker product of two vectors in Khatri–Rao order (`u` index slowest).
pub fn kron_vec(u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(u.len() * n, |row, _| u[row / n] * v[row % n])
}

/// `T(I, u, v)`: component `i` is `sum_{j,l} u(j) v(l) T(i, j, l)`.
pub fn contract_mode1(t: &Tensor3, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let [d1, d2, d3] = t.dims();
    if u.len() != d2 || v.len() != d3 {
        return Err(invalid(format!(
            "contract_mode1 vectors have lengths {} and {}, tensor dims {:?}",
            u.len(),
            v.len(),
            t.dims()
        )));
    }
    let data = t.data();
    Ok(DVector::from_fn(d1, |i, _| {
        let mut acc = 0.0;
        for j in 0..d2 {
            let row = (i * d2 + j) * d3;
            let mut s = 0.0;
            for l in 0..d3 {
                s += data[row + l] * v[l];
            }
            acc += s * u[j];
        }
        acc
    }))
}

/// Multilinear transform `T(W1, W2, W3)`:
/// `out(a, b, c) = sum_{ijl} T(i,j,l) W1(i,a) W2(j,b) W3(l,c)`.
///
/// Applied one mode at a time, so the cost is `O(d^3 p)` rather than
/// `O(d^3 p^3)`.
pub fn multilinear(
    t: &Tensor3,
    w1: &DMatrix<f64>,
    w2: &DMatrix<f64>,
    w3: &DMatrix<f64>,
) -> Result<Tensor3> {
    let [d1, d2, d3] = t.dims();
    if w1.nrows() != d1 || w2.nrows() != d2 || w3.nrows() != d3 {
        return Err(invalid(format!(
            "multilinear factor rows {:?} do not match tensor dims {:?}",
            [w1.nrows(), w2.nrows(), w3.nrows()],
            t.dims()
        )));
    }
    let (p1, p2, p3) = (w1.ncols(), w2.ncols(), w3.ncols());

    // mode 3: s1(i, j, c) = sum_l T(i,j,l) W3(l,c)
    let mut s1 = Tensor3::zeros(d1, d2, p3);
    for i in 0..d1 {
        for j in 0..d2 {
            for l in 0..d3 {
                let v = t.get(i, j, l);
                if v == 0.0 {
                    continue;
                }
                for c in 0..p3 {
                    let off = s1.offset(i, j, c);
                    s1.data[off] += v * w3[(l, c)];
                }
            }
        }
    }
    // mode 2: s2(i, b, c) = sum_j s1(i,j,c) W2(j,b)
    let mut s2 = Tensor3::zeros(d1, p2, p3);
    for i in 0..d1 {
        for j in 0..d2 {
            for b in 0..p2 {
                let w = w2[(j, b)];
                if w == 0.0 {
                    continue;
                }
                for c in 0..p3 {
                    let off = s2.offset(i, b, c);
                    s2.data[off] += w * s1.get(i, j, c);
                }
            }
        }
    }
    // mode 1: out(a, b, c) = sum_i s2(i,b,c) W1(i,a)
    let mut out = Tensor3::zeros(p1, p2, p3);
    for i in 0..d1 {
        for a in 0..p1 {
            let w = w1[(i, a)];
            if w == 0.0 {
                continue;
            }
            for b in 0..p2 {
                for c in 0..p3 {
                    let off = out.offset(a, b, c);
                    out.data[off] += w * s2.get(i, b, c);
                }
            }
        }
    }
    Ok(out)
}

/// Symmetric multilinear transform `T(W, W, W)`.
pub fn multilinear_sym(t: &Tensor3, w: &DMatrix<f64>) -> Result<Tensor3> {
    multilinear(t, w, w, w)
}

/// Dense sixth-order tensor with all six dimensions equal.
///
/// Entry `(i1, i2, j1, j2, l1, l2)` sits at
/// `sum_m idx[m] * strides[m]` with row-major strides
/// `[d^5, d^4, d^3, d^2, d, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor6 {
    dims: [usize; 6],
    strides: [usize; 6],
    data: Vec<f64>,
}

impl Tensor6 {
    pub fn from_vec(dims: [usize; 6], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(invalid(format!("tensor dims must be positive, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(invalid(format!(
                "sixth-order data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        let mut strides = [1usize; 6];
        for m in (0..5).rev() {
            strides[m] = strides[m + 1] * dims[m + 1];
        }
        Ok(Self { dims, strides, data })
    }

    pub fn zeros(d: usize) -> Self {
        Self::from_vec([d; 6], vec![0.0; d.pow(6)]).expect("uniform dims")
    }

    /// `sum_j w_j a_j^{(x)6}` for the columns `a_j` of `a`.
    pub fn symmetric_from_columns(a: &DMatrix<f64>, weights: &[f64]) -> Result<Self> {
        if weights.len() != a.ncols() {
            return Err(invalid("one weight per column required"));
        }
        let d = a.nrows();
        let mut t = Self::zeros(d);
        for (j, &w) in weights.iter().enumerate() {
            let col = a.column(j).into_owned();
            let aa = kron_vec(&col, &col);
            let aaaa = kron_vec(&aa, &aa);
            let full = kron_vec(&aaaa, &aa);
            for (dst, src) in t.data.iter_mut().zip(full.iter()) {
                *dst += w * src;
            }
        }
        Ok(t)
    }

    pub fn dims(&self) -> [usize; 6] {
        self.dims
    }

    pub fn strides(&self) -> [usize; 6] {
        self.strides
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, idx: [usize; 6]) -> f64 {
        let off: usize = idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    pub fn set(&mut self, idx: [usize; 6], value: f64) {
        let off: usize = idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum();
        self.data[off] = value;
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Regroup a sixth-order tensor over `R^d` into a third-order tensor over
/// `R^{d^2}`.
///
/// One-based `T~(i2 + d(i1-1), j2 + d(j1-1), l2 + d(l1-1)) = T(i1,i2,j1,j2,l1,l2)`
/// becomes zero-based `T~(i2 + d i1, j2 + d j1, l2 + d l1)`. With row-major
/// storage on both sides the flat layout is unchanged, so this is a pure
/// reshape.
pub fn tensorize_6_to_3(t6: &Tensor6) -> Result<Tensor3> {
    let d = t6.dims[0];
    if t6.dims.iter().any(|&n| n != d) {
        return Err(invalid(format!(
            "tensorize needs uniform dims, got {:?}",
            t6.dims
        )));
    }
    let dd = d * d;
    let mut out = Tensor3::zeros_cubic(dd);
    for i1 in 0..d {
        for i2 in 0..d {
            for j1 in 0..d {
                for j2 in 0..d {
                    for l1 in 0..d {
                        for l2 in 0..d {
                            out.set(
                                i2 + d * i1,
                                j2 + d * j1,
                                l2 + d * l1,
                                t6.get([i1, i2, j1, j2, l1, l2]),
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(d: usize, rng: &mut ChaCha8Rng) -> Tensor3 {
        Tensor3::from_fn([d, d, d], |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn random_sym_tensor(d: usize, rng: &mut ChaCha8Rng) -> Tensor3 {
        let mut t = Tensor3::zeros_cubic(d);
        for _ in 0..4 {
            let a = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            t.add_rank_one(rng.random_range(-2.0..2.0), &a, &a, &a);
        }
        t
    }

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn outer3_examples() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let t = outer3(&e1, &e1, &e1, 1.0).unwrap();
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(t.data().iter().filter(|&&v| v != 0.0).count(), 1);

        let ones = DVector::from_vec(vec![1.0, 1.0]);
        let t = outer3(&ones, &ones, &ones, 2.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 2.0));

        let a = DVector::from_vec(vec![1.0, 2.0]);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let c = DVector::from_vec(vec![5.0, 6.0]);
        let t = outer3(&a, &b, &c, 1.0).unwrap();
        assert_eq!(t.get(1, 0, 1), 36.0);

        let short = DVector::from_vec(vec![1.0]);
        assert!(outer3(&a, &short, &c, 1.0).is_err());
    }

    #[test]
    fn matricize_examples() {
        // one-based labels 100 i + 10 j + l
        let t = Tensor3::from_fn([2, 2, 2], |i, j, l| {
            100.0 * (i + 1) as f64 + 10.0 * (j + 1) as f64 + (l + 1) as f64
        });
        let m = matricize(&t).unwrap();
        assert_eq!(m.shape(), (2, 4));
        let row: Vec<f64> = m.row(0).iter().copied().collect();
        assert_eq!(row, vec![111.0, 112.0, 121.0, 122.0]);

        let a = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = DVector::from_vec(vec![0.3, 1.0, 2.0]);
        let c = DVector::from_vec(vec![-1.0, 1.0, 4.0]);
        let m = matricize(&outer3(&a, &b, &c, 1.5).unwrap()).unwrap();
        let sv = m.clone().svd(false, false).singular_values;
        assert!(sv[1] < 1e-12 * sv[0]);
        for col in m.column_iter() {
            let s = col.dot(&a) / a.norm_squared();
            assert!((col - &a * s).norm() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tensor(3, &mut rng);
        assert!((matricize(&t).unwrap().norm() - t.frobenius_norm()).abs() < 1e-12);

        assert!(matricize(&Tensor3::zeros(2, 2, 3)).is_err());
    }

    #[test]
    fn khatri_rao_examples() {
        let a = DMatrix::from_vec(2, 1, vec![1.0, 2.0]);
        let b = DMatrix::from_vec(2, 1, vec![3.0, 4.0]);
        let c = khatri_rao(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 4.0, 6.0, 8.0]);

        let i2 = DMatrix::<f64>::identity(2, 2);
        let c = khatri_rao(&i2, &i2).unwrap();
        assert_eq!(c.column(0).as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.column(1).as_slice(), &[0.0, 0.0, 0.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(3, 2, &mut rng);
        let b = random_matrix(3, 2, &mut rng);
        let c = khatri_rao(&a, &b).unwrap();
        for j in 0..2 {
            let expect = a.column(j).norm() * b.column(j).norm();
            assert!((c.column(j).norm() - expect).abs() < 1e-12);
        }

        assert!(khatri_rao(&a, &random_matrix(3, 3, &mut rng)).is_err());
    }

    #[test]
    fn contract_mode1_examples() {
        let a = DVector::from_vec(vec![0.6, 0.8]);
        let t = outer3(&a, &a, &a, 2.5).unwrap();
        let out = contract_mode1(&t, &a, &a).unwrap();
        assert!((out - &a * 2.5).norm() < 1e-14);

        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        let t = outer3(&e1, &e1, &e1, 1.0).unwrap();
        assert_eq!(contract_mode1(&t, &e2, &e2).unwrap().norm(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_tensor(3, &mut rng);
        let u = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let got = contract_mode1(&t, &u, &v).unwrap();
        for i in 0..3 {
            let mut brute = 0.0;
            for j in 0..3 {
                for l in 0..3 {
                    brute += u[j] * v[l] * t.get(i, j, l);
                }
            }
            assert!((got[i] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn multilinear_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_tensor(3, &mut rng);
        let id = DMatrix::<f64>::identity(3, 3);
        let same = multilinear(&t, &id, &id, &id).unwrap();
        assert!((same.axpy(-1.0, &t).unwrap()).frobenius_norm() < 1e-15);

        let a = DVector::from_vec(vec![0.2, -0.4, 0.9]);
        let w = random_matrix(3, 2, &mut rng);
        let got = multilinear_sym(&outer3(&a, &a, &a, 1.7).unwrap(), &w).unwrap();
        let wa = w.transpose() * &a;
        let expect = outer3(&wa, &wa, &wa, 1.7).unwrap();
        assert!(got.axpy(-1.0, &expect).unwrap().frobenius_norm() < 1e-12);

        // six-loop oracle
        let w1 = random_matrix(3, 2, &mut rng);
        let w2 = random_matrix(3, 2, &mut rng);
        let w3 = random_matrix(3, 2, &mut rng);
        let got = multilinear(&t, &w1, &w2, &w3).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for c in 0..2 {
                    let mut s = 0.0;
                    for i in 0..3 {
                        for j in 0..3 {
                            for l in 0..3 {
                                s += t.get(i, j, l) * w1[(i, a)] * w2[(j, b)] * w3[(l, c)];
                            }
                        }
                    }
                    assert!((got.get(a, b, c) - s).abs() < 1e-12);
                }
            }
        }

        assert!(multilinear(&t, &random_matrix(2, 2, &mut rng), &w2, &w3).is_err());
    }

    #[test]
    fn tensorize_examples() {
        let a = DVector::from_vec(vec![0.6, 0.8]);
        let t6 = Tensor6::symmetric_from_columns(&DMatrix::from_column_slice(2, 1, a.as_slice()), &[1.0]).unwrap();
        let aa = kron_vec(&a, &a);
        let expect = outer3(&aa, &aa, &aa, 1.0).unwrap();
        let got = tensorize_6_to_3(&t6).unwrap();
        assert!(got.axpy(-1.0, &expect).unwrap().frobenius_norm() < 1e-14);

        // one-based (1,2,1,1,2,2) -> (2,1,4)
        let mut delta = Tensor6::zeros(2);
        delta.set([0, 1, 0, 0, 1, 1], 1.0);
        let got = tensorize_6_to_3(&delta).unwrap();
        assert_eq!(got.get(1, 0, 3), 1.0);
        assert_eq!(got.data().iter().sum::<f64>(), 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t6 = Tensor6::from_vec([2; 6], data).unwrap();
        let t3 = tensorize_6_to_3(&t6).unwrap();
        assert!((t3.frobenius_norm() - t6.frobenius_norm()).abs() < 1e-12);

        let bad = Tensor6::from_vec([2, 2, 2, 2, 2, 3], vec![0.0; 96]).unwrap();
        assert!(tensorize_6_to_3(&bad).is_err());
    }

    #[test]
    fn symmetric_tensor_is_symmetric_exhaustively() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for d in 1..=8 {
            let t = random_sym_tensor(d, &mut rng);
            assert!(t.symmetry_defect().unwrap() < 1e-12, "d = {d}");
        }
    }

    proptest! {
        #[test]
        fn reshapes_preserve_entries(seed in any::<u64>(), d in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(d, &mut rng);
            let m = matricize(&t).unwrap();
            let mut a: Vec<f64> = t.data().to_vec();
            let mut b: Vec<f64> = m.iter().copied().collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn mode1_contraction_matches_unfolding(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_tensor(d, &mut rng);
            let u = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let direct = contract_mode1(&t, &u, &u).unwrap();
            let via_unfold = matricize(&t).unwrap() * kron_vec(&u, &u);
            prop_assert!((direct - via_unfold).norm() < 1e-12);
        }

        #[test]
        fn multilinear_keeps_symmetry(seed in any::<u64>(), d in 1usize..7, p in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_sym_tensor(d, &mut rng);
            let w = random_matrix(d, p, &mut rng);
            let out = multilinear_sym(&t, &w).unwrap();
            let scale = 1.0 + out.frobenius_norm();
            prop_assert!(out.symmetry_defect().unwrap() < 1e-12 * scale);
        }

        #[test]
        fn orthonormal_round_trip(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let t = outer3(&a, &a, &a, 0.7).unwrap();
            let q = random_matrix(d, d, &mut rng).qr().q();
            let there = multilinear_sym(&t, &q).unwrap();
            let back = multilinear_sym(&there, &q.transpose()).unwrap();
            prop_assert!(back.axpy(-1.0, &t).unwrap().frobenius_norm() < 1e-10);
        }
    }
}
