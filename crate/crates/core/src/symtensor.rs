//! Dense storage for fully symmetric tensors.
//!
//! Every permutation of an index tuple is stored, so contractions are plain
//! strided loops. Canonical (sorted) index tuples are used for solving and
//! serialization.

use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor {
    dim: usize,
    order: usize,
    data: Vec<f64>,
}

impl SymTensor {
    pub fn zeros(dim: usize, order: usize) -> Self {
        Self { dim, order, data: vec![0.0; dim.pow(order as u32)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Row-major storage of all `dim^order` entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn flat(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.order);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    fn unflat(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.dim;
            flat /= self.dim;
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat(idx)]
    }

    /// Writes `value` at every permutation of `idx`.
    pub fn set(&mut self, idx: &[usize], value: f64) {
        for perm in permutations(idx) {
            let f = self.flat(&perm);
            self.data[f] = value;
        }
    }

    /// Builds the symmetric part of an arbitrary tensor given in row-major order.
    pub fn symmetrize_full(dim: usize, order: usize, full: &[f64]) -> Self {
        assert_eq!(full.len(), dim.pow(order as u32));
        let mut out = Self::zeros(dim, order);
        let mut idx = vec![0; order];
        for key in multisets(dim, order) {
            let perms = permutations(&key);
            let sum: f64 = perms
                .iter()
                .map(|p| {
                    idx.copy_from_slice(p);
                    full[out.flat(&idx)]
                })
                .sum();
            out.set(&key, sum / perms.len() as f64);
        }
        out
    }

    pub fn from_canonical(dim: usize, order: usize, entries: &[(Vec<usize>, f64)]) -> Self {
        let mut out = Self::zeros(dim, order);
        for (idx, v) in entries {
            out.set(idx, *v);
        }
        out
    }

    /// Sorted index tuples with their values.
    pub fn canonical_entries(&self) -> Vec<(Vec<usize>, f64)> {
        multisets(self.dim, self.order)
            .into_iter()
            .map(|k| {
                let v = self.get(&k);
                (k, v)
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// Largest deviation between an entry and any of its index permutations.
    pub fn max_asymmetry(&self) -> f64 {
        let mut idx = vec![0; self.order];
        let mut worst = 0.0_f64;
        for flat in 0..self.data.len() {
            self.unflat(flat, &mut idx);
            let v = self.data[flat];
            for p in permutations(&idx) {
                worst = worst.max((self.get(&p) - v).abs());
            }
        }
        worst
    }

    /// `sum_i v_i T[i, ...]`, a symmetric tensor of one lower order.
    pub fn contract_first(&self, v: &[f64]) -> SymTensor {
        assert!(self.order >= 1 && v.len() == self.dim);
        let stride = self.data.len() / self.dim;
        let mut out = SymTensor { dim: self.dim, order: self.order - 1, data: vec![0.0; stride] };
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let block = &self.data[i * stride..(i + 1) * stride];
            out.data.iter_mut().zip(block).for_each(|(o, b)| *o += vi * b);
        }
        out
    }

    /// `T[z, ..., z]`.
    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut t = self.clone();
        for _ in 0..self.order {
            t = t.contract_first(z);
        }
        t.data[0]
    }

    /// `T[., z, ..., z]`: the gradient of `T[z, ..., z]` divided by the order.
    pub fn partial(&self, z: &[f64]) -> Vec<f64> {
        let mut t = self.clone();
        for _ in 1..self.order {
            t = t.contract_first(z);
        }
        t.data
    }

    /// Gradient of `z -> T[z, ..., z]`.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let k = self.order as f64;
        self.partial(z).into_iter().map(|v| k * v).collect()
    }

    /// Symmetrized outer product.
    pub fn sym_outer(a: &SymTensor, b: &SymTensor) -> SymTensor {
        assert_eq!(a.dim, b.dim);
        let mut full = Vec::with_capacity(a.data.len() * b.data.len());
        for x in &a.data {
            for y in &b.data {
                full.push(x * y);
            }
        }
        SymTensor::symmetrize_full(a.dim, a.order + b.order, &full)
    }

    pub fn from_matrix(m: &nalgebra::DMatrix<f64>) -> SymTensor {
        let n = m.nrows();
        let full: Vec<f64> = (0..n * n).map(|f| m[(f / n, f % n)]).collect();
        SymTensor::symmetrize_full(n, 2, &full)
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        assert_eq!(self.order, 2);
        nalgebra::DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Sorted index tuples of length `order` over `0..dim`, in lexicographic order.
pub fn multisets(dim: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, order: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == order {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(dim, order, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, order, 0, &mut Vec::with_capacity(order), &mut out);
    out
}

/// Map from canonical tuple to its position in [`multisets`].
pub fn multiset_ranks(dim: usize, order: usize) -> (Vec<Vec<usize>>, HashMap<Vec<usize>, usize>) {
    let keys = multisets(dim, order);
    let ranks = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    (keys, ranks)
}

/// Distinct permutations of `idx`.
pub fn permutations(idx: &[usize]) -> Vec<Vec<usize>> {
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    let mut out = vec![sorted.clone()];
    // next-permutation enumeration visits each distinct arrangement once
    loop {
        let n = sorted.len();
        if n < 2 {
            break;
        }
        let mut i = n - 1;
        while i > 0 && sorted[i - 1] >= sorted[i] {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let mut j = n - 1;
        while sorted[j] <= sorted[i - 1] {
            j -= 1;
        }
        sorted.swap(i - 1, j);
        sorted[i..].reverse();
        out.push(sorted.clone());
    }
    out
}
