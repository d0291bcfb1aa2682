use std::fmt::Write as _;

use super::Real;
use crate::error::{Error, Result};

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("tensor", &shape, &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); len] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    /// Builds a matrix from `f64` rows. Panics on ragged input; meant for
    /// literals in tests and fixtures.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().map(|&v| T::from_f64(v))).collect();
        Self { shape: vec![rows.len(), cols], data }
    }

    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(shape.to_vec(), values.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count, treating a 1-D tensor as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    /// Column count, treating a 1-D tensor as a single row.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, idx: &[usize]) -> T {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        for (i, &d) in idx.iter().zip(&self.shape) {
            off = off * d + i;
        }
        self.data[off]
    }

    /// The single element of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!("item() on tensor of shape {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix product of two 2-D tensors.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::shape("matmul", &self.shape, &other.shape));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = Tensor::zeros(&[m, n]);
        T::gemm(m, k, n, T::one(), &self.data, k, 1, &other.data, n, 1, T::zero(), &mut out.data, n, 1);
        Ok(out)
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        if self.shape.len() != 2 {
            return Err(Error::Contract(format!("transpose of non-matrix {:?}", self.shape)));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                data.push(self.data[i * c + j]);
            }
        }
        Ok(Tensor { shape: vec![c, r], data })
    }

    /// Snapshot text: a `shape: d1 d2 ...` header line followed by the
    /// values on one whitespace-separated line. Values use the shortest
    /// representation that parses back to the same bits.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::from("shape:");
        for d in &self.shape {
            let _ = write!(s, " {d}");
        }
        s.push('\n');
        for (i, v) in self.data.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
        s
    }

    /// Parses the format written by [`Tensor::to_snapshot`]. Values may span
    /// any number of lines after the header.
    pub fn from_snapshot(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .find(|(_, l)| !l.trim().is_empty())
            .ok_or(Error::Parse { line: 1, msg: "missing shape header".into() })?;
        let shape = parse_shape_header(header, 1)?;
        let mut data = Vec::new();
        for (i, line) in lines {
            for tok in line.split_whitespace() {
                data.push(parse_value(tok, i + 1)?);
            }
        }
        Tensor::new(shape, data).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })
    }
}

pub(crate) fn parse_shape_header(line: &str, lineno: usize) -> Result<Vec<usize>> {
    let rest = line
        .trim()
        .strip_prefix("shape:")
        .ok_or(Error::Parse { line: lineno, msg: format!("expected `shape:` header, got {line:?}") })?;
    rest.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::Parse { line: lineno, msg: format!("bad dimension {t:?}") }))
        .collect()
}

pub(crate) fn parse_value<T: Real>(tok: &str, lineno: usize) -> Result<T> {
    tok.parse::<T>().map_err(|_| Error::Parse { line: lineno, msg: format!("bad number {tok:?}") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![0, 4], vec![]).is_ok());
    }

    #[test]
    fn matmul_identity_and_dot() {
        let id = Tensor::<f64>::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let m = Tensor::<f64>::from_rows(&[&[1.5, -2.0], &[3.0, 4.0]]);
        assert_eq!(id.matmul(&m).unwrap(), m);
        let a = Tensor::<f64>::from_rows(&[&[1.0, 2.0]]);
        let b = Tensor::<f64>::from_rows(&[&[3.0], &[4.0]]);
        assert_eq!(a.matmul(&b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn snapshot_header() {
        let t = Tensor::<f64>::from_rows(&[&[1.0, 2.5], &[-3.0, 0.125]]);
        let s = t.to_snapshot();
        assert!(s.starts_with("shape: 2 2\n"));
        assert!(Tensor::<f64>::from_snapshot("shape 2\n1 2").is_err());
        assert!(Tensor::<f64>::from_snapshot("shape: 3\n1 2").is_err());
    }

    proptest! {
        #[test]
        fn snapshot_round_trips_bits(values in prop::collection::vec(-1e6f64..1e6, 1..40)) {
            let n = values.len();
            let t = Tensor::<f64>::new(vec![n], values).unwrap();
            let back = Tensor::<f64>::from_snapshot(&t.to_snapshot()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn snapshot_round_trips_f32(values in prop::collection::vec(-1e3f32..1e3, 1..40)) {
            let n = values.len();
            let t = Tensor::<f32>::new(vec![1, n], values).unwrap();
            let back = Tensor::<f32>::from_snapshot(&t.to_snapshot()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
