//! Polynomial state feedback `u = k1.z + K2[z,z] + K3[z,z,z]` on the grid
//! state, and its JSON file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symtensor::SymTensor;

pub const FORMAT_TAG: &str = "rodctl-feedback";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    /// Highest active degree; 0 is open loop.
    pub degree: usize,
    pub k1: Vec<f64>,
    pub k2: Option<SymTensor>,
    pub k3: Option<SymTensor>,
}

impl FeedbackLaw {
    pub fn open_loop(dim: usize) -> Self {
        Self { degree: 0, k1: vec![0.0; dim], k2: None, k3: None }
    }

    pub fn linear(k1: Vec<f64>) -> Self {
        Self { degree: 1, k1, k2: None, k3: None }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Drops terms above `degree`.
    pub fn truncated(&self, degree: usize) -> Self {
        let mut out = self.clone();
        if degree == 0 {
            return Self::open_loop(self.dim());
        }
        if degree < 3 {
            out.k3 = None;
        }
        if degree < 2 {
            out.k2 = None;
        }
        out.degree = degree.min(self.degree);
        out
    }

    pub fn control(&self, z: &[f64]) -> f64 {
        if self.degree == 0 {
            return 0.0;
        }
        let n = self.k1.len();
        let k2 = self.k2.as_ref().map(|t| t.as_slice());
        let k3 = self.k3.as_ref().map(|t| t.as_slice());
        let mut u = 0.0;
        for i in 0..n {
            let mut row = self.k1[i];
            if k2.is_some() || k3.is_some() {
                let mut inner = 0.0;
                for j in 0..n {
                    let mut c = k2.map_or(0.0, |k| k[i * n + j]);
                    if let Some(k) = k3 {
                        let base = (i * n + j) * n;
                        c += k[base..base + n].iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
                    }
                    inner += c * z[j];
                }
                row += inner;
            }
            u += row * z[i];
        }
        u
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.degree > 3 {
            return Err(Error::InvalidInput(format!("feedback degree {} exceeds 3", self.degree)));
        }
        for (name, t, order) in [("k2", &self.k2, 2), ("k3", &self.k3, 3)] {
            if let Some(t) = t {
                if t.dim() != n || t.order() != order {
                    return Err(Error::InvalidInput(format!("{name} does not match dimension {n}")));
                }
            }
        }
        if (self.degree >= 2 && self.k2.is_none()) || (self.degree >= 3 && self.k3.is_none()) {
            return Err(Error::InvalidInput(format!("degree-{} law is missing gain tensors", self.degree)));
        }
        if !self.k1.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite gain".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LawFile {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            degree: self.degree,
            dim: self.dim(),
            k1: self.k1.clone(),
            k2: self.k2.as_ref().map(TensorEntries::from_tensor),
            k3: self.k3.as_ref().map(TensorEntries::from_tensor),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LawFile = serde_json::from_str(text)?;
        if file.format != FORMAT_TAG || file.version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "not a feedback law file (format `{}`, version {})",
                file.format, file.version
            )));
        }
        if file.k1.len() != file.dim {
            return Err(Error::InvalidInput(format!("k1 has {} entries, dim is {}", file.k1.len(), file.dim)));
        }
        let k2 = file.k2.map(|e| e.to_tensor(file.dim, 2)).transpose()?;
        let k3 = file.k3.map(|e| e.to_tensor(file.dim, 3)).transpose()?;
        let law = Self { degree: file.degree, k1: file.k1, k2, k3 };
        law.validate()?;
        Ok(law)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawFile {
    format: String,
    version: u32,
    degree: usize,
    dim: usize,
    k1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k2: Option<TensorEntries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k3: Option<TensorEntries>,
}

/// Canonical (sorted) index tuples and their values.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntries {
    indices: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl TensorEntries {
    fn from_tensor(t: &SymTensor) -> Self {
        let (indices, values) = t.canonical_entries().into_iter().unzip();
        Self { indices, values }
    }

    fn to_tensor(&self, dim: usize, order: usize) -> Result<SymTensor> {
        if self.indices.len() != self.values.len() {
            return Err(Error::InvalidInput("index and value lists differ in length".into()));
        }
        let mut entries = Vec::with_capacity(self.values.len());
        for (idx, v) in self.indices.iter().zip(&self.values) {
            if idx.len() != order || idx.iter().any(|i| *i >= dim) {
                return Err(Error::InvalidInput(format!("bad tensor index {idx:?}")));
            }
            entries.push((idx.clone(), *v));
        }
        Ok(SymTensor::from_canonical(dim, order, &entries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeedbackLaw {
        let mut k2 = SymTensor::zeros(3, 2);
        k2.set(&[0, 2], -0.1 / 3.0);
        let mut k3 = SymTensor::zeros(3, 3);
        k3.set(&[1, 1, 2], 1e-17 + 0.7);
        FeedbackLaw { degree: 3, k1: vec![0.1, -2.0 / 7.0, 1.0 / 3.0], k2: Some(k2), k3: Some(k3) }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let law = sample();
        let back = FeedbackLaw::from_json(&law.to_json().unwrap()).unwrap();
        assert_eq!(back, law);
    }

    #[test]
    fn control_matches_tensor_evaluation() {
        let law = sample();
        let z = [0.3, -1.2, 0.8];
        let expected = law.k1.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()
            + law.k2.as_ref().unwrap().eval(&z)
            + law.k3.as_ref().unwrap().eval(&z);
        assert!((law.control(&z) - expected).abs() < 1e-15);
        assert_eq!(FeedbackLaw::open_loop(3).control(&z), 0.0);
        let lin = law.truncated(1);
        assert!((lin.control(&z) - law.k1.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>()).abs() < 1e-16);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(FeedbackLaw::from_json("{}").is_err());
        let text = sample().to_json().unwrap().replace("\"dim\": 3", "\"dim\": 4");
        assert!(FeedbackLaw::from_json(&text).is_err());
        let text = sample().to_json().unwrap().replace(FORMAT_TAG, "other");
        assert!(FeedbackLaw::from_json(&text).is_err());
    }
}
