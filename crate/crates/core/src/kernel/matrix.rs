use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cli::format::Reader;
use crate::error::{Error, Result};
use crate::numerics::{check_symmetric, sym_eigvals, Spectrum, SYMMETRY_TOL};

pub const KERNEL_MAGIC: &[u8; 4] = b"GPKM";

/// Eigenvalues down to `−PSD_TOL_REL·λ₁` are accepted as roundoff.
pub const PSD_TOL_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Empirical,
    Analytic,
    ConstantClosedForm,
}

/// Symmetric `B × B` kernel on a batch identified by its fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: Array2<f64>,
    fingerprint: [u8; 32],
    /// `None` for kernels read back from disk, whose origin is not recorded.
    kind: Option<KernelKind>,
}

impl KernelMatrix {
    /// Checks symmetry to 1e-10 and stores the exactly symmetrized matrix.
    pub fn new(values: Array2<f64>, fingerprint: [u8; 32], kind: Option<KernelKind>) -> Result<Self> {
        check_symmetric(&values, SYMMETRY_TOL)?;
        let mut values = values;
        let n = values.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (values[[i, j]] + values[[j, i]]);
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        Ok(Self { values, fingerprint, kind })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn kind(&self) -> Option<KernelKind> {
        self.kind
    }

    pub fn trace(&self) -> f64 {
        self.values.diag().sum()
    }

    pub fn scaled(&self, c: f64) -> KernelMatrix {
        Self { values: &self.values * c, fingerprint: self.fingerprint, kind: self.kind }
    }

    pub fn with_kind(mut self, kind: Option<KernelKind>) -> Self {
        self.kind = kind;
        self
    }

    /// Eigenvalues, after checking `λ_min ≥ −1e-8·λ₁`.
    pub fn checked_spectrum(&self) -> Result<Spectrum> {
        let spectrum = sym_eigvals(&self.values)?;
        let tol = PSD_TOL_REL * spectrum.largest().abs();
        if spectrum.smallest() < -tol {
            return Err(Error::KernelValidity { min: spectrum.smallest(), tol });
        }
        Ok(spectrum)
    }

    /// `‖self − reference‖_F / ‖reference‖_F`.
    pub fn rel_frobenius_error(&self, reference: &KernelMatrix) -> Result<f64> {
        if self.values.dim() != reference.values.dim() {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.values.dim(), reference.values.dim())));
        }
        let diff = (&self.values - &reference.values).mapv(|v| v * v).sum().sqrt();
        Ok(diff / reference.values.mapv(|v| v * v).sum().sqrt())
    }

    /// `GPKM`, `B` as u32, the upper triangle row by row as f64, then the fingerprint.
    pub fn encode(&self) -> Vec<u8> {
        let b = self.len();
        let mut out = Vec::with_capacity(8 + 8 * b * (b + 1) / 2 + 32);
        out.extend_from_slice(KERNEL_MAGIC);
        out.extend_from_slice(&(b as u32).to_le_bytes());
        for i in 0..b {
            for j in i..b {
                out.extend_from_slice(&self.values[[i, j]].to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fingerprint);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(KERNEL_MAGIC)?;
        let b = r.u32()? as usize;
        let mut values = Array2::zeros((b, b));
        for i in 0..b {
            for j in i..b {
                let v = r.f64()?;
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        r.finish()?;
        Ok(Self { values, fingerprint, kind: None })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}
