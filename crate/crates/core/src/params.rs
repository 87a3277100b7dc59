//! Parameter blocks and their flat packing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block sizes of a model's parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    /// Hurdle (logit) coefficients.
    pub k0: usize,
    /// Location coefficients.
    pub k1: usize,
    /// Dispersion coefficients.
    pub k2: usize,
    /// Mixing coefficients per inflated value.
    pub k3: usize,
    /// Number of inflated values, `M - 1`.
    pub spikes: usize,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.k0 + self.positive_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Length of the positive-component block `(beta1, beta2, gamma)`.
    pub fn positive_len(&self) -> usize {
        self.k1 + self.k2 + self.spikes * self.k3
    }

    pub fn location_offset(&self) -> usize {
        self.k0
    }

    pub fn dispersion_offset(&self) -> usize {
        self.k0 + self.k1
    }

    /// Offset of `gamma[j]` in the flat vector.
    pub fn gamma_offset(&self, j: usize) -> usize {
        self.k0 + self.k1 + self.k2 + j * self.k3
    }

    /// Offset of the positive block in the flat vector.
    pub fn positive_offset(&self) -> usize {
        self.k0
    }
}

/// Coefficients of the hurdle MITNB model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub beta_logit: Vec<f64>,
    pub beta_location: Vec<f64>,
    pub beta_dispersion: Vec<f64>,
    /// One row per inflated value, each of length `k3`.
    pub gamma: Vec<Vec<f64>>,
}

impl ParameterVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            beta_logit: vec![0.0; layout.k0],
            beta_location: vec![0.0; layout.k1],
            beta_dispersion: vec![0.0; layout.k2],
            gamma: vec![vec![0.0; layout.k3]; layout.spikes],
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        let k3 = self.gamma.first().map_or(0, Vec::len);
        if self.gamma.iter().any(|g| g.len() != k3) {
            return Err(Error::DimensionMismatch("gamma rows differ in length".into()));
        }
        Ok(Layout {
            k0: self.beta_logit.len(),
            k1: self.beta_location.len(),
            k2: self.beta_dispersion.len(),
            k3,
            spikes: self.gamma.len(),
        })
    }

    /// Checks the block sizes against `layout`. Gamma rows are free to take
    /// any length when there are no spikes.
    pub fn check_layout(&self, layout: Layout) -> Result<()> {
        let ok = self.beta_logit.len() == layout.k0
            && self.beta_location.len() == layout.k1
            && self.beta_dispersion.len() == layout.k2
            && self.gamma.len() == layout.spikes
            && self.gamma.iter().all(|g| g.len() == layout.k3);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "parameter blocks ({}, {}, {}, {}x{}) do not match layout {:?}",
                self.beta_logit.len(),
                self.beta_location.len(),
                self.beta_dispersion.len(),
                self.gamma.len(),
                self.gamma.first().map_or(0, Vec::len),
                layout
            )))
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.beta_logit);
        out.extend_from_slice(&self.pack_positive());
        out
    }

    pub fn pack_positive(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.beta_location);
        out.extend_from_slice(&self.beta_dispersion);
        for g in &self.gamma {
            out.extend_from_slice(g);
        }
        out
    }

    pub fn unpack(layout: Layout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector has {} entries, layout needs {}",
                flat.len(),
                layout.len()
            )));
        }
        let (logit, rest) = flat.split_at(layout.k0);
        let mut p = Self::unpack_positive(layout, rest)?;
        p.beta_logit = logit.to_vec();
        Ok(p)
    }

    /// Unpacks a positive-component block; `beta_logit` is left empty.
    pub fn unpack_positive(layout: Layout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.positive_len() {
            return Err(Error::DimensionMismatch(format!(
                "positive block has {} entries, layout needs {}",
                flat.len(),
                layout.positive_len()
            )));
        }
        let (b1, rest) = flat.split_at(layout.k1);
        let (b2, rest) = rest.split_at(layout.k2);
        let gamma = if layout.k3 == 0 {
            vec![Vec::new(); layout.spikes]
        } else {
            rest.chunks(layout.k3).map(<[f64]>::to_vec).collect()
        };
        Ok(Self {
            beta_logit: Vec::new(),
            beta_location: b1.to_vec(),
            beta_dispersion: b2.to_vec(),
            gamma,
        })
    }
}
