//! Observed-row operators `M_perp = A[observed, :]` and their adjoints.

use crate::error::{check_len, Error, Result};
use crate::fourier_map::{FourierMap, GridShape, RealSpectrum};

/// Sorted set of missing linear indices on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSet {
    missing: Vec<usize>,
    shape: GridShape,
}

impl MaskSet {
    /// Validates that indices are in range, strictly increasing, and leave at
    /// least one observed sample.
    pub fn new(missing: Vec<usize>, shape: GridShape) -> Result<Self> {
        let n = shape.len();
        if let Some(w) = missing.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMask(format!(
                "indices must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(&last) = missing.last() {
            if last >= n {
                return Err(Error::InvalidMask(format!(
                    "index {last} out of range for {n} samples"
                )));
            }
        }
        if missing.len() >= n {
            return Err(Error::InvalidMask("every sample is missing".into()));
        }
        Ok(Self { missing, shape })
    }

    pub fn empty(shape: GridShape) -> Self {
        Self {
            missing: Vec::new(),
            shape,
        }
    }

    /// Builds a mask from a per-sample flag (`true` = missing).
    pub fn from_flags(flags: &[bool], shape: GridShape) -> Result<Self> {
        check_len("mask flags", shape.len(), flags.len())?;
        let missing = flags
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        Self::new(missing, shape)
    }

    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn n(&self) -> usize {
        self.shape.len()
    }

    pub fn num_observed(&self) -> usize {
        self.n() - self.missing.len()
    }

    pub fn flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n()];
        for &i in &self.missing {
            flags[i] = true;
        }
        flags
    }

    /// Observed indices in ascending order.
    pub fn observed(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_observed());
        let mut miss = self.missing.iter().peekable();
        for i in 0..self.n() {
            if miss.peek() == Some(&&i) {
                miss.next();
            } else {
                out.push(i);
            }
        }
        out
    }
}

/// Samples at the observed positions, in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSignal {
    pub values: Vec<f64>,
    pub mask: MaskSet,
}

impl ObservedSignal {
    pub fn new(values: Vec<f64>, mask: MaskSet) -> Result<Self> {
        check_len("observed signal", mask.num_observed(), values.len())?;
        Ok(Self { values, mask })
    }

    /// Drops the missing entries of a full-grid signal.
    pub fn from_full(full: &[f64], mask: MaskSet) -> Result<Self> {
        check_len("full signal", mask.n(), full.len())?;
        let values = mask.observed().iter().map(|&i| full[i]).collect();
        Ok(Self { values, mask })
    }

    /// Zero-filled full-grid signal `b_hat`.
    pub fn zero_filled(&self) -> Vec<f64> {
        let mut full = vec![0.0; self.mask.n()];
        for (&i, &v) in self.mask.observed().iter().zip(&self.values) {
            full[i] = v;
        }
        full
    }
}

/// `M_perp` bound to a grid and a mask.
#[derive(Debug, Clone)]
pub struct MaskedOperator {
    map: FourierMap,
    mask: MaskSet,
    observed: Vec<usize>,
}

impl MaskedOperator {
    pub fn new(mask: MaskSet) -> Self {
        let map = FourierMap::new(mask.shape().clone());
        let observed = mask.observed();
        Self {
            map,
            mask,
            observed,
        }
    }

    pub fn map(&self) -> &FourierMap {
        &self.map
    }

    pub fn mask(&self) -> &MaskSet {
        &self.mask
    }

    pub fn n(&self) -> usize {
        self.mask.n()
    }

    pub fn num_observed(&self) -> usize {
        self.observed.len()
    }

    /// `out = M_perp beta` (length `n - |M|`).
    pub fn apply(&self, beta: &[f64], out: &mut [f64]) {
        assert_eq!(out.len(), self.observed.len());
        let mut x = vec![0.0; self.n()];
        self.map.apply(beta, &mut x);
        for (o, &i) in out.iter_mut().zip(&self.observed) {
            *o = x[i];
        }
    }

    /// `out = M_perp^T b`: zero-fill the missing positions, then apply `A^T`.
    pub fn apply_transpose(&self, b: &[f64], out: &mut [f64]) {
        assert_eq!(b.len(), self.observed.len());
        out.fill(0.0);
        for (&v, &i) in b.iter().zip(&self.observed) {
            out[i] = v;
        }
        self.map.apply_transpose_in_place(out);
    }

    /// `out = M_perp^T M_perp beta`, computed on the full grid with the
    /// missing samples zeroed in place.
    pub fn apply_normal(&self, beta: &[f64], out: &mut [f64]) {
        self.map.apply(beta, out);
        for &i in self.mask.missing() {
            out[i] = 0.0;
        }
        self.map.apply_transpose_in_place(out);
    }

    pub fn apply_mperp(&self, beta: &RealSpectrum) -> Result<ObservedSignal> {
        self.check(&beta.shape)?;
        let mut values = vec![0.0; self.num_observed()];
        self.apply(&beta.values, &mut values);
        Ok(ObservedSignal {
            values,
            mask: self.mask.clone(),
        })
    }

    pub fn apply_mperp_transpose(&self, b: &ObservedSignal) -> Result<RealSpectrum> {
        if b.mask != self.mask {
            return Err(Error::InvalidMask(
                "observed signal carries a different mask".into(),
            ));
        }
        let mut values = vec![0.0; self.n()];
        self.apply_transpose(&b.values, &mut values);
        Ok(RealSpectrum {
            values,
            shape: self.mask.shape().clone(),
        })
    }

    pub fn apply_normal_typed(&self, beta: &RealSpectrum) -> Result<RealSpectrum> {
        self.check(&beta.shape)?;
        let mut values = vec![0.0; self.n()];
        self.apply_normal(&beta.values, &mut values);
        Ok(RealSpectrum {
            values,
            shape: beta.shape.clone(),
        })
    }

    fn check(&self, shape: &GridShape) -> Result<()> {
        if shape != self.mask.shape() {
            return Err(Error::ShapeMismatch {
                what: "spectrum grid",
                expected: self.n(),
                actual: shape.len(),
            });
        }
        Ok(())
    }
}
